//! Class-assignment rules deciding which instance is labelled ch1.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orientation::axial_distance_degrees;

use super::compose::{InstanceMeta, SyntheticSample};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentRule {
    /// The longer medial axis is ch1; ties fall back to area, then order.
    #[default]
    LengthWise,
    /// The body whose mean orientation is closer to vertical is ch1.
    OrientationWise,
    /// The body with the larger centroid x is ch1.
    PositionWise,
    /// A fair coin from the seed.
    Random,
}

impl AssignmentRule {
    pub const ALL: [AssignmentRule; 4] = [
        AssignmentRule::LengthWise,
        AssignmentRule::OrientationWise,
        AssignmentRule::PositionWise,
        AssignmentRule::Random,
    ];

    pub fn is_deterministic(self) -> bool {
        self != AssignmentRule::Random
    }
}

impl std::str::FromStr for AssignmentRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "length_wise" => Ok(Self::LengthWise),
            "orientation_wise" => Ok(Self::OrientationWise),
            "position_wise" => Ok(Self::PositionWise),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown assignment rule {other:?}"))),
        }
    }
}

fn verticality(m: &InstanceMeta) -> f64 {
    // Undefined orientation sorts as least vertical.
    m.mean_orientation
        .map(|a| -axial_distance_degrees(a, 90.0))
        .unwrap_or(f64::NEG_INFINITY)
}

/// Index (0 or 1) of the instance the rule labels ch1. Ties keep instance order.
pub fn choose_first(meta: &[InstanceMeta], rule: AssignmentRule, seed: u64) -> Result<usize> {
    if meta.len() != 2 {
        return Err(Error::Arity(meta.len()));
    }
    let (a, b) = (&meta[0], &meta[1]);
    let order = match rule {
        AssignmentRule::LengthWise => a
            .medial_length
            .total_cmp(&b.medial_length)
            .then(a.area.cmp(&b.area)),
        AssignmentRule::OrientationWise => verticality(a).total_cmp(&verticality(b)),
        AssignmentRule::PositionWise => a.centroid.0.total_cmp(&b.centroid.0),
        AssignmentRule::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0xA55);
            return Ok(usize::from(rng.random_bool(0.5)));
        }
    };
    Ok(if order == Ordering::Less { 1 } else { 0 })
}

/// Reorders the instances so the rule's choice comes first and relabels
/// `semantic4` to match.
pub fn assign_classes(
    mut sample: SyntheticSample,
    rule: AssignmentRule,
    seed: u64,
) -> Result<SyntheticSample> {
    if sample.instances.len() != 2 {
        return Err(Error::Arity(sample.instances.len()));
    }
    if choose_first(&sample.meta, rule, seed)? == 1 {
        sample.instances.swap(0, 1);
        sample.meta.swap(0, 1);
        sample.provenance.source_ids.swap(0, 1);
        sample.provenance.poses.swap(0, 1);
        if let Some(s4) = sample.semantic4.as_mut() {
            for v in s4.as_mut_slice() {
                *v = match *v {
                    1 => 2,
                    2 => 1,
                    other => other,
                };
            }
        }
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(len: f64, area: usize, x: f64, theta: Option<f64>) -> InstanceMeta {
        InstanceMeta {
            source_id: format!("s{len}"),
            medial_length: len,
            area,
            centroid: (x, 0.0),
            mean_orientation: theta,
        }
    }

    #[test]
    fn longer_band_is_ch1() {
        let m = [meta(40.0, 100, 0.0, None), meta(80.0, 100, 0.0, None)];
        assert_eq!(choose_first(&m, AssignmentRule::LengthWise, 0).unwrap(), 1);
    }

    #[test]
    fn length_tie_uses_area_then_order() {
        let m = [meta(50.0, 90, 0.0, None), meta(50.0, 100, 0.0, None)];
        assert_eq!(choose_first(&m, AssignmentRule::LengthWise, 0).unwrap(), 1);
        let m = [meta(50.0, 100, 0.0, None), meta(50.0, 100, 0.0, None)];
        assert_eq!(choose_first(&m, AssignmentRule::LengthWise, 0).unwrap(), 0);
    }

    #[test]
    fn more_vertical_is_ch1() {
        let m = [meta(1.0, 1, 0.0, Some(10.0)), meta(1.0, 1, 0.0, Some(85.0))];
        assert_eq!(choose_first(&m, AssignmentRule::OrientationWise, 0).unwrap(), 1);
        let m = [meta(1.0, 1, 0.0, Some(95.0)), meta(1.0, 1, 0.0, Some(170.0))];
        assert_eq!(choose_first(&m, AssignmentRule::OrientationWise, 0).unwrap(), 0);
    }

    #[test]
    fn rightmost_is_ch1() {
        let m = [meta(1.0, 1, 12.0, None), meta(1.0, 1, 30.5, None)];
        assert_eq!(choose_first(&m, AssignmentRule::PositionWise, 0).unwrap(), 1);
    }

    #[test]
    fn arity_is_checked() {
        let m = [meta(1.0, 1, 0.0, None)];
        assert!(matches!(
            choose_first(&m, AssignmentRule::LengthWise, 0),
            Err(Error::Arity(1))
        ));
    }

    #[test]
    fn rule_names_parse() {
        for rule in AssignmentRule::ALL {
            let name = serde_json::to_value(rule).unwrap();
            assert_eq!(name.as_str().unwrap().parse::<AssignmentRule>().unwrap(), rule);
        }
    }
}
