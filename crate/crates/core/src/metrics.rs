//! Evaluation: per-class IOU with class-swap scoring, best-match instance IOU
//! and per-layer quality.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, LabelMap};
use crate::instseg::PredictionLayers;
use crate::orientation::field_error;

/// Class names of the 4-class map, indexed by code.
pub const SEMANTIC4_CLASSES: [&str; 4] = ["background", "ch1", "ch2", "overlap"];

/// Intersection and union pixel counts.
pub fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize)> {
    a.ensure_same_dims(b, "iou")?;
    let mut inter = 0;
    let mut union = 0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    Ok((inter, union))
}

/// Jaccard index; `1` when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, union) = overlap_counts(a, b)?;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticReport {
    pub per_class_iou: BTreeMap<String, f64>,
    pub average_iou: f64,
    /// IOU of the ch1 ∪ ch2 regions.
    pub merged_ch_iou: f64,
    /// Whether ch1 and ch2 of the prediction were exchanged.
    pub swapped: bool,
    pub no_swap_average_iou: f64,
}

fn swap_channels(map: &LabelMap) -> LabelMap {
    map.map(|&c| match c {
        1 => 2,
        2 => 1,
        other => other,
    })
}

fn class_ious(pred: &LabelMap, truth: &LabelMap) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (code, v) in out.iter_mut().enumerate() {
        *v = iou(&pred.mask_eq(code as u8), &truth.mask_eq(code as u8))?;
    }
    Ok(out)
}

/// Scores a 4-class prediction as is and with ch1/ch2 exchanged, keeping
/// whichever has the higher average IOU. Ties keep the unswapped prediction.
pub fn semantic_report(pred: &LabelMap, truth: &LabelMap) -> Result<SemanticReport> {
    pred.ensure_same_dims(truth, "semantic report")?;
    for (what, map) in [("prediction", pred), ("truth", truth)] {
        if let Some(&c) = map.iter().find(|&&c| c > 3) {
            return Err(Error::InvalidParameter(format!(
                "{what} has class code {c} outside the 4-class alphabet"
            )));
        }
    }
    let plain = class_ious(pred, truth)?;
    let swapped = class_ious(&swap_channels(pred), truth)?;
    let mean = |v: &[f64; 4]| v.iter().sum::<f64>() / 4.0;
    let (no_swap, with_swap) = (mean(&plain), mean(&swapped));
    let use_swap = with_swap > no_swap;
    let chosen = if use_swap { swapped } else { plain };
    let chromosome = |m: &LabelMap| m.map(|&c| c == 1 || c == 2);
    Ok(SemanticReport {
        per_class_iou: SEMANTIC4_CLASSES
            .iter()
            .zip(chosen)
            .map(|(name, v)| (name.to_string(), v))
            .collect(),
        average_iou: mean(&chosen),
        merged_ch_iou: iou(&chromosome(pred), &chromosome(truth))?,
        swapped: use_swap,
        no_swap_average_iou: no_swap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub per_truth_iou: Vec<f64>,
    pub mean_best_match_iou: f64,
    /// Predictions that are no truth's best match.
    pub unmatched_predictions: usize,
}

/// Best-match IOU per truth mask. A prediction counts as matched when it
/// attains some truth's maximum with a positive IOU; ties all count, so the
/// report does not depend on list order.
pub fn instance_report(pred: &[BinaryMask], truth: &[BinaryMask]) -> Result<InstanceReport> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("no ground-truth instances"));
    }
    let mut matched = vec![false; pred.len()];
    let mut per_truth = Vec::with_capacity(truth.len());
    for t in truth {
        let scores = pred.iter().map(|p| iou(p, t)).collect::<Result<Vec<_>>>()?;
        let best = scores.iter().copied().fold(0.0, f64::max);
        if best > 0.0 {
            for (m, &s) in matched.iter_mut().zip(&scores) {
                *m |= s == best;
            }
        }
        per_truth.push(best);
    }
    Ok(InstanceReport {
        mean_best_match_iou: per_truth.iter().sum::<f64>() / per_truth.len() as f64,
        per_truth_iou: per_truth,
        unmatched_predictions: matched.iter().filter(|&&m| !m).count(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub background_iou: f64,
    pub chromosome_iou: f64,
    pub overlap_iou: f64,
    pub dilated_overlap_iou: f64,
    /// Mean axial error over pixels valid in both fields; `None` if there are none.
    pub orientation_error: Option<f64>,
}

pub fn layer_report(pred: &PredictionLayers, truth: &PredictionLayers) -> Result<LayerReport> {
    let region = pred.orientation.valid.or(&truth.orientation.valid);
    let orientation_error = match field_error(&pred.orientation, &truth.orientation, &region) {
        Ok(e) => Some(e),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(LayerReport {
        background_iou: iou(&pred.background, &truth.background)?,
        chromosome_iou: iou(&pred.chromosome, &truth.chromosome)?,
        overlap_iou: iou(&pred.overlap, &truth.overlap)?,
        dilated_overlap_iou: iou(&pred.dilated_overlap, &truth.dilated_overlap)?,
        orientation_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, bits: &[u8]) -> BinaryMask {
        Grid::from_vec(w, h, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = mask(2, 1, &[1, 1]);
        let b = mask(2, 1, &[1, 0]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.5);
        assert_eq!(iou(&b, &mask(2, 1, &[0, 1])).unwrap(), 0.0);
        assert_eq!(iou(&mask(2, 1, &[0, 0]), &mask(2, 1, &[0, 0])).unwrap(), 1.0);
        assert!(iou(&a, &mask(1, 2, &[1, 1])).is_err());
    }

    fn map8(f: impl Fn(usize, usize) -> u8) -> LabelMap {
        Grid::from_fn(8, 8, f)
    }

    fn truth8() -> LabelMap {
        map8(|x, y| match (x, y) {
            (3..=4, 3..=4) => 3,
            (0..=3, 0..=2) | (0..=1, 3..=4) => 1,
            (5..=7, 4..=7) | (4, 5..=7) => 2,
            _ => 0,
        })
    }

    #[test]
    fn identical_and_swapped_maps() {
        let t = truth8();
        let r = semantic_report(&t, &t).unwrap();
        assert!(!r.swapped);
        assert!(r.per_class_iou.values().all(|&v| v == 1.0));
        let r = semantic_report(&swap_channels(&t), &t).unwrap();
        assert!(r.swapped);
        assert_eq!(r.average_iou, 1.0);
        assert!(r.no_swap_average_iou < 1.0);
    }

    #[test]
    fn half_covered_ch1() {
        let t = truth8();
        // Drop the ch1 pixels in the top half; they become background.
        let p = t.zip_map(&map8(|_, y| u8::from(y < 2)), |&c, &top| if c == 1 && top == 1 { 0 } else { c });
        let r = semantic_report(&p, &t).unwrap();
        let ch1_truth = t.iter().filter(|&&c| c == 1).count();
        let ch1_pred = p.iter().filter(|&&c| c == 1).count();
        assert_eq!(r.per_class_iou["ch1"], ch1_pred as f64 / ch1_truth as f64);
        assert_eq!(ch1_pred * 2, ch1_truth);
        let merged_truth = t.iter().filter(|&&c| c == 1 || c == 2).count();
        let merged_pred = p.iter().filter(|&&c| c == 1 || c == 2).count();
        assert_eq!(r.merged_ch_iou, merged_pred as f64 / merged_truth as f64);
        assert_eq!(r.per_class_iou["ch2"], 1.0);
        assert_eq!(r.per_class_iou["overlap"], 1.0);
    }

    #[test]
    fn instance_examples() {
        let t1 = mask(4, 1, &[1, 1, 0, 0]);
        let t2 = mask(4, 1, &[0, 1, 1, 0]);
        let r = instance_report(&[t1.clone()], &[t1.clone(), t2.clone()]).unwrap();
        assert_eq!(r.per_truth_iou, vec![1.0, iou(&t2, &t1).unwrap()]);

        let spurious = mask(4, 1, &[0, 0, 0, 1]);
        let two = instance_report(&[t1.clone(), t2.clone()], &[t1.clone(), t2.clone()]).unwrap();
        let three = instance_report(&[t1.clone(), spurious, t2.clone()], &[t1.clone(), t2]).unwrap();
        assert_eq!(two.mean_best_match_iou, three.mean_best_match_iou);
        assert_eq!(three.unmatched_predictions, 1);

        assert!(instance_report(&[t1.clone()], &[]).is_err());
        assert_eq!(instance_report(&[], &[t1]).unwrap().per_truth_iou, vec![0.0]);
    }

    #[test]
    fn perfect_layers_report() {
        let s3 = Grid::from_fn(6, 6, |x, _| (x / 2) as u8);
        let angles = s3.map(|&c| (c == 1).then_some(30.0));
        let layers = PredictionLayers::from_semantic3(
            &s3,
            s3.mask_eq(2),
            crate::orientation::OrientationField::from_angles(&angles),
        )
        .unwrap();
        let r = layer_report(&layers, &layers).unwrap();
        assert_eq!(r.chromosome_iou, 1.0);
        assert_eq!(r.orientation_error, Some(0.0));
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        proptest::collection::vec(any::<bool>(), 16).prop_map(|v| Grid::from_vec(4, 4, v).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_one_iff_equal(a in arb_mask(), b in arb_mask()) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert_eq!(ab == 1.0, a == b);
        }

        #[test]
        fn swap_never_lowers_average(p in proptest::collection::vec(0u8..4, 36), t in proptest::collection::vec(0u8..4, 36)) {
            let p = Grid::from_vec(6, 6, p).unwrap();
            let t = Grid::from_vec(6, 6, t).unwrap();
            let r = semantic_report(&p, &t).unwrap();
            prop_assert!(r.average_iou >= r.no_swap_average_iou);
            let r2 = semantic_report(&swap_channels(&p), &swap_channels(&t)).unwrap();
            prop_assert_eq!(r.merged_ch_iou, r2.merged_ch_iou);
        }

        #[test]
        fn instance_report_ignores_order(
            preds in proptest::collection::vec(arb_mask(), 0..5),
            truths in proptest::collection::vec(arb_mask(), 1..5),
        ) {
            let a = instance_report(&preds, &truths).unwrap();
            let mut rp = preds.clone();
            rp.reverse();
            let mut rt = truths.clone();
            rt.reverse();
            let b = instance_report(&rp, &rt).unwrap();
            let mut pa = a.per_truth_iou.clone();
            pa.reverse();
            prop_assert_eq!(pa, b.per_truth_iou);
            prop_assert_eq!(a.unmatched_predictions, b.unmatched_predictions);
            prop_assert!((a.mean_best_match_iou - b.mean_best_match_iou).abs() < 1e-12);
        }
    }
}
