//! Bit-exact PNG and JSON formats for every layer type, with atomic writes.
//!
//! | layer        | PNG        | encoding                                    |
//! |--------------|------------|---------------------------------------------|
//! | intensity    | 8-bit gray | `v ↦ round(v·255)`, read back as `p/255`    |
//! | label map    | 8-bit gray | class code                                  |
//! | mask         | 8-bit gray | `0` / `255`                                 |
//! | orientation  | 16-bit gray| `round(θ·100)` in `[0, 18000)`, `65535` invalid |
//! | instances    | 8-bit gray | bit `i−1` set when instance `i` covers the pixel |

use std::io::{Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, IntensityImage, LabelMap};
use crate::instseg::InstanceSet;
use crate::orientation::{encode_degrees, OrientationField};

pub const ORIENTATION_INVALID: u16 = 65535;
const ORIENTATION_SCALE: f64 = 100.0;
pub const MAX_INSTANCES: usize = 8;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
/// Offset of the IHDR colour-type byte in a well-formed file.
const COLOR_TYPE_OFFSET: u64 = 25;

/// Writes `bytes` to a temporary file beside `path`, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Walks the chunk structure and checks every CRC. Errors carry the byte
/// offset of the offending signature, chunk header or checksum.
pub fn check_png(path: &Path, bytes: &[u8]) -> Result<()> {
    if bytes.len() < 8 || bytes[..8] != PNG_SIGNATURE {
        return Err(Error::data(path, 0, "not a PNG file (bad signature)"));
    }
    let mut pos = 8usize;
    let mut first = true;
    loop {
        if bytes.len() < pos + 12 {
            return Err(Error::data(path, pos as u64, "truncated chunk header"));
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let kind = &bytes[pos + 4..pos + 8];
        let end = pos + 8 + len;
        if len > i32::MAX as usize || bytes.len() < end + 4 {
            return Err(Error::data(path, pos as u64, "chunk runs past the end of the file"));
        }
        if first && kind != b"IHDR" {
            return Err(Error::data(path, pos as u64, "first chunk is not IHDR"));
        }
        first = false;
        let stored = u32::from_be_bytes(bytes[end..end + 4].try_into().unwrap());
        if crc32fast::hash(&bytes[pos + 4..end]) != stored {
            return Err(Error::data(
                path,
                end as u64,
                format!("CRC mismatch in {} chunk", String::from_utf8_lossy(kind)),
            ));
        }
        pos = end + 4;
        if kind == b"IEND" {
            return Ok(());
        }
    }
}

fn decode_png(path: &Path) -> Result<DynamicImage> {
    let bytes = read_bytes(path)?;
    check_png(path, &bytes)?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map_err(|e| Error::data(path, 8, format!("PNG decode failed: {e}")))
}

fn encode_png(path: &Path, image: DynamicImage) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    image
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| Error::data(path, 0, format!("PNG encode failed: {e}")))?;
    atomic_write(path, buf.get_ref())
}

fn gray8(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, data).expect("sized buffer");
    encode_png(path, DynamicImage::ImageLuma8(buf))
}

fn read_gray8(path: &Path) -> Result<Grid<u8>> {
    match decode_png(path)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Grid::from_vec(w as usize, h as usize, img.into_raw())
        }
        _ => Err(Error::data(path, COLOR_TYPE_OFFSET, "expected an 8-bit grayscale PNG")),
    }
}

pub fn write_intensity(path: &Path, image: &IntensityImage) -> Result<()> {
    let data = image.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    gray8(path, image.width(), image.height(), data)
}

pub fn read_intensity(path: &Path) -> Result<IntensityImage> {
    Ok(read_gray8(path)?.map(|&p| p as f64 / 255.0))
}

pub fn write_label_map(path: &Path, map: &LabelMap) -> Result<()> {
    gray8(path, map.width(), map.height(), map.as_slice().to_vec())
}

/// Reads a label map and rejects codes `>= num_classes`.
pub fn read_label_map(path: &Path, num_classes: u8) -> Result<LabelMap> {
    let map = read_gray8(path)?;
    if let Some(&c) = map.iter().find(|&&c| c >= num_classes) {
        return Err(Error::data(path, 0, format!("class code {c} outside the {num_classes}-class alphabet")));
    }
    Ok(map)
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let data = mask.iter().map(|&b| if b { 255 } else { 0 }).collect();
    gray8(path, mask.width(), mask.height(), data)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let raw = read_gray8(path)?;
    if let Some(&v) = raw.iter().find(|&&v| v != 0 && v != 255) {
        return Err(Error::data(path, 0, format!("mask value {v} is neither 0 nor 255")));
    }
    Ok(raw.map(|&v| v == 255))
}

/// Pixel code of an angle in degrees.
pub fn orientation_code(degrees: f64) -> u16 {
    let v = (degrees * ORIENTATION_SCALE).round() as u32;
    if v >= 18000 {
        0
    } else {
        v as u16
    }
}

/// Stores the decoded angle; invalid and zero-vector pixels become the sentinel.
pub fn write_orientation(path: &Path, field: &OrientationField) -> Result<()> {
    let data: Vec<u16> = (0..field.valid.len())
        .map(|i| field.angle_at(i).map_or(ORIENTATION_INVALID, |a| orientation_code(a.degrees())))
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(field.width() as u32, field.height() as u32, data)
        .expect("sized buffer");
    encode_png(path, DynamicImage::ImageLuma16(buf))
}

pub fn read_orientation(path: &Path) -> Result<OrientationField> {
    let img = match decode_png(path)? {
        DynamicImage::ImageLuma16(img) => img,
        _ => return Err(Error::data(path, COLOR_TYPE_OFFSET, "expected a 16-bit grayscale PNG")),
    };
    let (w, h) = img.dimensions();
    let raw = img.into_raw();
    if let Some(&v) = raw.iter().find(|&&v| v >= 18000 && v != ORIENTATION_INVALID) {
        return Err(Error::data(path, 0, format!("orientation code {v} out of range")));
    }
    let angles = Grid::from_vec(w as usize, h as usize, raw)?
        .map(|&v| (v != ORIENTATION_INVALID).then(|| v as f64 / ORIENTATION_SCALE));
    Ok(OrientationField {
        vectors: angles.map(|a| a.map(encode_degrees).unwrap_or_default()),
        valid: angles.map(|a| a.is_some()),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSidecar {
    pub count: usize,
    pub width: usize,
    pub height: usize,
}

/// Writes the bit-field PNG and its JSON sidecar (`<png stem>.json`).
pub fn write_instances(png: &Path, instances: &[BinaryMask], dims: (usize, usize)) -> Result<()> {
    if instances.len() > MAX_INSTANCES {
        return Err(Error::InvalidParameter(format!(
            "{} instances exceed the {MAX_INSTANCES}-instance file format",
            instances.len()
        )));
    }
    let mut bits = Grid::new(dims.0, dims.1, 0u8);
    for (k, mask) in instances.iter().enumerate() {
        bits.ensure_same_dims(mask, "instance mask")?;
        for i in mask.set_indices() {
            bits.as_mut_slice()[i] |= 1 << k;
        }
    }
    gray8(png, dims.0, dims.1, bits.into_vec())?;
    let sidecar = InstanceSidecar {
        count: instances.len(),
        width: dims.0,
        height: dims.1,
    };
    write_json(&png.with_extension("json"), &sidecar)
}

pub fn read_instances(png: &Path) -> Result<InstanceSet> {
    let sidecar: InstanceSidecar = read_json(&png.with_extension("json"))?;
    let bits = read_gray8(png)?;
    if bits.dims() != (sidecar.width, sidecar.height) {
        return Err(Error::data(png, 16, "dimensions disagree with the sidecar"));
    }
    if sidecar.count > MAX_INSTANCES {
        return Err(Error::data(png.with_extension("json"), 0, "instance count exceeds 8"));
    }
    let allowed = if sidecar.count == 8 { 0xff } else { (1u16 << sidecar.count) as u8 - 1 };
    if let Some(&v) = bits.iter().find(|&&v| v & !allowed != 0) {
        return Err(Error::data(png, 0, format!("pixel bits {v:#010b} exceed the instance count")));
    }
    Ok(InstanceSet {
        masks: (0..sidecar.count).map(|k| bits.map(|&v| v & (1 << k) != 0)).collect(),
    })
}

pub fn write_rgb(path: &Path, width: usize, height: usize, data: Vec<u8>) -> Result<()> {
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(width as u32, height as u32, data).expect("sized buffer");
    encode_png(path, DynamicImage::ImageRgb8(buf))
}

/// Rounds a float to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.5e}").parse().unwrap_or(x)
    } else {
        x
    }
}

fn round_floats(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().map(round_sig6).and_then(serde_json::Number::from_f64) {
                *n = r;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_floats),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn to_json_bytes<T: Serialize>(value: &T, round: bool) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(format!("serialization: {e}")))?;
    if round {
        round_floats(&mut v);
    }
    let mut bytes = serde_json::to_vec_pretty(&v).expect("values serialize");
    bytes.push(b'\n');
    Ok(bytes)
}

/// Pretty JSON with full float precision.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, &to_json_bytes(value, false)?)
}

/// Pretty JSON with floats rounded to 6 significant digits.
pub fn write_report<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, &to_json_bytes(value, true)?)
}

fn byte_offset(text: &[u8], line: usize, column: usize) -> u64 {
    let mut offset = 0usize;
    for _ in 1..line {
        match text[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => break,
        }
    }
    (offset + column.saturating_sub(1)).min(text.len()) as u64
}

/// Reads a data file; parse failures are data errors with a byte offset.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::data(path, byte_offset(&bytes, e.line(), e.column()), e.to_string()))
}

/// Reads a configuration file; any failure is a configuration error.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chunk_walker_reports_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_mask(&p, &BinaryMask::new(3, 2, true)).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        assert!(check_png(&p, &bytes).is_ok());

        let mut bad = bytes.clone();
        bad[0] = 0;
        assert!(matches!(check_png(&p, &bad), Err(Error::Data { offset: 0, .. })));

        // Corrupt one IHDR data byte; the CRC after the 13-byte payload fails.
        bytes[16] ^= 0xff;
        match check_png(&p, &bytes) {
            Err(Error::Data { offset, .. }) => assert_eq!(offset, 8 + 8 + 13),
            other => panic!("{other:?}"),
        }
        let truncated = &std::fs::read(&p).unwrap()[..40];
        assert!(matches!(check_png(&p, truncated), Err(Error::Data { .. })));
    }

    #[test]
    fn wrong_bit_depth_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_mask(&p, &BinaryMask::new(2, 2, false)).unwrap();
        assert!(matches!(read_orientation(&p), Err(Error::Data { offset: COLOR_TYPE_OFFSET, .. })));
    }

    #[test]
    fn orientation_codes() {
        assert_eq!(orientation_code(179.996), 0);
        assert_eq!(orientation_code(90.0), 9000);
        assert_eq!(orientation_code(0.004), 0);
    }

    #[test]
    fn sig6_rounding() {
        assert_eq!(round_sig6(0.123456789), 0.123457);
        assert_eq!(round_sig6(1234567.0), 1234570.0);
        assert_eq!(round_sig6(0.0), 0.0);
    }

    #[test]
    fn reports_round_but_keep_integers() {
        let v = serde_json::json!({"a": 0.333333333, "n": 123456789, "xs": [1.0e-7 / 3.0]});
        let s = String::from_utf8(to_json_bytes(&v, true).unwrap()).unwrap();
        assert!(s.contains("0.333333"), "{s}");
        assert!(!s.contains("0.3333333"));
        assert!(s.contains("123456789"));
    }

    #[test]
    fn json_errors_have_offsets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        std::fs::write(&p, b"{\n  \"count\": 2,\n  \"width\": oops\n}").unwrap();
        match read_json::<InstanceSidecar>(&p) {
            Err(Error::Data { offset, .. }) => assert!((25..=35).contains(&offset), "{offset}"),
            other => panic!("{other:?}"),
        }
    }

    fn dims() -> impl Strategy<Value = (usize, usize)> {
        (1usize..12, 1usize..12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn layers_round_trip((w, h) in dims(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dir = tempfile::tempdir().unwrap();
            let d = dir.path();

            let img = Grid::from_fn(w, h, |_, _| rng.random_range(0..=255u8) as f64 / 255.0);
            write_intensity(&d.join("i.png"), &img).unwrap();
            prop_assert_eq!(read_intensity(&d.join("i.png")).unwrap(), img);

            let map = Grid::from_fn(w, h, |_, _| rng.random_range(0..4u8));
            write_label_map(&d.join("l.png"), &map).unwrap();
            prop_assert_eq!(read_label_map(&d.join("l.png"), 4).unwrap(), map);

            let mask = Grid::from_fn(w, h, |_, _| rng.random_bool(0.5));
            write_mask(&d.join("m.png"), &mask).unwrap();
            prop_assert_eq!(read_mask(&d.join("m.png")).unwrap(), mask);

            let angles = Grid::from_fn(w, h, |_, _| rng.random_bool(0.7).then(|| rng.random_range(0..18000u32) as f64 / 100.0));
            let field = OrientationField::from_angles(&angles);
            write_orientation(&d.join("o.png"), &field).unwrap();
            let back = read_orientation(&d.join("o.png")).unwrap();
            prop_assert_eq!(&back, &field);
            write_orientation(&d.join("o2.png"), &back).unwrap();
            prop_assert_eq!(std::fs::read(d.join("o.png")).unwrap(), std::fs::read(d.join("o2.png")).unwrap());

            let n = rng.random_range(0..=8usize);
            let masks: Vec<BinaryMask> = (0..n).map(|_| Grid::from_fn(w, h, |_, _| rng.random_bool(0.3))).collect();
            write_instances(&d.join("n.png"), &masks, (w, h)).unwrap();
            prop_assert_eq!(read_instances(&d.join("n.png")).unwrap().masks, masks);
        }
    }
}
