//! On-disk grid formats.
//!
//! Masks and gray images are stored as portable graymaps (binary `P5`
//! written, `P5` or ASCII `P2` read, maxval <= 255). A stored value of 0
//! maps to label 0 and any nonzero value to label 1.
//!
//! Prediction ensembles use a small container: magic `UENS`, version
//! byte 0x01, three little-endian u32 (N, H, W), then N*H*W
//! little-endian IEEE-754 f32, member-major then row-major. Uncertainty
//! maps reuse the same container with N = 1.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, GrayImage, PredictionEnsemble, ProbMap, UncertaintyMap};

const UENS_MAGIC: &[u8; 4] = b"UENS";
const UENS_VERSION: u8 = 0x01;

// ---------------------------------------------------------------------------
// Portable graymap
// ---------------------------------------------------------------------------

struct Pgm {
    width: usize,
    height: usize,
    maxval: u16,
    pixels: Vec<u16>,
}

/// Pulls the next whitespace-delimited token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    if *pos >= bytes.len() {
        return None;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    Some(bytes[start..*pos].to_vec())
}

fn parse_usize(tok: &[u8], path: &Path, what: &str) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("bad {what} field"),
        })
}

fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let magic = next_token(&bytes, &mut pos).ok_or_else(|| Error::BadMagic {
        path: path.to_path_buf(),
        expected: "P5 or P2",
    })?;
    let binary = match magic.as_slice() {
        b"P5" => true,
        b"P2" => false,
        _ => {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "P5 or P2",
            })
        }
    };
    let width = next_token(&bytes, &mut pos)
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "missing width".into(),
        })
        .and_then(|t| parse_usize(&t, path, "width"))?;
    let height = next_token(&bytes, &mut pos)
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "missing height".into(),
        })
        .and_then(|t| parse_usize(&t, path, "height"))?;
    let maxval = next_token(&bytes, &mut pos)
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "missing maxval".into(),
        })
        .and_then(|t| parse_usize(&t, path, "maxval"))?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("dims must be >= 1, got {width}x{height}"),
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("maxval {maxval} out of range 1..=255"),
        });
    }
    let count = width
        .checked_mul(height)
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "dims overflow".into(),
        })?;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        // single whitespace byte separates header from payload
        pos += 1;
        if bytes.len() < pos || bytes.len() - pos < count {
            return Err(Error::TruncatedPayload {
                path: path.to_path_buf(),
            });
        }
        pixels.extend(bytes[pos..pos + count].iter().map(|&b| b as u16));
    } else {
        for _ in 0..count {
            let tok = next_token(&bytes, &mut pos).ok_or_else(|| Error::TruncatedPayload {
                path: path.to_path_buf(),
            })?;
            let value = parse_usize(&tok, path, "pixel")?;
            if value > maxval {
                return Err(Error::FormatError {
                    path: path.to_path_buf(),
                    reason: format!("pixel value {value} exceeds maxval {maxval}"),
                });
            }
            pixels.push(value as u16);
        }
    }
    if let Some(&bad) = pixels.iter().find(|&&p| p > maxval as u16) {
        return Err(Error::FormatError {
            path: path.to_path_buf(),
            reason: format!("pixel value {bad} exceeds maxval {maxval}"),
        });
    }
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn write_pgm(path: &Path, height: usize, width: usize, pixels: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    write_bytes(path, &out)
}

/// Reads a binary mask; any stored value above 0 maps to label 1.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let pgm = read_pgm(path.as_ref())?;
    let data = pgm.pixels.iter().map(|&p| u8::from(p > 0)).collect();
    BinaryMask::new(pgm.height, pgm.width, data)
}

/// Writes a mask as a binary graymap with labels stored as 0/255.
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let pixels: Vec<u8> = mask.data().iter().map(|&v| v * 255).collect();
    write_pgm(path.as_ref(), mask.height(), mask.width(), &pixels)
}

/// Reads a gray image; intensities are stored value / maxval.
pub fn read_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let pgm = read_pgm(path.as_ref())?;
    let max = pgm.maxval as f32;
    let data = pgm.pixels.iter().map(|&p| p as f32 / max).collect();
    GrayImage::new(pgm.height, pgm.width, data)
}

/// Writes a gray image quantized to 8 bits.
pub fn write_image(image: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let pixels: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_pgm(path.as_ref(), image.height(), image.width(), &pixels)
}

// ---------------------------------------------------------------------------
// UENS float tensor container
// ---------------------------------------------------------------------------

fn read_uens(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[0..4] != UENS_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: "UENS",
        });
    }
    if bytes.len() < 5 || bytes[4] != UENS_VERSION {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("unsupported version {:?}", bytes.get(4)),
        });
    }
    if bytes.len() < 17 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "header shorter than 17 bytes".into(),
        });
    }
    let dim =
        |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    let (n, h, w) = (dim(0), dim(1), dim(2));
    if n == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "ensemble must have n >= 1".into(),
        });
    }
    if h == 0 || w == 0 {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: format!("dims must be >= 1, got {h}x{w}"),
        });
    }
    let count = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::MalformedHeader {
            path: path.to_path_buf(),
            reason: "dims overflow".into(),
        })?;
    let payload = &bytes[17..];
    if payload.len() / 4 < count {
        return Err(Error::TruncatedPayload {
            path: path.to_path_buf(),
        });
    }
    let mut data = Vec::with_capacity(count);
    for i in 0..count {
        data.push(f32::from_le_bytes(
            payload[4 * i..4 * i + 4].try_into().unwrap(),
        ));
    }
    Ok((n, h, w, data))
}

fn write_uens(path: &Path, n: usize, h: usize, w: usize, values: &[f32]) -> Result<()> {
    debug_assert_eq!(values.len(), n * h * w);
    let mut out = Vec::with_capacity(17 + values.len() * 4);
    out.extend_from_slice(UENS_MAGIC);
    out.push(UENS_VERSION);
    for d in [n, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    write_bytes(path, &out)
}

pub fn read_ensemble(path: impl AsRef<Path>) -> Result<PredictionEnsemble> {
    let path = path.as_ref();
    let (n, h, w, data) = read_uens(path)?;
    let mut members = Vec::with_capacity(n);
    for i in 0..n {
        let slice = data[i * h * w..(i + 1) * h * w].to_vec();
        members.push(ProbMap::new(h, w, slice).map_err(|e| Error::FormatError {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?);
    }
    PredictionEnsemble::new(members)
}

pub fn write_ensemble(ens: &PredictionEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let (n, h, w) = (ens.len(), ens.height(), ens.width());
    let mut values = Vec::with_capacity(n * h * w);
    for m in ens.members() {
        values.extend_from_slice(m.data());
    }
    write_uens(path.as_ref(), n, h, w, &values)
}

/// Reads an uncertainty map stored as a single-member UENS tensor.
pub fn read_uncertainty_map(path: impl AsRef<Path>) -> Result<UncertaintyMap> {
    let path = path.as_ref();
    let (n, h, w, data) = read_uens(path)?;
    if n != 1 {
        return Err(Error::FormatError {
            path: path.to_path_buf(),
            reason: format!("uncertainty map must have n = 1, got {n}"),
        });
    }
    UncertaintyMap::new(h, w, data.iter().map(|&v| v as f64).collect()).map_err(|e| {
        Error::FormatError {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })
}

/// Writes an uncertainty map as a single-member UENS tensor (f32).
pub fn write_uncertainty_map(map: &UncertaintyMap, path: impl AsRef<Path>) -> Result<()> {
    let values: Vec<f32> = map.data().iter().map(|&v| v as f32).collect();
    write_uens(path.as_ref(), 1, map.height(), map.width(), &values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // keep the dir alive by leaking; tests are short-lived
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn mask_round_trip() {
        let m = BinaryMask::new(2, 2, vec![0, 1, 1, 0]).unwrap();
        let p = tmp("m.pgm");
        write_mask(&m, &p).unwrap();
        assert_eq!(read_mask(&p).unwrap(), m);

        let ones = BinaryMask::new(8, 8, vec![1; 64]).unwrap();
        let p2 = tmp("ones.pgm");
        write_mask(&ones, &p2).unwrap();
        assert_eq!(read_mask(&p2).unwrap(), ones);
    }

    #[test]
    fn mask_thresholds_any_nonzero() {
        let p = tmp("gray.pgm");
        write_bytes(&p, b"P5\n2 2\n255\n\x00\xff\x7f\x01").unwrap();
        let m = read_mask(&p).unwrap();
        assert_eq!(m.data(), &[0, 1, 1, 1]);
    }

    #[test]
    fn reads_ascii_p2() {
        let p = tmp("a.pgm");
        write_bytes(&p, b"P2\n# comment\n2 1\n255\n0 255\n").unwrap();
        let m = read_mask(&p).unwrap();
        assert_eq!(m.data(), &[0, 1]);
    }

    #[test]
    fn ascii_pixel_above_maxval_is_rejected() {
        let p = tmp("over.pgm");
        write_bytes(&p, b"P2\n2 1\n255\n0 65536\n").unwrap();
        assert!(matches!(read_mask(&p), Err(Error::FormatError { .. })));
    }

    #[test]
    fn single_pixel_mask() {
        let p = tmp("one.pgm");
        write_bytes(&p, b"P5\n1 1\n255\n\x00").unwrap();
        assert_eq!(read_mask(&p).unwrap().data(), &[0]);
    }

    #[test]
    fn truncated_payload_is_reported() {
        let p = tmp("trunc.pgm");
        write_bytes(&p, b"P5\n4 4\n255\n\x00\x01").unwrap();
        match read_mask(&p) {
            Err(Error::TruncatedPayload { .. }) => {}
            other => panic!("expected truncated payload, got {other:?}"),
        }
    }

    #[test]
    fn write_to_missing_dir_fails() {
        let m = BinaryMask::new(1, 1, vec![0]).unwrap();
        assert!(write_mask(&m, "/nonexistent-dir-xyz/m.pgm").is_err());
    }

    #[test]
    fn ensemble_round_trip() {
        let m = ProbMap::new(2, 2, vec![0.5; 4]).unwrap();
        let ens = PredictionEnsemble::new(vec![m.clone(), m]).unwrap();
        let p = tmp("e.uens");
        write_ensemble(&ens, &p).unwrap();
        assert_eq!(read_ensemble(&p).unwrap(), ens);
    }

    #[test]
    fn uens_rejects_zero_members() {
        let p = tmp("z.uens");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"UENS");
        bytes.push(0x01);
        for d in [0u32, 2, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        write_bytes(&p, &bytes).unwrap();
        match read_ensemble(&p) {
            Err(Error::MalformedHeader { reason, .. }) => {
                assert!(reason.contains("n >= 1"), "{reason}");
            }
            other => panic!("expected malformed header, got {other:?}"),
        }
    }

    #[test]
    fn uens_rejects_bad_magic() {
        let p = tmp("bad.uens");
        write_bytes(&p, b"NOPE\x01rest").unwrap();
        assert!(matches!(read_ensemble(&p), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn uncertainty_map_round_trip_f32() {
        let u = UncertaintyMap::new(1, 3, vec![0.0, 0.125, 0.25]).unwrap();
        let p = tmp("u.uens");
        write_uncertainty_map(&u, &p).unwrap();
        let back = read_uncertainty_map(&p).unwrap();
        assert_eq!(back.data(), u.data());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mask_serialization_is_involutive(
            h in 1usize..12,
            w in 1usize..12,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<u8> = (0..h * w).map(|_| rng.gen_range(0..=1)).collect();
            let m = BinaryMask::new(h, w, data).unwrap();
            let p = tmp("prop.pgm");
            write_mask(&m, &p).unwrap();
            prop_assert_eq!(read_mask(&p).unwrap(), m);
        }

        #[test]
        fn ensemble_serialization_is_involutive(
            n in 1usize..4,
            h in 1usize..8,
            w in 1usize..8,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let members: Vec<ProbMap> = (0..n)
                .map(|_| {
                    let data: Vec<f32> = (0..h * w).map(|_| rng.gen_range(0.0..=1.0)).collect();
                    ProbMap::new(h, w, data).unwrap()
                })
                .collect();
            let ens = PredictionEnsemble::new(members).unwrap();
            let p = tmp("prop.uens");
            write_ensemble(&ens, &p).unwrap();
            prop_assert_eq!(read_ensemble(&p).unwrap(), ens);
        }
    }
}
