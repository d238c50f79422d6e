//! Pixel-grid types shared by every stage: binary masks, gray images,
//! probability maps, prediction ensembles and uncertainty maps.
//!
//! All grids are row-major with the origin at the top-left corner;
//! `x` is the column index and `y` is the row index. Every type is
//! immutable after construction.

use crate::error::{Error, Result};

/// Tolerance for probability range validation.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// An H x W grid of {0,1} labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    /// Builds a mask, rejecting empty dims and any element outside {0,1}.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width, data.len()).map_err(Error::InvalidMask)?;
        if let Some(idx) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidMask(format!(
                "element {} is {}, expected 0 or 1",
                idx, data[idx]
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height.max(1) * width.max(1)],
        }
    }

    /// Builds a mask from a per-pixel predicate over (row, col).
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(u8::from(f(r, c)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// An H x W grid of intensities in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width, data.len()).map_err(Error::InvalidMask)?;
        if let Some(idx) = data
            .iter()
            .position(|&v| !v.is_finite() || !(0.0..=1.0).contains(&v))
        {
            return Err(Error::InvalidIntensity {
                index: idx,
                value: data[idx] as f64,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }
}

/// An H x W grid of foreground probabilities in [0,1]; one model prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ProbMap {
    /// Values within `PROB_TOLERANCE` of [0,1] are clamped; anything
    /// further out (or non-finite) is rejected.
    pub fn new(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        check_dims(height, width, data.len()).map_err(Error::InvalidMask)?;
        for (idx, v) in data.iter_mut().enumerate() {
            let f = *v as f64;
            if !f.is_finite() || !(-PROB_TOLERANCE..=1.0 + PROB_TOLERANCE).contains(&f) {
                return Err(Error::InvalidProbability {
                    index: idx,
                    value: f,
                });
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Thresholds at `thr` (strictly greater) into a binary mask.
    pub fn binarize(&self, thr: f32) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&p| u8::from(p > thr)).collect(),
        }
    }
}

/// An ordered stack of N probability maps over the same image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEnsemble {
    members: Vec<ProbMap>,
}

impl PredictionEnsemble {
    pub fn new(members: Vec<ProbMap>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        let (h, w) = (first.height(), first.width());
        for (index, m) in members.iter().enumerate() {
            if m.height() != h || m.width() != w {
                return Err(Error::EnsembleDimMismatch {
                    index,
                    got_h: m.height(),
                    got_w: m.width(),
                    want_h: h,
                    want_w: w,
                });
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[ProbMap] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn height(&self) -> usize {
        self.members[0].height()
    }

    pub fn width(&self) -> usize {
        self.members[0].width()
    }
}

/// An H x W grid of nonnegative per-pixel uncertainties.
///
/// Stored at f64 so the ensemble reductions keep full precision; the
/// on-disk container is 32-bit (see [`crate::io`]).
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl UncertaintyMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, data.len()).map_err(Error::InvalidMask)?;
        if let Some(idx) = data.iter().position(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::InvalidUncertainty {
                index: idx,
                value: data[idx],
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// Sum of all pixels (the per-image cumulative uncertainty).
    pub fn pixel_sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

fn check_dims(height: usize, width: usize, len: usize) -> std::result::Result<(), String> {
    if height == 0 || width == 0 {
        return Err(format!("dims must be >= 1, got {height}x{width}"));
    }
    if len != height * width {
        return Err(format!(
            "data length {len} does not match dims {height}x{width}"
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_rejects_non_binary() {
        assert!(BinaryMask::new(1, 2, vec![0, 2]).is_err());
        assert!(BinaryMask::new(1, 2, vec![0, 1]).is_ok());
    }

    #[test]
    fn mask_rejects_bad_dims() {
        assert!(BinaryMask::new(0, 2, vec![]).is_err());
        assert!(BinaryMask::new(2, 2, vec![0, 1, 0]).is_err());
    }

    #[test]
    fn probmap_tolerance() {
        // within 1e-9 of the range: clamped
        let p = ProbMap::new(1, 1, vec![1.0 + 1e-10]).unwrap();
        assert_eq!(p.data()[0], 1.0);
        // beyond tolerance: rejected
        assert!(ProbMap::new(1, 1, vec![1.001]).is_err());
        assert!(ProbMap::new(1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn ensemble_requires_matching_dims() {
        let a = ProbMap::new(2, 2, vec![0.5; 4]).unwrap();
        let b = ProbMap::new(3, 3, vec![0.5; 9]).unwrap();
        assert!(PredictionEnsemble::new(vec![a.clone(), b]).is_err());
        assert!(PredictionEnsemble::new(vec![]).is_err());
        assert_eq!(PredictionEnsemble::new(vec![a]).unwrap().len(), 1);
    }

    #[test]
    fn uncertainty_rejects_negative() {
        assert!(UncertaintyMap::new(1, 1, vec![-0.1]).is_err());
        assert!(UncertaintyMap::new(1, 1, vec![0.25]).is_ok());
    }
}
