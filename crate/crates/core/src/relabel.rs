//! Label correction: flip noisy pixels in high-uncertainty regions, then
//! repair interior holes.

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, UncertaintyMap};

/// Correction settings: the uncertainty threshold and whether to run
/// hole filling after flipping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelabelSpec {
    delta: f64,
    fill_holes: bool,
}

impl RelabelSpec {
    /// `delta` must lie strictly inside (0, 0.25), the open range of
    /// attainable binary aleatoric uncertainties.
    pub fn new(delta: f64, fill_holes: bool) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.25) {
            return Err(Error::Parameter(format!(
                "delta must be in (0, 0.25), got {delta}"
            )));
        }
        Ok(Self { delta, fill_holes })
    }

    /// Half of the binary-uncertainty maximum.
    pub const DEFAULT_DELTA: f64 = 0.125;

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn fill(&self) -> bool {
        self.fill_holes
    }
}

impl Default for RelabelSpec {
    fn default() -> Self {
        Self {
            delta: Self::DEFAULT_DELTA,
            fill_holes: true,
        }
    }
}

/// Flips each label where the uncertainty strictly exceeds `delta`.
pub fn flip_labels(noisy: &BinaryMask, umap: &UncertaintyMap, delta: f64) -> Result<BinaryMask> {
    if noisy.height() != umap.height() || noisy.width() != umap.width() {
        return Err(Error::DimMismatch {
            context: "flip_labels",
            a_h: noisy.height(),
            a_w: noisy.width(),
            b_h: umap.height(),
            b_w: umap.width(),
        });
    }
    let data = noisy
        .data()
        .iter()
        .zip(umap.data())
        .map(|(&label, &u)| if u > delta { 1 - label } else { label })
        .collect();
    BinaryMask::new(noisy.height(), noisy.width(), data)
}

/// Fills background regions that are not 4-connected to the grid border
/// through background; foreground pixels are never modified.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut reachable = vec![false; h * w];
    let mut stack: Vec<usize> = Vec::new();
    let seed = |idx: usize, stack: &mut Vec<usize>, reachable: &mut [bool]| {
        if mask.data()[idx] == 0 && !reachable[idx] {
            reachable[idx] = true;
            stack.push(idx);
        }
    };
    for c in 0..w {
        seed(c, &mut stack, &mut reachable);
        seed((h - 1) * w + c, &mut stack, &mut reachable);
    }
    for r in 0..h {
        seed(r * w, &mut stack, &mut reachable);
        seed(r * w + w - 1, &mut stack, &mut reachable);
    }
    while let Some(idx) = stack.pop() {
        let (r, c) = (idx / w, idx % w);
        if r > 0 {
            seed(idx - w, &mut stack, &mut reachable);
        }
        if r + 1 < h {
            seed(idx + w, &mut stack, &mut reachable);
        }
        if c > 0 {
            seed(idx - 1, &mut stack, &mut reachable);
        }
        if c + 1 < w {
            seed(idx + 1, &mut stack, &mut reachable);
        }
    }
    let data = mask
        .data()
        .iter()
        .enumerate()
        .map(|(idx, &v)| if v == 1 || !reachable[idx] { 1 } else { 0 })
        .collect();
    BinaryMask::new(h, w, data).expect("fill preserves dims and binary labels")
}

/// Flip then (optionally) fill.
pub fn relabel(
    noisy: &BinaryMask,
    umap: &UncertaintyMap,
    spec: &RelabelSpec,
) -> Result<BinaryMask> {
    let flipped = flip_labels(noisy, umap, spec.delta())?;
    Ok(if spec.fill() {
        fill_holes(&flipped)
    } else {
        flipped
    })
}
