//! Prediction-ensemble construction: Monte Carlo dropout, deep
//! ensembles, and test-time augmentation.
//!
//! Members are independent and evaluated concurrently; they are placed
//! by index, so the output never depends on evaluation order. TTA is
//! restricted to the 8 dihedral transforms of the square because those
//! invert by pure index permutation, keeping member alignment lossless.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureGrid};
use crate::grid::{GrayImage, PredictionEnsemble, ProbMap};
use crate::learner::{mix_seed, PixelClassifier};

/// Which mechanism produces the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Mcdo,
    De,
    Tta,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mcdo => "mcdo",
            Method::De => "de",
            Method::Tta => "tta",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mcdo" => Ok(Method::Mcdo),
            "de" => Ok(Method::De),
            "tta" => Ok(Method::Tta),
            other => Err(Error::Parameter(format!(
                "method must be mcdo, de or tta, got {other:?}"
            ))),
        }
    }
}

/// Ensemble settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleSpec {
    pub method: Method,
    pub n: usize,
    pub base_seed: u64,
}

impl EnsembleSpec {
    pub fn new(method: Method, n: usize, base_seed: u64) -> Result<Self> {
        if n < 1 {
            return Err(Error::Parameter("ensemble size must be >= 1".into()));
        }
        if method == Method::Tta && n > Dihedral::ALL.len() {
            return Err(Error::Parameter(format!(
                "tta supports at most {} members, got {n}",
                Dihedral::ALL.len()
            )));
        }
        Ok(Self {
            method,
            n,
            base_seed,
        })
    }
}

// ---------------------------------------------------------------------------
// Dihedral transforms
// ---------------------------------------------------------------------------

/// The 8 symmetries of the square: rotations by 0/90/180/270 degrees and
/// the four reflections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dihedral {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
    Transpose,
    AntiTranspose,
}

impl Dihedral {
    pub const ALL: [Dihedral; 8] = [
        Dihedral::Identity,
        Dihedral::Rot90,
        Dihedral::Rot180,
        Dihedral::Rot270,
        Dihedral::FlipH,
        Dihedral::FlipV,
        Dihedral::Transpose,
        Dihedral::AntiTranspose,
    ];

    /// True when the transform maps an HxW grid to a WxH grid.
    pub fn swaps_dims(&self) -> bool {
        matches!(
            self,
            Dihedral::Rot90 | Dihedral::Rot270 | Dihedral::Transpose | Dihedral::AntiTranspose
        )
    }

    pub fn inverse(&self) -> Dihedral {
        match self {
            Dihedral::Rot90 => Dihedral::Rot270,
            Dihedral::Rot270 => Dihedral::Rot90,
            other => *other,
        }
    }

    /// Source coordinates (row, col) that land at (r, c) of the output,
    /// for an input of size h x w.
    fn source(&self, r: usize, c: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            // output dims: h x w
            Dihedral::Identity => (r, c),
            Dihedral::Rot180 => (h - 1 - r, w - 1 - c),
            Dihedral::FlipH => (r, w - 1 - c),
            Dihedral::FlipV => (h - 1 - r, c),
            // output dims: w x h (input h x w); here (r, c) index the output
            Dihedral::Rot90 => (h - 1 - c, r),
            Dihedral::Rot270 => (c, w - 1 - r),
            Dihedral::Transpose => (c, r),
            Dihedral::AntiTranspose => (h - 1 - c, w - 1 - r),
        }
    }

    fn apply_raw<T: Copy>(&self, h: usize, w: usize, data: &[T]) -> (usize, usize, Vec<T>) {
        let (oh, ow) = if self.swaps_dims() { (w, h) } else { (h, w) };
        let mut out = Vec::with_capacity(data.len());
        for r in 0..oh {
            for c in 0..ow {
                let (sr, sc) = self.source(r, c, h, w);
                out.push(data[sr * w + sc]);
            }
        }
        (oh, ow, out)
    }

    pub fn apply_image(&self, image: &GrayImage) -> GrayImage {
        let (h, w, data) = self.apply_raw(image.height(), image.width(), image.data());
        GrayImage::new(h, w, data).expect("transform permutes valid intensities")
    }

    pub fn apply_probmap(&self, map: &ProbMap) -> ProbMap {
        let (h, w, data) = self.apply_raw(map.height(), map.width(), map.data());
        ProbMap::new(h, w, data).expect("transform permutes valid probabilities")
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Dihedral::Identity),
            "rot90" => Ok(Dihedral::Rot90),
            "rot180" => Ok(Dihedral::Rot180),
            "rot270" => Ok(Dihedral::Rot270),
            "fliph" => Ok(Dihedral::FlipH),
            "flipv" => Ok(Dihedral::FlipV),
            "transpose" => Ok(Dihedral::Transpose),
            "antitranspose" => Ok(Dihedral::AntiTranspose),
            other => Err(Error::Parameter(format!("unknown transform {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Ensemble builders
// ---------------------------------------------------------------------------

/// N stochastic forward passes with dropout active; member i is seeded
/// `base_seed + i`. Requires a model with a positive dropout rate.
pub fn mcdo_ensemble(
    model: &PixelClassifier,
    image: &GrayImage,
    n: usize,
    base_seed: u64,
) -> Result<PredictionEnsemble> {
    mcdo_ensemble_from_features(model, &extract_features(image), n, base_seed)
}

/// [`mcdo_ensemble`] over precomputed features.
pub fn mcdo_ensemble_from_features(
    model: &PixelClassifier,
    feats: &FeatureGrid,
    n: usize,
    base_seed: u64,
) -> Result<PredictionEnsemble> {
    if n < 1 {
        return Err(Error::Parameter("ensemble size must be >= 1".into()));
    }
    if model.dropout_rate() == 0.0 {
        return Err(Error::DegenerateMcdo);
    }
    let members: Vec<ProbMap> = (0..n)
        .into_par_iter()
        .map(|i| model.predict_features(feats, true, base_seed.wrapping_add(i as u64)))
        .collect();
    PredictionEnsemble::new(members)
}

/// One deterministic prediction per model, order preserved.
pub fn de_ensemble(models: &[PixelClassifier], image: &GrayImage) -> Result<PredictionEnsemble> {
    de_ensemble_from_features(models, &extract_features(image))
}

/// [`de_ensemble`] over precomputed features.
pub fn de_ensemble_from_features(
    models: &[PixelClassifier],
    feats: &FeatureGrid,
) -> Result<PredictionEnsemble> {
    if models.is_empty() {
        return Err(Error::Parameter(
            "deep ensemble needs at least one model".into(),
        ));
    }
    let members: Vec<ProbMap> = models
        .par_iter()
        .map(|m| m.predict_features(feats, false, 0))
        .collect();
    PredictionEnsemble::new(members)
}

/// One deterministic prediction per transform: predict on t(image), then
/// map the probabilities back through t⁻¹ so every member lives in the
/// original frame. Dimension-swapping transforms require square images.
pub fn tta_ensemble(
    model: &PixelClassifier,
    image: &GrayImage,
    transforms: &[Dihedral],
) -> Result<PredictionEnsemble> {
    if transforms.is_empty() {
        return Err(Error::Parameter("tta needs at least one transform".into()));
    }
    if image.height() != image.width() && transforms.iter().any(Dihedral::swaps_dims) {
        return Err(Error::Parameter(format!(
            "90-degree transforms require a square image, got {}x{}",
            image.height(),
            image.width()
        )));
    }
    let members: Vec<ProbMap> = transforms
        .par_iter()
        .map(|t| {
            let transformed = t.apply_image(image);
            let pred = model.predict(&transformed, false, 0)?;
            Ok(t.inverse().apply_probmap(&pred))
        })
        .collect::<Result<_>>()?;
    PredictionEnsemble::new(members)
}

/// Builds the per-image ensemble for the given spec; `models` holds one
/// model for mcdo/tta and all members for de.
pub fn build_ensemble(
    spec: &EnsembleSpec,
    models: &[PixelClassifier],
    image: &GrayImage,
) -> Result<PredictionEnsemble> {
    match spec.method {
        Method::Mcdo => mcdo_ensemble(&models[0], image, spec.n, spec.base_seed),
        Method::De => de_ensemble(models, image),
        Method::Tta => tta_ensemble(&models[0], image, &Dihedral::ALL[..spec.n]),
    }
}

/// Derives a per-image base seed for the pipeline's epoch loop.
pub fn image_base_seed(master: u64, epoch: usize, image_idx: usize) -> u64 {
    mix_seed(master, epoch as u64, image_idx as u64)
}
