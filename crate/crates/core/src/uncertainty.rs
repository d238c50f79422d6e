//! Per-pixel uncertainty from prediction ensembles.
//!
//! For binary segmentation every member contributes a class-probability
//! vector (1-p, p) per pixel; the aleatoric covariance matrix
//! diag(p) - p pᵀ then has p(1-p) on both diagonal entries, so the
//! per-pixel scalar reduction below is exact, not an approximation. The
//! matrix-form computation lives in the test oracles.
//!
//! Label correction consumes only the aleatoric map; the between-member
//! variance (epistemic part) is a diagnostic output.

use crate::error::{Error, Result};
use crate::grid::{PredictionEnsemble, UncertaintyMap};

/// Mean over images of the pixel-summed uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintySummary {
    pub sigma_u: f64,
}

/// Per-pixel aleatoric uncertainty: U = (1/N) Σ p_n (1 - p_n).
///
/// Always in [0, 0.25]; zero exactly when every member is 0 or 1 there.
pub fn aleatoric_map(ens: &PredictionEnsemble) -> UncertaintyMap {
    let (h, w) = (ens.height(), ens.width());
    let inv_n = 1.0 / ens.len() as f64;
    let mut acc = vec![0.0f64; h * w];
    for member in ens.members() {
        for (a, &p) in acc.iter_mut().zip(member.data()) {
            let p = p as f64;
            *a += p * (1.0 - p);
        }
    }
    acc.iter_mut().for_each(|a| *a *= inv_n);
    UncertaintyMap::new(h, w, acc).expect("p(1-p) is finite and nonnegative")
}

/// Per-pixel between-member variance: (1/N) Σ (p_n - p̄)².
///
/// With a single member the map is all zeros and a degenerate-ensemble
/// warning is logged; at least two members are needed for a meaningful
/// value.
pub fn epistemic_map(ens: &PredictionEnsemble) -> UncertaintyMap {
    let (h, w) = (ens.height(), ens.width());
    if ens.len() < 2 {
        log::warn!("epistemic_map: degenerate ensemble (n = 1), returning zeros");
        return UncertaintyMap::new(h, w, vec![0.0; h * w]).unwrap();
    }
    let inv_n = 1.0 / ens.len() as f64;
    let mut mean = vec![0.0f64; h * w];
    for member in ens.members() {
        for (m, &p) in mean.iter_mut().zip(member.data()) {
            *m += p as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_n);
    let mut acc = vec![0.0f64; h * w];
    for member in ens.members() {
        for ((a, &p), m) in acc.iter_mut().zip(member.data()).zip(&mean) {
            let d = p as f64 - m;
            *a += d * d;
        }
    }
    acc.iter_mut().for_each(|a| *a *= inv_n);
    // guard the invariant against negative rounding dust
    acc.iter_mut().for_each(|a| *a = a.max(0.0));
    UncertaintyMap::new(h, w, acc).unwrap()
}

/// sigma_u = mean over maps of the per-image pixel sum.
pub fn cumulative_uncertainty(maps: &[UncertaintyMap]) -> Result<UncertaintySummary> {
    if maps.is_empty() {
        return Err(Error::Parameter(
            "cumulative_uncertainty needs at least one map".into(),
        ));
    }
    let sum: f64 = maps.iter().map(UncertaintyMap::pixel_sum).sum();
    Ok(UncertaintySummary {
        sigma_u: sum / maps.len() as f64,
    })
}
