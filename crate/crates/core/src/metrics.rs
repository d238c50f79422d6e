//! Dice overlap and the clean/noisy test-set evaluation protocol.

use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use crate::learner::PixelClassifier;
use crate::manifest::Sample;

/// Dice coefficient 2|A∩B| / (|A|+|B|).
///
/// Two empty masks score 1.0: both annotations agree there is nothing.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::DimMismatch {
            context: "dice",
            a_h: a.height(),
            a_w: a.width(),
            b_h: b.height(),
            b_w: b.width(),
        });
    }
    let mut inter = 0u64;
    let mut total = 0u64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += u64::from(x & y);
        total += u64::from(x) + u64::from(y);
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Mean test-split Dice of thresholded predictions against the clean and
/// noisy reference masks: (D_clean, D_noisy).
pub fn evaluate_model(
    model: &PixelClassifier,
    test: &[Sample],
    threshold: f32,
) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::Parameter("test split is empty".into()));
    }
    let mut sum_clean = 0.0;
    let mut sum_noisy = 0.0;
    for sample in test {
        let pred = model.predict(&sample.image, false, 0)?.binarize(threshold);
        sum_clean += dice(&pred, &sample.clean_mask)?;
        sum_noisy += dice(&pred, &sample.noisy_mask)?;
    }
    let n = test.len() as f64;
    Ok((sum_clean / n, sum_noisy / n))
}

/// Same protocol, but over precomputed prediction masks.
pub fn evaluate_predictions(preds: &[BinaryMask], test: &[Sample]) -> Result<(f64, f64)> {
    if preds.len() != test.len() || test.is_empty() {
        return Err(Error::Parameter(format!(
            "prediction count {} does not match test count {}",
            preds.len(),
            test.len()
        )));
    }
    let mut sum_clean = 0.0;
    let mut sum_noisy = 0.0;
    for (pred, sample) in preds.iter().zip(test) {
        sum_clean += dice(pred, &sample.clean_mask)?;
        sum_noisy += dice(pred, &sample.noisy_mask)?;
    }
    let n = test.len() as f64;
    Ok((sum_clean / n, sum_noisy / n))
}
