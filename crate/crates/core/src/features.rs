//! Per-pixel features for the reference learner.
//!
//! Each pixel gets 9 features: raw intensity, box mean and box variance
//! at radii 1, 2 and 4 (windows clamped at the image border), and its
//! normalized (x, y) position.

use crate::grid::GrayImage;

pub const FEATURE_COUNT: usize = 9;
const BOX_RADII: [usize; 3] = [1, 2, 4];

/// Dense per-pixel feature grid, pixel-major layout.
#[derive(Debug, Clone)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn pixel(&self, idx: usize) -> &[f64] {
        &self.data[idx * FEATURE_COUNT..(idx + 1) * FEATURE_COUNT]
    }
}

/// Summed-area table with one row/col of zero padding.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn build(height: usize, width: usize, values: impl Fn(usize) -> f64) -> Self {
        let w1 = width + 1;
        let mut sums = vec![0.0; (height + 1) * w1];
        for r in 0..height {
            let mut row_acc = 0.0;
            for c in 0..width {
                row_acc += values(r * width + c);
                sums[(r + 1) * w1 + (c + 1)] = sums[r * w1 + (c + 1)] + row_acc;
            }
        }
        Self { width, sums }
    }

    /// Sum over rows r0..=r1, cols c0..=c1 (inclusive, in-bounds).
    fn window(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> f64 {
        let w1 = self.width + 1;
        self.sums[(r1 + 1) * w1 + (c1 + 1)]
            - self.sums[r0 * w1 + (c1 + 1)]
            - self.sums[(r1 + 1) * w1 + c0]
            + self.sums[r0 * w1 + c0]
    }
}

/// Computes the deterministic per-pixel feature grid for an image.
pub fn extract_features(image: &GrayImage) -> FeatureGrid {
    let (h, w) = (image.height(), image.width());
    let sum = Integral::build(h, w, |i| image.data()[i] as f64);
    let sum_sq = Integral::build(h, w, |i| {
        let v = image.data()[i] as f64;
        v * v
    });

    let mut data = Vec::with_capacity(h * w * FEATURE_COUNT);
    let x_den = (w - 1).max(1) as f64;
    let y_den = (h - 1).max(1) as f64;
    for r in 0..h {
        for c in 0..w {
            data.push(image.get(r, c) as f64);
            for radius in BOX_RADII {
                let r0 = r.saturating_sub(radius);
                let c0 = c.saturating_sub(radius);
                let r1 = (r + radius).min(h - 1);
                let c1 = (c + radius).min(w - 1);
                let count = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
                let mean = sum.window(r0, c0, r1, c1) / count;
                let var = (sum_sq.window(r0, c0, r1, c1) / count - mean * mean).max(0.0);
                data.push(mean);
                data.push(var);
            }
            data.push(c as f64 / x_den);
            data.push(r as f64 / y_den);
        }
    }
    FeatureGrid {
        height: h,
        width: w,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_variance() {
        let img = GrayImage::new(6, 6, vec![0.5; 36]).unwrap();
        let f = extract_features(&img);
        for i in 0..f.pixel_count() {
            let px = f.pixel(i);
            assert_eq!(px[0], 0.5);
            for k in 0..3 {
                assert!((px[1 + 2 * k] - 0.5).abs() < 1e-12, "mean at radius {k}");
                assert!(px[2 + 2 * k].abs() < 1e-12, "variance at radius {k}");
            }
        }
    }

    #[test]
    fn bright_pixel_variance_is_local() {
        let mut data = vec![0.0f32; 81];
        data[4 * 9 + 4] = 1.0;
        let img = GrayImage::new(9, 9, data).unwrap();
        let f = extract_features(&img);
        // far corner: radius-4 window misses the bright pixel at (4,4)? it
        // reaches rows 0..=4 from row 0, so use radius-1 at the corner
        let corner = f.pixel(0);
        assert_eq!(corner[2], 0.0, "radius-1 variance at far corner");
        let center = f.pixel(4 * 9 + 4);
        assert!(center[2] > 0.0, "radius-1 variance at the bright pixel");
    }

    #[test]
    fn border_features_are_finite_and_coords_normalized() {
        let img = GrayImage::new(5, 7, (0..35).map(|i| i as f32 / 34.0).collect()).unwrap();
        let f = extract_features(&img);
        for i in 0..f.pixel_count() {
            let px = f.pixel(i);
            assert!(px.iter().all(|v| v.is_finite()));
            assert!((0.0..=1.0).contains(&px[7]), "x coord {}", px[7]);
            assert!((0.0..=1.0).contains(&px[8]), "y coord {}", px[8]);
        }
        assert_eq!(f.pixel(0)[7], 0.0);
        assert_eq!(f.pixel(6)[7], 1.0);
        assert_eq!(f.pixel(4 * 7)[8], 1.0);
    }

    #[test]
    fn box_mean_matches_direct_average() {
        let img = GrayImage::new(5, 5, (0..25).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let f = extract_features(&img);
        // pixel (2,2), radius 2 covers the whole 5x5 grid
        let mean: f64 = img.data().iter().map(|&v| v as f64).sum::<f64>() / 25.0;
        let px = f.pixel(2 * 5 + 2);
        assert!((px[3] - mean).abs() < 1e-12);
    }
}
