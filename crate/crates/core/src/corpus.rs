//! Synthetic image/mask corpus generation.
//!
//! Each image holds exactly one foreground object on a darker
//! background, with a soft one-pixel intensity edge and additive
//! Gaussian noise. Masks are computed analytically at pixel centers, so
//! they are independent of the rasterization code they later exercise.
//!
//! Two shape families: convex ellipses, and lobed blobs built from a
//! low-frequency radial perturbation. The blob profile keeps a dominant
//! third harmonic so that aggressive vertex reduction still covers most
//! of the object (the corruption bridges the lobe tips and cuts the
//! waists), which is what makes training on corrupted masks drift away
//! from the clean shapes gradually instead of collapsing at once.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, GrayImage};
use crate::manifest::{Manifest, ManifestEntry, Sample, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    Ellipse,
    Blob,
}

impl ShapeFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ellipse" => Ok(ShapeFamily::Ellipse),
            "blob" => Ok(ShapeFamily::Blob),
            other => Err(Error::Parameter(format!(
                "family must be ellipse or blob, got {other:?}"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ShapeFamily::Ellipse => "ellipse",
            ShapeFamily::Blob => "blob",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub size: usize,
    pub family: ShapeFamily,
    /// Foreground-background intensity gap in [0, 1].
    pub contrast: f64,
    /// Standard deviation of the additive Gaussian intensity noise.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        Self {
            train_count: 100,
            test_count: 20,
            size: 32,
            family: ShapeFamily::Blob,
            contrast: 0.6,
            noise_level: 0.03,
            seed: 0,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 || self.test_count == 0 {
            return Err(Error::Parameter("corpus counts must be >= 1".into()));
        }
        if self.size < 16 {
            return Err(Error::Parameter(format!(
                "grid size must be >= 16, got {}",
                self.size
            )));
        }
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(Error::Parameter(format!(
                "contrast must be in (0, 1], got {}",
                self.contrast
            )));
        }
        if self.noise_level < 0.0 || self.noise_level >= self.contrast {
            return Err(Error::Parameter(format!(
                "noise level {} must be >= 0 and below contrast {}",
                self.noise_level, self.contrast
            )));
        }
        Ok(())
    }
}

// Blob geometry: base radius range (fraction of grid), third-harmonic
// amplitude range, and lobe phase (center, jitter). The lobes are kept
// strong and the base radius small relative to the patch-feature radii
// so local statistics can tell lobe tips from the concave waists; the
// full-range phase keeps orientation random.
const BLOB_BASE: (f64, f64) = (0.14, 0.20);
const BLOB_AMP: (f64, f64) = (0.25, 0.35);
const BLOB_PHASE: (f64, f64) = (0.0, std::f64::consts::PI);

/// One star-convex object.
#[derive(Debug, Clone)]
enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        rot: f64,
    },
    Blob {
        cx: f64,
        cy: f64,
        base: f64,
        /// (amplitude, harmonic, phase)
        harmonics: [(f64, usize, f64); 1],
    },
}

impl Shape {
    fn sample(family: ShapeFamily, size: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = size as f64;
        let cx = rng.gen_range(0.45..0.55) * s;
        let cy = rng.gen_range(0.45..0.55) * s;
        match family {
            ShapeFamily::Ellipse => Shape::Ellipse {
                cx,
                cy,
                rx: rng.gen_range(0.18..0.30) * s,
                ry: rng.gen_range(0.18..0.30) * s,
                rot: rng.gen_range(0.0..std::f64::consts::PI),
            },
            ShapeFamily::Blob => Shape::Blob {
                cx,
                cy,
                base: rng.gen_range(BLOB_BASE.0..BLOB_BASE.1) * s,
                harmonics: [(
                    rng.gen_range(BLOB_AMP.0..BLOB_AMP.1),
                    3,
                    BLOB_PHASE.0 + rng.gen_range(-BLOB_PHASE.1..=BLOB_PHASE.1),
                )],
            },
        }
    }

    /// Signed distance proxy: positive inside, roughly in pixels.
    fn inside_depth(&self, x: f64, y: f64) -> f64 {
        match self {
            Shape::Ellipse {
                cx,
                cy,
                rx,
                ry,
                rot,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                let (cos, sin) = (rot.cos(), rot.sin());
                let u = dx * cos + dy * sin;
                let v = -dx * sin + dy * cos;
                let q = ((u / rx) * (u / rx) + (v / ry) * (v / ry)).sqrt();
                (1.0 - q) * rx.min(*ry)
            }
            Shape::Blob {
                cx,
                cy,
                base,
                harmonics,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                let r = dx.hypot(dy);
                let theta = dy.atan2(dx);
                let mut boundary = 1.0;
                for (amp, k, phase) in harmonics {
                    boundary += amp * ((*k as f64) * theta + phase).cos();
                }
                base * boundary - r
            }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.inside_depth(x, y) >= 0.0
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub image: GrayImage,
    pub clean_mask: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub train: Vec<CorpusItem>,
    pub test: Vec<CorpusItem>,
}

fn render_item(spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng) -> CorpusItem {
    let size = spec.size;
    let shape = Shape::sample(spec.family, size, rng);
    let clean_mask = BinaryMask::from_fn(size, size, |r, c| {
        shape.contains(c as f64 + 0.5, r as f64 + 0.5)
    });
    let bg = 0.5 - spec.contrast / 2.0;
    let noise = Normal::new(0.0, spec.noise_level.max(1e-12)).unwrap();
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let depth = shape.inside_depth(c as f64 + 0.5, r as f64 + 0.5);
            // soft edge roughly one pixel wide
            let coverage = 1.0 / (1.0 + (-2.5 * depth).exp());
            let mut v = bg + spec.contrast * coverage;
            if spec.noise_level > 0.0 {
                v += noise.sample(rng);
            }
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    CorpusItem {
        image: GrayImage::new(size, size, data).unwrap(),
        clean_mask,
    }
}

/// Deterministically generates the corpus for a spec.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let train = (0..spec.train_count)
        .map(|_| render_item(spec, &mut rng))
        .collect();
    let test = (0..spec.test_count)
        .map(|_| render_item(spec, &mut rng))
        .collect();
    Ok(Corpus { train, test })
}

/// Writes images and clean masks under `dir` and returns the manifest
/// (also saved as `dir/manifest.csv`). The noisy column starts out
/// pointing at the clean masks; mask corruption rewrites it.
pub fn generate_corpus_to_dir(
    spec: &SyntheticCorpusSpec,
    dir: impl AsRef<Path>,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    let corpus = generate_corpus(spec)?;
    for sub in ["images", "clean"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let mut entries = Vec::new();
    let mut write_split = |items: &[CorpusItem], split: Split, offset: usize| -> Result<()> {
        for (i, item) in items.iter().enumerate() {
            let stem = format!("{:04}.pgm", offset + i);
            let image = dir.join("images").join(&stem);
            let clean = dir.join("clean").join(&stem);
            crate::io::write_image(&item.image, &image)?;
            crate::io::write_mask(&item.clean_mask, &clean)?;
            entries.push(ManifestEntry {
                image,
                clean_mask: clean.clone(),
                noisy_mask: clean,
                split,
            });
        }
        Ok(())
    };
    write_split(&corpus.train, Split::Train, 0)?;
    write_split(&corpus.test, Split::Test, corpus.train.len())?;
    let manifest = Manifest::new(entries);
    manifest.save(dir.join("manifest.csv"))?;
    Ok(manifest)
}

/// View of a corpus item as a manifest sample (noisy = clean).
pub fn to_samples(items: &[CorpusItem]) -> Vec<Sample> {
    items
        .iter()
        .map(|it| Sample {
            image: it.image.clone(),
            clean_mask: it.clean_mask.clone(),
            noisy_mask: it.clean_mask.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_components(mask: &BinaryMask) -> usize {
        let (h, w) = (mask.height(), mask.width());
        let mut seen = vec![false; h * w];
        let mut count = 0;
        for start in 0..h * w {
            if mask.data()[start] == 0 || seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(idx) = stack.pop() {
                let (r, c) = (idx / w, idx % w);
                for (nr, nc) in [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ] {
                    if nr < h && nc < w {
                        let nidx = nr * w + nc;
                        if mask.data()[nidx] == 1 && !seen[nidx] {
                            seen[nidx] = true;
                            stack.push(nidx);
                        }
                    }
                }
            }
        }
        count
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SyntheticCorpusSpec {
            train_count: 4,
            test_count: 2,
            ..Default::default()
        };
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        for (x, y) in a.train.iter().zip(&b.train) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.clean_mask, y.clean_mask);
        }
    }

    #[test]
    fn zero_contrast_rejected() {
        let spec = SyntheticCorpusSpec {
            contrast: 0.0,
            ..Default::default()
        };
        assert!(generate_corpus(&spec).is_err());
    }

    #[test]
    fn noise_must_stay_below_contrast() {
        let spec = SyntheticCorpusSpec {
            contrast: 0.3,
            noise_level: 0.3,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn every_mask_is_one_connected_component() {
        for family in [ShapeFamily::Blob, ShapeFamily::Ellipse] {
            let spec = SyntheticCorpusSpec {
                train_count: 30,
                test_count: 8,
                family,
                seed: 5,
                ..Default::default()
            };
            let corpus = generate_corpus(&spec).unwrap();
            for item in corpus.train.iter().chain(&corpus.test) {
                assert_eq!(
                    count_components(&item.clean_mask),
                    1,
                    "family {family:?} produced a fragmented mask"
                );
                assert!(item.clean_mask.count_ones() > 20);
            }
        }
    }

    #[test]
    fn intensities_separate_fg_from_bg() {
        let spec = SyntheticCorpusSpec {
            train_count: 3,
            test_count: 1,
            noise_level: 0.0,
            ..Default::default()
        };
        let corpus = generate_corpus(&spec).unwrap();
        for item in &corpus.train {
            let mut fg = 0.0;
            let mut bg = 0.0;
            let (mut nfg, mut nbg) = (0.0, 0.0);
            for (i, &v) in item.image.data().iter().enumerate() {
                if item.clean_mask.data()[i] == 1 {
                    fg += v as f64;
                    nfg += 1.0;
                } else {
                    bg += v as f64;
                    nbg += 1.0;
                }
            }
            assert!(fg / nfg > bg / nbg + 0.3, "weak contrast");
        }
    }

    #[test]
    fn corpus_written_to_dir_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticCorpusSpec {
            train_count: 3,
            test_count: 2,
            ..Default::default()
        };
        generate_corpus_to_dir(&spec, dir.path()).unwrap();
        let manifest = Manifest::load(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.entries().len(), 5);
        let train = crate::manifest::load_split(&manifest, Split::Train).unwrap();
        assert_eq!(train.len(), 3);
        assert_eq!(train[0].image.height(), spec.size);
    }
}
