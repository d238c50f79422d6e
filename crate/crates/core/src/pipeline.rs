//! The end-to-end loop: train on noisy masks, track the mean cumulative
//! uncertainty per epoch, relabel every training mask once when the
//! online detector fires, then keep training on the repaired masks.
//!
//! Clean masks are never read by any training decision; they feed only
//! the Dice diagnostics. The online detector declares the minimum of
//! the relative uncertainty change once it has gone `patience` epochs
//! without improving; masks are rewritten at that confirmation epoch,
//! using its uncertainty maps. Runs are fully determined by the config.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::corpus::{generate_corpus, to_samples, SyntheticCorpusSpec};
use crate::ensemble::{
    de_ensemble_from_features, image_base_seed, mcdo_ensemble_from_features, tta_ensemble,
    Dihedral, EnsembleSpec, Method,
};
use crate::error::{Error, Result};
use crate::features::{extract_features, FeatureGrid};
use crate::grid::{BinaryMask, GrayImage, UncertaintyMap};
use crate::learner::{mix_seed, PixelClassifier, TrainConfig};
use crate::manifest::{load_split, Manifest, Sample, Split};
use crate::metrics::{dice, evaluate_predictions};
use crate::noise::{corrupt, NoiseSpec};
use crate::relabel::{relabel, RelabelSpec};
use crate::trace::{OnlineDetector, TrainingTrace};
use crate::uncertainty::{aleatoric_map, cumulative_uncertainty};

/// Where the pipeline's data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(SyntheticCorpusSpec),
    Manifest(std::path::PathBuf),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub source: DataSource,
    /// When set, overrides the noisy masks by corrupting the clean ones.
    pub noise: Option<NoiseSpec>,
    pub train: TrainConfig,
    pub ensemble: EnsembleSpec,
    pub relabel: RelabelSpec,
    pub warmup: usize,
    pub patience: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(SyntheticCorpusSpec::default()),
            noise: None,
            train: TrainConfig::default(),
            ensemble: EnsembleSpec::new(Method::Mcdo, 8, 0).unwrap(),
            relabel: RelabelSpec::default(),
            warmup: 1,
            patience: 2,
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub trace: TrainingTrace,
    /// Epoch at which training masks were rewritten (the detector's
    /// confirmation epoch; its uncertainty maps drive the flips).
    pub relabel_epoch: Option<usize>,
    /// Epoch holding the detected minimum of the relative change.
    pub detected_epoch: Option<usize>,
    /// Fraction of training pixels changed by relabeling.
    pub flipped_fraction: f64,
    pub relabeled_masks: Option<Vec<BinaryMask>>,
    pub final_d_clean: f64,
    pub final_d_noisy: f64,
    pub d_clean_at_relabel: Option<f64>,
    pub d_noisy_at_relabel: Option<f64>,
    /// Mean Dice of the training noisy masks against clean, before/after.
    pub train_mask_dice_before: f64,
    pub train_mask_dice_after: Option<f64>,
    pub models: Vec<PixelClassifier>,
    pub wall_seconds: f64,
}

impl PipelineOutcome {
    pub fn primary_model(&self) -> &PixelClassifier {
        &self.models[0]
    }
}

struct LoadedData {
    train: Vec<Sample>,
    test: Vec<Sample>,
}

fn load_data(cfg: &PipelineConfig) -> Result<LoadedData> {
    let mut data = match &cfg.source {
        DataSource::Synthetic(spec) => {
            let corpus = generate_corpus(spec)?;
            LoadedData {
                train: to_samples(&corpus.train),
                test: to_samples(&corpus.test),
            }
        }
        DataSource::Manifest(path) => {
            let manifest = Manifest::load(path)?;
            LoadedData {
                train: load_split(&manifest, Split::Train)?,
                test: load_split(&manifest, Split::Test)?,
            }
        }
    };
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::Parameter("both splits must be nonempty".into()));
    }
    if let Some(noise) = &cfg.noise {
        let corrupt_all = |samples: &mut Vec<Sample>| -> Result<()> {
            let noisy: Vec<BinaryMask> = samples
                .par_iter()
                .map(|s| corrupt(&s.clean_mask, noise))
                .collect::<Result<_>>()?;
            for (s, m) in samples.iter_mut().zip(noisy) {
                s.noisy_mask = m;
            }
            Ok(())
        };
        corrupt_all(&mut data.train)?;
        corrupt_all(&mut data.test)?;
    }
    Ok(data)
}

fn train_uncertainty_maps(
    cfg: &PipelineConfig,
    models: &[PixelClassifier],
    images: &[GrayImage],
    feats: &[FeatureGrid],
    epoch: usize,
) -> Result<Vec<UncertaintyMap>> {
    let spec = &cfg.ensemble;
    feats
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let ens = match spec.method {
                Method::Mcdo => mcdo_ensemble_from_features(
                    &models[0],
                    f,
                    spec.n,
                    image_base_seed(spec.base_seed, epoch, i),
                )?,
                Method::De => de_ensemble_from_features(models, f)?,
                Method::Tta => tta_ensemble(&models[0], &images[i], &Dihedral::ALL[..spec.n])?,
            };
            Ok(aleatoric_map(&ens))
        })
        .collect()
}

/// Runs the full loop. When the detector never fires within the epoch
/// budget the run completes without relabeling and reports that by
/// leaving `relabel_epoch` empty.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let started = Instant::now();
    cfg.train.validate()?;
    if cfg.ensemble.method == Method::De && cfg.ensemble.n < 2 {
        log::warn!("deep ensemble with n = 1 degenerates to a single model");
    }
    let data = load_data(cfg)?;

    let train_images: Vec<GrayImage> = data.train.iter().map(|s| s.image.clone()).collect();
    let train_feats: Vec<FeatureGrid> = train_images.par_iter().map(extract_features).collect();
    let test_feats: Vec<FeatureGrid> = data
        .test
        .par_iter()
        .map(|s| extract_features(&s.image))
        .collect();

    let mut noisy_train: Vec<BinaryMask> =
        data.train.iter().map(|s| s.noisy_mask.clone()).collect();
    let train_mask_dice_before = mean_dice_vs_clean(&noisy_train, &data.train)?;

    let model_count = if cfg.ensemble.method == Method::De {
        cfg.ensemble.n
    } else {
        1
    };
    let mut models: Vec<PixelClassifier> = (0..model_count)
        .map(|i| {
            PixelClassifier::new(
                mix_seed(cfg.train.seed, 0xA11, i as u64),
                cfg.train.dropout_rate,
            )
        })
        .collect::<Result<_>>()?;

    let mut trace = TrainingTrace::new();
    let mut detector = OnlineDetector::new(cfg.warmup, cfg.patience)?;
    let mut relabel_epoch = None;
    let mut detected_epoch = None;
    let mut flipped_fraction = 0.0;
    let mut relabeled_masks: Option<Vec<BinaryMask>> = None;
    let mut dice_at_relabel = None;

    for epoch in 1..=cfg.train.epochs {
        for model in &mut models {
            model.train_epoch_on_features(&train_feats, &noisy_train, &cfg.train)?;
        }

        let umaps = train_uncertainty_maps(cfg, &models, &train_images, &train_feats, epoch)?;
        let sigma = cumulative_uncertainty(&umaps)?;

        let preds: Vec<BinaryMask> = test_feats
            .par_iter()
            .map(|f| models[0].predict_features(f, false, 0).binarize(0.5))
            .collect();
        let (d_clean, d_noisy) = evaluate_predictions(&preds, &data.test)?;
        trace.push(epoch, sigma.sigma_u, Some(d_clean), Some(d_noisy))?;

        if relabel_epoch.is_none() {
            let delta = trace.records().last().unwrap().delta_sigma_u;
            if let Some(best_epoch) = detector.observe(epoch, delta) {
                let repaired: Vec<BinaryMask> = noisy_train
                    .par_iter()
                    .zip(&umaps)
                    .map(|(mask, umap)| relabel(mask, umap, &cfg.relabel))
                    .collect::<Result<_>>()?;
                let total: usize = repaired.iter().map(|m| m.data().len()).sum();
                let changed: usize = repaired
                    .iter()
                    .zip(&noisy_train)
                    .map(|(a, b)| {
                        a.data()
                            .iter()
                            .zip(b.data())
                            .filter(|(x, y)| x != y)
                            .count()
                    })
                    .sum();
                flipped_fraction = changed as f64 / total as f64;
                noisy_train = repaired.clone();
                relabeled_masks = Some(repaired);
                relabel_epoch = Some(epoch);
                detected_epoch = Some(best_epoch);
                dice_at_relabel = Some((d_clean, d_noisy));
            }
        }
    }

    let last = trace.records().last().expect("epochs >= 1");
    let train_mask_dice_after = relabeled_masks
        .as_ref()
        .map(|masks| mean_dice_vs_clean(masks, &data.train))
        .transpose()?;

    Ok(PipelineOutcome {
        final_d_clean: last.d_clean.unwrap(),
        final_d_noisy: last.d_noisy.unwrap(),
        trace,
        relabel_epoch,
        detected_epoch,
        flipped_fraction,
        relabeled_masks,
        d_clean_at_relabel: dice_at_relabel.map(|(c, _)| c),
        d_noisy_at_relabel: dice_at_relabel.map(|(_, n)| n),
        train_mask_dice_before,
        train_mask_dice_after,
        models,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn mean_dice_vs_clean(masks: &[BinaryMask], samples: &[Sample]) -> Result<f64> {
    let mut sum = 0.0;
    for (m, s) in masks.iter().zip(samples) {
        sum += dice(m, &s.clean_mask)?;
    }
    Ok(sum / masks.len() as f64)
}

// ---------------------------------------------------------------------------
// Method comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MethodRow {
    pub method: Method,
    pub final_d_clean: f64,
    pub final_d_noisy: f64,
    pub relabel_epoch: Option<usize>,
    pub wall_seconds: f64,
}

/// Runs the pipeline once per uncertainty method on the same data and
/// seeds, recording quality and wall-clock cost per method.
pub fn compare_methods(cfg: &PipelineConfig) -> Result<Vec<MethodRow>> {
    let mut rows = Vec::new();
    for method in [Method::Mcdo, Method::De, Method::Tta] {
        let mut run_cfg = cfg.clone();
        let n = if method == Method::Tta {
            cfg.ensemble.n.min(Dihedral::ALL.len())
        } else {
            cfg.ensemble.n
        };
        run_cfg.ensemble = EnsembleSpec::new(method, n, cfg.ensemble.base_seed)?;
        let outcome = run_pipeline(&run_cfg)?;
        rows.push(MethodRow {
            method,
            final_d_clean: outcome.final_d_clean,
            final_d_noisy: outcome.final_d_noisy,
            relabel_epoch: outcome.relabel_epoch,
            wall_seconds: outcome.wall_seconds,
        });
    }
    Ok(rows)
}

pub fn save_comparison_csv(rows: &[MethodRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
    w.write_record(["method", "d_clean", "d_noisy", "relabel_epoch", "seconds"])?;
    for r in rows {
        w.write_record([
            r.method.as_str().to_string(),
            r.final_d_clean.to_string(),
            r.final_d_noisy.to_string(),
            r.relabel_epoch.map(|e| e.to_string()).unwrap_or_default(),
            format!("{:.3}", r.wall_seconds),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

/// Writes `trace.csv`, `report.csv` and (when relabeling happened)
/// `relabeled/NNNN.pgm` under `dir`.
pub fn write_artifacts(outcome: &PipelineOutcome, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.trace.save_csv(dir.join("trace.csv"))?;

    let report = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&report)
        .map_err(|e| Error::Manifest(format!("{}: {e}", report.display())))?;
    w.write_record(["metric", "value"])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    let rows: Vec<(&str, String)> = vec![
        (
            "relabel_epoch",
            opt(outcome.relabel_epoch.map(|e| e.to_string())),
        ),
        (
            "detected_epoch",
            opt(outcome.detected_epoch.map(|e| e.to_string())),
        ),
        (
            "relabeling_performed",
            outcome.relabel_epoch.is_some().to_string(),
        ),
        ("flipped_fraction", outcome.flipped_fraction.to_string()),
        ("d_clean_final", outcome.final_d_clean.to_string()),
        ("d_noisy_final", outcome.final_d_noisy.to_string()),
        (
            "d_clean_at_relabel",
            opt(outcome.d_clean_at_relabel.map(|v| v.to_string())),
        ),
        (
            "d_noisy_at_relabel",
            opt(outcome.d_noisy_at_relabel.map(|v| v.to_string())),
        ),
        (
            "train_mask_dice_before",
            outcome.train_mask_dice_before.to_string(),
        ),
        (
            "train_mask_dice_after",
            opt(outcome.train_mask_dice_after.map(|v| v.to_string())),
        ),
    ];
    for (k, v) in rows {
        w.write_record([k, &v])?;
    }
    w.flush().map_err(|e| Error::io(&report, e))?;

    if let Some(masks) = &outcome.relabeled_masks {
        let sub = dir.join("relabeled");
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (i, m) in masks.iter().enumerate() {
            crate::io::write_mask(m, sub.join(format!("{i:04}.pgm")))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            source: DataSource::Synthetic(SyntheticCorpusSpec {
                train_count: 12,
                test_count: 6,
                seed: 3,
                ..Default::default()
            }),
            noise: Some(NoiseSpec::polygon(3).unwrap()),
            train: TrainConfig {
                epochs: 6,
                learning_rate: 0.4,
                batch_size: 256,
                dropout_rate: 0.1,
                seed: 1,
            },
            ensemble: EnsembleSpec::new(Method::Mcdo, 4, 11).unwrap(),
            relabel: RelabelSpec::default(),
            warmup: 1,
            patience: 2,
        }
    }

    #[test]
    fn single_epoch_budget_reports_no_relabeling() {
        let mut cfg = small_cfg();
        cfg.train.epochs = 1;
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.relabel_epoch, None);
        assert!(out.relabeled_masks.is_none());
        assert_eq!(out.flipped_fraction, 0.0);
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn trace_has_one_record_per_epoch_and_relabels_once() {
        let out = run_pipeline(&small_cfg()).unwrap();
        assert_eq!(out.trace.len(), 6);
        if let Some(e) = out.relabel_epoch {
            assert!(e > 1, "warmup 1 excludes the first epoch");
            assert!(out.detected_epoch.unwrap() <= e);
            assert!(out.relabeled_masks.is_some());
        }
    }

    #[test]
    fn determinism_bit_identical() {
        let a = run_pipeline(&small_cfg()).unwrap();
        let b = run_pipeline(&small_cfg()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.relabel_epoch, b.relabel_epoch);
        assert_eq!(a.relabeled_masks, b.relabeled_masks);
        assert_eq!(a.models[0].params(), b.models[0].params());
    }

    #[test]
    fn comparison_csv_gets_written() {
        let mut cfg = small_cfg();
        cfg.train.epochs = 2;
        cfg.ensemble = EnsembleSpec::new(Method::Mcdo, 2, 0).unwrap();
        let rows = compare_methods(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("comparison.csv");
        save_comparison_csv(&rows, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("method,d_clean,d_noisy,relabel_epoch,seconds"));
        assert!(text.contains("mcdo") && text.contains("de") && text.contains("tta"));
    }

    #[test]
    fn single_member_ensembles_still_run() {
        let mut cfg = small_cfg();
        cfg.train.epochs = 2;
        cfg.ensemble = EnsembleSpec::new(Method::Mcdo, 1, 0).unwrap();
        let rows = compare_methods(&cfg).unwrap();
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.final_d_clean)));
    }
}
