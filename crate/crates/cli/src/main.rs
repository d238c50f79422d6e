//! `maskmend`: synthesize noisy masks, train the reference learner,
//! build prediction ensembles, compute uncertainty maps, relabel masks,
//! and run the full detection-and-relabeling pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use maskmend_core::corpus::{generate_corpus_to_dir, ShapeFamily, SyntheticCorpusSpec};
use maskmend_core::ensemble::{
    de_ensemble, mcdo_ensemble, tta_ensemble, Dihedral, EnsembleSpec, Method,
};
use maskmend_core::io;
use maskmend_core::learner::{PixelClassifier, TrainConfig};
use maskmend_core::manifest::{load_split, Manifest, ManifestEntry, Split};
use maskmend_core::metrics::evaluate_model;
use maskmend_core::noise::{corrupt, NoiseKind, NoiseSpec};
use maskmend_core::pipeline::{
    compare_methods, run_pipeline, save_comparison_csv, write_artifacts, DataSource, PipelineConfig,
};
use maskmend_core::relabel::{relabel, RelabelSpec};
use maskmend_core::trace::{detect_relabel_epoch, TrainingTrace};

#[derive(Parser)]
#[command(
    name = "maskmend",
    version,
    about = "Noisy segmentation mask detection and relabeling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic image/mask corpus with a manifest.
    Generate(GenerateArgs),
    /// Corrupt the clean masks of a manifest into noisy annotations.
    Synth(SynthArgs),
    /// Train the reference learner on a manifest's noisy training masks.
    Train(TrainArgs),
    /// Build a prediction ensemble for one image.
    Ensemble(EnsembleArgs),
    /// Reduce an ensemble to a per-pixel uncertainty map.
    Uncertainty(UncertaintyArgs),
    /// Flip high-uncertainty labels of a noisy mask and fill holes.
    Relabel(RelabelArgs),
    /// Pick the relabeling epoch from a training trace.
    DetectEpoch(DetectEpochArgs),
    /// Evaluate a model on a manifest's test split.
    Eval(EvalArgs),
    /// Run the full train / monitor / relabel / continue loop.
    Pipeline(PipelineArgs),
    /// Run the pipeline once per uncertainty method and compare.
    Compare(PipelineArgs),
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Generate(args) => cmd_generate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Train(args) => cmd_train(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Uncertainty(args) => cmd_uncertainty(args),
        Command::Relabel(args) => cmd_relabel(args),
        Command::DetectEpoch(args) => cmd_detect_epoch(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct GenerateArgs {
    /// Output directory (images/, clean/, manifest.csv).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    train_count: usize,
    #[arg(long, default_value_t = 20)]
    test_count: usize,
    /// Square grid size in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Shape family: blob or ellipse.
    #[arg(long, default_value = "blob")]
    family: String,
    #[arg(long, default_value_t = 0.6)]
    contrast: f64,
    #[arg(long, default_value_t = 0.03)]
    noise_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let spec = SyntheticCorpusSpec {
        train_count: args.train_count,
        test_count: args.test_count,
        size: args.size,
        family: ShapeFamily::parse(&args.family)?,
        contrast: args.contrast,
        noise_level: args.noise_level,
        seed: args.seed,
    };
    generate_corpus_to_dir(&spec, &args.out)?;
    println!(
        "wrote {} train + {} test items under {}",
        spec.train_count,
        spec.test_count,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SynthArgs {
    /// Noise kind: polygon or smooth.
    #[arg(long)]
    kind: String,
    /// Target vertex count after boundary reduction.
    #[arg(long)]
    vertices: usize,
    /// Curve samples per segment (smooth kind only).
    #[arg(long, default_value_t = 8)]
    samples: usize,
    /// Input manifest.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory (noisy masks + updated manifest).
    #[arg(long)]
    out: PathBuf,
}

fn parse_noise(kind: &str, vertices: usize, samples: usize) -> Result<NoiseSpec> {
    let kind = match kind {
        "polygon" => NoiseKind::Polygon,
        "smooth" => NoiseKind::Smooth,
        other => bail!("noise kind must be polygon or smooth, got {other:?}"),
    };
    Ok(NoiseSpec::new(kind, vertices, samples)?)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = parse_noise(&args.kind, args.vertices, args.samples)?;
    let manifest = Manifest::load(&args.input)?;
    let noisy_dir = args.out.join("noisy");
    std::fs::create_dir_all(&noisy_dir)
        .with_context(|| format!("creating {}", noisy_dir.display()))?;
    let mut entries = Vec::new();
    for (i, entry) in manifest.entries().iter().enumerate() {
        let clean = io::read_mask(&entry.clean_mask)?;
        let noisy = corrupt(&clean, &spec)?;
        let path = noisy_dir.join(format!("{i:04}.pgm"));
        io::write_mask(&noisy, &path)?;
        entries.push(ManifestEntry {
            image: entry.image.clone(),
            clean_mask: entry.clean_mask.clone(),
            noisy_mask: path,
            split: entry.split,
        });
    }
    let out_manifest = args.out.join("manifest.csv");
    Manifest::new(entries).save(&out_manifest)?;
    println!("wrote noisy masks and {}", out_manifest.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 12)]
    epochs: usize,
    #[arg(long, default_value_t = 0.3)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let train = load_split(&manifest, Split::Train)?;
    let data: Vec<_> = train.into_iter().map(|s| (s.image, s.noisy_mask)).collect();
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch,
        dropout_rate: args.dropout,
        seed: args.seed,
    };
    cfg.validate()?;
    let mut model = PixelClassifier::new(args.seed, args.dropout)?;
    for epoch in 1..=cfg.epochs {
        let loss = model.train_epoch(&data, &cfg)?;
        println!("epoch {epoch}: loss {loss:.6}");
    }
    model.save(&args.out)?;
    println!("saved model to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// ensemble
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EnsembleArgs {
    /// Uncertainty method: mcdo, de or tta.
    #[arg(long)]
    method: String,
    #[arg(short = 'n', long = "members", default_value_t = 8)]
    n: usize,
    /// Model file; for de, a comma-separated list.
    #[arg(long)]
    model: String,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_ensemble(args: EnsembleArgs) -> Result<()> {
    let method = Method::parse(&args.method)?;
    let spec = EnsembleSpec::new(method, args.n, args.seed)?;
    let image = io::read_image(&args.image)?;
    let models: Vec<PixelClassifier> = args
        .model
        .split(',')
        .map(|p| PixelClassifier::load(p.trim()).map_err(anyhow::Error::from))
        .collect::<Result<_>>()?;
    let ens = match method {
        Method::Mcdo => mcdo_ensemble(&models[0], &image, spec.n, spec.base_seed)?,
        Method::De => de_ensemble(&models, &image)?,
        Method::Tta => tta_ensemble(&models[0], &image, &Dihedral::ALL[..spec.n])?,
    };
    io::write_ensemble(&ens, &args.out)?;
    println!(
        "wrote {}-member ensemble to {}",
        ens.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// uncertainty
// ---------------------------------------------------------------------------

#[derive(Args)]
struct UncertaintyArgs {
    #[arg(long)]
    ens: PathBuf,
    /// Emit the between-member variance instead of the aleatoric map.
    #[arg(long)]
    epistemic: bool,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_uncertainty(args: UncertaintyArgs) -> Result<()> {
    let ens = io::read_ensemble(&args.ens)?;
    let map = if args.epistemic {
        maskmend_core::uncertainty::epistemic_map(&ens)
    } else {
        maskmend_core::uncertainty::aleatoric_map(&ens)
    };
    io::write_uncertainty_map(&map, &args.out)?;
    println!("wrote uncertainty map to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// relabel
// ---------------------------------------------------------------------------

#[derive(Args)]
struct RelabelArgs {
    #[arg(long)]
    noisy: PathBuf,
    #[arg(long)]
    umap: PathBuf,
    #[arg(long, default_value_t = RelabelSpec::DEFAULT_DELTA)]
    delta: f64,
    /// Skip morphological hole filling after flipping.
    #[arg(long)]
    no_fill: bool,
    #[arg(long)]
    out: PathBuf,
}

fn cmd_relabel(args: RelabelArgs) -> Result<()> {
    let noisy = io::read_mask(&args.noisy)?;
    let umap = io::read_uncertainty_map(&args.umap)?;
    let spec = RelabelSpec::new(args.delta, !args.no_fill)?;
    let out = relabel(&noisy, &umap, &spec)?;
    let flipped = out
        .data()
        .iter()
        .zip(noisy.data())
        .filter(|(a, b)| a != b)
        .count();
    io::write_mask(&out, &args.out)?;
    println!(
        "relabeled {} of {} pixels ({:.2}%), wrote {}",
        flipped,
        out.data().len(),
        100.0 * flipped as f64 / out.data().len() as f64,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// detect-epoch
// ---------------------------------------------------------------------------

#[derive(Args)]
struct DetectEpochArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
}

fn cmd_detect_epoch(args: DetectEpochArgs) -> Result<()> {
    let trace = TrainingTrace::load_csv(&args.trace)?;
    let epoch = detect_relabel_epoch(&trace, args.warmup)?;
    println!("{epoch}");
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let manifest = Manifest::load(&args.manifest)?;
    let test = load_split(&manifest, Split::Test)?;
    let model = PixelClassifier::load(&args.model)?;
    let (d_clean, d_noisy) = evaluate_model(&model, &test, 0.5)?;
    println!("d_clean,d_noisy");
    println!("{d_clean},{d_noisy}");
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline / compare
// ---------------------------------------------------------------------------

/// Every flag mirrors a config-file key (same name, `key = value`); a
/// flag given on the command line overrides the file.
#[derive(Args)]
struct PipelineArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest; omit to use a synthetic corpus.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    train_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    contrast: Option<f64>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    corpus_seed: Option<u64>,
    /// Mask corruption kind (polygon or smooth); omit to train on the
    /// manifest's noisy masks as-is.
    #[arg(long)]
    noise_kind: Option<String>,
    #[arg(long)]
    vertices: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    ensemble_n: Option<usize>,
    #[arg(long)]
    ensemble_seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    no_fill: Option<bool>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Output directory for trace.csv, report.csv, relabeled masks.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value", path.display(), lineno + 1);
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

struct Settings {
    map: BTreeMap<String, String>,
    base: PathBuf,
}

impl Settings {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key} = {raw:?}: {e}")),
        }
    }

    fn get_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.map.get(key).map(|raw| {
            let p = PathBuf::from(raw);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }
}

fn merge_settings(args: &PipelineArgs) -> Result<Settings> {
    let mut map = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let base = args
        .config
        .as_ref()
        .and_then(|p| p.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut set = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            map.insert(key.to_string(), v);
        }
    };
    set(
        "manifest",
        args.manifest.as_ref().map(|p| p.display().to_string()),
    );
    set("train_count", args.train_count.map(|v| v.to_string()));
    set("test_count", args.test_count.map(|v| v.to_string()));
    set("size", args.size.map(|v| v.to_string()));
    set("family", args.family.clone());
    set("contrast", args.contrast.map(|v| v.to_string()));
    set("noise_level", args.noise_level.map(|v| v.to_string()));
    set("corpus_seed", args.corpus_seed.map(|v| v.to_string()));
    set("noise_kind", args.noise_kind.clone());
    set("vertices", args.vertices.map(|v| v.to_string()));
    set("samples", args.samples.map(|v| v.to_string()));
    set("epochs", args.epochs.map(|v| v.to_string()));
    set("lr", args.lr.map(|v| v.to_string()));
    set("batch", args.batch.map(|v| v.to_string()));
    set("dropout", args.dropout.map(|v| v.to_string()));
    set("seed", args.seed.map(|v| v.to_string()));
    set("method", args.method.clone());
    set("ensemble_n", args.ensemble_n.map(|v| v.to_string()));
    set("ensemble_seed", args.ensemble_seed.map(|v| v.to_string()));
    set("delta", args.delta.map(|v| v.to_string()));
    set("no_fill", args.no_fill.map(|v| v.to_string()));
    set("warmup", args.warmup.map(|v| v.to_string()));
    set("patience", args.patience.map(|v| v.to_string()));
    set("out", args.out.as_ref().map(|p| p.display().to_string()));
    // CLI paths are relative to the working directory, not the config
    if let Some(m) = &args.manifest {
        map.insert(
            "manifest".into(),
            m.canonicalize().unwrap_or(m.clone()).display().to_string(),
        );
    }
    if let Some(o) = &args.out {
        map.insert("out".into(), o.display().to_string());
    }
    Ok(Settings { map, base })
}

fn build_pipeline_config(settings: &Settings) -> Result<(PipelineConfig, PathBuf)> {
    let defaults = PipelineConfig::default();

    let corpus_defaults = SyntheticCorpusSpec::default();
    let source = match settings.path("manifest") {
        Some(path) => DataSource::Manifest(path),
        None => DataSource::Synthetic(SyntheticCorpusSpec {
            train_count: settings.get_or("train_count", corpus_defaults.train_count)?,
            test_count: settings.get_or("test_count", corpus_defaults.test_count)?,
            size: settings.get_or("size", corpus_defaults.size)?,
            family: ShapeFamily::parse(&settings.get_or("family", "blob".to_string())?)?,
            contrast: settings.get_or("contrast", corpus_defaults.contrast)?,
            noise_level: settings.get_or("noise_level", corpus_defaults.noise_level)?,
            seed: settings.get_or("corpus_seed", corpus_defaults.seed)?,
        }),
    };

    let noise = match settings.get::<String>("noise_kind")? {
        None => None,
        Some(kind) => Some(parse_noise(
            &kind,
            settings.get_or("vertices", 3)?,
            settings.get_or("samples", 8)?,
        )?),
    };

    let train = TrainConfig {
        epochs: settings.get_or("epochs", defaults.train.epochs)?,
        learning_rate: settings.get_or("lr", defaults.train.learning_rate)?,
        batch_size: settings.get_or("batch", defaults.train.batch_size)?,
        dropout_rate: settings.get_or("dropout", defaults.train.dropout_rate)?,
        seed: settings.get_or("seed", defaults.train.seed)?,
    };

    let ensemble = EnsembleSpec::new(
        Method::parse(&settings.get_or("method", "mcdo".to_string())?)?,
        settings.get_or("ensemble_n", defaults.ensemble.n)?,
        settings.get_or("ensemble_seed", defaults.ensemble.base_seed)?,
    )?;

    let relabel = RelabelSpec::new(
        settings.get_or("delta", RelabelSpec::DEFAULT_DELTA)?,
        !settings.get_or("no_fill", false)?,
    )?;

    let cfg = PipelineConfig {
        source,
        noise,
        train,
        ensemble,
        relabel,
        warmup: settings.get_or("warmup", defaults.warmup)?,
        patience: settings.get_or("patience", defaults.patience)?,
    };
    let out = settings
        .path("out")
        .unwrap_or_else(|| PathBuf::from("maskmend-out"));
    Ok((cfg, out))
}

fn cmd_pipeline(args: PipelineArgs) -> Result<()> {
    let settings = merge_settings(&args)?;
    let (cfg, out) = build_pipeline_config(&settings)?;
    let outcome = run_pipeline(&cfg)?;
    write_artifacts(&outcome, &out)?;
    match outcome.relabel_epoch {
        Some(epoch) => println!(
            "relabeled at epoch {epoch} (detected minimum at {}), flipped {:.2}% of training pixels",
            outcome.detected_epoch.unwrap(),
            100.0 * outcome.flipped_fraction
        ),
        None => println!("no relabeling performed (detector never fired within the budget)"),
    }
    println!(
        "final d_clean {:.4}, d_noisy {:.4}; artifacts in {}",
        outcome.final_d_clean,
        outcome.final_d_noisy,
        out.display()
    );
    Ok(())
}

fn cmd_compare(args: PipelineArgs) -> Result<()> {
    let settings = merge_settings(&args)?;
    let (cfg, out) = build_pipeline_config(&settings)?;
    let rows = compare_methods(&cfg)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("comparison.csv");
    save_comparison_csv(&rows, &path)?;
    for row in &rows {
        println!(
            "{}: d_clean {:.4}, d_noisy {:.4}, relabel epoch {}, {:.1}s",
            row.method.as_str(),
            row.final_d_clean,
            row.final_d_noisy,
            row.relabel_epoch
                .map(|e| e.to_string())
                .unwrap_or_else(|| "-".into()),
            row.wall_seconds
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}
