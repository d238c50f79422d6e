//! Per-epoch dynamics probe: prints the uncertainty trace alongside the
//! quality that relabeling *would* achieve at every epoch, and multi-seed
//! summaries of the overfitting/coincidence behavior. Tuning tool.
//!
//! Usage: cargo run --release --example dynamics -- key=value ...
//! keys: seeds (enables the summary mode), seed, corpus_seed, lr,
//!       epochs, dropout, batch, contrast, noise, train, test, size, n,
//!       delta, vertices, family (blob|ellipse), method (mcdo|de|tta)

use std::collections::BTreeMap;

use maskmend_core::corpus::{generate_corpus, ShapeFamily, SyntheticCorpusSpec};
use maskmend_core::ensemble::{
    de_ensemble_from_features, image_base_seed, mcdo_ensemble_from_features, tta_ensemble,
    Dihedral, Method,
};
use maskmend_core::features::extract_features;
use maskmend_core::learner::{mix_seed, PixelClassifier, TrainConfig};
use maskmend_core::metrics::dice;
use maskmend_core::noise::{corrupt, NoiseSpec};
use maskmend_core::relabel::{relabel, RelabelSpec};
use maskmend_core::uncertainty::aleatoric_map;

fn main() {
    let args: BTreeMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| {
            a.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect();
    let get = |k: &str, d: f64| -> f64 { args.get(k).map(|v| v.parse().unwrap()).unwrap_or(d) };

    let seeds = get("seeds", 1.0) as u64;
    if seeds > 1 {
        let mut summary = Vec::new();
        for s in 1..=seeds {
            summary.push(run_once(&args, s, s, true));
        }
        let c5 = summary.iter().filter(|v| v.overfit).count();
        let c7 = summary.iter().filter(|v| v.coincide).count();
        println!("# overfit: {c5}/{seeds}   argmin/argmax coincide: {c7}/{seeds}");
        for v in &summary {
            println!(
                "# seed {}: final dc {:.4} dn {:.4} | argminD {} argmaxDc {} | relab@5 {:.3} @6 {:.3} @7 {:.3} (before {:.3})",
                v.seed, v.final_dc, v.final_dn, v.argmin_delta, v.argmax_dc,
                v.relab[5.min(v.relab.len()-1)], v.relab[6.min(v.relab.len()-1)],
                v.relab[7.min(v.relab.len()-1)], v.mask_before
            );
        }
        return;
    }
    run_once(
        &args,
        get("corpus_seed", 1.0) as u64,
        get("seed", 1.0) as u64,
        false,
    );
}

struct Verdict {
    seed: u64,
    final_dc: f64,
    final_dn: f64,
    argmin_delta: usize,
    argmax_dc: usize,
    overfit: bool,
    coincide: bool,
    relab: Vec<f64>,
    mask_before: f64,
}

fn run_once(args: &BTreeMap<String, String>, corpus_seed: u64, seed: u64, quiet: bool) -> Verdict {
    let get = |k: &str, d: f64| -> f64 { args.get(k).map(|v| v.parse().unwrap()).unwrap_or(d) };

    let corpus_spec = SyntheticCorpusSpec {
        train_count: get("train", 48.0) as usize,
        test_count: get("test", 48.0) as usize,
        size: get("size", 32.0) as usize,
        family: match args.get("family").map(String::as_str) {
            Some("ellipse") => ShapeFamily::Ellipse,
            _ => ShapeFamily::Blob,
        },
        contrast: get("contrast", 0.6),
        noise_level: get("noise", 0.03),
        seed: corpus_seed,
    };
    let method = match args.get("method").map(String::as_str) {
        Some("de") => Method::De,
        Some("tta") => Method::Tta,
        _ => Method::Mcdo,
    };
    let n = get("n", 8.0) as usize;
    let train_cfg = TrainConfig {
        epochs: get("epochs", 12.0) as usize,
        learning_rate: get("lr", 0.1),
        batch_size: get("batch", 128.0) as usize,
        dropout_rate: get("dropout", 0.05),
        seed,
    };
    let delta = get("delta", 0.125);
    let noise_spec = NoiseSpec::polygon(get("vertices", 3.0) as usize).unwrap();
    let relabel_spec = RelabelSpec::new(delta, true).unwrap();

    let corpus = generate_corpus(&corpus_spec).unwrap();
    let noisy_train: Vec<_> = corpus
        .train
        .iter()
        .map(|it| corrupt(&it.clean_mask, &noise_spec).unwrap())
        .collect();
    let noisy_test: Vec<_> = corpus
        .test
        .iter()
        .map(|it| corrupt(&it.clean_mask, &noise_spec).unwrap())
        .collect();
    let mask_dice: f64 = noisy_train
        .iter()
        .zip(&corpus.train)
        .map(|(n, it)| dice(n, &it.clean_mask).unwrap())
        .sum::<f64>()
        / noisy_train.len() as f64;
    if !quiet {
        println!("# train-mask dice vs clean: {mask_dice:.4}");
    }

    let train_feats: Vec<_> = corpus
        .train
        .iter()
        .map(|it| extract_features(&it.image))
        .collect();
    let test_feats: Vec<_> = corpus
        .test
        .iter()
        .map(|it| extract_features(&it.image))
        .collect();

    let model_count = if method == Method::De { n } else { 1 };
    let mut models: Vec<PixelClassifier> = (0..model_count)
        .map(|i| {
            PixelClassifier::new(
                mix_seed(train_cfg.seed, 0xA11, i as u64),
                train_cfg.dropout_rate,
            )
            .unwrap()
        })
        .collect();

    if !quiet {
        println!("# epoch sigma_u delta d_clean d_noisy | relab_dice flip%");
    }
    let mut prev_sigma: Option<f64> = None;
    let mut dcs: Vec<f64> = Vec::new();
    let mut dns: Vec<f64> = Vec::new();
    let mut deltas: Vec<Option<f64>> = Vec::new();
    let mut relabs: Vec<f64> = vec![f64::NAN]; // index by epoch
    for epoch in 1..=train_cfg.epochs {
        for model in &mut models {
            model
                .train_epoch_on_features(&train_feats, &noisy_train, &train_cfg)
                .unwrap();
        }
        let umaps: Vec<_> = train_feats
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let ens = match method {
                    Method::Mcdo => {
                        mcdo_ensemble_from_features(&models[0], f, n, image_base_seed(0, epoch, i))
                            .unwrap()
                    }
                    Method::De => de_ensemble_from_features(&models, f).unwrap(),
                    Method::Tta => {
                        tta_ensemble(&models[0], &corpus.train[i].image, &Dihedral::ALL[..n])
                            .unwrap()
                    }
                };
                aleatoric_map(&ens)
            })
            .collect();
        let sigma: f64 = umaps.iter().map(|u| u.pixel_sum()).sum::<f64>() / umaps.len() as f64;
        let delta_rel = prev_sigma.map(|p| (sigma - p) / p);
        prev_sigma = Some(sigma);

        let (mut dc, mut dn) = (0.0, 0.0);
        for ((f, item), noisy) in test_feats.iter().zip(&corpus.test).zip(&noisy_test) {
            let pred = models[0].predict_features(f, false, 0).binarize(0.5);
            dc += dice(&pred, &item.clean_mask).unwrap();
            dn += dice(&pred, noisy).unwrap();
        }
        dc /= test_feats.len() as f64;
        dn /= test_feats.len() as f64;

        let mut relab_dice = 0.0;
        let mut flipped = 0usize;
        let mut total = 0usize;
        for ((noisy, umap), item) in noisy_train.iter().zip(&umaps).zip(&corpus.train) {
            let fixed = relabel(noisy, umap, &relabel_spec).unwrap();
            relab_dice += dice(&fixed, &item.clean_mask).unwrap();
            flipped += fixed
                .data()
                .iter()
                .zip(noisy.data())
                .filter(|(a, b)| a != b)
                .count();
            total += fixed.data().len();
        }
        relab_dice /= noisy_train.len() as f64;
        dcs.push(dc);
        dns.push(dn);
        deltas.push(delta_rel);
        relabs.push(relab_dice);

        if !quiet {
            println!(
                "{epoch:5} {sigma:8.3} {:9} {dc:.4} {dn:.4} | {relab_dice:.4} {:5.1}%",
                delta_rel
                    .map(|d| format!("{d:+.4}"))
                    .unwrap_or_else(|| "   --".into()),
                100.0 * flipped as f64 / total as f64,
            );
        }
    }

    let argmin_delta = deltas
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.map(|v| (i + 1, v)))
        .filter(|(e, _)| *e > 1)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(e, _)| e)
        .unwrap_or(0);
    let argmax_dc = dcs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i + 1)
        .unwrap_or(0);
    Verdict {
        seed,
        final_dc: *dcs.last().unwrap(),
        final_dn: *dns.last().unwrap(),
        argmin_delta,
        argmax_dc,
        overfit: dns.last().unwrap() > dcs.last().unwrap(),
        coincide: argmin_delta.abs_diff(argmax_dc) <= 1,
        relab: relabs,
        mask_before: mask_dice,
    }
}
