//! Drives the compiled `maskmend` binary through the full command
//! surface on a tiny corpus, checking the wire formats end to end.

use std::path::Path;
use std::process::Command;

fn maskmend(args: &[&str], cwd: &Path) -> (bool, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_maskmend"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs");
    let text = format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    (out.status.success(), text)
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let (success, text) = maskmend(args, cwd);
    assert!(success, "maskmend {args:?} failed:\n{text}");
    text
}

#[test]
fn full_command_surface() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // generate a small corpus
    ok(
        &[
            "generate",
            "--out",
            "corpus",
            "--train-count",
            "8",
            "--test-count",
            "4",
            "--size",
            "32",
            "--seed",
            "5",
        ],
        root,
    );
    assert!(root.join("corpus/manifest.csv").is_file());
    assert!(root.join("corpus/images/0000.pgm").is_file());

    // corrupt the clean masks
    ok(
        &[
            "synth",
            "--kind",
            "polygon",
            "--vertices",
            "3",
            "--in",
            "corpus/manifest.csv",
            "--out",
            "noisy",
        ],
        root,
    );
    assert!(root.join("noisy/manifest.csv").is_file());
    assert!(root.join("noisy/noisy/0000.pgm").is_file());

    // smooth variant also works
    ok(
        &[
            "synth",
            "--kind",
            "smooth",
            "--vertices",
            "5",
            "--samples",
            "6",
            "--in",
            "corpus/manifest.csv",
            "--out",
            "noisy-smooth",
        ],
        root,
    );

    // train on the noisy manifest
    let train_out = ok(
        &[
            "train",
            "--manifest",
            "noisy/manifest.csv",
            "--epochs",
            "3",
            "--lr",
            "0.1",
            "--batch",
            "128",
            "--dropout",
            "0.1",
            "--seed",
            "3",
            "--out",
            "model.bin",
        ],
        root,
    );
    assert!(train_out.contains("epoch 3"));
    assert!(root.join("model.bin").is_file());

    // build one ensemble per method
    for (method, model_arg) in [
        ("mcdo", "model.bin"),
        ("de", "model.bin,model.bin"),
        ("tta", "model.bin"),
    ] {
        ok(
            &[
                "ensemble",
                "--method",
                method,
                "-n",
                "4",
                "--model",
                model_arg,
                "--image",
                "corpus/images/0000.pgm",
                "--seed",
                "9",
                "--out",
                &format!("{method}.uens"),
            ],
            root,
        );
        assert!(root.join(format!("{method}.uens")).is_file());
    }

    // uens header sanity: magic + version + member count
    let bytes = std::fs::read(root.join("mcdo.uens")).unwrap();
    assert_eq!(&bytes[0..4], b"UENS");
    assert_eq!(bytes[4], 0x01);
    assert_eq!(u32::from_le_bytes(bytes[5..9].try_into().unwrap()), 4);

    // uncertainty map from the ensemble
    ok(
        &["uncertainty", "--ens", "mcdo.uens", "--out", "umap.f32"],
        root,
    );
    let umap_bytes = std::fs::read(root.join("umap.f32")).unwrap();
    assert_eq!(u32::from_le_bytes(umap_bytes[5..9].try_into().unwrap()), 1);
    ok(
        &[
            "uncertainty",
            "--ens",
            "mcdo.uens",
            "--epistemic",
            "--out",
            "emap.f32",
        ],
        root,
    );

    // relabel one noisy mask with the map
    let relabel_out = ok(
        &[
            "relabel",
            "--noisy",
            "noisy/noisy/0000.pgm",
            "--umap",
            "umap.f32",
            "--delta",
            "0.125",
            "--out",
            "fixed.pgm",
        ],
        root,
    );
    assert!(relabel_out.contains("relabeled"));
    assert!(root.join("fixed.pgm").is_file());
    ok(
        &[
            "relabel",
            "--noisy",
            "noisy/noisy/0000.pgm",
            "--umap",
            "umap.f32",
            "--no-fill",
            "--out",
            "fixed-nofill.pgm",
        ],
        root,
    );

    // evaluate the model on the test split
    let eval_out = ok(
        &[
            "eval",
            "--manifest",
            "noisy/manifest.csv",
            "--model",
            "model.bin",
        ],
        root,
    );
    let mut lines = eval_out.lines();
    assert_eq!(lines.next(), Some("d_clean,d_noisy"));
    let row = lines.next().unwrap();
    let fields: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(fields.len(), 2);
    assert!(fields.iter().all(|v| (0.0..=1.0).contains(v)));

    // full pipeline with a config file; CLI flags override file values
    std::fs::write(
        root.join("run.cfg"),
        "# experiment settings\n\
         train_count = 10\n\
         test_count = 6\n\
         size = 32\n\
         corpus_seed = 5\n\
         noise_kind = polygon\n\
         vertices = 3\n\
         epochs = 5\n\
         lr = 0.1\n\
         batch = 128\n\
         dropout = 0.05\n\
         seed = 5\n\
         warmup = 1\n\
         patience = 2\n\
         out = from-config\n",
    )
    .unwrap();
    let pipe_out = ok(
        &[
            "pipeline", "--config", "run.cfg", "--out", "run-out", "--epochs", "4",
        ],
        root,
    );
    assert!(pipe_out.contains("final d_clean"));
    // the --out flag overrode the config's out key
    assert!(root.join("run-out/trace.csv").is_file());
    assert!(!root.join("from-config").exists());
    let trace = std::fs::read_to_string(root.join("run-out/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 5, "--epochs 4 overrides epochs = 5");

    // detect-epoch on the emitted trace
    let detect_out = ok(
        &[
            "detect-epoch",
            "--trace",
            "run-out/trace.csv",
            "--warmup",
            "1",
        ],
        root,
    );
    let epoch: usize = detect_out.trim().parse().expect("plain epoch number");
    assert!(epoch >= 2);

    // method comparison
    ok(
        &[
            "compare",
            "--config",
            "run.cfg",
            "--epochs",
            "3",
            "--ensemble-n",
            "2",
            "--out",
            "cmp-out",
        ],
        root,
    );
    let cmp = std::fs::read_to_string(root.join("cmp-out/comparison.csv")).unwrap();
    assert!(cmp.starts_with("method,d_clean,d_noisy,relabel_epoch,seconds"));
    assert_eq!(cmp.lines().count(), 4);
}

#[test]
fn errors_are_clean() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let (success, text) = maskmend(&["detect-epoch", "--trace", "missing.csv"], root);
    assert!(!success);
    assert!(text.contains("missing.csv"));

    std::fs::write(root.join("bad.pgm"), b"P5\n4 4\n255\n\x00").unwrap();
    let (success, text) = maskmend(
        &[
            "relabel", "--noisy", "bad.pgm", "--umap", "bad.pgm", "--out", "x.pgm",
        ],
        root,
    );
    assert!(!success);
    assert!(text.contains("payload shorter"), "got: {text}");
}
