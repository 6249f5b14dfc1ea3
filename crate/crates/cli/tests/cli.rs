//! Integration tests driving the compiled binary over the bundled fixtures.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn tmpca(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmpca"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = tmpca(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(args: &[&str]) -> i32 {
    tmpca(args).status.code().expect("exit code")
}

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn fit_is_byte_deterministic_and_label_blind() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let data = path_str(&fx.join("spamlike_small.tsv"));
    let emb = path_str(&fx.join("embeddings_10d.txt"));

    let model_a = dir.path().join("a.tmpca");
    let model_b = dir.path().join("b.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&model_a),
    ]);
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&model_b),
    ]);
    assert_eq!(
        std::fs::read(&model_a).unwrap(),
        std::fs::read(&model_b).unwrap()
    );

    // Trash the label column: fitting is unsupervised, so the model bytes
    // must not move (the same file still trains a classifier elsewhere).
    let garbled: String = std::fs::read_to_string(fx.join("spamlike_small.tsv"))
        .unwrap()
        .lines()
        .map(|l| format!("7\t{}", l.split_once('\t').unwrap().1))
        .collect::<Vec<_>>()
        .join("\n");
    let garbled_path = dir.path().join("garbled.tsv");
    std::fs::write(&garbled_path, garbled + "\n").unwrap();
    let model_c = dir.path().join("c.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &path_str(&garbled_path),
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&model_c),
    ]);
    assert_eq!(
        std::fs::read(&model_a).unwrap(),
        std::fs::read(&model_c).unwrap()
    );
}

#[test]
fn prep_then_fit_matches_direct_fit() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let data = path_str(&fx.join("spamlike_small.tsv"));
    let emb = path_str(&fx.join("embeddings_10d.txt"));

    let prep = dir.path().join("prep.bin");
    run_ok(&[
        "prep",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&prep),
    ]);
    let from_prep = dir.path().join("from_prep.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &path_str(&prep),
        "--out",
        &path_str(&from_prep),
    ]);
    let direct = dir.path().join("direct.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&direct),
    ]);
    assert_eq!(
        std::fs::read(&from_prep).unwrap(),
        std::fs::read(&direct).unwrap()
    );
}

#[test]
fn transform_accepts_text_and_prepared_input_identically() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let data = path_str(&fx.join("spamlike_small.tsv"));
    let emb = path_str(&fx.join("embeddings_10d.txt"));

    let prep = dir.path().join("prep.bin");
    let model = dir.path().join("model.tmpca");
    run_ok(&[
        "prep",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&prep),
    ]);
    run_ok(&[
        "fit",
        "--data",
        &path_str(&prep),
        "--out",
        &path_str(&model),
    ]);

    let feats_text = dir.path().join("text.feats");
    let feats_prep = dir.path().join("prep.feats");
    run_ok(&[
        "transform",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&feats_text),
    ]);
    run_ok(&[
        "transform",
        "--data",
        &path_str(&prep),
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&feats_prep),
    ]);
    let a = std::fs::read(&feats_text).unwrap();
    let b = std::fs::read(&feats_prep).unwrap();
    assert_eq!(a.len(), b.len());
    // The prepared route reconstructs raw samples as centered + mean, so the
    // features agree to rounding; compare decoded values, not bytes.
    let decode = |bytes: &[u8]| -> Vec<f64> {
        bytes[20 + 4 * 200..bytes.len() - 4]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    for (x, y) in decode(&a).iter().zip(decode(&b).iter()) {
        assert!((x - y).abs() <= 1e-9);
    }
}

#[test]
fn all_pad_sample_transforms_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let emb = path_str(&fx.join("embeddings_10d.txt"));
    let data = path_str(&fx.join("spamlike_small.tsv"));

    let model = dir.path().join("model.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&model),
    ]);

    let padded = dir.path().join("pad.tsv");
    std::fs::write(&padded, "0\t\n1\tfree cash now\n").unwrap();
    let feats = dir.path().join("pad.feats");
    run_ok(&[
        "transform",
        "--data",
        &path_str(&padded),
        "--embeddings",
        &emb,
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&feats),
    ]);
    let bytes = std::fs::read(&feats).unwrap();
    let values: Vec<f64> = bytes[20 + 4 * 2..bytes.len() - 4]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    assert_eq!(values.len(), 20);
    assert!(values.iter().all(|v| v.is_finite()));
}

#[test]
fn classifier_commands_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let data = path_str(&fx.join("spamlike_small.tsv"));
    let emb = path_str(&fx.join("embeddings_10d.txt"));

    let model = dir.path().join("model.tmpca");
    let feats = dir.path().join("feats.bin");
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&model),
    ]);
    run_ok(&[
        "transform",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--model",
        &path_str(&model),
        "--out",
        &path_str(&feats),
    ]);
    let clf_a = dir.path().join("a.clf");
    let clf_b = dir.path().join("b.clf");
    for clf in [&clf_a, &clf_b] {
        run_ok(&[
            "classify-train",
            "--data",
            &path_str(&feats),
            "--seed",
            "11",
            "--out",
            &path_str(clf),
        ]);
    }
    assert_eq!(
        std::fs::read(&clf_a).unwrap(),
        std::fs::read(&clf_b).unwrap()
    );

    let metrics = dir.path().join("metrics.csv");
    run_ok(&[
        "classify-eval",
        "--data",
        &path_str(&feats),
        "--model",
        &path_str(&clf_a),
        "--out",
        &path_str(&metrics),
    ]);
    let text = std::fs::read_to_string(&metrics).unwrap();
    assert!(text.starts_with("accuracy,f1_macro\n"));
}

#[test]
fn diagnose_writes_the_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let data = path_str(&fx.join("spamlike_small.tsv"));
    let emb = path_str(&fx.join("embeddings_10d.txt"));

    let model = dir.path().join("model.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&model),
    ]);
    let out = dir.path().join("diag");
    run_ok(&[
        "diagnose",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--model",
        &path_str(&model),
        "--sigma",
        "1.0",
        "--out",
        &path_str(&out),
    ]);
    for file in ["energy.csv", "mi.csv", "cost.csv", "report.md"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let energy = std::fs::read_to_string(out.join("energy.csv")).unwrap();
    assert!(energy.starts_with("stage,tmpca_energy_fraction,pca_single_stage_fraction\n"));
    assert!(energy.lines().nth(1).unwrap().starts_with("0,1,"));
}

#[test]
fn bad_arguments_exit_2() {
    let fx = fixtures();
    let data = path_str(&fx.join("spamlike_small.tsv"));
    let emb = path_str(&fx.join("embeddings_10d.txt"));
    // Length 12 is not a power of 2; the message names the constraint.
    let out = tmpca(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "12",
        "--out",
        "/tmp/x.tmpca",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of fan-in"));

    // Text input without an embedding table.
    assert_eq!(
        exit_code(&["fit", "--data", &data, "--out", "/tmp/x.tmpca"]),
        2
    );
    // Unknown flag is a clap usage error.
    assert_eq!(exit_code(&["fit", "--bogus"]), 2);
}

#[test]
fn format_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let emb = path_str(&fx.join("embeddings_10d.txt"));
    let data = path_str(&fx.join("spamlike_small.tsv"));

    let bad_model = dir.path().join("bad.tmpca");
    std::fs::write(&bad_model, b"garbage").unwrap();
    assert_eq!(
        exit_code(&[
            "transform",
            "--data",
            &data,
            "--embeddings",
            &emb,
            "--model",
            &path_str(&bad_model),
            "--out",
            "/tmp/x.bin",
        ]),
        3
    );

    let bad_text = dir.path().join("bad.tsv");
    std::fs::write(&bad_text, "no tab separator here\n").unwrap();
    assert_eq!(
        exit_code(&[
            "fit",
            "--data",
            &path_str(&bad_text),
            "--embeddings",
            &emb,
            "--out",
            "/tmp/x.tmpca",
        ]),
        3
    );

    assert_eq!(
        exit_code(&[
            "classify-eval",
            "--data",
            "/nonexistent.bin",
            "--model",
            "/nonexistent.clf"
        ]),
        3
    );
}

#[test]
fn expand_requires_fan_in_two() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let data = path_str(&fx.join("spamlike_small.tsv"));
    let emb = path_str(&fx.join("embeddings_10d.txt"));

    let model = dir.path().join("p4.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "16",
        "--p",
        "4",
        "--out",
        &path_str(&model),
    ]);
    let out = tmpca(&[
        "expand",
        "--model",
        &path_str(&model),
        "--out",
        "/tmp/x.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported configuration"));

    let model2 = dir.path().join("p2.tmpca");
    run_ok(&[
        "fit",
        "--data",
        &data,
        "--embeddings",
        &emb,
        "--n",
        "8",
        "--out",
        &path_str(&model2),
    ]);
    let csv = dir.path().join("closed.csv");
    run_ok(&[
        "expand",
        "--model",
        &path_str(&model2),
        "--out",
        &path_str(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 80);
}
