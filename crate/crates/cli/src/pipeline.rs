//! Command implementations wiring the library modules end to end.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use tmpca_core::classifier::{self, DenseParams, FeatureSet, TrainConfig};
use tmpca_core::diagnostics::{
    self, render_bench_medians_csv, render_bench_variances_csv, render_cost_csv, render_energy_csv,
    render_markdown, render_mi_csv, BenchConfig, BenchFixture, FixtureKind,
};
use tmpca_core::linalg::Matrix;
use tmpca_core::seqprep::{load_stopwords, Dataset, EmbeddingTable, PrepOptions};
use tmpca_core::tmpca::{stage_count_for, TmpcaModel};
use tmpca_core::{Error, Result};

use crate::Command;

/// A dataset in raw (uncentered) form, ready for model-mean centering.
struct RawData {
    matrices: Vec<Matrix>,
    labels: Vec<usize>,
    class_count: usize,
}

fn read_stopwords(path: &Option<PathBuf>) -> Result<Option<HashSet<String>>> {
    path.as_ref().map(load_stopwords).transpose()
}

fn load_text_dataset(
    data: &Path,
    embeddings: &Option<PathBuf>,
    stopwords: &Option<PathBuf>,
    bigram: bool,
    n: usize,
) -> Result<Dataset> {
    let table_path = embeddings.as_ref().ok_or_else(|| {
        Error::InvalidInput("--embeddings is required for text dataset input".to_string())
    })?;
    let table = EmbeddingTable::load(table_path)?;
    let stop = read_stopwords(stopwords)?;
    Dataset::from_text_file(
        data,
        &table,
        stop.as_ref(),
        &PrepOptions {
            target_len: n,
            bigram,
        },
    )
}

/// Loads either a text dataset (prepared on the fly, left uncentered) or a
/// prepared binary (un-centered by adding its stored mean back), yielding raw
/// sequences plus labels.
fn load_raw(
    data: &Path,
    embeddings: &Option<PathBuf>,
    stopwords: &Option<PathBuf>,
    bigram: bool,
    n: usize,
) -> Result<RawData> {
    if Dataset::is_prepared_file(data)? {
        let ds = Dataset::load_prepared(data)?;
        let mean = ds.mean.clone().expect("prepared files always store a mean");
        let rows = ds.seq_len();
        let cols = ds.element_dim();
        let matrices = ds
            .samples
            .iter()
            .map(|s| {
                let raw: Vec<f64> = s
                    .matrix
                    .as_slice()
                    .iter()
                    .zip(&mean)
                    .map(|(v, m)| v + m)
                    .collect();
                Matrix::from_vec(rows, cols, raw)
            })
            .collect::<Result<_>>()?;
        Ok(RawData {
            matrices,
            labels: ds.labels(),
            class_count: ds.class_count,
        })
    } else {
        let ds = load_text_dataset(data, embeddings, stopwords, bigram, n)?;
        Ok(RawData {
            matrices: ds.matrices(),
            labels: ds.labels(),
            class_count: ds.class_count,
        })
    }
}

fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Prep {
            data,
            embeddings,
            stopwords,
            bigram,
            n,
            out,
        } => {
            let mut ds = load_text_dataset(&data, &Some(embeddings), &stopwords, bigram, n)?;
            ds.center()?;
            ds.save_prepared(&out)?;
            println!(
                "prep: {} samples, N={}, D={}, {} classes -> {}",
                ds.samples.len(),
                ds.seq_len(),
                ds.element_dim(),
                ds.class_count,
                out.display()
            );
        }
        Command::Fit {
            data,
            embeddings,
            stopwords,
            bigram,
            n,
            p,
            out,
        } => {
            // Validate the length/fan-in relation before any heavy lifting.
            stage_count_for(n, p)?;
            let (matrices, mean) = if Dataset::is_prepared_file(&data)? {
                let ds = Dataset::load_prepared(&data)?;
                let mean = ds.mean.clone().expect("prepared files always store a mean");
                (ds.matrices(), mean)
            } else {
                let mut ds = load_text_dataset(&data, &embeddings, &stopwords, bigram, n)?;
                let mean = ds.center()?;
                (ds.matrices(), mean)
            };
            let model = TmpcaModel::fit(&matrices, p)?.with_dataset_mean(mean)?;
            model.save(&out)?;
            println!(
                "fit: N={}, P={}, D={}, {} stages on {} sequences -> {}",
                model.seq_len(),
                model.fan_in(),
                model.element_dim(),
                model.stage_count(),
                matrices.len(),
                out.display()
            );
        }
        Command::Transform {
            data,
            embeddings,
            stopwords,
            bigram,
            model,
            out,
        } => {
            let model = TmpcaModel::load(&model)?;
            let raw = load_raw(&data, &embeddings, &stopwords, bigram, model.seq_len())?;
            let mut flat = Vec::with_capacity(raw.matrices.len() * model.element_dim());
            for seq in &raw.matrices {
                flat.extend_from_slice(&model.transform_raw(seq)?);
            }
            let features = FeatureSet {
                features: Matrix::from_vec(raw.matrices.len(), model.element_dim(), flat)?,
                labels: raw.labels,
                class_count: raw.class_count,
            };
            features.save(&out)?;
            println!(
                "transform: {} samples to {}-dim features -> {}",
                features.features.rows(),
                features.features.cols(),
                out.display()
            );
        }
        Command::Expand { model, out } => {
            let model = TmpcaModel::load(&model)?;
            let closed = model.expand_closed_form()?;
            let weights = closed.weights();
            let mut csv = String::new();
            for r in 0..weights.rows() {
                let row: Vec<String> = weights.row(r).iter().map(f64::to_string).collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
            write_text(&out, &csv)?;
            println!(
                "expand: {}x{} closed-form matrix -> {}",
                weights.rows(),
                weights.cols(),
                out.display()
            );
        }
        Command::ClassifyTrain {
            data,
            out,
            epochs,
            lr,
            batch,
            seed,
        } => {
            let set = FeatureSet::load(&data)?;
            let cfg = TrainConfig {
                epochs,
                learning_rate: lr,
                batch_size: batch,
                shuffle_seed: seed,
                ..TrainConfig::default()
            };
            let params = classifier::train(&set.features, &set.labels, set.class_count, &cfg)?;
            params.save(&out)?;
            let loss = classifier::cross_entropy_loss(&params, &set.features, &set.labels, None)?;
            println!(
                "classify-train: {} classes on {} samples, final loss {:.6} -> {}",
                set.class_count,
                set.features.rows(),
                loss,
                out.display()
            );
        }
        Command::ClassifyEval { data, model, out } => {
            let set = FeatureSet::load(&data)?;
            let params = DenseParams::load(&model)?;
            let eval = classifier::evaluate(&params, &set.features, &set.labels)?;
            if let Some(out) = &out {
                write_text(
                    out,
                    &format!("accuracy,f1_macro\n{},{}\n", eval.accuracy, eval.f1_macro),
                )?;
            }
            println!(
                "classify-eval: accuracy={:.4} f1_macro={:.4} on {} samples",
                eval.accuracy,
                eval.f1_macro,
                set.features.rows()
            );
        }
        Command::Diagnose {
            data,
            embeddings,
            stopwords,
            bigram,
            model,
            sigma,
            out,
        } => {
            let model = TmpcaModel::load(&model)?;
            let raw = load_raw(&data, &embeddings, &stopwords, bigram, model.seq_len())?;
            let centered: Vec<Matrix> = raw
                .matrices
                .iter()
                .map(|seq| {
                    let flat: Vec<f64> = seq
                        .as_slice()
                        .iter()
                        .zip(model.dataset_mean())
                        .map(|(v, m)| v - m)
                        .collect();
                    Matrix::from_vec(seq.rows(), seq.cols(), flat)
                })
                .collect::<Result<_>>()?;
            let report = diagnostics::diagnostics_report(&model, &centered, sigma, 1)?;
            std::fs::create_dir_all(&out)?;
            write_text(&out.join("energy.csv"), &render_energy_csv(&report))?;
            write_text(&out.join("mi.csv"), &render_mi_csv(&report.mi))?;
            write_text(&out.join("cost.csv"), &render_cost_csv(&report))?;
            write_text(&out.join("report.md"), &render_markdown(&report))?;
            println!(
                "diagnose: final energy fraction {:.6}, tmpca-vs-mean logdet diff {:.6} -> {}",
                report.energy.final_fraction(),
                report.mi.logdet_diff_tmpca_mean,
                out.display()
            );
        }
        Command::Bench { out, seed } => {
            let fixtures = vec![
                BenchFixture {
                    name: "gaussian_iid".to_string(),
                    kind: FixtureKind::GaussianIid,
                },
                BenchFixture {
                    name: "gaussian_corr_0.9".to_string(),
                    kind: FixtureKind::GaussianCorrelated { rho: 0.9 },
                },
            ];
            let cfg = BenchConfig {
                seed,
                ..BenchConfig::default()
            };
            let tables = diagnostics::time_fit(&fixtures, &cfg)?;
            std::fs::create_dir_all(&out)?;
            write_text(
                &out.join("bench_medians.csv"),
                &render_bench_medians_csv(&tables),
            )?;
            write_text(
                &out.join("bench_variances.csv"),
                &render_bench_variances_csv(&tables),
            )?;
            println!(
                "bench: {} fixtures x {} sequence lengths, medians of {} runs -> {}",
                tables.len(),
                cfg.n_values.len(),
                cfg.repetitions,
                out.display()
            );
        }
    }
    Ok(())
}
