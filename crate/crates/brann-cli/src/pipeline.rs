//! The train pipeline shared by `train` and every sweep grid point.
//!
//! One repeat = seeded split → min-max scale features and targets on the
//! training side → mean-fill missing feature cells in scaled space → train →
//! metrics in original target units. Repeat r derives its seed as
//! `run seed + r`; the artifacts checkpoint/scaler/split come from the
//! repeat with the median pooled test RMSE, so the saved model is the
//! run's representative, not its luckiest draw.

use std::fs;
use std::path::Path;

use brann::data::{self, Dataset, FeatureSchema};
use brann::features::{self, Manifest, ScalerParams, WindowMode};
use brann::metrics::{self, MetricReport};
use brann::network::{init_weights, Network, NetworkLayout};
use brann::synthetic;
use brann::trainers::{self, TrainingTrace};
use nalgebra::DMatrix;

use crate::config::{DataSource, Resolved};
use crate::model;
use crate::{CliError, CliResult};

/// Fill for feature columns with no finite training value: mid-range in
/// scaled space.
const EMPTY_COLUMN_FILL: f64 = 0.5;

/// Materialize the configured data source.
pub fn load_dataset(resolved: &Resolved) -> CliResult<Dataset> {
    match &resolved.source {
        DataSource::BuiltinSine => {
            let (x, y) = synthetic::noisy_sine(100, resolved.cfg.seed);
            let provenance = (1..=x.nrows()).map(|i| ("sine".to_string(), i)).collect();
            Ok(Dataset::new(
                x,
                y,
                vec!["x".to_string()],
                vec!["y".to_string()],
                provenance,
            )?)
        }
        DataSource::Features { path, schema } => {
            let schema = FeatureSchema::by_name(schema)?;
            Ok(data::load_features(path, &schema)?)
        }
        DataSource::Manifest { path } => {
            let (dataset, _) = ingest_manifest(path)?;
            Ok(dataset)
        }
    }
}

/// Ingest raw signals per a manifest into a dataset plus the extraction
/// report (rows kept / cuts dropped for lack of a wear measurement).
pub fn ingest_manifest(path: &Path) -> CliResult<(Dataset, features::ExtractionReport)> {
    let manifest = Manifest::load(path)?;
    let schema = FeatureSchema::by_name(&manifest.schema)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let cuts = features::ingest(&manifest, dir)?;
    let mode: WindowMode = manifest.window_mode;
    let (rows, report) = features::build_rows(&cuts, &schema, mode)?;
    let dataset = features::rows_to_dataset(&rows, &schema)?;
    Ok((dataset, report))
}

/// Everything produced by one repeat.
pub struct RepeatRun {
    pub repeat: usize,
    pub seed: u64,
    pub net: Network,
    pub trace: TrainingTrace,
    pub split_text: String,
    pub x_scaler: ScalerParams,
    pub y_scaler: ScalerParams,
    pub fills: Vec<f64>,
    /// (split, target, report) rows, same shape for every repeat.
    pub entries: Vec<(String, String, MetricReport)>,
    pub pooled_train: MetricReport,
    pub pooled_test: MetricReport,
}

fn metric_entries(
    split: &str,
    truth: &DMatrix<f64>,
    pred: &DMatrix<f64>,
    target_names: &[String],
) -> brann::Result<Vec<(String, String, MetricReport)>> {
    let mut rows = Vec::new();
    let per_target = metrics::report_per_target(truth, pred)?;
    for (name, r) in target_names.iter().zip(per_target) {
        rows.push((split.to_string(), name.clone(), r));
    }
    if target_names.len() > 1 {
        rows.push((split.to_string(), "all".to_string(), metrics::report(truth, pred)?));
    }
    Ok(rows)
}

/// Split, scale, train and score one repeat.
pub fn run_repeat(dataset: &Dataset, resolved: &Resolved, repeat: usize) -> CliResult<RepeatRun> {
    let cfg = &resolved.cfg;
    let seed = cfg.seed + repeat as u64;
    let spec = cfg.split.spec(seed);
    let idx = data::split_indices(dataset, &spec)?;
    let split_text = data::split_report(&spec, &idx);
    let train_ds = dataset.subset(&idx.train)?;
    let test_ds = dataset.subset(&idx.test)?;

    let x_scaler = ScalerParams::fit(&train_ds.x)?;
    let y_scaler = ScalerParams::fit(&train_ds.y)?;
    let mut x_train = x_scaler.apply(&train_ds.x)?;
    let mut x_test = x_scaler.apply(&test_ds.x)?;
    let y_train = y_scaler.apply(&train_ds.y)?;
    let fills = data::fill_values(&x_train, EMPTY_COLUMN_FILL);
    data::apply_fill(&mut x_train, &fills)?;
    data::apply_fill(&mut x_test, &fills)?;

    let layout = NetworkLayout::regression(
        x_train.ncols(),
        &cfg.network.hidden,
        cfg.network.transfer_kind()?,
        y_train.ncols(),
    )?;
    let net0 = init_weights(&layout, seed);
    let mut training = cfg.training.clone();
    training.seed = seed;
    let (net, trace) = trainers::train(&net0, &x_train, &y_train, &training)?;

    let pred_train = y_scaler.invert(&net.forward(&x_train)?)?;
    let pred_test = y_scaler.invert(&net.forward(&x_test)?)?;
    let mut entries = metric_entries("train", &train_ds.y, &pred_train, &train_ds.target_names)?;
    entries.extend(metric_entries("test", &test_ds.y, &pred_test, &test_ds.target_names)?);
    let pooled_train = metrics::report(&train_ds.y, &pred_train)?;
    let pooled_test = metrics::report(&test_ds.y, &pred_test)?;

    Ok(RepeatRun {
        repeat,
        seed,
        net,
        trace,
        split_text,
        x_scaler,
        y_scaler,
        fills,
        entries,
        pooled_train,
        pooled_test,
    })
}

/// Median of a non-empty sample; even counts average the middle pair.
pub fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("metric values are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Element-wise median of the per-repeat metric tables.
fn median_entries(runs: &[RepeatRun]) -> Vec<(String, String, MetricReport)> {
    let shape = &runs[0].entries;
    shape
        .iter()
        .enumerate()
        .map(|(i, (split, target, first))| {
            let collect = |f: fn(&MetricReport) -> f64| {
                median(runs.iter().map(|r| f(&r.entries[i].2)).collect())
            };
            (
                split.clone(),
                target.clone(),
                MetricReport {
                    mae: collect(|r| r.mae),
                    rmse: collect(|r| r.rmse),
                    r2: collect(|r| r.r2),
                    n: first.n,
                },
            )
        })
        .collect()
}

/// Index of the repeat whose pooled test RMSE is the median (lower middle
/// for even counts), so selected artifacts come from an actual run.
fn median_repeat(runs: &[RepeatRun]) -> usize {
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by(|&a, &b| {
        runs[a]
            .pooled_test
            .rmse
            .partial_cmp(&runs[b].pooled_test.rmse)
            .expect("metric values are finite")
            .then(a.cmp(&b))
    });
    order[(runs.len() - 1) / 2]
}

/// Summary handed back to `train`/`sweep` for stdout and comparison rows.
pub struct TrainSummary {
    pub selected_repeat: usize,
    pub selected_seed: u64,
    pub stop_reason: String,
    pub train: MetricReport,
    pub test: MetricReport,
}

/// Run all repeats and write the full artifact set into `run_dir`.
pub fn train_into(resolved: &Resolved, dataset: &Dataset, run_dir: &Path) -> CliResult<TrainSummary> {
    let cfg = &resolved.cfg;
    fs::write(run_dir.join("config.toml"), &resolved.echo).map_err(brann::Error::from)?;

    let mut runs = Vec::with_capacity(cfg.repeats);
    for r in 0..cfg.repeats {
        let run = run_repeat(dataset, resolved, r)?;
        run.trace.write_csv(&run_dir.join(format!("trace-{r}.csv")))?;
        let echo = sidecar_echo(resolved, &run);
        run.trace
            .write_sidecar(&run_dir.join(format!("trace-{r}.txt")), &echo)?;
        runs.push(run);
    }

    let entries = median_entries(&runs);
    fs::write(run_dir.join("metrics.csv"), metrics::report_csv(&entries))
        .map_err(brann::Error::from)?;
    fs::write(run_dir.join("repeats.csv"), repeats_csv(&runs)).map_err(brann::Error::from)?;

    let pick = median_repeat(&runs);
    let selected = &runs[pick];
    selected
        .net
        .save_checkpoint(selected.seed, &run_dir.join(model::CHECKPOINT_FILE))?;
    fs::write(
        run_dir.join(model::SCALER_FILE),
        model::scaler_csv_string(
            &dataset.feature_names,
            &selected.x_scaler,
            &selected.fills,
            &dataset.target_names,
            &selected.y_scaler,
        ),
    )
    .map_err(brann::Error::from)?;
    fs::write(run_dir.join("split.txt"), &selected.split_text).map_err(brann::Error::from)?;

    let summary = TrainSummary {
        selected_repeat: pick,
        selected_seed: selected.seed,
        stop_reason: selected.trace.stop_reason.name().to_string(),
        train: MetricReport {
            mae: median(runs.iter().map(|r| r.pooled_train.mae).collect()),
            rmse: median(runs.iter().map(|r| r.pooled_train.rmse).collect()),
            r2: median(runs.iter().map(|r| r.pooled_train.r2).collect()),
            n: selected.pooled_train.n,
        },
        test: MetricReport {
            mae: median(runs.iter().map(|r| r.pooled_test.mae).collect()),
            rmse: median(runs.iter().map(|r| r.pooled_test.rmse).collect()),
            r2: median(runs.iter().map(|r| r.pooled_test.r2).collect()),
            n: selected.pooled_test.n,
        },
    };
    fs::write(run_dir.join("run.txt"), run_txt(cfg.repeats, &summary)).map_err(brann::Error::from)?;
    Ok(summary)
}

fn sidecar_echo(resolved: &Resolved, run: &RepeatRun) -> String {
    let layout = run.net.layout();
    let sizes: Vec<String> = layout.layer_sizes().iter().map(|s| s.to_string()).collect();
    let mut training = resolved.cfg.training.clone();
    training.seed = run.seed;
    let training_toml = toml::to_string(&training).unwrap_or_default();
    format!(
        "repeat = {}\nlayout = {}\ntransfer = {}\n{training_toml}",
        run.repeat,
        sizes.join(" "),
        resolved.cfg.network.transfer,
    )
}

fn repeats_csv(runs: &[RepeatRun]) -> String {
    let mut out = String::from("repeat,seed,split,target,mae,rmse,r2,n\n");
    for run in runs {
        for (split, target, r) in &run.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                run.repeat, run.seed, split, target, r.mae, r.rmse, r.r2, r.n
            ));
        }
    }
    out
}

fn run_txt(repeats: usize, s: &TrainSummary) -> String {
    format!(
        "repeats = {repeats}\nselected_repeat = {}\nselected_seed = {}\nstop_reason = {}\n\
         train_rmse = {}\ntest_rmse = {}\ntest_mae = {}\ntest_r2 = {}\n",
        s.selected_repeat, s.selected_seed, s.stop_reason, s.train.rmse, s.test.rmse, s.test.mae, s.test.r2
    )
}

/// Echo helper for the one-table commands: serialize, hash, create the run
/// directory and drop the echo in as config.toml.
pub fn tool_run_dir<T: serde::Serialize>(
    out_root: &Path,
    label: &str,
    echo: &T,
    force: bool,
) -> CliResult<std::path::PathBuf> {
    let text = toml::to_string(echo)
        .map_err(|e| CliError::config(format!("cannot serialize invocation: {e}")))?;
    let hash = crate::config::short_hash(&text);
    let dir = crate::config::create_run_dir(out_root, label, &hash, force)?;
    fs::write(dir.join("config.toml"), text).map_err(brann::Error::from)?;
    Ok(dir)
}
