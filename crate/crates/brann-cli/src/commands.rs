//! The seven subcommands. Each resolves its inputs, does all fallible work
//! up front, then creates its run directory and writes artifacts, so a
//! failed run never leaves partial output files behind.

use std::fs;
use std::path::{Path, PathBuf};

use brann::classify::{self, ConditionThreshold};
use brann::data::{self, FeatureSchema};
use brann::exec::Jobs;
use brann::metrics;
use brann::mrmr::{self, MrmrCriterion};
use brann::Error;
use serde::Serialize;

use crate::config::{self, Resolved, RunConfig, SweepSection};
use crate::model::{self, InputTable};
use crate::pipeline;
use crate::{CliError, CliResult};

/// Values of the global flags, shared by every command.
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub force: bool,
}

impl Globals {
    fn out_root(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    fn resolve(&self, repeats: Option<usize>) -> CliResult<Resolved> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| CliError::config("--config <run.toml> is required"))?;
        config::resolve(path, self.seed, self.out.as_deref(), repeats)
    }
}

#[derive(Serialize)]
struct PrepareEcho<'a> {
    command: &'a str,
    manifest: String,
}

pub fn prepare(globals: &Globals, manifest_arg: Option<&Path>) -> CliResult<()> {
    // The manifest comes from the positional argument, or failing that the
    // config file's `manifest` entry (resolved relative to the config).
    let manifest_path: PathBuf = match (manifest_arg, &globals.config) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(cfg_path)) => {
            let text = fs::read_to_string(cfg_path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", cfg_path.display())))?;
            let cfg: RunConfig = toml::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", cfg_path.display())))?;
            let m = cfg.manifest.ok_or_else(|| {
                CliError::config("prepare needs a manifest argument or a config with `manifest`")
            })?;
            cfg_path.parent().unwrap_or(Path::new(".")).join(m)
        }
        (None, None) => {
            return Err(CliError::config(
                "prepare needs a manifest argument or --config",
            ))
        }
    };
    if !manifest_path.is_file() {
        return Err(CliError::config(format!(
            "manifest {} does not exist",
            manifest_path.display()
        )));
    }

    let (dataset, report) = pipeline::ingest_manifest(&manifest_path)?;
    let csv = data::to_csv_string(&dataset);

    let echo = PrepareEcho {
        command: "prepare",
        manifest: manifest_path.to_string_lossy().into_owned(),
    };
    let dir = pipeline::tool_run_dir(&globals.out_root(), "prepare", &echo, globals.force)?;
    fs::write(dir.join("features.csv"), csv).map_err(Error::from)?;
    fs::write(
        dir.join("report.txt"),
        format!("rows={} dropped={}\n", report.rows, report.dropped_unmeasured),
    )
    .map_err(Error::from)?;
    println!(
        "prepared {} rows ({} unmeasured cuts dropped) -> {}",
        report.rows,
        report.dropped_unmeasured,
        dir.display()
    );
    Ok(())
}

pub fn train(globals: &Globals, repeats: Option<usize>) -> CliResult<()> {
    let resolved = globals.resolve(repeats)?;
    let dataset = pipeline::load_dataset(&resolved)?;
    let dir = config::create_run_dir(&resolved.out_root, "train", &resolved.hash, globals.force)?;
    let summary = pipeline::train_into(&resolved, &dataset, &dir)?;
    println!(
        "trained {} x{} (stop: {}), median test rmse {:.6}, mae {:.6}, r2 {:.4} -> {}",
        resolved.cfg.training.algorithm,
        resolved.cfg.repeats,
        summary.stop_reason,
        summary.test.rmse,
        summary.test.mae,
        summary.test.r2,
        dir.display()
    );
    Ok(())
}

/// One grid point: the axis values and the train config they produce.
struct GridPoint {
    hidden: Vec<usize>,
    transfer: String,
    train_fraction: f64,
    algorithm: String,
    resolved: Resolved,
}

fn build_grid(
    base: &Resolved,
    sweep: &SweepSection,
    points_root: &Path,
) -> CliResult<Vec<GridPoint>> {
    // Fixed dimensions fall back to the base config's value.
    let hiddens: Vec<Vec<usize>> = if sweep.hidden_units.is_empty() {
        vec![base.cfg.network.hidden.clone()]
    } else {
        dedup(sweep.hidden_units.iter().map(|&h| vec![h]).collect())
    };
    let transfers = if sweep.transfer.is_empty() {
        vec![base.cfg.network.transfer.clone()]
    } else {
        dedup(sweep.transfer.clone())
    };
    let fractions = if sweep.train_fraction.is_empty() {
        vec![base.cfg.split.train_fraction]
    } else {
        dedup_by_bits(sweep.train_fraction.clone())
    };
    let algorithms = if sweep.algorithm.is_empty() {
        vec![base.cfg.training.algorithm.name().to_string()]
    } else {
        dedup(sweep.algorithm.clone())
    };

    let mut points = Vec::new();
    for hidden in &hiddens {
        for transfer in &transfers {
            for &fraction in &fractions {
                for algorithm in &algorithms {
                    let mut cfg = base.cfg.clone();
                    cfg.sweep = None;
                    cfg.network.hidden = hidden.clone();
                    cfg.network.transfer = transfer.clone();
                    cfg.split.train_fraction = fraction;
                    cfg.training.algorithm = brann::trainers::AlgorithmKind::parse(algorithm)
                        .map_err(|e| CliError::config(format!("sweep.algorithm: {e}")))?;
                    let resolved = config::resolve_point(cfg, &base.config_dir, points_root)?;
                    points.push(GridPoint {
                        hidden: hidden.clone(),
                        transfer: transfer.clone(),
                        train_fraction: fraction,
                        algorithm: algorithm.clone(),
                        resolved,
                    });
                }
            }
        }
    }
    Ok(points)
}

fn dedup<T: PartialEq + Clone>(values: Vec<T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(values.len());
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn dedup_by_bits(values: Vec<f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(values.len());
    for v in values {
        if !out.iter().any(|&o| o.to_bits() == v.to_bits()) {
            out.push(v);
        }
    }
    out
}

pub const COMPARISON_HEADER: &str =
    "hidden,transfer,train_fraction,algorithm,train_mae,train_rmse,train_r2,test_mae,test_rmse,test_r2";

pub fn sweep(globals: &Globals, preset: Option<&str>, repeats: Option<usize>) -> CliResult<()> {
    let mut resolved = globals.resolve(repeats)?;
    if let Some(name) = preset {
        resolved = {
            let mut cfg = resolved.cfg.clone();
            cfg.sweep = Some(SweepSection::preset(name)?);
            // Re-resolve so the echo (and hash) reflect the applied preset.
            let out_root = resolved.out_root.clone();
            config::resolve_point(cfg, &resolved.config_dir, &out_root)?
        };
    }
    let sweep_section = resolved
        .cfg
        .sweep
        .clone()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| {
            CliError::config("empty sweep grid: add a [sweep] axis or pass --preset")
        })?;

    let dataset = pipeline::load_dataset(&resolved)?;
    let dir = config::create_run_dir(&resolved.out_root, "sweep", &resolved.hash, globals.force)?;
    fs::write(dir.join("config.toml"), &resolved.echo).map_err(Error::from)?;
    let points_root = dir.join("points");
    fs::create_dir_all(&points_root).map_err(Error::from)?;

    let points = build_grid(&resolved, &sweep_section, &points_root)?;
    // Each point owns its directory; results come back in grid order, so
    // the comparison table is identical however many workers ran.
    let results: Vec<CliResult<pipeline::TrainSummary>> =
        brann::exec::map(Jobs::from_count(globals.jobs), &points, |point| {
            let pdir = config::create_run_dir(
                &point.resolved.out_root,
                "train",
                &point.resolved.hash,
                true,
            )?;
            pipeline::train_into(&point.resolved, &dataset, &pdir)
        });

    let mut table = String::from(COMPARISON_HEADER);
    table.push('\n');
    for (point, result) in points.iter().zip(results) {
        let s = result.map_err(|e| {
            CliError::config(format!(
                "grid point ({}, {}, {}, {}) failed: {e}",
                join_sizes(&point.hidden),
                point.transfer,
                point.train_fraction,
                point.algorithm
            ))
        })?;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            join_sizes(&point.hidden),
            point.transfer,
            point.train_fraction,
            point.algorithm,
            s.train.mae,
            s.train.rmse,
            s.train.r2,
            s.test.mae,
            s.test.rmse,
            s.test.r2
        ));
    }
    fs::write(dir.join("comparison.csv"), table).map_err(Error::from)?;
    println!("swept {} grid points -> {}", points.len(), dir.display());
    Ok(())
}

fn join_sizes(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("/")
}

#[derive(Serialize)]
struct TableEcho<'a> {
    command: &'a str,
    model: String,
    features: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
}

/// Load the model, read the table, project and predict; shared by
/// evaluate/predict/classify. Reports what was imputed on stderr.
fn model_on_table(
    model_dir: &Path,
    features: &Path,
) -> CliResult<(model::SavedModel, InputTable, model::Projection)> {
    let saved = model::load_model(model_dir)?;
    let table = model::read_table(features)?;
    let projection = model::project_and_predict(&saved, &table)?;
    if !projection.imputed_params.is_empty() {
        let n = projection.imputed_params.len();
        eprintln!(
            "{n} column{} imputed (mean-fill): {}",
            if n == 1 { "" } else { "s" },
            projection.imputed_params.join(", ")
        );
    }
    if projection.filled_cells > 0 {
        eprintln!("mean-filled {} missing cells", projection.filled_cells);
    }
    Ok((saved, table, projection))
}

fn require_truth(projection: &model::Projection, what: &str) -> CliResult<nalgebra::DMatrix<f64>> {
    let truth = projection
        .truth
        .clone()
        .ok_or_else(|| Error::schema(format!("{what} needs every model target column present")))?;
    if truth.iter().any(|v| v.is_nan()) {
        return Err(Error::data(format!("{what}: missing target values")).into());
    }
    Ok(truth)
}

pub fn evaluate(globals: &Globals, model_dir: &Path, features: &Path) -> CliResult<()> {
    let (saved, _, projection) = model_on_table(model_dir, features)?;
    let truth = require_truth(&projection, "evaluate")?;

    let mut entries = Vec::new();
    let per_target = metrics::report_per_target(&truth, &projection.pred)?;
    for (name, r) in saved.target_names.iter().zip(per_target) {
        entries.push(("eval".to_string(), name.clone(), r));
    }
    if saved.target_names.len() > 1 {
        entries.push((
            "eval".to_string(),
            "all".to_string(),
            metrics::report(&truth, &projection.pred)?,
        ));
    }
    let csv = metrics::report_csv(&entries);

    let echo = TableEcho {
        command: "evaluate",
        model: model_dir.to_string_lossy().into_owned(),
        features: features.to_string_lossy().into_owned(),
        target: None,
        threshold: None,
    };
    let dir = pipeline::tool_run_dir(&globals.out_root(), "evaluate", &echo, globals.force)?;
    fs::write(dir.join("metrics.csv"), &csv).map_err(Error::from)?;
    print!("{csv}");
    println!("-> {}", dir.display());
    Ok(())
}

pub fn predict(globals: &Globals, model_dir: &Path, features: &Path) -> CliResult<()> {
    let (saved, table, projection) = model_on_table(model_dir, features)?;

    let mut csv = String::from("case_id,cut_index");
    for t in &saved.target_names {
        csv.push_str(&format!(",{t}_pred"));
    }
    csv.push('\n');
    for (i, (case, cut)) in table.provenance.iter().enumerate() {
        csv.push_str(&format!("{case},{cut}"));
        for j in 0..projection.pred.ncols() {
            csv.push_str(&format!(",{}", projection.pred[(i, j)]));
        }
        csv.push('\n');
    }

    let echo = TableEcho {
        command: "predict",
        model: model_dir.to_string_lossy().into_owned(),
        features: features.to_string_lossy().into_owned(),
        target: None,
        threshold: None,
    };
    let dir = pipeline::tool_run_dir(&globals.out_root(), "predict", &echo, globals.force)?;
    fs::write(dir.join("predictions.csv"), csv).map_err(Error::from)?;
    println!("predicted {} rows -> {}", table.n_rows(), dir.display());
    Ok(())
}

pub fn classify(
    globals: &Globals,
    model_dir: &Path,
    features: &Path,
    threshold: f64,
    target: Option<&str>,
) -> CliResult<()> {
    let threshold = ConditionThreshold::new(threshold)?;
    let (saved, _, projection) = model_on_table(model_dir, features)?;
    let truth = require_truth(&projection, "classify")?;
    let col = match target {
        Some(name) => saved
            .target_names
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| {
                CliError::config(format!(
                    "target `{name}` is not one of the model's targets ({})",
                    saved.target_names.join(", ")
                ))
            })?,
        None => 0,
    };

    let mut rows = Vec::with_capacity(truth.nrows());
    let mut pred_labels = Vec::with_capacity(truth.nrows());
    let mut true_labels = Vec::with_capacity(truth.nrows());
    let mut warnings = 0usize;
    for i in 0..truth.nrows() {
        let vb_pred = projection.pred[(i, col)];
        let p = classify::classify_condition(vb_pred, &threshold)?;
        let t = classify::classify_condition(truth[(i, col)], &threshold)?;
        warnings += p.warning.is_some() as usize;
        rows.push((vb_pred, p.label, t.label));
        pred_labels.push(p.label);
        true_labels.push(t.label);
    }
    if warnings > 0 {
        eprintln!("{warnings} negative wear predictions (model extrapolation)");
    }
    let report = classify::classification_report(&pred_labels, &true_labels)?;
    let csv = classify::classification_csv(&rows);

    let pct = |v: Option<f64>| match v {
        Some(a) => format!("{:.2}%", 100.0 * a),
        None => "n/a".to_string(),
    };
    let report_text = format!(
        "n = {}\ncorrect = {}\noverall_accuracy = {:.2}%\nbroken_accuracy = {}\nunbroken_accuracy = {}\n",
        report.n,
        report.correct,
        100.0 * report.overall_accuracy(),
        pct(report.broken_accuracy()),
        pct(report.unbroken_accuracy()),
    );

    let echo = TableEcho {
        command: "classify",
        model: model_dir.to_string_lossy().into_owned(),
        features: features.to_string_lossy().into_owned(),
        target: target.map(str::to_string),
        threshold: Some(threshold.vb_max_mm),
    };
    let dir = pipeline::tool_run_dir(&globals.out_root(), "classify", &echo, globals.force)?;
    fs::write(dir.join("classification.csv"), csv).map_err(Error::from)?;
    fs::write(dir.join("report.txt"), &report_text).map_err(Error::from)?;
    print!("{report_text}");
    println!("-> {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct RankEcho<'a> {
    command: &'a str,
    features: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    schema: Option<String>,
    target: String,
    bins: usize,
    criterion: String,
}

pub fn rank(
    globals: &Globals,
    features: &Path,
    schema: Option<&str>,
    target: Option<&str>,
    bins: Option<usize>,
    criterion: &str,
) -> CliResult<()> {
    let criterion = MrmrCriterion::parse(criterion)
        .map_err(|e| CliError::config(format!("--criterion: {e}")))?;

    // With a schema the CSV is validated column-for-column; without one it
    // is read generically and the target defaults to the last column.
    let table = match schema {
        Some(name) => {
            let schema = FeatureSchema::by_name(name)
                .map_err(|e| CliError::config(format!("--schema: {e}")))?;
            model::table_from_dataset(&data::load_features(features, &schema)?)
        }
        None => model::read_table(features)?,
    };
    let target_name = match (target, schema) {
        (Some(t), _) => t.to_string(),
        (None, Some(name)) => FeatureSchema::by_name(name)
            .map_err(|e| CliError::config(format!("--schema: {e}")))?
            .target_names()[0]
            .clone(),
        (None, None) => table.names.last().expect("table has columns").clone(),
    };
    let target_col = table.column(&target_name).ok_or_else(|| {
        CliError::config(format!("target column `{target_name}` not in the CSV"))
    })?;

    let feature_names: Vec<String> = table
        .names
        .iter()
        .filter(|n| **n != target_name)
        .cloned()
        .collect();
    let n = table.n_rows();
    let x = nalgebra::DMatrix::from_fn(n, feature_names.len(), |i, j| {
        table.matrix[(i, table.column(&feature_names[j]).expect("name from table"))]
    });
    let y: Vec<f64> = (0..n).map(|i| table.matrix[(i, target_col)]).collect();
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::data(
            "feature CSV has missing cells; rank needs complete columns (run predict-style mean-fill upstream or drop the rows)",
        )
        .into());
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(Error::data("target column has missing values").into());
    }

    let bins = bins.unwrap_or_else(|| mrmr::default_bins(n));
    let ranking = mrmr::rank_features_with(Jobs::from_count(globals.jobs), &x, &y, bins, criterion)?;
    let csv = mrmr::ranking_csv(&ranking, &feature_names)?;

    let echo = RankEcho {
        command: "rank",
        features: features.to_string_lossy().into_owned(),
        schema: schema.map(str::to_string),
        target: target_name,
        bins,
        criterion: criterion.name().to_string(),
    };
    let dir = pipeline::tool_run_dir(&globals.out_root(), "rank", &echo, globals.force)?;
    fs::write(dir.join("ranking.csv"), &csv).map_err(Error::from)?;
    print!("{csv}");
    println!("-> {}", dir.display());
    Ok(())
}
