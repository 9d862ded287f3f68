//! Saved-model artifacts and inference-side data handling.
//!
//! A run directory's model is two files: `checkpoint.net` (layout + weights)
//! and `scaler.csv` (per-column names, min/max ranges and train-time fill
//! values). Together they pin the exact input space, so any feature CSV can
//! be projected onto the model: present columns are rescaled with the
//! training ranges, absent or missing cells fall back to the training-set
//! mean in scaled space.

use std::collections::BTreeSet;
use std::path::Path;

use brann::data::Dataset;
use brann::features::ScalerParams;
use brann::network::Network;
use brann::{Error, Result};
use nalgebra::DMatrix;

pub const CHECKPOINT_FILE: &str = "checkpoint.net";
pub const SCALER_FILE: &str = "scaler.csv";
pub const SCALER_HEADER: &str = "role,name,min,max,fill";

/// Everything needed to run a trained network on new feature rows.
#[derive(Debug, Clone)]
pub struct SavedModel {
    pub net: Network,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub x_scaler: ScalerParams,
    pub y_scaler: ScalerParams,
    /// Scaled-space per-feature fill for missing cells.
    pub fills: Vec<f64>,
}

/// Render scaler.csv: one row per feature (with fill) and per target.
pub fn scaler_csv_string(
    feature_names: &[String],
    x_scaler: &ScalerParams,
    fills: &[f64],
    target_names: &[String],
    y_scaler: &ScalerParams,
) -> String {
    let mut out = String::from(SCALER_HEADER);
    out.push('\n');
    for (i, name) in feature_names.iter().enumerate() {
        let (min, max) = x_scaler.cols()[i];
        out.push_str(&format!("feature,{name},{min},{max},{}\n", fills[i]));
    }
    for (i, name) in target_names.iter().enumerate() {
        let (min, max) = y_scaler.cols()[i];
        out.push_str(&format!("target,{name},{min},{max},\n"));
    }
    out
}

/// Load checkpoint.net + scaler.csv from a run directory and cross-check
/// the column counts against the network layout.
pub fn load_model(run_dir: &Path) -> Result<SavedModel> {
    let (net, _seed) = Network::load_checkpoint(&run_dir.join(CHECKPOINT_FILE))?;
    let scaler_path = run_dir.join(SCALER_FILE);
    let text = std::fs::read_to_string(&scaler_path)
        .map_err(|e| Error::data(format!("{}: {e}", scaler_path.display())))?;

    let mut feature_names = Vec::new();
    let mut target_names = Vec::new();
    let mut x_cols = Vec::new();
    let mut y_cols = Vec::new();
    let mut fills = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SCALER_HEADER => {}
        other => {
            return Err(Error::data(format!(
                "{}: bad header `{}`",
                scaler_path.display(),
                other.map(|(_, h)| h).unwrap_or_default()
            )))
        }
    }
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(Error::data(format!(
                "{}:{}: expected 5 cells, got {}",
                scaler_path.display(),
                idx + 1,
                cells.len()
            )));
        }
        let num = |c: &str, what: &str| -> Result<f64> {
            c.parse().map_err(|_| {
                Error::data(format!(
                    "{}:{}: bad {what} `{c}`",
                    scaler_path.display(),
                    idx + 1
                ))
            })
        };
        let (min, max) = (num(cells[2], "min")?, num(cells[3], "max")?);
        match cells[0] {
            "feature" => {
                feature_names.push(cells[1].to_string());
                x_cols.push((min, max));
                fills.push(num(cells[4], "fill")?);
            }
            "target" => {
                target_names.push(cells[1].to_string());
                y_cols.push((min, max));
            }
            other => {
                return Err(Error::data(format!(
                    "{}:{}: unknown role `{other}`",
                    scaler_path.display(),
                    idx + 1
                )))
            }
        }
    }

    if feature_names.len() != net.layout().input_dim()
        || target_names.len() != net.layout().output_dim()
    {
        return Err(Error::schema(format!(
            "checkpoint expects {} inputs / {} outputs but scaler.csv lists {} features / {} targets",
            net.layout().input_dim(),
            net.layout().output_dim(),
            feature_names.len(),
            target_names.len()
        )));
    }
    Ok(SavedModel {
        net,
        feature_names,
        target_names,
        x_scaler: ScalerParams::from_cols(x_cols)?,
        y_scaler: ScalerParams::from_cols(y_cols)?,
        fills,
    })
}

/// A feature CSV read without a schema: every column after the two
/// provenance columns, with empty cells as missing markers.
#[derive(Debug, Clone)]
pub struct InputTable {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub provenance: Vec<(String, usize)>,
}

pub fn read_table(path: &Path) -> Result<InputTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: header: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 || header[0] != "case_id" || header[1] != "cut_index" {
        return Err(Error::schema(format!(
            "{}: expected a header starting `case_id,cut_index` with at least one data column",
            path.display()
        )));
    }
    let names: Vec<String> = header[2..].to_vec();
    let mut cells: Vec<f64> = Vec::new();
    let mut provenance = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record =
            record.map_err(|e| Error::data(format!("{}:{line}: {e}", path.display())))?;
        if record.len() != header.len() {
            return Err(Error::data(format!(
                "{}:{line}: {} cells, header has {}",
                path.display(),
                record.len(),
                header.len()
            )));
        }
        let case_id = record.get(0).unwrap_or("").to_string();
        if case_id.is_empty() {
            return Err(Error::data(format!("{}:{line}: empty case_id", path.display())));
        }
        let cut_index: usize = record.get(1).unwrap_or("").parse().map_err(|_| {
            Error::data(format!(
                "{}:{line}: bad cut_index `{}`",
                path.display(),
                record.get(1).unwrap_or("")
            ))
        })?;
        for (j, name) in names.iter().enumerate() {
            let raw = record.get(2 + j).unwrap_or("");
            if raw.is_empty() {
                cells.push(f64::NAN);
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| {
                Error::data(format!("{}:{line}: column {name}: `{raw}`", path.display()))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "{}:{line}: column {name}: non-finite value `{raw}`",
                    path.display()
                )));
            }
            cells.push(v);
        }
        provenance.push((case_id, cut_index));
    }
    if provenance.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    let n = provenance.len();
    Ok(InputTable {
        matrix: DMatrix::from_row_slice(n, names.len(), &cells),
        names,
        provenance,
    })
}

impl InputTable {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Feature CSVs loaded through a named schema satisfy the same interface.
pub fn table_from_dataset(dataset: &Dataset) -> InputTable {
    let mut names = dataset.feature_names.clone();
    names.extend(dataset.target_names.iter().cloned());
    let n = dataset.n_rows();
    let matrix = DMatrix::from_fn(n, names.len(), |i, j| {
        if j < dataset.x.ncols() {
            dataset.x[(i, j)]
        } else {
            dataset.y[(i, j - dataset.x.ncols())]
        }
    });
    InputTable {
        names,
        matrix,
        provenance: dataset.provenance.clone(),
    }
}

/// Model outputs on a projected table, plus what imputation was needed.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Predictions in target units, one column per model target.
    pub pred: DMatrix<f64>,
    /// True target columns when the table carries all of them.
    pub truth: Option<DMatrix<f64>>,
    /// Input parameters absent from the table entirely (stat columns
    /// collapsed to their base name: `force_x_min/_max/_mean` → `force_x`).
    pub imputed_params: Vec<String>,
    /// Missing cells mean-filled inside columns the table does provide.
    pub filled_cells: usize,
}

/// Collapse a stat column to the parameter it summarizes.
fn base_param(name: &str) -> &str {
    name.strip_suffix("_min")
        .or_else(|| name.strip_suffix("_max"))
        .or_else(|| name.strip_suffix("_mean"))
        .unwrap_or(name)
}

/// Project a table onto the model's input space and run the network.
pub fn project_and_predict(model: &SavedModel, table: &InputTable) -> Result<Projection> {
    let n = table.n_rows();
    let absent: Vec<&String> = model
        .feature_names
        .iter()
        .filter(|f| table.column(f).is_none())
        .collect();
    let x_raw = DMatrix::from_fn(n, model.feature_names.len(), |i, j| {
        match table.column(&model.feature_names[j]) {
            Some(src) => table.matrix[(i, src)],
            None => f64::NAN,
        }
    });
    let mut x = model.x_scaler.apply(&x_raw)?;
    let filled_total = brann::data::apply_fill(&mut x, &model.fills)?;
    let filled_cells = filled_total - absent.len() * n;

    let pred = model.y_scaler.invert(&model.net.forward(&x)?)?;

    let truth = model
        .target_names
        .iter()
        .map(|t| table.column(t))
        .collect::<Option<Vec<usize>>>()
        .map(|cols| DMatrix::from_fn(n, cols.len(), |i, j| table.matrix[(i, cols[j])]));

    let imputed: BTreeSet<&str> = absent.iter().map(|f| base_param(f)).collect();
    Ok(Projection {
        pred,
        truth,
        imputed_params: imputed.into_iter().map(str::to_string).collect(),
        filled_cells,
    })
}
