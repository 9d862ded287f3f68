//! Dataset assembly: feature schemas for the supported tool-wear datasets,
//! typed dataset loading/saving, train/test splitting and the combined
//! multi-dataset feature union.
//!
//! A dataset's feature matrix may contain missing cells (rows that come from
//! a source without that column). Missing cells are stored as NaN markers
//! and must be materialized with [`fill_values`]/[`apply_fill`] before
//! training; everything else is finite.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Statistics extracted per signal channel, in column order.
pub const CHANNEL_STATS: [&str; 3] = ["min", "max", "mean"];

/// Named feature layout: scalar process parameters plus signal channels,
/// each channel contributing one column per entry of [`CHANNEL_STATS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    name: String,
    process_params: Vec<String>,
    /// (channel name, unit); empty unit means unspecified.
    channels: Vec<(String, String)>,
    targets: Vec<String>,
}

impl FeatureSchema {
    pub fn new(
        name: impl Into<String>,
        process_params: Vec<String>,
        channels: Vec<(String, String)>,
        targets: Vec<String>,
    ) -> Result<Self> {
        let schema = FeatureSchema {
            name: name.into(),
            process_params,
            channels,
            targets,
        };
        let mut seen = std::collections::BTreeSet::new();
        for p in schema.parameters() {
            if !seen.insert(p.to_string()) {
                return Err(Error::schema(format!("duplicate parameter name `{p}`")));
            }
        }
        if schema.targets.is_empty() {
            return Err(Error::schema("schema needs at least one target"));
        }
        Ok(schema)
    }

    /// Milling rig with process parameters and six monitoring channels.
    pub fn nasa() -> Self {
        FeatureSchema::new(
            "nasa",
            vec!["doc".into(), "feed".into()],
            vec![
                ("smcac".into(), "A".into()),
                ("smcdc".into(), "A".into()),
                ("vib_table".into(), "V".into()),
                ("vib_spindle".into(), "V".into()),
                ("ae_table".into(), "V".into()),
                ("ae_spindle".into(), "V".into()),
            ],
            vec!["vb_mm".into()],
        )
        .expect("builtin schema")
    }

    /// High-speed rig: force/vibration triaxial plus acoustic emission RMS,
    /// flank wear on three flutes.
    pub fn phm2010() -> Self {
        FeatureSchema::new(
            "phm2010",
            vec![],
            vec![
                ("force_x".into(), "N".into()),
                ("force_y".into(), "N".into()),
                ("force_z".into(), "N".into()),
                ("vib_x".into(), "g".into()),
                ("vib_y".into(), "g".into()),
                ("vib_z".into(), "g".into()),
                ("ae_rms".into(), "V".into()),
            ],
            vec![
                "vb_flute1_mm".into(),
                "vb_flute2_mm".into(),
                "vb_flute3_mm".into(),
            ],
        )
        .expect("builtin schema")
    }

    /// Dynamometer/vibration/spindle-telemetry rig, flank wear on four edges.
    pub fn nuaa() -> Self {
        FeatureSchema::new(
            "nuaa",
            vec![],
            vec![
                ("force_axial".into(), "N".into()),
                ("moment_x".into(), "N.m".into()),
                ("moment_y".into(), "N.m".into()),
                ("torsion_z".into(), "N.m".into()),
                ("vib_ch1".into(), String::new()),
                ("vib_ch2".into(), String::new()),
                ("spindle_power".into(), String::new()),
                ("spindle_current".into(), String::new()),
            ],
            vec![
                "vb_edge1_mm".into(),
                "vb_edge2_mm".into(),
                "vb_edge3_mm".into(),
                "vb_edge4_mm".into(),
            ],
        )
        .expect("builtin schema")
    }

    /// End-milling rig with four sensor channels; the channel names line up
    /// with the matching `phm2010` columns so a combined model can consume
    /// this data directly.
    pub fn inhouse() -> Self {
        FeatureSchema::new(
            "inhouse",
            vec![],
            vec![
                ("force_x".into(), "N".into()),
                ("force_y".into(), "N".into()),
                ("force_z".into(), "N".into()),
                ("ae_rms".into(), "V".into()),
            ],
            vec!["vb_mm".into()],
        )
        .expect("builtin schema")
    }

    /// Union of the three training schemas (`nasa`, `phm2010`, `nuaa`):
    /// 23 distinct input parameters, single `vb_mm` target.
    pub fn union() -> Self {
        FeatureSchema::union_of(
            &[
                &FeatureSchema::nasa(),
                &FeatureSchema::phm2010(),
                &FeatureSchema::nuaa(),
            ],
            "union",
        )
        .expect("builtin schemas are unit-consistent")
    }

    /// Look up a built-in schema by name.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "nasa" => Ok(FeatureSchema::nasa()),
            "phm2010" => Ok(FeatureSchema::phm2010()),
            "nuaa" => Ok(FeatureSchema::nuaa()),
            "inhouse" => Ok(FeatureSchema::inhouse()),
            "union" => Ok(FeatureSchema::union()),
            other => Err(Error::schema(format!(
                "unknown schema `{other}` (expected nasa, phm2010, nuaa, inhouse or union)"
            ))),
        }
    }

    /// Parameter-level union. Shared names map to one parameter and must
    /// agree on units; column order is canonicalized lexicographically, so
    /// the union is commutative and associative. Targets collapse to a
    /// single `vb_mm` unless every input already shares one target list.
    pub fn union_of(schemas: &[&FeatureSchema], name: impl Into<String>) -> Result<Self> {
        if schemas.is_empty() {
            return Err(Error::schema("union of zero schemas"));
        }
        let mut params = std::collections::BTreeSet::new();
        let mut channels: BTreeMap<String, String> = BTreeMap::new();
        for s in schemas {
            params.extend(s.process_params.iter().cloned());
            for (ch, unit) in &s.channels {
                match channels.get(ch) {
                    Some(seen) if !seen.is_empty() && !unit.is_empty() && seen != unit => {
                        return Err(Error::schema(format!(
                            "conflicting units for `{ch}`: `{seen}` vs `{unit}`"
                        )));
                    }
                    Some(seen) if seen.is_empty() => {
                        channels.insert(ch.clone(), unit.clone());
                    }
                    Some(_) => {}
                    None => {
                        channels.insert(ch.clone(), unit.clone());
                    }
                }
            }
        }
        if let Some(ch) = params.iter().find(|p| channels.contains_key(*p)) {
            return Err(Error::schema(format!(
                "`{ch}` is a process parameter in one schema and a channel in another"
            )));
        }
        let first_targets = &schemas[0].targets;
        let targets = if schemas.iter().all(|s| &s.targets == first_targets) {
            first_targets.clone()
        } else {
            vec!["vb_mm".to_string()]
        };
        FeatureSchema::new(
            name,
            params.into_iter().collect(),
            channels.into_iter().collect(),
            targets,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn process_params(&self) -> &[String] {
        &self.process_params
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.channels.iter().map(|(c, _)| c.as_str())
    }

    pub fn channel_unit(&self, channel: &str) -> Option<&str> {
        self.channels
            .iter()
            .find(|(c, _)| c == channel)
            .map(|(_, u)| u.as_str())
    }

    /// Logical inputs: process parameters followed by channels.
    pub fn parameters(&self) -> Vec<&str> {
        self.process_params
            .iter()
            .map(String::as_str)
            .chain(self.channels())
            .collect()
    }

    /// Materialized feature columns: process parameters, then one
    /// `{channel}_{stat}` column per channel and stat.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.process_params.clone();
        for (ch, _) in &self.channels {
            for stat in CHANNEL_STATS {
                names.push(format!("{ch}_{stat}"));
            }
        }
        names
    }

    pub fn feature_len(&self) -> usize {
        self.process_params.len() + self.channels.len() * CHANNEL_STATS.len()
    }

    pub fn target_names(&self) -> &[String] {
        &self.targets
    }
}

/// Feature matrix + targets with per-row provenance. `x` may contain NaN
/// missing markers; `y` is always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    /// (case_id, cut_index) per row.
    pub provenance: Vec<(String, usize)>,
}

impl Dataset {
    pub fn new(
        x: DMatrix<f64>,
        y: DMatrix<f64>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
        provenance: Vec<(String, usize)>,
    ) -> Result<Self> {
        if x.nrows() != y.nrows() || x.nrows() != provenance.len() {
            return Err(Error::shape(format!(
                "dataset rows disagree: x {}, y {}, provenance {}",
                x.nrows(),
                y.nrows(),
                provenance.len()
            )));
        }
        if x.ncols() != feature_names.len() || y.ncols() != target_names.len() {
            return Err(Error::shape(format!(
                "dataset columns disagree: x {} vs {} names, y {} vs {} names",
                x.ncols(),
                feature_names.len(),
                y.ncols(),
                target_names.len()
            )));
        }
        if x.iter().any(|v| v.is_infinite()) {
            return Err(Error::data("infinite feature value"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite target value"));
        }
        Ok(Dataset {
            x,
            y,
            feature_names,
            target_names,
            provenance,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    /// Number of NaN missing markers in the feature matrix.
    pub fn missing_cells(&self) -> usize {
        self.x.iter().filter(|v| v.is_nan()).count()
    }

    /// Rows selected by index, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_rows()) {
            return Err(Error::invalid(format!(
                "subset index {bad} out of range for {} rows",
                self.n_rows()
            )));
        }
        let x = DMatrix::from_fn(indices.len(), self.x.ncols(), |i, j| self.x[(indices[i], j)]);
        let y = DMatrix::from_fn(indices.len(), self.y.ncols(), |i, j| self.y[(indices[i], j)]);
        let provenance = indices.iter().map(|&i| self.provenance[i].clone()).collect();
        Dataset::new(
            x,
            y,
            self.feature_names.clone(),
            self.target_names.clone(),
            provenance,
        )
    }

    /// Re-express this dataset over a different feature column set, matching
    /// columns by name; columns absent from the source become missing
    /// markers. Targets are kept as-is.
    pub fn project(&self, feature_names: &[String]) -> Result<Dataset> {
        let col_of: BTreeMap<&str, usize> = self
            .feature_names
            .iter()
            .enumerate()
            .map(|(j, n)| (n.as_str(), j))
            .collect();
        let x = DMatrix::from_fn(self.n_rows(), feature_names.len(), |i, j| {
            match col_of.get(feature_names[j].as_str()) {
                Some(&src) => self.x[(i, src)],
                None => f64::NAN,
            }
        });
        Dataset::new(
            x,
            self.y.clone(),
            feature_names.to_vec(),
            self.target_names.clone(),
            self.provenance.clone(),
        )
    }
}

/// How rows are assigned to the training side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Seeded shuffle, then prefix split.
    Random,
    /// Whole cases stay on one side; greedy fill toward the row fraction.
    /// Use this when cumulative-window rows would leak across a random
    /// split.
    ByCase,
}

impl SplitMode {
    pub fn name(&self) -> &'static str {
        match self {
            SplitMode::Random => "random",
            SplitMode::ByCase => "by_case",
        }
    }
}

/// Train/test split request.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    #[serde(default = "default_mode")]
    pub mode: SplitMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> SplitMode {
    SplitMode::Random
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "train_fraction must be in (0,1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Row indices for each side of a split, in dataset order within a side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split a dataset into train/test per the spec. The result is an exact
/// partition: every row lands on exactly one side.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(dataset, spec)?;
    Ok((dataset.subset(&idx.train)?, dataset.subset(&idx.test)?))
}

/// The index-level split underlying [`split`], exposed for reporting.
pub fn split_indices(dataset: &Dataset, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n = dataset.n_rows();
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let idx = match spec.mode {
        SplitMode::Random => {
            let n_train = (spec.train_fraction * n as f64).round() as usize;
            if n_train == 0 || n_train == n {
                return Err(Error::invalid(format!(
                    "train_fraction {} leaves an empty side for {n} rows",
                    spec.train_fraction
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut train = order[..n_train].to_vec();
            let mut test = order[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            SplitIndices { train, test }
        }
        SplitMode::ByCase => {
            // Group rows by case, then greedily add cases (largest first) to
            // the train side while that moves the row count toward the
            // target fraction.
            let mut cases: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, (case, _)) in dataset.provenance.iter().enumerate() {
                cases.entry(case).or_default().push(i);
            }
            let mut order: Vec<(&str, Vec<usize>)> = cases.into_iter().collect();
            order.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));
            let target = spec.train_fraction * n as f64;
            let mut train: Vec<usize> = Vec::new();
            let mut test: Vec<usize> = Vec::new();
            let mut filled = 0usize;
            for (_, rows) in order {
                let with = (filled + rows.len()) as f64;
                if (with - target).abs() < (filled as f64 - target).abs() {
                    filled += rows.len();
                    train.extend(rows);
                } else {
                    test.extend(rows);
                }
            }
            if train.is_empty() || test.is_empty() {
                return Err(Error::invalid(format!(
                    "by_case split with fraction {} leaves an empty side",
                    spec.train_fraction
                )));
            }
            train.sort_unstable();
            test.sort_unstable();
            SplitIndices { train, test }
        }
    };
    Ok(idx)
}

/// Human-readable split report: seed, mode and the row indices per side.
pub fn split_report(spec: &SplitSpec, idx: &SplitIndices) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mode: {}", spec.mode.name());
    let _ = writeln!(out, "seed: {}", spec.seed);
    let _ = writeln!(out, "train_fraction: {}", spec.train_fraction);
    let _ = writeln!(out, "train_rows: {}", idx.train.len());
    let _ = writeln!(out, "test_rows: {}", idx.test.len());
    let join = |v: &[usize]| {
        v.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "train: {}", join(&idx.train));
    let _ = writeln!(out, "test: {}", join(&idx.test));
    out
}

/// Stack datasets over the union of their feature columns, canonicalized
/// lexicographically. Cells for columns a source lacks become missing
/// markers. Targets are kept when every input shares the same target list;
/// otherwise each row collapses to a single `vb_mm` target, the maximum
/// wear over that row's own targets (a tool is as worn as its worst edge).
pub fn union_features(datasets: &[&Dataset]) -> Result<Dataset> {
    if datasets.is_empty() {
        return Err(Error::invalid("union of zero datasets"));
    }
    let mut names = std::collections::BTreeSet::new();
    for d in datasets {
        names.extend(d.feature_names.iter().cloned());
    }
    let names: Vec<String> = names.into_iter().collect();

    let first_targets = &datasets[0].target_names;
    let shared_targets = datasets.iter().all(|d| &d.target_names == first_targets);
    let target_names: Vec<String> = if shared_targets {
        first_targets.clone()
    } else {
        vec!["vb_mm".to_string()]
    };

    let n: usize = datasets.iter().map(|d| d.n_rows()).sum();
    let mut x = DMatrix::from_element(n, names.len(), f64::NAN);
    let mut y = DMatrix::zeros(n, target_names.len());
    let mut provenance = Vec::with_capacity(n);
    let mut row = 0;
    for d in datasets {
        let projected = d.project(&names)?;
        for i in 0..d.n_rows() {
            x.row_mut(row).copy_from(&projected.x.row(i));
            if shared_targets {
                y.row_mut(row).copy_from(&d.y.row(i));
            } else {
                y[(row, 0)] = d.y.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
            provenance.push(d.provenance[i].clone());
            row += 1;
        }
    }
    Dataset::new(x, y, names, target_names, provenance)
}

/// Per-column fill values: the mean over observed cells of each column,
/// or `fallback` for columns with no observed cell. Call on the (scaled)
/// training matrix.
pub fn fill_values(train_x: &DMatrix<f64>, fallback: f64) -> Vec<f64> {
    (0..train_x.ncols())
        .map(|j| {
            let observed: Vec<f64> = train_x
                .column(j)
                .iter()
                .copied()
                .filter(|v| !v.is_nan())
                .collect();
            if observed.is_empty() {
                fallback
            } else {
                observed.iter().sum::<f64>() / observed.len() as f64
            }
        })
        .collect()
}

/// Replace missing markers with the per-column fill values; returns the
/// number of cells filled.
pub fn apply_fill(x: &mut DMatrix<f64>, fill: &[f64]) -> Result<usize> {
    if fill.len() != x.ncols() {
        return Err(Error::shape(format!(
            "fill values: {} for {} columns",
            fill.len(),
            x.ncols()
        )));
    }
    let mut count = 0;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if x[(i, j)].is_nan() {
                x[(i, j)] = fill[j];
                count += 1;
            }
        }
    }
    Ok(count)
}

fn full_header(dataset: &Dataset) -> Vec<String> {
    let mut h = vec!["case_id".to_string(), "cut_index".to_string()];
    h.extend(dataset.feature_names.iter().cloned());
    h.extend(dataset.target_names.iter().cloned());
    h
}

/// Serialize a dataset to feature-CSV text. Missing markers become empty
/// cells.
pub fn to_csv_string(dataset: &Dataset) -> String {
    let mut out = full_header(dataset).join(",");
    out.push('\n');
    for i in 0..dataset.n_rows() {
        let (case, cut) = &dataset.provenance[i];
        let mut cells = vec![case.clone(), cut.to_string()];
        for v in dataset.x.row(i).iter() {
            cells.push(if v.is_nan() {
                String::new()
            } else {
                v.to_string()
            });
        }
        for v in dataset.y.row(i).iter() {
            cells.push(v.to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Write the feature CSV for a dataset.
pub fn save_features(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_csv_string(dataset))?;
    Ok(())
}

/// Parse feature-CSV text against a schema. The header must match the
/// schema's columns exactly; empty feature cells load as missing markers;
/// anything non-numeric (including literal NaN/inf) is rejected with a
/// row/column diagnostic.
pub fn load_features_str(text: &str, schema: &FeatureSchema) -> Result<Dataset> {
    let feature_names = schema.feature_names();
    let target_names: Vec<String> = schema.target_names().to_vec();
    let mut expected = vec!["case_id".to_string(), "cut_index".to_string()];
    expected.extend(feature_names.iter().cloned());
    expected.extend(target_names.iter().cloned());

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(format!("feature CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() != expected.len() {
        return Err(Error::schema(format!(
            "feature CSV has {} columns, schema `{}` expects {}",
            header.len(),
            schema.name(),
            expected.len()
        )));
    }
    for (i, (got, want)) in header.iter().zip(expected.iter()).enumerate() {
        if got != want {
            return Err(Error::schema(format!(
                "feature CSV column {} is `{got}`, schema `{}` expects `{want}`",
                i + 1,
                schema.name()
            )));
        }
    }

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut provenance = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::data(format!("feature CSV row {}: {e}", r + 2)))?;
        let line = r + 2;
        let cell = |c: usize| -> &str { record.get(c).unwrap_or("") };
        let case_id = cell(0).to_string();
        if case_id.is_empty() {
            return Err(Error::data(format!("row {line}: empty case_id")));
        }
        let cut_index: usize = cell(1).parse().map_err(|_| {
            Error::data(format!("row {line}, column cut_index: `{}`", cell(1)))
        })?;
        for (j, name) in feature_names.iter().enumerate() {
            let raw = cell(2 + j);
            if raw.is_empty() {
                xs.push(f64::NAN);
                continue;
            }
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::data(format!("row {line}, column {name}: `{raw}`")))?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "row {line}, column {name}: non-finite value `{raw}`"
                )));
            }
            xs.push(v);
        }
        for (j, name) in target_names.iter().enumerate() {
            let raw = cell(2 + feature_names.len() + j);
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::data(format!("row {line}, column {name}: `{raw}`")))?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "row {line}, column {name}: non-finite value `{raw}`"
                )));
            }
            ys.push(v);
        }
        provenance.push((case_id, cut_index));
    }
    if provenance.is_empty() {
        return Err(Error::data("feature CSV has no rows"));
    }
    let n = provenance.len();
    Dataset::new(
        DMatrix::from_row_slice(n, feature_names.len(), &xs),
        DMatrix::from_row_slice(n, target_names.len(), &ys),
        feature_names,
        target_names,
        provenance,
    )
}

/// Load a feature CSV from disk; see [`load_features_str`].
pub fn load_features(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    load_features_str(&text, schema).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}
