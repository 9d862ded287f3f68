//! Feature extraction: per-cut monitoring signals plus process parameters
//! become normalized feature rows.
//!
//! Each supervised row summarizes the signal window for one cut — by
//! default the cumulative window from the start of cut 1 through the end of
//! the row's cut — as per-channel (min, max, mean), concatenated after the
//! case's scalar process parameters. Rows for cuts without a wear
//! measurement are dropped and counted.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::data::{Dataset, FeatureSchema, CHANNEL_STATS};
use crate::{Error, Result};

/// One channel's samples for one cut.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSeries {
    pub channel: String,
    pub values: Vec<f64>,
    pub units: String,
}

impl SignalSeries {
    pub fn new(channel: impl Into<String>, values: Vec<f64>, units: impl Into<String>) -> Result<Self> {
        let channel = channel.into();
        if values.is_empty() {
            return Err(Error::invalid(format!("channel `{channel}`: empty signal")));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "channel `{channel}`: non-finite sample at index {bad}"
            )));
        }
        Ok(SignalSeries {
            channel,
            values,
            units: units.into(),
        })
    }
}

/// Everything recorded for one machining pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CutRecord {
    pub case_id: String,
    pub cut_index: usize,
    pub process_params: BTreeMap<String, f64>,
    pub signals: BTreeMap<String, SignalSeries>,
    /// Measured flank wear in mm; absent when no measurement was taken.
    pub vb: Option<f64>,
}

impl CutRecord {
    pub fn new(
        case_id: impl Into<String>,
        cut_index: usize,
        process_params: BTreeMap<String, f64>,
        signals: BTreeMap<String, SignalSeries>,
        vb: Option<f64>,
    ) -> Result<Self> {
        let case_id = case_id.into();
        if cut_index == 0 {
            return Err(Error::invalid(format!("case `{case_id}`: cut_index must be >= 1")));
        }
        if let Some((name, value)) = process_params.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "case `{case_id}` cut {cut_index}: parameter `{name}` = {value}"
            )));
        }
        if let Some(vb) = vb {
            if !vb.is_finite() || vb < 0.0 {
                return Err(Error::invalid(format!(
                    "case `{case_id}` cut {cut_index}: vb {vb} must be finite and >= 0"
                )));
            }
        }
        Ok(CutRecord {
            case_id,
            cut_index,
            process_params,
            signals,
            vb,
        })
    }
}

/// Which signal window a row summarizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Everything from the start of cut 1 through the row's cut.
    #[default]
    Cumulative,
    /// Only the row's own cut; a sensitivity variant.
    PerCut,
}

/// Exact min/max and arithmetic mean of a segment.
pub fn extract_stats(segment: &[f64]) -> Result<(f64, f64, f64)> {
    if segment.is_empty() {
        return Err(Error::invalid("extract_stats: empty segment"));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in segment {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    Ok((min, max, sum / segment.len() as f64))
}

/// Sort one case's cuts by index and verify they are 1..=len with no gap
/// or duplicate (required for cumulative windows).
fn contiguous_cuts<'a>(cuts: &[&'a CutRecord]) -> Result<Vec<&'a CutRecord>> {
    let mut sorted = cuts.to_vec();
    sorted.sort_by_key(|c| c.cut_index);
    for (i, cut) in sorted.iter().enumerate() {
        if cut.cut_index != i + 1 {
            return Err(Error::data(format!(
                "case `{}`: cut {} missing (found cut {})",
                cut.case_id,
                i + 1,
                cut.cut_index
            )));
        }
    }
    Ok(sorted)
}

/// Per-channel concatenation of samples from the start of cut 1 through the
/// end of cut `n`. `cuts` holds one case's records in any order.
pub fn cumulative_window(cuts: &[&CutRecord], n: usize) -> Result<BTreeMap<String, Vec<f64>>> {
    if n == 0 {
        return Err(Error::invalid("cumulative_window: n must be >= 1"));
    }
    let sorted = contiguous_cuts(cuts)?;
    if sorted.len() < n {
        let case = sorted
            .first()
            .map(|c| c.case_id.as_str())
            .unwrap_or("<empty>");
        return Err(Error::data(format!(
            "case `{case}`: cut {n} missing (have {} cuts)",
            sorted.len()
        )));
    }
    let mut window: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for cut in &sorted[..n] {
        for (channel, series) in &cut.signals {
            window
                .entry(channel.clone())
                .or_default()
                .extend_from_slice(&series.values);
        }
    }
    Ok(window)
}

/// Running (min, max, sum, count) over a growing window. Appending cut
/// n+1's samples gives exactly the stats of the concatenated window, so
/// cumulative rows cost one pass over each sample.
#[derive(Debug, Clone, Copy)]
struct StatAccumulator {
    min: f64,
    max: f64,
    sum: f64,
    count: usize,
}

impl StatAccumulator {
    fn new() -> Self {
        StatAccumulator {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            sum: 0.0,
            count: 0,
        }
    }

    fn absorb(&mut self, values: &[f64]) {
        for &v in values {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
            self.sum += v;
        }
        self.count += values.len();
    }

    fn stats(&self) -> (f64, f64, f64) {
        (self.min, self.max, self.sum / self.count as f64)
    }
}

/// One supervised sample: schema-ordered features and the wear target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: Vec<f64>,
    pub target: f64,
    pub case_id: String,
    pub cut_index: usize,
}

/// What happened during extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractionReport {
    pub rows: usize,
    /// Cuts skipped because no wear measurement exists.
    pub dropped_unmeasured: usize,
}

fn check_cut_schema(cut: &CutRecord, schema: &FeatureSchema) -> Result<()> {
    let want_params: BTreeSet<&str> = schema.process_params().iter().map(String::as_str).collect();
    let have_params: BTreeSet<&str> = cut.process_params.keys().map(String::as_str).collect();
    if want_params != have_params {
        let missing: Vec<&&str> = want_params.difference(&have_params).collect();
        let extra: Vec<&&str> = have_params.difference(&want_params).collect();
        return Err(Error::schema(format!(
            "case `{}` cut {}: process params missing {missing:?}, unexpected {extra:?}",
            cut.case_id, cut.cut_index
        )));
    }
    let want_channels: BTreeSet<&str> = schema.channels().collect();
    let have_channels: BTreeSet<&str> = cut.signals.keys().map(String::as_str).collect();
    if want_channels != have_channels {
        let missing: Vec<&&str> = want_channels.difference(&have_channels).collect();
        let extra: Vec<&&str> = have_channels.difference(&want_channels).collect();
        return Err(Error::schema(format!(
            "case `{}` cut {}: channels missing {missing:?}, unexpected {extra:?}",
            cut.case_id, cut.cut_index
        )));
    }
    Ok(())
}

/// Turn cut records into supervised rows, ordered by (case_id, cut_index).
/// Cuts without a wear measurement still extend the window but produce no
/// row; they are counted in the report.
pub fn build_rows(
    cuts: &[CutRecord],
    schema: &FeatureSchema,
    mode: WindowMode,
) -> Result<(Vec<FeatureRow>, ExtractionReport)> {
    let mut by_case: BTreeMap<&str, Vec<&CutRecord>> = BTreeMap::new();
    for cut in cuts {
        check_cut_schema(cut, schema)?;
        by_case.entry(&cut.case_id).or_default().push(cut);
    }
    let channels: Vec<&str> = schema.channels().collect();
    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for (_, case_cuts) in by_case {
        let sorted = match mode {
            WindowMode::Cumulative => contiguous_cuts(&case_cuts)?,
            WindowMode::PerCut => {
                let mut s = case_cuts.clone();
                s.sort_by_key(|c| c.cut_index);
                if let Some(pair) = s.windows(2).find(|p| p[0].cut_index == p[1].cut_index) {
                    return Err(Error::data(format!(
                        "case `{}`: duplicate cut {}",
                        pair[0].case_id, pair[0].cut_index
                    )));
                }
                s
            }
        };
        let mut acc: BTreeMap<&str, StatAccumulator> = channels
            .iter()
            .map(|&c| (c, StatAccumulator::new()))
            .collect();
        for cut in sorted {
            if mode == WindowMode::PerCut {
                acc.values_mut().for_each(|a| *a = StatAccumulator::new());
            }
            for (channel, series) in &cut.signals {
                acc.get_mut(channel.as_str())
                    .expect("checked against schema")
                    .absorb(&series.values);
            }
            let Some(vb) = cut.vb else {
                dropped += 1;
                continue;
            };
            let mut features = Vec::with_capacity(schema.feature_len());
            for p in schema.process_params() {
                features.push(cut.process_params[p]);
            }
            for &channel in &channels {
                let (min, max, mean) = acc[channel].stats();
                debug_assert_eq!(CHANNEL_STATS, ["min", "max", "mean"]);
                features.extend_from_slice(&[min, max, mean]);
            }
            rows.push(FeatureRow {
                features,
                target: vb,
                case_id: cut.case_id.clone(),
                cut_index: cut.cut_index,
            });
        }
    }
    let report = ExtractionReport {
        rows: rows.len(),
        dropped_unmeasured: dropped,
    };
    Ok((rows, report))
}

/// Assemble extracted rows into a typed dataset over the schema's columns.
pub fn rows_to_dataset(rows: &[FeatureRow], schema: &FeatureSchema) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::data("no supervised rows (every cut unmeasured?)"));
    }
    let d = schema.feature_len();
    if let Some(bad) = rows.iter().find(|r| r.features.len() != d) {
        return Err(Error::shape(format!(
            "case `{}` cut {}: {} features, schema `{}` has {d}",
            bad.case_id,
            bad.cut_index,
            bad.features.len(),
            schema.name()
        )));
    }
    if schema.target_names().len() != 1 {
        return Err(Error::schema(format!(
            "extraction emits a single wear target; schema `{}` declares {}",
            schema.name(),
            schema.target_names().len()
        )));
    }
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i].features[j]);
    let y = DMatrix::from_fn(rows.len(), 1, |i, _| rows[i].target);
    let provenance = rows
        .iter()
        .map(|r| (r.case_id.clone(), r.cut_index))
        .collect();
    Dataset::new(
        x,
        y,
        schema.feature_names(),
        schema.target_names().to_vec(),
        provenance,
    )
}

/// Per-column MinMax parameters, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalerParams {
    /// (min, max) per column; empty means unfitted.
    cols: Vec<(f64, f64)>,
}

impl ScalerParams {
    pub fn unfitted() -> Self {
        ScalerParams::default()
    }

    /// Rebuild from stored (min, max) pairs.
    pub fn from_cols(cols: Vec<(f64, f64)>) -> Result<Self> {
        let ordered = |min: &f64, max: &f64| min.is_finite() && max.is_finite() && max >= min;
        if let Some((min, max)) = cols.iter().find(|(min, max)| !ordered(min, max)) {
            return Err(Error::invalid(format!(
                "scaler column with invalid range ({min}, {max})"
            )));
        }
        Ok(ScalerParams { cols })
    }

    /// Column-wise min/max over observed (non-missing) cells. A column with
    /// no observed cell gets (0, 0) and scales to the constant 0.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("scaler fit on zero rows"));
        }
        let cols = (0..x.ncols())
            .map(|j| {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for v in x.column(j).iter().filter(|v| !v.is_nan()) {
                    min = min.min(*v);
                    max = max.max(*v);
                }
                if min > max {
                    (0.0, 0.0)
                } else {
                    (min, max)
                }
            })
            .collect();
        Ok(ScalerParams { cols })
    }

    pub fn is_fitted(&self) -> bool {
        !self.cols.is_empty()
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn cols(&self) -> &[(f64, f64)] {
        &self.cols
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if !self.is_fitted() {
            return Err(Error::state("scaler has not been fitted"));
        }
        if x.ncols() != self.cols.len() {
            return Err(Error::shape(format!(
                "scaler fitted on {} columns, input has {}",
                self.cols.len(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Map each column through (v − min)/(max − min). Constant columns map
    /// to 0; missing markers pass through; out-of-range values (test rows
    /// beyond the training envelope) are not clamped.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let mut out = x.clone();
        for j in 0..out.ncols() {
            let (min, max) = self.cols[j];
            let span = max - min;
            for v in out.column_mut(j).iter_mut() {
                if v.is_nan() {
                    continue;
                }
                *v = if span == 0.0 { 0.0 } else { (*v - min) / span };
            }
        }
        Ok(out)
    }

    /// Exact inverse of [`ScalerParams::apply`] on non-constant columns;
    /// constant columns invert to their single training value.
    pub fn invert(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x)?;
        let mut out = x.clone();
        for j in 0..out.ncols() {
            let (min, max) = self.cols[j];
            let span = max - min;
            for v in out.column_mut(j).iter_mut() {
                if v.is_nan() {
                    continue;
                }
                *v = if span == 0.0 { min } else { *v * span + min };
            }
        }
        Ok(out)
    }
}

/// Dataset manifest: which cases exist, where their per-cut signal files
/// live, and which CSV holds the wear measurements.
///
/// TOML layout (paths are resolved relative to the manifest file):
///
/// ```toml
/// schema = "inhouse"
/// vb_csv = "vb.csv"            # case_id,cut_index,vb_mm; empty vb = unmeasured
/// window_mode = "cumulative"   # optional; or "per_cut"
///
/// [[case]]
/// id = "t01"
/// dir = "t01"                  # holds <channel>_<cut_index>.csv per channel
/// cuts = 4
/// params = { doc = 1.5 }       # keys = the schema's process parameters
/// ```
#[derive(Debug, Clone, serde::Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub vb_csv: String,
    #[serde(default)]
    pub window_mode: WindowMode,
    #[serde(rename = "case")]
    pub cases: Vec<ManifestCase>,
}

#[derive(Debug, Clone, serde::Deserialize)]
pub struct ManifestCase {
    pub id: String,
    pub dir: String,
    pub cuts: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|e| Error::schema(format!("{}: {e}", path.display())))?;
        if manifest.cases.is_empty() {
            return Err(Error::schema(format!(
                "{}: manifest declares no cases",
                path.display()
            )));
        }
        let mut ids = BTreeSet::new();
        for case in &manifest.cases {
            if case.cuts == 0 {
                return Err(Error::schema(format!(
                    "{}: case `{}` has zero cuts",
                    path.display(),
                    case.id
                )));
            }
            if !ids.insert(&case.id) {
                return Err(Error::schema(format!(
                    "{}: duplicate case `{}`",
                    path.display(),
                    case.id
                )));
            }
        }
        Ok(manifest)
    }
}

/// Read a single-channel signal CSV: one `value` column, header optional.
pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        if i == 0 && cell.eq_ignore_ascii_case("value") {
            continue;
        }
        let v: f64 = cell.parse().map_err(|_| {
            Error::data(format!("{}:{}: bad sample `{cell}`", path.display(), i + 1))
        })?;
        if !v.is_finite() {
            return Err(Error::data(format!(
                "{}:{}: non-finite sample",
                path.display(),
                i + 1
            )));
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::data(format!("{}: no samples", path.display())));
    }
    Ok(values)
}

/// Read the wear-measurement CSV (`case_id,cut_index,vb_mm`; empty vb for
/// unmeasured cuts).
pub fn read_vb_csv(path: impl AsRef<Path>) -> Result<BTreeMap<(String, usize), Option<f64>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .clone();
    let expect = ["case_id", "cut_index", "vb_mm"];
    if header.iter().ne(expect) {
        return Err(Error::schema(format!(
            "{}: header must be `case_id,cut_index,vb_mm`",
            path.display()
        )));
    }
    let mut vb = BTreeMap::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record =
            record.map_err(|e| Error::data(format!("{}:{line}: {e}", path.display())))?;
        let case = record.get(0).unwrap_or("").to_string();
        let cut: usize = record.get(1).unwrap_or("").parse().map_err(|_| {
            Error::data(format!(
                "{}:{line}: bad cut_index `{}`",
                path.display(),
                record.get(1).unwrap_or("")
            ))
        })?;
        let raw = record.get(2).unwrap_or("");
        let value = if raw.is_empty() {
            None
        } else {
            let v: f64 = raw.parse().map_err(|_| {
                Error::data(format!("{}:{line}: bad vb_mm `{raw}`", path.display()))
            })?;
            Some(v)
        };
        if vb.insert((case.clone(), cut), value).is_some() {
            return Err(Error::data(format!(
                "{}:{line}: duplicate measurement for case `{case}` cut {cut}",
                path.display()
            )));
        }
    }
    Ok(vb)
}

/// Read every case's signals per the manifest and assemble cut records.
/// Signal files are expected at `<case dir>/<channel>_<cut_index>.csv`.
pub fn ingest(manifest: &Manifest, manifest_dir: impl AsRef<Path>) -> Result<Vec<CutRecord>> {
    let base = manifest_dir.as_ref();
    let schema = FeatureSchema::by_name(&manifest.schema)?;
    let vb = read_vb_csv(base.join(&manifest.vb_csv))?;
    let mut cuts = Vec::new();
    for case in &manifest.cases {
        let dir: PathBuf = base.join(&case.dir);
        for cut_index in 1..=case.cuts {
            let mut signals = BTreeMap::new();
            for channel in schema.channels() {
                let path = dir.join(format!("{channel}_{cut_index}.csv"));
                let values = read_signal_csv(&path)?;
                let units = schema.channel_unit(channel).unwrap_or("");
                signals.insert(
                    channel.to_string(),
                    SignalSeries::new(channel, values, units)?,
                );
            }
            let measured = vb.get(&(case.id.clone(), cut_index)).copied().flatten();
            cuts.push(CutRecord::new(
                case.id.clone(),
                cut_index,
                case.params.clone(),
                signals,
                measured,
            )?);
        }
    }
    Ok(cuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mini_schema() -> FeatureSchema {
        FeatureSchema::new(
            "mini",
            vec!["doc".into()],
            vec![("s".into(), String::new()), ("t".into(), String::new())],
            vec!["vb_mm".into()],
        )
        .unwrap()
    }

    fn cut(case: &str, idx: usize, s: Vec<f64>, t: Vec<f64>, vb: Option<f64>) -> CutRecord {
        let mut signals = BTreeMap::new();
        signals.insert("s".to_string(), SignalSeries::new("s", s, "").unwrap());
        signals.insert("t".to_string(), SignalSeries::new("t", t, "").unwrap());
        let mut params = BTreeMap::new();
        params.insert("doc".to_string(), 1.5);
        CutRecord::new(case, idx, params, signals, vb).unwrap()
    }

    #[test]
    fn stats_hand_checks() {
        assert_eq!(extract_stats(&[3.0]).unwrap(), (3.0, 3.0, 3.0));
        assert_eq!(extract_stats(&[-1.0, 0.0, 4.0]).unwrap(), (-1.0, 4.0, 1.0));
        assert_eq!(extract_stats(&[2.0; 7]).unwrap(), (2.0, 2.0, 2.0));
        assert!(extract_stats(&[]).is_err());
    }

    #[test]
    fn window_concatenates_prefixes() {
        let cuts = [cut("a", 1, vec![1.0; 10], vec![0.0; 10], Some(0.1)),
            cut("a", 2, vec![2.0; 20], vec![0.0; 20], Some(0.2)),
            cut("a", 3, vec![3.0; 5], vec![0.0; 5], Some(0.3))];
        let refs: Vec<&CutRecord> = cuts.iter().collect();
        let w1 = cumulative_window(&refs, 1).unwrap();
        assert_eq!(w1["s"], vec![1.0; 10]);
        let w3 = cumulative_window(&refs, 3).unwrap();
        assert_eq!(w3["s"].len(), 35);
        for n in 1..3 {
            let a = cumulative_window(&refs, n).unwrap();
            let b = cumulative_window(&refs, n + 1).unwrap();
            assert_eq!(a["s"], b["s"][..a["s"].len()]);
        }
    }

    #[test]
    fn window_gap_is_named() {
        let cuts = [cut("a", 1, vec![1.0], vec![1.0], Some(0.1)),
            cut("a", 3, vec![3.0], vec![3.0], Some(0.3))];
        let refs: Vec<&CutRecord> = cuts.iter().collect();
        let err = cumulative_window(&refs, 2).unwrap_err();
        assert!(err.to_string().contains("cut 2 missing"), "{err}");
    }

    #[test]
    fn rows_drop_unmeasured_cuts() {
        let cuts = vec![
            cut("a", 1, vec![1.0], vec![5.0], Some(0.1)),
            cut("a", 2, vec![2.0], vec![6.0], None),
            cut("a", 3, vec![3.0], vec![7.0], Some(0.3)),
        ];
        let (rows, report) = build_rows(&cuts, &mini_schema(), WindowMode::Cumulative).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(report.dropped_unmeasured, 1);
        assert_eq!(report.rows, 2);
        // Unmeasured cut 2 still contributes samples to cut 3's window.
        assert_eq!(rows[1].cut_index, 3);
        assert_eq!(rows[1].features, vec![1.5, 1.0, 3.0, 2.0, 5.0, 7.0, 6.0]);
    }

    #[test]
    fn accumulators_match_recomputed_windows() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let cuts: Vec<CutRecord> = (1..=6)
            .map(|i| {
                let len = rng.random_range(1..40);
                let s: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
                let t: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
                cut("a", i, s, t, Some(0.01 * i as f64))
            })
            .collect();
        let (rows, _) = build_rows(&cuts, &mini_schema(), WindowMode::Cumulative).unwrap();
        let refs: Vec<&CutRecord> = cuts.iter().collect();
        for (i, row) in rows.iter().enumerate() {
            let window = cumulative_window(&refs, i + 1).unwrap();
            for (c, channel) in ["s", "t"].iter().enumerate() {
                let (min, max, mean) = extract_stats(&window[*channel]).unwrap();
                assert_eq!(row.features[1 + 3 * c], min);
                assert_eq!(row.features[2 + 3 * c], max);
                assert!((row.features[3 + 3 * c] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn per_cut_mode_ignores_history() {
        let cuts = vec![
            cut("a", 1, vec![100.0], vec![0.0], Some(0.1)),
            cut("a", 2, vec![2.0], vec![1.0], Some(0.2)),
        ];
        let (rows, _) = build_rows(&cuts, &mini_schema(), WindowMode::PerCut).unwrap();
        assert_eq!(rows[1].features, vec![1.5, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn rows_follow_case_then_cut_order() {
        let cuts = vec![
            cut("b", 1, vec![1.0], vec![1.0], Some(0.2)),
            cut("a", 2, vec![1.0], vec![1.0], Some(0.15)),
            cut("a", 1, vec![1.0], vec![1.0], Some(0.1)),
        ];
        let (rows, _) = build_rows(&cuts, &mini_schema(), WindowMode::Cumulative).unwrap();
        let order: Vec<(&str, usize)> = rows
            .iter()
            .map(|r| (r.case_id.as_str(), r.cut_index))
            .collect();
        assert_eq!(order, vec![("a", 1), ("a", 2), ("b", 1)]);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let mut bad = cut("a", 1, vec![1.0], vec![1.0], Some(0.1));
        bad.process_params.clear();
        let err = build_rows(
            std::slice::from_ref(&bad),
            &mini_schema(),
            WindowMode::Cumulative,
        )
        .unwrap_err();
        assert!(err.to_string().contains("process params"), "{err}");

        let mut extra = cut("a", 1, vec![1.0], vec![1.0], Some(0.1));
        extra.signals.remove("t");
        let err = build_rows(
            std::slice::from_ref(&extra),
            &mini_schema(),
            WindowMode::Cumulative,
        )
        .unwrap_err();
        assert!(err.to_string().contains("channels"), "{err}");
    }

    #[test]
    fn dataset_assembly() {
        let cuts = vec![
            cut("a", 1, vec![0.0, 2.0], vec![1.0], Some(0.1)),
            cut("a", 2, vec![4.0], vec![-1.0], Some(0.2)),
        ];
        let schema = mini_schema();
        let (rows, _) = build_rows(&cuts, &schema, WindowMode::Cumulative).unwrap();
        let ds = rows_to_dataset(&rows, &schema).unwrap();
        assert_eq!(ds.feature_names[0], "doc");
        assert_eq!(ds.feature_names[1], "s_min");
        assert_eq!(ds.x[(1, 2)], 4.0);
        assert_eq!(ds.y[(0, 0)], 0.1);
        assert_eq!(ds.provenance[1], ("a".to_string(), 2));
    }

    #[test]
    fn scaler_maps_training_columns_to_unit_range() {
        let x = DMatrix::from_column_slice(3, 1, &[2.0, 4.0, 6.0]);
        let scaler = ScalerParams::fit(&x).unwrap();
        let scaled = scaler.apply(&x).unwrap();
        assert_eq!(scaled.as_slice(), &[0.0, 0.5, 1.0]);
        // Out-of-range test values are not clamped.
        let test = DMatrix::from_column_slice(1, 1, &[8.0]);
        assert_eq!(scaler.apply(&test).unwrap()[(0, 0)], 1.5);
    }

    #[test]
    fn scaler_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = DMatrix::from_fn(20, 4, |_, _| rng.random_range(-10.0..10.0));
        let scaler = ScalerParams::fit(&x).unwrap();
        let back = scaler.invert(&scaler.apply(&x).unwrap()).unwrap();
        assert!((back - &x).abs().max() < 1e-12);
    }

    #[test]
    fn scaler_handles_constant_and_missing() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, f64::NAN, 3.0, 1.0]);
        let scaler = ScalerParams::fit(&x).unwrap();
        let scaled = scaler.apply(&x).unwrap();
        assert_eq!(scaled[(0, 0)], 0.0);
        assert_eq!(scaled[(1, 0)], 0.0);
        assert!(scaled[(0, 1)].is_nan());
        assert_eq!(scaled[(1, 1)], 0.0);
        // Constant column inverts to its training value.
        assert_eq!(scaler.invert(&scaled).unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn unfitted_scaler_is_a_state_error() {
        let x = DMatrix::from_element(1, 1, 0.5);
        let err = ScalerParams::unfitted().apply(&x).unwrap_err();
        assert!(matches!(err, Error::State(_)), "{err}");
    }

    #[test]
    fn manifest_ingestion_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path();
        std::fs::create_dir(base.join("t01")).unwrap();
        std::fs::write(base.join("t01/force_x_1.csv"), "value\n1.0\n2.0\n").unwrap();
        std::fs::write(base.join("t01/force_y_1.csv"), "0.5\n").unwrap();
        std::fs::write(base.join("t01/force_z_1.csv"), "0.25\n").unwrap();
        std::fs::write(base.join("t01/ae_rms_1.csv"), "0.1\n0.2\n0.3\n").unwrap();
        for ch in ["force_x", "force_y", "force_z", "ae_rms"] {
            std::fs::write(base.join(format!("t01/{ch}_2.csv")), "9.0\n").unwrap();
        }
        std::fs::write(base.join("vb.csv"), "case_id,cut_index,vb_mm\nt01,1,0.2\nt01,2,\n")
            .unwrap();
        let manifest_text = "schema = \"inhouse\"\nvb_csv = \"vb.csv\"\n\n[[case]]\nid = \"t01\"\ndir = \"t01\"\ncuts = 2\n";
        std::fs::write(base.join("manifest.toml"), manifest_text).unwrap();

        let manifest = Manifest::load(base.join("manifest.toml")).unwrap();
        assert_eq!(manifest.window_mode, WindowMode::Cumulative);
        let cuts = ingest(&manifest, base).unwrap();
        assert_eq!(cuts.len(), 2);
        assert_eq!(cuts[0].signals["force_x"].values, vec![1.0, 2.0]);
        assert_eq!(cuts[0].vb, Some(0.2));
        assert_eq!(cuts[1].vb, None);

        let schema = FeatureSchema::inhouse();
        let (rows, report) = build_rows(&cuts, &schema, manifest.window_mode).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(report.dropped_unmeasured, 1);
    }

    #[test]
    fn corrupted_signal_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s_1.csv");
        std::fs::write(&path, "value\noops\n").unwrap();
        let err = read_signal_csv(&path).unwrap_err();
        assert!(err.to_string().contains("bad sample"), "{err}");
        std::fs::write(&path, "").unwrap();
        assert!(read_signal_csv(&path).unwrap_err().to_string().contains("no samples"));
    }

    #[test]
    fn vb_csv_schema_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vb.csv");
        std::fs::write(&path, "case,cut,vb\na,1,0.1\n").unwrap();
        assert!(read_vb_csv(&path).is_err());
        std::fs::write(&path, "case_id,cut_index,vb_mm\na,1,0.1\na,1,0.2\n").unwrap();
        assert!(read_vb_csv(&path).unwrap_err().to_string().contains("duplicate"));
    }
}
