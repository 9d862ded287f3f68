//! Regression metrics in target units: mean absolute error, root mean
//! square error and the coefficient of determination, pooled over all
//! target entries or broken out per target column.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Point-estimate metrics over one set of (truth, prediction) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    /// Number of pooled entries the metrics were computed over.
    pub n: usize,
}

fn check_pair(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<()> {
    if y_true.nrows() == 0 || y_true.ncols() == 0 {
        return Err(Error::invalid("metrics: empty target matrix"));
    }
    if y_true.shape() != y_pred.shape() {
        return Err(Error::shape(format!(
            "metrics: truth is {}x{}, prediction is {}x{}",
            y_true.nrows(),
            y_true.ncols(),
            y_pred.nrows(),
            y_pred.ncols()
        )));
    }
    Ok(())
}

/// Mean absolute error pooled over every entry.
pub fn mae(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let n = (y_true.nrows() * y_true.ncols()) as f64;
    Ok((y_true - y_pred).abs().sum() / n)
}

/// Root mean square error pooled over every entry.
pub fn rmse(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let n = (y_true.nrows() * y_true.ncols()) as f64;
    Ok(((y_true - y_pred).norm_squared() / n).sqrt())
}

/// Coefficient of determination, 1 − SS_res/SS_tot, pooled over every
/// entry with a single grand mean.
pub fn r2(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<f64> {
    check_pair(y_true, y_pred)?;
    let mean = y_true.mean();
    let ss_tot: f64 = y_true.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid(
            "degenerate targets: zero variance, r2 undefined",
        ));
    }
    let ss_res = (y_true - y_pred).norm_squared();
    Ok(1.0 - ss_res / ss_tot)
}

/// All three metrics pooled over every entry.
pub fn report(y_true: &DMatrix<f64>, y_pred: &DMatrix<f64>) -> Result<MetricReport> {
    Ok(MetricReport {
        mae: mae(y_true, y_pred)?,
        rmse: rmse(y_true, y_pred)?,
        r2: r2(y_true, y_pred)?,
        n: y_true.nrows() * y_true.ncols(),
    })
}

/// Per-target-column breakdown, one report per column.
pub fn report_per_target(
    y_true: &DMatrix<f64>,
    y_pred: &DMatrix<f64>,
) -> Result<Vec<MetricReport>> {
    check_pair(y_true, y_pred)?;
    (0..y_true.ncols())
        .map(|j| {
            let t = DMatrix::from_column_slice(y_true.nrows(), 1, y_true.column(j).as_slice());
            let p = DMatrix::from_column_slice(y_pred.nrows(), 1, y_pred.column(j).as_slice());
            report(&t, &p)
        })
        .collect()
}

/// Header of the metric report CSV.
pub const REPORT_HEADER: &str = "split,target,mae,rmse,r2,n";

/// Render labeled reports as CSV. Each entry is (split, target, report);
/// callers use target name `all` for the pooled row.
pub fn report_csv(entries: &[(String, String, MetricReport)]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (split, target, r) in entries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            split, target, r.mae, r.rmse, r.r2, r.n
        ));
    }
    out
}
