//! The seven-metric regression evaluation suite.
//!
//! RAE and RSE divide by the raw magnitudes of the ground truth
//! (sum |y| and sum y^2), not by deviations from its mean, and r2 is the
//! square of Pearson r. Both conventions are isolated here so they can
//! be swapped in one place if a different reading is ever preferred.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub r: f64,
    pub r2: f64,
    pub mae: f64,
    pub rae: f64,
    pub mse: f64,
    pub rse: f64,
    pub rmse: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "n,r,r2,mae,rae,mse,rse,rmse";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n, self.r, self.r2, self.mae, self.rae, self.mse, self.rse, self.rmse
        )
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "  n     {}", self.n)?;
        writeln!(f, "  r     {:.4}", self.r)?;
        writeln!(f, "  r2    {:.4}", self.r2)?;
        writeln!(f, "  mae   {:.4}", self.mae)?;
        writeln!(f, "  rae   {:.4}", self.rae)?;
        writeln!(f, "  mse   {:.4}", self.mse)?;
        writeln!(f, "  rse   {:.4}", self.rse)?;
        write!(f, "  rmse  {:.4}", self.rmse)
    }
}

/// Evaluate predictions against ground truth. Pearson r is NaN (with a
/// warning) when either side has zero variance; RAE and RSE are NaN when
/// the ground truth is identically zero.
pub fn compute_metrics(actual: &[f64], predicted: &[f64]) -> Result<MetricsReport> {
    if actual.is_empty() {
        return Err(Error::Data("cannot evaluate zero samples".into()));
    }
    if actual.len() != predicted.len() {
        return Err(Error::Data(format!(
            "{} ground-truth values but {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    for (i, (y, p)) in actual.iter().zip(predicted).enumerate() {
        if !y.is_finite() || !p.is_finite() {
            return Err(Error::NonFinite(format!(
                "non-finite value at sample {i}: actual {y}, predicted {p}"
            )));
        }
    }

    let n = actual.len();
    let nf = n as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    let mut y_abs_sum = 0.0;
    let mut y_sq_sum = 0.0;
    for (y, p) in actual.iter().zip(predicted) {
        let e = p - y;
        abs_sum += e.abs();
        sq_sum += e * e;
        y_abs_sum += y.abs();
        y_sq_sum += y * y;
    }
    let mae = abs_sum / nf;
    let mse = sq_sum / nf;
    let rmse = mse.sqrt();
    let rae = if y_abs_sum > 0.0 {
        abs_sum / y_abs_sum
    } else {
        log::warn!("ground truth is identically zero; RAE and RSE are undefined");
        f64::NAN
    };
    let rse = if y_sq_sum > 0.0 { sq_sum / y_sq_sum } else { f64::NAN };

    let y_mean = actual.iter().sum::<f64>() / nf;
    let p_mean = predicted.iter().sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut y_var = 0.0;
    let mut p_var = 0.0;
    for (y, p) in actual.iter().zip(predicted) {
        cov += (y - y_mean) * (p - p_mean);
        y_var += (y - y_mean) * (y - y_mean);
        p_var += (p - p_mean) * (p - p_mean);
    }
    let r = if y_var > 0.0 && p_var > 0.0 {
        cov / (y_var.sqrt() * p_var.sqrt())
    } else {
        log::warn!("zero variance in actual or predicted values; r is undefined");
        f64::NAN
    };

    Ok(MetricsReport {
        n,
        r,
        r2: r * r,
        mae,
        rae,
        mse,
        rse,
        rmse,
    })
}
