//! Standard errors, tests and fit statistics.
//!
//! For the window-intercept fit the slope covariance is `sigma2_hat * S^{-1}`, where `S` is
//! the pooled within-window scatter and `sigma2_hat = RSS / (n - T - p)`. Since
//! `S ~ n (1 - 1/n0) Sigma_xx`, this carries the `n0 / (n0 - 1)` inflation relative to OLS.
//! Tests use the standard normal reference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bounds::BoundsEstimate;
use crate::data::Dataset;
use crate::error::{EmmbError, Result};
use crate::estimator::{EmFit, EstimatorDiagnostics, OlsFit};
use crate::linalg::SpdFactor;
use crate::report::{csv_num, fmt4, fmt_p, TableFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefTable {
    pub rows: Vec<CoefRow>,
    /// Pooled residual variance estimate.
    pub sigma_tilde2: f64,
    pub r2: f64,
    pub adj_r2: f64,
    /// Residual degrees of freedom.
    pub df: usize,
}

impl CoefTable {
    pub fn row(&self, name: &str) -> Option<&CoefRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Two-sided normal p-value `2 (1 - Phi(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    let n = Normal::standard();
    (2.0 * n.cdf(-z.abs())).min(1.0)
}

fn z_stat(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        estimate / se
    } else if estimate == 0.0 {
        0.0
    } else {
        estimate.signum() * f64::INFINITY
    }
}

fn residual_df(n: usize, windows: usize, p: usize) -> Result<usize> {
    n.checked_sub(windows + p)
        .filter(|&df| df > 0)
        .ok_or(EmmbError::NonPositiveDf { n, windows, p })
}

/// `sigma2_hat = sum residual_i^2 / (n - T - p)`.
pub fn estimate_sigma_tilde2(fit: &EmFit) -> Result<f64> {
    let df = residual_df(fit.residuals.len(), fit.plan.len(), fit.beta_hat.len())?;
    Ok(fit.rss() / df as f64)
}

/// R^2 with fitted values `x_i' beta_hat + nu_hat_i`, TSS about the global mean, and the
/// adjusted version with `n - T - p - 1` residual degrees of freedom.
pub fn fit_statistics(fit: &EmFit, data: &Dataset) -> Result<(f64, f64)> {
    let tss = total_ss(data)?;
    let r2 = 1.0 - fit.rss() / tss;
    let n = data.n();
    let used = fit.plan.len() + data.p() + 1;
    if n <= used {
        return Err(EmmbError::NonPositiveDf {
            n,
            windows: fit.plan.len(),
            p: data.p(),
        });
    }
    let adj = 1.0 - (1.0 - r2) * (n - 1) as f64 / (n - used) as f64;
    Ok((r2, adj))
}

fn total_ss(data: &Dataset) -> Result<f64> {
    let mean = data.y().mean();
    let tss = data.y().iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    if !(tss > 0.0) {
        return Err(EmmbError::ZeroTotalSumOfSquares);
    }
    Ok(tss)
}

fn rows_from_cov(names: &[String], estimates: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<CoefRow> {
    names
        .iter()
        .zip(estimates.iter())
        .enumerate()
        .map(|(k, (name, &estimate))| {
            let std_error = cov[(k, k)].max(0.0).sqrt();
            let z = z_stat(estimate, std_error);
            CoefRow {
                name: name.clone(),
                estimate,
                std_error,
                z,
                p_value: two_sided_p(z),
            }
        })
        .collect()
}

/// Coefficient table for a window-intercept fit.
///
/// Unweighted fits use `sigma2_hat * S^{-1}`. When the diagnostics carry inverse-variance
/// group weights the scatter already embeds them and the covariance is `S_w^{-1}`.
pub fn coef_inference(data: &Dataset, fit: &EmFit, diag: &EstimatorDiagnostics) -> Result<CoefTable> {
    let sigma2 = estimate_sigma_tilde2(fit)?;
    let inv = SpdFactor::new(&diag.within_scatter, "pooled within-window scatter")?.inverse();
    let cov = if diag.window_weights.is_some() { inv } else { inv * sigma2 };
    let (r2, adj_r2) = fit_statistics(fit, data)?;
    Ok(CoefTable {
        rows: rows_from_cov(data.names(), &fit.beta_hat, &cov),
        sigma_tilde2: sigma2,
        r2,
        adj_r2,
        df: residual_df(data.n(), fit.plan.len(), data.p())?,
    })
}

/// Classical OLS table; the intercept row is appended last as `(Intercept)`.
pub fn ols_inference(data: &Dataset, ols: &OlsFit) -> Result<CoefTable> {
    let (n, p) = (data.n(), data.p());
    let df = residual_df(n, 1, p)?;
    let rss = ols.residuals.norm_squared();
    let sigma2 = rss / df as f64;
    let x_mean = data.x().row_mean();
    let xc = DMatrix::from_fn(n, p, |i, j| data.x()[(i, j)] - x_mean[j]);
    let inv = SpdFactor::new(&xc.tr_mul(&xc), "OLS design [1, X]")?.inverse();
    let mut rows = rows_from_cov(data.names(), &ols.beta, &(&inv * sigma2));
    let xm = x_mean.transpose();
    let var0 = sigma2 * (1.0 / n as f64 + (xm.transpose() * &inv * &xm)[0]);
    let se0 = var0.max(0.0).sqrt();
    let z0 = z_stat(ols.intercept, se0);
    rows.push(CoefRow {
        name: "(Intercept)".into(),
        estimate: ols.intercept,
        std_error: se0,
        z: z0,
        p_value: two_sided_p(z0),
    });
    let tss = total_ss(data)?;
    let r2 = 1.0 - rss / tss;
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / df as f64;
    Ok(CoefTable {
        rows,
        sigma_tilde2: sigma2,
        r2,
        adj_r2,
        df,
    })
}

/// Side-by-side OLS / window-intercept table: coefficients and p-values per method,
/// then the intercept bounds, the OLS intercept, and R^2.
pub fn render_comparison(
    ols: &CoefTable,
    emmb: &CoefTable,
    bounds: &BoundsEstimate,
    format: TableFormat,
) -> String {
    let slopes: Vec<&CoefRow> = emmb.rows.iter().collect();
    let intercept = ols.row("(Intercept)");
    match format {
        TableFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| Parameter | OLS Coef. | OLS p-value | EMMB Coef. | EMMB p-value |\n");
            out.push_str("|---|---:|---:|---:|---:|\n");
            for (k, e) in slopes.iter().enumerate() {
                let o = ols.row(&e.name);
                out.push_str(&format!(
                    "| beta_{} ({}) | {} | {} | {} | {} |\n",
                    k + 1,
                    e.name,
                    o.map_or("--".into(), |r| fmt4(r.estimate)),
                    o.map_or("--".into(), |r| fmt_p(r.p_value)),
                    fmt4(e.estimate),
                    fmt_p(e.p_value)
                ));
            }
            out.push_str(&format!("| mu_upper | -- | -- | {} | -- |\n", fmt4(bounds.mu_upper_hat)));
            out.push_str(&format!("| mu_lower | -- | -- | {} | -- |\n", fmt4(bounds.mu_lower_hat)));
            out.push_str(&format!(
                "| beta_0 (Intercept) | {} | -- | -- | -- |\n",
                intercept.map_or("--".into(), |r| fmt4(r.estimate))
            ));
            out.push_str(&format!("| R^2 | {:.3} | | {:.3} | |\n", ols.r2, emmb.r2));
            out.push_str(&format!("| Adjusted R^2 | {:.3} | | {:.3} | |\n", ols.adj_r2, emmb.adj_r2));
            out
        }
        TableFormat::Csv => {
            let mut out = String::from("parameter,ols_coef,ols_se,ols_p,emmb_coef,emmb_se,emmb_p\n");
            for e in &slopes {
                let o = ols.row(&e.name);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    e.name,
                    csv_num(o.map(|r| r.estimate)),
                    csv_num(o.map(|r| r.std_error)),
                    csv_num(o.map(|r| r.p_value)),
                    e.estimate,
                    e.std_error,
                    e.p_value
                ));
            }
            out.push_str(&format!("mu_upper,,,,{},,\n", bounds.mu_upper_hat));
            out.push_str(&format!("mu_lower,,,,{},,\n", bounds.mu_lower_hat));
            if let Some(r) = intercept {
                out.push_str(&format!("(Intercept),{},{},{},,,\n", r.estimate, r.std_error, r.p_value));
            }
            out.push_str(&format!("r2,{},,,{},,\n", ols.r2, emmb.r2));
            out.push_str(&format!("adj_r2,{},,,{},,\n", ols.adj_r2, emmb.adj_r2));
            out
        }
    }
}
