//! Slope estimation with window-specific intercepts.
//!
//! The EM iteration alternates two exact coordinate minimizations of
//! `sum_i (y_i - nu_i - x_i' beta)^2`:
//!
//! * E-step: with `beta` fixed, each window intercept is the window mean of `y - X beta`;
//! * M-step: with `nu` fixed, `beta` solves the no-intercept normal equations of `y - nu` on `X`.
//!
//! Its fixed point is the within-window centered least-squares estimator, which
//! [`fit_closed_form`] computes directly. [`fit_em`] is kept for the iteration trace and to
//! check the two against each other.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{check_len, Dataset, PlanSource, WindowPlan};
use crate::error::{EmmbError, Result};
use crate::linalg::SpdFactor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmInit {
    /// Slopes of an ordinary least squares fit with a single intercept.
    #[default]
    Ols,
    Zeros,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once `||beta_new - beta_old||_2 < tol`.
    pub tol: f64,
    pub init: EmInit,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            init: EmInit::Ols,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(EmmbError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(EmmbError::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Euclidean norm of the slope update.
    pub beta_change: f64,
    /// `sum_i (y_i - nu_i - x_i' beta)^2` after the M-step.
    pub objective: f64,
}

/// Fitted slopes and window intercepts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub beta_hat: DVector<f64>,
    /// Per-row intercepts, constant within each window of `plan`.
    pub nu_hat: DVector<f64>,
    /// One intercept per window.
    pub window_intercepts: DVector<f64>,
    /// `y_i - x_i' beta_hat - nu_hat_i`.
    pub residuals: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub plan: WindowPlan,
    pub trace: Vec<IterationRecord>,
    /// Per-group residual variances used as inverse weights by [`fit_weighted_groups`].
    pub group_variances: Option<Vec<f64>>,
}

impl EmFit {
    pub fn rss(&self) -> f64 {
        self.residuals.norm_squared()
    }
}

/// Quantities behind the closed-form solution.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorDiagnostics {
    /// `sum_j sum_{i in j} w_j (x_i - xbar_j)(x_i - xbar_j)'`, with `w_j = 1` when unweighted.
    pub within_scatter: DMatrix<f64>,
    /// Row `j` holds the covariate means of window `j`.
    pub window_x_means: DMatrix<f64>,
    pub window_y_means: DVector<f64>,
    /// Pooled score `sum_j w_j sum_i (x_i - xbar_j)(ytilde_i - xtilde_i' beta)` at the fit.
    pub score: DVector<f64>,
    /// Inverse group variances applied, if any.
    pub window_weights: Option<Vec<f64>>,
}

/// Ordinary least squares with a single intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
}

/// E-step: the window means of `y - X beta`.
pub fn estep_intercepts(data: &Dataset, beta: &DVector<f64>, plan: &WindowPlan) -> Result<DVector<f64>> {
    plan.check_covers(data.n())?;
    let r = data.partial_residuals(beta)?;
    Ok(window_means(&r, plan))
}

fn window_means(v: &DVector<f64>, plan: &WindowPlan) -> DVector<f64> {
    DVector::from_iterator(
        plan.len(),
        plan.windows()
            .iter()
            .map(|w| v.rows(w.start, w.len()).sum() / w.len() as f64),
    )
}

/// Solver for the M-step normal equations; `X'X` is factored once per fit.
struct MStep {
    factor: SpdFactor,
    /// Row weights; `None` means unit weights.
    weights: Option<DVector<f64>>,
}

impl MStep {
    fn new(data: &Dataset, weights: Option<DVector<f64>>) -> Result<Self> {
        let x = data.x();
        let gram = match &weights {
            None => x.tr_mul(x),
            Some(w) => {
                let wx = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| w[i] * x[(i, j)]);
                x.tr_mul(&wx)
            }
        };
        let factor = SpdFactor::new(&gram, "M-step normal matrix X'X")?;
        Ok(Self { factor, weights })
    }

    fn solve(&self, data: &Dataset, nu: &DVector<f64>) -> DVector<f64> {
        let mut target = data.y() - nu;
        if let Some(w) = &self.weights {
            target.component_mul_assign(w);
        }
        self.factor.solve(&data.x().tr_mul(&target))
    }
}

/// M-step: least squares of `y - nu` on `X` without an intercept column.
pub fn mstep_beta(data: &Dataset, nu: &DVector<f64>) -> Result<DVector<f64>> {
    check_len("nu", data.n(), nu.len())?;
    Ok(MStep::new(data, None)?.solve(data, nu))
}

fn initial_beta(data: &Dataset, init: &EmInit) -> Result<DVector<f64>> {
    match init {
        EmInit::Ols => Ok(fit_ols(data)?.beta),
        EmInit::Zeros => Ok(DVector::zeros(data.p())),
        EmInit::Given(b) => {
            check_len("initial beta", data.p(), b.len())?;
            Ok(DVector::from_column_slice(b))
        }
    }
}

fn objective(data: &Dataset, nu: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (data.y() - nu - data.x() * beta).norm_squared()
}

/// Runs the EM iteration until the slope update falls below `cfg.tol` or `cfg.max_iter`
/// iterations have been spent. Non-convergence is reported through `converged = false`.
pub fn fit_em(data: &Dataset, plan: &WindowPlan, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    plan.check_covers(data.n())?;
    within_scatter_factor(data, plan, None)?;
    let mstep = MStep::new(data, None)?;
    let mut beta = initial_beta(data, &cfg.init)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let nu = plan.expand(&estep_intercepts(data, &beta, plan)?);
        let next = mstep.solve(data, &nu);
        let change = (&next - &beta).norm();
        trace.push(IterationRecord {
            beta_change: change,
            objective: objective(data, &nu, &next),
        });
        beta = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let iterations = trace.len();
    let mut fit = fit_from_beta(data, plan, &beta)?;
    fit.iterations = iterations;
    fit.converged = converged;
    fit.trace = trace;
    Ok(fit)
}

/// Completes a slope vector into a fit: window intercepts by the E-step, then residuals.
pub fn fit_from_beta(data: &Dataset, plan: &WindowPlan, beta: &DVector<f64>) -> Result<EmFit> {
    let window_intercepts = estep_intercepts(data, beta, plan)?;
    let nu_hat = plan.expand(&window_intercepts);
    let residuals = data.y() - data.x() * beta - &nu_hat;
    Ok(EmFit {
        beta_hat: beta.clone(),
        nu_hat,
        window_intercepts,
        residuals,
        iterations: 0,
        converged: true,
        plan: plan.clone(),
        trace: Vec::new(),
        group_variances: None,
    })
}

struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    x_means: DMatrix<f64>,
    y_means: DVector<f64>,
}

fn center_within(data: &Dataset, plan: &WindowPlan) -> Centered {
    let (n, p) = (data.n(), data.p());
    let mut x = data.x().clone();
    let mut y = data.y().clone();
    let mut x_means = DMatrix::zeros(plan.len(), p);
    let mut y_means = DVector::zeros(plan.len());
    for (j, w) in plan.windows().iter().enumerate() {
        let len = w.len() as f64;
        for c in 0..p {
            let m = x.view((w.start, c), (w.len(), 1)).sum() / len;
            x_means[(j, c)] = m;
            x.view_mut((w.start, c), (w.len(), 1)).add_scalar_mut(-m);
        }
        let m = y.rows(w.start, w.len()).sum() / len;
        y_means[j] = m;
        y.rows_mut(w.start, w.len()).add_scalar_mut(-m);
    }
    debug_assert_eq!(x.nrows(), n);
    Centered { x, y, x_means, y_means }
}

fn row_weights(plan: &WindowPlan, window_weights: Option<&[f64]>) -> Option<DVector<f64>> {
    window_weights.map(|ww| plan.expand(&DVector::from_column_slice(ww)))
}

fn weighted_gram(x: &DMatrix<f64>, rw: Option<&DVector<f64>>) -> DMatrix<f64> {
    match rw {
        None => x.tr_mul(x),
        Some(w) => {
            let wx = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| w[i] * x[(i, j)]);
            x.tr_mul(&wx)
        }
    }
}

fn within_scatter_factor(
    data: &Dataset,
    plan: &WindowPlan,
    window_weights: Option<&[f64]>,
) -> Result<SpdFactor> {
    let c = center_within(data, plan);
    let rw = row_weights(plan, window_weights);
    SpdFactor::new(&weighted_gram(&c.x, rw.as_ref()), "pooled within-window scatter")
}

/// Closed-form fixed point of the EM iteration:
/// `beta = [sum_j sum_i xtilde_i xtilde_i']^{-1} sum_j sum_i xtilde_i ytilde_i`
/// with `xtilde`, `ytilde` centered within each window.
pub fn fit_closed_form(data: &Dataset, plan: &WindowPlan) -> Result<(DVector<f64>, EstimatorDiagnostics)> {
    weighted_closed_form(data, plan, None)
}

fn weighted_closed_form(
    data: &Dataset,
    plan: &WindowPlan,
    window_weights: Option<&[f64]>,
) -> Result<(DVector<f64>, EstimatorDiagnostics)> {
    plan.check_covers(data.n())?;
    if let Some(ww) = window_weights {
        check_len("window weights", plan.len(), ww.len())?;
    }
    let c = center_within(data, plan);
    let rw = row_weights(plan, window_weights);
    let scatter = weighted_gram(&c.x, rw.as_ref());
    let factor = SpdFactor::new(&scatter, "pooled within-window scatter")?;
    let mut wy = c.y.clone();
    if let Some(w) = &rw {
        wy.component_mul_assign(w);
    }
    let beta = factor.solve(&c.x.tr_mul(&wy));
    let score = score(&c, &beta, rw.as_ref());
    Ok((
        beta,
        EstimatorDiagnostics {
            within_scatter: scatter,
            window_x_means: c.x_means,
            window_y_means: c.y_means,
            score,
            window_weights: window_weights.map(<[f64]>::to_vec),
        },
    ))
}

fn score(c: &Centered, beta: &DVector<f64>, rw: Option<&DVector<f64>>) -> DVector<f64> {
    let mut r = &c.y - &c.x * beta;
    if let Some(w) = rw {
        r.component_mul_assign(w);
    }
    c.x.tr_mul(&r)
}

/// Within-window scatter, window means and score evaluated at an arbitrary `beta`.
pub fn diagnostics_at(
    data: &Dataset,
    plan: &WindowPlan,
    beta: &DVector<f64>,
    window_weights: Option<&[f64]>,
) -> Result<EstimatorDiagnostics> {
    plan.check_covers(data.n())?;
    check_len("beta", data.p(), beta.len())?;
    let c = center_within(data, plan);
    let rw = row_weights(plan, window_weights);
    let scatter = weighted_gram(&c.x, rw.as_ref());
    let score = score(&c, beta, rw.as_ref());
    Ok(EstimatorDiagnostics {
        within_scatter: scatter,
        window_x_means: c.x_means,
        window_y_means: c.y_means,
        score,
        window_weights: window_weights.map(<[f64]>::to_vec),
    })
}

/// Ordinary least squares with an intercept, solved on mean-centered columns.
pub fn fit_ols(data: &Dataset) -> Result<OlsFit> {
    let n = data.n() as f64;
    let x_mean = data.x().row_mean();
    let y_mean = data.y().mean();
    let xc = DMatrix::from_fn(data.n(), data.p(), |i, j| data.x()[(i, j)] - x_mean[j]);
    let yc = data.y().add_scalar(-y_mean);
    let factor = SpdFactor::new(&xc.tr_mul(&xc), "OLS design [1, X]")?;
    let beta = factor.solve(&xc.tr_mul(&yc));
    let intercept = y_mean - (x_mean * &beta)[0];
    let residuals = (data.y() - data.x() * &beta).add_scalar(-intercept);
    debug_assert!(n >= 2.0);
    Ok(OlsFit {
        intercept,
        beta,
        residuals,
    })
}

/// Known-group variant with an inverse-variance weighted M-step.
///
/// Each iteration recomputes the group intercepts and residual variances
/// `s_j^2 = RSS_j / (n_j - 1)` at the current slopes, then solves
/// `sum_i w_i (y_i - x_i' beta - nu_i) x_i = 0` with `w_i = 1 / s_{g(i)}^2`.
/// When every group fits exactly, the weights are immaterial and the exact fit is returned.
pub fn fit_weighted_groups(data: &Dataset, plan: &WindowPlan, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    plan.check_covers(data.n())?;
    if plan.source() != PlanSource::KnownGroups {
        return Err(EmmbError::InvalidConfig(
            "the weighted fit needs a known-group window plan".into(),
        ));
    }
    let p = data.p();
    if let Some((j, w)) = plan.windows().iter().enumerate().find(|(_, w)| w.len() < p + 2) {
        return Err(EmmbError::InvalidGroups(format!(
            "group {} has {} rows, need at least p + 2 = {}",
            j + 1,
            w.len(),
            p + 2
        )));
    }
    let (mut beta, _) = fit_closed_form(data, plan)?;
    let y_var = data.y().variance();
    let zero_floor = 1e-24 * y_var.max(f64::MIN_POSITIVE);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut variances = group_variances(data, plan, &beta)?;
    for _ in 0..cfg.max_iter {
        let zero: Vec<usize> = (0..variances.len()).filter(|&j| variances[j] <= zero_floor).collect();
        if zero.len() == variances.len() {
            converged = true;
            break;
        }
        if let Some(&j) = zero.first() {
            return Err(EmmbError::ZeroGroupVariance { group: j + 1 });
        }
        let weights: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        let nu = plan.expand(&estep_intercepts(data, &beta, plan)?);
        let mstep = MStep::new(data, row_weights(plan, Some(&weights)))?;
        let next = mstep.solve(data, &nu);
        let change = (&next - &beta).norm();
        trace.push(IterationRecord {
            beta_change: change,
            objective: objective(data, &nu, &next),
        });
        beta = next;
        variances = group_variances(data, plan, &beta)?;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    let mut fit = fit_from_beta(data, plan, &beta)?;
    fit.iterations = trace.len();
    fit.converged = converged;
    fit.trace = trace;
    fit.group_variances = Some(variances);
    Ok(fit)
}

/// Residual variance of each window at `beta`, with `n_j - 1` degrees of freedom.
pub fn group_variances(data: &Dataset, plan: &WindowPlan, beta: &DVector<f64>) -> Result<Vec<f64>> {
    let fit = fit_from_beta(data, plan, beta)?;
    Ok(plan
        .windows()
        .iter()
        .map(|w| fit.residuals.rows(w.start, w.len()).norm_squared() / (w.len() - 1) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{partition_windows, plan_from_groups};

    fn dataset(x: &[f64], p: usize, y: &[f64]) -> Dataset {
        let n = y.len();
        Dataset::unnamed(DMatrix::from_row_slice(n, p, x), DVector::from_column_slice(y)).unwrap()
    }

    #[test]
    fn estep_window_mean() {
        let d = dataset(&[0.0, 0.0, 0.0], 1, &[1.0, 2.0, 3.0]);
        let plan = partition_windows(3, 3).unwrap();
        let a = estep_intercepts(&d, &DVector::from_vec(vec![5.0]), &plan).unwrap();
        assert_eq!(a.as_slice(), &[2.0]);
    }

    #[test]
    fn estep_per_window() {
        let d = dataset(&[1.0, 2.0, 3.0, 4.0], 1, &[1.0, 2.0, 7.0, 10.0]);
        let plan = partition_windows(4, 2).unwrap();
        // residuals y - 1*x = [0, 0, 4, 6]
        let a = estep_intercepts(&d, &DVector::from_vec(vec![1.0]), &plan).unwrap();
        assert_eq!(a.as_slice(), &[0.0, 5.0]);
    }

    #[test]
    fn estep_recovers_constant_intercept() {
        let x = [0.3, -1.0, 2.0, 0.5, 1.1, -0.7];
        let beta = [1.5, -0.6];
        let y: Vec<f64> = x.chunks(2).map(|r| r[0] * beta[0] + r[1] * beta[1] + 7.25).collect();
        let d = dataset(&x, 2, &y);
        let plan = partition_windows(3, 3).unwrap();
        let a = estep_intercepts(&d, &DVector::from_column_slice(&beta), &plan).unwrap();
        assert!((a[0] - 7.25).abs() < 1e-14);
    }

    #[test]
    fn mstep_line_through_origin() {
        let d = dataset(&[1.0, 2.0], 1, &[2.0, 4.0]);
        let b = mstep_beta(&d, &DVector::zeros(2)).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-14);
        let nu = DVector::from_vec(vec![2.0, 4.0]);
        assert_eq!(mstep_beta(&d, &nu).unwrap()[0], 0.0);
    }

    #[test]
    fn mstep_singular_names_singular_value() {
        let d = dataset(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0], 2, &[1.0, 2.0, 3.0]);
        let err = mstep_beta(&d, &DVector::zeros(3)).unwrap_err();
        match err {
            EmmbError::Singular { smallest, .. } => assert!(smallest < 1e-9),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn closed_form_identity_slope() {
        let d = dataset(&[0.0, 1.0, 2.0], 1, &[0.0, 1.0, 2.0]);
        let plan = partition_windows(3, 3).unwrap();
        let (b, diag) = fit_closed_form(&d, &plan).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-14);
        assert!((diag.within_scatter[(0, 0)] - 2.0).abs() < 1e-14);
        assert!(diag.score[0].abs() < 1e-14);
    }

    #[test]
    fn closed_form_rejects_window_constant_covariate() {
        // x constant within each window of size 2
        let d = dataset(&[1.0, 1.0, 5.0, 5.0, -2.0, -2.0], 1, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        let plan = partition_windows(6, 2).unwrap();
        assert!(matches!(fit_closed_form(&d, &plan), Err(EmmbError::Singular { .. })));
        assert!(matches!(
            fit_em(&d, &plan, &EmConfig::default()),
            Err(EmmbError::Singular { .. })
        ));
    }

    #[test]
    fn ols_exact_fit() {
        let d = dataset(&[0.0, 1.0], 1, &[3.0, 5.0]);
        let o = fit_ols(&d).unwrap();
        assert!((o.intercept - 3.0).abs() < 1e-14 && (o.beta[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn ols_constant_response() {
        let d = dataset(&[0.0, 1.0, 1.0, 3.0, 2.0, -1.0, 4.0, 0.5], 2, &[4.0; 4]);
        let o = fit_ols(&d).unwrap();
        assert!((o.intercept - 4.0).abs() < 1e-12);
        assert!(o.beta.iter().all(|b| b.abs() < 1e-12));
    }

    #[test]
    fn ols_rank_deficiency() {
        let d = dataset(&[1.0, 1.0, 1.0], 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(fit_ols(&d), Err(EmmbError::Singular { .. })));
    }

    #[test]
    fn config_validation() {
        let bad = EmConfig {
            max_iter: 0,
            ..EmConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmConfig {
            tol: 0.0,
            ..EmConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let x = [0.1, 0.9, 1.7, 3.2, 4.1, 4.8, 6.3, 7.0];
        let y = [0.0, 1.0, 1.5, 3.0, 4.5, 5.0, 6.0, 7.5];
        let d = dataset(&x, 1, &y);
        let plan = partition_windows(8, 4).unwrap();
        let cfg = EmConfig {
            max_iter: 1,
            tol: 1e-300,
            init: EmInit::Zeros,
        };
        let fit = fit_em(&d, &plan, &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
        assert_eq!(fit.trace.len(), 1);
    }

    #[test]
    fn weighted_requires_known_groups() {
        let x: Vec<f64> = (0..8).map(|i| (i * i % 5) as f64).collect();
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let d = dataset(&x, 1, &y);
        let fixed = partition_windows(8, 4).unwrap();
        assert!(fit_weighted_groups(&d, &fixed, &EmConfig::default()).is_err());
        let tiny = plan_from_groups(&[2, 6], 8).unwrap();
        assert!(matches!(
            fit_weighted_groups(&d, &tiny, &EmConfig::default()),
            Err(EmmbError::InvalidGroups(_))
        ));
    }

    #[test]
    fn weighted_reports_degenerate_group() {
        // group 1 lies exactly on a line; group 2 has a constant covariate, so it does not
        // inform the slope and keeps a positive residual variance
        let x = [0.0, 1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 1.0];
        let y = [1.0, 3.0, 5.0, 7.0, 0.0, 3.0, 3.5, 6.0];
        let d = dataset(&x, 1, &y);
        let plan = plan_from_groups(&[4, 4], 8).unwrap();
        let err = fit_weighted_groups(&d, &plan, &EmConfig::default()).unwrap_err();
        assert!(matches!(err, EmmbError::ZeroGroupVariance { group: 1 }));
    }
}
