//! Data-generating processes and the OLS vs. window-intercept Monte Carlo harness.
//!
//! Every repetition draws from its own ChaCha stream (`stream = rep index` under the master
//! seed), so repetitions can run in any order or in parallel and still aggregate to
//! identical numbers. Aggregation always walks repetitions in index order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{estimate_bounds, w_robust_targets, WRobustTargets};
use crate::data::{Dataset, WindowPlan};
use crate::error::{EmmbError, Result};
use crate::estimator::{fit_closed_form, fit_ols};
use crate::report::{csv_num, fmt4, TableFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sim1,
    Sim2,
    Sim3,
    Custom,
}

impl std::str::FromStr for Variant {
    type Err = EmmbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sim1" => Ok(Self::Sim1),
            "sim2" => Ok(Self::Sim2),
            "sim3" => Ok(Self::Sim3),
            other => Err(EmmbError::InvalidConfig(format!(
                "unknown variant '{other}' (expected sim1, sim2 or sim3)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sim1 => "sim1",
            Self::Sim2 => "sim2",
            Self::Sim3 => "sim3",
            Self::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovariateLaw {
    /// `p` independent N(0, 1) components.
    StandardNormal { p: usize },
    /// Zero-mean Gaussian with the given covariance.
    Gaussian { cov: Vec<Vec<f64>> },
}

impl CovariateLaw {
    pub fn p(&self) -> usize {
        match self {
            Self::StandardNormal { p } => *p,
            Self::Gaussian { cov } => cov.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InterceptRule {
    /// `c_1 = lower`, `c_k = upper`, interior `c_j ~ U(lower, upper)`.
    Endpoints { lower: f64, upper: f64 },
    /// One given intercept per group.
    Fixed(Vec<f64>),
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseRule {
    /// `sigma_j ~ U(lo, hi)` per group.
    UniformSigma { lo: f64, hi: f64 },
    /// One given standard deviation per group.
    PerGroup(Vec<f64>),
    Constant(f64),
}

/// `k` consecutive groups of `m` rows each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub variant: Variant,
    pub k: usize,
    pub m: usize,
    pub beta: Vec<f64>,
    pub covariates: CovariateLaw,
    pub intercepts: InterceptRule,
    pub noise: NoiseRule,
    pub seed: u64,
}

/// Covariance of the correlated covariates in the second design.
pub fn sim2_covariance() -> Vec<Vec<f64>> {
    vec![vec![4.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 9.0]]
}

impl DgpSpec {
    /// Two standard normal covariates, intercepts spanning exactly [-10, 30], `sigma_j ~ U(1, 2)`.
    pub fn sim1(k: usize, m: usize, seed: u64) -> Self {
        Self {
            variant: Variant::Sim1,
            k,
            m,
            beta: vec![1.5, -0.6],
            covariates: CovariateLaw::StandardNormal { p: 2 },
            intercepts: InterceptRule::Endpoints { lower: -10.0, upper: 30.0 },
            noise: NoiseRule::UniformSigma { lo: 1.0, hi: 2.0 },
            seed,
        }
    }

    /// Like [`DgpSpec::sim1`] with three correlated covariates.
    pub fn sim2(k: usize, m: usize, seed: u64) -> Self {
        Self {
            variant: Variant::Sim2,
            beta: vec![3.0, -1.5, 0.6],
            covariates: CovariateLaw::Gaussian { cov: sim2_covariance() },
            ..Self::sim1(k, m, seed)
        }
    }

    /// No uncertainty: intercept fixed at -3, unit error variance.
    pub fn sim3(k: usize, m: usize, seed: u64) -> Self {
        Self {
            variant: Variant::Sim3,
            intercepts: InterceptRule::Constant(-3.0),
            noise: NoiseRule::Constant(1.0),
            ..Self::sim1(k, m, seed)
        }
    }

    pub fn preset(variant: Variant, k: usize, m: usize, seed: u64) -> Result<Self> {
        match variant {
            Variant::Sim1 => Ok(Self::sim1(k, m, seed)),
            Variant::Sim2 => Ok(Self::sim2(k, m, seed)),
            Variant::Sim3 => Ok(Self::sim3(k, m, seed)),
            Variant::Custom => Err(EmmbError::InvalidConfig("custom designs have no preset".into())),
        }
    }

    pub fn n(&self) -> usize {
        self.k * self.m
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m < 2 {
            return Err(EmmbError::InvalidConfig(format!(
                "need k >= 1 groups of m >= 2 rows, got k={} m={}",
                self.k, self.m
            )));
        }
        if matches!(self.intercepts, InterceptRule::Endpoints { .. }) && self.k < 2 {
            return Err(EmmbError::InvalidConfig(
                "both intercept endpoints must be realized, which needs k >= 2".into(),
            ));
        }
        if self.beta.len() != self.covariates.p() || self.beta.is_empty() {
            return Err(EmmbError::InvalidConfig(format!(
                "beta has {} entries for {} covariates",
                self.beta.len(),
                self.covariates.p()
            )));
        }
        if let InterceptRule::Fixed(c) = &self.intercepts {
            if c.len() != self.k {
                return Err(EmmbError::InvalidConfig(format!("{} intercepts for {} groups", c.len(), self.k)));
            }
        }
        match &self.noise {
            NoiseRule::PerGroup(s) if s.len() != self.k => {
                return Err(EmmbError::InvalidConfig(format!("{} sigmas for {} groups", s.len(), self.k)));
            }
            NoiseRule::UniformSigma { lo, hi } if !(*lo >= 0.0 && lo < hi) => {
                return Err(EmmbError::InvalidConfig(format!("bad sigma range [{lo}, {hi})")));
            }
            _ => {}
        }
        Ok(())
    }
}

/// What the generator knows and the estimators must recover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpTruth {
    pub beta: Vec<f64>,
    /// `E[nu_i]` for every row.
    pub intercept_path: Vec<f64>,
    pub group_intercepts: Vec<f64>,
    pub group_sigmas: Vec<f64>,
    pub mu_lower: f64,
    pub mu_upper: f64,
}

fn covariate_factor(law: &CovariateLaw) -> Result<Option<DMatrix<f64>>> {
    match law {
        CovariateLaw::StandardNormal { .. } => Ok(None),
        CovariateLaw::Gaussian { cov } => {
            let p = cov.len();
            if cov.iter().any(|r| r.len() != p) {
                return Err(EmmbError::InvalidConfig("covariance matrix must be square".into()));
            }
            let m = DMatrix::from_fn(p, p, |i, j| cov[i][j]);
            let chol = m
                .cholesky()
                .ok_or_else(|| EmmbError::InvalidConfig("covariance matrix is not positive definite".into()))?;
            Ok(Some(chol.l()))
        }
    }
}

/// Draws one dataset. Deterministic in `spec.seed`.
pub fn generate(spec: &DgpSpec) -> Result<(Dataset, DgpTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, m, p) = (spec.k, spec.m, spec.covariates.p());
    let n = spec.n();

    let group_intercepts: Vec<f64> = match &spec.intercepts {
        InterceptRule::Endpoints { lower, upper } => (0..k)
            .map(|j| {
                if j == 0 {
                    *lower
                } else if j + 1 == k {
                    *upper
                } else {
                    rng.random_range(*lower..*upper)
                }
            })
            .collect(),
        InterceptRule::Fixed(c) => c.clone(),
        InterceptRule::Constant(c) => vec![*c; k],
    };
    let group_sigmas: Vec<f64> = match &spec.noise {
        NoiseRule::UniformSigma { lo, hi } => (0..k).map(|_| rng.random_range(*lo..*hi)).collect(),
        NoiseRule::PerGroup(s) => s.clone(),
        NoiseRule::Constant(s) => vec![*s; k],
    };

    let factor = covariate_factor(&spec.covariates)?;
    let beta = DVector::from_column_slice(&spec.beta);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut z = DVector::zeros(p);
    let mut path = Vec::with_capacity(n);
    for i in 0..n {
        let g = i / m;
        for c in 0..p {
            z[c] = rng.sample::<f64, _>(StandardNormal);
        }
        let xi = match &factor {
            Some(l) => l * &z,
            None => z.clone(),
        };
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * group_sigmas[g];
        x.set_row(i, &xi.transpose());
        y[i] = xi.dot(&beta) + group_intercepts[g] + eps;
        path.push(group_intercepts[g]);
    }
    let (mu_lower, mu_upper) = group_intercepts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let data = Dataset::new(x, y, names)?;
    Ok((
        data,
        DgpTruth {
            beta: spec.beta.clone(),
            intercept_path: path,
            group_intercepts,
            group_sigmas,
            mu_lower,
            mu_upper,
        },
    ))
}

/// Seed of repetition `rep` under `master`: the first word of ChaCha stream `rep`.
pub fn rep_seed(master: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub reps: usize,
    pub n0: usize,
    pub w: usize,
    pub seed: u64,
}

/// Estimates from one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub beta_emmb: Vec<f64>,
    pub beta_ols: Vec<f64>,
    pub ols_intercept: f64,
    pub mu_lower_hat: f64,
    pub mu_upper_hat: f64,
    pub targets: WRobustTargets,
}

fn run_rep(spec: &DgpSpec, cfg: &McConfig, rep: usize) -> Result<RepOutcome> {
    let (data, truth) = generate(&spec.with_seed(rep_seed(cfg.seed, rep)))?;
    let plan = WindowPlan::fixed(data.n(), cfg.n0)?;
    let (beta, _) = fit_closed_form(&data, &plan)?;
    let bounds = estimate_bounds(&data, &beta, &plan, cfg.w)?;
    let ols = fit_ols(&data)?;
    Ok(RepOutcome {
        beta_emmb: beta.as_slice().to_vec(),
        beta_ols: ols.beta.as_slice().to_vec(),
        ols_intercept: ols.intercept,
        mu_lower_hat: bounds.mu_lower_hat,
        mu_upper_hat: bounds.mu_upper_hat,
        targets: w_robust_targets(&truth.intercept_path, cfg.w)?,
    })
}

/// Runs every repetition (in parallel) and returns the outcomes in repetition order.
/// The first failing repetition, by index, aborts the run.
pub fn run_reps(spec: &DgpSpec, cfg: &McConfig) -> Result<Vec<RepOutcome>> {
    spec.validate()?;
    if cfg.reps == 0 {
        return Err(EmmbError::InvalidConfig("reps must be at least 1".into()));
    }
    let results: Vec<Result<RepOutcome>> = (0..cfg.reps).into_par_iter().map(|r| run_rep(spec, cfg, r)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(rep, r)| r.map_err(|e| EmmbError::RepFailed { rep, source: Box::new(e) }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub bias: Vec<f64>,
    pub mse: Vec<f64>,
    /// Sample standard deviation of each estimate across repetitions.
    pub sd: Vec<f64>,
}

impl MethodStats {
    fn from_estimates(estimates: &[&[f64]], truth: &[f64]) -> Self {
        let reps = estimates.len() as f64;
        let p = truth.len();
        let mut bias = vec![0.0; p];
        let mut mse = vec![0.0; p];
        let mut sd = vec![0.0; p];
        for c in 0..p {
            let mean = estimates.iter().map(|e| e[c]).sum::<f64>() / reps;
            bias[c] = mean - truth[c];
            mse[c] = estimates.iter().map(|e| (e[c] - truth[c]).powi(2)).sum::<f64>() / reps;
            sd[c] = if estimates.len() > 1 {
                (estimates.iter().map(|e| (e[c] - mean).powi(2)).sum::<f64>() / (reps - 1.0)).sqrt()
            } else {
                0.0
            };
        }
        Self { bias, mse, sd }
    }

    /// Monte Carlo standard error of the bias for component `c`.
    pub fn bias_se(&self, c: usize, reps: usize) -> f64 {
        self.sd[c] / (reps as f64).sqrt()
    }
}

/// Column structure of the simulation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub variant: Variant,
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub n0: usize,
    pub w: usize,
    pub reps: usize,
    pub seed: u64,
    pub beta_true: Vec<f64>,
    pub emmb: MethodStats,
    pub ols: MethodStats,
    pub mean_mu_lower: f64,
    pub mean_mu_upper: f64,
    pub mean_ols_intercept: f64,
    pub mean_target_lower: f64,
    pub mean_target_upper: f64,
    /// Group intercepts and sigmas are redrawn in every repetition.
    pub redraw_group_params: bool,
}

pub fn summarize(spec: &DgpSpec, cfg: &McConfig, outcomes: &[RepOutcome]) -> McSummary {
    let reps = outcomes.len() as f64;
    let mean = |f: &dyn Fn(&RepOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / reps;
    let emmb: Vec<&[f64]> = outcomes.iter().map(|o| o.beta_emmb.as_slice()).collect();
    let ols: Vec<&[f64]> = outcomes.iter().map(|o| o.beta_ols.as_slice()).collect();
    McSummary {
        variant: spec.variant,
        k: spec.k,
        m: spec.m,
        n: spec.n(),
        n0: cfg.n0,
        w: cfg.w,
        reps: outcomes.len(),
        seed: cfg.seed,
        beta_true: spec.beta.clone(),
        emmb: MethodStats::from_estimates(&emmb, &spec.beta),
        ols: MethodStats::from_estimates(&ols, &spec.beta),
        mean_mu_lower: mean(&|o| o.mu_lower_hat),
        mean_mu_upper: mean(&|o| o.mu_upper_hat),
        mean_ols_intercept: mean(&|o| o.ols_intercept),
        mean_target_lower: mean(&|o| o.targets.lower),
        mean_target_upper: mean(&|o| o.targets.upper),
        redraw_group_params: matches!(
            (&spec.intercepts, &spec.noise),
            (InterceptRule::Endpoints { .. }, _) | (_, NoiseRule::UniformSigma { .. })
        ),
    }
}

/// Generate, fit both methods and aggregate over `reps` repetitions.
pub fn run_monte_carlo(spec: &DgpSpec, reps: usize, n0: usize, w: usize, seed: u64) -> Result<McSummary> {
    let cfg = McConfig { reps, n0, w, seed };
    let outcomes = run_reps(spec, &cfg)?;
    Ok(summarize(spec, &cfg, &outcomes))
}

/// One block per configuration with EMMB and OLS rows, Bias/MSE per coefficient and the mean
/// bounds (EMMB) or mean intercept (OLS). Markdown uses four decimals, CSV full precision.
pub fn emit_table(summaries: &[McSummary], format: TableFormat) -> Result<String> {
    let first = summaries.first().ok_or(EmmbError::Empty("simulation summaries"))?;
    let p = first.beta_true.len();
    if let Some(bad) = summaries.iter().find(|s| {
        s.beta_true.len() != p || s.emmb.bias.len() != p || s.ols.bias.len() != p || s.emmb.mse.len() != p || s.ols.mse.len() != p
    }) {
        return Err(EmmbError::DimensionMismatch {
            context: "coefficients per summary".into(),
            expected: p,
            found: bad.beta_true.len().max(bad.emmb.bias.len()),
        });
    }
    let mut out = String::new();
    match format {
        TableFormat::Markdown => {
            out.push_str("| Method |");
            for c in 1..=p {
                out.push_str(&format!(" beta_{c} Bias | beta_{c} MSE |"));
            }
            out.push_str(" (mu_lower, mu_upper) Mean |\n|---|");
            out.push_str(&"---:|".repeat(2 * p + 1));
            out.push('\n');
            for s in summaries {
                out.push_str(&format!("| (n,w,n0)=({},{},{}) |", s.n, s.w, s.n0));
                out.push_str(&" |".repeat(2 * p + 1));
                out.push('\n');
                out.push_str("| EMMB |");
                for c in 0..p {
                    out.push_str(&format!(" {} | {} |", fmt4(s.emmb.bias[c]), fmt4(s.emmb.mse[c])));
                }
                out.push_str(&format!(" ({}, {}) |\n", fmt4(s.mean_mu_lower), fmt4(s.mean_mu_upper)));
                out.push_str("| OLS |");
                for c in 0..p {
                    out.push_str(&format!(" {} | {} |", fmt4(s.ols.bias[c]), fmt4(s.ols.mse[c])));
                }
                out.push_str(&format!(" {} |\n", fmt4(s.mean_ols_intercept)));
            }
        }
        TableFormat::Csv => {
            out.push_str("variant,n,w,n0,reps,method");
            for c in 1..=p {
                out.push_str(&format!(",beta{c}_bias,beta{c}_mse"));
            }
            out.push_str(",mu_lower_mean,mu_upper_mean,intercept_mean\n");
            for s in summaries {
                for (method, stats) in [("EMMB", &s.emmb), ("OLS", &s.ols)] {
                    out.push_str(&format!("{},{},{},{},{},{}", s.variant, s.n, s.w, s.n0, s.reps, method));
                    for c in 0..p {
                        out.push_str(&format!(",{},{}", stats.bias[c], stats.mse[c]));
                    }
                    let (lo, hi, icpt) = if method == "EMMB" {
                        (Some(s.mean_mu_lower), Some(s.mean_mu_upper), None)
                    } else {
                        (None, None, Some(s.mean_ols_intercept))
                    };
                    out.push_str(&format!(",{},{},{}\n", csv_num(lo), csv_num(hi), csv_num(icpt)));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim1_two_groups_path() {
        let (data, truth) = generate(&DgpSpec::sim1(2, 100, 1)).unwrap();
        assert_eq!(data.n(), 200);
        let mut expected = vec![-10.0; 100];
        expected.extend(vec![30.0; 100]);
        assert_eq!(truth.intercept_path, expected);
        assert_eq!((truth.mu_lower, truth.mu_upper), (-10.0, 30.0));
        assert!(truth.group_sigmas.iter().all(|s| (1.0..2.0).contains(s)));
    }

    #[test]
    fn sim3_constant_intercept() {
        let (data, truth) = generate(&DgpSpec::sim3(3, 50, 9)).unwrap();
        assert_eq!(data.n(), 150);
        assert!(truth.intercept_path.iter().all(|&c| c == -3.0));
        assert!(truth.group_sigmas.iter().all(|&s| s == 1.0));
    }

    #[test]
    fn endpoints_always_realized() {
        for seed in 0..50 {
            for spec in [DgpSpec::sim1(7, 10, seed), DgpSpec::sim2(5, 10, seed)] {
                let (_, truth) = generate(&spec).unwrap();
                assert!(truth.intercept_path.contains(&-10.0));
                assert!(truth.intercept_path.contains(&30.0));
                assert!(truth.intercept_path.iter().all(|c| (-10.0..=30.0).contains(c)));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&DgpSpec::sim2(3, 20, 42)).unwrap();
        let b = generate(&DgpSpec::sim2(3, 20, 42)).unwrap();
        assert_eq!(a, b);
        let c = generate(&DgpSpec::sim2(3, 20, 43)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&DgpSpec::sim1(1, 100, 0)).is_err());
        assert!(generate(&DgpSpec::sim1(2, 1, 0)).is_err());
        assert!(generate(&DgpSpec::sim3(1, 100, 0)).is_ok());
        let mut bad = DgpSpec::sim1(2, 10, 0);
        bad.beta = vec![1.0];
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn rep_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = (0..100).map(|r| rep_seed(7, r)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 100);
        assert_eq!(rep_seed(7, 3), seeds[3]);
        assert_ne!(rep_seed(8, 3), seeds[3]);
    }

    #[test]
    fn single_rep_is_reproducible() {
        let spec = DgpSpec::sim1(2, 100, 0);
        let a = run_monte_carlo(&spec, 1, 10, 80, 7).unwrap();
        let b = run_monte_carlo(&spec, 1, 10, 80, 7).unwrap();
        assert_eq!(a, b);
        assert!(run_monte_carlo(&spec, 0, 10, 80, 7).is_err());
    }

    #[test]
    fn rep_failure_carries_index() {
        // block not longer than the window fails in every repetition
        let err = run_monte_carlo(&DgpSpec::sim1(2, 100, 0), 3, 10, 10, 1).unwrap_err();
        assert!(matches!(err, EmmbError::RepFailed { rep: 0, .. }));
    }

    #[test]
    fn markdown_table_shape() {
        let s = run_monte_carlo(&DgpSpec::sim1(2, 100, 0), 5, 10, 80, 3).unwrap();
        let md = emit_table(&[s], TableFormat::Markdown).unwrap();
        let header = md.lines().next().unwrap();
        assert!(header.contains("beta_1 Bias | beta_1 MSE"));
        assert!(md.contains("| (n,w,n0)=(200,80,10) |"));
        assert_eq!(md.lines().count(), 5);
    }

    #[test]
    fn csv_rows_and_mismatch() {
        let specs = [2, 4, 10].map(|k| DgpSpec::sim1(k, 100, 0));
        let sums: Vec<McSummary> = specs.iter().map(|s| run_monte_carlo(s, 3, 10, 80, 5).unwrap()).collect();
        let csv = emit_table(&sums, TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 1 + 6);
        let mut mixed = sums.clone();
        mixed.push(run_monte_carlo(&DgpSpec::sim2(2, 100, 0), 2, 10, 80, 5).unwrap());
        assert!(emit_table(&mixed, TableFormat::Csv).is_err());
        assert!(emit_table(&[], TableFormat::Csv).is_err());
    }
}
