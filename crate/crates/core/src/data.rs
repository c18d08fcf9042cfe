//! Validated datasets, model parameters and window partitions.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EmmbError, Result};

/// Time-ordered observations `(x_i, y_i)`. Row order is meaningful and never changed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Self> {
        validate_dataset(x, y, names)
    }

    /// Builds a dataset with generated column names `x1..xp`.
    pub fn unnamed(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        validate_dataset(x, y, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `y - X beta`, the residual path with intercepts left in.
    pub fn partial_residuals(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("beta", self.p(), beta.len())?;
        Ok(&self.y - &self.x * beta)
    }

    /// Copy of the dataset with `shift` added to every response value.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.add_scalar(shift),
            names: self.names.clone(),
        }
    }

    /// Copy of the dataset with every response value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x: self.x.clone(),
            y: &self.y * factor,
            names: self.names.clone(),
        }
    }
}

/// Checks shapes and finiteness and wraps the inputs into a [`Dataset`].
pub fn validate_dataset(x: DMatrix<f64>, y: DVector<f64>, names: Vec<String>) -> Result<Dataset> {
    if x.nrows() != y.len() {
        return Err(EmmbError::DimensionMismatch {
            context: "response length vs covariate rows".into(),
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(EmmbError::TooFewRows { n: y.len() });
    }
    if x.ncols() == 0 {
        return Err(EmmbError::NoCovariates);
    }
    if names.len() != x.ncols() {
        return Err(EmmbError::DimensionMismatch {
            context: "column names vs covariate columns".into(),
            expected: x.ncols(),
            found: names.len(),
        });
    }
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if !x[(i, j)].is_finite() {
                return Err(EmmbError::NonFinite { row: i + 1, col: j + 1 });
            }
        }
        if !y[i].is_finite() {
            return Err(EmmbError::NonFiniteResponse { row: i + 1 });
        }
    }
    Ok(Dataset { x, y, names })
}

pub(crate) fn check_len(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(EmmbError::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Slopes plus the intercept and variance intervals of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub mu_lower: f64,
    pub mu_upper: f64,
    /// `(sigma_lower^2, sigma_upper^2)` when known.
    pub sigma2: Option<(f64, f64)>,
}

impl ModelParams {
    pub fn new(beta: Vec<f64>, mu_lower: f64, mu_upper: f64, sigma2: Option<(f64, f64)>) -> Result<Self> {
        if !(mu_lower <= mu_upper) {
            return Err(EmmbError::InvalidConfig(format!(
                "mu_lower {mu_lower} exceeds mu_upper {mu_upper}"
            )));
        }
        if let Some((lo, hi)) = sigma2 {
            if !(lo > 0.0 && lo <= hi) {
                return Err(EmmbError::InvalidConfig(format!(
                    "variance bounds must satisfy 0 < {lo} <= {hi}"
                )));
            }
        }
        Ok(Self {
            beta,
            mu_lower,
            mu_upper,
            sigma2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlanSource {
    FixedN0 { n0: usize },
    KnownGroups,
}

/// Consecutive, disjoint windows covering rows `0..n`; every window has at least 2 rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowPlan {
    windows: Vec<Range<usize>>,
    source: PlanSource,
}

impl WindowPlan {
    /// Windows of `n0` rows. The remainder `n mod n0` is folded into the last window,
    /// so for `n < 2 n0` a single window covers everything.
    pub fn fixed(n: usize, n0: usize) -> Result<Self> {
        partition_windows(n, n0)
    }

    /// One window per known group, in order.
    pub fn from_groups(group_sizes: &[usize], n: usize) -> Result<Self> {
        plan_from_groups(group_sizes, n)
    }

    pub fn windows(&self) -> &[Range<usize>] {
        &self.windows
    }

    pub fn source(&self) -> PlanSource {
        self.source
    }

    pub fn n0(&self) -> Option<usize> {
        match self.source {
            PlanSource::FixedN0 { n0 } => Some(n0),
            PlanSource::KnownGroups => None,
        }
    }

    /// Number of windows `T`.
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Rows covered.
    pub fn n(&self) -> usize {
        self.windows.last().map_or(0, |w| w.end)
    }

    /// Window index of every row.
    pub fn row_labels(&self) -> Vec<usize> {
        let mut labels = Vec::with_capacity(self.n());
        for (j, w) in self.windows.iter().enumerate() {
            labels.extend(std::iter::repeat_n(j, w.len()));
        }
        labels
    }

    pub(crate) fn check_covers(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(EmmbError::PlanMismatch {
                plan_n: self.n(),
                data_n: n,
            });
        }
        Ok(())
    }

    /// Expands per-window values into a per-row vector.
    pub fn expand(&self, per_window: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (w, &v) in self.windows.iter().zip(per_window.iter()) {
            out.rows_mut(w.start, w.len()).fill(v);
        }
        out
    }
}

pub fn partition_windows(n: usize, n0: usize) -> Result<WindowPlan> {
    if n < 2 {
        return Err(EmmbError::TooFewRows { n });
    }
    if n0 < 2 || n0 > n {
        return Err(EmmbError::InvalidWindowSize { n0, n });
    }
    let t = (n / n0).max(1);
    let windows = (0..t)
        .map(|j| {
            let start = j * n0;
            let end = if j + 1 == t { n } else { start + n0 };
            start..end
        })
        .collect();
    Ok(WindowPlan {
        windows,
        source: PlanSource::FixedN0 { n0 },
    })
}

pub fn plan_from_groups(group_sizes: &[usize], n: usize) -> Result<WindowPlan> {
    if group_sizes.is_empty() {
        return Err(EmmbError::InvalidGroups("no groups given".into()));
    }
    if let Some((j, &s)) = group_sizes.iter().enumerate().find(|(_, &s)| s < 2) {
        return Err(EmmbError::InvalidGroups(format!(
            "group {} has size {s}, need at least 2",
            j + 1
        )));
    }
    let total: usize = group_sizes.iter().sum();
    if total != n {
        return Err(EmmbError::InvalidGroups(format!(
            "group sizes sum to {total} but n = {n}"
        )));
    }
    let mut start = 0;
    let windows = group_sizes
        .iter()
        .map(|&s| {
            let w = start..start + s;
            start += s;
            w
        })
        .collect();
    Ok(WindowPlan {
        windows,
        source: PlanSource::KnownGroups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accepts_well_formed_input() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let d = Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
    }

    #[test]
    fn rejects_length_mismatch() {
        let x = DMatrix::zeros(3, 2);
        let y = DVector::zeros(4);
        let err = Dataset::unnamed(x, y).unwrap_err();
        assert!(matches!(err, EmmbError::DimensionMismatch { expected: 3, found: 4, .. }));
    }

    #[test]
    fn cites_first_non_finite_cell() {
        let mut x = DMatrix::from_element(3, 2, 1.0);
        x[(1, 0)] = f64::NAN;
        x[(2, 1)] = f64::INFINITY;
        let err = Dataset::unnamed(x, DVector::zeros(3)).unwrap_err();
        assert!(matches!(err, EmmbError::NonFinite { row: 2, col: 1 }));
        assert!(err.to_string().contains("(2,1)"));
    }

    #[test]
    fn rejects_single_row() {
        let err = Dataset::unnamed(DMatrix::zeros(1, 1), DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, EmmbError::TooFewRows { n: 1 }));
    }

    #[test]
    fn model_params_order() {
        assert!(ModelParams::new(vec![1.0], -1.0, 1.0, Some((1.0, 4.0))).is_ok());
        assert!(ModelParams::new(vec![1.0], 2.0, 1.0, None).is_err());
        assert!(ModelParams::new(vec![1.0], 0.0, 1.0, Some((0.0, 1.0))).is_err());
    }

    #[test]
    fn exact_division() {
        let plan = partition_windows(200, 10).unwrap();
        assert_eq!(plan.len(), 20);
        assert!(plan.windows().iter().all(|w| w.len() == 10));
        let single = partition_windows(10, 10).unwrap();
        assert_eq!(single.windows(), std::slice::from_ref(&(0..10)));
    }

    #[test]
    fn remainder_folds_into_last_window() {
        let plan = partition_windows(23, 10).unwrap();
        assert_eq!(plan.windows(), &[0..10, 10..23]);
        let small = partition_windows(15, 10).unwrap();
        assert_eq!(small.windows(), std::slice::from_ref(&(0..15)));
    }

    #[test]
    fn window_size_errors() {
        assert!(matches!(partition_windows(10, 1), Err(EmmbError::InvalidWindowSize { .. })));
        assert!(matches!(partition_windows(10, 11), Err(EmmbError::InvalidWindowSize { .. })));
    }

    #[test]
    fn groups() {
        assert_eq!(plan_from_groups(&[100, 100], 200).unwrap().len(), 2);
        let plan = plan_from_groups(&[150, 50, 100], 300).unwrap();
        assert_eq!(plan.windows(), &[0..150, 150..200, 200..300]);
        assert_eq!(plan.source(), PlanSource::KnownGroups);
        assert!(matches!(plan_from_groups(&[1, 199], 200), Err(EmmbError::InvalidGroups(_))));
        assert!(matches!(plan_from_groups(&[100, 99], 200), Err(EmmbError::InvalidGroups(_))));
    }

    #[test]
    fn expand_is_piecewise_constant() {
        let plan = partition_windows(5, 2).unwrap();
        let v = plan.expand(&DVector::from_vec(vec![1.0, 2.0]));
        assert_eq!(v.as_slice(), &[1.0, 1.0, 2.0, 2.0, 2.0]);
        assert_eq!(plan.row_labels(), vec![0, 0, 1, 1, 1]);
    }

    proptest! {
        #[test]
        fn partition_covers_rows(n in 2usize..2000, n0_frac in 0.0f64..1.0) {
            let n0 = 2 + ((n - 2) as f64 * n0_frac) as usize;
            let plan = partition_windows(n, n0).unwrap();
            let rows: Vec<usize> = plan.windows().iter().flat_map(|w| w.clone()).collect();
            prop_assert_eq!(rows, (0..n).collect::<Vec<_>>());
            prop_assert!(plan.windows().iter().all(|w| w.len() >= 2));
            if n % n0 == 0 {
                prop_assert!(plan.windows().iter().all(|w| w.len() == n0));
            }
        }
    }
}
