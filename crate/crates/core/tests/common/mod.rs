//! Reference computations that share no code with the crate under test.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Row-major dense matrix as nested vectors.
pub type Rows = Vec<Vec<f64>>;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Rows, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        assert!(a[col][col].abs() > 1e-300, "oracle hit a singular system");
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (dst, src) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * src;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Least squares via the explicit normal equations `(Z'Z) c = Z'v`.
pub fn normal_equation_ls(z: &Rows, v: &[f64]) -> Vec<f64> {
    let q = z[0].len();
    let mut ztz = vec![vec![0.0; q]; q];
    let mut ztv = vec![0.0; q];
    for (row, &vi) in z.iter().zip(v) {
        for a in 0..q {
            ztv[a] += row[a] * vi;
            for b in 0..q {
                ztz[a][b] += row[a] * row[b];
            }
        }
    }
    gauss_solve(ztz, ztv)
}

/// Minimizes `sum (y_i - a_{g(i)} - x_i' beta)^2` jointly over slopes and one dummy per
/// window. Returns `(beta, intercepts)`.
pub fn dummy_column_ls(x: &Rows, y: &[f64], windows: &[(usize, usize)]) -> (Vec<f64>, Vec<f64>) {
    let p = x[0].len();
    let t = windows.len();
    let mut z = Vec::with_capacity(y.len());
    for (i, xi) in x.iter().enumerate() {
        let mut row = xi.clone();
        let mut dummies = vec![0.0; t];
        let j = windows.iter().position(|&(s, e)| i >= s && i < e).unwrap();
        dummies[j] = 1.0;
        row.extend(dummies);
        z.push(row);
    }
    let coef = normal_equation_ls(&z, y);
    (coef[..p].to_vec(), coef[p..].to_vec())
}

/// Sliding means by direct summation over every block.
pub fn direct_block_means(values: &[f64], w: usize) -> Vec<f64> {
    (0..=values.len() - w)
        .map(|l| values[l..l + w].iter().sum::<f64>() / w as f64)
        .collect()
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, p: usize, offset: f64) -> Rows {
    (0..n)
        .map(|_| {
            (0..p)
                .map(|_| offset + rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}
