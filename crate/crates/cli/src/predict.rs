use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use emmb::bounds::{intercept_bounds, predict_interval};
use emmb::TableFormat;
use nalgebra::DVector;

use crate::config::Resolver;
use crate::fit::FitArtifact;
use crate::io::{emit, read_numeric_csv, Provenance};
use crate::Common;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Fit artifact written by `fit --out`.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// CSV of new covariate rows.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Columns to skip (default: date and the fitted response).
    #[arg(long, value_delimiter = ',')]
    ignore: Option<Vec<String>>,
}

pub fn run(a: Args, mut r: Resolver, common: Common) -> Result<()> {
    let fit_path: String = r.require("fit", a.fit.map(|p| p.display().to_string()))?;
    let input: String = r.require("input", a.input.map(|p| p.display().to_string()))?;
    let text = std::fs::read_to_string(&fit_path).with_context(|| format!("reading {fit_path}"))?;
    let fit: FitArtifact = serde_json::from_str(&text).with_context(|| format!("parsing fit artifact {fit_path}"))?;
    let ignore: Vec<String> = r.or("ignore", a.ignore, vec!["date".to_string(), fit.response.clone()])?;

    let table = read_numeric_csv(input.as_ref(), &ignore)?;
    let p = fit.beta.len();
    if table.headers.len() != p {
        bail!(
            "{input} has {} covariate columns but the fit expects p = {p} ({})",
            table.headers.len(),
            fit.names.join(", ")
        );
    }
    // match by name when the headers are the fitted names, otherwise by position
    let order: Vec<usize> = if fit.names.iter().all(|n| table.headers.contains(n)) {
        fit.names.iter().map(|n| table.headers.iter().position(|h| h == n).expect("checked")).collect()
    } else {
        (0..p).collect()
    };
    let beta = DVector::from_column_slice(&fit.beta);
    let bounds = intercept_bounds(vec![fit.bounds.mu_lower, fit.bounds.mu_upper], 2)?;

    let prov = Provenance::new(common.seed, r.resolved());
    let mut out = prov.header(TableFormat::Csv)?;
    out.push_str("row,lower,upper,point_center\n");
    for (i, row) in table.rows.iter().enumerate() {
        let x: Vec<f64> = order.iter().map(|&j| row[j]).collect();
        let pi = predict_interval(&x, &beta, &bounds)?;
        out.push_str(&format!("{},{},{},{}\n", i + 1, pi.lower, pi.upper, pi.point_center));
    }
    emit(common.out.as_deref(), &out)
}
