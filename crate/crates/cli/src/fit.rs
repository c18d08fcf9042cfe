use std::path::PathBuf;

use anyhow::{Context, Result};
use emmb::bounds::BoundsSource;
use emmb::estimator::diagnostics_at;
use emmb::inference::render_comparison;
use emmb::pm25::DesignMetadata;
use emmb::{
    coef_inference, estimate_bounds, fit_closed_form, fit_from_beta, fit_ols, fit_weighted_groups, group_bounds,
    ols_inference, CoefTable, EmConfig, WindowPlan,
};
use serde::{Deserialize, Serialize};

use crate::config::Resolver;
use crate::io::{emit, read_dataset, Provenance};
use crate::{Common, Usage};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Design-matrix CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    response: Option<String>,
    /// Non-numeric columns to skip (default: date).
    #[arg(long, value_delimiter = ',')]
    ignore: Option<Vec<String>>,
    /// EM window size.
    #[arg(long)]
    n0: Option<usize>,
    /// Moving-block length.
    #[arg(long)]
    w: Option<usize>,
    /// Known consecutive group sizes; replaces the n0 windows and the block scan.
    #[arg(long, value_delimiter = ',')]
    groups: Option<Vec<usize>>,
    /// Inverse-variance weighted M-step (known groups only).
    #[arg(long)]
    weighted: bool,
    /// Design metadata sidecar whose centering means are stored with the fit.
    #[arg(long)]
    metadata: Option<PathBuf>,
    /// Also write the comparison table here (it always goes to stdout).
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedBounds {
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub source: BoundsSource,
}

/// Everything `predict` needs, plus the full tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitArtifact {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub response: String,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub bounds: SavedBounds,
    pub plan: WindowPlan,
    pub converged: bool,
    pub iterations: usize,
    pub group_variances: Option<Vec<f64>>,
    pub emmb: CoefTable,
    pub ols: CoefTable,
    pub design: Option<DesignMetadata>,
}

pub fn run(a: Args, mut r: Resolver, common: Common) -> Result<()> {
    let input: String = r.require("input", a.input.map(|p| p.display().to_string()))?;
    let response: String = r.require("response", a.response)?;
    let ignore: Vec<String> = r.or("ignore", a.ignore, vec!["date".to_string()])?;
    let groups: Option<Vec<usize>> = r.get("groups", a.groups)?;
    let weighted: bool = r.or("weighted", a.weighted.then_some(true), false)?;
    let metadata: Option<String> = r.get("metadata", a.metadata.map(|p| p.display().to_string()))?;
    let table_path: Option<String> = r.get("table", a.table.map(|p| p.display().to_string()))?;

    let data = read_dataset(input.as_ref(), &response, &ignore)?;
    let n = data.n();
    let (plan, fit, diag, bounds) = match &groups {
        Some(sizes) => {
            let plan = WindowPlan::from_groups(sizes, n)?;
            let (fit, weights) = if weighted {
                let fit = fit_weighted_groups(&data, &plan, &EmConfig::default())?;
                let w = fit.group_variances.as_ref().map(|v| v.iter().map(|s| 1.0 / s).collect::<Vec<f64>>());
                (fit, w.filter(|w| w.iter().all(|x| x.is_finite())))
            } else {
                let (beta, _) = fit_closed_form(&data, &plan)?;
                (fit_from_beta(&data, &plan, &beta)?, None)
            };
            let diag = diagnostics_at(&data, &plan, &fit.beta_hat, weights.as_deref())?;
            let bounds = group_bounds(&fit)?;
            (plan, fit, diag, bounds)
        }
        None => {
            if weighted {
                return Err(Usage("--weighted needs --groups".into()).into());
            }
            let n0: usize = r.require("n0", a.n0)?;
            let w: usize = r.require("w", a.w)?;
            let plan = WindowPlan::fixed(n, n0)?;
            let (beta, diag) = fit_closed_form(&data, &plan)?;
            let fit = fit_from_beta(&data, &plan, &beta)?;
            let bounds = estimate_bounds(&data, &beta, &plan, w)?;
            (plan, fit, diag, bounds)
        }
    };
    let emmb_table = coef_inference(&data, &fit, &diag)?;
    let ols = fit_ols(&data)?;
    let ols_table = ols_inference(&data, &ols)?;

    let design = match &metadata {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {p}"))?;
            let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {p}"))?;
            Some(serde_json::from_value(v.get("design").cloned().unwrap_or(v)).with_context(|| format!("design metadata in {p}"))?)
        }
        None => None,
    };

    let prov = Provenance::new(common.seed, r.resolved());
    let mut table = prov.header(common.format)?;
    table.push_str(&render_comparison(&ols_table, &emmb_table, &bounds, common.format));
    print!("{table}");
    if let Some(p) = &table_path {
        emit(Some(p.as_ref()), &table)?;
    }

    if let Some(out) = &common.out {
        let artifact = FitArtifact {
            tool: prov.tool.into(),
            version: prov.version.into(),
            seed: common.seed,
            config: serde_json::to_value(r.resolved())?,
            response,
            names: data.names().to_vec(),
            beta: fit.beta_hat.as_slice().to_vec(),
            bounds: SavedBounds {
                mu_lower: bounds.mu_lower_hat,
                mu_upper: bounds.mu_upper_hat,
                source: bounds.source,
            },
            plan,
            converged: fit.converged,
            iterations: fit.iterations,
            group_variances: fit.group_variances.clone(),
            emmb: emmb_table,
            ols: ols_table,
            design,
        };
        let mut json = serde_json::to_string_pretty(&artifact)?;
        json.push('\n');
        emit(Some(out), &json)?;
    }
    Ok(())
}
