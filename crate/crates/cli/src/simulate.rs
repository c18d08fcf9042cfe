use anyhow::Result;
use emmb::simulation::{emit_table, run_monte_carlo, DgpSpec, Variant};

use crate::config::Resolver;
use crate::io::{emit, Provenance};
use crate::{Common, Usage};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// sim1, sim2 or sim3.
    #[arg(long)]
    variant: Option<String>,
    /// Number of groups; a comma list gives one table block per entry.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Rows per group.
    #[arg(long)]
    m: Option<usize>,
    /// EM window size.
    #[arg(long)]
    n0: Option<usize>,
    /// Moving-block length; one value, or one per entry of --k.
    #[arg(long, value_delimiter = ',')]
    w: Option<Vec<usize>>,
    /// Monte Carlo replications (default 1000).
    #[arg(long)]
    reps: Option<usize>,
}

pub fn run(a: Args, mut r: Resolver, common: Common) -> Result<()> {
    let variant: String = r.require("variant", a.variant)?;
    let variant: Variant = variant.parse().map_err(|e: emmb::EmmbError| Usage(e.to_string()))?;
    let ks: Vec<usize> = r.require("k", a.k)?;
    let m: usize = r.or("m", a.m, 100)?;
    let n0: usize = r.require("n0", a.n0)?;
    let ws: Vec<usize> = r.require("w", a.w)?;
    let reps: usize = r.or("reps", a.reps, 1000)?;
    if reps == 0 {
        return Err(Usage("reps must be at least 1".into()).into());
    }
    if ks.is_empty() || (ws.len() != 1 && ws.len() != ks.len()) {
        return Err(Usage(format!("--w needs one value or one per --k entry ({} given for {} k)", ws.len(), ks.len())).into());
    }
    let mut summaries = Vec::with_capacity(ks.len());
    for (i, &k) in ks.iter().enumerate() {
        let w = if ws.len() == 1 { ws[0] } else { ws[i] };
        let spec = DgpSpec::preset(variant, k, m, common.seed)?;
        summaries.push(run_monte_carlo(&spec, reps, n0, w, common.seed)?);
    }
    let prov = Provenance::new(common.seed, r.resolved());
    let mut out = prov.header(common.format)?;
    out.push_str(&emit_table(&summaries, common.format)?);
    emit(common.out.as_deref(), &out)
}
