use std::fs::File;
use std::path::PathBuf;

use anyhow::{Context, Result};
use emmb::pm25::{design_to_csv, prepare_design, DesignMetadata, HeatingCalendar, Seasons};
use emmb::TableFormat;
use serde::Serialize;

use crate::config::Resolver;
use crate::io::{emit, Provenance};
use crate::{Common, Usage};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Hourly UCI Beijing PM2.5 CSV.
    #[arg(long)]
    input: Option<PathBuf>,
    /// CSV of `start,end` heating intervals; built-in defaults otherwise.
    #[arg(long)]
    heating_calendar: Option<PathBuf>,
    /// Months counted as summer for SE_Summer.
    #[arg(long, value_delimiter = ',')]
    summer_months: Option<Vec<u32>>,
    /// Months counted as winter for SE_Winter.
    #[arg(long, value_delimiter = ',')]
    winter_months: Option<Vec<u32>>,
    /// Metadata sidecar path (default: the output path with `.meta.json` appended).
    #[arg(long)]
    metadata: Option<PathBuf>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    design: &'a DesignMetadata,
}

pub fn run(a: Args, mut r: Resolver, common: Common) -> Result<()> {
    let input: String = r.require("input", a.input.map(|p| p.display().to_string()))?;
    let calendar_path: Option<String> = r.get("heating_calendar", a.heating_calendar.map(|p| p.display().to_string()))?;
    let defaults = Seasons::default();
    let seasons = Seasons {
        summer_months: r.or("summer_months", a.summer_months, defaults.summer_months)?,
        winter_months: r.or("winter_months", a.winter_months, defaults.winter_months)?,
    };
    let out = common
        .out
        .clone()
        .ok_or_else(|| Usage("prep needs --out for the design matrix".into()))?;
    let meta_default = format!("{}.meta.json", out.display());
    let meta_path: String = r.or("metadata", a.metadata.map(|p| p.display().to_string()), meta_default)?;

    let calendar = match &calendar_path {
        Some(p) => HeatingCalendar::from_csv(File::open(p).with_context(|| format!("opening {p}"))?)?,
        None => HeatingCalendar::default(),
    };
    let file = File::open(&input).with_context(|| format!("opening {input}"))?;
    let design = prepare_design(file, &calendar, &seasons)?;

    let prov = Provenance::new(common.seed, r.resolved());
    let mut csv = prov.header(TableFormat::Csv)?;
    csv.push_str(&design_to_csv(&design));
    emit(Some(&out), &csv)?;
    let mut json = serde_json::to_string_pretty(&Sidecar { provenance: prov, design: &design.metadata })?;
    json.push('\n');
    emit(Some(meta_path.as_ref()), &json)?;

    let m = &design.metadata;
    eprintln!(
        "daily rows: {}, dropped (missing pm25_mean or pm25_lag4h): {}, complete cases: {}",
        m.daily_rows, m.dropped_rows, m.complete_rows
    );
    Ok(())
}
