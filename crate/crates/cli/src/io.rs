use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use emmb::{Dataset, TableFormat};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance block written at the top of every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: &'a BTreeMap<String, serde_json::Value>,
}

impl<'a> Provenance<'a> {
    pub fn new(seed: u64, config: &'a BTreeMap<String, serde_json::Value>) -> Self {
        Self { tool: "emmb", version: VERSION, seed, config }
    }

    /// Comment lines: `#` for CSV, an HTML comment for markdown.
    pub fn header(&self, format: TableFormat) -> Result<String> {
        let config = serde_json::to_string(self.config)?;
        Ok(match format {
            TableFormat::Csv => format!("# {} {}\n# seed: {}\n# config: {config}\n", self.tool, self.version, self.seed),
            TableFormat::Markdown => format!(
                "<!-- {} {} | seed: {} | config: {config} -->\n\n",
                self.tool, self.version, self.seed
            ),
        })
    }
}

/// Writes to `path`, or stdout when absent.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Numeric table from a headed CSV. `#` lines are comments.
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_numeric_csv(path: &Path, skip: &[String]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let all: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let keep: Vec<usize> = (0..all.len()).filter(|&i| !skip.contains(&all[i])).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = keep
            .iter()
            .map(|&i| {
                let s = rec.get(i).unwrap_or("");
                s.parse::<f64>()
                    .with_context(|| format!("{}:{line}: column '{}' has non-numeric value '{s}'", path.display(), all[i]))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { headers: keep.iter().map(|&i| all[i].clone()).collect(), rows })
}

/// Dataset with `response` as `y` and every other kept column as a covariate, in file order.
pub fn read_dataset(path: &Path, response: &str, skip: &[String]) -> Result<Dataset> {
    let t = read_numeric_csv(path, skip)?;
    let Some(r) = t.headers.iter().position(|h| h == response) else {
        bail!("response column '{response}' not found in {} (columns: {})", path.display(), t.headers.join(", "));
    };
    let names: Vec<String> = t.headers.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, h)| h.clone()).collect();
    let n = t.rows.len();
    let p = names.len();
    let x = DMatrix::from_fn(n, p, |i, j| t.rows[i][if j < r { j } else { j + 1 }]);
    let y = DVector::from_iterator(n, t.rows.iter().map(|row| row[r]));
    Ok(Dataset::new(x, y, names)?)
}
