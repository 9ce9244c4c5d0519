//! Summary rows, their TSV form, and the human-readable results table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::{format_cell, margin95, Metric, RunSummary, Scenario};

pub const HEADER: &str = "model\tpar_label\tscenario\tmetric\tk\tmean\tmargin95\tshuffled_mean\tdelta_pct\tn_runs";

const SHUFFLED_SUFFIX: &str = "/shuffled";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub par_label: String,
    pub scenario: Scenario,
    pub metric: Metric,
    pub k: usize,
    pub mean: f64,
    pub margin95: f64,
    pub shuffled_mean: Option<f64>,
    pub delta_pct: Option<f64>,
    pub n_runs: usize,
}

impl ReportRow {
    pub fn is_shuffled(&self) -> bool {
        self.par_label.ends_with(SHUFFLED_SUFFIX)
    }

    pub fn cell(&self) -> String {
        format_cell(self.mean, self.margin95, self.delta_pct)
    }

    fn sort_key(&self) -> (Scenario, Metric, usize, String, String) {
        (self.scenario, self.metric, self.k, self.model.clone(), self.par_label.clone())
    }
}

/// A true-initialization row and a shuffled-control row per metric.
pub fn rows_for(
    model: &str,
    par_label: &str,
    scenario: Scenario,
    k: usize,
    summaries: &BTreeMap<Metric, RunSummary>,
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (&metric, s) in summaries {
        rows.push(ReportRow {
            model: model.to_string(),
            par_label: par_label.to_string(),
            scenario,
            metric,
            k,
            mean: s.mean,
            margin95: s.margin95,
            shuffled_mean: Some(s.shuffled_mean),
            delta_pct: s.delta_pct,
            n_runs: s.values.len(),
        });
        rows.push(ReportRow {
            model: model.to_string(),
            par_label: format!("{par_label}{SHUFFLED_SUFFIX}"),
            scenario,
            metric,
            k,
            mean: s.shuffled_mean,
            margin95: margin95(&s.shuffled_values),
            shuffled_mean: None,
            delta_pct: None,
            n_runs: s.shuffled_values.len(),
        });
    }
    rows
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

pub fn to_tsv(rows: &[ReportRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{}",
            r.model,
            r.par_label,
            r.scenario,
            r.metric,
            r.k,
            r.mean,
            r.margin95,
            opt(r.shuffled_mean),
            opt(r.delta_pct),
            r.n_runs
        );
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing report header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse { line: i + 1, message: m };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("invalid number `{s}`")));
        let opt_num = |s: &str| if s == "NA" { Ok(None) } else { num(s).map(Some) };
        let int = |s: &str| s.parse::<usize>().map_err(|_| err(format!("invalid count `{s}`")));
        let metric = Metric::ALL
            .into_iter()
            .find(|m| m.name() == f[3])
            .ok_or_else(|| err(format!("unknown metric `{}`", f[3])))?;
        rows.push(ReportRow {
            model: f[0].to_string(),
            par_label: f[1].to_string(),
            scenario: Scenario::from_str(f[2]).map_err(|e| err(e.to_string()))?,
            metric,
            k: int(f[4])?,
            mean: num(f[5])?,
            margin95: num(f[6])?,
            shuffled_mean: opt_num(f[7])?,
            delta_pct: opt_num(f[8])?,
            n_runs: int(f[9])?,
        });
    }
    Ok(rows)
}

/// Merges row sets; a later row replaces an earlier one with the same
/// model, label, scenario, metric and cutoff. Output is sorted.
pub fn merge(sets: impl IntoIterator<Item = Vec<ReportRow>>) -> Vec<ReportRow> {
    let mut by_key = BTreeMap::new();
    for set in sets {
        for row in set {
            by_key.insert(row.sort_key(), row);
        }
    }
    by_key.into_values().collect()
}

/// One block per scenario, metric and cutoff; one line per model and label.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut groups: BTreeMap<(Scenario, Metric, usize), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.scenario, r.metric, r.k)).or_default().push(r);
    }
    let mut out = String::new();
    for ((scenario, metric, k), group) in groups {
        let _ = writeln!(out, "{scenario} {metric}@{k}");
        let model_w = group.iter().map(|r| r.model.chars().count()).max().unwrap_or(0).max(5);
        let label_w = group.iter().map(|r| r.par_label.chars().count()).max().unwrap_or(0).max(3);
        let _ = writeln!(out, "  {:<model_w$}  {:<label_w$}  value", "model", "par");
        for r in group {
            let _ = writeln!(out, "  {:<model_w$}  {:<label_w$}  {}", r.model, r.par_label, r.cell());
        }
        out.push('\n');
    }
    out
}
