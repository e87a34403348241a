use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{attack_label, ReportError, SiteRecord};
use crate::evaluate::EvaluationVerdict;

pub const COLUMNS: [&str; 8] = [
    "No.",
    "Website",
    "Amount",
    "HTTPOnly",
    "Secure",
    "Expiries (days)",
    "Design Flaws",
    "Attack Type",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(ReportError::UnsupportedFormat(s.to_string())),
        }
    }
}

/// One rendered table line; every cell is final text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "No.")]
    pub no: String,
    #[serde(rename = "Website")]
    pub website: String,
    #[serde(rename = "Amount")]
    pub amount: String,
    #[serde(rename = "HTTPOnly")]
    pub http_only: String,
    #[serde(rename = "Secure")]
    pub secure: String,
    #[serde(rename = "Expiries (days)")]
    pub expiries: String,
    #[serde(rename = "Design Flaws")]
    pub design_flaws: String,
    #[serde(rename = "Attack Type")]
    pub attack_type: String,
}

impl ReportRow {
    fn cells(&self) -> [&str; 8] {
        [
            &self.no,
            &self.website,
            &self.amount,
            &self.http_only,
            &self.secure,
            &self.expiries,
            &self.design_flaws,
            &self.attack_type,
        ]
    }
}

fn flag_cell(values: impl Iterator<Item = bool>) -> String {
    let v: Vec<bool> = values.collect();
    if v.is_empty() {
        "-".into()
    } else if v.iter().all(|b| *b) {
        "true".into()
    } else if v.iter().all(|b| !*b) {
        "false".into()
    } else {
        "mixed".into()
    }
}

fn row_for(no: usize, label: &str, v: &EvaluationVerdict) -> ReportRow {
    let cookies = &v.audit.per_cookie;
    let mut flaws: Vec<String> = v.audit.flaws.kinds().iter().map(|k| k.label().to_string()).collect();
    if v.audit.uses_local_storage {
        flaws.push("localStorage".into());
    }
    ReportRow {
        no: no.to_string(),
        website: label.to_string(),
        amount: if cookies.is_empty() {
            "-".into()
        } else {
            cookies.len().to_string()
        },
        http_only: flag_cell(cookies.iter().map(|c| c.http_only)),
        secure: flag_cell(cookies.iter().map(|c| c.secure)),
        expiries: v
            .expiry
            .map_or_else(|| "-".into(), |e| e.max_lifetime_days.to_string()),
        design_flaws: if flaws.is_empty() { "-".into() } else { flaws.join("; ") },
        attack_type: if v.attacks.is_empty() {
            "-".into()
        } else {
            attack_label(&v.attacks)
        },
    }
}

/// Rows for every site with a verdict, ordered by rank then domain.
pub fn report_rows(sites: &[SiteRecord]) -> Vec<ReportRow> {
    let mut with: Vec<&SiteRecord> = sites.iter().filter(|s| s.verdict.is_some()).collect();
    with.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.domain.cmp(&b.domain)));
    with.iter()
        .enumerate()
        .map(|(i, s)| row_for(i + 1, s.label(), s.verdict.as_ref().expect("filtered")))
        .collect()
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn render_report(sites: &[SiteRecord], format: ReportFormat) -> Result<String, ReportError> {
    let rows = report_rows(sites);
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(&rows)? + "\n"),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for r in &rows {
                w.write_record(r.cells())?;
            }
            let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", COLUMNS.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
            for r in &rows {
                let cells: Vec<String> = r.cells().iter().map(|c| md_cell(c)).collect();
                out.push_str(&format!("| {} |\n", cells.join(" | ")));
            }
            Ok(out)
        }
    }
}
