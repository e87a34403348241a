use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AuthMethod, ReportError, SiteRecord};
use crate::attack::{
    audit_expiry, classify_attack_surface, lifetime_of, AttackType, CookieAudit, FlawKind, FlawSet,
    Lifetime, TrustCookieAudit,
};
use crate::cookie::{CookieRecord, SameSite};
use crate::evaluate::EvaluationVerdict;
use crate::notification::NotificationType;
use crate::probe::{MeasureSet, TrustCookieSet};
use crate::time::{Timestamp, SECONDS_PER_DAY};

/// Symbol in a table's design-flaw column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TableMarker {
    CrossAccount,
    Predictable,
    LocalStorage,
    Broken,
}

/// One row of the per-site attack tables, as published.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TableRow {
    pub no: u32,
    pub website: String,
    pub amount: Option<u32>,
    pub http_only: Option<bool>,
    pub secure: Option<bool>,
    pub expiry: Option<Lifetime>,
    pub marker: Option<TableMarker>,
    /// Flaw kinds behind the marker.
    #[serde(default)]
    pub flaws: BTreeSet<FlawKind>,
    pub attacks: BTreeSet<AttackType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationAssignment {
    pub row: u32,
    #[serde(rename = "type")]
    pub kind: NotificationType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Table6 {
    pub counts: BTreeMap<NotificationType, usize>,
    pub assignments: Vec<NotificationAssignment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Table4 {
    pub totals: BTreeMap<AuthMethod, usize>,
    pub by_count: BTreeMap<usize, BTreeMap<AuthMethod, usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyFixture {
    pub sites: Vec<SiteRecord>,
    pub rows: Vec<TableRow>,
    pub table6: Table6,
    pub table4: Table4,
}

const FIXTURE_EPOCH: i64 = 1_717_200_000;

/// Rebuilds the verdict a row describes. Multi-cookie rows repeat the
/// row's flags and lifetime for every cookie.
pub fn verdict_from_row(row: &TableRow, domain: &str) -> EvaluationVerdict {
    let created = Timestamp::from_unix(FIXTURE_EPOCH);
    let mut flaws = FlawSet::new();
    for k in &row.flaws {
        flaws.insert(*k, format!("table row {}", row.no));
    }
    let broken = row.flaws.contains(&FlawKind::Broken2FA);
    let local = row.marker == Some(TableMarker::LocalStorage);
    let measures = if broken {
        MeasureSet::default()
    } else if local {
        MeasureSet {
            device_token_based: true,
            ..MeasureSet::default()
        }
    } else {
        MeasureSet::COOKIE_ONLY
    };
    let count = if local || broken { 0 } else { row.amount.unwrap_or(0) };
    let records = (0..count).map(|i| CookieRecord {
        name: format!("trust_{}", i + 1),
        value: String::new(),
        domain: domain.to_string(),
        path: "/".into(),
        secure: row.secure.unwrap_or(true),
        http_only: row.http_only.unwrap_or(true),
        same_site: SameSite::Unspecified,
        expires_at: match row.expiry {
            Some(Lifetime::Days(d)) => Some(created.saturating_add(d * SECONDS_PER_DAY)),
            _ => None,
        },
        created_at: created,
    });
    let trust = TrustCookieSet::from_records(records);
    let audit = TrustCookieAudit {
        cookie_only: measures.client_state_only(),
        uses_local_storage: local,
        per_cookie: trust
            .records
            .iter()
            .map(|r| CookieAudit {
                key: r.key(),
                secure: r.secure,
                http_only: r.http_only,
                lifetime_days: lifetime_of(r),
            })
            .collect(),
        flaws,
    };
    EvaluationVerdict {
        target: domain.to_string(),
        remember_device: !broken,
        measures,
        expiry: audit_expiry(&trust.records),
        attacks: classify_attack_surface(&audit).unwrap_or_default(),
        trust,
        audit,
        notification: None,
        notes: Vec::new(),
        warnings: Vec::new(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ReportError::Fixture(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads `sites.json`, `table3_7.json`, `table6.json` and `table4.json`
/// from `dir` and attaches row verdicts and notification types to sites.
pub fn load_study_fixture(dir: &Path) -> Result<StudyFixture, ReportError> {
    let mut sites: Vec<SiteRecord> = read_json(&dir.join("sites.json"))?;
    let rows: Vec<TableRow> = read_json(&dir.join("table3_7.json"))?;
    let table6: Table6 = read_json(&dir.join("table6.json"))?;
    let table4: Table4 = read_json(&dir.join("table4.json"))?;

    let by_row: BTreeMap<u32, &TableRow> = rows.iter().map(|r| (r.no, r)).collect();
    let notes: BTreeMap<u32, NotificationType> =
        table6.assignments.iter().map(|a| (a.row, a.kind)).collect();
    for site in &mut sites {
        site.validate()?;
        let Some(no) = site.table_row else { continue };
        let row = by_row
            .get(&no)
            .ok_or_else(|| ReportError::Fixture(format!("{}: unknown table row {no}", site.domain)))?;
        let mut v = verdict_from_row(row, &site.domain);
        v.notification = notes.get(&no).copied();
        site.name = Some(row.website.clone());
        site.verdict = Some(v);
    }
    Ok(StudyFixture {
        sites,
        rows,
        table6,
        table4,
    })
}
