//! Site grouping, aggregate statistics, per-site tables and mitigation
//! advice.

mod fixture;
mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use fixture::{
    load_study_fixture, verdict_from_row, NotificationAssignment, StudyFixture, Table4, Table6,
    TableMarker, TableRow,
};
pub use render::{render_report, ReportFormat, ReportRow, COLUMNS};

use crate::attack::{ExpiryBucket, FlawKind, Lifetime};
use crate::evaluate::EvaluationVerdict;
use crate::notification::NotificationType;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("site {0} does not support 2FA and has no group")]
    Unclassifiable(String),
    #[error("unsupported format {0:?}; expected json, csv or md")]
    UnsupportedFormat(String),
    #[error("fixture: {0}")]
    Fixture(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AuthMethod {
    #[serde(rename = "SMS")]
    Sms,
    PhoneCall,
    SpecificApp,
    HardwareToken,
    Email,
    Passkey,
    AuthenticatorApp,
    Biometrics,
    RecoveryCode,
}

impl AuthMethod {
    pub const ALL: [AuthMethod; 9] = [
        AuthMethod::Sms,
        AuthMethod::PhoneCall,
        AuthMethod::SpecificApp,
        AuthMethod::HardwareToken,
        AuthMethod::Email,
        AuthMethod::Passkey,
        AuthMethod::AuthenticatorApp,
        AuthMethod::Biometrics,
        AuthMethod::RecoveryCode,
    ];
}

/// One site of a measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SiteRecord {
    pub domain: String,
    /// Display label; falls back to the domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub rank: u32,
    pub registrable: bool,
    pub requires_third_party: bool,
    pub supports2fa: bool,
    pub can_enable2fa: bool,
    pub has_remember_device: bool,
    /// Known only for remember-device sites.
    pub cookie_only: Option<bool>,
    #[serde(default)]
    pub methods: BTreeSet<AuthMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_row: Option<u32>,
    #[serde(default)]
    pub verdict: Option<EvaluationVerdict>,
}

impl SiteRecord {
    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.domain)
    }

    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.cookie_only.is_some() && !self.has_remember_device {
            return Err(ReportError::Fixture(format!(
                "{}: cookieOnly set without remember-device",
                self.domain
            )));
        }
        if self.supports2fa && self.registrable && self.methods.is_empty() {
            return Err(ReportError::Fixture(format!("{}: no 2FA methods", self.domain)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SiteGroup {
    G1,
    G2CookieOnly,
    G2Other,
    G3,
    G4,
    G5,
}

impl SiteGroup {
    pub const ALL: [SiteGroup; 6] = [
        SiteGroup::G1,
        SiteGroup::G2CookieOnly,
        SiteGroup::G2Other,
        SiteGroup::G3,
        SiteGroup::G4,
        SiteGroup::G5,
    ];
}

impl fmt::Display for SiteGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

pub fn classify_group(r: &SiteRecord) -> Result<SiteGroup, ReportError> {
    if !r.supports2fa {
        return Err(ReportError::Unclassifiable(r.domain.clone()));
    }
    Ok(if !r.registrable {
        SiteGroup::G4
    } else if r.requires_third_party {
        SiteGroup::G3
    } else if !r.can_enable2fa {
        SiteGroup::G5
    } else if !r.has_remember_device {
        SiteGroup::G1
    } else if r.cookie_only == Some(true) {
        SiteGroup::G2CookieOnly
    } else {
        SiteGroup::G2Other
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub numerator: usize,
    pub denominator: usize,
    pub ratio: f64,
}

impl Fraction {
    fn new(numerator: usize, denominator: usize) -> Self {
        Fraction {
            numerator,
            denominator,
            ratio: if denominator == 0 {
                0.0
            } else {
                numerator as f64 / denominator as f64
            },
        }
    }

    pub fn percent(&self) -> u32 {
        (self.ratio * 100.0).round() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpiryStats {
    /// Sites with a trust-cookie lifetime.
    pub total: usize,
    pub buckets: BTreeMap<ExpiryBucket, usize>,
    pub at_most_7: usize,
    pub exactly_30: usize,
    pub exactly_365: usize,
    pub exactly_400: usize,
    pub session: usize,
    /// Most common exact lifetime; ties go to the shorter one.
    pub modal_days: Option<i64>,
    pub modal_bucket: Option<ExpiryBucket>,
    pub by_days: BTreeMap<i64, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RankBucket {
    pub from: u32,
    pub to: u32,
    pub supports2fa: usize,
    pub remember_device: usize,
    pub cookie_only: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MethodStats {
    pub totals: BTreeMap<AuthMethod, usize>,
    /// Method tallies among sites offering exactly `k` methods.
    pub by_count: BTreeMap<usize, BTreeMap<AuthMethod, usize>>,
    pub sites_per_count: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AggregateStats {
    pub sites: usize,
    pub groups: BTreeMap<SiteGroup, usize>,
    pub unclassified: usize,
    /// Cookie-only sites among remember-device sites (G2).
    pub cookie_only: Fraction,
    pub expiry: ExpiryStats,
    pub rank_buckets: Vec<RankBucket>,
    pub methods: MethodStats,
    pub notifications: BTreeMap<NotificationType, usize>,
    pub attacks: BTreeMap<String, usize>,
}

pub const RANK_BUCKET_SIZE: u32 = 1000;

fn expiry_stats(records: &[SiteRecord]) -> ExpiryStats {
    let mut stats = ExpiryStats {
        total: 0,
        buckets: ExpiryBucket::ALL.iter().map(|b| (*b, 0)).collect(),
        at_most_7: 0,
        exactly_30: 0,
        exactly_365: 0,
        exactly_400: 0,
        session: 0,
        modal_days: None,
        modal_bucket: None,
        by_days: BTreeMap::new(),
    };
    for e in records.iter().filter_map(|r| r.verdict.as_ref()?.expiry) {
        stats.total += 1;
        *stats.buckets.entry(e.bucket).or_default() += 1;
        match e.max_lifetime_days {
            Lifetime::Session => stats.session += 1,
            Lifetime::Days(d) => {
                *stats.by_days.entry(d).or_default() += 1;
                stats.at_most_7 += usize::from(d <= 7);
                stats.exactly_30 += usize::from(d == 30);
                stats.exactly_365 += usize::from(d == 365);
                stats.exactly_400 += usize::from(d == 400);
            }
        }
    }
    let best = stats.by_days.values().copied().max();
    stats.modal_days = best.and_then(|m| stats.by_days.iter().find(|(_, c)| **c == m).map(|(d, _)| *d));
    stats.modal_bucket = stats.modal_days.map(|d| ExpiryBucket::of(Lifetime::Days(d)));
    stats
}

fn method_stats(records: &[SiteRecord]) -> MethodStats {
    let mut out = MethodStats {
        totals: AuthMethod::ALL.iter().map(|m| (*m, 0)).collect(),
        by_count: BTreeMap::new(),
        sites_per_count: BTreeMap::new(),
    };
    for r in records.iter().filter(|r| !r.methods.is_empty()) {
        let k = r.methods.len();
        *out.sites_per_count.entry(k).or_default() += 1;
        let col = out
            .by_count
            .entry(k)
            .or_insert_with(|| AuthMethod::ALL.iter().map(|m| (*m, 0)).collect());
        for m in &r.methods {
            *out.totals.entry(*m).or_default() += 1;
            *col.entry(*m).or_default() += 1;
        }
    }
    out
}

fn rank_buckets(records: &[SiteRecord], groups: &[Option<SiteGroup>]) -> Vec<RankBucket> {
    let max = records.iter().map(|r| r.rank).max().unwrap_or(0);
    let n = max.div_ceil(RANK_BUCKET_SIZE).max(1);
    let mut out: Vec<RankBucket> = (0..n)
        .map(|i| RankBucket {
            from: i * RANK_BUCKET_SIZE + 1,
            to: (i + 1) * RANK_BUCKET_SIZE,
            supports2fa: 0,
            remember_device: 0,
            cookie_only: 0,
        })
        .collect();
    for (r, g) in records.iter().zip(groups) {
        let Some(b) = out.get_mut((r.rank.max(1) - 1) as usize / RANK_BUCKET_SIZE as usize) else {
            continue;
        };
        b.supports2fa += usize::from(r.supports2fa);
        b.remember_device += usize::from(matches!(g, Some(SiteGroup::G2CookieOnly | SiteGroup::G2Other)));
        b.cookie_only += usize::from(*g == Some(SiteGroup::G2CookieOnly));
    }
    out
}

pub fn attack_label(attacks: &BTreeSet<crate::attack::AttackType>) -> String {
    attacks.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn aggregate_stats(records: &[SiteRecord]) -> AggregateStats {
    let groups: Vec<Option<SiteGroup>> = records.iter().map(|r| classify_group(r).ok()).collect();
    let mut counts: BTreeMap<SiteGroup, usize> = SiteGroup::ALL.iter().map(|g| (*g, 0)).collect();
    for g in groups.iter().flatten() {
        *counts.entry(*g).or_default() += 1;
    }
    let g2 = counts[&SiteGroup::G2CookieOnly] + counts[&SiteGroup::G2Other];
    let mut notifications: BTreeMap<NotificationType, usize> =
        NotificationType::ALL.iter().map(|n| (*n, 0)).collect();
    let mut attacks = BTreeMap::new();
    for v in records.iter().filter_map(|r| r.verdict.as_ref()) {
        if let Some(n) = v.notification {
            *notifications.entry(n).or_default() += 1;
        }
        if !v.attacks.is_empty() {
            *attacks.entry(attack_label(&v.attacks)).or_default() += 1;
        }
    }
    AggregateStats {
        sites: records.len(),
        unclassified: groups.iter().filter(|g| g.is_none()).count(),
        cookie_only: Fraction::new(counts[&SiteGroup::G2CookieOnly], g2),
        groups: counts,
        expiry: expiry_stats(records),
        rank_buckets: rank_buckets(records, &groups),
        methods: method_stats(records),
        notifications,
        attacks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskFactor {
    BrowserFingerprint,
    IpGeolocation,
    BehavioralAnalytics,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum Mitigation {
    SetSecure,
    SetHttpOnly,
    ShortenExpiry,
    AddRiskFactors(Vec<RiskFactor>),
    EnableNotifications,
    FixLogic(FlawKind),
}

pub const SHORT_EXPIRY_DAYS: i64 = 7;

pub fn recommend_mitigations(v: &EvaluationVerdict) -> Vec<Mitigation> {
    let mut out = Vec::new();
    let cookies = &v.audit.per_cookie;
    if cookies.iter().any(|c| !c.secure) {
        out.push(Mitigation::SetSecure);
    }
    if cookies.iter().any(|c| !c.http_only) {
        out.push(Mitigation::SetHttpOnly);
    }
    if v.max_lifetime_days().is_some_and(|d| d > SHORT_EXPIRY_DAYS) {
        out.push(Mitigation::ShortenExpiry);
    }
    if v.audit.cookie_only {
        let mut factors = Vec::new();
        if !v.measures.fingerprint_based {
            factors.push(RiskFactor::BrowserFingerprint);
        }
        if !v.measures.ip_based {
            factors.push(RiskFactor::IpGeolocation);
        }
        factors.push(RiskFactor::BehavioralAnalytics);
        out.push(Mitigation::AddRiskFactors(factors));
    }
    if v.remember_device && v.notification.is_none() {
        out.push(Mitigation::EnableNotifications);
    }
    for k in v.audit.flaws.kinds() {
        out.push(Mitigation::FixLogic(k));
    }
    out
}
