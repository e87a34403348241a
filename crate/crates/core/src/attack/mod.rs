//! Attack-surface classification, design-flaw analysis, expiry audit and
//! notification typing.
//!
//! Everything here is a pure function of already-collected evidence; the
//! active tests that produce that evidence live in `evaluate`.

mod expiry;
mod notify;
mod scheme;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cookie::CookieKey;

pub use expiry::{audit_expiry, lifetime_of, ExpiryAudit, ExpiryBucket, Lifetime};
pub use notify::{classify_notifications, NotificationEvidence};
pub use scheme::{
    analyze_value_scheme, forge_cookie_value, screen_values, shannon_entropy, TimestampFormat, ValueAnalysis,
    LOW_ENTROPY_BITS, PRINTABLE_RATIO, TIMESTAMP_WINDOW_SECS,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("audit has no trust cookies, no device token and no broken-2FA finding")]
    EmptyAudit,
    #[error("value analysis needs four non-empty trust sets, got {0}")]
    InsufficientSets(usize),
    #[error("{0} values cannot be forged")]
    Unforgeable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackType {
    /// Man-in-the-middle interception of non-Secure cookies.
    A1,
    /// Script access to non-HttpOnly cookies or stored tokens.
    A2,
    /// Man-in-the-browser exfiltration, independent of flags.
    A3,
    /// Logic flaws in the trust value or the challenge itself.
    A4,
}

impl fmt::Display for AttackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FlawKind {
    CrossAccountReuse,
    FixedValue,
    PredictableTimestamp,
    SensitiveEncoding,
    #[serde(rename = "Broken2FA")]
    Broken2FA,
}

impl FlawKind {
    pub fn label(self) -> &'static str {
        match self {
            FlawKind::CrossAccountReuse => "CrossAccountReuse",
            FlawKind::FixedValue => "FixedValue",
            FlawKind::PredictableTimestamp => "PredictableTimestamp",
            FlawKind::SensitiveEncoding => "SensitiveEncoding",
            FlawKind::Broken2FA => "Broken2FA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignFlaw {
    pub kind: FlawKind,
    pub evidence: String,
}

/// Design flaws keyed by kind; the first evidence recorded for a kind is
/// kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlawSet(BTreeMap<FlawKind, String>);

impl FlawSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, kind: FlawKind, evidence: impl Into<String>) {
        self.0.entry(kind).or_insert_with(|| evidence.into());
    }

    pub fn extend(&mut self, other: FlawSet) {
        for (k, e) in other.0 {
            self.insert(k, e);
        }
    }

    pub fn contains(&self, kind: FlawKind) -> bool {
        self.0.contains_key(&kind)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn kinds(&self) -> BTreeSet<FlawKind> {
        self.0.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = DesignFlaw> + '_ {
        self.0.iter().map(|(k, e)| DesignFlaw {
            kind: *k,
            evidence: e.clone(),
        })
    }
}

impl FromIterator<DesignFlaw> for FlawSet {
    fn from_iter<I: IntoIterator<Item = DesignFlaw>>(iter: I) -> Self {
        let mut s = FlawSet::new();
        for f in iter {
            s.insert(f.kind, f.evidence);
        }
        s
    }
}

impl Serialize for FlawSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for FlawSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Vec::<DesignFlaw>::deserialize(deserializer)?.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CookieAudit {
    pub key: CookieKey,
    pub secure: bool,
    pub http_only: bool,
    pub lifetime_days: Lifetime,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrustCookieAudit {
    pub cookie_only: bool,
    pub uses_local_storage: bool,
    pub per_cookie: Vec<CookieAudit>,
    pub flaws: FlawSet,
}

/// Maps an audit to the attacks it enables.
///
/// Broken 2FA is a pure logic flaw. Targets whose trust also depends on
/// fingerprint or IP are not stealable by copying client state, so they
/// get no attack. Otherwise A3 always applies; A1 and A2 require every
/// trust cookie to lack the respective flag (the attacker needs all of
/// them), and a stored device token is script-readable.
pub fn classify_attack_surface(audit: &TrustCookieAudit) -> Result<BTreeSet<AttackType>, AttackError> {
    if audit.flaws.contains(FlawKind::Broken2FA) {
        return Ok(BTreeSet::from([AttackType::A4]));
    }
    if audit.per_cookie.is_empty() && !audit.uses_local_storage {
        return Err(AttackError::EmptyAudit);
    }
    let mut out = BTreeSet::new();
    if !audit.cookie_only {
        return Ok(out);
    }
    out.insert(AttackType::A3);
    let has_cookies = !audit.per_cookie.is_empty();
    if has_cookies && audit.per_cookie.iter().all(|c| !c.secure) {
        out.insert(AttackType::A1);
    }
    if audit.uses_local_storage || (has_cookies && audit.per_cookie.iter().all(|c| !c.http_only)) {
        out.insert(AttackType::A2);
    }
    if !audit.flaws.is_empty() {
        out.insert(AttackType::A4);
    }
    Ok(out)
}

/// What a single exported capture of trust cookies reveals on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaticAudit {
    pub label: String,
    pub audit: TrustCookieAudit,
    pub expiry: Option<ExpiryAudit>,
    pub attacks: BTreeSet<AttackType>,
    pub values: ValueAnalysis,
}

/// Audits every cookie in `snapshot` as a trust cookie. `cookie_only`
/// states whether the site was found to rely on cookies alone.
pub fn audit_snapshot(
    snapshot: &crate::cookie::CookieSnapshot,
    cookie_only: bool,
) -> Result<StaticAudit, AttackError> {
    let trust = crate::probe::TrustCookieSet::from_records(snapshot.cookies().iter().cloned());
    let values = screen_values(&trust, snapshot.taken_at);
    let audit = TrustCookieAudit {
        cookie_only,
        uses_local_storage: false,
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
        flaws: values.flaws.clone(),
    };
    let attacks = classify_attack_surface(&audit)?;
    Ok(StaticAudit {
        label: snapshot.label.clone(),
        expiry: audit_expiry(&trust.records),
        audit,
        attacks,
        values,
    })
}
