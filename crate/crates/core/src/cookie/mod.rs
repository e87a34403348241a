//! Cookie records, `Set-Cookie` parsing, jars, snapshots and diffs.
//!
//! Everything downstream (flow driving, trust isolation, attribute audits)
//! consumes [`CookieRecord`]s produced here, so attribute semantics follow
//! RFC 6265 closely: Max-Age beats Expires, the last occurrence of an
//! attribute wins, and unknown attributes are ignored.

mod date;
mod jar;
mod parse;
mod snapshot;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::time::Timestamp;

pub use date::parse_cookie_date;
pub use jar::{cookie_header, CookieJar};
pub use parse::{default_path, domain_matches, parse_set_cookie, path_matches, Origin};
pub use snapshot::{
    apply_toggle_mask, diff_snapshots, parse_snapshot, serialize_snapshot, ChangedCookie,
    CookieSnapshot, SnapshotDiff,
};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum CookieError {
    #[error("malformed cookie: {0}")]
    MalformedCookie(String),
    #[error("cookie domain {domain:?} does not match request host {host:?}")]
    ForeignDomain { domain: String, host: String },
    #[error("interchange format error at record {index:?}: {message}")]
    FormatError { index: Option<usize>, message: String },
    #[error("unknown cookie key {0}")]
    UnknownKey(CookieKey),
    #[error("duplicate cookie key {0}")]
    DuplicateKey(CookieKey),
}

/// Identity of a cookie inside a jar: `(name, domain, path)`.
///
/// Ordering is by domain, then path, then name; snapshots are kept in this
/// order so serialization is deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CookieKey {
    pub domain: String,
    pub path: String,
    pub name: String,
}

impl CookieKey {
    pub fn new(name: impl Into<String>, domain: impl Into<String>, path: impl Into<String>) -> Self {
        CookieKey {
            name: name.into(),
            domain: domain.into(),
            path: path.into(),
        }
    }
}

impl fmt::Display for CookieKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}{}", self.name, self.domain, self.path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum SameSite {
    Strict,
    Lax,
    None,
    #[default]
    Unspecified,
}

impl SameSite {
    fn as_wire(self) -> Option<&'static str> {
        match self {
            SameSite::Strict => Some("Strict"),
            SameSite::Lax => Some("Lax"),
            SameSite::None => Some("None"),
            SameSite::Unspecified => None,
        }
    }
}

impl Serialize for SameSite {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.as_wire() {
            Some(s) => serializer.serialize_str(s),
            None => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for SameSite {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match Option::<String>::deserialize(deserializer)?.as_deref() {
            None => Ok(SameSite::Unspecified),
            Some("Strict") => Ok(SameSite::Strict),
            Some("Lax") => Ok(SameSite::Lax),
            Some("None") => Ok(SameSite::None),
            Some(other) => Err(serde::de::Error::custom(format!(
                "invalid sameSite value {other:?}"
            ))),
        }
    }
}

/// A stored cookie with fully resolved attributes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CookieRecord {
    pub name: String,
    pub value: String,
    pub domain: String,
    pub path: String,
    pub secure: bool,
    pub http_only: bool,
    #[serde(default)]
    pub same_site: SameSite,
    /// `None` is a session cookie.
    pub expires_at: Option<Timestamp>,
    pub created_at: Timestamp,
}

impl CookieRecord {
    pub fn key(&self) -> CookieKey {
        CookieKey::new(&self.name, &self.domain, &self.path)
    }

    pub fn is_session(&self) -> bool {
        self.expires_at.is_none()
    }

    pub fn is_expired(&self, now: Timestamp) -> bool {
        matches!(self.expires_at, Some(exp) if exp <= now)
    }

    /// Checks the name/value character rules applied at parse time.
    pub fn validate(&self) -> Result<(), CookieError> {
        validate_name(&self.name)?;
        validate_value(&self.value)?;
        if self.domain.is_empty() {
            return Err(CookieError::MalformedCookie("empty domain".into()));
        }
        if !self.path.starts_with('/') {
            return Err(CookieError::MalformedCookie(format!(
                "path {:?} does not start with '/'",
                self.path
            )));
        }
        Ok(())
    }
}

pub(crate) fn validate_name(name: &str) -> Result<(), CookieError> {
    if name.is_empty() {
        return Err(CookieError::MalformedCookie("empty cookie name".into()));
    }
    if let Some(c) = name
        .chars()
        .find(|&c| c == '=' || c == ';' || c.is_control() || c.is_whitespace())
    {
        return Err(CookieError::MalformedCookie(format!(
            "cookie name contains forbidden character {c:?}"
        )));
    }
    Ok(())
}

pub(crate) fn validate_value(value: &str) -> Result<(), CookieError> {
    if let Some(c) = value.chars().find(|&c| c == ';' || (c.is_control() && c != '\t')) {
        return Err(CookieError::MalformedCookie(format!(
            "cookie value contains forbidden character {c:?}"
        )));
    }
    Ok(())
}
