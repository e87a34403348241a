use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cookie::CookieRecord;
use crate::time::SECONDS_PER_DAY;

/// Cookie lifetime in whole days (rounded up), or a session cookie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lifetime {
    Days(i64),
    Session,
}

impl fmt::Display for Lifetime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lifetime::Days(d) => write!(f, "{d}"),
            Lifetime::Session => f.write_str("session"),
        }
    }
}

impl Serialize for Lifetime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Lifetime::Days(d) => serializer.serialize_i64(*d),
            Lifetime::Session => serializer.serialize_str("session"),
        }
    }
}

impl<'de> Deserialize<'de> for Lifetime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Days(i64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Days(d) => Ok(Lifetime::Days(d)),
            Raw::Text(s) if s.eq_ignore_ascii_case("session") => Ok(Lifetime::Session),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("invalid lifetime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExpiryBucket {
    #[serde(rename = "<=7")]
    UpTo7,
    #[serde(rename = "8-29")]
    From8To29,
    #[serde(rename = "30")]
    Exactly30,
    #[serde(rename = "31-364")]
    From31To364,
    #[serde(rename = ">=365")]
    AtLeast365,
    #[serde(rename = "session")]
    Session,
}

impl ExpiryBucket {
    pub const ALL: [ExpiryBucket; 6] = [
        ExpiryBucket::UpTo7,
        ExpiryBucket::From8To29,
        ExpiryBucket::Exactly30,
        ExpiryBucket::From31To364,
        ExpiryBucket::AtLeast365,
        ExpiryBucket::Session,
    ];

    pub fn of(lifetime: Lifetime) -> Self {
        match lifetime {
            Lifetime::Session => ExpiryBucket::Session,
            Lifetime::Days(d) if d <= 7 => ExpiryBucket::UpTo7,
            Lifetime::Days(d) if d < 30 => ExpiryBucket::From8To29,
            Lifetime::Days(30) => ExpiryBucket::Exactly30,
            Lifetime::Days(d) if d < 365 => ExpiryBucket::From31To364,
            Lifetime::Days(_) => ExpiryBucket::AtLeast365,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExpiryBucket::UpTo7 => "<=7",
            ExpiryBucket::From8To29 => "8-29",
            ExpiryBucket::Exactly30 => "30",
            ExpiryBucket::From31To364 => "31-364",
            ExpiryBucket::AtLeast365 => ">=365",
            ExpiryBucket::Session => "session",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpiryAudit {
    pub max_lifetime_days: Lifetime,
    pub bucket: ExpiryBucket,
}

pub fn lifetime_of(record: &CookieRecord) -> Lifetime {
    match record.expires_at {
        None => Lifetime::Session,
        Some(exp) => {
            let secs = exp.unix() - record.created_at.unix();
            Lifetime::Days(secs.div_euclid(SECONDS_PER_DAY) + i64::from(secs.rem_euclid(SECONDS_PER_DAY) != 0))
        }
    }
}

/// Longest lifetime in the set. Session cookies only decide the bucket
/// when no persistent cookie is present. `None` for an empty set.
pub fn audit_expiry<'a>(records: impl IntoIterator<Item = &'a CookieRecord>) -> Option<ExpiryAudit> {
    let mut max: Option<Lifetime> = None;
    for r in records {
        let l = lifetime_of(r);
        max = Some(match (max, l) {
            (None, l) => l,
            (Some(Lifetime::Session), l) | (Some(l), Lifetime::Session) => l,
            (Some(Lifetime::Days(a)), Lifetime::Days(b)) => Lifetime::Days(a.max(b)),
        });
    }
    max.map(|m| ExpiryAudit {
        max_lifetime_days: m,
        bucket: ExpiryBucket::of(m),
    })
}
