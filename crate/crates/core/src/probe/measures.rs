use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cookie::{CookieKey, CookieRecord};

/// Which risk-control factors a remember-device decision depends on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MeasureSet {
    pub cookie_based: bool,
    pub fingerprint_based: bool,
    pub ip_based: bool,
    pub device_token_based: bool,
}

impl MeasureSet {
    pub const COOKIE_ONLY: MeasureSet = MeasureSet {
        cookie_based: true,
        fingerprint_based: false,
        ip_based: false,
        device_token_based: false,
    };

    pub fn any(&self) -> bool {
        self.cookie_based || self.fingerprint_based || self.ip_based || self.device_token_based
    }

    /// Trust rests on cookies alone.
    pub fn cookie_only(&self) -> bool {
        self.cookie_based && !self.fingerprint_based && !self.ip_based && !self.device_token_based
    }

    /// Trust rests on client-held state alone (cookies and/or a stored
    /// device token), so copying that state is enough to impersonate.
    pub fn client_state_only(&self) -> bool {
        (self.cookie_based || self.device_token_based) && !self.fingerprint_based && !self.ip_based
    }
}

/// The cookies a target checks to treat a device as trusted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrustCookieSet {
    pub keys: BTreeSet<CookieKey>,
    pub records: Vec<CookieRecord>,
}

impl TrustCookieSet {
    pub fn from_records(records: impl IntoIterator<Item = CookieRecord>) -> Self {
        let mut records: Vec<CookieRecord> = records.into_iter().collect();
        records.sort_by_key(|r| r.key());
        records.dedup_by_key(|r| r.key());
        TrustCookieSet {
            keys: records.iter().map(CookieRecord::key).collect(),
            records,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.keys.iter().map(|k| k.name.clone()).collect()
    }

    /// Values in key order, used to compare sets from different logins.
    pub fn values(&self) -> Vec<String> {
        self.records.iter().map(|r| r.value.clone()).collect()
    }
}
