use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{CookieError, CookieKey, CookieRecord};
use crate::time::Timestamp;

/// Point-in-time capture of a jar, ordered by `(domain, path, name)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CookieSnapshot {
    pub label: String,
    pub taken_at: Timestamp,
    cookies: Vec<CookieRecord>,
}

impl CookieSnapshot {
    /// Builds a snapshot, sorting records and rejecting duplicate keys.
    pub fn new(
        label: impl Into<String>,
        taken_at: Timestamp,
        records: impl IntoIterator<Item = CookieRecord>,
    ) -> Result<Self, CookieError> {
        let mut by_key = BTreeMap::new();
        for r in records {
            let key = r.key();
            if by_key.insert(key.clone(), r).is_some() {
                return Err(CookieError::DuplicateKey(key));
            }
        }
        Ok(CookieSnapshot {
            label: label.into(),
            taken_at,
            cookies: by_key.into_values().collect(),
        })
    }

    pub fn empty(label: impl Into<String>, taken_at: Timestamp) -> Self {
        CookieSnapshot {
            label: label.into(),
            taken_at,
            cookies: Vec::new(),
        }
    }

    pub fn cookies(&self) -> &[CookieRecord] {
        &self.cookies
    }

    pub fn len(&self) -> usize {
        self.cookies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cookies.is_empty()
    }

    pub fn keys(&self) -> BTreeSet<CookieKey> {
        self.cookies.iter().map(CookieRecord::key).collect()
    }

    pub fn get(&self, key: &CookieKey) -> Option<&CookieRecord> {
        self.cookies
            .binary_search_by(|c| c.key().cmp(key))
            .ok()
            .map(|i| &self.cookies[i])
    }

    pub fn find_by_name(&self, name: &str) -> Option<&CookieRecord> {
        self.cookies.iter().find(|c| c.name == name)
    }

    fn by_key(&self) -> BTreeMap<CookieKey, &CookieRecord> {
        self.cookies.iter().map(|c| (c.key(), c)).collect()
    }
}

impl<'de> Deserialize<'de> for CookieSnapshot {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(rename_all = "camelCase", deny_unknown_fields)]
        struct Raw {
            label: String,
            taken_at: Timestamp,
            cookies: Vec<CookieRecord>,
        }
        let raw = Raw::deserialize(deserializer)?;
        for r in &raw.cookies {
            r.validate().map_err(serde::de::Error::custom)?;
        }
        CookieSnapshot::new(raw.label, raw.taken_at, raw.cookies).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedCookie {
    pub before: CookieRecord,
    pub after: CookieRecord,
}

/// Delta between two snapshots. The three lists are disjoint by key.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotDiff {
    pub added: Vec<CookieRecord>,
    pub removed: Vec<CookieRecord>,
    pub changed: Vec<ChangedCookie>,
}

impl SnapshotDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.changed.is_empty()
    }

    /// Keys that are new or modified in the later snapshot.
    pub fn added_or_changed_keys(&self) -> BTreeSet<CookieKey> {
        self.added
            .iter()
            .map(CookieRecord::key)
            .chain(self.changed.iter().map(|c| c.after.key()))
            .collect()
    }

    /// Replays the diff onto `base`, producing the later snapshot's records.
    pub fn apply(
        &self,
        base: &CookieSnapshot,
        label: impl Into<String>,
        taken_at: Timestamp,
    ) -> Result<CookieSnapshot, CookieError> {
        let mut records: BTreeMap<CookieKey, CookieRecord> =
            base.cookies.iter().map(|c| (c.key(), c.clone())).collect();
        for r in &self.removed {
            records
                .remove(&r.key())
                .ok_or_else(|| CookieError::UnknownKey(r.key()))?;
        }
        for ch in &self.changed {
            let slot = records
                .get_mut(&ch.before.key())
                .ok_or_else(|| CookieError::UnknownKey(ch.before.key()))?;
            *slot = ch.after.clone();
        }
        for r in &self.added {
            if records.insert(r.key(), r.clone()).is_some() {
                return Err(CookieError::DuplicateKey(r.key()));
            }
        }
        CookieSnapshot::new(label, taken_at, records.into_values())
    }
}

/// Keys only in `after` are added, keys only in `before` removed, and shared
/// keys whose records differ in any field (value or attribute) changed.
pub fn diff_snapshots(before: &CookieSnapshot, after: &CookieSnapshot) -> SnapshotDiff {
    let b = before.by_key();
    let a = after.by_key();
    let mut diff = SnapshotDiff::default();
    for (key, rec) in &a {
        match b.get(key) {
            None => diff.added.push((*rec).clone()),
            Some(old) if old != rec => diff.changed.push(ChangedCookie {
                before: (*old).clone(),
                after: (*rec).clone(),
            }),
            Some(_) => {}
        }
    }
    for (key, rec) in &b {
        if !a.contains_key(key) {
            diff.removed.push((*rec).clone());
        }
    }
    diff
}

/// Keeps exactly the records whose keys are in `enabled`.
pub fn apply_toggle_mask(
    s: &CookieSnapshot,
    enabled: &BTreeSet<CookieKey>,
) -> Result<CookieSnapshot, CookieError> {
    let present = s.keys();
    if let Some(unknown) = enabled.iter().find(|k| !present.contains(k)) {
        return Err(CookieError::UnknownKey(unknown.clone()));
    }
    Ok(CookieSnapshot {
        label: s.label.clone(),
        taken_at: s.taken_at,
        cookies: s
            .cookies
            .iter()
            .filter(|c| enabled.contains(&c.key()))
            .cloned()
            .collect(),
    })
}

pub fn serialize_snapshot(s: &CookieSnapshot) -> Vec<u8> {
    serde_json::to_vec(s).expect("snapshot serialization is infallible")
}

/// Parses the interchange JSON, reporting the index of the first bad record.
pub fn parse_snapshot(bytes: &[u8]) -> Result<CookieSnapshot, CookieError> {
    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase", deny_unknown_fields)]
    struct Raw {
        label: String,
        taken_at: Timestamp,
        cookies: Vec<serde_json::Value>,
    }

    let raw: Raw = serde_json::from_slice(bytes).map_err(|e| CookieError::FormatError {
        index: None,
        message: e.to_string(),
    })?;
    let mut records = Vec::with_capacity(raw.cookies.len());
    let mut seen = BTreeSet::new();
    for (index, value) in raw.cookies.into_iter().enumerate() {
        let fail = |message: String| CookieError::FormatError {
            index: Some(index),
            message,
        };
        let record: CookieRecord =
            serde_json::from_value(value).map_err(|e| fail(e.to_string()))?;
        record.validate().map_err(|e| fail(e.to_string()))?;
        if !seen.insert(record.key()) {
            return Err(fail(format!("duplicate cookie key {}", record.key())));
        }
        records.push(record);
    }
    CookieSnapshot::new(raw.label, raw.taken_at, records).map_err(|e| CookieError::FormatError {
        index: None,
        message: e.to_string(),
    })
}
