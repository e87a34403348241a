use std::collections::{BTreeMap, BTreeSet};

use super::parse::{domain_matches, path_matches};
use super::{CookieKey, CookieRecord, CookieSnapshot};
use crate::time::Timestamp;

/// Mutable cookie store owned by one simulated browser profile.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CookieJar {
    cookies: BTreeMap<CookieKey, CookieRecord>,
}

impl CookieJar {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a freshly parsed cookie. An already-expired record deletes any
    /// existing cookie with the same key; an overwrite keeps the original
    /// creation time.
    pub fn store(&mut self, mut record: CookieRecord, now: Timestamp) {
        let key = record.key();
        if record.is_expired(now) {
            self.cookies.remove(&key);
            return;
        }
        if let Some(old) = self.cookies.get(&key) {
            record.created_at = old.created_at;
        }
        self.cookies.insert(key, record);
    }

    /// Inserts records verbatim, as an import from another profile would.
    pub fn import<'a>(&mut self, records: impl IntoIterator<Item = &'a CookieRecord>) {
        for r in records {
            self.cookies.insert(r.key(), r.clone());
        }
    }

    pub fn remove(&mut self, key: &CookieKey) -> Option<CookieRecord> {
        self.cookies.remove(key)
    }

    pub fn retain_keys(&mut self, keep: &BTreeSet<CookieKey>) {
        self.cookies.retain(|k, _| keep.contains(k));
    }

    pub fn clear(&mut self) {
        self.cookies.clear();
    }

    pub fn len(&self) -> usize {
        self.cookies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cookies.is_empty()
    }

    pub fn get(&self, key: &CookieKey) -> Option<&CookieRecord> {
        self.cookies.get(key)
    }

    pub fn purge_expired(&mut self, now: Timestamp) {
        self.cookies.retain(|_, c| !c.is_expired(now));
    }

    /// Cookies to attach to a request, in RFC 6265 order (longer paths
    /// first, then earlier creation). Secure cookies are withheld unless
    /// `secure_context` is set.
    pub fn cookies_for(
        &mut self,
        host: &str,
        path: &str,
        secure_context: bool,
        now: Timestamp,
    ) -> Vec<CookieRecord> {
        self.purge_expired(now);
        let mut out: Vec<CookieRecord> = self
            .cookies
            .values()
            .filter(|c| domain_matches(host, &c.domain))
            .filter(|c| path_matches(path, &c.path))
            .filter(|c| secure_context || !c.secure)
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            b.path
                .len()
                .cmp(&a.path.len())
                .then(a.created_at.cmp(&b.created_at))
        });
        out
    }

    pub fn snapshot(&mut self, label: impl Into<String>, now: Timestamp) -> CookieSnapshot {
        self.purge_expired(now);
        CookieSnapshot::new(label, now, self.cookies.values().cloned())
            .expect("jar keys are unique")
    }
}

pub fn cookie_header(cookies: &[CookieRecord]) -> Option<String> {
    if cookies.is_empty() {
        return None;
    }
    Some(
        cookies
            .iter()
            .map(|c| format!("{}={}", c.name, c.value))
            .collect::<Vec<_>>()
            .join("; "),
    )
}
