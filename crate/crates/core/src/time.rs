//! Wall-clock abstraction.
//!
//! Every component that reads the time (TOTP windows, cookie expiry, the
//! testbed's timestamp-valued cookies) takes a [`Clock`] so tests can pin
//! and advance time deterministically.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Whole seconds since the Unix epoch, UTC.
///
/// Serialized as an RFC 3339 string (`2024-06-10T00:00:00Z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

impl Timestamp {
    /// 0001-01-01T00:00:00Z, the earliest instant the interchange format can carry.
    pub const EARLIEST: Timestamp = Timestamp(-62_135_596_800);
    /// 9999-12-31T23:59:59Z.
    pub const LATEST: Timestamp = Timestamp(253_402_300_799);

    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub const fn unix(self) -> i64 {
        self.0
    }

    /// Adds `secs`, clamping to the representable range.
    pub fn saturating_add(self, secs: i64) -> Self {
        Timestamp(self.0.saturating_add(secs)).clamp(Self::EARLIEST, Self::LATEST)
    }

    pub fn to_rfc3339(self) -> String {
        let clamped = self.clamp(Self::EARLIEST, Self::LATEST);
        OffsetDateTime::from_unix_timestamp(clamped.0)
            .expect("clamped timestamp is in range")
            .format(&Rfc3339)
            .expect("RFC 3339 formatting of an in-range UTC instant")
    }

    pub fn parse_rfc3339(s: &str) -> Result<Self, time::error::Parse> {
        let dt = OffsetDateTime::parse(s, &Rfc3339)?;
        Ok(Timestamp(dt.unix_timestamp()))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl FromStr for Timestamp {
    type Err = time::error::Parse;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse_rfc3339(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_rfc3339())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse_rfc3339(&s).map_err(serde::de::Error::custom)
    }
}

/// Source of the current time.
pub trait Clock: Send + Sync + fmt::Debug {
    fn now_millis(&self) -> i64;

    fn now(&self) -> Timestamp {
        Timestamp(self.now_millis().div_euclid(1000))
    }

    /// Blocks (or, for simulated clocks, jumps) until `t` has been reached.
    fn sleep_until(&self, t: Timestamp);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> i64 {
        let now = OffsetDateTime::now_utc();
        (now.unix_timestamp_nanos() / 1_000_000) as i64
    }

    fn sleep_until(&self, t: Timestamp) {
        let remaining = t.unix() * 1000 - self.now_millis();
        if remaining > 0 {
            std::thread::sleep(std::time::Duration::from_millis(remaining as u64));
        }
    }
}

/// A clock that only moves when told to. Clones share the same instant.
#[derive(Debug, Clone)]
pub struct ManualClock {
    millis: Arc<AtomicI64>,
}

impl ManualClock {
    pub fn at(t: Timestamp) -> Self {
        Self::at_millis(t.unix() * 1000)
    }

    pub fn at_millis(millis: i64) -> Self {
        ManualClock {
            millis: Arc::new(AtomicI64::new(millis)),
        }
    }

    pub fn set(&self, t: Timestamp) {
        self.millis.store(t.unix() * 1000, Ordering::SeqCst);
    }

    pub fn advance_secs(&self, secs: i64) {
        self.millis.fetch_add(secs * 1000, Ordering::SeqCst);
    }

    pub fn advance_millis(&self, millis: i64) {
        self.millis.fetch_add(millis, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_millis(&self) -> i64 {
        self.millis.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, t: Timestamp) {
        self.millis.fetch_max(t.unix() * 1000, Ordering::SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rfc3339_round_trip_and_bounds() {
        let t = Timestamp::from_unix(1_718_000_000);
        assert_eq!(t.to_rfc3339(), "2024-06-10T06:13:20Z");
        assert_eq!(Timestamp::parse_rfc3339(&t.to_rfc3339()).unwrap(), t);
        assert_eq!(Timestamp::EARLIEST.to_rfc3339(), "0001-01-01T00:00:00Z");
        assert_eq!(Timestamp::LATEST.to_rfc3339(), "9999-12-31T23:59:59Z");
        assert_eq!(Timestamp::LATEST.saturating_add(10), Timestamp::LATEST);
    }

    #[test]
    fn offsets_normalize_to_utc() {
        let t = Timestamp::parse_rfc3339("2024-06-10T08:13:20+02:00").unwrap();
        assert_eq!(t.unix(), 1_718_000_000);
    }

    #[test]
    fn manual_clock_is_shared_between_clones() {
        let c = ManualClock::at(Timestamp::from_unix(100));
        let d = c.clone();
        c.advance_secs(5);
        assert_eq!(d.now(), Timestamp::from_unix(105));
        d.sleep_until(Timestamp::from_unix(90));
        assert_eq!(c.now().unix(), 105);
        d.sleep_until(Timestamp::from_unix(200));
        assert_eq!(c.now().unix(), 200);
    }
}
