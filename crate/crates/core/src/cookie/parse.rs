use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::date::parse_cookie_date;
use super::{validate_name, validate_value, CookieError, CookieRecord, SameSite};
use crate::time::Timestamp;

/// The request a `Set-Cookie` header arrived on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub scheme: String,
    pub host: String,
    pub path: String,
}

impl Origin {
    pub fn new(scheme: impl Into<String>, host: impl Into<String>, path: impl Into<String>) -> Self {
        Origin {
            scheme: scheme.into(),
            host: host.into().to_ascii_lowercase(),
            path: path.into(),
        }
    }

    pub fn from_url(url: &url::Url) -> Self {
        Origin::new(url.scheme(), url.host_str().unwrap_or_default(), url.path())
    }
}

fn trim_wsp(s: &str) -> &str {
    s.trim_matches(|c| c == ' ' || c == '\t')
}

/// Parses one `Set-Cookie` header value received from `origin` at `now`.
pub fn parse_set_cookie(
    header: &str,
    origin: &Origin,
    now: Timestamp,
) -> Result<CookieRecord, CookieError> {
    let (pair, attributes) = match header.find(';') {
        Some(i) => (&header[..i], &header[i + 1..]),
        None => (header, ""),
    };
    let Some(eq) = pair.find('=') else {
        return Err(CookieError::MalformedCookie(
            "name-value pair has no '='".into(),
        ));
    };
    let name = trim_wsp(&pair[..eq]);
    let value = trim_wsp(&pair[eq + 1..]);
    validate_name(name)?;
    validate_value(value)?;

    let mut expires: Option<Timestamp> = None;
    let mut max_age: Option<i64> = None;
    let mut domain: Option<String> = None;
    let mut path: Option<String> = None;
    let mut secure = false;
    let mut http_only = false;
    let mut same_site = SameSite::Unspecified;

    for attr in attributes.split(';') {
        let (attr_name, attr_value) = match attr.find('=') {
            Some(i) => (trim_wsp(&attr[..i]), trim_wsp(&attr[i + 1..])),
            None => (trim_wsp(attr), ""),
        };
        match attr_name.to_ascii_lowercase().as_str() {
            "expires" => {
                if let Some(t) = parse_cookie_date(attr_value) {
                    expires = Some(t);
                }
            }
            "max-age" => {
                if let Some(delta) = parse_max_age(attr_value) {
                    max_age = Some(delta);
                }
            }
            "domain" => {
                if !attr_value.is_empty() {
                    let d = attr_value.strip_prefix('.').unwrap_or(attr_value);
                    domain = Some(d.to_ascii_lowercase());
                }
            }
            "path" => {
                path = if attr_value.starts_with('/') {
                    Some(attr_value.to_string())
                } else {
                    None
                };
            }
            "secure" => secure = true,
            "httponly" => http_only = true,
            "samesite" => {
                same_site = match attr_value.to_ascii_lowercase().as_str() {
                    "strict" => SameSite::Strict,
                    "lax" => SameSite::Lax,
                    "none" => SameSite::None,
                    _ => SameSite::Unspecified,
                }
            }
            _ => {}
        }
    }

    let expires_at = match (max_age, expires) {
        (Some(delta), _) if delta <= 0 => Some(Timestamp::EARLIEST),
        (Some(delta), _) => Some(now.saturating_add(delta)),
        (None, Some(t)) => Some(t),
        (None, None) => None,
    };

    let domain = match domain {
        Some(d) if d.is_empty() => origin.host.clone(),
        Some(d) => {
            if !domain_matches(&origin.host, &d) {
                return Err(CookieError::ForeignDomain {
                    domain: d,
                    host: origin.host.clone(),
                });
            }
            d
        }
        None => origin.host.clone(),
    };
    if domain.is_empty() {
        return Err(CookieError::MalformedCookie("origin has no host".into()));
    }

    Ok(CookieRecord {
        name: name.to_string(),
        value: value.to_string(),
        domain,
        path: path.unwrap_or_else(|| default_path(&origin.path)),
        secure,
        http_only,
        same_site,
        expires_at,
        created_at: now,
    })
}

fn parse_max_age(v: &str) -> Option<i64> {
    let digits = v.strip_prefix('-').unwrap_or(v);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // Saturate rather than overflow on absurd values.
    let magnitude: i64 = digits.parse().unwrap_or(i64::MAX);
    Some(if v.starts_with('-') { -magnitude } else { magnitude })
}

/// Default-path algorithm from RFC 6265 section 5.1.4.
pub fn default_path(uri_path: &str) -> String {
    if !uri_path.starts_with('/') {
        return "/".into();
    }
    match uri_path.rfind('/') {
        Some(0) | None => "/".into(),
        Some(i) => uri_path[..i].to_string(),
    }
}

/// Domain-match from RFC 6265 section 5.1.3.
pub fn domain_matches(host: &str, domain: &str) -> bool {
    let host = host.to_ascii_lowercase();
    let domain = domain.to_ascii_lowercase();
    if host == domain {
        return true;
    }
    host.ends_with(&domain)
        && host.as_bytes()[host.len() - domain.len() - 1] == b'.'
        && host.parse::<IpAddr>().is_err()
}

/// Path-match from RFC 6265 section 5.1.4.
pub fn path_matches(request_path: &str, cookie_path: &str) -> bool {
    if request_path == cookie_path {
        return true;
    }
    request_path.starts_with(cookie_path)
        && (cookie_path.ends_with('/')
            || request_path.as_bytes().get(cookie_path.len()) == Some(&b'/'))
}
