use time::{Date, Month, PrimitiveDateTime, Time};

use crate::time::Timestamp;

/// Parses an `Expires` attribute value with the RFC 6265 section 5.1.1
/// cookie-date algorithm. Returns `None` when the algorithm fails.
pub fn parse_cookie_date(input: &str) -> Option<Timestamp> {
    let mut hms: Option<(u8, u8, u8)> = None;
    let mut day: Option<u8> = None;
    let mut month: Option<Month> = None;
    let mut year: Option<i32> = None;

    for token in input.split(is_delimiter).filter(|t| !t.is_empty()) {
        if hms.is_none() {
            if let Some(t) = parse_time(token) {
                hms = Some(t);
                continue;
            }
        }
        if day.is_none() {
            if let Some((d, _)) = leading_digits(token, 1, 2) {
                day = Some(d as u8);
                continue;
            }
        }
        if month.is_none() {
            if let Some(m) = parse_month(token) {
                month = Some(m);
                continue;
            }
        }
        if year.is_none() {
            if let Some((y, _)) = leading_digits(token, 2, 4) {
                year = Some(y as i32);
                continue;
            }
        }
    }

    let (hour, minute, second) = hms?;
    let day = day?;
    let month = month?;
    let mut year = year?;
    if (70..=99).contains(&year) {
        year += 1900;
    } else if (0..=69).contains(&year) {
        year += 2000;
    }
    if !(1..=31).contains(&day) || year < 1601 || hour > 23 || minute > 59 || second > 59 {
        return None;
    }
    let date = Date::from_calendar_date(year, month, day).ok()?;
    let time = Time::from_hms(hour, minute, second).ok()?;
    let dt = PrimitiveDateTime::new(date, time).assume_utc();
    Some(Timestamp::from_unix(dt.unix_timestamp()))
}

fn is_delimiter(c: char) -> bool {
    matches!(c as u32, 0x09 | 0x20..=0x2F | 0x3B..=0x40 | 0x5B..=0x60 | 0x7B..=0x7E)
}

/// Matches `min..=max` leading digits followed by end-of-token or a
/// non-digit. Returns the parsed number and the unconsumed remainder.
fn leading_digits(token: &str, min: usize, max: usize) -> Option<(u32, &str)> {
    let n = token.bytes().take_while(u8::is_ascii_digit).count();
    if n < min || n > max {
        return None;
    }
    let value = token[..n].parse().ok()?;
    Some((value, &token[n..]))
}

fn parse_time(token: &str) -> Option<(u8, u8, u8)> {
    let (h, rest) = leading_digits(token, 1, 2)?;
    let rest = rest.strip_prefix(':')?;
    let (m, rest) = leading_digits(rest, 1, 2)?;
    let rest = rest.strip_prefix(':')?;
    let (s, _) = leading_digits(rest, 1, 2)?;
    Some((h as u8, m as u8, s as u8))
}

fn parse_month(token: &str) -> Option<Month> {
    let prefix = token.get(..3)?.to_ascii_lowercase();
    Some(match prefix.as_str() {
        "jan" => Month::January,
        "feb" => Month::February,
        "mar" => Month::March,
        "apr" => Month::April,
        "may" => Month::May,
        "jun" => Month::June,
        "jul" => Month::July,
        "aug" => Month::August,
        "sep" => Month::September,
        "oct" => Month::October,
        "nov" => Month::November,
        "dec" => Month::December,
        _ => return None,
    })
}
