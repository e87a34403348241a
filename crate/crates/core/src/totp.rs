//! RFC 6238 time-based one-time passwords (HMAC-SHA1).

use hmac::{Hmac, Mac};
use sha1::Sha1;

use crate::time::Timestamp;

pub const DEFAULT_STEP: u64 = 30;
pub const DEFAULT_DIGITS: u32 = 6;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TotpError {
    #[error("unsupported digit count {0}, expected 6 or 8")]
    Digits(u32),
    #[error("time step must be positive")]
    Step,
    #[error("time {0} precedes the Unix epoch")]
    BeforeEpoch(i64),
}

/// Counter value for `t` under the given step.
pub fn time_counter(t: Timestamp, step: u64) -> Result<u64, TotpError> {
    if step == 0 {
        return Err(TotpError::Step);
    }
    let secs = u64::try_from(t.unix()).map_err(|_| TotpError::BeforeEpoch(t.unix()))?;
    Ok(secs / step)
}

/// HOTP value (RFC 4226) for an explicit counter.
pub fn hotp(seed: &[u8], counter: u64, digits: u32) -> Result<String, TotpError> {
    if digits != 6 && digits != 8 {
        return Err(TotpError::Digits(digits));
    }
    let mut mac = Hmac::<Sha1>::new_from_slice(seed).expect("hmac accepts any key length");
    mac.update(&counter.to_be_bytes());
    let digest = mac.finalize().into_bytes();
    let offset = (digest[19] & 0x0f) as usize;
    let binary = u32::from_be_bytes([
        digest[offset] & 0x7f,
        digest[offset + 1],
        digest[offset + 2],
        digest[offset + 3],
    ]);
    let code = binary % 10u32.pow(digits);
    Ok(format!("{code:0width$}", width = digits as usize))
}

pub fn totp_code(seed: &[u8], t: Timestamp, step: u64, digits: u32) -> Result<String, TotpError> {
    hotp(seed, time_counter(t, step)?, digits)
}
