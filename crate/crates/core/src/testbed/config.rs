use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cookie::CookieKey;
use crate::flow::decode_seed;
use crate::notification::NotificationType;
use crate::probe::MeasureSet;

use super::TestbedError;

pub const MIN_SEED_BYTES: usize = 16;
pub const MAX_DECOYS: usize = 8;
pub const SESSION_COOKIE: &str = "sid";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RememberPlacement {
    AtChallenge,
    InSettings,
    RememberMe,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ValueScheme {
    Random128,
    FixedPerAccount,
    GlobalShared,
    TimestampSeconds,
    TimestampMillis,
    Base64Profile,
}

impl ValueScheme {
    /// Whether a value minted for one account is accepted for another.
    pub fn account_unbound(self) -> bool {
        matches!(
            self,
            ValueScheme::GlobalShared | ValueScheme::TimestampSeconds | ValueScheme::TimestampMillis
        )
    }

    pub fn is_constant(self) -> bool {
        matches!(self, ValueScheme::FixedPerAccount | ValueScheme::GlobalShared)
    }

    pub fn is_timestamp(self) -> bool {
        matches!(self, ValueScheme::TimestampSeconds | ValueScheme::TimestampMillis)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrustCookieSpec {
    pub name: String,
    pub value_scheme: ValueScheme,
    pub secure: bool,
    pub http_only: bool,
    /// `None` issues a session cookie.
    pub max_age_seconds: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccountSpec {
    pub username: String,
    /// `sha256:<hex>` of the password.
    pub password_hash: String,
    /// Base32.
    pub totp_seed: String,
}

impl AccountSpec {
    pub fn new(username: &str, password: &str, totp_seed: &str) -> Self {
        AccountSpec {
            username: username.into(),
            password_hash: hash_password(password),
            totp_seed: totp_seed.into(),
        }
    }

    pub fn password_matches(&self, password: &str) -> bool {
        self.password_hash == hash_password(password)
    }
}

pub fn hash_password(password: &str) -> String {
    format!("sha256:{}", hex_lower(&Sha256::digest(password.as_bytes())))
}

pub(crate) fn hex_lower(bytes: &[u8]) -> String {
    data_encoding::HEXLOWER.encode(bytes)
}

/// Full description of one mock service, including its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TargetConfig {
    pub id: String,
    pub risk_controls: MeasureSet,
    pub remember_placement: RememberPlacement,
    #[serde(default)]
    pub trust_cookies: Vec<TrustCookieSpec>,
    #[serde(default)]
    pub decoy_cookies: usize,
    #[serde(default)]
    pub broken2fa: bool,
    #[serde(default)]
    pub notification: Option<NotificationType>,
    pub accounts: Vec<AccountSpec>,
    /// Every k-th login of an account skips the challenge (a flaky
    /// variant, not a broken one).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_skip_every: Option<u32>,
}

impl TargetConfig {
    pub fn validate(&self) -> Result<(), TestbedError> {
        let invalid = |m: String| Err(TestbedError::InvalidConfig(format!("{}: {m}", self.id)));
        if self.id.is_empty() {
            return invalid("empty id".into());
        }
        if self.accounts.is_empty() {
            return invalid("no accounts".into());
        }
        let mut users = BTreeSet::new();
        for a in &self.accounts {
            if !users.insert(a.username.as_str()) {
                return invalid(format!("duplicate account {}", a.username));
            }
            match decode_seed(&a.totp_seed) {
                Some(seed) if seed.len() >= MIN_SEED_BYTES => {}
                Some(seed) => {
                    return invalid(format!(
                        "seed for {} has {} bytes, need {MIN_SEED_BYTES}",
                        a.username,
                        seed.len()
                    ))
                }
                None => return invalid(format!("seed for {} is not base32", a.username)),
            }
            if !a.password_hash.starts_with("sha256:") {
                return invalid(format!("password hash for {} is not sha256:<hex>", a.username));
            }
        }
        if self.broken2fa && !self.trust_cookies.is_empty() {
            return invalid("broken2fa targets issue no trust cookies".into());
        }
        if self.risk_controls.cookie_based == self.trust_cookies.is_empty() && !self.broken2fa {
            return invalid("cookieBased must match the presence of trust cookies".into());
        }
        if !self.broken2fa
            && self.remember_placement != RememberPlacement::None
            && !self.risk_controls.any()
        {
            return invalid("remember-device target without any risk control".into());
        }
        if self.decoy_cookies > MAX_DECOYS {
            return invalid(format!("at most {MAX_DECOYS} decoys"));
        }
        let mut names = BTreeSet::new();
        for c in &self.trust_cookies {
            if crate::cookie::validate_name(&c.name).is_err() || c.name == SESSION_COOKIE {
                return invalid(format!("bad trust cookie name {:?}", c.name));
            }
            if c.name.starts_with(DECOY_PREFIX) {
                return invalid(format!("{:?} collides with decoy names", c.name));
            }
            if !names.insert(c.name.as_str()) {
                return invalid(format!("duplicate trust cookie {}", c.name));
            }
            if matches!(c.max_age_seconds, Some(s) if s <= 0) {
                return invalid(format!("{} has non-positive Max-Age", c.name));
            }
        }
        if self.prompt_skip_every == Some(0) {
            return invalid("promptSkipEvery must be positive".into());
        }
        Ok(())
    }

    pub fn account(&self, username: &str) -> Option<&AccountSpec> {
        self.accounts.iter().find(|a| a.username == username)
    }

    pub fn trust_keys(&self, host: &str) -> BTreeSet<CookieKey> {
        self.trust_cookies
            .iter()
            .map(|c| CookieKey::new(&c.name, host, "/"))
            .collect()
    }
}

pub const DECOY_PREFIX: &str = "pref_";

/// A file holding several target configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix {
    pub targets: Vec<TargetConfig>,
}

impl Matrix {
    pub fn validate(&self) -> Result<(), TestbedError> {
        let mut ids = BTreeSet::new();
        for t in &self.targets {
            t.validate()?;
            if !ids.insert(t.id.as_str()) {
                return Err(TestbedError::InvalidConfig(format!("duplicate id {}", t.id)));
            }
        }
        Ok(())
    }
}
