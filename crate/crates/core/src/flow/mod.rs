//! Scripted login / second-factor flows run from simulated device
//! environments.

mod exec;
mod prompt;
mod script;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use url::Url;

use crate::cookie::{CookieError, CookieJar};
use crate::http::{Transport, TransportError};
use crate::totp::TotpError;

pub use exec::{execute_flow, fetch_account, reset_target};
pub use prompt::{detect_2fa_prompt, ChallengeMatcher, PromptMatcher};
pub use script::{
    FlowResult, FlowScript, FlowStep, PromptObservation, SentCookie, TraceEntry,
};

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error(transparent)]
    TargetUnreachable(#[from] TransportError),
    #[error("password authentication failed at step {0}")]
    AuthFailed(usize),
    #[error("second-factor challenge failed at step {0}")]
    ChallengeFailed(usize),
    #[error("invalid flow script: {0}")]
    ScriptInvalid(String),
    #[error("prompt assertion failed at step {step}: expected {expected}, observed {observed}")]
    AssertionFailed {
        step: usize,
        expected: bool,
        observed: bool,
    },
    #[error("response matches both or neither challenge pattern sets")]
    AmbiguousPrompt,
    #[error("unexpected response at step {step}: status {status}")]
    UnexpectedResponse { step: usize, status: u16 },
    #[error(transparent)]
    Cookie(#[from] CookieError),
    #[error(transparent)]
    Totp(#[from] TotpError),
    #[error("account seed is not valid base32")]
    BadSeed,
}

/// Test credentials for one account on a target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Account {
    pub username: String,
    pub password: String,
    /// Base32, as shown by authenticator enrolment screens.
    pub totp_seed: String,
    #[serde(default = "default_digits")]
    pub totp_digits: u32,
    #[serde(default = "default_step")]
    pub totp_step: u64,
}

fn default_digits() -> u32 {
    crate::totp::DEFAULT_DIGITS
}

fn default_step() -> u64 {
    crate::totp::DEFAULT_STEP
}

impl Account {
    pub fn new(username: &str, password: &str, totp_seed: &str) -> Self {
        Account {
            username: username.into(),
            password: password.into(),
            totp_seed: totp_seed.into(),
            totp_digits: default_digits(),
            totp_step: default_step(),
        }
    }

    pub fn seed_bytes(&self) -> Result<Vec<u8>, FlowError> {
        decode_seed(&self.totp_seed).ok_or(FlowError::BadSeed)
    }
}

pub fn decode_seed(seed: &str) -> Option<Vec<u8>> {
    let cleaned: String = seed
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '=')
        .map(|c| c.to_ascii_uppercase())
        .collect();
    data_encoding::BASE32_NOPAD.decode(cleaned.as_bytes()).ok()
}

/// One simulated device: cookie jar, fingerprint token, source IP and a
/// per-target device-token store standing in for localStorage.
#[derive(Debug, Clone)]
pub struct SessionEnv {
    pub jar: CookieJar,
    pub fingerprint: String,
    pub simulated_ip: String,
    pub device_tokens: BTreeMap<String, String>,
    /// Whether Secure cookies may be sent (simulated HTTPS).
    pub secure_context: bool,
}

impl SessionEnv {
    pub fn new(fingerprint: impl Into<String>, simulated_ip: impl Into<String>) -> Self {
        SessionEnv {
            jar: CookieJar::new(),
            fingerprint: fingerprint.into(),
            simulated_ip: simulated_ip.into(),
            device_tokens: BTreeMap::new(),
            secure_context: true,
        }
    }

    /// ClearAll: cookies and site storage.
    pub fn clear_all(&mut self) {
        self.jar.clear();
        self.device_tokens.clear();
    }
}

/// Endpoint layout and prompt matcher for a target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TargetProfile {
    #[serde(default = "paths::login")]
    pub login_url: String,
    #[serde(default = "paths::two_factor")]
    pub two_factor_url: String,
    #[serde(default = "paths::account")]
    pub account_url: String,
    #[serde(default = "paths::logout")]
    pub logout_url: String,
    /// Absent means the testbed's `requires2fa` marker.
    #[serde(default)]
    pub challenge_matcher: Option<ChallengeMatcher>,
}

mod paths {
    pub fn login() -> String {
        "/login".into()
    }
    pub fn two_factor() -> String {
        "/2fa".into()
    }
    pub fn account() -> String {
        "/account".into()
    }
    pub fn logout() -> String {
        "/logout".into()
    }
}

impl Default for TargetProfile {
    fn default() -> Self {
        TargetProfile {
            login_url: paths::login(),
            two_factor_url: paths::two_factor(),
            account_url: paths::account(),
            logout_url: paths::logout(),
            challenge_matcher: None,
        }
    }
}

impl TargetProfile {
    pub fn matcher(&self) -> PromptMatcher {
        match &self.challenge_matcher {
            Some(m) => PromptMatcher::Profile(m.clone()),
            None => PromptMatcher::Testbed,
        }
    }
}

/// A service under evaluation plus the driver-side state shared by every
/// environment that talks to it.
#[derive(Clone)]
pub struct Target {
    pub id: String,
    pub base: Url,
    pub profile: TargetProfile,
    transport: Arc<dyn Transport>,
    used_counters: Arc<Mutex<BTreeMap<String, BTreeSet<u64>>>>,
}

impl fmt::Debug for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Target")
            .field("id", &self.id)
            .field("base", &self.base.as_str())
            .finish_non_exhaustive()
    }
}

impl Target {
    pub fn new(base: Url, transport: Arc<dyn Transport>) -> Self {
        Target {
            id: base.as_str().trim_end_matches('/').to_string(),
            base,
            profile: TargetProfile::default(),
            transport,
            used_counters: Arc::default(),
        }
    }

    pub fn with_profile(mut self, profile: TargetProfile) -> Self {
        self.profile = profile;
        self
    }

    pub fn transport(&self) -> &dyn Transport {
        self.transport.as_ref()
    }

    pub fn url(&self, path: &str) -> Url {
        self.base.join(path).unwrap_or_else(|_| self.base.clone())
    }

    pub(crate) fn counter_used(&self, username: &str, counter: u64) -> bool {
        self.used_counters
            .lock()
            .expect("counter lock")
            .get(username)
            .is_some_and(|s| s.contains(&counter))
    }

    pub(crate) fn mark_counter(&self, username: &str, counter: u64) {
        self.used_counters
            .lock()
            .expect("counter lock")
            .entry(username.to_string())
            .or_default()
            .insert(counter);
    }

    pub(crate) fn forget_counters(&self) {
        self.used_counters.lock().expect("counter lock").clear();
    }
}
