use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use rand::RngCore;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{
    hex_lower, RememberPlacement, TargetConfig, TrustCookieSpec, ValueScheme, DECOY_PREFIX,
    SESSION_COOKIE,
};
use super::truth::ground_truth;
use super::TestbedError;
use crate::flow::decode_seed;
use crate::http::{
    HttpRequest, HttpResponse, Method, Transport, TransportError, HEADER_DEVICE_TOKEN,
    HEADER_FINGERPRINT, HEADER_FORWARDED_FOR,
};
use crate::notification::{NotificationRecord, NotificationType};
use crate::time::{Clock, Timestamp, SECONDS_PER_DAY};
use crate::totp::{hotp, time_counter, DEFAULT_DIGITS, DEFAULT_STEP};

/// Future skew tolerated on timestamp-valued trust cookies.
const TIMESTAMP_SKEW_SECS: i64 = 60;
const SESSION_TIMESTAMP_LIFETIME: i64 = 30 * SECONDS_PER_DAY;
const DECOY_NAMES: [&str; 8] = ["lang", "theme", "consent", "ab", "tz", "seen", "layout", "ref"];

#[derive(Debug, Clone)]
struct Session {
    username: String,
    authenticated: bool,
}

#[derive(Debug, Default)]
struct AccountState {
    /// Server-stored trust values and their issue times, per cookie name.
    issued: BTreeMap<String, BTreeMap<String, Timestamp>>,
    trusted_fingerprints: BTreeSet<String>,
    trusted_ips: BTreeSet<String>,
    device_tokens: BTreeSet<String>,
    used_counters: BTreeSet<u64>,
    seen_devices: BTreeSet<(String, String)>,
    seen_ips: BTreeSet<String>,
    logins: u32,
}

#[derive(Debug, Default)]
struct State {
    sessions: HashMap<String, Session>,
    accounts: HashMap<String, AccountState>,
    notifications: Vec<NotificationRecord>,
}

/// Outcome of the trust check on a password-verified login.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustDecision {
    pub trusted: bool,
    /// Failed factors; empty when trusted.
    pub reasons: Vec<String>,
}

/// Client-supplied context of one request.
#[derive(Debug, Clone, Default)]
struct LoginContext {
    cookies: BTreeMap<String, String>,
    fingerprint: String,
    ip: String,
    device_token: Option<String>,
}

impl LoginContext {
    fn from_request(req: &HttpRequest) -> Self {
        let mut cookies = BTreeMap::new();
        if let Some(h) = req.header_value("cookie") {
            for pair in h.split(';') {
                if let Some((k, v)) = pair.split_once('=') {
                    cookies
                        .entry(k.trim().to_string())
                        .or_insert_with(|| v.trim().to_string());
                }
            }
        }
        LoginContext {
            cookies,
            fingerprint: req.header_value(HEADER_FINGERPRINT).unwrap_or("").to_string(),
            ip: req
                .header_value(HEADER_FORWARDED_FOR)
                .and_then(|v| v.split(',').next())
                .unwrap_or("")
                .trim()
                .to_string(),
            device_token: req.header_value(HEADER_DEVICE_TOKEN).map(str::to_string),
        }
    }
}

/// The request-handling core of one mock 2FA service.
#[derive(Debug)]
pub struct TestbedService {
    config: TargetConfig,
    clock: Arc<dyn Clock>,
    expose_truth: bool,
    state: Mutex<State>,
}

fn random_hex(bytes: usize) -> String {
    let mut buf = vec![0u8; bytes];
    rand::thread_rng().fill_bytes(&mut buf);
    hex_lower(&buf)
}

fn json_response(status: u16, body: Value) -> HttpResponse {
    HttpResponse::new(status).with_json(&body)
}

fn error(status: u16, reason: &str) -> HttpResponse {
    json_response(status, json!({"status": "error", "reason": reason}))
}

impl TestbedService {
    pub fn new(
        config: TargetConfig,
        clock: Arc<dyn Clock>,
        expose_truth: bool,
    ) -> Result<Self, TestbedError> {
        config.validate()?;
        Ok(TestbedService {
            config,
            clock,
            expose_truth,
            state: Mutex::new(State::default()),
        })
    }

    pub fn config(&self) -> &TargetConfig {
        &self.config
    }

    /// Drops sessions, issued trust state, replay history and notifications.
    pub fn reset(&self) {
        *self.state.lock().expect("state lock") = State::default();
    }

    pub fn notifications(&self, account: Option<&str>) -> Vec<NotificationRecord> {
        let state = self.state.lock().expect("state lock");
        state
            .notifications
            .iter()
            .filter(|n| account.is_none_or(|a| n.account == a))
            .cloned()
            .collect()
    }

    pub fn handle(&self, req: &HttpRequest) -> HttpResponse {
        let path = req.url.path();
        match (req.method, path) {
            (Method::Post, "/login") => self.login(req),
            (Method::Post, "/2fa") => self.second_factor(req),
            (Method::Get, "/account") => self.account(req),
            (Method::Post, "/logout") => self.logout(req),
            (Method::Get, "/__notifications") => {
                let account = req
                    .url
                    .query_pairs()
                    .find(|(k, _)| k == "account")
                    .map(|(_, v)| v.into_owned());
                let records = self.notifications(account.as_deref());
                json_response(200, serde_json::to_value(records).expect("records serialize"))
            }
            (Method::Get, "/__ground_truth") if self.expose_truth => json_response(
                200,
                serde_json::to_value(ground_truth(&self.config)).expect("truth serializes"),
            ),
            (Method::Post, "/__reset") if self.expose_truth => {
                self.reset();
                json_response(200, json!({"status": "ok"}))
            }
            _ => error(404, "not found"),
        }
    }

    fn session_cookie(&self, sid: &str) -> String {
        format!("{SESSION_COOKIE}={sid}; Path=/; HttpOnly")
    }

    fn login(&self, req: &HttpRequest) -> HttpResponse {
        let Ok(body) = serde_json::from_slice::<Value>(&req.body) else {
            return error(400, "body must be JSON");
        };
        let username = body.get("username").and_then(Value::as_str).unwrap_or("");
        let password = body.get("password").and_then(Value::as_str).unwrap_or("");
        let Some(account) = self.config.account(username) else {
            return error(401, "bad credentials");
        };
        if !account.password_matches(password) {
            return error(401, "bad credentials");
        }

        let ctx = LoginContext::from_request(req);
        let now = self.clock.now();
        let mut state = self.state.lock().expect("state lock");
        let acct = state.accounts.entry(username.to_string()).or_default();
        acct.logins += 1;
        let skip = self
            .config
            .prompt_skip_every
            .is_some_and(|k| acct.logins.is_multiple_of(k));
        let trusted = self.config.broken2fa
            || skip
            || self.evaluate_trust_locked(acct, username, &ctx, now).trusted;

        let sid = random_hex(16);
        state.sessions.insert(
            sid.clone(),
            Session {
                username: username.to_string(),
                authenticated: trusted,
            },
        );
        if trusted {
            self.record_login_locked(&mut state, username, &ctx, now);
        }
        let mut resp = json_response(200, json!({"status": "ok", "requires2fa": !trusted}));
        resp.headers
            .push(("set-cookie".into(), self.session_cookie(&sid)));
        resp
    }

    /// Checks every configured risk control against the request context.
    pub fn evaluate_trust(&self, req: &HttpRequest, username: &str) -> TrustDecision {
        let ctx = LoginContext::from_request(req);
        let now = self.clock.now();
        let mut state = self.state.lock().expect("state lock");
        let acct = state.accounts.entry(username.to_string()).or_default();
        self.evaluate_trust_locked(acct, username, &ctx, now)
    }

    fn evaluate_trust_locked(
        &self,
        acct: &AccountState,
        username: &str,
        ctx: &LoginContext,
        now: Timestamp,
    ) -> TrustDecision {
        let controls = self.config.risk_controls;
        let mut reasons = Vec::new();
        if self.config.remember_placement == RememberPlacement::None {
            reasons.push("remember-device not offered".to_string());
        }
        if !controls.any() {
            reasons.push("no risk controls".to_string());
        }
        if controls.cookie_based {
            for spec in &self.config.trust_cookies {
                let ok = ctx
                    .cookies
                    .get(&spec.name)
                    .is_some_and(|v| self.cookie_value_valid(spec, acct, username, v, now));
                if !ok {
                    reasons.push(format!("cookie {}", spec.name));
                }
            }
        }
        if controls.fingerprint_based && !acct.trusted_fingerprints.contains(&ctx.fingerprint) {
            reasons.push("fingerprint".into());
        }
        if controls.ip_based && !acct.trusted_ips.contains(&ctx.ip) {
            reasons.push("ip".into());
        }
        if controls.device_token_based
            && !ctx
                .device_token
                .as_ref()
                .is_some_and(|t| acct.device_tokens.contains(t))
        {
            reasons.push("device token".into());
        }
        TrustDecision {
            trusted: reasons.is_empty(),
            reasons,
        }
    }

    fn fixed_value(&self, username: &str, name: &str) -> String {
        let d = Sha256::digest(format!("fixed|{}|{username}|{name}", self.config.id));
        hex_lower(&d[..16])
    }

    fn global_value(&self, name: &str) -> String {
        let d = Sha256::digest(format!("global|{}|{name}", self.config.id));
        hex_lower(&d[..16])
    }

    fn cookie_value_valid(
        &self,
        spec: &TrustCookieSpec,
        acct: &AccountState,
        username: &str,
        value: &str,
        now: Timestamp,
    ) -> bool {
        let lifetime = spec.max_age_seconds.unwrap_or(SESSION_TIMESTAMP_LIFETIME);
        let in_window = |secs: i64| {
            secs >= now.unix() - lifetime && secs <= now.unix() + TIMESTAMP_SKEW_SECS
        };
        match spec.value_scheme {
            ValueScheme::Random128 | ValueScheme::Base64Profile => acct
                .issued
                .get(&spec.name)
                .and_then(|m| m.get(value))
                .is_some_and(|issued| now.unix() - issued.unix() < lifetime),
            ValueScheme::FixedPerAccount => value == self.fixed_value(username, &spec.name),
            ValueScheme::GlobalShared => value == self.global_value(&spec.name),
            ValueScheme::TimestampSeconds => value.parse::<i64>().is_ok_and(in_window),
            ValueScheme::TimestampMillis => value
                .parse::<i64>()
                .is_ok_and(|ms| in_window(ms.div_euclid(1000))),
        }
    }

    fn mint_value(
        &self,
        spec: &TrustCookieSpec,
        username: &str,
        ctx: &LoginContext,
        otp: &str,
        now_millis: i64,
    ) -> String {
        match spec.value_scheme {
            ValueScheme::Random128 => random_hex(16),
            ValueScheme::FixedPerAccount => self.fixed_value(username, &spec.name),
            ValueScheme::GlobalShared => self.global_value(&spec.name),
            ValueScheme::TimestampSeconds => now_millis.div_euclid(1000).to_string(),
            ValueScheme::TimestampMillis => now_millis.to_string(),
            ValueScheme::Base64Profile => {
                let date = Timestamp::from_unix(now_millis.div_euclid(1000)).to_rfc3339();
                let profile = json!({"ip": ctx.ip, "date": &date[..10], "otp": otp});
                data_encoding::BASE64.encode(profile.to_string().as_bytes())
            }
        }
    }

    fn set_cookie_header(spec: &TrustCookieSpec, value: &str) -> String {
        let mut h = format!("{}={value}; Path=/", spec.name);
        if let Some(age) = spec.max_age_seconds {
            h.push_str(&format!("; Max-Age={age}"));
        }
        if spec.secure {
            h.push_str("; Secure");
        }
        if spec.http_only {
            h.push_str("; HttpOnly");
        }
        h
    }

    fn second_factor(&self, req: &HttpRequest) -> HttpResponse {
        let ctx = LoginContext::from_request(req);
        let Ok(body) = serde_json::from_slice::<Value>(&req.body) else {
            return error(400, "body must be JSON");
        };
        let code = body.get("code").and_then(Value::as_str).unwrap_or("");
        let remember = body
            .get("rememberDevice")
            .and_then(Value::as_bool)
            .unwrap_or(false);

        let now_millis = self.clock.now_millis();
        let now = Timestamp::from_unix(now_millis.div_euclid(1000));
        let mut state = self.state.lock().expect("state lock");
        let Some(sid) = ctx.cookies.get(SESSION_COOKIE).cloned() else {
            return error(401, "no session");
        };
        let Some(session) = state.sessions.get(&sid).cloned() else {
            return error(401, "no session");
        };
        if session.authenticated {
            return error(409, "no pending challenge");
        }
        let username = session.username.clone();
        let account = self
            .config
            .account(&username)
            .expect("sessions only exist for configured accounts");
        let seed = decode_seed(&account.totp_seed).expect("validated seed");

        let Ok(current) = time_counter(now, DEFAULT_STEP) else {
            return error(500, "clock before epoch");
        };
        let matched = [current.checked_sub(1), Some(current), Some(current + 1)]
            .into_iter()
            .flatten()
            .find(|&k| hotp(&seed, k, DEFAULT_DIGITS).is_ok_and(|c| c == code));
        let Some(counter) = matched else {
            if self.config.notification == Some(NotificationType::N6) {
                self.notify_locked(&mut state, &username, NotificationType::N6, now);
            }
            return error(401, "bad code");
        };
        let acct = state.accounts.entry(username.clone()).or_default();
        if !acct.used_counters.insert(counter) {
            return error(409, "code already used");
        }

        let mut resp_body = json!({"status": "ok"});
        let mut set_cookies = Vec::new();
        let issue = remember
            && self.config.remember_placement != RememberPlacement::None
            && !self.config.broken2fa;
        if issue {
            for spec in &self.config.trust_cookies {
                let value = self.mint_value(spec, &username, &ctx, code, now_millis);
                acct.issued
                    .entry(spec.name.clone())
                    .or_default()
                    .insert(value.clone(), now);
                set_cookies.push(Self::set_cookie_header(spec, &value));
            }
            for name in DECOY_NAMES.iter().take(self.config.decoy_cookies) {
                set_cookies.push(format!(
                    "{DECOY_PREFIX}{name}={}; Path=/; Max-Age=31536000",
                    random_hex(8)
                ));
            }
            acct.trusted_fingerprints.insert(ctx.fingerprint.clone());
            acct.trusted_ips.insert(ctx.ip.clone());
            if self.config.risk_controls.device_token_based {
                let token = random_hex(16);
                acct.device_tokens.insert(token.clone());
                resp_body["deviceToken"] = json!(token);
            }
        }

        state.sessions.remove(&sid);
        let new_sid = random_hex(16);
        state.sessions.insert(
            new_sid.clone(),
            Session {
                username: username.clone(),
                authenticated: true,
            },
        );
        self.record_login_locked(&mut state, &username, &ctx, now);

        let mut resp = json_response(200, resp_body);
        resp.headers
            .push(("set-cookie".into(), self.session_cookie(&new_sid)));
        for h in set_cookies {
            resp.headers.push(("set-cookie".into(), h));
        }
        resp
    }

    /// Emits the configured notification when a completed login comes from
    /// an unseen device (or an unseen IP for N3), then remembers the device.
    fn record_login_locked(
        &self,
        state: &mut State,
        username: &str,
        ctx: &LoginContext,
        now: Timestamp,
    ) {
        let acct = state.accounts.entry(username.to_string()).or_default();
        let device = (ctx.fingerprint.clone(), ctx.ip.clone());
        let new_device = !acct.seen_devices.contains(&device);
        let new_ip = !acct.seen_ips.contains(&ctx.ip);
        acct.seen_devices.insert(device);
        acct.seen_ips.insert(ctx.ip.clone());
        let emit = match self.config.notification {
            Some(NotificationType::N3) => new_ip,
            Some(NotificationType::N6) | None => false,
            Some(_) => new_device,
        };
        if emit {
            let kind = self.config.notification.expect("emit implies a type");
            self.notify_locked(state, username, kind, now);
        }
    }

    fn notify_locked(&self, state: &mut State, username: &str, kind: NotificationType, at: Timestamp) {
        state.notifications.push(NotificationRecord {
            account: username.to_string(),
            kind,
            at,
            detail: kind.detail().to_string(),
        });
    }

    fn account(&self, req: &HttpRequest) -> HttpResponse {
        let ctx = LoginContext::from_request(req);
        let state = self.state.lock().expect("state lock");
        match ctx.cookies.get(SESSION_COOKIE).and_then(|s| state.sessions.get(s)) {
            Some(s) if s.authenticated => {
                json_response(200, json!({"status": "ok", "username": s.username}))
            }
            _ => error(401, "not authenticated"),
        }
    }

    fn logout(&self, req: &HttpRequest) -> HttpResponse {
        let ctx = LoginContext::from_request(req);
        let mut state = self.state.lock().expect("state lock");
        if let Some(sid) = ctx.cookies.get(SESSION_COOKIE) {
            state.sessions.remove(sid);
        }
        let mut resp = json_response(200, json!({"status": "ok"}));
        resp.headers.push((
            "set-cookie".into(),
            format!("{SESSION_COOKIE}=; Path=/; Max-Age=0"),
        ));
        resp
    }
}

/// Calls a service directly, without sockets.
#[derive(Debug, Clone)]
pub struct InProcessTransport {
    service: Arc<TestbedService>,
}

impl InProcessTransport {
    pub fn new(service: Arc<TestbedService>) -> Self {
        InProcessTransport { service }
    }
}

impl Transport for InProcessTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        Ok(self.service.handle(req))
    }
}
