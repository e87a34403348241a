use serde_json::json;

use super::script::{FlowResult, FlowScript, FlowStep, PromptObservation, SentCookie, TraceEntry};
use super::{detect_2fa_prompt, Account, FlowError, SessionEnv, Target};
use crate::cookie::{cookie_header, parse_set_cookie, CookieError, Origin};
use crate::http::{
    HttpRequest, HttpResponse, Method, HEADER_DEVICE_TOKEN, HEADER_FINGERPRINT,
    HEADER_FORWARDED_FOR,
};
use crate::time::{Clock, Timestamp};
use crate::totp::hotp;

const MAX_REDIRECTS: usize = 10;
const MAX_CHALLENGE_ATTEMPTS: usize = 3;

struct Driver<'a> {
    target: &'a Target,
    clock: &'a dyn Clock,
    env: &'a mut SessionEnv,
    trace: Vec<TraceEntry>,
}

impl Driver<'_> {
    fn request(
        &mut self,
        step: usize,
        method: Method,
        path: &str,
        body: Option<serde_json::Value>,
    ) -> Result<HttpResponse, FlowError> {
        let mut url = self.target.url(path);
        let mut method = method;
        let mut body = body;
        for _ in 0..=MAX_REDIRECTS {
            let now = self.clock.now();
            let host = url.host_str().unwrap_or_default().to_ascii_lowercase();
            let cookies = self
                .env
                .jar
                .cookies_for(&host, url.path(), self.env.secure_context, now);
            let mut req = HttpRequest::new(method, url.clone())
                .header(HEADER_FINGERPRINT, self.env.fingerprint.clone())
                .header(HEADER_FORWARDED_FOR, self.env.simulated_ip.clone());
            if let Some(token) = self.env.device_tokens.get(&self.target.id) {
                req = req.header(HEADER_DEVICE_TOKEN, token.clone());
            }
            if let Some(h) = cookie_header(&cookies) {
                req = req.header("cookie", h);
            }
            if let Some(b) = &body {
                req = req.json(b);
            }
            let resp = self.target.transport().send(&req)?;

            let origin = Origin::from_url(&url);
            let mut set_cookies = Vec::new();
            for header in resp.header_values("set-cookie") {
                set_cookies.push(header.to_string());
                match parse_set_cookie(header, &origin, now) {
                    Ok(record) => self.env.jar.store(record, now),
                    Err(e) => tracing::debug!(%header, error = %e, "ignoring Set-Cookie"),
                }
            }
            self.trace.push(TraceEntry {
                step_index: step,
                method,
                url: url.to_string(),
                sent_cookies: cookies
                    .iter()
                    .map(|c| SentCookie {
                        name: c.name.clone(),
                        domain: c.domain.clone(),
                        path: c.path.clone(),
                        secure: c.secure,
                    })
                    .collect(),
                status: resp.status,
                set_cookies,
            });

            let location = resp.header_value("location").map(str::to_string);
            match (resp.status, location) {
                (301..=303, Some(loc)) => {
                    url = url.join(&loc).map_err(|_| FlowError::UnexpectedResponse {
                        step,
                        status: resp.status,
                    })?;
                    method = Method::Get;
                    body = None;
                }
                (307 | 308, Some(loc)) => {
                    url = url.join(&loc).map_err(|_| FlowError::UnexpectedResponse {
                        step,
                        status: resp.status,
                    })?;
                }
                _ => return Ok(resp),
            }
        }
        Err(FlowError::UnexpectedResponse { step, status: 310 })
    }

    fn login(&mut self, step: usize, username: &str, password: &str) -> Result<bool, FlowError> {
        let path = self.target.profile.login_url.clone();
        let resp = self.request(
            step,
            Method::Post,
            &path,
            Some(json!({"username": username, "password": password})),
        )?;
        match resp.status {
            401 | 403 => Err(FlowError::AuthFailed(step)),
            200..=299 => detect_2fa_prompt(&resp, &self.target.profile.matcher()),
            status => Err(FlowError::UnexpectedResponse { step, status }),
        }
    }

    /// Picks an unused counter among the three the server accepts, waiting
    /// for the next window when all are spent.
    fn next_counter(&self, username: &str, step_secs: u64) -> u64 {
        loop {
            let now = self.clock.now().unix().max(0) as u64;
            let c = now / step_secs;
            let candidates = [Some(c), Some(c + 1), c.checked_sub(1)];
            if let Some(counter) = candidates
                .into_iter()
                .flatten()
                .find(|k| !self.target.counter_used(username, *k))
            {
                return counter;
            }
            let next = ((c + 1) * step_secs) as i64;
            self.clock.sleep_until(Timestamp::from_unix(next));
        }
    }

    fn solve(&mut self, step: usize, account: &Account, remember: bool) -> Result<(), FlowError> {
        let seed = account.seed_bytes()?;
        let path = self.target.profile.two_factor_url.clone();
        for _ in 0..MAX_CHALLENGE_ATTEMPTS {
            let counter = self.next_counter(&account.username, account.totp_step);
            self.target.mark_counter(&account.username, counter);
            let code = hotp(&seed, counter, account.totp_digits)?;
            let resp = self.request(
                step,
                Method::Post,
                &path,
                Some(json!({"code": code, "rememberDevice": remember})),
            )?;
            match resp.status {
                200..=299 => {
                    if let Some(token) = resp
                        .json()
                        .and_then(|v| v.get("deviceToken")?.as_str().map(str::to_string))
                    {
                        self.env.device_tokens.insert(self.target.id.clone(), token);
                    }
                    return Ok(());
                }
                // Replayed or window-edge rejection: try another counter.
                401 | 409 => continue,
                status => return Err(FlowError::UnexpectedResponse { step, status }),
            }
        }
        Err(FlowError::ChallengeFailed(step))
    }
}

/// Runs `script` in `env` against `target`. Challenges are answered with
/// codes derived from `account`'s seed at the clock's current time.
pub fn execute_flow(
    script: &FlowScript,
    env: &mut SessionEnv,
    target: &Target,
    account: &Account,
    clock: &dyn Clock,
) -> Result<FlowResult, FlowError> {
    script.validate()?;
    let mut driver = Driver {
        target,
        clock,
        env,
        trace: Vec::new(),
    };
    let mut result = FlowResult::default();
    let mut authenticated = false;
    let mut pending = false;

    for (i, step) in script.steps.iter().enumerate() {
        match step {
            FlowStep::Login { username, password } => {
                let prompted = driver.login(i, username, password)?;
                result.prompts.push(PromptObservation {
                    step_index: i,
                    prompted2fa: prompted,
                });
                authenticated = !prompted;
                pending = prompted;
            }
            FlowStep::Solve2fa { remember_device } => {
                if pending {
                    driver.solve(i, account, *remember_device)?;
                    authenticated = true;
                    pending = false;
                }
            }
            FlowStep::Logout => {
                let path = target.profile.logout_url.clone();
                driver.request(i, Method::Post, &path, None)?;
                authenticated = false;
                pending = false;
            }
            FlowStep::ClearAll => {
                driver.env.clear_all();
                authenticated = false;
                pending = false;
            }
            FlowStep::Snapshot { label } => {
                let snap = driver.env.jar.snapshot(label.clone(), clock.now());
                result.snapshots.insert(label.clone(), snap);
            }
            FlowStep::ImportCookies { snapshot } => driver.env.jar.import(snapshot.cookies()),
            FlowStep::ToggleMask { enabled } => {
                if let Some(missing) = enabled.iter().find(|k| driver.env.jar.get(k).is_none()) {
                    return Err(CookieError::UnknownKey(missing.clone()).into());
                }
                driver.env.jar.retain_keys(enabled);
            }
            FlowStep::AssertPrompt { expected } => {
                let observed = result.last_prompt().unwrap_or(false);
                if observed != *expected {
                    return Err(FlowError::AssertionFailed {
                        step: i,
                        expected: *expected,
                        observed,
                    });
                }
            }
        }
    }
    result.final_authenticated = authenticated;
    result.http_trace = driver.trace;
    Ok(result)
}

/// Requests the authenticated-only resource; true on 2xx.
pub fn fetch_account(
    env: &mut SessionEnv,
    target: &Target,
    clock: &dyn Clock,
) -> Result<bool, FlowError> {
    let mut driver = Driver {
        target,
        clock,
        env,
        trace: Vec::new(),
    };
    let path = target.profile.account_url.clone();
    let resp = driver.request(0, Method::Get, &path, None)?;
    Ok((200..300).contains(&resp.status))
}

/// Asks a testbed to drop all per-account state. Returns false when the
/// target does not expose the hook.
pub fn reset_target(target: &Target) -> Result<bool, FlowError> {
    let req = HttpRequest::new(Method::Post, target.url("/__reset"));
    let resp = target.transport().send(&req)?;
    if (200..300).contains(&resp.status) {
        target.forget_counters();
        Ok(true)
    } else {
        Ok(false)
    }
}
