//! Risk-control detection, trust-cookie isolation and bypass checks.
//!
//! Each procedure runs complete flows through the driver, so it observes a
//! target exactly as a browser would: by whether a login is challenged.

mod measures;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use measures::{MeasureSet, TrustCookieSet};

use crate::cookie::{diff_snapshots, CookieKey, CookieSnapshot};
use crate::flow::{execute_flow, fetch_account, reset_target, Account, FlowError, FlowScript, FlowStep, SessionEnv, Target};
use crate::time::Clock;

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("no combination of equalized factors suppressed the challenge")]
    Inconclusive,
    #[error("the full candidate set ({0} cookies) does not bypass the challenge")]
    IsolationFailed(usize),
}

/// Target, clock and trial policy shared by all probes of one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ProbeContext<'a> {
    pub target: &'a Target,
    pub clock: &'a dyn Clock,
    /// Reset testbed state before each trial when the hook is available.
    pub reset_between_trials: bool,
}

impl ProbeContext<'_> {
    /// Starts an independent trial. Returns whether state was reset.
    pub fn begin_trial(&self) -> Result<bool, ProbeError> {
        if self.reset_between_trials {
            Ok(reset_target(self.target)?)
        } else {
            Ok(false)
        }
    }

    fn run(&self, env: &mut SessionEnv, account: &Account, steps: Vec<FlowStep>) -> Result<crate::flow::FlowResult, ProbeError> {
        Ok(execute_flow(&FlowScript::new(steps), env, self.target, account, self.clock)?)
    }
}

/// Produces the victim and attacker device environments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnvFactory {
    pub victim_fingerprint: String,
    pub victim_ip: String,
    pub attacker_fingerprint: String,
    pub attacker_ip: String,
    pub secure_context: bool,
}

impl Default for EnvFactory {
    fn default() -> Self {
        EnvFactory {
            victim_fingerprint: "fp-victim-laptop".into(),
            victim_ip: "198.51.100.10".into(),
            attacker_fingerprint: "fp-attacker-vm".into(),
            attacker_ip: "203.0.113.66".into(),
            secure_context: true,
        }
    }
}

impl EnvFactory {
    pub fn victim(&self) -> SessionEnv {
        let mut env = SessionEnv::new(&self.victim_fingerprint, &self.victim_ip);
        env.secure_context = self.secure_context;
        env
    }

    pub fn attacker(&self) -> SessionEnv {
        let mut env = SessionEnv::new(&self.attacker_fingerprint, &self.attacker_ip);
        env.secure_context = self.secure_context;
        env
    }
}

/// Non-cookie factors an attacker environment can copy from the victim.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Equalize {
    pub fingerprint: bool,
    pub ip: bool,
    pub device_token: bool,
}

impl Equalize {
    /// Attribution order: single factors, then pairs, then all three.
    pub const ORDER: [Equalize; 8] = [
        Equalize::of(false, false, false),
        Equalize::of(true, false, false),
        Equalize::of(false, true, false),
        Equalize::of(false, false, true),
        Equalize::of(true, true, false),
        Equalize::of(true, false, true),
        Equalize::of(false, true, true),
        Equalize::of(true, true, true),
    ];

    pub const fn of(fingerprint: bool, ip: bool, device_token: bool) -> Self {
        Equalize {
            fingerprint,
            ip,
            device_token,
        }
    }

    /// The factors a measure set says must match.
    pub fn required_by(m: &MeasureSet) -> Self {
        Equalize::of(m.fingerprint_based, m.ip_based, m.device_token_based)
    }

    /// A fresh copy of `attacker` with the selected factors taken from
    /// `victim` and an empty jar.
    pub fn apply(&self, victim: &SessionEnv, attacker: &SessionEnv) -> SessionEnv {
        let mut env = attacker.clone();
        env.jar.clear();
        env.device_tokens.clear();
        if self.fingerprint {
            env.fingerprint = victim.fingerprint.clone();
        }
        if self.ip {
            env.simulated_ip = victim.simulated_ip.clone();
        }
        if self.device_token {
            env.device_tokens = victim.device_tokens.clone();
        }
        env
    }
}

fn login_step(account: &Account) -> FlowStep {
    FlowStep::Login {
        username: account.username.clone(),
        password: account.password.clone(),
    }
}

/// Login, solve with "remember" ticked, snapshotting the jar just before
/// and just after the challenge. Returns `(pre, post)`.
pub fn remember_flow(
    ctx: &ProbeContext<'_>,
    account: &Account,
    env: &mut SessionEnv,
) -> Result<(CookieSnapshot, CookieSnapshot), ProbeError> {
    let mut result = ctx.run(
        env,
        account,
        vec![
            login_step(account),
            FlowStep::Snapshot { label: "pre".into() },
            FlowStep::Solve2fa { remember_device: true },
            FlowStep::Snapshot { label: "post".into() },
        ],
    )?;
    let pre = result.snapshots.remove("pre").expect("pre snapshot step");
    let post = result.snapshots.remove("post").expect("post snapshot step");
    Ok((pre, post))
}

/// Outcome of the remember-device probe: one verification login and one
/// confirmation login after the remembered flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RememberProbe {
    pub first_prompted: bool,
    pub verify_prompted: bool,
    pub confirm_prompted: bool,
}

impl RememberProbe {
    pub fn remembered(&self) -> bool {
        self.first_prompted && !self.verify_prompted && !self.confirm_prompted
    }
}

pub fn probe_remember_device_detail(
    ctx: &ProbeContext<'_>,
    account: &Account,
    envs: &EnvFactory,
) -> Result<RememberProbe, ProbeError> {
    let mut env = envs.victim();
    let r = ctx.run(
        &mut env,
        account,
        vec![
            login_step(account),
            FlowStep::Solve2fa { remember_device: true },
            FlowStep::Logout,
            login_step(account),
            FlowStep::Logout,
            login_step(account),
        ],
    )?;
    Ok(RememberProbe {
        first_prompted: r.prompts[0].prompted2fa,
        verify_prompted: r.prompts[1].prompted2fa,
        confirm_prompted: r.prompts[2].prompted2fa,
    })
}

/// True iff a remembered device logs in again without a challenge.
pub fn probe_remember_device(
    ctx: &ProbeContext<'_>,
    account: &Account,
    envs: &EnvFactory,
) -> Result<bool, ProbeError> {
    Ok(probe_remember_device_detail(ctx, account, envs)?.remembered())
}

/// True iff clearing all browser data brings the challenge back.
pub fn probe_cookie_based(
    ctx: &ProbeContext<'_>,
    account: &Account,
    envs: &EnvFactory,
) -> Result<bool, ProbeError> {
    let mut env = envs.victim();
    let r = ctx.run(
        &mut env,
        account,
        vec![
            login_step(account),
            FlowStep::Solve2fa { remember_device: true },
            FlowStep::Logout,
            FlowStep::ClearAll,
            login_step(account),
        ],
    )?;
    Ok(r.last_prompt().unwrap_or(false))
}

fn login_prompted(
    ctx: &ProbeContext<'_>,
    account: &Account,
    env: &mut SessionEnv,
) -> Result<bool, ProbeError> {
    let r = ctx.run(env, account, vec![login_step(account)])?;
    Ok(r.last_prompt().unwrap_or(true))
}

/// Replays the victim's full client state from the attacker environment,
/// then equalizes fingerprint, IP and device token in a fixed order until
/// the challenge disappears. A final attempt with an empty jar tells
/// whether cookies take part at all.
pub fn probe_additional_measures(
    ctx: &ProbeContext<'_>,
    account: &Account,
    victim: &SessionEnv,
    attacker: &SessionEnv,
) -> Result<MeasureSet, ProbeError> {
    let victim_cookies: Vec<_> = victim.jar.clone().snapshot("victim", ctx.clock.now()).cookies().to_vec();
    let mut winner = None;
    for eq in Equalize::ORDER {
        let mut env = eq.apply(victim, attacker);
        env.jar.import(&victim_cookies);
        if !login_prompted(ctx, account, &mut env)? {
            winner = Some(eq);
            break;
        }
    }
    let eq = winner.ok_or(ProbeError::Inconclusive)?;
    let mut bare = eq.apply(victim, attacker);
    let cookie_based = login_prompted(ctx, account, &mut bare)?;
    Ok(MeasureSet {
        cookie_based,
        fingerprint_based: eq.fingerprint,
        ip_based: eq.ip,
        device_token_based: eq.device_token,
    })
}

/// True iff logging in with exactly `trust` (plus the equalized factors
/// already present in `attacker`) skips the challenge and reaches the
/// authenticated-only resource.
pub fn verify_bypass(
    ctx: &ProbeContext<'_>,
    account: &Account,
    trust: &TrustCookieSet,
    attacker: &mut SessionEnv,
) -> Result<bool, ProbeError> {
    attacker.jar.clear();
    attacker.jar.import(&trust.records);
    if login_prompted(ctx, account, attacker)? {
        return Ok(false);
    }
    Ok(fetch_account(attacker, ctx.target, ctx.clock)?)
}

/// Shrinks the cookies added or changed by a remember flow to the minimal
/// set that still bypasses the challenge, dropping one candidate at a time.
/// Relies on trust being monotone and conjunctive in the cookies.
pub fn minimize_trust_set(
    ctx: &ProbeContext<'_>,
    account: &Account,
    pre: &CookieSnapshot,
    post: &CookieSnapshot,
    attacker: &SessionEnv,
) -> Result<TrustCookieSet, ProbeError> {
    let candidates: BTreeSet<CookieKey> = diff_snapshots(pre, post).added_or_changed_keys();
    let subset = |keys: &BTreeSet<CookieKey>| {
        TrustCookieSet::from_records(keys.iter().filter_map(|k| post.get(k).cloned()))
    };
    let mut keep = candidates.clone();
    if !verify_bypass(ctx, account, &subset(&keep), &mut attacker.clone())? {
        return Err(ProbeError::IsolationFailed(keep.len()));
    }
    for key in &candidates {
        let mut trial = keep.clone();
        trial.remove(key);
        if verify_bypass(ctx, account, &subset(&trial), &mut attacker.clone())? {
            keep = trial;
        }
    }
    Ok(subset(&keep))
}

/// Runs a remember flow in `victim` and isolates the trust cookies, with
/// the attacker environment copying the victim factors in `equalize`.
pub fn isolate_trust_cookies(
    ctx: &ProbeContext<'_>,
    account: &Account,
    victim: &mut SessionEnv,
    attacker: &SessionEnv,
    equalize: Equalize,
) -> Result<TrustCookieSet, ProbeError> {
    let (pre, post) = remember_flow(ctx, account, victim)?;
    let attacker = equalize.apply(victim, attacker);
    minimize_trust_set(ctx, account, &pre, &post, &attacker)
}
