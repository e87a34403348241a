//! End-to-end evaluation of one target: broken-2FA check, remember-device
//! and risk-control probes, trust isolation, attribute audit, flaw battery
//! and notification check.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attack::{
    analyze_value_scheme, audit_expiry, classify_attack_surface, classify_notifications,
    forge_cookie_value, lifetime_of, AttackError, AttackType, CookieAudit, ExpiryAudit, FlawKind,
    FlawSet, NotificationEvidence, TrustCookieAudit,
};
use crate::flow::{execute_flow, Account, FlowError, FlowResult, FlowScript, FlowStep, SessionEnv, Target};
use crate::http::{HttpRequest, Method};
use crate::notification::{NotificationRecord, NotificationType};
use crate::probe::{
    isolate_trust_cookies, probe_additional_measures, probe_cookie_based,
    probe_remember_device_detail, remember_flow, verify_bypass, EnvFactory, Equalize, MeasureSet,
    ProbeContext, ProbeError, TrustCookieSet,
};
use crate::time::{Clock, Timestamp};

pub const MIN_BROKEN_LOGINS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// The evaluator's conclusion about one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvaluationVerdict {
    pub target: String,
    pub remember_device: bool,
    pub measures: MeasureSet,
    pub trust: TrustCookieSet,
    pub audit: TrustCookieAudit,
    pub attacks: BTreeSet<AttackType>,
    pub notification: Option<NotificationType>,
    pub expiry: Option<ExpiryAudit>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EvaluationVerdict {
    fn empty(target: &str) -> Self {
        EvaluationVerdict {
            target: target.to_string(),
            remember_device: false,
            measures: MeasureSet::default(),
            trust: TrustCookieSet::default(),
            audit: TrustCookieAudit::default(),
            attacks: BTreeSet::new(),
            notification: None,
            expiry: None,
            notes: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn flaw_kinds(&self) -> BTreeSet<FlawKind> {
        self.audit.flaws.kinds()
    }

    /// Largest trust-cookie lifetime in days; `None` for session-only or
    /// cookie-less verdicts.
    pub fn max_lifetime_days(&self) -> Option<i64> {
        match self.expiry?.max_lifetime_days {
            crate::attack::Lifetime::Days(d) => Some(d),
            crate::attack::Lifetime::Session => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub envs: EnvFactory,
    pub reset_between_trials: bool,
    pub broken_logins: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            envs: EnvFactory::default(),
            reset_between_trials: true,
            broken_logins: MIN_BROKEN_LOGINS,
        }
    }
}

fn login(account: &Account) -> FlowStep {
    FlowStep::Login {
        username: account.username.clone(),
        password: account.password.clone(),
    }
}

/// True iff none of the logins prompted for a second factor. Needs at
/// least three logins; fewer never count as broken.
pub fn detect_broken_2fa(results: &[FlowResult]) -> bool {
    let prompts: Vec<bool> = results
        .iter()
        .flat_map(|r| r.prompts.iter().map(|p| p.prompted2fa))
        .collect();
    prompts.len() >= MIN_BROKEN_LOGINS && prompts.iter().all(|p| !p)
}

/// Logs in as the victim from a fresh, cleared environment per login.
fn broken_check(
    ctx: &ProbeContext<'_>,
    account: &Account,
    envs: &EnvFactory,
    n: usize,
) -> Result<Vec<FlowResult>, EvalError> {
    let script = FlowScript::new(vec![FlowStep::ClearAll, login(account)]);
    let mut out = Vec::new();
    for _ in 0..n.max(MIN_BROKEN_LOGINS) {
        let mut env = envs.victim();
        out.push(execute_flow(&script, &mut env, ctx.target, account, ctx.clock)?);
    }
    Ok(out)
}

/// Fetches the target's notification log for `account`; `None` when the
/// hook is absent.
pub fn fetch_notifications(target: &Target, account: &str) -> Result<Option<Vec<NotificationRecord>>, FlowError> {
    let mut url = target.url("/__notifications");
    url.query_pairs_mut().append_pair("account", account);
    let resp = target.transport().send(&HttpRequest::new(Method::Get, url))?;
    if resp.status != 200 {
        return Ok(None);
    }
    Ok(serde_json::from_slice(&resp.body).ok())
}

/// Imports the victim's client state into a foreign environment, logs in
/// (solving the challenge if asked) and classifies the notifications that
/// login produced.
fn notification_probe(
    ctx: &ProbeContext<'_>,
    account: &Account,
    envs: &EnvFactory,
    remember: bool,
) -> Result<(Option<NotificationType>, Option<String>), EvalError> {
    ctx.begin_trial()?;
    let mut victim = envs.victim();
    if remember {
        remember_flow(ctx, account, &mut victim)?;
    } else {
        execute_flow(
            &FlowScript::new(vec![login(account), FlowStep::Solve2fa { remember_device: false }]),
            &mut victim,
            ctx.target,
            account,
            ctx.clock,
        )?;
    }
    let Some(before) = fetch_notifications(ctx.target, &account.username)? else {
        return Ok((None, Some("notification log unavailable".into())));
    };
    let mut attacker = Equalize::default().apply(&victim, &envs.attacker());
    attacker.jar.import(victim.jar.clone().snapshot("v", ctx.clock.now()).cookies());
    attacker.device_tokens = victim.device_tokens.clone();
    execute_flow(
        &FlowScript::new(vec![login(account), FlowStep::Solve2fa { remember_device: false }]),
        &mut attacker,
        ctx.target,
        account,
        ctx.clock,
    )?;
    let after = fetch_notifications(ctx.target, &account.username)?.unwrap_or_default();
    let fresh: Vec<NotificationEvidence> = after
        .into_iter()
        .skip(before.len())
        .map(NotificationEvidence::Record)
        .collect();
    Ok((classify_notifications(&fresh), None))
}

/// Logs in as `victim` with the attacker account's trust cookies.
pub fn test_cross_account_reuse(
    ctx: &ProbeContext<'_>,
    victim: &Account,
    attacker_trust: &TrustCookieSet,
    envs: &EnvFactory,
) -> Result<bool, EvalError> {
    let mut env = envs.attacker();
    Ok(verify_bypass(ctx, victim, attacker_trust, &mut env)?)
}

fn restrict(post: &crate::cookie::CookieSnapshot, keys: &TrustCookieSet) -> TrustCookieSet {
    TrustCookieSet::from_records(keys.keys.iter().filter_map(|k| post.get(k).cloned()))
}

/// Four independent remember flows (victim twice, attacker twice), value
/// analysis, then an active cross-account check.
fn flaw_battery(
    ctx: &ProbeContext<'_>,
    victim: &Account,
    attacker: &Account,
    trust: &TrustCookieSet,
    envs: &EnvFactory,
) -> Result<(FlawSet, Vec<String>), EvalError> {
    ctx.begin_trial()?;
    let mut sets = Vec::new();
    let mut times = Vec::new();
    for account in [victim, victim, attacker, attacker] {
        let mut env = if account.username == victim.username {
            envs.victim()
        } else {
            envs.attacker()
        };
        times.push(ctx.clock.now());
        let (_, post) = remember_flow(ctx, account, &mut env)?;
        sets.push(restrict(&post, trust));
    }
    let mut flaws = FlawSet::new();
    let mut warnings = Vec::new();
    match analyze_value_scheme(&sets, &times) {
        Ok(a) => {
            flaws.extend(a.flaws);
            warnings.extend(a.warnings);
        }
        Err(AttackError::InsufficientSets(n)) => {
            warnings.push(format!("value analysis skipped: {n} usable sets"));
        }
        Err(e) => warnings.push(e.to_string()),
    }
    if test_cross_account_reuse(ctx, victim, &sets[2], envs)? {
        flaws.insert(
            FlawKind::CrossAccountReuse,
            format!("{}'s trust cookies bypass the challenge for {}", attacker.username, victim.username),
        );
    }
    Ok((flaws, warnings))
}

fn audit_for(trust: &TrustCookieSet, measures: &MeasureSet, flaws: FlawSet) -> TrustCookieAudit {
    TrustCookieAudit {
        cookie_only: measures.client_state_only(),
        uses_local_storage: measures.device_token_based,
        per_cookie: trust
            .records
            .iter()
            .map(|r| CookieAudit {
                key: r.key(),
                secure: r.secure,
                http_only: r.http_only,
                lifetime_days: lifetime_of(r),
            })
            .collect(),
        flaws,
    }
}

/// Runs the whole procedure against `target`. `attacker_account` enables
/// the value-scheme and cross-account tests.
pub fn evaluate_target(
    target: &Target,
    victim: &Account,
    attacker_account: Option<&Account>,
    clock: &dyn Clock,
    opts: &EvaluateOptions,
) -> Result<EvaluationVerdict, EvalError> {
    let ctx = ProbeContext {
        target,
        clock,
        reset_between_trials: opts.reset_between_trials,
    };
    let envs = &opts.envs;
    let mut verdict = EvaluationVerdict::empty(&target.id);

    if !ctx.begin_trial()? && opts.reset_between_trials {
        verdict
            .notes
            .push("reset hook unavailable; trials share server state".into());
    }
    let logins = broken_check(&ctx, victim, envs, opts.broken_logins)?;
    if detect_broken_2fa(&logins) {
        verdict.audit.flaws.insert(
            FlawKind::Broken2FA,
            format!("no challenge on {} logins from cleared environments", logins.len()),
        );
        verdict.attacks = classify_attack_surface(&verdict.audit).expect("broken audits classify");
        let (n, note) = notification_probe(&ctx, victim, envs, false)?;
        verdict.notification = n;
        verdict.notes.extend(note);
        return Ok(verdict);
    }
    let prompted = logins.iter().filter(|r| r.last_prompt() == Some(true)).count();
    if prompted < logins.len() {
        verdict.notes.push(format!(
            "intermittent challenge: prompted on {prompted} of {} logins",
            logins.len()
        ));
    }

    ctx.begin_trial()?;
    let remember = probe_remember_device_detail(&ctx, victim, envs)?;
    verdict.remember_device = remember.remembered();
    if !verdict.remember_device {
        let (n, note) = notification_probe(&ctx, victim, envs, false)?;
        verdict.notification = n;
        verdict.notes.extend(note);
        return Ok(verdict);
    }

    ctx.begin_trial()?;
    if !probe_cookie_based(&ctx, victim, envs)? {
        verdict
            .notes
            .push("clearing browser data did not restore the challenge".into());
    }

    ctx.begin_trial()?;
    let mut victim_env = envs.victim();
    remember_flow(&ctx, victim, &mut victim_env)?;
    verdict.measures = match probe_additional_measures(&ctx, victim, &victim_env, &envs.attacker()) {
        Ok(m) => m,
        Err(ProbeError::Inconclusive) => {
            verdict.notes.push("risk-control attribution inconclusive".into());
            MeasureSet::default()
        }
        Err(e) => return Err(e.into()),
    };

    if verdict.measures.cookie_based {
        ctx.begin_trial()?;
        let mut v = envs.victim();
        let eq = Equalize::required_by(&verdict.measures);
        verdict.trust = isolate_trust_cookies(&ctx, victim, &mut v, &envs.attacker(), eq)?;
        let mut check = eq.apply(&v, &envs.attacker());
        if !verify_bypass(&ctx, victim, &verdict.trust, &mut check)? {
            verdict.notes.push("isolated trust set failed re-verification".into());
        }
        verdict.expiry = audit_expiry(&verdict.trust.records);
    }

    let mut flaws = FlawSet::new();
    if verdict.measures.client_state_only() && !verdict.trust.is_empty() {
        match attacker_account {
            Some(a) => {
                let (f, w) = flaw_battery(&ctx, victim, a, &verdict.trust, envs)?;
                flaws = f;
                verdict.warnings.extend(w);
            }
            None => verdict
                .notes
                .push("no second account; flaw battery skipped".into()),
        }
    }
    verdict.audit = audit_for(&verdict.trust, &verdict.measures, flaws);
    verdict.attacks = match classify_attack_surface(&verdict.audit) {
        Ok(a) => a,
        Err(AttackError::EmptyAudit) => BTreeSet::new(),
        Err(e) => return Err(EvalError::Probe(ProbeError::Flow(FlowError::ScriptInvalid(e.to_string())))),
    };

    let (n, note) = notification_probe(&ctx, victim, envs, true)?;
    verdict.notification = n;
    verdict.notes.extend(note);
    Ok(verdict)
}

/// Forges a full trust set from detected flaws: timestamp fields are set
/// to `now`, constant values are replayed. Fails for cookies no detected
/// flaw explains.
pub fn forge_trust_set(
    flaws: &FlawSet,
    trust: &TrustCookieSet,
    now: Timestamp,
) -> Result<TrustCookieSet, AttackError> {
    let mut forged = Vec::new();
    for r in &trust.records {
        let attempt = [
            FlawKind::PredictableTimestamp,
            FlawKind::CrossAccountReuse,
            FlawKind::FixedValue,
        ]
        .into_iter()
        .filter(|k| flaws.contains(*k))
        .find_map(|k| forge_cookie_value(k, r, now).ok());
        match attempt {
            Some(f) => forged.push(f),
            None => return Err(AttackError::Unforgeable(format!("{} (no forgeable flaw)", r.name))),
        }
    }
    if forged.is_empty() {
        return Err(AttackError::Unforgeable("empty trust set".into()));
    }
    Ok(TrustCookieSet::from_records(forged))
}

/// Convenience for fresh victim sessions in tests and tools.
pub fn fresh_victim(envs: &EnvFactory) -> SessionEnv {
    envs.victim()
}
