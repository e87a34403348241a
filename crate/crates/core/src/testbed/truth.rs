use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::{RememberPlacement, TargetConfig};
use crate::attack::{AttackType, FlawKind};
use crate::notification::NotificationType;
use crate::probe::MeasureSet;

/// What a correct evaluation of a target must conclude.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub id: String,
    pub remember_device: bool,
    pub measures: MeasureSet,
    pub trust_cookies: BTreeSet<String>,
    pub flaws: BTreeSet<FlawKind>,
    pub attacks: BTreeSet<AttackType>,
    pub notification: Option<NotificationType>,
}

pub fn ground_truth(config: &TargetConfig) -> GroundTruth {
    let mut truth = GroundTruth {
        id: config.id.clone(),
        remember_device: false,
        measures: MeasureSet::default(),
        trust_cookies: BTreeSet::new(),
        flaws: BTreeSet::new(),
        attacks: BTreeSet::new(),
        notification: config.notification,
    };
    if config.broken2fa {
        truth.flaws.insert(FlawKind::Broken2FA);
        truth.attacks.insert(AttackType::A4);
        return truth;
    }
    if config.remember_placement == RememberPlacement::None {
        return truth;
    }
    truth.remember_device = true;
    truth.measures = config.risk_controls;
    truth.trust_cookies = config.trust_cookies.iter().map(|c| c.name.clone()).collect();

    let m = config.risk_controls;
    if m.fingerprint_based || m.ip_based {
        return truth;
    }
    let cookies = &config.trust_cookies;
    if !cookies.is_empty() {
        let schemes: Vec<_> = cookies.iter().map(|c| c.value_scheme).collect();
        if schemes.iter().all(|s| s.is_constant()) {
            truth.flaws.insert(FlawKind::FixedValue);
        }
        if schemes.iter().all(|s| s.account_unbound()) {
            truth.flaws.insert(FlawKind::CrossAccountReuse);
        }
        if schemes.iter().any(|s| s.is_timestamp()) {
            truth.flaws.insert(FlawKind::PredictableTimestamp);
        }
        if schemes.contains(&super::ValueScheme::Base64Profile) {
            truth.flaws.insert(FlawKind::SensitiveEncoding);
        }
    }
    truth.attacks.insert(AttackType::A3);
    if !cookies.is_empty() && cookies.iter().all(|c| !c.secure) {
        truth.attacks.insert(AttackType::A1);
    }
    if m.device_token_based || (!cookies.is_empty() && cookies.iter().all(|c| !c.http_only)) {
        truth.attacks.insert(AttackType::A2);
    }
    if !truth.flaws.is_empty() {
        truth.attacks.insert(AttackType::A4);
    }
    truth
}
