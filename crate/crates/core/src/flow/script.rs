use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::cookie::{CookieKey, CookieSnapshot};
use crate::http::Method;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum FlowStep {
    Login { username: String, password: String },
    #[serde(rename = "solve2fa")]
    Solve2fa { remember_device: bool },
    Logout,
    ClearAll,
    Snapshot { label: String },
    ImportCookies { snapshot: CookieSnapshot },
    ToggleMask { enabled: BTreeSet<CookieKey> },
    AssertPrompt { expected: bool },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowScript {
    pub steps: Vec<FlowStep>,
}

impl FlowScript {
    pub fn new(steps: Vec<FlowStep>) -> Self {
        FlowScript { steps }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let mut seen_login = false;
        let mut labels = BTreeSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                FlowStep::Login { .. } => seen_login = true,
                FlowStep::Solve2fa { .. } if !seen_login => {
                    return Err(FlowError::ScriptInvalid(format!(
                        "step {i}: solve2fa before any login"
                    )))
                }
                FlowStep::AssertPrompt { .. } if !seen_login => {
                    return Err(FlowError::ScriptInvalid(format!(
                        "step {i}: assertPrompt before any login"
                    )))
                }
                FlowStep::Snapshot { label } if !labels.insert(label.as_str()) => {
                    return Err(FlowError::ScriptInvalid(format!(
                        "step {i}: duplicate snapshot label {label:?}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PromptObservation {
    pub step_index: usize,
    pub prompted2fa: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SentCookie {
    pub name: String,
    pub domain: String,
    pub path: String,
    pub secure: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEntry {
    pub step_index: usize,
    pub method: Method,
    pub url: String,
    pub sent_cookies: Vec<SentCookie>,
    pub status: u16,
    pub set_cookies: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowResult {
    pub snapshots: BTreeMap<String, CookieSnapshot>,
    pub prompts: Vec<PromptObservation>,
    pub final_authenticated: bool,
    pub http_trace: Vec<TraceEntry>,
}

impl FlowResult {
    pub fn last_prompt(&self) -> Option<bool> {
        self.prompts.last().map(|p| p.prompted2fa)
    }
}
