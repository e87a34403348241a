use regex::Regex;
use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::http::HttpResponse;

/// Body patterns and status codes that identify a challenge page on a
/// target that does not speak the testbed protocol.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChallengeMatcher {
    #[serde(default)]
    pub positive: Vec<String>,
    #[serde(default)]
    pub negative: Vec<String>,
    #[serde(default)]
    pub status_codes: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptMatcher {
    /// JSON field `requires2fa`.
    Testbed,
    Profile(ChallengeMatcher),
}

fn any_match(patterns: &[String], text: &str) -> Result<bool, FlowError> {
    for p in patterns {
        let re = Regex::new(p)
            .map_err(|e| FlowError::ScriptInvalid(format!("bad matcher pattern {p:?}: {e}")))?;
        if re.is_match(text) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Decides whether a login response is a second-factor challenge.
pub fn detect_2fa_prompt(resp: &HttpResponse, matcher: &PromptMatcher) -> Result<bool, FlowError> {
    match matcher {
        PromptMatcher::Testbed => resp
            .json()
            .and_then(|v| v.get("requires2fa").and_then(|b| b.as_bool()))
            .ok_or(FlowError::AmbiguousPrompt),
        PromptMatcher::Profile(m) => {
            let body = resp.body_text();
            let positive = m.status_codes.contains(&resp.status) || any_match(&m.positive, &body)?;
            let negative = any_match(&m.negative, &body)?;
            match (positive, negative) {
                (true, false) => Ok(true),
                (false, true) => Ok(false),
                _ => Err(FlowError::AmbiguousPrompt),
            }
        }
    }
}
