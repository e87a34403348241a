//! Login-notification types observed after a bypass attempt.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::time::Timestamp;

/// Notification behaviors on a new-device login, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NotificationType {
    /// New-device login notice only.
    N1,
    /// New-device notice with login time and location.
    N2,
    /// Abnormal-IP login notice.
    N3,
    /// Suspicious-login verification request.
    N4,
    /// Unauthorized-attempt notice plus automatic password reset.
    N5,
    /// Correct password but incorrect second-factor code.
    N6,
}

impl NotificationType {
    pub const ALL: [NotificationType; 6] = [
        NotificationType::N1,
        NotificationType::N2,
        NotificationType::N3,
        NotificationType::N4,
        NotificationType::N5,
        NotificationType::N6,
    ];

    /// The `detail` string the testbed writes for this type.
    pub fn detail(self) -> &'static str {
        match self {
            NotificationType::N1 => "new-device",
            NotificationType::N2 => "new-device time+location",
            NotificationType::N3 => "abnormal-ip",
            NotificationType::N4 => "suspicious-login verification",
            NotificationType::N5 => "unauthorized-attempt password-reset",
            NotificationType::N6 => "bad-otp correct-password",
        }
    }
}

impl fmt::Display for NotificationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for NotificationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NotificationType::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown notification type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NotificationRecord {
    pub account: String,
    #[serde(rename = "type")]
    pub kind: NotificationType,
    pub at: Timestamp,
    pub detail: String,
}
