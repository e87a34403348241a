use serde::{Deserialize, Serialize};

use crate::notification::{NotificationRecord, NotificationType};

/// One observation collected after a bypass attempt: a typed testbed
/// record, or an analyst's free-text note about a received message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NotificationEvidence {
    Record(NotificationRecord),
    Annotation(String),
}

fn classify_annotation(text: &str) -> Option<NotificationType> {
    if let Ok(t) = text.parse::<NotificationType>() {
        return Some(t);
    }
    let t = text.to_ascii_lowercase();
    let has = |w: &str| t.contains(w);
    if has("password reset") || has("reset your password") {
        Some(NotificationType::N5)
    } else if (has("incorrect") || has("wrong")) && (has("code") || has("2fa") || has("otp")) {
        Some(NotificationType::N6)
    } else if has("verify") || has("verification") || has("was this you") {
        Some(NotificationType::N4)
    } else if has("ip") && (has("abnormal") || has("unusual") || has("unrecognized")) {
        Some(NotificationType::N3)
    } else if has("location") || has("time+location") {
        Some(NotificationType::N2)
    } else if has("new device") || has("new-device") || has("new login") || has("sign-in") {
        Some(NotificationType::N1)
    } else {
        None
    }
}

/// The most severe notification type in the log; `None` for an empty log.
pub fn classify_notifications(log: &[NotificationEvidence]) -> Option<NotificationType> {
    log.iter()
        .filter_map(|e| match e {
            NotificationEvidence::Record(r) => Some(r.kind),
            NotificationEvidence::Annotation(a) => classify_annotation(a),
        })
        .max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::Timestamp;

    fn record(kind: NotificationType) -> NotificationEvidence {
        NotificationEvidence::Record(NotificationRecord {
            account: "a".into(),
            kind,
            at: Timestamp::from_unix(0),
            detail: kind.detail().into(),
        })
    }

    #[test]
    fn typed_records() {
        assert_eq!(classify_notifications(&[record(NotificationType::N1)]), Some(NotificationType::N1));
        assert_eq!(
            classify_notifications(&[record(NotificationType::N1), record(NotificationType::N2)]),
            Some(NotificationType::N2)
        );
        assert_eq!(classify_notifications(&[]), None);
    }

    #[test]
    fn analyst_annotations() {
        let a = |s: &str| classify_notifications(&[NotificationEvidence::Annotation(s.into())]);
        assert_eq!(a("New device login detected"), Some(NotificationType::N1));
        assert_eq!(a("New sign-in: time and location listed"), Some(NotificationType::N2));
        assert_eq!(a("Login from an unusual IP address"), Some(NotificationType::N3));
        assert_eq!(a("Please verify this login attempt"), Some(NotificationType::N4));
        assert_eq!(a("We forced a password reset"), Some(NotificationType::N5));
        assert_eq!(a("Your 2FA code was incorrect"), Some(NotificationType::N6));
        assert_eq!(a("N3"), Some(NotificationType::N3));
        assert_eq!(a("newsletter"), None);
    }

    #[test]
    fn evidence_json_forms() {
        let v: Vec<NotificationEvidence> = serde_json::from_str(
            r#"[{"account":"a","type":"N2","at":"1970-01-01T00:00:00Z","detail":"x"},"new device"]"#,
        )
        .unwrap();
        assert_eq!(classify_notifications(&v), Some(NotificationType::N2));
    }
}
