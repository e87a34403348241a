use std::collections::BTreeSet;

use proptest::prelude::*;
use se2fa_core::cookie::{
    apply_toggle_mask, diff_snapshots, parse_set_cookie, parse_snapshot, serialize_snapshot,
    CookieJar, CookieRecord, CookieSnapshot, Origin, SameSite,
};
use se2fa_core::time::Timestamp;

fn same_site() -> impl Strategy<Value = SameSite> {
    prop_oneof![
        Just(SameSite::Strict),
        Just(SameSite::Lax),
        Just(SameSite::None),
        Just(SameSite::Unspecified),
    ]
}

fn record() -> impl Strategy<Value = CookieRecord> {
    (
        "[a-z_][a-z0-9_]{0,5}",
        "[ -:<-~]{0,12}",
        prop_oneof![Just("a.example"), Just("b.example"), Just("x.a.example")],
        prop_oneof![Just("/"), Just("/app"), Just("/app/x")],
        any::<bool>(),
        any::<bool>(),
        same_site(),
        proptest::option::of(0i64..4_000_000_000),
        0i64..4_000_000_000,
    )
        .prop_map(|(name, value, domain, path, secure, http_only, same_site, exp, created)| CookieRecord {
            name,
            value: value.trim().to_string(),
            domain: domain.into(),
            path: path.into(),
            secure,
            http_only,
            same_site,
            expires_at: exp.map(Timestamp::from_unix),
            created_at: Timestamp::from_unix(created),
        })
}

fn snapshot(label: &'static str) -> impl Strategy<Value = CookieSnapshot> {
    (proptest::collection::vec(record(), 0..12), 0i64..4_000_000_000).prop_map(move |(recs, t)| {
        let mut seen = BTreeSet::new();
        let recs = recs.into_iter().filter(|r| seen.insert(r.key()));
        CookieSnapshot::new(label, Timestamp::from_unix(t), recs).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn interchange_round_trip(s in snapshot("s")) {
        let bytes = serialize_snapshot(&s);
        let back = parse_snapshot(&bytes).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(serialize_snapshot(&back), bytes);
    }

    #[test]
    fn diff_is_sound(a in snapshot("a"), b in snapshot("b")) {
        let d = diff_snapshots(&a, &b);
        let replayed = d.apply(&a, "b", b.taken_at).unwrap();
        prop_assert_eq!(replayed.cookies(), b.cookies());
        let added: BTreeSet<_> = d.added.iter().map(|r| r.key()).collect();
        let removed: BTreeSet<_> = d.removed.iter().map(|r| r.key()).collect();
        let changed: BTreeSet<_> = d.changed.iter().map(|c| c.after.key()).collect();
        prop_assert!(added.is_disjoint(&removed) && added.is_disjoint(&changed) && removed.is_disjoint(&changed));
        prop_assert_eq!(diff_snapshots(&a, &a).is_empty(), true);
    }

    #[test]
    fn toggle_mask_keeps_exactly_the_mask(s in snapshot("s"), bits in any::<u64>()) {
        let keys: Vec<_> = s.keys().into_iter().collect();
        let enabled: BTreeSet<_> = keys.iter().enumerate().filter(|(i, _)| bits >> (i % 64) & 1 == 1).map(|(_, k)| k.clone()).collect();
        let masked = apply_toggle_mask(&s, &enabled).unwrap();
        prop_assert_eq!(masked.keys(), enabled);
    }

    #[test]
    fn jar_round_trips_through_snapshot(s in snapshot("s")) {
        let now = Timestamp::from_unix(0);
        let mut jar = CookieJar::new();
        jar.import(s.cookies());
        let again = jar.snapshot("s", now);
        let live: Vec<_> = s.cookies().iter().filter(|c| !c.is_expired(now)).cloned().collect();
        prop_assert_eq!(again.cookies(), &live[..]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn set_cookie_parser_never_panics(header in "(?s).{0,80}") {
        let origin = Origin::new("https", "a.example", "/app/page");
        let _ = parse_set_cookie(&header, &origin, Timestamp::from_unix(1_700_000_000));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn structured_set_cookie_fuzz(
        name in "[!-~]{0,6}",
        value in "[ -~]{0,10}",
        attrs in proptest::collection::vec(
            prop_oneof![
                Just("Secure".to_string()),
                Just("HttpOnly".to_string()),
                "Max-Age=-?[0-9]{0,12}",
                "Domain=[a-z.]{0,12}",
                "Path=[/a-z]{0,8}",
                "SameSite=(Lax|Strict|None|bogus)",
                "Expires=[A-Za-z0-9 ,:-]{0,30}",
            ],
            0..6,
        )
    ) {
        let header = format!("{name}={value}; {}", attrs.join("; "));
        let origin = Origin::new("https", "a.example", "/");
        if let Ok(r) = parse_set_cookie(&header, &origin, Timestamp::from_unix(1_700_000_000)) {
            prop_assert!(r.validate().is_ok());
            prop_assert!(r.path.starts_with('/'));
        }
    }
}

#[test]
fn interchange_field_names_are_exact() {
    let r = CookieRecord {
        name: "t".into(),
        value: "v".into(),
        domain: "a.example".into(),
        path: "/".into(),
        secure: true,
        http_only: false,
        same_site: SameSite::Unspecified,
        expires_at: None,
        created_at: Timestamp::from_unix(0),
    };
    let s = CookieSnapshot::new("pre", Timestamp::from_unix(0), [r]).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&serialize_snapshot(&s)).unwrap();
    let top: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(top, BTreeSet::from(["label", "takenAt", "cookies"]));
    let c = v["cookies"][0].as_object().unwrap();
    let keys: BTreeSet<&str> = c.keys().map(String::as_str).collect();
    assert_eq!(
        keys,
        BTreeSet::from(["name", "value", "domain", "path", "secure", "httpOnly", "sameSite", "expiresAt", "createdAt"])
    );
    assert!(c["sameSite"].is_null() && c["expiresAt"].is_null());
    assert_eq!(v["takenAt"], "1970-01-01T00:00:00Z");
}

#[test]
fn malformed_interchange_reports_index() {
    let bad = br#"{"label":"x","takenAt":"1970-01-01T00:00:00Z","cookies":[
        {"name":"a","value":"1","domain":"a.example","path":"/","secure":true,"httpOnly":true,"sameSite":null,"expiresAt":null,"createdAt":"1970-01-01T00:00:00Z"},
        {"name":"","value":"1","domain":"a.example","path":"/","secure":true,"httpOnly":true,"sameSite":null,"expiresAt":null,"createdAt":"1970-01-01T00:00:00Z"}]}"#;
    match parse_snapshot(bad) {
        Err(se2fa_core::cookie::CookieError::FormatError { index, .. }) => assert_eq!(index, Some(1)),
        other => panic!("{other:?}"),
    }
}
