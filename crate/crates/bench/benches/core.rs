use std::hint::black_box;
use std::path::PathBuf;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use se2fa_core::cookie::{diff_snapshots, parse_set_cookie, parse_snapshot, serialize_snapshot, CookieRecord, CookieSnapshot, Origin, SameSite};
use se2fa_core::evaluate::{evaluate_target, EvaluateOptions};
use se2fa_core::flow::Account;
use se2fa_core::report::{aggregate_stats, load_study_fixture};
use se2fa_core::spider::{parse_corpus, parse_domain_list, verdicts_for_corpus, SpiderConfig};
use se2fa_core::testbed::{in_process_target, Matrix, TestbedService};
use se2fa_core::time::{ManualClock, Timestamp};
use se2fa_core::totp::totp_code;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn snapshot(n: usize, label: &str) -> CookieSnapshot {
    let recs = (0..n).map(|i| CookieRecord {
        name: format!("c{i}"),
        value: format!("{:032x}", i * 7919),
        domain: "a.example".into(),
        path: "/".into(),
        secure: i % 2 == 0,
        http_only: i % 3 == 0,
        same_site: SameSite::Lax,
        expires_at: Some(Timestamp::from_unix(1_800_000_000)),
        created_at: Timestamp::from_unix(1_700_000_000),
    });
    CookieSnapshot::new(label, Timestamp::from_unix(1_700_000_000), recs).unwrap()
}

fn cookies(c: &mut Criterion) {
    let origin = Origin::new("https", "a.example", "/app/page");
    let now = Timestamp::from_unix(1_700_000_000);
    let header = "rd_trust=4f2a9c; Domain=a.example; Path=/; Max-Age=2592000; Secure; HttpOnly; SameSite=Lax";
    c.bench_function("parse_set_cookie", |b| b.iter(|| parse_set_cookie(black_box(header), &origin, now)));

    let a = snapshot(40, "pre");
    let bytes = serialize_snapshot(&a);
    c.bench_function("snapshot_round_trip_40", |b| {
        b.iter(|| parse_snapshot(black_box(&bytes)).unwrap())
    });
    let post = snapshot(45, "post");
    c.bench_function("diff_snapshots_40_45", |b| b.iter(|| diff_snapshots(black_box(&a), black_box(&post))));
}

fn totp(c: &mut Criterion) {
    let seed = b"12345678901234567890";
    c.bench_function("totp_code", |b| {
        b.iter(|| totp_code(black_box(seed), Timestamp::from_unix(1_111_111_109), 30, 6).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let matrix: Matrix = serde_json::from_str(&std::fs::read_to_string(fixtures().join("matrix/matrix.json")).unwrap()).unwrap();
    let read = |f: &str| -> Account {
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("matrix/creds").join(f)).unwrap()).unwrap()
    };
    let (victim, attacker) = (read("victim.json"), read("attacker.json"));
    let cfg = matrix.targets.iter().find(|t| t.id == "co-multi").unwrap().clone();
    c.bench_function("evaluate_in_process_multi_cookie", |b| {
        b.iter(|| {
            let clock = Arc::new(ManualClock::at(Timestamp::from_unix(1_700_000_000)));
            let svc = Arc::new(TestbedService::new(cfg.clone(), clock.clone(), true).unwrap());
            let target = in_process_target(svc);
            evaluate_target(&target, &victim, Some(&attacker), clock.as_ref(), &EvaluateOptions::default()).unwrap()
        })
    });
}

fn reporting(c: &mut Criterion) {
    let fixture = load_study_fixture(&fixtures().join("study")).unwrap();
    c.bench_function("aggregate_stats_910", |b| b.iter(|| aggregate_stats(black_box(&fixture.sites))));

    let dir = fixtures().join("study/table1");
    let corpus = parse_corpus(&std::fs::read_to_string(dir.join("corpus.jsonl")).unwrap()).unwrap();
    let domains = parse_domain_list(&std::fs::read_to_string(dir.join("domains.txt")).unwrap());
    let config = SpiderConfig::default();
    c.bench_function("spider_directory_corpus", |b| {
        b.iter(|| verdicts_for_corpus(&config, black_box(&corpus), &domains, 3))
    });
}

criterion_group!(benches, cookies, totp, evaluation, reporting);
criterion_main!(benches);
