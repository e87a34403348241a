use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use url::Url;

use se2fa_core::attack::audit_snapshot;
use se2fa_core::cookie::parse_snapshot;
use se2fa_core::evaluate::{evaluate_target, EvaluateOptions, EvaluationVerdict};
use se2fa_core::flow::{Account, Target, TargetProfile};
use se2fa_core::http::HttpTransport;
use se2fa_core::report::{
    aggregate_stats, load_study_fixture, recommend_mitigations, render_report, ReportFormat, SiteRecord,
};
use se2fa_core::spider::{
    compare_with_baseline, parse_corpus, parse_domain_list, verdicts_for_corpus, SearchEngine, SearxngEngine,
    SpiderConfig, SpiderDoc,
};
use se2fa_core::testbed::{serve_matrix, Matrix, ServeOptions, TargetConfig, TlsIdentity};
use se2fa_core::time::SystemClock;

#[derive(Parser)]
#[command(name = "se2fa", version, about = "Evaluate 2FA \"remember this device\" implementations on test targets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve mock 2FA targets from a matrix or single-target config.
    Testbed {
        #[arg(long)]
        config: PathBuf,
        /// First port; targets use consecutive ports. 0 picks free ports.
        #[arg(long, default_value_t = 8440)]
        base_port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Enable the ground-truth and reset hooks.
        #[arg(long)]
        expose_truth: bool,
        /// Serve HTTPS with a throwaway self-signed certificate.
        #[arg(long)]
        tls: bool,
        /// Where to write the PEM certificate in TLS mode.
        #[arg(long, requires = "tls")]
        cert_out: Option<PathBuf>,
    },
    /// Run the full evaluation against one target.
    Evaluate {
        /// Base URL of the target.
        #[arg(long)]
        target: Url,
        /// Victim account: {"username","password","totpSeed"}.
        #[arg(long)]
        creds: PathBuf,
        /// Second account; enables the value-scheme and cross-account tests.
        #[arg(long)]
        creds2: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Endpoint paths and challenge patterns for non-testbed targets.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Permit targets outside loopback and private ranges. Only for
        /// systems you are authorized to test.
        #[arg(long)]
        allow_remote: bool,
        #[arg(long)]
        no_reset: bool,
        /// PEM certificate to trust, e.g. from `testbed --tls --cert-out`.
        #[arg(long)]
        ca_cert: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        timeout_secs: u64,
    },
    /// Static attribute and value audit of an exported cookie snapshot.
    Audit {
        #[arg(long)]
        cookies: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// The site also checks fingerprint or IP.
        #[arg(long)]
        not_cookie_only: bool,
    },
    /// Score search results per domain and compare with a directory list.
    Spider {
        /// JSONL, one document per line. Omit to query --searxng instead.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        domains: PathBuf,
        #[arg(long)]
        threshold: Option<u32>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Term list and weights (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Self-hosted metasearch endpoint for live mode.
        #[arg(long)]
        searxng: Option<Url>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render per-site tables, statistics and recommendations.
    Report {
        /// A verdict file or a JSON array of verdicts.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        #[arg(long)]
        sites: Option<PathBuf>,
        /// Directory with sites.json and the table fixtures.
        #[arg(long)]
        study_fixture: Option<PathBuf>,
        #[arg(long, default_value = "md")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        mitigations: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_matrix(path: &Path) -> Result<Matrix> {
    let value: serde_json::Value = read_json(path)?;
    if value.get("targets").is_some() {
        Ok(serde_json::from_value(value)?)
    } else {
        let single: TargetConfig = serde_json::from_value(value)?;
        Ok(Matrix { targets: vec![single] })
    }
}

fn testbed(
    config: &Path,
    base_port: u16,
    host: IpAddr,
    expose_truth: bool,
    tls: bool,
    cert_out: Option<&Path>,
) -> Result<()> {
    let matrix = load_matrix(config)?;
    let tls = if tls {
        let identity = TlsIdentity::self_signed(&[host.to_string(), "localhost".into()])?;
        match cert_out {
            Some(p) => fs::write(p, identity.cert_pem()).with_context(|| format!("writing {}", p.display()))?,
            None => eprint!("{}", identity.cert_pem()),
        }
        Some(identity)
    } else {
        None
    };
    let opts = ServeOptions {
        host,
        expose_truth,
        tls,
        ..ServeOptions::default()
    };
    let handle = serve_matrix(&matrix, base_port, &opts)?;
    let mut stdout = std::io::stdout().lock();
    for (id, addr) in handle.endpoints() {
        writeln!(stdout, "{id} {}://{addr}/", handle.scheme())?;
    }
    writeln!(stdout, "ready")?;
    stdout.flush()?;
    drop(stdout);
    handle.wait();
    Ok(())
}

fn is_local(url: &Url) -> bool {
    match url.host() {
        Some(url::Host::Domain(d)) => d == "localhost" || d.ends_with(".localhost") || d.ends_with(".test"),
        Some(url::Host::Ipv4(ip)) => ip.is_loopback() || ip.is_private() || ip.is_link_local(),
        Some(url::Host::Ipv6(ip)) => ip.is_loopback(),
        None => false,
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    target: Url,
    creds: &Path,
    creds2: Option<&Path>,
    out: &Path,
    profile: Option<&Path>,
    allow_remote: bool,
    no_reset: bool,
    ca_cert: Option<&Path>,
    timeout_secs: u64,
) -> Result<()> {
    if !is_local(&target) && !allow_remote {
        bail!("{target} is not a local test target; pass --allow-remote only for systems you are authorized to test");
    }
    let victim: Account = read_json(creds)?;
    let attacker: Option<Account> = creds2.map(read_json).transpose()?;
    let roots = match ca_cert {
        Some(p) => vec![fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?],
        None => Vec::new(),
    };
    let roots: Vec<&str> = roots.iter().map(String::as_str).collect();
    let transport = HttpTransport::with_roots(Duration::from_secs(timeout_secs), &roots)?;
    let mut t = Target::new(target, Arc::new(transport));
    if let Some(p) = profile {
        let profile: TargetProfile = read_json(p)?;
        t = t.with_profile(profile);
    }
    let opts = EvaluateOptions {
        reset_between_trials: !no_reset,
        ..EvaluateOptions::default()
    };
    let verdict = evaluate_target(&t, &victim, attacker.as_ref(), &SystemClock, &opts)?;
    write_json(out, &verdict)?;
    let attacks: Vec<String> = verdict.attacks.iter().map(|a| a.to_string()).collect();
    eprintln!(
        "{}: remember={} trust={:?} attacks=[{}]",
        verdict.target,
        verdict.remember_device,
        verdict.trust.names(),
        attacks.join(", ")
    );
    Ok(())
}

fn audit(cookies: &Path, out: &Path, not_cookie_only: bool) -> Result<()> {
    let bytes = fs::read(cookies).with_context(|| format!("reading {}", cookies.display()))?;
    let snapshot = parse_snapshot(&bytes)?;
    let report = audit_snapshot(&snapshot, !not_cookie_only)?;
    write_json(out, &report)
}

#[derive(serde::Serialize)]
#[serde(rename_all = "camelCase")]
struct SpiderOutput {
    threshold: u32,
    verdicts: Vec<se2fa_core::spider::SpiderVerdict>,
    comparison: Option<se2fa_core::spider::SetComparison>,
}

#[allow(clippy::too_many_arguments)]
fn spider(
    corpus: Option<&Path>,
    domains: &Path,
    threshold: Option<u32>,
    baseline: Option<&Path>,
    config: Option<&Path>,
    searxng: Option<Url>,
    out: &Path,
) -> Result<()> {
    let config: SpiderConfig = match config {
        Some(p) => read_json(p)?,
        None => SpiderConfig::default(),
    };
    let threshold = threshold.unwrap_or(config.threshold);
    let domains = parse_domain_list(&fs::read_to_string(domains)?);
    let docs: Vec<SpiderDoc> = match (corpus, searxng) {
        (Some(p), _) => parse_corpus(&fs::read_to_string(p)?)?,
        (None, Some(endpoint)) => {
            let engine = SearxngEngine {
                endpoint,
                transport: HttpTransport::new(Duration::from_secs(20))?,
            };
            let mut all = Vec::new();
            for d in &domains {
                all.extend(engine.search(d)?);
                std::thread::sleep(Duration::from_millis(500));
            }
            all
        }
        (None, None) => bail!("either --corpus or --searxng is required"),
    };
    let verdicts = verdicts_for_corpus(&config, &docs, &domains, threshold);
    let comparison = match baseline {
        Some(p) => {
            let set: BTreeSet<String> = parse_domain_list(&fs::read_to_string(p)?).into_iter().collect();
            Some(compare_with_baseline(&verdicts, &set))
        }
        None => None,
    };
    if let Some(c) = &comparison {
        eprintln!(
            "only-baseline={} only-spider={} intersection={} accuracy={:.3}",
            c.only_baseline, c.only_spider, c.intersection, c.accuracy
        );
    }
    write_json(out, &SpiderOutput {
        threshold,
        verdicts,
        comparison,
    })
}

fn load_verdicts(path: &Path) -> Result<Vec<EvaluationVerdict>> {
    let value: serde_json::Value = read_json(path)?;
    Ok(if value.is_array() {
        serde_json::from_value(value)?
    } else {
        vec![serde_json::from_value(value)?]
    })
}

fn verdict_host(v: &EvaluationVerdict) -> String {
    Url::parse(&v.target)
        .ok()
        .and_then(|u| u.host_str().map(str::to_string))
        .unwrap_or_else(|| v.target.clone())
}

#[allow(clippy::too_many_arguments)]
fn report(
    verdicts: Option<&Path>,
    sites: Option<&Path>,
    study_fixture: Option<&Path>,
    format: &str,
    out: &Path,
    stats: Option<&Path>,
    mitigations: Option<&Path>,
) -> Result<()> {
    let format: ReportFormat = format.parse()?;
    let mut records: Vec<SiteRecord> = match (study_fixture, sites) {
        (Some(dir), _) => load_study_fixture(dir)?.sites,
        (None, Some(p)) => read_json(p)?,
        (None, None) => Vec::new(),
    };
    if let Some(p) = verdicts {
        for v in load_verdicts(p)? {
            let host = verdict_host(&v);
            match records.iter_mut().find(|s| s.domain == host || s.domain == v.target) {
                Some(site) => site.verdict = Some(v),
                None => records.push(SiteRecord {
                    domain: host,
                    name: None,
                    rank: u32::MAX,
                    registrable: true,
                    requires_third_party: false,
                    supports2fa: true,
                    can_enable2fa: true,
                    has_remember_device: v.remember_device,
                    cookie_only: v.remember_device.then_some(v.audit.cookie_only),
                    methods: BTreeSet::new(),
                    table_row: None,
                    verdict: Some(v),
                }),
            }
        }
    }
    fs::write(out, render_report(&records, format)?).with_context(|| format!("writing {}", out.display()))?;
    if let Some(p) = stats {
        write_json(p, &aggregate_stats(&records))?;
    }
    if let Some(p) = mitigations {
        let advice: Vec<serde_json::Value> = records
            .iter()
            .filter_map(|s| {
                let v = s.verdict.as_ref()?;
                Some(serde_json::json!({
                    "site": s.label(),
                    "recommendations": recommend_mitigations(v),
                }))
            })
            .collect();
        write_json(p, &advice)?;
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Testbed {
            config,
            base_port,
            host,
            expose_truth,
            tls,
            cert_out,
        } => testbed(&config, base_port, host, expose_truth, tls, cert_out.as_deref()),
        Command::Evaluate {
            target,
            creds,
            creds2,
            out,
            profile,
            allow_remote,
            no_reset,
            ca_cert,
            timeout_secs,
        } => evaluate(
            target,
            &creds,
            creds2.as_deref(),
            &out,
            profile.as_deref(),
            allow_remote,
            no_reset,
            ca_cert.as_deref(),
            timeout_secs,
        ),
        Command::Audit {
            cookies,
            out,
            not_cookie_only,
        } => audit(&cookies, &out, not_cookie_only),
        Command::Spider {
            corpus,
            domains,
            threshold,
            baseline,
            config,
            searxng,
            out,
        } => spider(
            corpus.as_deref(),
            &domains,
            threshold,
            baseline.as_deref(),
            config.as_deref(),
            searxng,
            &out,
        ),
        Command::Report {
            verdicts,
            sites,
            study_fixture,
            format,
            out,
            stats,
            mitigations,
        } => report(
            verdicts.as_deref(),
            sites.as_deref(),
            study_fixture.as_deref(),
            &format,
            &out,
            stats.as_deref(),
            mitigations.as_deref(),
        ),
    }
}
