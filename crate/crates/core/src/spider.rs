//! Keyword-scored 2FA support detection over search-result documents, and
//! comparison of the resulting verdicts with a directory baseline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::http::{HttpRequest, Method, Transport, TransportError};

pub const DEFAULT_THRESHOLD: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum SpiderError {
    #[error("empty domain")]
    EmptyDomain,
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("search endpoint returned {0}")]
    Engine(String),
}

/// One search result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpiderDoc {
    pub domain: String,
    #[serde(default)]
    pub source_engine: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
    #[serde(default)]
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpiderVerdict {
    pub domain: String,
    pub score: u32,
    pub supports2fa: bool,
    pub matched_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetComparison {
    pub only_baseline: usize,
    pub only_spider: usize,
    pub intersection: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: u32,
}

/// Term list, weights and threshold. Loaded from JSON when customized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpiderConfig {
    pub terms: Vec<WeightedTerm>,
    pub domain_weight: u32,
    pub threshold: u32,
}

impl Default for SpiderConfig {
    fn default() -> Self {
        let terms = ["2fa", "mfa", "two-factor", "two factor", "multi-factor", "two-step"]
            .into_iter()
            .map(|t| WeightedTerm {
                term: t.to_string(),
                weight: 2,
            })
            .collect();
        SpiderConfig {
            terms,
            domain_weight: 1,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

pub fn build_query(domain: &str) -> Result<String, SpiderError> {
    let domain = domain.trim();
    if domain.is_empty() {
        return Err(SpiderError::EmptyDomain);
    }
    Ok(format!("2FA OR MFA website {domain}"))
}

fn references_domain(doc: &SpiderDoc, domain: &str) -> bool {
    let d = domain.to_lowercase();
    if d.is_empty() {
        return false;
    }
    let host_match = Url::parse(&doc.url)
        .ok()
        .and_then(|u| u.host_str().map(str::to_lowercase))
        .is_some_and(|h| h == d || h.ends_with(&format!(".{d}")));
    host_match
        || doc.url.to_lowercase().contains(&d)
        || doc.title.to_lowercase().contains(&d)
        || doc.snippet.to_lowercase().contains(&d)
}

/// Score and matched terms for one document under `config`.
pub fn score_with(config: &SpiderConfig, doc: &SpiderDoc, domain: &str) -> (u32, Vec<String>) {
    if !references_domain(doc, domain) {
        return (0, Vec::new());
    }
    let text = format!("{}\n{}", doc.title, doc.snippet).to_lowercase();
    let mut score = config.domain_weight;
    let mut matched = Vec::new();
    for t in &config.terms {
        if text.contains(&t.term.to_lowercase()) {
            score += t.weight;
            matched.push(t.term.clone());
        }
    }
    (score, matched)
}

pub fn score_document(doc: &SpiderDoc, domain: &str) -> u32 {
    score_with(&SpiderConfig::default(), doc, domain).0
}

/// Best document score for one domain. `docs` must share the domain.
pub fn verdict_with(config: &SpiderConfig, domain: &str, docs: &[SpiderDoc], threshold: u32) -> SpiderVerdict {
    let best = docs
        .iter()
        .map(|d| score_with(config, d, domain))
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.len().cmp(&a.1.len())))
        .unwrap_or((0, Vec::new()));
    SpiderVerdict {
        domain: domain.to_string(),
        score: best.0,
        supports2fa: best.0 >= threshold,
        matched_terms: best.1,
    }
}

pub fn verdict_for_domain(docs: &[SpiderDoc], threshold: u32) -> SpiderVerdict {
    let domain = docs.first().map(|d| d.domain.as_str()).unwrap_or("");
    verdict_with(&SpiderConfig::default(), domain, docs, threshold)
}

/// Verdicts for every domain in `domains`, in that order. Domains without
/// documents get a zero score.
pub fn verdicts_for_corpus(
    config: &SpiderConfig,
    corpus: &[SpiderDoc],
    domains: &[String],
    threshold: u32,
) -> Vec<SpiderVerdict> {
    let mut by_domain: std::collections::HashMap<&str, Vec<SpiderDoc>> = Default::default();
    for d in corpus {
        by_domain.entry(d.domain.as_str()).or_default().push(d.clone());
    }
    domains
        .iter()
        .map(|dom| verdict_with(config, dom, by_domain.get(dom.as_str()).map_or(&[][..], |v| v), threshold))
        .collect()
}

pub fn compare_with_baseline(verdicts: &[SpiderVerdict], baseline: &BTreeSet<String>) -> SetComparison {
    let spider: BTreeSet<&str> = verdicts
        .iter()
        .filter(|v| v.supports2fa)
        .map(|v| v.domain.as_str())
        .collect();
    let intersection = baseline.iter().filter(|d| spider.contains(d.as_str())).count();
    SetComparison {
        only_baseline: baseline.len() - intersection,
        only_spider: spider.len() - intersection,
        intersection,
        accuracy: if baseline.is_empty() {
            0.0
        } else {
            intersection as f64 / baseline.len() as f64
        },
    }
}

/// Parses JSONL, skipping blank lines.
pub fn parse_corpus(text: &str) -> Result<Vec<SpiderDoc>, SpiderError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: SpiderDoc = serde_json::from_str(line).map_err(|e| SpiderError::Corpus {
            line: i + 1,
            message: e.to_string(),
        })?;
        if doc.domain.trim().is_empty() {
            return Err(SpiderError::Corpus {
                line: i + 1,
                message: "empty domain".into(),
            });
        }
        out.push(doc);
    }
    Ok(out)
}

/// One domain per line; `#` starts a comment.
pub fn parse_domain_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A live search backend.
pub trait SearchEngine {
    fn name(&self) -> &str;
    fn search(&self, domain: &str) -> Result<Vec<SpiderDoc>, SpiderError>;
}

/// Adapter for a self-hosted SearXNG instance's JSON API.
#[derive(Debug)]
pub struct SearxngEngine<T: Transport> {
    pub endpoint: Url,
    pub transport: T,
}

#[derive(Deserialize)]
struct SearxngResponse {
    #[serde(default)]
    results: Vec<SearxngResult>,
}

#[derive(Deserialize)]
struct SearxngResult {
    #[serde(default)]
    title: String,
    #[serde(default)]
    content: String,
    #[serde(default)]
    url: String,
    #[serde(default)]
    engine: String,
}

impl<T: Transport> SearchEngine for SearxngEngine<T> {
    fn name(&self) -> &str {
        "searxng"
    }

    fn search(&self, domain: &str) -> Result<Vec<SpiderDoc>, SpiderError> {
        let query = build_query(domain)?;
        let mut url = self.endpoint.join("search").map_err(|e| SpiderError::Engine(e.to_string()))?;
        url.query_pairs_mut()
            .append_pair("q", &query)
            .append_pair("format", "json");
        let resp = self.transport.send(&HttpRequest::new(Method::Get, url))?;
        if resp.status != 200 {
            return Err(SpiderError::Engine(resp.status.to_string()));
        }
        let parsed: SearxngResponse =
            serde_json::from_slice(&resp.body).map_err(|e| SpiderError::Engine(e.to_string()))?;
        Ok(parsed
            .results
            .into_iter()
            .map(|r| SpiderDoc {
                domain: domain.to_string(),
                source_engine: r.engine,
                title: r.title,
                snippet: r.content,
                url: r.url,
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(domain: &str, title: &str, snippet: &str, url: &str) -> SpiderDoc {
        SpiderDoc {
            domain: domain.into(),
            source_engine: "test".into(),
            title: title.into(),
            snippet: snippet.into(),
            url: url.into(),
        }
    }

    #[test]
    fn query_shape() {
        assert_eq!(build_query("example.com").unwrap(), "2FA OR MFA website example.com");
        assert_eq!(build_query("例え.jp").unwrap(), "2FA OR MFA website 例え.jp");
        assert!(build_query("").is_err());
    }

    #[test]
    fn scoring_examples() {
        let d = doc("example.com", "How to enable 2FA on example.com", "", "");
        assert_eq!(score_document(&d, "example.com"), 3);
        let d = doc("example.com", "Soup", "our cooking tips at example.com", "");
        assert_eq!(score_document(&d, "example.com"), 1);
        let d = doc("example.com", "MFA two-factor guide", "", "https://other.org/x");
        assert_eq!(score_document(&d, "example.com"), 0);
        let d = doc("example.com", "2FA 2fa MFA", "", "https://help.example.com/");
        assert_eq!(score_document(&d, "example.com"), 5);
    }

    #[test]
    fn verdict_threshold() {
        let docs = vec![doc("example.com", "2FA", "", "https://example.com")];
        assert!(verdict_for_domain(&docs, 3).supports2fa);
        assert!(!verdict_for_domain(&docs, 100).supports2fa);
        let v = verdict_for_domain(&[], 3);
        assert_eq!((v.score, v.supports2fa), (0, false));
    }

    #[test]
    fn comparison_edges() {
        let set: BTreeSet<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let v = |d: &str, s: bool| SpiderVerdict {
            domain: d.into(),
            score: 0,
            supports2fa: s,
            matched_terms: vec![],
        };
        let same = compare_with_baseline(&[v("a", true), v("b", true)], &set);
        assert_eq!(same.accuracy, 1.0);
        let disjoint = compare_with_baseline(&[v("c", true), v("a", false)], &set);
        assert_eq!((disjoint.accuracy, disjoint.only_spider, disjoint.only_baseline), (0.0, 1, 2));
    }
}
