//! Headless client for the bootstrap + manifest protocol.
//!
//! 1. Fetch the descriptor directly from the publisher (trusted channel).
//! 2. Fetch the manifest blob from the CDN and verify it against the
//!    descriptor's key.
//! 3. Fetch and check each entry according to its verify mode, recursing
//!    into nested manifests.
//! 4. Apply each failing entry's policy; a `refresh_key` failure may
//!    re-fetch the descriptor once per load and retry with the new key.
//!
//! Every entry ends up with exactly one verdict. Content reaches the
//! [`ContentSink`] only for `Verified` entries.

mod data_uri;
mod report;
mod sink;

use std::collections::HashSet;
use std::future::Future;
use std::pin::Pin;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use url::Url;

use crate::clock::{Clock, SystemClock};
use crate::format::{
    digest_content, parse_manifest, path_component, verify_blob_with, AssetBlob, FailurePolicy,
    Handler, ManifestEntry, PublicKey, VerifyMode, VerifyModeKind, VerifyOptions,
};
use crate::origin::{BootstrapDescriptor, DescriptorError, WELL_KNOWN_PATH};

pub use data_uri::encode_data_uri;
pub use report::{AssetVerdict, Outcome, Overall, VerifierReport};
pub use sink::{ContentSink, Delivery, NullSink, RecordingSink};

/// What happens after a successful key refresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefreshMode {
    /// Retry only the failed item with the new key, then carry on.
    #[default]
    RetryItem,
    /// Throw away progress and reload the whole site with the new descriptor.
    FullRestart,
}

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub publisher_origin: String,
    pub max_manifest_depth: usize,
    pub clock_skew_allowance: u64,
    pub concurrency_limit: usize,
    pub allow_refresh_key_retry: bool,
    pub refresh_mode: RefreshMode,
    pub request_timeout: Duration,
}

impl VerifierConfig {
    pub fn new(publisher_origin: impl Into<String>) -> Self {
        Self {
            publisher_origin: publisher_origin.into(),
            max_manifest_depth: 8,
            clock_skew_allowance: 0,
            concurrency_limit: 4,
            allow_refresh_key_retry: true,
            refresh_mode: RefreshMode::RetryItem,
            request_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("publisher unavailable: {0}")]
    Unavailable(String),
    #[error("malformed descriptor: {0}")]
    MalformedDescriptor(#[from] DescriptorError),
}

#[derive(Debug, thiserror::Error)]
pub enum VerifierError {
    #[error("max_manifest_depth must be at least 1")]
    ZeroDepth,
    #[error("concurrency_limit must be at least 1")]
    ZeroConcurrency,
    #[error("bad publisher origin {0:?}")]
    BadOrigin(String),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

pub struct Verifier {
    config: VerifierConfig,
    publisher: Url,
    client: reqwest::Client,
    clock: Arc<dyn Clock>,
    sink: Arc<dyn ContentSink>,
}

impl Verifier {
    pub fn new(config: VerifierConfig) -> Result<Self, VerifierError> {
        if config.max_manifest_depth == 0 {
            return Err(VerifierError::ZeroDepth);
        }
        if config.concurrency_limit == 0 {
            return Err(VerifierError::ZeroConcurrency);
        }
        let publisher = Url::parse(&config.publisher_origin)
            .map_err(|_| VerifierError::BadOrigin(config.publisher_origin.clone()))?;
        let client = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .build()?;
        Ok(Self {
            config,
            publisher,
            client,
            clock: Arc::new(SystemClock),
            sink: Arc::new(NullSink),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_sink(mut self, sink: Arc<dyn ContentSink>) -> Self {
        self.sink = sink;
        self
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    /// Descriptor from the well-known resource, falling back to the block
    /// embedded in the landing page. Not signed: the direct connection to
    /// the publisher is what authenticates it.
    pub async fn fetch_bootstrap(&self) -> Result<BootstrapDescriptor, BootstrapError> {
        let well_known = self
            .publisher
            .join(WELL_KNOWN_PATH)
            .expect("static path joins");
        let resp = self
            .client
            .get(well_known)
            .send()
            .await
            .map_err(|e| BootstrapError::Unavailable(e.to_string()))?;
        if resp.status().is_success() {
            let text = resp
                .text()
                .await
                .map_err(|e| BootstrapError::Unavailable(e.to_string()))?;
            return Ok(BootstrapDescriptor::from_json(&text)?);
        }
        if resp.status() != reqwest::StatusCode::NOT_FOUND {
            return Err(BootstrapError::Unavailable(format!(
                "status {}",
                resp.status()
            )));
        }
        let resp = self
            .client
            .get(self.publisher.clone())
            .send()
            .await
            .map_err(|e| BootstrapError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(BootstrapError::Unavailable(format!(
                "status {}",
                resp.status()
            )));
        }
        let html = resp
            .text()
            .await
            .map_err(|e| BootstrapError::Unavailable(e.to_string()))?;
        Ok(BootstrapDescriptor::from_html(&html)?)
    }

    /// Runs the whole load. Never fails: every problem is a verdict.
    pub async fn load_site(&self, descriptor: BootstrapDescriptor) -> VerifierReport {
        let mut descriptor = descriptor;
        let mut retries = 0;
        loop {
            let mut load = Load::new(self, descriptor, retries);
            let flow = load.run().await;
            if let Flow::Restart(next) = flow {
                descriptor = *next;
                retries = load.retries;
                continue;
            }
            return load.into_report(flow);
        }
    }
}

enum Flow {
    Continue,
    Abort,
    Restart(Box<BootstrapDescriptor>),
}

/// One fetchable item, already resolved to an absolute URL.
#[derive(Debug, Clone)]
struct Target {
    url: Url,
    mode: VerifyMode,
    expiry_check: bool,
    handler: Handler,
    depth: usize,
}

impl Target {
    fn verdict(&self, outcome: Outcome) -> AssetVerdict {
        AssetVerdict {
            url: self.url.to_string(),
            outcome,
            verify_mode: self.mode.kind(),
            handler: self.handler,
            bytes_delivered: 0,
            verify_duration_ms: 0.0,
            depth: self.depth,
            policy: None,
            detail: None,
        }
    }
}

struct Accepted {
    content_type: String,
    content: Vec<u8>,
}

struct Checked {
    result: Result<Accepted, (Outcome, String)>,
    duration: Duration,
    key_id: String,
}

/// Mutable state of a single load.
struct Load<'v> {
    verifier: &'v Verifier,
    descriptor: BootstrapDescriptor,
    retries: u32,
    visited: HashSet<String>,
    verdicts: Vec<AssetVerdict>,
}

impl<'v> Load<'v> {
    fn new(verifier: &'v Verifier, descriptor: BootstrapDescriptor, retries: u32) -> Self {
        Self {
            verifier,
            descriptor,
            retries,
            visited: HashSet::new(),
            verdicts: Vec::new(),
        }
    }

    fn into_report(self, flow: Flow) -> VerifierReport {
        let overall = if matches!(flow, Flow::Abort) {
            Overall::Aborted
        } else if self.verdicts.iter().all(|v| v.outcome == Outcome::Verified) {
            Overall::AllVerified
        } else {
            Overall::PartialSkip
        };
        VerifierReport {
            descriptor_key_id: self.descriptor.key_id().to_string(),
            verdicts: self.verdicts,
            overall,
            refresh_key_retries: self.retries,
        }
    }

    async fn run(&mut self) -> Flow {
        let url = match Url::parse(&self.descriptor.manifest_url) {
            Ok(u) => u,
            Err(e) => {
                self.verdicts.push(AssetVerdict {
                    url: self.descriptor.manifest_url.clone(),
                    outcome: Outcome::MalformedPayload,
                    verify_mode: VerifyModeKind::Signature,
                    handler: Handler::Manifest,
                    bytes_delivered: 0,
                    verify_duration_ms: 0.0,
                    depth: 1,
                    policy: Some(FailurePolicy::Abort),
                    detail: Some(format!("bad manifest url: {e}")),
                });
                return Flow::Abort;
            }
        };
        let target = Target {
            url,
            mode: VerifyMode::Signature,
            expiry_check: true,
            handler: Handler::Manifest,
            depth: 1,
        };
        // A failing top-level manifest gets the key-refresh retry, then aborts.
        self.visit_manifest(target, FailurePolicy::RefreshKey).await
    }

    fn visit_manifest<'s>(
        &'s mut self,
        target: Target,
        policy: FailurePolicy,
    ) -> Pin<Box<dyn Future<Output = Flow> + Send + 's>> {
        Box::pin(async move {
            let cfg = &self.verifier.config;
            if target.depth > cfg.max_manifest_depth {
                let mut v = target.verdict(Outcome::DepthExceeded);
                v.detail = Some(format!("limit is {}", cfg.max_manifest_depth));
                return self.fail(v, policy);
            }
            let key = target.url.to_string();
            if !self.visited.insert(key) {
                return self.fail(target.verdict(Outcome::CycleDetected), policy);
            }
            let checked = check(self.verifier, &self.descriptor, &target).await;
            let accepted = match self.settle(&target, checked, policy).await {
                Settled::Accepted(a) => a,
                Settled::Failed(flow) => return flow,
            };
            let manifest = match parse_manifest(&accepted.content) {
                Ok(m) => m,
                Err(e) => {
                    let mut v = target.verdict(Outcome::MalformedPayload);
                    v.detail = Some(e.to_string());
                    // the verdict pushed by settle() was Verified; replace it
                    self.verdicts.pop();
                    return self.fail(v, policy);
                }
            };
            self.process_entries(&target, &manifest.entries).await
        })
    }

    async fn process_entries(&mut self, parent: &Target, entries: &[ManifestEntry]) -> Flow {
        let verifier = self.verifier;
        let descriptor = self.descriptor.clone();
        let limit = verifier.config.concurrency_limit;
        let resolved: Vec<(ManifestEntry, Result<Target, String>)> = entries
            .iter()
            .map(|e| {
                let target = parent
                    .url
                    .join(&e.url)
                    .map_err(|err| format!("bad url {:?}: {err}", e.url))
                    .map(|url| Target {
                        url,
                        mode: e.verify_mode.clone(),
                        expiry_check: e.expiry_check,
                        handler: e.handler,
                        depth: parent.depth + 1,
                    });
                (e.clone(), target)
            })
            .collect();

        let descriptor = Arc::new(descriptor);
        let jobs: Vec<_> = resolved
            .iter()
            .map(|(_, target)| {
                let target = target
                    .as_ref()
                    .ok()
                    .filter(|t| t.handler != Handler::Manifest)
                    .cloned();
                let descriptor = Arc::clone(&descriptor);
                async move {
                    match target {
                        Some(t) => Some(check(verifier, &descriptor, &t).await),
                        None => None,
                    }
                }
            })
            .collect();
        let mut prefetch = stream::iter(jobs).buffered(limit);

        let mut index = 0;
        while let Some(checked) = prefetch.next().await {
            let (entry, target) = &resolved[index];
            index += 1;
            let flow = match target {
                Err(detail) => {
                    let mut v = AssetVerdict {
                        url: entry.url.clone(),
                        outcome: Outcome::MalformedPayload,
                        verify_mode: entry.verify_mode.kind(),
                        handler: entry.handler,
                        bytes_delivered: 0,
                        verify_duration_ms: 0.0,
                        depth: parent.depth + 1,
                        policy: None,
                        detail: None,
                    };
                    v.detail = Some(detail.clone());
                    self.fail(v, entry.on_failure)
                }
                Ok(t) if t.handler == Handler::Manifest => {
                    self.visit_manifest(t.clone(), entry.on_failure).await
                }
                Ok(t) => {
                    let checked = checked.expect("non-manifest entries are prefetched");
                    match self.settle(t, checked, entry.on_failure).await {
                        Settled::Accepted(a) => {
                            self.release(t, a);
                            Flow::Continue
                        }
                        Settled::Failed(flow) => flow,
                    }
                }
            };
            match flow {
                Flow::Continue => {}
                other => {
                    if matches!(other, Flow::Abort) {
                        for (entry, target) in &resolved[index..] {
                            self.verdicts.push(skipped(entry, target, parent.depth + 1));
                        }
                    }
                    return other;
                }
            }
        }
        Flow::Continue
    }

    /// Turns a check result into a verdict, applying the failure policy
    /// (including the one-time key refresh) when it failed.
    async fn settle(
        &mut self,
        target: &Target,
        mut checked: Checked,
        policy: FailurePolicy,
    ) -> Settled {
        // Prefetched under a key that has since been replaced: check again.
        if checked.result.is_err() && checked.key_id != self.descriptor.key_id() {
            checked = check(self.verifier, &self.descriptor, target).await;
        }
        let (outcome, detail) = match checked.result {
            Ok(accepted) => {
                let mut v = target.verdict(Outcome::Verified);
                v.verify_duration_ms = ms(checked.duration);
                v.bytes_delivered = accepted.content.len() as u64;
                self.verdicts.push(v);
                return Settled::Accepted(accepted);
            }
            Err(e) => e,
        };
        let mut verdict = target.verdict(outcome);
        verdict.verify_duration_ms = ms(checked.duration);
        verdict.detail = Some(detail);

        let cfg = &self.verifier.config;
        let may_refresh = policy == FailurePolicy::RefreshKey
            && cfg.allow_refresh_key_retry
            && self.retries == 0
            && !outcome.is_structural();
        if !may_refresh {
            return Settled::Failed(self.fail(verdict, policy));
        }

        self.retries += 1;
        let fresh = match self.verifier.fetch_bootstrap().await {
            Ok(d) => d,
            Err(e) => {
                verdict.detail = Some(format!(
                    "{}; key refresh failed: {e}",
                    verdict.detail.unwrap_or_default()
                ));
                return Settled::Failed(self.fail(verdict, FailurePolicy::Abort));
            }
        };
        if cfg.refresh_mode == RefreshMode::FullRestart {
            return Settled::Failed(Flow::Restart(Box::new(fresh)));
        }
        self.descriptor = fresh;
        let retried = check(self.verifier, &self.descriptor, target).await;
        match retried.result {
            Ok(accepted) => {
                let mut v = target.verdict(Outcome::Verified);
                v.verify_duration_ms = ms(retried.duration);
                v.bytes_delivered = accepted.content.len() as u64;
                v.detail = Some("verified after key refresh".into());
                self.verdicts.push(v);
                Settled::Accepted(accepted)
            }
            Err((outcome, detail)) => {
                let mut v = target.verdict(outcome);
                v.verify_duration_ms = ms(retried.duration);
                v.detail = Some(format!("{detail} (after key refresh)"));
                Settled::Failed(self.fail(v, FailurePolicy::Abort))
            }
        }
    }

    /// Records a failed verdict and decides whether loading continues.
    fn fail(&mut self, mut verdict: AssetVerdict, policy: FailurePolicy) -> Flow {
        let applied = match policy {
            FailurePolicy::Skip => FailurePolicy::Skip,
            // Either the refresh was used up or it cannot help here.
            FailurePolicy::Abort | FailurePolicy::RefreshKey => FailurePolicy::Abort,
        };
        verdict.policy = Some(applied);
        self.verdicts.push(verdict);
        match applied {
            FailurePolicy::Skip => Flow::Continue,
            _ => Flow::Abort,
        }
    }

    fn release(&self, target: &Target, accepted: Accepted) {
        let data_uri = (target.handler == Handler::ImageDataUri)
            .then(|| encode_data_uri(&accepted.content, &accepted.content_type));
        self.verifier.sink.deliver(Delivery {
            url: target.url.to_string(),
            handler: target.handler,
            content_type: accepted.content_type,
            content: accepted.content,
            data_uri,
        });
    }
}

enum Settled {
    Accepted(Accepted),
    Failed(Flow),
}

fn skipped(entry: &ManifestEntry, target: &Result<Target, String>, depth: usize) -> AssetVerdict {
    let url = match target {
        Ok(t) => t.url.to_string(),
        Err(_) => entry.url.clone(),
    };
    AssetVerdict {
        url,
        outcome: Outcome::SkippedByPolicy,
        verify_mode: entry.verify_mode.kind(),
        handler: entry.handler,
        bytes_delivered: 0,
        verify_duration_ms: 0.0,
        depth,
        policy: None,
        detail: Some("not processed: load aborted".into()),
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

fn same_origin(a: &Url, b: &str) -> bool {
    Url::parse(b).is_ok_and(|b| a.origin() == b.origin())
}

/// Fetches one target and authenticates it under `descriptor`.
async fn check(verifier: &Verifier, descriptor: &BootstrapDescriptor, target: &Target) -> Checked {
    let key_id = descriptor.key_id().to_string();
    let fail = |outcome, detail: String| Checked {
        result: Err((outcome, detail)),
        duration: Duration::ZERO,
        key_id: key_id.clone(),
    };

    if target.mode == VerifyMode::Channel
        && !same_origin(&target.url, &verifier.config.publisher_origin)
    {
        return fail(
            Outcome::MalformedPayload,
            "channel entries must be on the publisher origin".into(),
        );
    }

    let (body, header_type) = match fetch(verifier, &target.url).await {
        Ok(r) => r,
        Err(detail) => return fail(Outcome::Unavailable, detail),
    };

    let started = Instant::now();
    let result = match &target.mode {
        VerifyMode::Signature => verify_signed(&body, &descriptor.public_key, target, verifier),
        VerifyMode::Hash(expected) => {
            // Publisher-hosted files arrive wrapped in a blob; third-party
            // ones arrive as they are.
            let unwrapped = if same_origin(&target.url, &descriptor.cdn_origin) {
                AssetBlob::decode(&body)
                    .and_then(|b| b.unverified_payload())
                    .map(|p| (p.content, p.content_type))
                    .map_err(|e| (Outcome::MalformedPayload, e.to_string()))
            } else {
                Ok((body, header_type))
            };
            unwrapped.and_then(|(content, content_type)| {
                if digest_content(&content) == *expected {
                    Ok(Accepted {
                        content_type,
                        content,
                    })
                } else {
                    Err((
                        Outcome::HashMismatch,
                        "content digest differs from manifest".into(),
                    ))
                }
            })
        }
        VerifyMode::Channel => Ok(Accepted {
            content_type: header_type,
            content: body,
        }),
    };
    Checked {
        result,
        duration: started.elapsed(),
        key_id,
    }
}

fn verify_signed(
    body: &[u8],
    key: &PublicKey,
    target: &Target,
    verifier: &Verifier,
) -> Result<Accepted, (Outcome, String)> {
    let blob = AssetBlob::decode(body).map_err(|e| (Outcome::MalformedPayload, e.to_string()))?;
    let opts = VerifyOptions {
        now: verifier.clock.now(),
        skew: verifier.config.clock_skew_allowance,
        check_expiry: target.expiry_check,
    };
    let expected = path_component(target.url.as_str()).unwrap_or_default();
    let payload = verify_blob_with(&blob, key, &expected, &opts)
        .map_err(|e| (Outcome::from(&e), e.to_string()))?;
    Ok(Accepted {
        content_type: payload.content_type,
        content: payload.content,
    })
}

async fn fetch(verifier: &Verifier, url: &Url) -> Result<(Vec<u8>, String), String> {
    let resp = verifier
        .client
        .get(url.clone())
        .send()
        .await
        .map_err(|e| format!("fetch failed: {e}"))?;
    if !resp.status().is_success() {
        return Err(format!("status {}", resp.status()));
    }
    let content_type = resp
        .headers()
        .get(reqwest::header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("application/octet-stream")
        .to_string();
    let body = resp
        .bytes()
        .await
        .map_err(|e| format!("read failed: {e}"))?;
    Ok((body.to_vec(), content_type))
}
