#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use stickler::build::{BuildConfig, PathRule, RuleMode};
use stickler::deploy::{DeployOptions, Deployment};
use stickler::format::{FailurePolicy, Handler};
use stickler::verifier::{RecordingSink, Verifier};
use stickler::{ManualClock, SigningKeyPair};

pub const PUBLISHER_KEY: &str = include_str!("../fixtures/keys/publisher.key");
pub const PUBLISHER_PUB: &str = include_str!("../fixtures/keys/publisher.pub");
pub const ROTATED_KEY: &str = include_str!("../fixtures/keys/rotated.key");
pub const ROTATED_PUB: &str = include_str!("../fixtures/keys/rotated.pub");

pub const BUILD_TIME: u64 = 1_700_000_000;
pub const TTL: u64 = 3600;

pub fn publisher_key() -> SigningKeyPair {
    SigningKeyPair::from_pkcs8_pem(PUBLISHER_KEY).unwrap()
}

pub fn rotated_key() -> SigningKeyPair {
    SigningKeyPair::from_pkcs8_pem(ROTATED_KEY).unwrap()
}

/// The six-asset site: script, style, image, raw text, and a nested
/// directory, one file per handler plus a second script.
pub const SITE: &[(&str, &[u8])] = &[
    ("app.js", b"window.app = 1;"),
    ("css/site.css", b"body { color: #222 }"),
    ("img/logo.png", b"\x89PNG\r\n\x1a\nfake-logo-bytes"),
    ("lib/util.js", b"export const util = 2;"),
    ("data/info.txt", b"plain text asset"),
    ("img/photo.jpg", b"\xff\xd8\xff\xe0fake-jpeg-bytes"),
];

pub fn write_site(root: &Path, files: &[(&str, &[u8])]) {
    for (rel, content) in files {
        let path = root.join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, content).unwrap();
    }
}

/// Rules giving every asset a handler by type, all signature mode.
pub fn site_rules(policy: FailurePolicy) -> Vec<PathRule> {
    vec![
        PathRule::new("**/*.js", RuleMode::Signature, Handler::Script).with_policy(policy),
        PathRule::new("**/*.css", RuleMode::Signature, Handler::Style).with_policy(policy),
        PathRule::new("img/**", RuleMode::Signature, Handler::ImageDataUri).with_policy(policy),
        PathRule::new("**", RuleMode::Signature, Handler::Raw).with_policy(policy),
    ]
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub deployment: Deployment,
    pub clock: Arc<ManualClock>,
}

impl Fixture {
    pub fn verifier(&self) -> (Verifier, Arc<RecordingSink>) {
        let sink = Arc::new(RecordingSink::new());
        let v = Verifier::new(self.deployment.verifier_config())
            .unwrap()
            .with_clock(self.clock.clone())
            .with_sink(sink.clone());
        (v, sink)
    }
}

pub async fn deploy(
    files: &[(&str, &[u8])],
    rules: Vec<PathRule>,
    options: DeployOptions,
) -> Fixture {
    deploy_with(files, |c| c.rules = rules, options).await
}

pub async fn deploy_with(
    files: &[(&str, &[u8])],
    edit: impl FnOnce(&mut BuildConfig),
    mut options: DeployOptions,
) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let site = dir.path().join("site");
    let out = dir.path().join("out");
    write_site(&site, files);
    let mut config = BuildConfig::new(&site, &out, "http://cdn.invalid", "http://pub.invalid");
    config.default_ttl = TTL;
    edit(&mut config);
    let clock = Arc::new(ManualClock::new(BUILD_TIME));
    options.clock = clock.clone();
    let deployment = Deployment::start(config, &publisher_key(), BUILD_TIME, options)
        .await
        .unwrap();
    Fixture {
        dir,
        deployment,
        clock,
    }
}

pub const GOLDEN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden");

/// The payloads behind the frozen golden blobs, signed with the
/// publisher fixture key: edge sizes, every handler's media type,
/// non-ASCII paths, and both the never-expiring and far-future expiries.
pub fn golden_cases() -> Vec<(&'static str, stickler::format::AssetPayload)> {
    use stickler::format::AssetPayload;
    let pattern = |len: usize| (0..len).map(|i| (i * 31 + 7) as u8).collect::<Vec<u8>>();
    vec![
        (
            "empty",
            AssetPayload::new("/empty.txt", 0, "text/plain", Vec::new()),
        ),
        (
            "one-byte",
            AssetPayload::new("/a", 1, "application/octet-stream", vec![0x00]),
        ),
        (
            "script",
            AssetPayload::new(
                "/app.js",
                BUILD_TIME + TTL,
                "text/javascript",
                &b"window.app = 1;"[..],
            ),
        ),
        (
            "style",
            AssetPayload::new(
                "/css/site.css",
                BUILD_TIME,
                "text/css",
                &b"body { color: #222 }"[..],
            ),
        ),
        (
            "image",
            AssetPayload::new("/img/logo.png", 0, "image/png", pattern(4096)),
        ),
        (
            "manifest",
            AssetPayload::new(
                "/manifest.json",
                BUILD_TIME + 60,
                "application/stickler-manifest+json",
                &br#"{"entries":[],"version":1}"#[..],
            ),
        ),
        (
            "unicode-path",
            AssetPayload::new(
                "/d\u{e9}j\u{e0}/\u{1f4a1}.txt",
                42,
                "text/plain; charset=utf-8",
                "\u{2713}".as_bytes(),
            ),
        ),
        (
            "max-expiry",
            AssetPayload::new(
                "/forever.bin",
                u64::MAX,
                "application/octet-stream",
                pattern(255),
            ),
        ),
        (
            "large",
            AssetPayload::new(
                "/data/large.bin",
                BUILD_TIME + 86_400,
                "application/octet-stream",
                pattern(256 * 1024),
            ),
        ),
        (
            "deep-path",
            AssetPayload::new(
                "/a/b/c/d/e/f/g/h/index.html",
                4_102_444_800,
                "text/html",
                &b"<!doctype html><p>hi</p>"[..],
            ),
        ),
    ]
}
