//! Put each misbehaving CDN in front of the same site and show what the
//! verifier makes of it. Nothing that fails verification reaches a handler.

use std::sync::Arc;

use stickler::build::{BuildConfig, PathRule, RuleMode};
use stickler::cdn::CdnBehavior;
use stickler::deploy::{DeployOptions, Deployment};
use stickler::format::{FailurePolicy, Handler, SigningKeyPair};
use stickler::verifier::{RecordingSink, Verifier};
use stickler::ManualClock;

const BUILD_TIME: u64 = 1_700_000_000;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let site = dir.path().join("site");
    std::fs::create_dir_all(&site)?;
    std::fs::write(site.join("a.js"), "var a = 1;")?;
    std::fs::write(site.join("b.js"), "var b = 2;")?;

    let mut config = BuildConfig::new(&site, dir.path().join("out"), "http://cdn", "http://origin");
    config.default_ttl = 60;
    config.rules =
        vec![PathRule::new("**", RuleMode::Signature, Handler::Script)
            .with_policy(FailurePolicy::Skip)];

    let clock = Arc::new(ManualClock::new(BUILD_TIME));
    let options = DeployOptions {
        clock: clock.clone(),
        ..DeployOptions::default()
    };
    let key = SigningKeyPair::generate()?;
    let mut deployment = Deployment::start(config, &key, BUILD_TIME, options).await?;

    let target = "/a.js*".to_string();
    let cases = vec![
        ("honest", vec![]),
        (
            "tamper",
            vec![CdnBehavior::TamperBytes {
                url_pattern: target.clone(),
                byte_offset: 300,
            }],
        ),
        (
            "inject",
            vec![CdnBehavior::InjectPrefix {
                url_pattern: target.clone(),
                bytes: "alert(1);".into(),
            }],
        ),
        (
            "swap",
            vec![CdnBehavior::SwapUrl {
                from_url: "/a.js".into(),
                to_url: "/b.js".into(),
            }],
        ),
        (
            "strip",
            vec![CdnBehavior::StripBlob {
                url_pattern: target.clone(),
            }],
        ),
        (
            "drop",
            vec![CdnBehavior::Drop {
                url_pattern: target.clone(),
            }],
        ),
        (
            "replay",
            vec![CdnBehavior::ReplayStale {
                url_pattern: target.clone(),
            }],
        ),
    ];

    for (name, behaviors) in cases {
        clock.set(BUILD_TIME);
        deployment.cdn.set_behaviors(Vec::new())?;
        deployment.cdn.flush();
        if name == "replay" {
            // Let the CDN cache the current version, then move past its expiry
            // with a fresh build behind it; the CDN keeps replaying the old one.
            let v = Verifier::new(deployment.verifier_config())?.with_clock(clock.clone());
            v.load_site(deployment.descriptor.clone()).await;
            clock.set(BUILD_TIME + 61);
            deployment.rebuild(&key, BUILD_TIME + 61)?;
        }
        deployment.cdn.set_behaviors(behaviors)?;

        let sink = Arc::new(RecordingSink::new());
        let verifier = Verifier::new(deployment.verifier_config())?
            .with_clock(clock.clone())
            .with_sink(sink.clone());
        let report = verifier.load_site(deployment.descriptor.clone()).await;
        let a = report.verdict("/a.js").unwrap();
        println!(
            "{name:<7} /a.js -> {:<17} sink bytes for /a.js: {}  overall {:?}",
            format!("{:?}", a.outcome),
            sink.bytes_for("/a.js"),
            report.overall
        );
        if name == "replay" {
            deployment.rebuild(&key, BUILD_TIME)?;
        }
    }
    deployment.shutdown().await;
    Ok(())
}
