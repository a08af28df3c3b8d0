//! A full local deployment: build a site, serve it from an origin that
//! holds only the public key, put an honest CDN in front, and load it the
//! way a client would.

use std::sync::Arc;

use stickler::build::{BuildConfig, PathRule, RuleMode};
use stickler::deploy::{DeployOptions, Deployment};
use stickler::format::{Handler, SigningKeyPair};
use stickler::verifier::{RecordingSink, Verifier};
use stickler::{Clock, SystemClock};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let site = dir.path().join("site");
    std::fs::create_dir_all(site.join("img"))?;
    std::fs::write(site.join("app.js"), "console.log('verified')")?;
    std::fs::write(site.join("img/dot.png"), b"\x89PNG\r\n\x1a\n....")?;

    let mut config = BuildConfig::new(&site, dir.path().join("out"), "http://cdn", "http://origin");
    config.default_ttl = 3600;
    config.rules.insert(
        0,
        PathRule::new("**/*.js", RuleMode::Signature, Handler::Script),
    );
    config.rules.insert(
        1,
        PathRule::new("img/**", RuleMode::Signature, Handler::ImageDataUri),
    );

    let key = SigningKeyPair::generate()?;
    let deployment =
        Deployment::start(config, &key, SystemClock.now(), DeployOptions::default()).await?;
    println!(
        "origin {}  cdn {}",
        deployment.origin.url(),
        deployment.cdn.url()
    );

    let sink = Arc::new(RecordingSink::new());
    let verifier = Verifier::new(deployment.verifier_config())?.with_sink(sink.clone());
    let descriptor = verifier.fetch_bootstrap().await?;
    println!(
        "descriptor key {} manifest {}",
        descriptor.key_id(),
        descriptor.manifest_url
    );

    let report = verifier.load_site(descriptor).await;
    for v in &report.verdicts {
        println!(
            "{:?}  {:<40} {:?} {} bytes",
            v.outcome, v.url, v.handler, v.bytes_delivered
        );
    }
    println!("overall {:?}", report.overall);
    for d in sink.deliveries() {
        if let Some(uri) = d.data_uri {
            println!("{} as {}...", d.url, &uri[..uri.len().min(40)]);
        }
    }
    deployment.shutdown().await;
    Ok(())
}
