//! Rotate the signing key while a client still holds the old bootstrap
//! descriptor. The first failure triggers one descriptor refresh, after
//! which the load completes; without the retry the load aborts.

use std::sync::Arc;

use stickler::build::BuildConfig;
use stickler::deploy::{DeployOptions, Deployment};
use stickler::verifier::Verifier;
use stickler::{ManualClock, SigningKeyPair};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let site = dir.path().join("site");
    std::fs::create_dir_all(&site)?;
    std::fs::write(site.join("app.js"), "let v = 1;")?;
    let config = BuildConfig::new(&site, dir.path().join("out"), "http://cdn", "http://origin");

    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let options = DeployOptions {
        clock: clock.clone(),
        ..DeployOptions::default()
    };
    let old_key = SigningKeyPair::generate()?;
    let mut deployment = Deployment::start(config, &old_key, 1_700_000_000, options).await?;

    let verifier = Verifier::new(deployment.verifier_config())?.with_clock(clock.clone());
    let held = verifier.fetch_bootstrap().await?;
    println!("client holds key {}", held.key_id());

    let new_key = SigningKeyPair::generate()?;
    deployment.rebuild(&new_key, 1_700_000_100)?;
    deployment.cdn.flush();
    println!("publisher rotated to key {}", new_key.key_id());

    let report = verifier.load_site(held.clone()).await;
    println!(
        "with retry:    {:?}, {} refresh, finished under key {}",
        report.overall, report.refresh_key_retries, report.descriptor_key_id
    );
    for v in &report.verdicts {
        println!(
            "    {:?} {} {}",
            v.outcome,
            v.url,
            v.detail.as_deref().unwrap_or("")
        );
    }

    let mut strict = deployment.verifier_config();
    strict.allow_refresh_key_retry = false;
    let report = Verifier::new(strict)?
        .with_clock(clock)
        .load_site(held)
        .await;
    println!("without retry: {:?}", report.overall);

    deployment.shutdown().await;
    Ok(())
}
