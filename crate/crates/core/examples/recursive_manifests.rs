//! Manifests can list other manifests. This builds a three-level tree,
//! then shows the verifier's two guards: a depth limit and cycle detection.

use std::path::Path;
use std::sync::Arc;

use stickler::build::{blob_path, BuildConfig, PathRule, RuleMode};
use stickler::deploy::{DeployOptions, Deployment};
use stickler::format::{
    serialize_manifest, sign_asset, AssetPayload, FailurePolicy, Handler, Manifest, ManifestEntry,
    SigningKeyPair, VerifyMode, MANIFEST_MEDIA_TYPE,
};
use stickler::verifier::{Verifier, VerifierReport};
use stickler::ManualClock;

fn nested(entries: &[(&str, Handler)]) -> Vec<u8> {
    let entries = entries
        .iter()
        .map(|(url, handler)| {
            ManifestEntry::new(*url, VerifyMode::Signature, *handler, FailurePolicy::Abort)
        })
        .collect();
    serialize_manifest(&Manifest::new(entries)).unwrap()
}

fn write(root: &Path, rel: &str, bytes: &[u8]) {
    let path = root.join(rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(path, bytes).unwrap();
}

fn show(title: &str, report: &VerifierReport) {
    println!("{title}: {:?}", report.overall);
    for v in &report.verdicts {
        println!("    depth {} {:?} {}", v.depth, v.outcome, v.url);
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let site = dir.path().join("site");
    write(&site, "top.js", b"1");
    write(
        &site,
        "l1/index.json",
        &nested(&[
            ("a.js", Handler::Script),
            ("l2/index.json", Handler::Manifest),
        ]),
    );
    write(&site, "l1/a.js", b"2");
    write(
        &site,
        "l1/l2/index.json",
        &nested(&[("b.js", Handler::Script)]),
    );
    write(&site, "l1/l2/b.js", b"3");

    let mut config = BuildConfig::new(&site, dir.path().join("out"), "http://cdn", "http://origin");
    config.rules.insert(
        0,
        PathRule::new("**/index.json", RuleMode::Signature, Handler::Manifest),
    );
    let clock = Arc::new(ManualClock::new(1_700_000_000));
    let options = DeployOptions {
        clock: clock.clone(),
        ..DeployOptions::default()
    };
    let key = SigningKeyPair::generate()?;
    let deployment = Deployment::start(config, &key, 1_700_000_000, options).await?;

    let verifier = Verifier::new(deployment.verifier_config())?.with_clock(clock.clone());
    show(
        "three levels",
        &verifier.load_site(deployment.descriptor.clone()).await,
    );

    let mut shallow = deployment.verifier_config();
    shallow.max_manifest_depth = 2;
    let report = Verifier::new(shallow)?
        .with_clock(clock.clone())
        .load_site(deployment.descriptor.clone())
        .await;
    show("depth limit 2", &report);

    // Hand-sign two manifests that list each other, and point the top-level
    // manifest at the first.
    let out = &deployment.config.output_dir;
    for (path, content) in [
        (
            "/manifest.json",
            nested(&[("/loop/a.json", Handler::Manifest)]),
        ),
        ("/loop/a.json", nested(&[("b.json", Handler::Manifest)])),
        ("/loop/b.json", nested(&[("a.json", Handler::Manifest)])),
    ] {
        let blob = sign_asset(
            &AssetPayload::new(path, 0, MANIFEST_MEDIA_TYPE, content),
            &key,
        )?;
        let file = blob_path(out, path);
        std::fs::create_dir_all(file.parent().unwrap())?;
        std::fs::write(file, blob.encode()?)?;
    }
    deployment.cdn.flush();
    show(
        "a <-> b cycle",
        &verifier.load_site(deployment.descriptor.clone()).await,
    );

    deployment.shutdown().await;
    Ok(())
}
