//! The two ways to serve dynamic content: a route the origin signs per
//! request (cacheable by the CDN, like any blob) and a route fetched
//! straight from the publisher, trusted because of the direct connection.

use std::sync::Arc;

use stickler::build::{BuildConfig, DynamicEntry};
use stickler::deploy::{DeployOptions, Deployment};
use stickler::format::{FailurePolicy, Handler, SigningKeyPair};
use stickler::origin::{DynamicRoute, RouteKind};
use stickler::verifier::{RecordingSink, Verifier};
use stickler::{Clock, SystemClock};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let site = dir.path().join("site");
    std::fs::create_dir_all(&site)?;
    std::fs::write(site.join("app.js"), "render();")?;

    let mut config = BuildConfig::new(&site, dir.path().join("out"), "http://cdn", "http://origin");
    for (path, kind) in [
        ("/api/time", RouteKind::Blob),
        ("/live/whoami", RouteKind::Channel),
    ] {
        config.dynamic.push(DynamicEntry {
            path: path.into(),
            kind,
            handler: Handler::Raw,
            on_failure: FailurePolicy::Skip,
        });
    }
    let options = DeployOptions {
        dynamic_routes: vec![
            DynamicRoute {
                pattern: "/api/time".into(),
                generator: "time".into(),
                ttl: 30,
                kind: RouteKind::Blob,
            },
            DynamicRoute {
                pattern: "/live/**".into(),
                generator: "echo".into(),
                ttl: 0,
                kind: RouteKind::Channel,
            },
        ],
        ..DeployOptions::default()
    };
    let key = SigningKeyPair::generate()?;
    let deployment = Deployment::start(config, &key, SystemClock.now(), options).await?;

    let sink = Arc::new(RecordingSink::new());
    let verifier = Verifier::new(deployment.verifier_config())?.with_sink(sink.clone());
    let report = verifier.load_site(deployment.descriptor.clone()).await;
    for v in &report.verdicts {
        println!("{:?} {:?} {}", v.outcome, v.verify_mode, v.url);
    }
    for d in sink.deliveries() {
        println!("{} -> {}", d.url, String::from_utf8_lossy(&d.content));
    }
    deployment.shutdown().await;
    Ok(())
}
