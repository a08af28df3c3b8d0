use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::{measure_async, random_content, BenchError, BenchOptions, BenchResult};
use crate::build::{BuildConfig, PathRule, RuleMode};
use crate::clock::{Clock, SystemClock};
use crate::deploy::{DeployOptions, Deployment};
use crate::format::{Handler, SigningKeyPair};
use crate::verifier::{Overall, Verifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageLoadResult {
    /// Full verified load of a page with N images.
    pub stickler: BenchResult,
    /// The same bytes fetched without any verification.
    pub plain: BenchResult,
    /// Ratio of the per-image slopes.
    pub overhead_ratio: f64,
}

fn setup<E: std::fmt::Display>(e: E) -> BenchError {
    BenchError::ScenarioSetupFailed(e.to_string())
}

/// Page-load time against image count, through a local origin and an
/// honest CDN. Each count gets a freshly built site.
pub async fn bench_page_load(
    counts: &[usize],
    image_size: usize,
    key: &SigningKeyPair,
    concurrency: usize,
    options: &BenchOptions,
) -> Result<PageLoadResult, BenchError> {
    let mut stickler_points = Vec::new();
    let mut plain_points = Vec::new();
    for &n in counts {
        let dir = tempfile::tempdir().map_err(setup)?;
        let site = dir.path().join("site");
        std::fs::create_dir_all(site.join("img")).map_err(setup)?;
        for i in 0..n {
            let content = random_content(options.seed.wrapping_add(i as u64), image_size);
            std::fs::write(site.join(format!("img/{i:03}.png")), content).map_err(setup)?;
        }
        let mut config = BuildConfig::new(
            &site,
            dir.path().join("out"),
            "http://cdn.invalid",
            "http://pub.invalid",
        );
        config.rules.insert(
            0,
            PathRule::new("img/**", RuleMode::Signature, Handler::ImageDataUri),
        );
        let deployment =
            Deployment::start(config, key, SystemClock.now(), DeployOptions::default())
                .await
                .map_err(setup)?;

        let mut verifier_config = deployment.verifier_config();
        verifier_config.concurrency_limit = concurrency;
        let verifier = Verifier::new(verifier_config).map_err(setup)?;
        let descriptor = deployment.descriptor.clone();
        let point = measure_async(n as f64, options, || {
            let verifier = &verifier;
            let descriptor = descriptor.clone();
            async move {
                let report = verifier.load_site(descriptor).await;
                if report.overall != Overall::AllVerified {
                    return Err(setup(format!(
                        "page did not verify: {:?}",
                        report.outcomes()
                    )));
                }
                Ok(())
            }
        })
        .await?;
        stickler_points.push(point);

        let client = reqwest::Client::new();
        let urls: Arc<Vec<String>> = Arc::new(
            (0..n)
                .map(|i| format!("{}/img/{i:03}.png", deployment.cdn.url()))
                .collect(),
        );
        let point = measure_async(n as f64, options, || {
            let client = client.clone();
            let urls = Arc::clone(&urls);
            async move {
                let fetched: Vec<_> = stream::iter(urls.iter().cloned())
                    .map(|url| {
                        let client = client.clone();
                        async move {
                            client
                                .get(url)
                                .send()
                                .await?
                                .error_for_status()?
                                .bytes()
                                .await
                        }
                    })
                    .buffered(concurrency)
                    .collect()
                    .await;
                fetched
                    .into_iter()
                    .try_for_each(|r| r.map(drop))
                    .map_err(setup)
            }
        })
        .await?;
        plain_points.push(point);
        deployment.shutdown().await;
    }
    let stickler = BenchResult {
        concurrency: Some(concurrency),
        ..BenchResult::new("page_load_stickler", "assets", stickler_points, options)
    }
    .with_reference("roughly 5x over plain loading in one desktop browser, 2x in another");
    let plain = BenchResult {
        concurrency: Some(concurrency),
        ..BenchResult::new("page_load_plain", "assets", plain_points, options)
    };
    let overhead_ratio = if plain.slope > 0.0 {
        stickler.slope / plain.slope
    } else {
        f64::INFINITY
    };
    Ok(PageLoadResult {
        stickler,
        plain,
        overhead_ratio,
    })
}
