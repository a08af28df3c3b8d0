//! Performance shapes: per-byte verification cost, signature/hash parity,
//! base64 conversion cost and page-load scaling. Absolute numbers depend
//! on the machine; the fits are what matter.

mod page_load;
mod stats;

use std::future::Future;
use std::hint::black_box;
use std::io::Write;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::format::{
    digest_content, sign_asset, verify_blob, AssetBlob, AssetPayload, SigningKeyPair,
};
use crate::verifier::encode_data_uri;

pub use page_load::{bench_page_load, PageLoadResult};
pub use stats::{fit_line, median, percentile, LinearFit};

pub const KB: usize = 1024;
pub const MB: usize = 1024 * 1024;
pub const DEFAULT_SIZES: [usize; 5] = [10 * KB, 100 * KB, MB, 5 * MB, 10 * MB];
pub const DEFAULT_COUNTS: [usize; 6] = [1, 8, 16, 32, 64, 96];
pub const DEFAULT_IMAGE_SIZE: usize = 100 * KB;
/// p90 above this multiple of the median marks a point as noisy.
pub const VARIANCE_LIMIT: f64 = 3.0;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("scenario setup failed: {0}")]
    ScenarioSetupFailed(String),
    #[error("writing results: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    /// Timed samples per point.
    pub iterations: usize,
    /// Untimed runs before sampling.
    pub warmup: usize,
    pub seed: u64,
    /// Times a noisy point is re-measured before it is reported as is.
    pub max_attempts: usize,
    /// Fast operations are repeated until one sample lasts this long.
    pub min_sample: Duration,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            iterations: 20,
            warmup: 3,
            seed: 0x5717_c1e5,
            max_attempts: 3,
            min_sample: Duration::from_millis(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    /// Asset size in MB, or asset count.
    pub x: f64,
    pub median_ms: f64,
    pub p90_ms: f64,
    pub samples: usize,
    /// Operations per timed sample.
    pub batch: usize,
    pub attempts: usize,
    pub variance_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub scenario: String,
    /// "MB" or "assets"; the slope is milliseconds per unit.
    pub x_unit: String,
    pub points: Vec<BenchPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concurrency: Option<usize>,
    /// Published figure for comparison; never asserted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    x: f64,
    x_unit: &'a str,
    median_ms: f64,
    p90_ms: f64,
    variance_ok: bool,
}

impl BenchResult {
    fn new(scenario: &str, x_unit: &str, points: Vec<BenchPoint>, options: &BenchOptions) -> Self {
        let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.median_ms).collect();
        let fit = fit_line(&xs, &ys);
        Self {
            scenario: scenario.to_string(),
            x_unit: x_unit.to_string(),
            points,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            iterations: options.iterations,
            warmup: options.warmup,
            seed: options.seed,
            concurrency: None,
            reference: None,
        }
    }

    fn with_reference(mut self, reference: &str) -> Self {
        self.reference = Some(reference.to_string());
        self
    }

    pub fn fit(&self) -> LinearFit {
        LinearFit {
            slope: self.slope,
            intercept: self.intercept,
            r_squared: self.r_squared,
        }
    }

    /// Medians never decrease as `x` grows.
    pub fn is_monotone(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].median_ms >= w[0].median_ms)
    }

    pub fn variance_ok(&self) -> bool {
        self.points.iter().all(|p| p.variance_ok)
    }

    pub fn write_csv<W: Write>(results: &[&BenchResult], out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        for r in results {
            for p in &r.points {
                w.serialize(CsvRow {
                    scenario: &r.scenario,
                    x: p.x,
                    x_unit: &r.x_unit,
                    median_ms: p.median_ms,
                    p90_ms: p.p90_ms,
                    variance_ok: p.variance_ok,
                })
                .map_err(|e| BenchError::Output(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| BenchError::Output(e.to_string()))
    }
}

/// Reproducible pseudo-random content; each size gets its own stream.
pub fn random_content(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (len as u64).rotate_left(32));
    let mut bytes = vec![0u8; len];
    rng.fill_bytes(&mut bytes);
    bytes
}

fn to_mb(bytes: usize) -> f64 {
    bytes as f64 / MB as f64
}

fn summarize(x: f64, samples: &[f64], batch: usize, attempts: usize) -> BenchPoint {
    let median_ms = median(samples);
    let p90_ms = percentile(samples, 90.0);
    BenchPoint {
        x,
        median_ms,
        p90_ms,
        samples: samples.len(),
        batch,
        attempts,
        variance_ok: p90_ms <= VARIANCE_LIMIT * median_ms,
    }
}

/// Times a synchronous operation at one sweep point.
fn measure(x: f64, options: &BenchOptions, mut op: impl FnMut()) -> BenchPoint {
    let started = Instant::now();
    op();
    let single = started.elapsed().as_secs_f64().max(1e-9);
    let batch = ((options.min_sample.as_secs_f64() / single).ceil() as usize).clamp(1, 10_000);
    let mut point = None;
    for attempt in 1..=options.max_attempts.max(1) {
        for _ in 0..options.warmup * batch {
            op();
        }
        let samples: Vec<f64> = (0..options.iterations)
            .map(|_| {
                let t = Instant::now();
                for _ in 0..batch {
                    op();
                }
                t.elapsed().as_secs_f64() * 1e3 / batch as f64
            })
            .collect();
        let p = summarize(x, &samples, batch, attempt);
        let ok = p.variance_ok;
        point = Some(p);
        if ok {
            break;
        }
    }
    point.expect("at least one attempt")
}

/// Times an asynchronous operation at one sweep point.
async fn measure_async<F, Fut>(
    x: f64,
    options: &BenchOptions,
    mut op: F,
) -> Result<BenchPoint, BenchError>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = Result<(), BenchError>>,
{
    let mut point = None;
    for attempt in 1..=options.max_attempts.max(1) {
        for _ in 0..options.warmup {
            op().await?;
        }
        let mut samples = Vec::with_capacity(options.iterations);
        for _ in 0..options.iterations {
            let t = Instant::now();
            op().await?;
            samples.push(t.elapsed().as_secs_f64() * 1e3);
        }
        let p = summarize(x, &samples, 1, attempt);
        let ok = p.variance_ok;
        point = Some(p);
        if ok {
            break;
        }
    }
    Ok(point.expect("at least one attempt"))
}

/// Verification time against asset size for signature mode and hash
/// mode. Both start from the blob bytes as the CDN delivers them.
pub fn bench_verify(
    sizes: &[usize],
    key: &SigningKeyPair,
    options: &BenchOptions,
) -> (BenchResult, BenchResult) {
    let public = key.public_key();
    let mut signature_points = Vec::new();
    let mut hash_points = Vec::new();
    for &size in sizes {
        let content = random_content(options.seed, size);
        let url = format!("/bench/{size}.bin");
        let expected = digest_content(&content);
        let payload = AssetPayload::new(&url, 0, "application/octet-stream", content);
        let blob_bytes = sign_asset(&payload, key)
            .and_then(|b| Ok(b.encode()?))
            .expect("bench payload signs");
        drop(payload);

        signature_points.push(measure(to_mb(size), options, || {
            let blob = AssetBlob::decode(black_box(&blob_bytes)).expect("blob decodes");
            black_box(verify_blob(&blob, public, 0, &url).expect("blob verifies"));
        }));
        hash_points.push(measure(to_mb(size), options, || {
            let blob = AssetBlob::decode(black_box(&blob_bytes)).expect("blob decodes");
            let payload = blob.unverified_payload().expect("payload decodes");
            assert!(digest_content(&payload.content) == expected);
            black_box(payload);
        }));
    }
    let reference = "about 11 ms per MB for both methods on the original test machine";
    (
        BenchResult::new("verify_signature", "MB", signature_points, options)
            .with_reference(reference),
        BenchResult::new("verify_hash", "MB", hash_points, options).with_reference(reference),
    )
}

/// Base64 data-URI conversion time against asset size.
pub fn bench_data_uri(sizes: &[usize], options: &BenchOptions) -> BenchResult {
    let points = sizes
        .iter()
        .map(|&size| {
            let content = random_content(options.seed, size);
            measure(to_mb(size), options, || {
                black_box(encode_data_uri(black_box(&content), "image/png"));
            })
        })
        .collect();
    BenchResult::new("data_uri", "MB", points, options)
        .with_reference("about 5 ms extra per MB image on the original test machine")
}
