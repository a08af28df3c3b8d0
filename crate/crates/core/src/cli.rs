//! The `stickler` command line. Exit codes: 0 success, 1 usage,
//! 2 operation failed, 3 blob failed verification in `inspect`,
//! 4 and 5 from `verify` (partial load, aborted or no bootstrap).

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{self, BenchOptions, BenchResult};
use crate::build::{self, BuildConfig, PinOptions, PinnedAsset};
use crate::cdn::{BehaviorSet, Cdn, CdnConfig};
use crate::clock::{Clock, ManualClock, SystemClock};
use crate::format::{
    digest_content, verify_blob_with, AssetBlob, FailurePolicy, Handler, Manifest, ManifestEntry,
    VerifyMode, VerifyOptions,
};
use crate::origin::{Origin, OriginConfigFile};
use crate::verifier::{RefreshMode, Verifier, VerifierConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_UNVERIFIED: i32 = 3;
pub const EXIT_NO_BOOTSTRAP: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "stickler",
    version,
    about = "Sign a site, serve it through an untrusted CDN, verify it"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a signing key pair (stickler.key, stickler.pub).
    Keygen {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Sign every file of a site and write the manifest.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "stickler.key")]
        key: PathBuf,
        /// Unix seconds; defaults to now.
        #[arg(long, env = "STICKLER_BUILD_TIME")]
        build_time: Option<u64>,
    },
    /// Pin a third-party resource by hash into the build config.
    Pin {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        url: String,
        #[arg(long, value_parser = parse_handler)]
        handler: Handler,
        #[arg(long, value_parser = parse_policy, default_value = "abort")]
        on_failure: FailurePolicy,
        /// Accept content that changed since the last pin.
        #[arg(long)]
        confirm: bool,
    },
    /// Print a blob's fields and, given a key, whether it verifies.
    Inspect {
        blob: PathBuf,
        /// PEM public key.
        #[arg(long)]
        key: Option<PathBuf>,
        /// Expected URL path; defaults to the one the blob claims.
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        now: Option<u64>,
    },
    /// Run the publisher's origin server.
    Origin {
        #[command(subcommand)]
        command: ServeCommand<OriginArgs>,
    },
    /// Run the CDN simulator.
    Cdn {
        #[command(subcommand)]
        command: ServeCommand<CdnArgs>,
    },
    /// Load a site the way a client would and report every verdict.
    Verify(VerifyArgs),
    /// Measure verification cost and page-load scaling.
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
enum ServeCommand<A: Args> {
    Serve(A),
}

#[derive(Debug, Args)]
struct OriginArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct CdnArgs {
    #[arg(long)]
    upstream: String,
    /// JSON list of behaviors; honest when absent.
    #[arg(long)]
    behaviors: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8081")]
    listen: SocketAddr,
    #[arg(long, default_value = "127.0.0.1:8082")]
    admin: SocketAddr,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    origin: String,
    /// Pin the verifier's clock to these Unix seconds.
    #[arg(long)]
    now: Option<u64>,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    skew: u64,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long)]
    no_refresh: bool,
    #[arg(long)]
    full_restart: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Scenario {
    Verify,
    Datauri,
    Pageload,
}

#[derive(Debug, Args)]
struct BenchArgs {
    scenario: Scenario,
    /// Asset sizes, e.g. 10KB,1MB.
    #[arg(long, value_delimiter = ',', value_parser = parse_size)]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    counts: Vec<usize>,
    #[arg(long, value_parser = parse_size, default_value = "100KB")]
    image_size: usize,
    #[arg(long, default_value_t = 6)]
    concurrency: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    iterations: usize,
    /// Signing key; a fresh one is generated when absent.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_handler(s: &str) -> Result<Handler, String> {
    s.parse()
        .map_err(|e: crate::format::ManifestError| e.to_string())
}

fn parse_policy(s: &str) -> Result<FailurePolicy, String> {
    s.parse()
        .map_err(|e: crate::format::ManifestError| e.to_string())
}

/// Byte count with an optional KB or MB suffix (binary multiples).
pub fn parse_size(s: &str) -> Result<usize, String> {
    let upper = s.trim().to_ascii_uppercase();
    let (digits, unit) = if let Some(d) = upper.strip_suffix("MB") {
        (d, bench::MB)
    } else if let Some(d) = upper.strip_suffix("KB") {
        (d, bench::KB)
    } else {
        (upper.strip_suffix('B').unwrap_or(&upper), 1)
    };
    digits
        .trim()
        .parse::<usize>()
        .map(|n| n * unit)
        .map_err(|_| format!("bad size {s:?}"))
}

struct Failure(i32, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(EXIT_FAILED, e.to_string())
    }
}

/// Parses `args` (program name first) and runs the command.
pub async fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command).await {
        Ok(code) => code,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            code
        }
    }
}

async fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Keygen { out, force } => {
            let key = build::generate_keypair(&out, force)?;
            println!("{}", key.key_id());
            Ok(EXIT_OK)
        }
        Command::Build {
            config,
            key,
            build_time,
        } => {
            let config = BuildConfig::load(&config)?;
            let key = build::load_signing_key(&key)?;
            let report = build::build_site(
                &config,
                &key,
                build_time.unwrap_or_else(|| SystemClock.now()),
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
        Command::Pin {
            config,
            url,
            handler,
            on_failure,
            confirm,
        } => pin(&config, &url, handler, on_failure, confirm).await,
        Command::Inspect {
            blob,
            key,
            url,
            now,
        } => inspect(&blob, key.as_deref(), url, now),
        Command::Origin {
            command: ServeCommand::Serve(args),
        } => {
            let file = OriginConfigFile::load(&args.config)?;
            let base = args.config.parent().unwrap_or(Path::new("."));
            let origin = Origin::new(file.resolve(base)?).serve().await?;
            eprintln!("origin listening on {}", origin.url());
            tokio::signal::ctrl_c().await?;
            origin.shutdown().await;
            Ok(EXIT_OK)
        }
        Command::Cdn {
            command: ServeCommand::Serve(args),
        } => {
            let behaviors = match &args.behaviors {
                Some(path) => BehaviorSet::from_json(&std::fs::read_to_string(path)?)?.behaviors(),
                None => Vec::new(),
            };
            let config = CdnConfig {
                listen: args.listen,
                admin_listen: Some(args.admin),
                upstream: args.upstream,
                behaviors,
            };
            let cdn = Cdn::new(config).serve().await?;
            eprintln!(
                "cdn listening on {} (admin {})",
                cdn.url(),
                cdn.admin_url().unwrap_or_default()
            );
            tokio::signal::ctrl_c().await?;
            cdn.shutdown().await;
            Ok(EXIT_OK)
        }
        Command::Verify(args) => verify(args).await,
        Command::Bench(args) => run_bench(args).await,
    }
}

async fn pin(
    config_path: &Path,
    url: &str,
    handler: Handler,
    on_failure: FailurePolicy,
    confirm: bool,
) -> Result<i32, Failure> {
    let text = std::fs::read_to_string(config_path)?;
    let mut config: BuildConfig = serde_json::from_str(&text)?;
    let manifest = Manifest::new(
        config
            .pinned
            .iter()
            .map(|p| {
                ManifestEntry::new(&p.url, VerifyMode::Hash(p.digest), p.handler, p.on_failure)
            })
            .collect(),
    );
    let options = PinOptions {
        on_failure,
        confirm_change: confirm,
    };
    let pinned = build::pin_third_party(&manifest, url, handler, options).await?;
    config.pinned = pinned
        .entries
        .into_iter()
        .filter_map(|e| match e.verify_mode {
            VerifyMode::Hash(digest) => Some(PinnedAsset {
                url: e.url,
                digest,
                handler: e.handler,
                on_failure: e.on_failure,
            }),
            _ => None,
        })
        .collect();
    std::fs::write(config_path, config.to_json())?;
    if let Some(p) = config.pinned.iter().find(|p| p.url == url) {
        println!("{} {}", p.digest, p.url);
    }
    Ok(EXIT_OK)
}

fn inspect(
    path: &Path,
    key: Option<&Path>,
    url: Option<String>,
    now: Option<u64>,
) -> Result<i32, Failure> {
    let bytes = std::fs::read(path)?;
    let blob = AssetBlob::decode(&bytes)
        .map_err(|e| Failure(EXIT_UNVERIFIED, format!("malformed blob: {e}")))?;
    let payload = blob
        .unverified_payload()
        .map_err(|e| Failure(EXIT_UNVERIFIED, format!("malformed payload: {e}")))?;
    println!("algorithm:      {:?}", blob.algorithm);
    println!("signature:      {} bytes", blob.signature.len());
    println!("url_path:       {}", payload.url_path);
    println!("expiry:         {}", payload.expiry);
    println!("content_type:   {}", payload.content_type);
    println!("content_length: {}", payload.content.len());
    println!("content_sha256: {}", digest_content(&payload.content));
    let Some(key) = key else {
        println!("verification:   skipped (no --key)");
        return Ok(EXIT_OK);
    };
    let key = build::load_public_key(key)?;
    let expected = url.unwrap_or_else(|| payload.url_path.clone());
    let options = VerifyOptions::at(now.unwrap_or_else(|| SystemClock.now()));
    match verify_blob_with(&blob, &key, &expected, &options) {
        Ok(_) => {
            println!("verification:   ok (key {})", key.key_id());
            Ok(EXIT_OK)
        }
        Err(e) => {
            println!("verification:   FAILED: {e}");
            Ok(EXIT_UNVERIFIED)
        }
    }
}

async fn verify(args: VerifyArgs) -> Result<i32, Failure> {
    let mut config = VerifierConfig::new(&args.origin);
    config.max_manifest_depth = args.depth;
    config.clock_skew_allowance = args.skew;
    config.concurrency_limit = args.concurrency;
    config.allow_refresh_key_retry = !args.no_refresh;
    if args.full_restart {
        config.refresh_mode = RefreshMode::FullRestart;
    }
    let clock: Arc<dyn Clock> = match args.now {
        Some(t) => Arc::new(ManualClock::new(t)),
        None => Arc::new(SystemClock),
    };
    let verifier = Verifier::new(config)?.with_clock(clock);
    let descriptor = verifier
        .fetch_bootstrap()
        .await
        .map_err(|e| Failure(EXIT_NO_BOOTSTRAP, e.to_string()))?;
    let report = verifier.load_site(descriptor).await;
    match &args.report {
        Some(path) => std::fs::write(path, report.to_json())?,
        None => println!("{}", report.to_json()),
    }
    eprintln!(
        "{:?}: {} verdicts, {} failed, {} key refreshes",
        report.overall,
        report.verdicts.len(),
        report.failures().count(),
        report.refresh_key_retries
    );
    Ok(report.exit_code())
}

async fn run_bench(args: BenchArgs) -> Result<i32, Failure> {
    let mut options = BenchOptions {
        iterations: args.iterations,
        ..BenchOptions::default()
    };
    if let Some(seed) = args.seed {
        options.seed = seed;
    }
    let sizes = if args.sizes.is_empty() {
        bench::DEFAULT_SIZES.to_vec()
    } else {
        args.sizes
    };
    let counts = if args.counts.is_empty() {
        bench::DEFAULT_COUNTS.to_vec()
    } else {
        args.counts
    };
    let key = match &args.key {
        Some(path) => build::load_signing_key(path)?,
        None => crate::format::SigningKeyPair::generate()?,
    };
    let results: Vec<BenchResult> = match args.scenario {
        Scenario::Verify => {
            let (sig, hash) =
                tokio::task::block_in_place(|| bench::bench_verify(&sizes, &key, &options));
            vec![sig, hash]
        }
        Scenario::Datauri => vec![tokio::task::block_in_place(|| {
            bench::bench_data_uri(&sizes, &options)
        })],
        Scenario::Pageload => {
            let r =
                bench::bench_page_load(&counts, args.image_size, &key, args.concurrency, &options)
                    .await?;
            eprintln!(
                "stickler/plain per-image slope ratio: {:.2}",
                r.overhead_ratio
            );
            vec![r.stickler, r.plain]
        }
    };
    for r in &results {
        eprintln!(
            "{}: slope {:.4} ms/{} intercept {:.4} ms r2 {:.4}",
            r.scenario, r.slope, r.x_unit, r.intercept, r.r_squared
        );
    }
    std::fs::write(&args.out, serde_json::to_string_pretty(&results)?)?;
    if let Some(csv) = &args.csv {
        let refs: Vec<&BenchResult> = results.iter().collect();
        BenchResult::write_csv(&refs, std::fs::File::create(csv)?)?;
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("10KB"), Ok(10 * 1024));
        assert_eq!(parse_size("5mb"), Ok(5 * 1024 * 1024));
        assert_eq!(parse_size("123"), Ok(123));
        assert_eq!(parse_size("7B"), Ok(7));
        assert!(parse_size("lots").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[tokio::test]
    async fn usage_errors_exit_one() {
        assert_eq!(run(["stickler", "frobnicate"]).await, EXIT_USAGE);
        assert_eq!(run(["stickler", "build"]).await, EXIT_USAGE);
        assert_eq!(run(["stickler", "--help"]).await, EXIT_OK);
    }
}
