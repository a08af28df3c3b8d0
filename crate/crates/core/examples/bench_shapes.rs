//! Measures the three performance shapes and prints the fitted lines:
//! verification cost per MB (signature vs hash), base64 data-URI cost per
//! MB, and page-load time per image.
//!
//! Pass `--full` for the default sweeps (10 KB to 10 MB, 1 to 96 images).

use stickler::bench::{self, BenchOptions, BenchResult, KB, MB};
use stickler::SigningKeyPair;

fn show(r: &BenchResult) {
    println!(
        "{:<20} slope {:>8.4} ms/{:<6} intercept {:>7.3} ms  r2 {:.4}",
        r.scenario, r.slope, r.x_unit, r.intercept, r.r_squared
    );
    for p in &r.points {
        println!(
            "    x={:<10.4} median {:>9.4} ms  p90 {:>9.4} ms{}",
            p.x,
            p.median_ms,
            p.p90_ms,
            if p.variance_ok { "" } else { "  (noisy)" }
        );
    }
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let full = std::env::args().any(|a| a == "--full");
    let (sizes, counts) = if full {
        (
            bench::DEFAULT_SIZES.to_vec(),
            bench::DEFAULT_COUNTS.to_vec(),
        )
    } else {
        (
            vec![10 * KB, 100 * KB, 512 * KB, MB, 2 * MB],
            vec![1, 4, 8, 16],
        )
    };
    let options = BenchOptions::default();
    let key = SigningKeyPair::generate()?;

    let (signature, hash) = bench::bench_verify(&sizes, &key, &options);
    show(&signature);
    show(&hash);
    println!(
        "slope ratio signature/hash: {:.3}\n",
        signature.slope / hash.slope
    );

    show(&bench::bench_data_uri(&sizes, &options));
    println!();

    let page =
        bench::bench_page_load(&counts, bench::DEFAULT_IMAGE_SIZE, &key, 6, &options).await?;
    show(&page.stickler);
    show(&page.plain);
    println!("per-image overhead ratio: {:.2}", page.overhead_ratio);
    Ok(())
}
