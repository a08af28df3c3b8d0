//! Runs every cargo example and checks the lines that show its point.
//! `cargo test` builds the examples next to the test binaries.

use std::path::PathBuf;
use std::process::Command;

fn run_example(name: &str, args: &[&str]) -> String {
    let bin_dir = PathBuf::from(env!("CARGO_BIN_EXE_stickler"));
    let path = bin_dir.parent().unwrap().join("examples").join(name);
    assert!(
        path.exists(),
        "example {name} was not built at {}",
        path.display()
    );
    let out = Command::new(&path).args(args).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "{name} failed:\n{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn assert_lines(name: &str, output: &str, expected: &[&str]) {
    for want in expected {
        assert!(
            output.contains(want),
            "{name}: missing {want:?} in\n{output}"
        );
    }
}

#[test]
fn sign_and_verify() {
    let out = run_example("sign_and_verify", &[]);
    assert_lines(
        "sign_and_verify",
        &out,
        &[
            "verified: console.log('hi')",
            "flipped bit     -> signature does not verify",
            "wrong url       -> payload signed for /js/app.js",
            "at expiry       -> payload expired",
            "different key   -> signature does not verify",
        ],
    );
}

#[test]
fn build_site() {
    let out = run_example("build_site", &[]);
    assert_lines(
        "build_site",
        &out,
        &[
            "\"assets_signed\": 4",
            "\"assets_hash_pinned\": 0",
            "manifest.json.stkb",
        ],
    );
}

#[test]
fn serve_and_verify() {
    assert_lines(
        "serve_and_verify",
        &run_example("serve_and_verify", &[]),
        &["overall AllVerified", "data:image/png;base64,"],
    );
}

#[test]
fn adversary_matrix() {
    let out = run_example("adversary_matrix", &[]);
    assert_lines(
        "adversary_matrix",
        &out,
        &[
            "honest  /a.js -> Verified",
            "tamper  /a.js -> SignatureInvalid",
            "swap    /a.js -> UrlMismatch",
            "strip   /a.js -> MalformedPayload",
            "drop    /a.js -> Unavailable",
            "replay  /a.js -> Expired",
        ],
    );
    let failures = out.lines().filter(|l| !l.contains("-> Verified"));
    for line in failures {
        assert!(line.contains("sink bytes for /a.js: 0"), "{line}");
    }
}

#[test]
fn key_rotation() {
    assert_lines(
        "key_rotation",
        &run_example("key_rotation", &[]),
        &[
            "with retry:    AllVerified, 1 refresh",
            "without retry: Aborted",
        ],
    );
}

#[test]
fn recursive_manifests() {
    assert_lines(
        "recursive_manifests",
        &run_example("recursive_manifests", &[]),
        &[
            "three levels: AllVerified",
            "DepthExceeded",
            "CycleDetected",
        ],
    );
}

#[test]
fn dynamic_content() {
    assert_lines(
        "dynamic_content",
        &run_example("dynamic_content", &[]),
        &[
            "Verified Signature",
            "/api/time",
            "Verified Channel",
            "/live/whoami -> /live/whoami",
        ],
    );
}

#[test]
fn pin_third_party() {
    assert_lines(
        "pin_third_party",
        &run_example("pin_third_party", &[]),
        &[
            "pinning again leaves 1 entry",
            "confirm to re-pin",
            "confirmed: sha256 ",
        ],
    );
}

#[test]
fn bench_shapes() {
    assert_lines(
        "bench_shapes",
        &run_example("bench_shapes", &[]),
        &["per-image overhead ratio"],
    );
}
