//! Build a small site: sign every file, hash-pin the vendored library,
//! and print the report and the resulting manifest.

use stickler::build::{build_site, BuildConfig, PathRule, RuleMode};
use stickler::format::{serialize_manifest, FailurePolicy, Handler, SigningKeyPair};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let site = dir.path().join("site");
    for (rel, content) in [
        ("index.js", "document.title = 'signed';"),
        ("style/main.css", "body { margin: 0 }"),
        ("vendor/lib.js", "export default 42;"),
        ("about.txt", "hello"),
    ] {
        let path = site.join(rel);
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(path, content)?;
    }

    let mut config = BuildConfig::new(
        &site,
        dir.path().join("out"),
        "https://cdn.example",
        "https://example.com",
    );
    config.default_ttl = 7 * 24 * 3600;
    config.rules = vec![
        PathRule::new("vendor/**", RuleMode::Hash, Handler::Script)
            .with_policy(FailurePolicy::Skip),
        PathRule::new("**/*.js", RuleMode::Signature, Handler::Script),
        PathRule::new("**/*.css", RuleMode::Signature, Handler::Style),
        PathRule::new("**", RuleMode::Signature, Handler::Raw).with_ttl(3600),
    ];

    let key = SigningKeyPair::generate()?;
    let report = build_site(&config, &key, 1_700_000_000)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!(
        "{}",
        String::from_utf8(serialize_manifest(&report.manifest)?)?
    );

    for entry in walkdir::WalkDir::new(&config.output_dir).sort_by_file_name() {
        let entry = entry?;
        if entry.file_type().is_file() {
            println!(
                "{:>6}  {}",
                entry.metadata()?.len(),
                entry.path().strip_prefix(&config.output_dir)?.display()
            );
        }
    }
    Ok(())
}
