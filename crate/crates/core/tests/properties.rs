//! Properties that span modules: build coverage, agreement between the
//! two content checks, and the verifier's guarantees under arbitrary CDN
//! misbehaviour.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use stickler::build::{blob_path, build_site, BuildConfig};
use stickler::cdn::CdnBehavior;
use stickler::deploy::DeployOptions;
use stickler::format::{
    digest_content, parse_manifest, sign_asset, verify_blob, AssetBlob, AssetPayload,
    FailurePolicy, Handler,
};
use stickler::verifier::{Outcome, Overall, RecordingSink, Verifier};

fn block_on<F: std::future::Future>(f: F) -> F::Output {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap()
        .block_on(f)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// An asset checked by signature and by digest yields the same bytes.
    #[test]
    fn hash_and_signature_accept_identical_content(content in proptest::collection::vec(any::<u8>(), 0..2048)) {
        let key = publisher_key();
        let blob = sign_asset(&AssetPayload::new("/x.bin", 0, "application/octet-stream", content.clone()), &key).unwrap();
        let blob = AssetBlob::decode(&blob.encode().unwrap()).unwrap();
        let signed = verify_blob(&blob, key.public_key(), BUILD_TIME, "/x.bin").unwrap().content;
        let unwrapped = blob.unverified_payload().unwrap().content;
        prop_assert_eq!(digest_content(&unwrapped), digest_content(&content));
        prop_assert_eq!(signed, unwrapped);
    }

    /// Every file under the site root gets exactly one manifest entry and
    /// one blob, and every blob verifies at build time.
    #[test]
    fn build_covers_every_file_once(
        files in proptest::collection::btree_map("[a-c]{1,2}(/[a-c]{1,2}){0,2}\\.(js|css|png|txt)", proptest::collection::vec(any::<u8>(), 0..64), 1..10)
    ) {
        // A path cannot be both a file and a directory.
        let names: Vec<&String> = files.keys().collect();
        prop_assume!(!names.iter().any(|a| names.iter().any(|b| b.starts_with(&format!("{a}/")))));
        let dir = tempfile::tempdir().unwrap();
        let site: Vec<(&str, &[u8])> = files.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        write_site(&dir.path().join("site"), &site);
        let out = dir.path().join("out");
        let mut config = BuildConfig::new(dir.path().join("site"), &out, "http://cdn.test", "http://pub.test");
        config.rules = site_rules(FailurePolicy::Skip);
        config.default_ttl = TTL;
        let key = publisher_key();
        let report = build_site(&config, &key, BUILD_TIME).unwrap();
        prop_assert_eq!(report.assets_signed, files.len());

        let blob = AssetBlob::decode(&std::fs::read(blob_path(&out, "/manifest.json")).unwrap()).unwrap();
        let manifest = parse_manifest(&verify_blob(&blob, key.public_key(), BUILD_TIME, "/manifest.json").unwrap().content).unwrap();
        let listed: Vec<String> = manifest.entries.iter().map(|e| e.url.clone()).collect();
        let unique: BTreeSet<&String> = listed.iter().collect();
        prop_assert_eq!(unique.len(), listed.len());
        let expected: BTreeSet<String> = files.keys().map(|k| format!("/{k}")).collect();
        prop_assert_eq!(listed.iter().cloned().collect::<BTreeSet<_>>(), expected);

        for (rel, content) in &files {
            let url = format!("/{rel}");
            let blob = AssetBlob::decode(&std::fs::read(blob_path(&out, &url)).unwrap()).unwrap();
            let payload = verify_blob(&blob, key.public_key(), BUILD_TIME, &url).unwrap();
            prop_assert_eq!(&payload.content, content);
        }
    }
}

fn behavior() -> impl Strategy<Value = CdnBehavior> {
    let path = proptest::sample::select(
        SITE.iter()
            .map(|(rel, _)| format!("/{rel}"))
            .collect::<Vec<_>>(),
    );
    prop_oneof![
        (path.clone(), 0usize..4096).prop_map(|(url_pattern, byte_offset)| {
            CdnBehavior::TamperBytes {
                url_pattern,
                byte_offset,
            }
        }),
        (path.clone(), "[a-z();]{1,12}")
            .prop_map(|(url_pattern, bytes)| CdnBehavior::InjectPrefix { url_pattern, bytes }),
        (path.clone(), path.clone())
            .prop_map(|(from_url, to_url)| CdnBehavior::SwapUrl { from_url, to_url }),
        path.clone()
            .prop_map(|url_pattern| CdnBehavior::StripBlob { url_pattern }),
        path.prop_map(|url_pattern| CdnBehavior::Drop { url_pattern }),
    ]
}

fn policy() -> impl Strategy<Value = FailurePolicy> {
    proptest::sample::select(vec![
        FailurePolicy::Skip,
        FailurePolicy::Abort,
        FailurePolicy::RefreshKey,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    /// Whatever the CDN does: only verified, unaltered content reaches the
    /// sink, every entry has exactly one verdict, and the descriptor
    /// is refreshed at most once.
    #[test]
    fn verifier_fails_closed(behaviors in proptest::collection::vec(behavior(), 0..4), policy in policy()) {
        block_on(async {
            let f = deploy(SITE, site_rules(policy), DeployOptions::default()).await;
            f.deployment.cdn.set_behaviors(behaviors.clone()).unwrap();
            let sink = Arc::new(RecordingSink::new());
            let v = Verifier::new(f.deployment.verifier_config())
                .unwrap()
                .with_clock(f.clock.clone())
                .with_sink(sink.clone());
            let report = v.load_site(f.deployment.descriptor.clone()).await;

            assert_eq!(report.verdicts.len(), SITE.len() + 1, "{behaviors:?}\n{}", report.to_json());
            assert!(report.refresh_key_retries <= 1);
            let verified: BTreeSet<String> = report
                .verdicts
                .iter()
                .filter(|v| v.outcome == Outcome::Verified && v.handler != Handler::Manifest)
                .map(|v| v.url.clone())
                .collect();
            let delivered: Vec<String> = sink.delivered_urls();
            assert_eq!(delivered.iter().cloned().collect::<BTreeSet<_>>(), verified);
            assert_eq!(delivered.len(), verified.len());
            for d in sink.deliveries() {
                let (_, original) = SITE.iter().find(|(rel, _)| d.url.ends_with(&format!("/{rel}"))).unwrap();
                assert_eq!(&d.content, original);
            }
            for failed in report.failures() {
                assert_eq!(failed.bytes_delivered, 0);
            }
            if behaviors.is_empty() {
                assert_eq!(report.overall, Overall::AllVerified);
            }
            if report.verdicts.iter().any(|v| v.outcome == Outcome::SkippedByPolicy) {
                assert_eq!(report.overall, Overall::Aborted);
            }
            f.deployment.shutdown().await;
        });
    }
}
