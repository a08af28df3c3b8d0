mod common;

use std::sync::Arc;

use common::*;
use reqwest::header::{
    ACCESS_CONTROL_ALLOW_ORIGIN, CACHE_CONTROL, CONTENT_TYPE, ETAG, IF_NONE_MATCH,
};
use reqwest::StatusCode;
use stickler::build::{build_site, BuildConfig};
use stickler::format::{verify_blob, AssetBlob, PublicKey, BLOB_MEDIA_TYPE};
use stickler::origin::{
    BootstrapDescriptor, CachePolicy, DynamicRoute, Generated, GeneratorError, Origin,
    OriginConfig, OriginError, OriginHandle, RouteKind, BOOTSTRAP_MEDIA_TYPE, WELL_KNOWN_PATH,
};
use stickler::ManualClock;

struct Served {
    _dir: tempfile::TempDir,
    origin: OriginHandle,
    clock: Arc<ManualClock>,
}

fn descriptor() -> BootstrapDescriptor {
    BootstrapDescriptor::new(
        PublicKey::from_pem(PUBLISHER_PUB).unwrap(),
        "http://cdn.test/manifest.json",
        "http://cdn.test",
    )
    .unwrap()
}

/// Builds the fixture site and serves it. A copy of the private key sits
/// next to the output directory to give traversal attempts a target.
async fn serve(edit: impl FnOnce(&mut OriginConfig)) -> Served {
    let dir = tempfile::tempdir().unwrap();
    write_site(&dir.path().join("site"), SITE);
    std::fs::write(dir.path().join("stickler.key"), PUBLISHER_KEY).unwrap();
    let out = dir.path().join("out");
    let mut config = BuildConfig::new(
        dir.path().join("site"),
        &out,
        "http://cdn.test",
        "http://pub.test",
    );
    config.default_ttl = TTL;
    build_site(&config, &publisher_key(), BUILD_TIME).unwrap();
    let mut origin_config = OriginConfig::static_only(&out, descriptor());
    edit(&mut origin_config);
    let clock = Arc::new(ManualClock::new(BUILD_TIME));
    let origin = Origin::new(origin_config)
        .with_clock(clock.clone())
        .serve()
        .await
        .unwrap();
    Served {
        _dir: dir,
        origin,
        clock,
    }
}

fn client() -> reqwest::Client {
    reqwest::Client::new()
}

#[tokio::test]
async fn root_page_embeds_an_extractable_descriptor() {
    let s = serve(|_| {}).await;
    let resp = client().get(s.origin.url()).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()[CONTENT_TYPE]
        .to_str()
        .unwrap()
        .starts_with("text/html"));
    let html = resp.text().await.unwrap();
    assert!(html.contains(r#"type="application/stickler-bootstrap+json""#));
    assert!(html.contains(r#"id="stickler-bootstrap""#));
    let d = BootstrapDescriptor::from_html(&html).unwrap();
    assert_eq!(d, descriptor());
    assert_eq!(d.public_key.modulus_bits(), 2048);
}

#[tokio::test]
async fn well_known_serves_bare_descriptor_json() {
    let s = serve(|_| {}).await;
    let resp = client()
        .get(format!("{}{WELL_KNOWN_PATH}", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()[CONTENT_TYPE], BOOTSTRAP_MEDIA_TYPE);
    let json: serde_json::Value = serde_json::from_str(&resp.text().await.unwrap()).unwrap();
    assert_eq!(json["key_id"], descriptor().key_id());
    assert_eq!(json["manifest_url"], "http://cdn.test/manifest.json");
    assert_eq!(json["cdn_origin"], "http://cdn.test");
    assert_eq!(
        BootstrapDescriptor::from_json(&json.to_string())
            .unwrap()
            .key_id(),
        descriptor().key_id()
    );
}

#[tokio::test]
async fn no_cache_policy_answers_matching_etag_with_empty_304() {
    let s = serve(|c| c.cache_policy = CachePolicy::NoCache).await;
    let first = client().get(s.origin.url()).send().await.unwrap();
    assert_eq!(first.headers()[CACHE_CONTROL], "no-cache");
    let etag = first.headers()[ETAG].to_str().unwrap().to_string();
    let body = first.bytes().await.unwrap();
    assert_eq!(etag, stickler::origin::etag_for(&body));

    let again = client()
        .get(s.origin.url())
        .header(IF_NONE_MATCH, &etag)
        .send()
        .await
        .unwrap();
    assert_eq!(again.status(), StatusCode::NOT_MODIFIED);
    assert!(again.bytes().await.unwrap().is_empty());

    let stale = client()
        .get(s.origin.url())
        .header(IF_NONE_MATCH, "\"abc\"")
        .send()
        .await
        .unwrap();
    assert_eq!(stale.status(), StatusCode::OK);

    // A new descriptor changes the ETag, so the old one no longer matches.
    let mut d = descriptor();
    d.public_key = PublicKey::from_pem(ROTATED_PUB).unwrap();
    s.origin.set_bootstrap(d);
    let rotated = client()
        .get(s.origin.url())
        .header(IF_NONE_MATCH, &etag)
        .send()
        .await
        .unwrap();
    assert_eq!(rotated.status(), StatusCode::OK);
}

#[tokio::test]
async fn immutable_policy_is_far_future() {
    let s = serve(|_| {}).await;
    let resp = client().get(s.origin.url()).send().await.unwrap();
    let cc = resp.headers()[CACHE_CONTROL].to_str().unwrap();
    assert!(
        cc.contains("immutable") && cc.contains("max-age=31536000"),
        "{cc}"
    );
}

#[tokio::test]
async fn static_blob_with_cors_and_expiry_bounded_caching() {
    let s = serve(|_| {}).await;
    for path in ["/app.js", "/app.js.stkb"] {
        let resp = client()
            .get(format!("{}{path}", s.origin.url()))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        assert_eq!(resp.headers()[CONTENT_TYPE], BLOB_MEDIA_TYPE);
        assert_eq!(resp.headers()[ACCESS_CONTROL_ALLOW_ORIGIN], "*");
        assert_eq!(
            resp.headers()[CACHE_CONTROL],
            format!("public, max-age={TTL}")
        );
        let body = resp.bytes().await.unwrap();
        let blob = AssetBlob::decode(&body).unwrap();
        verify_blob(&blob, publisher_key().public_key(), BUILD_TIME, "/app.js").unwrap();
    }
    // Later requests get a shorter lifetime, and none after expiry.
    s.clock.set(BUILD_TIME + TTL - 10);
    let resp = client()
        .get(format!("{}/app.js", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()[CACHE_CONTROL], "public, max-age=10");
    s.clock.set(BUILD_TIME + TTL);
    let resp = client()
        .get(format!("{}/app.js", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()[CACHE_CONTROL], "no-store");
}

#[tokio::test]
async fn cors_origin_is_configurable_and_on_every_response() {
    let s = serve(|c| c.cors_origin = "https://example.com".into()).await;
    for path in ["/", "/app.js", "/missing", WELL_KNOWN_PATH] {
        let resp = client()
            .get(format!("{}{path}", s.origin.url()))
            .send()
            .await
            .unwrap();
        assert_eq!(
            resp.headers()[ACCESS_CONTROL_ALLOW_ORIGIN],
            "https://example.com",
            "{path}"
        );
    }
}

#[tokio::test]
async fn head_has_headers_but_no_body() {
    let s = serve(|_| {}).await;
    let get = client()
        .get(format!("{}/app.js", s.origin.url()))
        .send()
        .await
        .unwrap();
    let head = client()
        .head(format!("{}/app.js", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(head.status(), StatusCode::OK);
    assert_eq!(head.headers()[ETAG], get.headers()[ETAG]);
    assert_eq!(head.headers()[CONTENT_TYPE], get.headers()[CONTENT_TYPE]);
    assert!(head.bytes().await.unwrap().is_empty());
}

#[tokio::test]
async fn other_methods_are_refused() {
    let s = serve(|_| {}).await;
    let resp = client()
        .post(format!("{}/app.js", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::METHOD_NOT_ALLOWED);
}

#[tokio::test]
async fn private_key_is_never_served() {
    let s = serve(|_| {}).await;
    let key_der = publisher_key().to_pkcs8_der().unwrap();
    let probes = [
        "/../stickler.key",
        "/..%2fstickler.key",
        "/%2e%2e/stickler.key",
        "/%2E%2E%2Fstickler.key",
        "/stickler.key",
        "/./../stickler.key",
        "/css/../../stickler.key",
        "/..\\stickler.key",
        "/missing.js",
        "/",
        WELL_KNOWN_PATH,
        "/app.js",
        "/css/site.css",
        "/manifest.json",
    ];
    for probe in probes {
        // Send the raw path; a URL library would normalize the dots away.
        let url = format!("{}{probe}", s.origin.url());
        let resp = client().get(&url).send().await.unwrap();
        let status = resp.status();
        let body = resp.bytes().await.unwrap();
        assert!(
            !String::from_utf8_lossy(&body).contains("PRIVATE KEY"),
            "{probe}"
        );
        assert!(
            !body
                .windows(64)
                .any(|w| key_der.windows(64).any(|k| k == w)),
            "{probe}"
        );
        if probe.contains("stickler.key") {
            assert_eq!(status, StatusCode::NOT_FOUND, "{probe}");
        }
    }
    let raw = raw_get(s.origin.addr(), "/../stickler.key").await;
    assert!(
        raw.starts_with("HTTP/1.1 404") || raw.starts_with("HTTP/1.1 400"),
        "{raw}"
    );
    assert!(!raw.contains("PRIVATE KEY"));
}

/// One request over a bare socket, so the path reaches the server verbatim.
async fn raw_get(addr: std::net::SocketAddr, path: &str) -> String {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    let request = format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    stream.write_all(request.as_bytes()).await.unwrap();
    let mut out = Vec::new();
    stream.read_to_end(&mut out).await.unwrap();
    String::from_utf8_lossy(&out).into_owned()
}

#[tokio::test]
async fn static_only_origin_needs_no_key_and_unknown_paths_404() {
    let s = serve(|c| assert!(c.key.is_none())).await;
    let resp = client()
        .get(format!("{}/nope.js", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn blob_routes_require_a_key_and_a_ttl() {
    let route = |ttl| DynamicRoute {
        pattern: "/api/*".into(),
        generator: "time".into(),
        ttl,
        kind: RouteKind::Blob,
    };
    let mut config = OriginConfig::static_only(std::env::temp_dir(), descriptor());
    config.static_dir = None;
    config.dynamic_routes = vec![route(60)];
    assert!(matches!(
        Origin::new(config.clone()).serve().await,
        Err(OriginError::MissingKey(_))
    ));
    config.key = Some(publisher_key());
    config.dynamic_routes = vec![route(0)];
    assert!(matches!(
        Origin::new(config.clone()).serve().await,
        Err(OriginError::ZeroTtl(_))
    ));
    config.dynamic_routes[0].generator = "nonexistent".into();
    assert!(matches!(
        Origin::new(config).serve().await,
        Err(OriginError::UnknownGenerator(..))
    ));
}

#[tokio::test]
async fn dynamic_blob_and_channel_routes() {
    let s = serve(|c| {
        c.key = Some(publisher_key());
        c.dynamic_routes = vec![
            DynamicRoute {
                pattern: "/api/feed".into(),
                generator: "time".into(),
                ttl: 60,
                kind: RouteKind::Blob,
            },
            DynamicRoute {
                pattern: "/live/**".into(),
                generator: "echo".into(),
                ttl: 0,
                kind: RouteKind::Channel,
            },
        ];
    })
    .await;

    let resp = client()
        .get(format!("{}/api/feed", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()[CONTENT_TYPE], BLOB_MEDIA_TYPE);
    assert_eq!(resp.headers()[CACHE_CONTROL], "public, max-age=60");
    let blob = AssetBlob::decode(&resp.bytes().await.unwrap()).unwrap();
    let key = publisher_key();
    let p = verify_blob(&blob, key.public_key(), BUILD_TIME + 59, "/api/feed").unwrap();
    assert_eq!(p.expiry, BUILD_TIME + 60);
    assert_eq!(p.content, format!("{{\"now\":{BUILD_TIME}}}").into_bytes());
    assert!(verify_blob(&blob, key.public_key(), BUILD_TIME + 60, "/api/feed").is_err());

    let resp = client()
        .get(format!("{}/live/x?y=1", s.origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()[CACHE_CONTROL], "no-store");
    let body = resp.bytes().await.unwrap();
    assert_eq!(&body[..], b"/live/x?y=1");
    assert!(!body.starts_with(b"STKB"));
}

#[tokio::test]
async fn failing_generator_is_a_500() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = OriginConfig::static_only(dir.path(), descriptor());
    config.dynamic_routes = vec![DynamicRoute {
        pattern: "/broken".into(),
        generator: "fails".into(),
        ttl: 0,
        kind: RouteKind::Channel,
    }];
    let origin = Origin::new(config)
        .with_generator(
            "fails",
            |_: &stickler::origin::DynamicRequest| -> Result<Generated, GeneratorError> {
                Err(GeneratorError("backend down".into()))
            },
        )
        .serve()
        .await
        .unwrap();
    let resp = client()
        .get(format!("{}/broken", origin.url()))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::INTERNAL_SERVER_ERROR);
}
