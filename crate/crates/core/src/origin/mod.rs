//! The publisher's own server.
//!
//! It is the only party clients trust directly: it hands out the bootstrap
//! descriptor, serves dynamic content (signed for CDN caching, or raw over
//! the direct channel), and acts as the CDN's upstream for built blobs.
//! A static-only deployment runs without any private key.

mod config;
mod descriptor;
mod dynamic;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Body;
use axum::extract::State;
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::Response;
use axum::Router;
use globset::{Glob, GlobMatcher};
use percent_encoding::percent_decode_str;
use sha2::{Digest, Sha256};

use crate::clock::{Clock, SystemClock};
use crate::format::{
    sign_asset, AssetBlob, AssetPayload, SigningKeyPair, BLOB_EXTENSION, BLOB_MEDIA_TYPE,
};
use crate::server::ServerHandle;

pub use config::{OriginConfigFile, RouteSpec};
pub use descriptor::{
    BootstrapDescriptor, DescriptorError, BOOTSTRAP_ELEMENT_ID, BOOTSTRAP_MEDIA_TYPE,
    WELL_KNOWN_PATH,
};
pub use dynamic::{DynamicRequest, Generated, Generator, GeneratorError};

/// A year; used for immutable responses.
pub const FAR_FUTURE_MAX_AGE: u64 = 31_536_000;

/// How the bootstrap page may be cached by browsers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// Cache forever; key changes are picked up by the client-side refresh retry.
    #[default]
    Immutable,
    /// Revalidate on every visit; unchanged pages cost a 304.
    NoCache,
}

impl CachePolicy {
    fn header_value(self) -> &'static str {
        match self {
            CachePolicy::Immutable => "public, max-age=31536000, immutable",
            CachePolicy::NoCache => "no-cache",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKind {
    /// Signed blob; cacheable by the CDN for `ttl` seconds.
    Blob,
    /// Raw bytes for direct fetches; never cached.
    Channel,
}

#[derive(Debug, Clone)]
pub struct DynamicRoute {
    pub pattern: String,
    pub generator: String,
    pub ttl: u64,
    pub kind: RouteKind,
}

#[derive(Debug, Clone)]
pub struct OriginConfig {
    pub listen: SocketAddr,
    /// Built blob tree; `None` serves no static assets.
    pub static_dir: Option<PathBuf>,
    pub bootstrap: BootstrapDescriptor,
    pub cache_policy: CachePolicy,
    pub cors_origin: String,
    pub dynamic_routes: Vec<DynamicRoute>,
    /// Needed only for blob dynamic routes.
    pub key: Option<SigningKeyPair>,
    pub bootloader_script: Option<String>,
}

impl OriginConfig {
    pub fn static_only(static_dir: impl Into<PathBuf>, bootstrap: BootstrapDescriptor) -> Self {
        Self {
            listen: crate::server::loopback(),
            static_dir: Some(static_dir.into()),
            bootstrap,
            cache_policy: CachePolicy::default(),
            cors_origin: "*".to_string(),
            dynamic_routes: Vec::new(),
            key: None,
            bootloader_script: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OriginError {
    #[error("dynamic route {0} signs blobs but no signing key is loaded")]
    MissingKey(String),
    #[error("dynamic route {0} names unknown generator {1:?}")]
    UnknownGenerator(String, String),
    #[error("dynamic blob route {0} needs a positive ttl")]
    ZeroTtl(String),
    #[error("bad route pattern {0:?}: {1}")]
    BadPattern(String, globset::Error),
    #[error("static dir {0}: {1}")]
    StaticDir(PathBuf, std::io::Error),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct CompiledRoute {
    route: DynamicRoute,
    matcher: GlobMatcher,
    generator: Arc<dyn Generator>,
}

struct OriginState {
    bootstrap: RwLock<BootstrapDescriptor>,
    static_root: Option<PathBuf>,
    cache_policy: CachePolicy,
    cors_origin: HeaderValue,
    routes: Vec<CompiledRoute>,
    key: Option<SigningKeyPair>,
    bootloader_script: Option<String>,
    clock: Arc<dyn Clock>,
}

/// Builder for an origin server.
pub struct Origin {
    config: OriginConfig,
    generators: HashMap<String, Arc<dyn Generator>>,
    clock: Arc<dyn Clock>,
}

impl Origin {
    pub fn new(config: OriginConfig) -> Self {
        Self {
            config,
            generators: dynamic::builtin_generators(),
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_generator(
        mut self,
        id: impl Into<String>,
        generator: impl Generator + 'static,
    ) -> Self {
        self.generators.insert(id.into(), Arc::new(generator));
        self
    }

    fn into_state(self) -> Result<OriginState, OriginError> {
        let Origin {
            config,
            generators,
            clock,
        } = self;
        config.bootstrap.validate()?;
        let mut routes = Vec::new();
        for route in config.dynamic_routes {
            let generator = generators.get(&route.generator).cloned().ok_or_else(|| {
                OriginError::UnknownGenerator(route.pattern.clone(), route.generator.clone())
            })?;
            if route.kind == RouteKind::Blob {
                if config.key.is_none() {
                    return Err(OriginError::MissingKey(route.pattern));
                }
                if route.ttl == 0 {
                    return Err(OriginError::ZeroTtl(route.pattern));
                }
            }
            let matcher = Glob::new(&route.pattern)
                .map_err(|e| OriginError::BadPattern(route.pattern.clone(), e))?
                .compile_matcher();
            routes.push(CompiledRoute {
                route,
                matcher,
                generator,
            });
        }
        let static_root = match config.static_dir {
            Some(dir) => Some(
                dir.canonicalize()
                    .map_err(|e| OriginError::StaticDir(dir, e))?,
            ),
            None => None,
        };
        let cors_origin = HeaderValue::from_str(&config.cors_origin).map_err(|_| {
            OriginError::Config(format!("bad cors origin {:?}", config.cors_origin))
        })?;
        Ok(OriginState {
            bootstrap: RwLock::new(config.bootstrap),
            static_root,
            cache_policy: config.cache_policy,
            cors_origin,
            routes,
            key: config.key,
            bootloader_script: config.bootloader_script,
            clock,
        })
    }

    /// The axum router, for embedding into another server.
    pub fn router(self) -> Result<Router, OriginError> {
        Ok(router_for(Arc::new(self.into_state()?)))
    }

    pub async fn serve(self) -> Result<OriginHandle, OriginError> {
        let listen = self.config.listen;
        let state = Arc::new(self.into_state()?);
        let server = ServerHandle::bind(listen, router_for(state.clone())).await?;
        Ok(OriginHandle { server, state })
    }
}

fn router_for(state: Arc<OriginState>) -> Router {
    Router::new().fallback(handle).with_state(state)
}

/// A running origin.
pub struct OriginHandle {
    server: ServerHandle,
    state: Arc<OriginState>,
}

impl OriginHandle {
    pub fn url(&self) -> String {
        self.server.url()
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr()
    }

    /// Swap the descriptor served to new visitors (key rotation).
    pub fn set_bootstrap(&self, descriptor: BootstrapDescriptor) {
        *self.state.bootstrap.write().expect("bootstrap lock") = descriptor;
    }

    pub async fn shutdown(self) {
        self.server.shutdown().await
    }

    pub async fn wait(self) -> std::io::Result<()> {
        self.server.wait().await
    }
}

async fn handle(
    State(state): State<Arc<OriginState>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
) -> Response {
    let head = method == Method::HEAD;
    if method != Method::GET && !head {
        return state.finish(
            plain(StatusCode::METHOD_NOT_ALLOWED, "method not allowed"),
            head,
        );
    }
    let path = uri.path();
    let response = if path == "/" {
        let html = {
            let d = state.bootstrap.read().expect("bootstrap lock");
            d.render_html(state.bootloader_script.as_deref())
        };
        state.bootstrap_response(html.into_bytes(), "text/html; charset=utf-8", &headers)
    } else if path == WELL_KNOWN_PATH {
        let json = state.bootstrap.read().expect("bootstrap lock").to_json();
        state.bootstrap_response(json.into_bytes(), BOOTSTRAP_MEDIA_TYPE, &headers)
    } else if let Some(route) = state.routes.iter().find(|r| r.matcher.is_match(path)) {
        state.serve_dynamic(route, path, uri.query())
    } else {
        state.serve_static(path, &headers).await
    };
    state.finish(response, head)
}

impl OriginState {
    fn finish(&self, mut response: Response, head: bool) -> Response {
        response.headers_mut().insert(
            header::ACCESS_CONTROL_ALLOW_ORIGIN,
            self.cors_origin.clone(),
        );
        if head {
            let (parts, _) = response.into_parts();
            return Response::from_parts(parts, Body::empty());
        }
        response
    }

    fn bootstrap_response(&self, body: Vec<u8>, content_type: &str, req: &HeaderMap) -> Response {
        let etag = etag_for(&body);
        let cache_control = self.cache_policy.header_value();
        if if_none_match(req, &etag) {
            return not_modified(&etag, cache_control);
        }
        Response::builder()
            .status(StatusCode::OK)
            .header(header::CONTENT_TYPE, content_type)
            .header(header::CACHE_CONTROL, cache_control)
            .header(header::ETAG, etag)
            .body(Body::from(body))
            .expect("static headers are valid")
    }

    fn serve_dynamic(&self, compiled: &CompiledRoute, path: &str, query: Option<&str>) -> Response {
        let now = self.clock.now();
        let request = DynamicRequest {
            path: path.to_string(),
            query: query.map(str::to_string),
            now,
        };
        let generated = match compiled.generator.generate(&request) {
            Ok(g) => g,
            Err(e) => {
                return plain(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    &format!("generator failed: {e}"),
                )
            }
        };
        match compiled.route.kind {
            RouteKind::Channel => Response::builder()
                .status(StatusCode::OK)
                .header(header::CONTENT_TYPE, generated.content_type)
                .header(header::CACHE_CONTROL, "no-store")
                .body(Body::from(generated.content))
                .expect("generator content type"),
            RouteKind::Blob => {
                let ttl = compiled.route.ttl;
                let payload =
                    AssetPayload::new(path, now + ttl, generated.content_type, generated.content);
                let key = self
                    .key
                    .as_ref()
                    .expect("blob routes checked for a key at startup");
                let encoded = sign_asset(&payload, key).and_then(|b| Ok(b.encode()?));
                match encoded {
                    Ok(body) => Response::builder()
                        .status(StatusCode::OK)
                        .header(header::CONTENT_TYPE, BLOB_MEDIA_TYPE)
                        .header(header::CACHE_CONTROL, format!("public, max-age={ttl}"))
                        .header(header::ETAG, etag_for(&body))
                        .body(Body::from(body))
                        .expect("blob headers"),
                    Err(e) => plain(
                        StatusCode::INTERNAL_SERVER_ERROR,
                        &format!("signing failed: {e}"),
                    ),
                }
            }
        }
    }

    async fn serve_static(&self, path: &str, req: &HeaderMap) -> Response {
        let Some(root) = &self.static_root else {
            return not_found();
        };
        let Some(file) = resolve_static(root, path) else {
            return not_found();
        };
        let body = match tokio::fs::read(&file).await {
            Ok(b) => b,
            Err(_) => return not_found(),
        };
        let etag = etag_for(&body);
        let cache_control = blob_cache_control(&body, self.clock.now());
        if if_none_match(req, &etag) {
            return not_modified(&etag, &cache_control);
        }
        Response::builder()
            .status(StatusCode::OK)
            .header(header::CONTENT_TYPE, BLOB_MEDIA_TYPE)
            .header(header::CACHE_CONTROL, cache_control)
            .header(header::ETAG, etag)
            .body(Body::from(body))
            .expect("static headers")
    }
}

/// Maps a request path onto a `.stkb` file under `root`, refusing anything
/// that could step outside it. `/a.js` and `/a.js.stkb` name the same file.
fn resolve_static(root: &Path, request_path: &str) -> Option<PathBuf> {
    let decoded = percent_decode_str(request_path).decode_utf8().ok()?;
    let rel = decoded.strip_prefix('/')?;
    if rel.is_empty() || rel.contains('\\') || rel.contains('\0') {
        return None;
    }
    let mut candidate = root.to_path_buf();
    for segment in rel.split('/') {
        let mut parts = Path::new(segment).components();
        match (parts.next(), parts.next()) {
            (Some(Component::Normal(_)), None) => candidate.push(segment),
            _ => return None,
        }
    }
    let suffix = format!(".{BLOB_EXTENSION}");
    if !rel.ends_with(&suffix) {
        let mut name = candidate.into_os_string();
        name.push(&suffix);
        candidate = PathBuf::from(name);
    }
    // symlinks must not lead out of the tree either
    let real = candidate.canonicalize().ok()?;
    (real.starts_with(root) && real.is_file()).then_some(real)
}

/// Cache lifetime bounded by the blob's own expiry.
pub fn blob_cache_control(body: &[u8], now: u64) -> String {
    let expiry = AssetBlob::decode(body)
        .ok()
        .and_then(|b| b.unverified_payload().ok())
        .map(|p| p.expiry);
    match expiry {
        Some(0) => format!("public, max-age={FAR_FUTURE_MAX_AGE}, immutable"),
        Some(e) if e > now => format!("public, max-age={}", e - now),
        _ => "no-store".to_string(),
    }
}

/// Strong ETag: quoted hex SHA-256 of the body.
pub fn etag_for(body: &[u8]) -> String {
    format!("\"{}\"", hex::encode(Sha256::digest(body)))
}

fn if_none_match(req: &HeaderMap, etag: &str) -> bool {
    let Some(value) = req.get(header::IF_NONE_MATCH).and_then(|v| v.to_str().ok()) else {
        return false;
    };
    value
        .split(',')
        .map(str::trim)
        .any(|candidate| candidate == "*" || candidate.trim_start_matches("W/") == etag)
}

fn not_modified(etag: &str, cache_control: &str) -> Response {
    Response::builder()
        .status(StatusCode::NOT_MODIFIED)
        .header(header::ETAG, etag)
        .header(header::CACHE_CONTROL, cache_control)
        .body(Body::empty())
        .expect("304 headers")
}

fn not_found() -> Response {
    plain(StatusCode::NOT_FOUND, "not found")
}

fn plain(status: StatusCode, msg: &str) -> Response {
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "text/plain; charset=utf-8")
        .header(header::CACHE_CONTROL, "no-store")
        .body(Body::from(msg.to_string()))
        .expect("plain response")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traversal_never_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().canonicalize().unwrap();
        std::fs::write(root.join("a.js.stkb"), b"x").unwrap();
        std::fs::create_dir(root.join("sub")).unwrap();
        std::fs::write(root.join("sub/b.css.stkb"), b"x").unwrap();
        assert_eq!(resolve_static(&root, "/a.js"), Some(root.join("a.js.stkb")));
        assert_eq!(
            resolve_static(&root, "/a.js.stkb"),
            Some(root.join("a.js.stkb"))
        );
        assert_eq!(
            resolve_static(&root, "/sub/b.css"),
            Some(root.join("sub/b.css.stkb"))
        );
        for bad in [
            "/../key",
            "/sub/../a.js",
            "/%2e%2e/key",
            "/sub/%2E%2E/a.js",
            "/./a.js",
            "//a.js",
            "/",
            "/sub",
            "/a.js%00",
            "/..%5ckey",
        ] {
            assert_eq!(resolve_static(&root, bad), None, "{bad}");
        }
    }

    #[cfg(unix)]
    #[test]
    fn symlink_out_of_tree_is_refused() {
        let outside = tempfile::tempdir().unwrap();
        std::fs::write(outside.path().join("secret.stkb"), b"k").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().canonicalize().unwrap();
        std::os::unix::fs::symlink(outside.path().join("secret.stkb"), root.join("s.stkb"))
            .unwrap();
        assert_eq!(resolve_static(&root, "/s"), None);
    }

    #[test]
    fn cache_control_tracks_expiry() {
        let key = crate::format::test_publisher_key();
        let blob = |expiry| {
            sign_asset(&AssetPayload::new("/a", expiry, "t", b"x".to_vec()), &key)
                .unwrap()
                .encode()
                .unwrap()
        };
        assert_eq!(blob_cache_control(&blob(1_000), 400), "public, max-age=600");
        assert_eq!(blob_cache_control(&blob(1_000), 1_000), "no-store");
        assert!(blob_cache_control(&blob(0), 400).contains("immutable"));
        assert_eq!(blob_cache_control(b"garbage", 0), "no-store");
    }

    proptest::proptest! {
        #[test]
        fn max_age_never_outlives_the_blob(expiry in 1u64..1 << 40, now in 0u64..1 << 40) {
            let key = crate::format::test_publisher_key();
            let body = sign_asset(&AssetPayload::new("/a", expiry, "t", b"x".to_vec()), &key)
                .unwrap()
                .encode()
                .unwrap();
            let header = blob_cache_control(&body, now);
            match header.strip_prefix("public, max-age=") {
                Some(age) => {
                    let age: u64 = age.parse().unwrap();
                    proptest::prop_assert!(now < expiry && age <= expiry - now);
                }
                None => proptest::prop_assert!(header == "no-store" && now >= expiry),
            }
        }
    }

    #[test]
    fn conditional_matching() {
        let etag = etag_for(b"body");
        let mut h = HeaderMap::new();
        assert!(!if_none_match(&h, &etag));
        h.insert(
            header::IF_NONE_MATCH,
            HeaderValue::from_str(&format!("\"x\", W/{etag}")).unwrap(),
        );
        assert!(if_none_match(&h, &etag));
        h.insert(header::IF_NONE_MATCH, HeaderValue::from_static("\"other\""));
        assert!(!if_none_match(&h, &etag));
    }
}
