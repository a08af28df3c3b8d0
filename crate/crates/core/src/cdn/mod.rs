//! A caching reverse proxy that can be told to lie.
//!
//! Honest mode caches upstream responses for their `max-age` and relays
//! headers unchanged. The other [`CdnBehavior`]s model what an untrusted
//! intermediary can do to content in flight. Admin endpoints live on a
//! separate listener so scenarios can be scripted from outside.

mod behavior;
mod cache;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::{Body, Bytes};
use axum::extract::State;
use axum::http::{header, HeaderName, HeaderValue, Method, StatusCode, Uri};
use axum::response::Response;
use axum::routing::{get, post, put};
use axum::{Json, Router};

use crate::clock::{Clock, SystemClock};
use crate::format::AssetBlob;
use crate::server::ServerHandle;

pub use behavior::{BehaviorError, BehaviorSet, CdnBehavior};
pub use cache::{Cache, CacheEntry, CacheListing};

/// Response headers copied from upstream.
const RELAYED_HEADERS: [HeaderName; 6] = [
    header::CONTENT_TYPE,
    header::CACHE_CONTROL,
    header::ETAG,
    header::EXPIRES,
    header::ACCESS_CONTROL_ALLOW_ORIGIN,
    header::LAST_MODIFIED,
];

#[derive(Debug, Clone)]
pub struct CdnConfig {
    pub listen: SocketAddr,
    /// `None` disables the admin listener.
    pub admin_listen: Option<SocketAddr>,
    /// Base URL of the origin, e.g. `http://127.0.0.1:8000`.
    pub upstream: String,
    pub behaviors: Vec<CdnBehavior>,
}

impl CdnConfig {
    pub fn honest(upstream: impl Into<String>) -> Self {
        Self {
            listen: crate::server::loopback(),
            admin_listen: Some(crate::server::loopback()),
            upstream: upstream.into(),
            behaviors: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CdnError {
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("http client: {0}")]
    Client(#[from] reqwest::Error),
}

struct CdnState {
    upstream: String,
    behaviors: RwLock<BehaviorSet>,
    cache: Cache,
    client: reqwest::Client,
    clock: Arc<dyn Clock>,
    upstream_fetches: AtomicU64,
}

pub struct Cdn {
    config: CdnConfig,
    clock: Arc<dyn Clock>,
}

impl Cdn {
    pub fn new(config: CdnConfig) -> Self {
        Self {
            config,
            clock: Arc::new(SystemClock),
        }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub async fn serve(self) -> Result<CdnHandle, CdnError> {
        let state = Arc::new(CdnState {
            upstream: self.config.upstream.trim_end_matches('/').to_string(),
            behaviors: RwLock::new(BehaviorSet::new(self.config.behaviors)?),
            cache: Cache::new(),
            client: reqwest::Client::builder().build()?,
            clock: self.clock,
            upstream_fetches: AtomicU64::new(0),
        });
        let proxy = ServerHandle::bind(
            self.config.listen,
            Router::new().fallback(proxy).with_state(state.clone()),
        )
        .await?;
        let admin = match self.config.admin_listen {
            Some(addr) => Some(ServerHandle::bind(addr, admin_router(state.clone())).await?),
            None => None,
        };
        Ok(CdnHandle {
            proxy,
            admin,
            state,
        })
    }
}

/// A running CDN. Test code drives it directly; external scripts use the
/// admin endpoints.
pub struct CdnHandle {
    proxy: ServerHandle,
    admin: Option<ServerHandle>,
    state: Arc<CdnState>,
}

impl CdnHandle {
    pub fn url(&self) -> String {
        self.proxy.url()
    }

    pub fn admin_url(&self) -> Option<String> {
        self.admin.as_ref().map(ServerHandle::url)
    }

    pub fn flush(&self) {
        self.state.cache.flush();
    }

    pub fn snapshot(&self) -> Vec<CacheListing> {
        self.state.cache.snapshot()
    }

    pub fn set_behaviors(&self, behaviors: Vec<CdnBehavior>) -> Result<(), BehaviorError> {
        let set = BehaviorSet::new(behaviors)?;
        *self.state.behaviors.write().expect("behaviors lock") = set;
        Ok(())
    }

    /// Requests forwarded to the upstream so far.
    pub fn upstream_fetches(&self) -> u64 {
        self.state.upstream_fetches.load(Ordering::SeqCst)
    }

    pub async fn shutdown(self) {
        if let Some(admin) = self.admin {
            admin.shutdown().await;
        }
        self.proxy.shutdown().await;
    }

    pub async fn wait(self) -> std::io::Result<()> {
        let _admin = self.admin;
        self.proxy.wait().await
    }
}

fn admin_router(state: Arc<CdnState>) -> Router {
    Router::new()
        .route(
            "/admin/flush",
            post(|State(s): State<Arc<CdnState>>| async move {
                s.cache.flush();
                StatusCode::NO_CONTENT
            }),
        )
        .route(
            "/admin/snapshot",
            get(|State(s): State<Arc<CdnState>>| async move { Json(s.cache.snapshot()) }),
        )
        .route(
            "/admin/behaviors",
            put(|State(s): State<Arc<CdnState>>, body: Bytes| async move {
                match serde_json::from_slice::<Vec<CdnBehavior>>(&body)
                    .map_err(BehaviorError::from)
                    .and_then(BehaviorSet::new)
                {
                    Ok(set) => {
                        *s.behaviors.write().expect("behaviors lock") = set;
                        (StatusCode::NO_CONTENT, String::new())
                    }
                    Err(e) => (StatusCode::BAD_REQUEST, e.to_string()),
                }
            })
            .get(|State(s): State<Arc<CdnState>>| async move {
                Json(s.behaviors.read().expect("behaviors lock").behaviors())
            }),
        )
        .with_state(state)
}

/// A response as the CDN holds it before delivery.
#[derive(Debug, Clone)]
struct Served {
    status: u16,
    headers: Vec<(String, String)>,
    body: Vec<u8>,
}

impl Served {
    fn status(status: StatusCode, msg: &str) -> Self {
        Self {
            status: status.as_u16(),
            headers: vec![("content-type".into(), "text/plain".into())],
            body: msg.as_bytes().to_vec(),
        }
    }

    fn from_entry(e: CacheEntry) -> Self {
        Self {
            status: e.status,
            headers: e.headers,
            body: e.body,
        }
    }

    fn into_response(self, head: bool) -> Response {
        let mut builder = Response::builder().status(self.status);
        for (name, value) in &self.headers {
            if let (Ok(n), Ok(v)) = (
                HeaderName::try_from(name.as_str()),
                HeaderValue::from_str(value),
            ) {
                builder = builder.header(n, v);
            }
        }
        let body = if head {
            Body::empty()
        } else {
            Body::from(self.body)
        };
        builder.body(body).unwrap_or_else(|_| {
            Response::builder()
                .status(StatusCode::BAD_GATEWAY)
                .body(Body::empty())
                .expect("empty 502")
        })
    }
}

async fn proxy(State(state): State<Arc<CdnState>>, method: Method, uri: Uri) -> Response {
    let head = method == Method::HEAD;
    if method != Method::GET && !head {
        return Served::status(StatusCode::METHOD_NOT_ALLOWED, "method not allowed")
            .into_response(false);
    }
    let path = uri.path().to_string();
    let key = uri
        .path_and_query()
        .map(|pq| pq.as_str().to_string())
        .unwrap_or_else(|| path.clone());
    let behavior = state
        .behaviors
        .read()
        .expect("behaviors lock")
        .select(&path)
        .cloned();
    let served = match behavior {
        None | Some(CdnBehavior::Honest) => state.honest(&key).await,
        Some(CdnBehavior::Drop { .. }) => Served::status(StatusCode::NOT_FOUND, "not found"),
        Some(CdnBehavior::SwapUrl { to_url, .. }) => state.honest(&to_url).await,
        Some(CdnBehavior::ReplayStale { .. }) => state.replay(&key).await,
        Some(CdnBehavior::TamperBytes { byte_offset, .. }) => {
            let mut s = state.honest(&key).await;
            if s.status == 200 && !s.body.is_empty() {
                let at = byte_offset.min(s.body.len() - 1);
                s.body[at] ^= 0x01;
            }
            s
        }
        Some(CdnBehavior::InjectPrefix { bytes, .. }) => {
            let mut s = state.honest(&key).await;
            if s.status == 200 {
                let mut body = bytes.into_bytes();
                body.extend_from_slice(&s.body);
                s.body = body;
            }
            s
        }
        Some(CdnBehavior::StripBlob { .. }) => {
            let mut s = state.honest(&key).await;
            if s.status == 200 {
                if let Some(content) = AssetBlob::decode(&s.body)
                    .ok()
                    .and_then(|b| b.unverified_payload().ok())
                    .map(|p| p.content)
                {
                    s.body = content;
                }
            }
            s
        }
    };
    served.into_response(head)
}

impl CdnState {
    async fn honest(&self, key: &str) -> Served {
        let now = self.clock.now();
        if let Some(hit) = self.cache.fresh(key, now) {
            return Served::from_entry(hit);
        }
        match self.fetch_upstream(key).await {
            Ok(served) => {
                if let Some(max_age) = cacheable_max_age(&served) {
                    self.cache
                        .store(self.entry(key, &served, now, max_age, false));
                }
                served
            }
            Err(s) => s,
        }
    }

    async fn replay(&self, key: &str) -> Served {
        if let Some(old) = self.cache.pin_oldest(key) {
            return Served::from_entry(old);
        }
        let now = self.clock.now();
        match self.fetch_upstream(key).await {
            Ok(served) => {
                if served.status == 200 {
                    let max_age = cacheable_max_age(&served).unwrap_or(0);
                    self.cache
                        .store(self.entry(key, &served, now, max_age, true));
                }
                served
            }
            Err(s) => s,
        }
    }

    fn entry(
        &self,
        key: &str,
        served: &Served,
        now: u64,
        max_age: u64,
        pinned: bool,
    ) -> CacheEntry {
        CacheEntry {
            url: key.to_string(),
            status: served.status,
            body: served.body.clone(),
            headers: served.headers.clone(),
            stored_at: now,
            max_age,
            pinned_stale: pinned,
        }
    }

    async fn fetch_upstream(&self, key: &str) -> Result<Served, Served> {
        self.upstream_fetches.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}{}", self.upstream, key);
        let unreachable = |_| Served::status(StatusCode::BAD_GATEWAY, "upstream unreachable");
        let resp = self.client.get(&url).send().await.map_err(unreachable)?;
        let status = resp.status().as_u16();
        let headers = RELAYED_HEADERS
            .iter()
            .filter_map(|name| {
                resp.headers()
                    .get(name)
                    .and_then(|v| v.to_str().ok())
                    .map(|v| (name.as_str().to_string(), v.to_string()))
            })
            .collect();
        let body = resp.bytes().await.map_err(unreachable)?.to_vec();
        Ok(Served {
            status,
            headers,
            body,
        })
    }
}

/// `Some(max_age)` when an upstream response may be cached.
fn cacheable_max_age(served: &Served) -> Option<u64> {
    if served.status != 200 {
        return None;
    }
    let cc = served
        .headers
        .iter()
        .find(|(n, _)| n == header::CACHE_CONTROL.as_str())
        .map(|(_, v)| v.to_ascii_lowercase())?;
    let mut max_age = None;
    for directive in cc.split(',').map(str::trim) {
        match directive {
            "no-store" | "no-cache" | "private" => return None,
            d => {
                if let Some(v) = d.strip_prefix("max-age=") {
                    max_age = v.trim_matches('"').parse::<u64>().ok();
                }
            }
        }
    }
    max_age.filter(|&m| m > 0)
}
