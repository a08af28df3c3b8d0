//! On-disk origin configuration (JSON), as used by `stickler origin serve`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BootstrapDescriptor, CachePolicy, DynamicRoute, OriginConfig, OriginError, RouteKind};
use crate::format::{PublicKey, SigningKeyPair};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginConfigFile {
    pub listen: SocketAddr,
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    /// PEM public key published in the descriptor.
    pub public_key_file: PathBuf,
    pub manifest_url: String,
    pub cdn_origin: String,
    #[serde(default)]
    pub cache_policy: CachePolicy,
    #[serde(default = "any_origin")]
    pub cors_origin: String,
    #[serde(default)]
    pub dynamic_routes: Vec<RouteSpec>,
    /// PKCS#8 private key; only needed for blob dynamic routes.
    #[serde(default)]
    pub key_file: Option<PathBuf>,
    #[serde(default)]
    pub bootloader_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub pattern: String,
    pub generator: String,
    #[serde(default)]
    pub ttl: u64,
    pub kind: RouteKind,
}

fn any_origin() -> String {
    "*".to_string()
}

impl OriginConfigFile {
    pub fn load(path: &Path) -> Result<Self, OriginError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| OriginError::Config(format!("{}: {e}", path.display())))
    }

    /// Reads referenced key files. Relative paths resolve against `base`.
    pub fn resolve(self, base: &Path) -> Result<OriginConfig, OriginError> {
        let at = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let pem = std::fs::read_to_string(at(&self.public_key_file))?;
        let public_key =
            PublicKey::from_pem(&pem).map_err(|e| OriginError::Config(e.to_string()))?;
        let key = match &self.key_file {
            Some(p) => {
                let pem = std::fs::read_to_string(at(p))?;
                let key = SigningKeyPair::from_pkcs8_pem(&pem)
                    .map_err(|e| OriginError::Config(e.to_string()))?;
                if key.public_key() != &public_key {
                    return Err(OriginError::Config(
                        "key_file does not match public_key_file".into(),
                    ));
                }
                Some(key)
            }
            None => None,
        };
        let bootloader_script = match &self.bootloader_file {
            Some(p) => Some(std::fs::read_to_string(at(p))?),
            None => None,
        };
        Ok(OriginConfig {
            listen: self.listen,
            static_dir: self.static_dir.as_deref().map(at),
            bootstrap: BootstrapDescriptor::new(public_key, self.manifest_url, self.cdn_origin)?,
            cache_policy: self.cache_policy,
            cors_origin: self.cors_origin,
            dynamic_routes: self
                .dynamic_routes
                .into_iter()
                .map(|r| DynamicRoute {
                    pattern: r.pattern,
                    generator: r.generator,
                    ttl: r.ttl,
                    kind: r.kind,
                })
                .collect(),
            key,
            bootloader_script,
        })
    }
}
