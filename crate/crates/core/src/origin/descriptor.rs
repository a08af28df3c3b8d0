use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use url::Url;

use crate::format::{KeyError, PublicKey};

pub const BOOTSTRAP_MEDIA_TYPE: &str = "application/stickler-bootstrap+json";
pub const BOOTSTRAP_ELEMENT_ID: &str = "stickler-bootstrap";
pub const WELL_KNOWN_PATH: &str = "/.well-known/stickler-bootstrap";

/// What a client needs before touching the CDN: whose signatures to accept
/// and where the manifest lives. Only ever served by the publisher itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapDescriptor {
    pub public_key: PublicKey,
    pub manifest_url: String,
    pub cdn_origin: String,
}

#[derive(Debug, thiserror::Error)]
pub enum DescriptorError {
    #[error("descriptor is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("descriptor key: {0}")]
    Key(#[from] KeyError),
    #[error("descriptor key_id {claimed} does not match its key ({actual})")]
    KeyIdMismatch { claimed: String, actual: String },
    #[error("invalid url {0:?}")]
    BadUrl(String),
    #[error("manifest url {manifest_url} is not on cdn origin {cdn_origin}")]
    OriginMismatch {
        manifest_url: String,
        cdn_origin: String,
    },
    #[error("no bootstrap block in page")]
    MissingBlock,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDescriptor {
    cdn_origin: String,
    key_id: String,
    manifest_url: String,
    public_key: String,
}

impl BootstrapDescriptor {
    pub fn new(
        public_key: PublicKey,
        manifest_url: impl Into<String>,
        cdn_origin: impl Into<String>,
    ) -> Result<Self, DescriptorError> {
        let d = Self {
            public_key,
            manifest_url: manifest_url.into(),
            cdn_origin: cdn_origin.into(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn key_id(&self) -> &str {
        self.public_key.key_id()
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        let manifest = parse_url(&self.manifest_url)?;
        let cdn = parse_url(&self.cdn_origin)?;
        if manifest.origin() != cdn.origin() {
            return Err(DescriptorError::OriginMismatch {
                manifest_url: self.manifest_url.clone(),
                cdn_origin: self.cdn_origin.clone(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&WireDescriptor {
            cdn_origin: self.cdn_origin.clone(),
            key_id: self.key_id().to_string(),
            manifest_url: self.manifest_url.clone(),
            public_key: self.public_key.to_base64(),
        })
        .expect("descriptor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DescriptorError> {
        let wire: WireDescriptor = serde_json::from_str(text)?;
        let public_key = PublicKey::from_base64(&wire.public_key)?;
        if public_key.key_id() != wire.key_id {
            return Err(DescriptorError::KeyIdMismatch {
                claimed: wire.key_id,
                actual: public_key.key_id().to_string(),
            });
        }
        Self::new(public_key, wire.manifest_url, wire.cdn_origin)
    }

    /// The publisher's landing page: the descriptor as an inert JSON block,
    /// followed by the bootloader script if one is supplied.
    pub fn render_html(&self, bootloader_script: Option<&str>) -> String {
        // "</" would end the script element early.
        let json = self.to_json().replace("</", "<\\/");
        let mut html = String::from("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
        html.push_str(&format!(
            "<script type=\"{BOOTSTRAP_MEDIA_TYPE}\" id=\"{BOOTSTRAP_ELEMENT_ID}\">{json}</script>\n"
        ));
        if let Some(script) = bootloader_script {
            html.push_str("<script>\n");
            html.push_str(script);
            html.push_str("\n</script>\n");
        }
        html.push_str("</head>\n<body></body>\n</html>\n");
        html
    }

    pub fn from_html(html: &str) -> Result<Self, DescriptorError> {
        static BLOCK: OnceLock<Regex> = OnceLock::new();
        let re = BLOCK.get_or_init(|| {
            Regex::new(r#"(?s)<script\b[^>]*\bid\s*=\s*"stickler-bootstrap"[^>]*>(.*?)</script>"#)
                .expect("static regex")
        });
        let caps = re.captures(html).ok_or(DescriptorError::MissingBlock)?;
        let whole = caps.get(0).map(|m| m.as_str()).unwrap_or_default();
        if !whole.contains(BOOTSTRAP_MEDIA_TYPE) {
            return Err(DescriptorError::MissingBlock);
        }
        Self::from_json(caps[1].trim())
    }
}

fn parse_url(s: &str) -> Result<Url, DescriptorError> {
    let url = Url::parse(s).map_err(|_| DescriptorError::BadUrl(s.to_string()))?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(DescriptorError::BadUrl(s.to_string()));
    }
    Ok(url)
}
