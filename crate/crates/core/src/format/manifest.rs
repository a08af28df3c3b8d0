//! The signed site index.
//!
//! Manifests are declarative: each entry names a URL, how to authenticate
//! it, what to do with the content, and what to do when authentication
//! fails. The serialized form is compact JSON with keys in lexicographic
//! order, so serialization is canonical.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Sha256Digest;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_MEDIA_TYPE: &str = "application/stickler-manifest+json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyModeKind {
    Signature,
    Hash,
    Channel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyMode {
    Signature,
    Hash(Sha256Digest),
    /// Trust the direct connection to the publisher; no content check.
    Channel,
}

impl VerifyMode {
    pub fn kind(&self) -> VerifyModeKind {
        match self {
            VerifyMode::Signature => VerifyModeKind::Signature,
            VerifyMode::Hash(_) => VerifyModeKind::Hash,
            VerifyMode::Channel => VerifyModeKind::Channel,
        }
    }

    fn wire_name(&self) -> &'static str {
        match self {
            VerifyMode::Signature => "signature",
            VerifyMode::Hash(_) => "hash",
            VerifyMode::Channel => "channel",
        }
    }
}

/// What the client does with verified content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handler {
    Script,
    Style,
    ImageDataUri,
    Raw,
    Manifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    Abort,
    Skip,
    RefreshKey,
}

macro_rules! wire_names {
    ($ty:ident, $field:literal, { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($ty::$variant => $name),* }
            }
        }

        impl FromStr for $ty {
            type Err = ManifestError;

            fn from_str(s: &str) -> Result<Self, ManifestError> {
                match s {
                    $($name => Ok($ty::$variant),)*
                    other => Err(ManifestError::UnknownDirective {
                        field: $field,
                        value: other.to_string(),
                    }),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

wire_names!(Handler, "handler", {
    Script => "script",
    Style => "style",
    ImageDataUri => "image_data_uri",
    Raw => "raw",
    Manifest => "manifest",
});

wire_names!(FailurePolicy, "on_failure", {
    Abort => "abort",
    Skip => "skip",
    RefreshKey => "refresh_key",
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Absolute URL, or a reference resolved against the manifest's own URL.
    pub url: String,
    pub verify_mode: VerifyMode,
    /// Only consulted in signature mode.
    pub expiry_check: bool,
    pub handler: Handler,
    pub on_failure: FailurePolicy,
}

impl ManifestEntry {
    pub fn new(
        url: impl Into<String>,
        verify_mode: VerifyMode,
        handler: Handler,
        on_failure: FailurePolicy,
    ) -> Self {
        Self {
            url: url.into(),
            verify_mode,
            expiry_check: true,
            handler,
            on_failure,
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.url.is_empty() {
            return Err(ManifestError::Invalid("entry with empty url".into()));
        }
        if self.handler == Handler::Manifest && self.verify_mode != VerifyMode::Signature {
            return Err(ManifestError::DirectiveConflict {
                url: self.url.clone(),
                reason: format!(
                    "nested manifests must use signature mode, not {}",
                    self.verify_mode.wire_name()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub version: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self {
            version: MANIFEST_VERSION,
            entries,
        }
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version != MANIFEST_VERSION {
            return Err(ManifestError::UnsupportedVersion(self.version));
        }
        let mut seen = HashSet::new();
        for entry in &self.entries {
            entry.validate()?;
            if !seen.insert(entry.url.as_str()) {
                return Err(ManifestError::Invalid(format!(
                    "duplicate url {}",
                    entry.url
                )));
            }
        }
        Ok(())
    }

    pub fn entry(&self, url: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.url == url)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ManifestError {
    #[error("manifest parse error at line {line} column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown {field} directive {value:?}")]
    UnknownDirective { field: &'static str, value: String },
    #[error("conflicting directives for {url}: {reason}")]
    DirectiveConflict { url: String, reason: String },
    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

impl From<serde_json::Error> for ManifestError {
    fn from(e: serde_json::Error) -> Self {
        ManifestError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

// Field order below is the canonical key order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireManifest {
    entries: Vec<WireEntry>,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    digest: Option<Sha256Digest>,
    #[serde(default = "default_true")]
    expiry_check: bool,
    handler: String,
    on_failure: String,
    url: String,
    verify_mode: String,
}

fn default_true() -> bool {
    true
}

impl From<&ManifestEntry> for WireEntry {
    fn from(e: &ManifestEntry) -> Self {
        Self {
            digest: match &e.verify_mode {
                VerifyMode::Hash(d) => Some(*d),
                _ => None,
            },
            expiry_check: e.expiry_check,
            handler: e.handler.as_str().to_string(),
            on_failure: e.on_failure.as_str().to_string(),
            url: e.url.clone(),
            verify_mode: e.verify_mode.wire_name().to_string(),
        }
    }
}

impl TryFrom<WireEntry> for ManifestEntry {
    type Error = ManifestError;

    fn try_from(w: WireEntry) -> Result<Self, ManifestError> {
        let verify_mode = match (w.verify_mode.as_str(), w.digest) {
            ("signature", None) => VerifyMode::Signature,
            ("channel", None) => VerifyMode::Channel,
            ("hash", Some(d)) => VerifyMode::Hash(d),
            ("hash", None) => {
                return Err(ManifestError::Invalid(format!(
                    "hash entry {} has no digest",
                    w.url
                )))
            }
            ("signature" | "channel", Some(_)) => {
                return Err(ManifestError::Invalid(format!(
                    "{} entry {} must not carry a digest",
                    w.verify_mode, w.url
                )))
            }
            (other, _) => {
                return Err(ManifestError::UnknownDirective {
                    field: "verify_mode",
                    value: other.to_string(),
                })
            }
        };
        let entry = ManifestEntry {
            url: w.url,
            verify_mode,
            expiry_check: w.expiry_check,
            handler: w.handler.parse()?,
            on_failure: w.on_failure.parse()?,
        };
        entry.validate()?;
        Ok(entry)
    }
}

pub fn serialize_manifest(m: &Manifest) -> Result<Vec<u8>, ManifestError> {
    m.validate()?;
    let wire = WireManifest {
        entries: m.entries.iter().map(WireEntry::from).collect(),
        version: m.version,
    };
    Ok(serde_json::to_vec(&wire)?)
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest, ManifestError> {
    let wire: WireManifest = serde_json::from_slice(bytes)?;
    let entries = wire
        .entries
        .into_iter()
        .map(ManifestEntry::try_from)
        .collect::<Result<Vec<_>, _>>()?;
    let m = Manifest {
        version: wire.version,
        entries,
    };
    m.validate()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::digest_content;
    use proptest::prelude::*;

    fn sample() -> Manifest {
        let mut pinned = ManifestEntry::new(
            "https://libs.example/jq.js",
            VerifyMode::Hash(digest_content(b"jq")),
            Handler::Script,
            FailurePolicy::Skip,
        );
        pinned.expiry_check = false;
        Manifest::new(vec![
            ManifestEntry::new(
                "/a.js",
                VerifyMode::Signature,
                Handler::Script,
                FailurePolicy::Abort,
            ),
            pinned,
            ManifestEntry::new(
                "https://pub.example/api/me",
                VerifyMode::Channel,
                Handler::Raw,
                FailurePolicy::RefreshKey,
            ),
            ManifestEntry::new(
                "/sub.json",
                VerifyMode::Signature,
                Handler::Manifest,
                FailurePolicy::Skip,
            ),
        ])
    }

    #[test]
    fn canonical_text() {
        let m = Manifest::new(vec![ManifestEntry::new(
            "/a.js",
            VerifyMode::Signature,
            Handler::ImageDataUri,
            FailurePolicy::RefreshKey,
        )]);
        assert_eq!(
            String::from_utf8(serialize_manifest(&m).unwrap()).unwrap(),
            r#"{"entries":[{"expiry_check":true,"handler":"image_data_uri","on_failure":"refresh_key","url":"/a.js","verify_mode":"signature"}],"version":1}"#
        );
    }

    #[test]
    fn round_trip() {
        let m = sample();
        let bytes = serialize_manifest(&m).unwrap();
        assert_eq!(parse_manifest(&bytes).unwrap(), m);
        // canonical: re-serializing the parse gives the same bytes
        assert_eq!(
            serialize_manifest(&parse_manifest(&bytes).unwrap()).unwrap(),
            bytes
        );
    }

    #[test]
    fn short_digest_is_parse_error() {
        let text = format!(
            r#"{{"entries":[{{"digest":"{}","handler":"script","on_failure":"skip","url":"/x","verify_mode":"hash"}}],"version":1}}"#,
            "ab".repeat(31)
        );
        assert!(matches!(
            parse_manifest(text.as_bytes()),
            Err(ManifestError::Parse { .. })
        ));
    }

    #[test]
    fn hashed_nested_manifest_is_rejected() {
        let text = format!(
            r#"{{"entries":[{{"digest":"{}","handler":"manifest","on_failure":"skip","url":"/x","verify_mode":"hash"}}],"version":1}}"#,
            "ab".repeat(32)
        );
        assert!(matches!(
            parse_manifest(text.as_bytes()),
            Err(ManifestError::DirectiveConflict { .. })
        ));
        let mut m = sample();
        m.entries[3].verify_mode = VerifyMode::Channel;
        assert!(matches!(
            serialize_manifest(&m),
            Err(ManifestError::DirectiveConflict { .. })
        ));
    }

    #[test]
    fn unknown_directives() {
        for (field, text) in [
            (
                "handler",
                r#"{"entries":[{"handler":"eval","on_failure":"skip","url":"/x","verify_mode":"signature"}],"version":1}"#,
            ),
            (
                "on_failure",
                r#"{"entries":[{"handler":"raw","on_failure":"retry","url":"/x","verify_mode":"signature"}],"version":1}"#,
            ),
            (
                "verify_mode",
                r#"{"entries":[{"handler":"raw","on_failure":"skip","url":"/x","verify_mode":"trust"}],"version":1}"#,
            ),
        ] {
            match parse_manifest(text.as_bytes()) {
                Err(ManifestError::UnknownDirective { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: {other:?}"),
            }
        }
    }

    #[test]
    fn structural_rejections() {
        let dup = r#"{"entries":[{"handler":"raw","on_failure":"skip","url":"/x","verify_mode":"signature"},{"handler":"raw","on_failure":"skip","url":"/x","verify_mode":"signature"}],"version":1}"#;
        assert!(matches!(
            parse_manifest(dup.as_bytes()),
            Err(ManifestError::Invalid(_))
        ));
        let v2 = r#"{"entries":[],"version":2}"#;
        assert_eq!(
            parse_manifest(v2.as_bytes()),
            Err(ManifestError::UnsupportedVersion(2))
        );
        let extra = r#"{"entries":[],"version":1,"eval":"x"}"#;
        assert!(matches!(
            parse_manifest(extra.as_bytes()),
            Err(ManifestError::Parse { .. })
        ));
        let digestless = r#"{"entries":[{"handler":"raw","on_failure":"skip","url":"/x","verify_mode":"hash"}],"version":1}"#;
        assert!(matches!(
            parse_manifest(digestless.as_bytes()),
            Err(ManifestError::Invalid(_))
        ));
    }

    #[test]
    fn parse_error_has_position() {
        match parse_manifest(b"{\n  \"entries\": [,]}") {
            Err(ManifestError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    fn arb_entry() -> impl Strategy<Value = ManifestEntry> {
        let mode = prop_oneof![
            Just(VerifyMode::Signature),
            Just(VerifyMode::Channel),
            any::<[u8; 32]>().prop_map(|b| VerifyMode::Hash(Sha256Digest(b))),
        ];
        let handler = prop_oneof![
            Just(Handler::Script),
            Just(Handler::Style),
            Just(Handler::ImageDataUri),
            Just(Handler::Raw),
        ];
        let policy = prop_oneof![
            Just(FailurePolicy::Abort),
            Just(FailurePolicy::Skip),
            Just(FailurePolicy::RefreshKey),
        ];
        (
            "/[a-z0-9\"\\\\]{1,12}",
            mode,
            any::<bool>(),
            handler,
            policy,
        )
            .prop_map(|(url, verify_mode, expiry_check, handler, on_failure)| {
                ManifestEntry {
                    url,
                    verify_mode,
                    expiry_check,
                    handler,
                    on_failure,
                }
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(entries in proptest::collection::vec(arb_entry(), 0..8)) {
            let mut seen = HashSet::new();
            let entries: Vec<_> = entries.into_iter().filter(|e| seen.insert(e.url.clone())).collect();
            let m = Manifest::new(entries);
            let bytes = serialize_manifest(&m).unwrap();
            prop_assert!(!bytes.contains(&b'\n'));
            prop_assert_eq!(parse_manifest(&bytes).unwrap(), m);
        }
    }
}
