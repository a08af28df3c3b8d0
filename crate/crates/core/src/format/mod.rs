//! Wire formats and the sign/verify/hash primitives.
//!
//! Everything here is a pure function of its inputs.

mod blob;
mod keys;
mod manifest;
mod payload;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use blob::{
    path_component, sign_asset, verify_blob, verify_blob_with, Algorithm, AssetBlob, SignError,
    VerifyError, VerifyOptions, BLOB_EXTENSION, BLOB_HEADER_LEN, BLOB_MAGIC, BLOB_MEDIA_TYPE,
    BLOB_VERSION,
};
pub use keys::{KeyError, PublicKey, SigningKeyPair, MODULUS_BITS, PUBLIC_EXPONENT, SIGNATURE_LEN};
pub use manifest::{
    parse_manifest, serialize_manifest, FailurePolicy, Handler, Manifest, ManifestEntry,
    ManifestError, VerifyMode, VerifyModeKind, MANIFEST_MEDIA_TYPE, MANIFEST_VERSION,
};
pub use payload::{decode_payload, encode_payload, AssetPayload, PAYLOAD_MAGIC, PAYLOAD_VERSION};

#[cfg(test)]
pub(crate) use keys::tests::publisher as test_publisher_key;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("{field} too long ({len} bytes)")]
    FieldTooLong { field: &'static str, len: u64 },
    #[error("url path must be absolute, got {0:?}")]
    InvalidUrlPath(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown signature algorithm {0}")]
    UnknownAlgorithm(u8),
    #[error("truncated in {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
}

/// A SHA-256 output. Serialized as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sha256Digest(pub [u8; 32]);

impl Sha256Digest {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl TryFrom<&[u8]> for Sha256Digest {
    type Error = String;

    fn try_from(b: &[u8]) -> Result<Self, String> {
        <[u8; 32]>::try_from(b)
            .map(Sha256Digest)
            .map_err(|_| format!("digest must be 32 bytes, got {}", b.len()))
    }
}

impl FromStr for Sha256Digest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bytes = hex::decode(s).map_err(|e| format!("digest is not hex: {e}"))?;
        Sha256Digest::try_from(bytes.as_slice())
    }
}

impl fmt::Debug for Sha256Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sha256Digest({})", self.to_hex())
    }
}

impl fmt::Display for Sha256Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Sha256Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Sha256Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// SHA-256 over raw content bytes (never over a payload encoding).
pub fn digest_content(bytes: &[u8]) -> Sha256Digest {
    Sha256Digest(Sha256::digest(bytes).into())
}
