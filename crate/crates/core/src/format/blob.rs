//! Signed asset blobs (`.stkb` files).
//!
//! ```text
//! "STKB" | version u8 | algorithm u8 | sig_len u16 | signature | payload_bytes
//! ```

use super::keys::{KeyError, PublicKey, SigningKeyPair};
use super::payload::{decode_payload, encode_payload, AssetPayload, Reader};
use super::FormatError;

pub const BLOB_MAGIC: &[u8; 4] = b"STKB";
pub const BLOB_VERSION: u8 = 1;
pub const BLOB_EXTENSION: &str = "stkb";
pub const BLOB_MEDIA_TYPE: &str = "application/stickler-blob";
/// Bytes preceding the signature in an encoded blob.
pub const BLOB_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Algorithm {
    /// RSA-2048, SHA-256 digest, PKCS#1 v1.5 padding.
    RsaPkcs1Sha256 = 1,
}

impl TryFrom<u8> for Algorithm {
    type Error = FormatError;

    fn try_from(v: u8) -> Result<Self, FormatError> {
        match v {
            1 => Ok(Algorithm::RsaPkcs1Sha256),
            other => Err(FormatError::UnknownAlgorithm(other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetBlob {
    pub algorithm: Algorithm,
    pub signature: Vec<u8>,
    /// Canonical payload encoding, exactly as signed.
    pub payload_bytes: Vec<u8>,
}

impl AssetBlob {
    pub fn encode(&self) -> Result<Vec<u8>, FormatError> {
        let sig_len =
            u16::try_from(self.signature.len()).map_err(|_| FormatError::FieldTooLong {
                field: "signature",
                len: self.signature.len() as u64,
            })?;
        let mut out =
            Vec::with_capacity(BLOB_HEADER_LEN + self.signature.len() + self.payload_bytes.len());
        out.extend_from_slice(BLOB_MAGIC);
        out.push(BLOB_VERSION);
        out.push(self.algorithm as u8);
        out.extend_from_slice(&sig_len.to_be_bytes());
        out.extend_from_slice(&self.signature);
        out.extend_from_slice(&self.payload_bytes);
        Ok(out)
    }

    /// Splits a blob file into its parts. The payload is left undecoded:
    /// nothing inside it is trusted until the signature has been checked.
    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        if r.take(4, "blob magic")? != BLOB_MAGIC {
            return Err(FormatError::BadMagic);
        }
        let version = r.u8("blob version")?;
        if version != BLOB_VERSION {
            return Err(FormatError::BadVersion(version));
        }
        let algorithm = Algorithm::try_from(r.u8("algorithm")?)?;
        let sig_len = r.u16("sig_len")? as usize;
        let signature = r.take(sig_len, "signature")?.to_vec();
        let payload_bytes = r.rest().to_vec();
        Ok(Self {
            algorithm,
            signature,
            payload_bytes,
        })
    }

    /// Decodes the payload without any authenticity check. For tooling
    /// (inspection, cache headers) only; never for serving content.
    pub fn unverified_payload(&self) -> Result<AssetPayload, FormatError> {
        decode_payload(&self.payload_bytes)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SignError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Key(#[from] KeyError),
}

pub fn sign_asset(payload: &AssetPayload, key: &SigningKeyPair) -> Result<AssetBlob, SignError> {
    let payload_bytes = encode_payload(payload)?;
    let signature = key.sign(&payload_bytes)?;
    Ok(AssetBlob {
        algorithm: Algorithm::RsaPkcs1Sha256,
        signature,
        payload_bytes,
    })
}

/// Why a blob was refused. Reported in check order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("signature does not verify")]
    SignatureInvalid,
    #[error("payload is malformed: {0}")]
    MalformedPayload(FormatError),
    #[error("payload signed for {signed}, requested as {requested}")]
    UrlMismatch { signed: String, requested: String },
    #[error("payload expired at {expiry} (now {now})")]
    Expired { expiry: u64, now: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub now: u64,
    /// Seconds of clock skew forgiven past the expiry.
    pub skew: u64,
    pub check_expiry: bool,
}

impl VerifyOptions {
    pub fn at(now: u64) -> Self {
        Self {
            now,
            skew: 0,
            check_expiry: true,
        }
    }
}

pub fn verify_blob(
    blob: &AssetBlob,
    key: &PublicKey,
    now: u64,
    expected_url: &str,
) -> Result<AssetPayload, VerifyError> {
    verify_blob_with(blob, key, expected_url, &VerifyOptions::at(now))
}

pub fn verify_blob_with(
    blob: &AssetBlob,
    key: &PublicKey,
    expected_url: &str,
    opts: &VerifyOptions,
) -> Result<AssetPayload, VerifyError> {
    match blob.algorithm {
        Algorithm::RsaPkcs1Sha256 => {
            if !key.verify(&blob.payload_bytes, &blob.signature) {
                return Err(VerifyError::SignatureInvalid);
            }
        }
    }
    let payload = decode_payload(&blob.payload_bytes).map_err(VerifyError::MalformedPayload)?;
    let requested = path_component(expected_url);
    if requested.as_deref() != Some(payload.url_path.as_str()) {
        return Err(VerifyError::UrlMismatch {
            signed: payload.url_path,
            requested: requested.unwrap_or_else(|| expected_url.to_string()),
        });
    }
    if opts.check_expiry
        && payload.expiry != 0
        && payload.expiry.saturating_add(opts.skew) <= opts.now
    {
        return Err(VerifyError::Expired {
            expiry: payload.expiry,
            now: opts.now,
        });
    }
    Ok(payload)
}

/// Path of an absolute URL or an origin-relative reference, without query
/// or fragment.
pub fn path_component(url: &str) -> Option<String> {
    if url.starts_with('/') && !url.starts_with("//") {
        let end = url.find(['?', '#']).unwrap_or(url.len());
        return Some(url[..end].to_string());
    }
    url::Url::parse(url).ok().map(|u| u.path().to_string())
}
