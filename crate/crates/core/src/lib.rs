//! Publisher-signed web assets served through an untrusted CDN.
//!
//! A publisher signs every asset offline ([`build`]), a CDN caches and
//! serves the resulting blobs ([`cdn`] simulates an honest or hostile one),
//! and clients bootstrap a public key directly from the publisher
//! ([`origin`]) before verifying everything fetched through the CDN
//! ([`verifier`]). [`format`] holds the wire formats and the sign/verify
//! primitives the rest of the crate is built on.

pub mod bench;
pub mod build;
pub mod cdn;
pub mod cli;
pub mod clock;
pub mod deploy;
pub mod format;
pub mod origin;
pub mod server;
pub mod verifier;

pub use clock::{Clock, ManualClock, SystemClock};
pub use format::{
    decode_payload, digest_content, encode_payload, sign_asset, verify_blob, AssetBlob,
    AssetPayload, FormatError, Manifest, ManifestEntry, PublicKey, Sha256Digest, SigningKeyPair,
    VerifyError,
};
