use std::fmt;

use rsa::pkcs1v15::{Signature, SigningKey, VerifyingKey};
use rsa::pkcs8::{
    DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding,
};
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};

pub const MODULUS_BITS: usize = 2048;
pub const PUBLIC_EXPONENT: u32 = 65537;
/// Signature length for RSA-2048.
pub const SIGNATURE_LEN: usize = MODULUS_BITS / 8;

#[derive(Debug, thiserror::Error)]
pub enum KeyError {
    #[error("malformed key material: {0}")]
    Malformed(String),
    #[error("modulus must be {MODULUS_BITS} bits, got {0}")]
    ModulusSize(usize),
    #[error("public exponent must be {PUBLIC_EXPONENT}")]
    Exponent,
    #[error("signing failed: {0}")]
    Signing(String),
}

/// An RSA-2048 verification key together with its SPKI encoding.
#[derive(Clone)]
pub struct PublicKey {
    verifying: VerifyingKey<Sha256>,
    spki_der: Vec<u8>,
    key_id: String,
}

impl PublicKey {
    fn from_rsa(key: RsaPublicKey) -> Result<Self, KeyError> {
        check_parameters(&key)?;
        let spki_der = key
            .to_public_key_der()
            .map_err(|e| KeyError::Malformed(e.to_string()))?
            .into_vec();
        let key_id = key_id_for(&spki_der);
        Ok(Self {
            verifying: VerifyingKey::new(key),
            spki_der,
            key_id,
        })
    }

    pub fn from_spki_der(der: &[u8]) -> Result<Self, KeyError> {
        let key = RsaPublicKey::from_public_key_der(der)
            .map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_rsa(key)
    }

    pub fn from_pem(pem: &str) -> Result<Self, KeyError> {
        let key = RsaPublicKey::from_public_key_pem(pem)
            .map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_rsa(key)
    }

    /// Standard base64 of the SPKI DER; the form carried in bootstrap descriptors.
    pub fn from_base64(b64: &str) -> Result<Self, KeyError> {
        use base64::Engine;
        let der = base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_spki_der(&der)
    }

    pub fn to_base64(&self) -> String {
        use base64::Engine;
        base64::engine::general_purpose::STANDARD.encode(&self.spki_der)
    }

    pub fn to_pem(&self) -> String {
        self.verifying
            .as_ref()
            .to_public_key_pem(LineEnding::LF)
            .expect("validated key always encodes")
    }

    pub fn spki_der(&self) -> &[u8] {
        &self.spki_der
    }

    /// Hex of the first 8 bytes of SHA-256 over the SPKI DER.
    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn modulus_bits(&self) -> usize {
        self.verifying.as_ref().n().bits()
    }

    pub fn exponent(&self) -> Option<u64> {
        let bytes = self.verifying.as_ref().e().to_bytes_be();
        if bytes.len() > 8 {
            return None;
        }
        Some(bytes.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b)))
    }

    /// PKCS#1 v1.5 / SHA-256 check of `signature` over `message`.
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Ok(sig) = Signature::try_from(signature) else {
            return false;
        };
        self.verifying.verify(message, &sig).is_ok()
    }
}

impl PartialEq for PublicKey {
    fn eq(&self, other: &Self) -> bool {
        self.spki_der == other.spki_der
    }
}

impl Eq for PublicKey {}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PublicKey")
            .field("key_id", &self.key_id)
            .finish()
    }
}

/// The publisher's signing key. Only the build pipeline and dynamic-signing
/// origins ever hold one.
#[derive(Clone)]
pub struct SigningKeyPair {
    signing: SigningKey<Sha256>,
    public: PublicKey,
}

impl SigningKeyPair {
    pub fn generate() -> Result<Self, KeyError> {
        let mut rng = rand::thread_rng();
        let key = RsaPrivateKey::new(&mut rng, MODULUS_BITS)
            .map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_rsa(key)
    }

    fn from_rsa(key: RsaPrivateKey) -> Result<Self, KeyError> {
        key.validate()
            .map_err(|e| KeyError::Malformed(e.to_string()))?;
        let public = PublicKey::from_rsa(key.to_public_key())?;
        Ok(Self {
            signing: SigningKey::new(key),
            public,
        })
    }

    pub fn from_pkcs8_pem(pem: &str) -> Result<Self, KeyError> {
        let key =
            RsaPrivateKey::from_pkcs8_pem(pem).map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_rsa(key)
    }

    pub fn from_pkcs8_der(der: &[u8]) -> Result<Self, KeyError> {
        let key =
            RsaPrivateKey::from_pkcs8_der(der).map_err(|e| KeyError::Malformed(e.to_string()))?;
        Self::from_rsa(key)
    }

    pub fn to_pkcs8_pem(&self) -> Result<String, KeyError> {
        self.signing
            .as_ref()
            .to_pkcs8_pem(LineEnding::LF)
            .map(|z| z.to_string())
            .map_err(|e| KeyError::Malformed(e.to_string()))
    }

    pub fn to_pkcs8_der(&self) -> Result<Vec<u8>, KeyError> {
        self.signing
            .as_ref()
            .to_pkcs8_der()
            .map(|d| d.as_bytes().to_vec())
            .map_err(|e| KeyError::Malformed(e.to_string()))
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn key_id(&self) -> &str {
        self.public.key_id()
    }

    /// Deterministic PKCS#1 v1.5 signature over SHA-256(message).
    pub fn sign(&self, message: &[u8]) -> Result<Vec<u8>, KeyError> {
        self.signing
            .try_sign(message)
            .map(|s| s.to_vec())
            .map_err(|e| KeyError::Signing(e.to_string()))
    }
}

impl fmt::Debug for SigningKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SigningKeyPair")
            .field("key_id", &self.public.key_id)
            .finish_non_exhaustive()
    }
}

fn check_parameters(key: &RsaPublicKey) -> Result<(), KeyError> {
    let bits = key.n().bits();
    if bits != MODULUS_BITS {
        return Err(KeyError::ModulusSize(bits));
    }
    if *key.e() != BigUint::from(PUBLIC_EXPONENT) {
        return Err(KeyError::Exponent);
    }
    Ok(())
}

fn key_id_for(spki_der: &[u8]) -> String {
    hex::encode(&Sha256::digest(spki_der)[..8])
}
