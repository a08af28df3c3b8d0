//! Sign one asset, verify it, then show the four ways verification fails:
//! a flipped bit, a different URL, an expired payload, a different key.

use stickler::format::{sign_asset, verify_blob, AssetBlob, AssetPayload, SigningKeyPair};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let key = SigningKeyPair::generate()?;
    let public = key.public_key();
    println!(
        "key id {} ({} bits, e = {:?})",
        public.key_id(),
        public.modulus_bits(),
        public.exponent()
    );

    let payload = AssetPayload::new(
        "/js/app.js",
        2_000_000_000,
        "text/javascript",
        b"console.log('hi')".to_vec(),
    );
    let blob = sign_asset(&payload, &key)?;
    let bytes = blob.encode()?;
    println!(
        "blob is {} bytes: {} payload bytes + {} byte signature",
        bytes.len(),
        blob.payload_bytes.len(),
        blob.signature.len()
    );

    let now = 1_700_000_000;
    let decoded = AssetBlob::decode(&bytes)?;
    let verified = verify_blob(&decoded, public, now, "/js/app.js")?;
    println!("verified: {}", String::from_utf8_lossy(&verified.content));

    let mut tampered = bytes.clone();
    *tampered.last_mut().unwrap() ^= 1;
    let result = verify_blob(&AssetBlob::decode(&tampered)?, public, now, "/js/app.js");
    println!("flipped bit     -> {}", result.unwrap_err());

    let result = verify_blob(&decoded, public, now, "/js/other.js");
    println!("wrong url       -> {}", result.unwrap_err());

    let result = verify_blob(&decoded, public, payload.expiry, "/js/app.js");
    println!("at expiry       -> {}", result.unwrap_err());

    let stranger = SigningKeyPair::generate()?;
    let result = verify_blob(&decoded, stranger.public_key(), now, "/js/app.js");
    println!("different key   -> {}", result.unwrap_err());
    Ok(())
}
