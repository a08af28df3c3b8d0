//! Canonical payload encoding.
//!
//! ```text
//! "STK1" | version u8 | url_len u16 | url | expiry u64 | ct_len u16 | content_type | content_len u64 | content
//! ```
//!
//! All integers are big-endian. The encoding is the exact byte string that
//! gets signed, so it must stay deterministic.

use super::FormatError;

pub const PAYLOAD_MAGIC: &[u8; 4] = b"STK1";
pub const PAYLOAD_VERSION: u8 = 1;

const MAX_SHORT_FIELD: usize = u16::MAX as usize;
const MAX_CONTENT: u64 = i64::MAX as u64;

/// The signed unit: an asset's bytes bound to the path it is served under
/// and the moment it stops being acceptable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetPayload {
    pub url_path: String,
    /// Unix seconds; `0` means the payload never expires.
    pub expiry: u64,
    pub content_type: String,
    pub content: Vec<u8>,
}

impl AssetPayload {
    pub fn new(
        url_path: impl Into<String>,
        expiry: u64,
        content_type: impl Into<String>,
        content: impl Into<Vec<u8>>,
    ) -> Self {
        Self {
            url_path: url_path.into(),
            expiry,
            content_type: content_type.into(),
            content: content.into(),
        }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if !self.url_path.starts_with('/') {
            return Err(FormatError::InvalidUrlPath(self.url_path.clone()));
        }
        if self.url_path.len() > MAX_SHORT_FIELD {
            return Err(FormatError::FieldTooLong {
                field: "url_path",
                len: self.url_path.len() as u64,
            });
        }
        if self.content_type.len() > MAX_SHORT_FIELD {
            return Err(FormatError::FieldTooLong {
                field: "content_type",
                len: self.content_type.len() as u64,
            });
        }
        if self.content.len() as u64 > MAX_CONTENT {
            return Err(FormatError::FieldTooLong {
                field: "content",
                len: self.content.len() as u64,
            });
        }
        Ok(())
    }

    /// Size of [`encode_payload`]'s output without building it.
    pub fn encoded_len(&self) -> usize {
        4 + 1 + 2 + self.url_path.len() + 8 + 2 + self.content_type.len() + 8 + self.content.len()
    }
}

pub fn encode_payload(payload: &AssetPayload) -> Result<Vec<u8>, FormatError> {
    payload.validate()?;
    let mut out = Vec::with_capacity(payload.encoded_len());
    out.extend_from_slice(PAYLOAD_MAGIC);
    out.push(PAYLOAD_VERSION);
    out.extend_from_slice(&(payload.url_path.len() as u16).to_be_bytes());
    out.extend_from_slice(payload.url_path.as_bytes());
    out.extend_from_slice(&payload.expiry.to_be_bytes());
    out.extend_from_slice(&(payload.content_type.len() as u16).to_be_bytes());
    out.extend_from_slice(payload.content_type.as_bytes());
    out.extend_from_slice(&(payload.content.len() as u64).to_be_bytes());
    out.extend_from_slice(&payload.content);
    Ok(out)
}

/// Inverse of [`encode_payload`]. Rejects anything it would not have produced.
pub fn decode_payload(bytes: &[u8]) -> Result<AssetPayload, FormatError> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != PAYLOAD_MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u8("version")?;
    if version != PAYLOAD_VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let url_len = r.u16("url_len")? as usize;
    let url_path = r.utf8(url_len, "url_path")?;
    let expiry = r.u64("expiry")?;
    let ct_len = r.u16("ct_len")? as usize;
    let content_type = r.utf8(ct_len, "content_type")?;
    let content_len = r.u64("content_len")?;
    if content_len > MAX_CONTENT || content_len > r.remaining() as u64 {
        return Err(FormatError::Truncated("content"));
    }
    let content = r.take(content_len as usize, "content")?.to_vec();
    if r.remaining() != 0 {
        return Err(FormatError::TrailingBytes(r.remaining()));
    }
    if !url_path.starts_with('/') {
        return Err(FormatError::InvalidUrlPath(url_path));
    }
    Ok(AssetPayload {
        url_path,
        expiry,
        content_type,
        content,
    })
}

/// Cursor over untrusted input; every read is bounds-checked.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], FormatError> {
        if self.remaining() < n {
            return Err(FormatError::Truncated(field));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn rest(&mut self) -> &'a [u8] {
        let s = &self.buf[self.pos..];
        self.pos = self.buf.len();
        s
    }

    pub(crate) fn u8(&mut self, field: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, field)?[0])
    }

    pub(crate) fn u16(&mut self, field: &'static str) -> Result<u16, FormatError> {
        let b = self.take(2, field)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, FormatError> {
        let b = self.take(8, field)?;
        let mut arr = [0u8; 8];
        arr.copy_from_slice(b);
        Ok(u64::from_be_bytes(arr))
    }

    fn utf8(&mut self, n: usize, field: &'static str) -> Result<String, FormatError> {
        let b = self.take(n, field)?;
        String::from_utf8(b.to_vec()).map_err(|_| FormatError::InvalidUtf8(field))
    }
}
