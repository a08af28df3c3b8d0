use base64::engine::general_purpose::STANDARD;
use base64::Engine;

/// `data:<media_type>;base64,<content>` with standard, padded base64.
pub fn encode_data_uri(content: &[u8], media_type: &str) -> String {
    let mut out = String::with_capacity(media_type.len() + 13 + content.len().div_ceil(3) * 4);
    out.push_str("data:");
    out.push_str(media_type);
    out.push_str(";base64,");
    STANDARD.encode_string(content, &mut out);
    out
}
