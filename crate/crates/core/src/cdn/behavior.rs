use globset::{Glob, GlobMatcher};
use serde::{Deserialize, Serialize};

use crate::format::BLOB_EXTENSION;

/// One CDN (mis)behavior. Behaviors are kept in an ordered list and the
/// first whose pattern matches the request path applies; unmatched requests
/// are served honestly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CdnBehavior {
    Honest,
    /// Flip the low bit of one body byte.
    TamperBytes {
        url_pattern: String,
        byte_offset: usize,
    },
    InjectPrefix {
        url_pattern: String,
        bytes: String,
    },
    /// Keep serving the oldest copy ever cached, without revalidating.
    ReplayStale {
        url_pattern: String,
    },
    /// Answer `from_url` with whatever is served for `to_url`.
    SwapUrl {
        from_url: String,
        to_url: String,
    },
    /// Unwrap the blob and serve only the payload's content bytes.
    StripBlob {
        url_pattern: String,
    },
    Drop {
        url_pattern: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum BehaviorError {
    #[error("an honest entry must be the only behavior in the list")]
    HonestNotAlone,
    #[error("bad url pattern {0:?}: {1}")]
    BadPattern(String, globset::Error),
    #[error("behaviors file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
struct Compiled {
    behavior: CdnBehavior,
    matcher: Option<GlobMatcher>,
}

/// Validated, ordered behavior list.
#[derive(Debug, Clone, Default)]
pub struct BehaviorSet {
    entries: Vec<Compiled>,
}

impl BehaviorSet {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn new(behaviors: Vec<CdnBehavior>) -> Result<Self, BehaviorError> {
        if behaviors.len() > 1 && behaviors.contains(&CdnBehavior::Honest) {
            return Err(BehaviorError::HonestNotAlone);
        }
        let entries = behaviors
            .into_iter()
            .filter(|b| *b != CdnBehavior::Honest)
            .map(|behavior| {
                let pattern = match &behavior {
                    CdnBehavior::Honest => unreachable!("filtered above"),
                    CdnBehavior::SwapUrl { from_url, .. } => glob::escape(from_url),
                    CdnBehavior::TamperBytes { url_pattern, .. }
                    | CdnBehavior::InjectPrefix { url_pattern, .. }
                    | CdnBehavior::ReplayStale { url_pattern }
                    | CdnBehavior::StripBlob { url_pattern }
                    | CdnBehavior::Drop { url_pattern } => url_pattern.clone(),
                };
                let matcher = Glob::new(&pattern)
                    .map_err(|e| BehaviorError::BadPattern(pattern.clone(), e))?
                    .compile_matcher();
                Ok(Compiled {
                    behavior,
                    matcher: Some(matcher),
                })
            })
            .collect::<Result<Vec<_>, BehaviorError>>()?;
        Ok(Self { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, BehaviorError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn behaviors(&self) -> Vec<CdnBehavior> {
        if self.entries.is_empty() {
            return vec![CdnBehavior::Honest];
        }
        self.entries.iter().map(|c| c.behavior.clone()).collect()
    }

    /// First behavior matching `path`, or `None` for honest service.
    /// `/a.js` and `/a.js.stkb` name the same blob, so a pattern written
    /// for either form matches requests for both.
    pub fn select(&self, path: &str) -> Option<&CdnBehavior> {
        let suffix = format!(".{BLOB_EXTENSION}");
        let other = match path.strip_suffix(&suffix) {
            Some(bare) => bare.to_string(),
            None => format!("{path}{suffix}"),
        };
        self.entries
            .iter()
            .find(|c| {
                c.matcher
                    .as_ref()
                    .is_some_and(|m| m.is_match(path) || m.is_match(&other))
            })
            .map(|c| &c.behavior)
    }
}

mod glob {
    /// Quote glob metacharacters so a literal URL matches only itself.
    pub(super) fn escape(s: &str) -> String {
        let mut out = String::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '*' | '?' | '[' | ']' | '{' | '}' => {
                    out.push('[');
                    out.push(c);
                    out.push(']');
                }
                _ => out.push(c),
            }
        }
        out
    }
}
