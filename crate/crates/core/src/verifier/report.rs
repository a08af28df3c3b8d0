use serde::{Deserialize, Serialize};

use crate::format::{FailurePolicy, Handler, VerifyError, VerifyModeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Verified,
    SignatureInvalid,
    Expired,
    UrlMismatch,
    HashMismatch,
    MalformedPayload,
    Unavailable,
    DepthExceeded,
    CycleDetected,
    /// Never looked at because an earlier failure aborted the load.
    SkippedByPolicy,
}

impl Outcome {
    /// Failures decided without fetching anything; a fresh key cannot help.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            Outcome::DepthExceeded | Outcome::CycleDetected | Outcome::SkippedByPolicy
        )
    }
}

impl From<&VerifyError> for Outcome {
    fn from(e: &VerifyError) -> Self {
        match e {
            VerifyError::SignatureInvalid => Outcome::SignatureInvalid,
            VerifyError::MalformedPayload(_) => Outcome::MalformedPayload,
            VerifyError::UrlMismatch { .. } => Outcome::UrlMismatch,
            VerifyError::Expired { .. } => Outcome::Expired,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetVerdict {
    pub url: String,
    pub outcome: Outcome,
    pub verify_mode: VerifyModeKind,
    pub handler: Handler,
    /// Content bytes released to handlers; zero unless verified.
    pub bytes_delivered: u64,
    pub verify_duration_ms: f64,
    /// Nesting level; the top-level manifest is 1.
    pub depth: usize,
    /// Failure policy that was applied, for failed entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<FailurePolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Overall {
    AllVerified,
    PartialSkip,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierReport {
    /// Key in effect when the load finished.
    pub descriptor_key_id: String,
    pub verdicts: Vec<AssetVerdict>,
    pub overall: Overall,
    pub refresh_key_retries: u32,
}

impl VerifierReport {
    pub fn outcomes(&self) -> Vec<Outcome> {
        self.verdicts.iter().map(|v| v.outcome).collect()
    }

    /// First verdict whose URL ends with `suffix`.
    pub fn verdict(&self, suffix: &str) -> Option<&AssetVerdict> {
        self.verdicts.iter().find(|v| v.url.ends_with(suffix))
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssetVerdict> {
        self.verdicts
            .iter()
            .filter(|v| v.outcome != Outcome::Verified)
    }

    /// The report with timings zeroed; everything else is deterministic
    /// for a fixed clock and a concurrency limit of one.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.verdicts
            .iter_mut()
            .for_each(|v| v.verify_duration_ms = 0.0);
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Process exit code: 0 all verified, 4 partial, 5 aborted.
    pub fn exit_code(&self) -> i32 {
        match self.overall {
            Overall::AllVerified => 0,
            Overall::PartialSkip => 4,
            Overall::Aborted => 5,
        }
    }
}
