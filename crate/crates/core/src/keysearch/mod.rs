//! Progressive known-plaintext key search over identity-derived candidates.

mod detector;
mod engine;
pub mod families;

pub use detector::{try_key, PlaintextDetector, Verdict};
pub use engine::{run_attack, AttackPlan, Outcome, Phase, PhaseSummary, SearchReport};
pub use families::{Candidate, CandidateFamily, FamilyParams, TimestampWindow};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum KeySearchError {
    #[error("invalid timestamp range: start {start}, end {end}, stride {stride}")]
    InvalidRange { start: i64, end: i64, stride: i64 },
    #[error("suffix lengths {min_len}..={max_len} outside 1..=6")]
    SuffixLength { min_len: usize, max_len: usize },
    #[error("attack plan has no phases")]
    EmptyPlan,
    #[error("input is not an FMX container")]
    NotFmx,
    #[error("payload of {0} bytes is shorter than one cipher block")]
    PayloadTooShort(usize),
}
