use serde::{Deserialize, Serialize};

use crate::cipher::{SubkeySchedule, BLOCK_SIZE};
use crate::container::{self, HEADER_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Reject,
    /// First byte matched but the confirmation scan did not.
    WeakAccept,
    Confirm,
}

/// Known-plaintext test for JSON documents.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaintextDetector {
    pub first_byte_accept: Vec<u8>,
    pub confirm_window: usize,
}

impl Default for PlaintextDetector {
    fn default() -> Self {
        Self {
            first_byte_accept: b"{[".to_vec(),
            confirm_window: 100,
        }
    }
}

impl PlaintextDetector {
    /// A detector that accepts nothing. Useful to measure raw throughput or
    /// to walk a space to exhaustion.
    pub fn never() -> Self {
        Self {
            first_byte_accept: Vec::new(),
            confirm_window: 0,
        }
    }

    /// Confirmation stage: `{` among the first `confirm_window` characters of
    /// a lossy UTF-8 decoding that drops invalid sequences.
    pub fn confirms(&self, text: &[u8]) -> bool {
        let mut seen = 0usize;
        for chunk in text.utf8_chunks() {
            for c in chunk.valid().chars() {
                if seen == self.confirm_window {
                    return false;
                }
                if c == '{' {
                    return true;
                }
                seen += 1;
            }
        }
        false
    }

    /// Classifies `payload` (the bytes after the FMX header) under an
    /// already-expanded schedule. Payloads shorter than one block reject.
    pub fn classify(&self, sched: &SubkeySchedule, payload: &[u8]) -> Verdict {
        let Some(first) = payload.first_chunk::<BLOCK_SIZE>() else {
            return Verdict::Reject;
        };
        let mut block = *first;
        sched.decrypt_in_place(&mut block);
        if !self.first_byte_accept.contains(&block[0]) {
            return Verdict::Reject;
        }

        let mut text = Vec::with_capacity(payload.len());
        text.extend_from_slice(&block);
        let mut chunks = payload[BLOCK_SIZE..].chunks_exact(BLOCK_SIZE);
        for c in &mut chunks {
            let mut b: [u8; BLOCK_SIZE] = c.try_into().expect("exact chunk");
            sched.decrypt_in_place(&mut b);
            text.extend_from_slice(&b);
        }
        text.extend_from_slice(chunks.remainder());

        if self.confirms(&text) {
            Verdict::Confirm
        } else {
            Verdict::WeakAccept
        }
    }
}

/// Classifies one candidate key against an FMX file. Non-FMX input and
/// keys of invalid length reject.
pub fn try_key(file: &[u8], key: &[u8], det: &PlaintextDetector) -> Verdict {
    if !container::detect(file) {
        return Verdict::Reject;
    }
    match crate::cipher::key_schedule(key) {
        Ok(sched) => det.classify(&sched, &file[HEADER_LEN.min(file.len())..]),
        Err(_) => Verdict::Reject,
    }
}
