//! Candidate-key generators. Every family is deterministic given an identity
//! and its parameters; every candidate is exactly 16 bytes.

use md5::{Digest as _, Md5};
use serde::{Deserialize, Serialize};

use super::KeySearchError;
use crate::digest::{md5, sha256};
use crate::lcg::{DeviceIdentity, LcgState};

pub type Candidate = [u8; 16];

pub const SUFFIX_CHARSET: &[u8; 62] =
    b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
pub const MAX_SUFFIX_LEN: usize = 6;

pub const DIGEST_SALTS: [&str; 7] = [
    "", "Unitree", "unitree", "UNITREE", "Robotics", "G1", "FMX\x01",
];
pub const DEFAULT_MAC_PREFIXES: [&str; 3] = ["00:11:22", "AA:BB:CC", "DE:AD:BE"];
pub const DEFAULT_MAC_VARIATIONS: u32 = 100;

/// 2024-01-01T00:00:00Z
pub const DEFAULT_WINDOW_START: i64 = 1_704_067_200;
/// 2025-08-01T00:00:00Z
pub const DEFAULT_WINDOW_END: i64 = 1_754_006_400;
pub const WEEK_SECS: i64 = 7 * 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateFamily {
    DeviceCodeVariations,
    DigestCombinations,
    LcgSeeded,
    HardwareCombos,
    TimestampKeys,
    SuffixBruteForce,
}

impl CandidateFamily {
    pub const ALL: [CandidateFamily; 6] = [
        Self::DeviceCodeVariations,
        Self::DigestCombinations,
        Self::LcgSeeded,
        Self::HardwareCombos,
        Self::TimestampKeys,
        Self::SuffixBruteForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::DeviceCodeVariations => "device_code_variations",
            Self::DigestCombinations => "digest_combinations",
            Self::LcgSeeded => "lcg_seeded",
            Self::HardwareCombos => "hardware_combos",
            Self::TimestampKeys => "timestamp_keys",
            Self::SuffixBruteForce => "suffix_brute_force",
        }
    }

    /// The candidate stream for this family. Everything but the suffix
    /// family is small enough to materialize up front.
    pub fn candidates(
        self,
        id: &DeviceIdentity,
        params: &FamilyParams,
    ) -> Result<Box<dyn Iterator<Item = Candidate> + Send>, KeySearchError> {
        Ok(match self {
            Self::DeviceCodeVariations => Box::new(gen_device_code_variations(id).into_iter()),
            Self::DigestCombinations => Box::new(gen_digest_combinations(id).into_iter()),
            Self::LcgSeeded => {
                let seeds = params
                    .lcg_seeds
                    .clone()
                    .unwrap_or_else(|| default_lcg_seeds(id));
                Box::new(gen_lcg_seeded(&seeds).into_iter())
            }
            Self::HardwareCombos => Box::new(
                gen_hardware_combos(id, &params.mac_prefixes, params.mac_variations).into_iter(),
            ),
            Self::TimestampKeys => {
                let w = params.timestamp_window;
                Box::new(gen_timestamp_keys(id, w.start, w.end, w.stride)?.into_iter())
            }
            Self::SuffixBruteForce => Box::new(SuffixKeys::new(
                id,
                params.suffix_min_len,
                params.suffix_max_len,
            )?),
        })
    }
}

impl std::str::FromStr for CandidateFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown candidate family `{s}`"))
    }
}

impl std::fmt::Display for CandidateFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampWindow {
    pub start: i64,
    pub end: i64,
    pub stride: i64,
}

impl Default for TimestampWindow {
    fn default() -> Self {
        Self {
            start: DEFAULT_WINDOW_START,
            end: DEFAULT_WINDOW_END,
            stride: WEEK_SECS,
        }
    }
}

/// Tunables shared by the families of one attack plan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// `None` uses [`default_lcg_seeds`].
    pub lcg_seeds: Option<Vec<u32>>,
    pub mac_prefixes: Vec<String>,
    pub mac_variations: u32,
    pub timestamp_window: TimestampWindow,
    pub suffix_min_len: usize,
    pub suffix_max_len: usize,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self {
            lcg_seeds: None,
            mac_prefixes: DEFAULT_MAC_PREFIXES.iter().map(|s| s.to_string()).collect(),
            mac_variations: DEFAULT_MAC_VARIATIONS,
            timestamp_window: TimestampWindow::default(),
            suffix_min_len: 1,
            suffix_max_len: 3,
        }
    }
}

fn pad16(bytes: &[u8]) -> Candidate {
    let mut out = [0u8; 16];
    let n = bytes.len().min(16);
    out[..n].copy_from_slice(&bytes[..n]);
    out
}

/// Original, rearranged, reversed, first-8 + last-8, then ten per-character
/// shifts by 0..10. The two position-based variants need at least 16
/// characters and are skipped for shorter codes.
pub fn gen_device_code_variations(id: &DeviceIdentity) -> Vec<Candidate> {
    let dc = id.device_code();
    let chars: Vec<char> = dc.chars().collect();
    let mut keys = vec![pad16(dc.as_bytes())];

    if chars.len() >= 16 {
        let part = |a: usize, b: usize| chars[a..b].iter().collect::<String>();
        let rearranged = part(0, 4) + &part(8, 12) + &part(12, 16) + &part(4, 8);
        keys.push(pad16(rearranged.as_bytes()));
    }
    let reversed: String = chars.iter().rev().collect();
    keys.push(pad16(reversed.as_bytes()));
    if chars.len() >= 16 {
        let n = chars.len();
        let halves: String = chars[..8].iter().chain(&chars[n - 8..]).collect();
        keys.push(pad16(halves.as_bytes()));
    }
    for shift in 0..10u32 {
        let shifted: String = chars
            .iter()
            .map(|&c| char::from_u32((c as u32 + shift) % 256).expect("below 256"))
            .collect();
        keys.push(pad16(shifted.as_bytes()));
    }
    keys
}

/// Identity-field concatenations fed to the digest family, in order.
pub fn digest_inputs(id: &DeviceIdentity) -> [String; 10] {
    let (dc, rf, bt, mt) = (
        id.device_code(),
        &id.rf_code,
        &id.bluetooth,
        &id.machine_type,
    );
    [
        dc.to_string(),
        format!("{dc}{rf}"),
        format!("{dc}{bt}"),
        format!("{dc}{mt}"),
        format!("{dc}{rf}{bt}"),
        format!("{rf}{dc}"),
        format!("{bt}{dc}"),
        format!("{dc}:{rf}"),
        format!("{dc}-{bt}"),
        format!("{dc}_{mt}"),
    ]
}

/// For each combination, for each salt: MD5, then SHA-256 truncated to 16 bytes.
pub fn gen_digest_combinations(id: &DeviceIdentity) -> Vec<Candidate> {
    let mut keys = Vec::with_capacity(10 * DIGEST_SALTS.len() * 2);
    for combo in digest_inputs(id) {
        for salt in DIGEST_SALTS {
            let data = format!("{combo}{salt}");
            keys.push(md5(data.as_bytes()));
            keys.push(sha256(data.as_bytes())[..16].try_into().expect("16 bytes"));
        }
    }
    keys
}

/// Fixed seeds plus the leading 32 bits (big-endian) of MD5(device_code)
/// and MD5(rf_code).
pub fn default_lcg_seeds(id: &DeviceIdentity) -> Vec<u32> {
    let lead = |s: &str| {
        let d = md5(s.as_bytes());
        u32::from_be_bytes([d[0], d[1], d[2], d[3]])
    };
    vec![
        0,
        1,
        42,
        123_456,
        0xDEAD_BEEF,
        0xCAFE_BABE,
        lead(id.device_code()),
        lead(&id.rf_code),
    ]
}

/// 16 bytes per seed, each bits 16..24 of the freshly advanced state.
pub fn gen_lcg_seeded(seeds: &[u32]) -> Vec<Candidate> {
    seeds
        .iter()
        .map(|&seed| {
            let mut state = LcgState(seed);
            std::array::from_fn(|_| {
                state = state.advance();
                (state.0 >> 16) as u8
            })
        })
        .collect()
}

/// MD5(device_code || prefix || XX XX XX) for `i` in `0..variations`, with
/// `XX` the two-digit uppercase hex of `i` and colons removed.
pub fn gen_hardware_combos(
    id: &DeviceIdentity,
    prefixes: &[String],
    variations: u32,
) -> Vec<Candidate> {
    let mut keys = Vec::with_capacity(prefixes.len() * variations as usize);
    for prefix in prefixes {
        for i in 0..variations {
            let mac = format!("{prefix}:{i:02X}:{i:02X}:{i:02X}").replace(':', "");
            keys.push(md5(format!("{}{mac}", id.device_code()).as_bytes()));
        }
    }
    keys
}

/// Number of samples in a timestamp window: `max(1, ceil((end - start) / stride))`.
pub fn timestamp_sample_count(start: i64, end: i64, stride: i64) -> Result<u64, KeySearchError> {
    if start > end || stride <= 0 {
        return Err(KeySearchError::InvalidRange { start, end, stride });
    }
    let span = (end - start) as u64;
    Ok(span.div_ceil(stride as u64).max(1))
}

/// MD5(device_code || decimal timestamp) for `start + k * stride`.
pub fn gen_timestamp_keys(
    id: &DeviceIdentity,
    start: i64,
    end: i64,
    stride: i64,
) -> Result<Vec<Candidate>, KeySearchError> {
    let n = timestamp_sample_count(start, end, stride)?;
    Ok((0..n as i64)
        .map(|k| md5(format!("{}{}", id.device_code(), start + k * stride).as_bytes()))
        .collect())
}

/// Lazy suffix stream for lengths `1..=max_len`.
pub fn gen_suffix_keys(id: &DeviceIdentity, max_len: usize) -> Result<SuffixKeys, KeySearchError> {
    SuffixKeys::new(id, 1, max_len)
}

/// Number of keys [`SuffixKeys`] yields for lengths `min_len..=max_len`.
pub fn suffix_key_count(min_len: usize, max_len: usize) -> u64 {
    (min_len..=max_len).map(|n| 2 * 62u64.pow(n as u32)).sum()
}

/// For every suffix over the 62-character alphabet, shortest first and
/// lexicographic within a length: MD5(device_code || suffix) then
/// MD5(device_code || rf_code || suffix).
#[derive(Clone)]
pub struct SuffixKeys {
    with_device: Md5,
    with_device_rf: Md5,
    max_len: usize,
    digits: Vec<u8>,
    suffix: Vec<u8>,
    pending: Option<Candidate>,
    done: bool,
}

impl SuffixKeys {
    pub fn new(
        id: &DeviceIdentity,
        min_len: usize,
        max_len: usize,
    ) -> Result<Self, KeySearchError> {
        if min_len == 0 || min_len > max_len || max_len > MAX_SUFFIX_LEN {
            return Err(KeySearchError::SuffixLength { min_len, max_len });
        }
        let dc = id.device_code().as_bytes();
        Ok(Self {
            with_device: Md5::new_with_prefix(dc),
            with_device_rf: Md5::new_with_prefix(dc).chain_update(id.rf_code.as_bytes()),
            max_len,
            digits: vec![0; min_len],
            suffix: vec![SUFFIX_CHARSET[0]; min_len],
            pending: None,
            done: false,
        })
    }

    fn step(&mut self) {
        for pos in (0..self.digits.len()).rev() {
            self.digits[pos] += 1;
            if usize::from(self.digits[pos]) < SUFFIX_CHARSET.len() {
                self.suffix[pos] = SUFFIX_CHARSET[usize::from(self.digits[pos])];
                return;
            }
            self.digits[pos] = 0;
            self.suffix[pos] = SUFFIX_CHARSET[0];
        }
        if self.digits.len() == self.max_len {
            self.done = true;
        } else {
            self.digits.push(0);
            self.suffix.push(SUFFIX_CHARSET[0]);
        }
    }
}

impl Iterator for SuffixKeys {
    type Item = Candidate;

    fn next(&mut self) -> Option<Candidate> {
        if let Some(second) = self.pending.take() {
            self.step();
            return Some(second);
        }
        if self.done {
            return None;
        }
        let first = self
            .with_device
            .clone()
            .chain_update(&self.suffix)
            .finalize();
        let second = self
            .with_device_rf
            .clone()
            .chain_update(&self.suffix)
            .finalize();
        self.pending = Some(second.into());
        Some(first.into())
    }
}
