//! Layer 1: an LCG keystream XORed over the plaintext.
//!
//! State update is `X' = (0x19660D * X + 0x3C6EF35F) mod 2^32`. Two byte
//! extractions are in circulation and both are provided:
//!
//! * [`keystream`] emits bits 24..32 of `X_i`, starting from `X_0 = seed`.
//! * [`gen_obfuscation`] advances first, then emits bits 16..24.

use serde::{Deserialize, Serialize};

use crate::digest::md5;

pub const LCG_MULTIPLIER: u32 = 0x0019_660D;
pub const LCG_INCREMENT: u32 = 0x3C6E_F35F;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LcgState(pub u32);

impl LcgState {
    #[inline]
    pub fn advance(self) -> Self {
        Self(
            self.0
                .wrapping_mul(LCG_MULTIPLIER)
                .wrapping_add(LCG_INCREMENT),
        )
    }

    #[inline]
    pub fn high_byte(self) -> u8 {
        (self.0 >> 24) as u8
    }

    /// Returns the high byte of the current state and the advanced state.
    #[inline]
    pub fn next(self) -> (Self, u8) {
        (self.advance(), self.high_byte())
    }
}

/// Infinite keystream iterator for the `>> 24` extraction.
#[derive(Clone, Debug)]
pub struct Keystream {
    state: LcgState,
}

impl Keystream {
    pub fn new(seed: u32) -> Self {
        Self {
            state: LcgState(seed),
        }
    }
}

impl Iterator for Keystream {
    type Item = u8;

    #[inline]
    fn next(&mut self) -> Option<u8> {
        let (next, byte) = self.state.next();
        self.state = next;
        Some(byte)
    }
}

pub fn keystream(seed: u32, len: usize) -> Vec<u8> {
    Keystream::new(seed).take(len).collect()
}

/// The appendix `Gen()` loop: advance, then take `(state >> 16) & 0xFF`.
pub fn gen_obfuscation(seed: u32, len: usize) -> Vec<u8> {
    let mut state = LcgState(seed);
    (0..len)
        .map(|_| {
            state = state.advance();
            (state.0 >> 16) as u8
        })
        .collect()
}

/// Hardware identifiers that feed seed derivation and candidate keys.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceIdentity {
    device_code: String,
    #[serde(default)]
    pub rf_code: String,
    #[serde(default)]
    pub bluetooth: String,
    #[serde(default)]
    pub machine_type: String,
    #[serde(default)]
    pub firmware_version: u32,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("device code must not be empty")]
pub struct EmptyDeviceCode;

impl DeviceIdentity {
    pub fn new(
        device_code: impl Into<String>,
        rf_code: impl Into<String>,
        bluetooth: impl Into<String>,
        machine_type: impl Into<String>,
        firmware_version: u32,
    ) -> Result<Self, EmptyDeviceCode> {
        let device_code = device_code.into();
        if device_code.is_empty() {
            return Err(EmptyDeviceCode);
        }
        Ok(Self {
            device_code,
            rf_code: rf_code.into(),
            bluetooth: bluetooth.into(),
            machine_type: machine_type.into(),
            firmware_version,
        })
    }

    /// The identity used by the published key-generator tooling
    /// (`E21D1000P64BKH86` / `34d21p` / `04360` / `4`), firmware version 1.
    pub fn sample() -> Self {
        Self::new("E21D1000P64BKH86", "34d21p", "04360", "4", 1).expect("non-empty")
    }

    pub fn device_code(&self) -> &str {
        &self.device_code
    }
}

/// How the Layer-1 seed is obtained from an identity.
///
/// The device's real derivation is not known. `ReferenceMd5` is this
/// workbench's own stand-in and makes no claim of matching real hardware.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedDerivationProfile {
    #[default]
    ReferenceMd5,
    ExplicitSeed(u32),
}

/// The per-index term `f(i)` XORed in alongside the keystream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformProfile {
    /// `f(i) = 0`.
    #[default]
    IdentityZero,
    /// `f(i) = i mod 256`.
    IndexByte,
}

impl TransformProfile {
    #[inline]
    pub fn at(self, index: usize) -> u8 {
        match self {
            Self::IdentityZero => 0,
            Self::IndexByte => index as u8,
        }
    }
}

impl std::str::FromStr for TransformProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "zero" | "identity_zero" => Ok(Self::IdentityZero),
            "index" | "index_byte" => Ok(Self::IndexByte),
            other => Err(format!("unknown transform `{other}`")),
        }
    }
}

/// `ReferenceMd5`: first four bytes (little-endian) of
/// `MD5(device_code || rf_code || machine_type || decimal(firmware_version))`.
pub fn derive_seed(id: &DeviceIdentity, profile: SeedDerivationProfile) -> u32 {
    match profile {
        SeedDerivationProfile::ExplicitSeed(seed) => seed,
        SeedDerivationProfile::ReferenceMd5 => {
            let input = format!(
                "{}{}{}{}",
                id.device_code, id.rf_code, id.machine_type, id.firmware_version
            );
            let d = md5(input.as_bytes());
            u32::from_le_bytes([d[0], d[1], d[2], d[3]])
        }
    }
}

/// `out[i] = data[i] ^ K_i ^ f(i)`. Applying it twice restores the input.
pub fn layer1_apply(data: &[u8], seed: u32, transform: TransformProfile) -> Vec<u8> {
    let mut out = data.to_vec();
    layer1_apply_in_place(&mut out, seed, transform);
    out
}

pub fn layer1_apply_in_place(data: &mut [u8], seed: u32, transform: TransformProfile) {
    for (i, (b, k)) in data.iter_mut().zip(Keystream::new(seed)).enumerate() {
        *b ^= k ^ transform.at(i);
    }
}
