//! The full transform: Layer 1 (LCG) -> Layer 2 (Blowfish-ECB) -> FMX container.
//!
//! Header conventions written by [`wrap`]:
//!
//! * main-text profile: size field = payload + 12; seed material carries the
//!   Layer-1 seed (LE, bytes 0x0C..0x10) and the plaintext length (LE,
//!   bytes 0x10..0x14), zeros elsewhere.
//! * appendix profile: flags bit 0 = checksum enabled, original size =
//!   plaintext length, checksum = MD5(plaintext).

use serde::{Deserialize, Serialize};

use crate::cipher::{self, CipherError, CipherKey, PaddingMode, SubkeySchedule, BLOCK_SIZE};
use crate::container::{
    self, ContainerError, FmxHeader, HeaderBody, HeaderProfile, FLAG_CHECKSUM, HEADER_LEN,
};
use crate::digest::md5;
use crate::lcg::{self, DeviceIdentity, SeedDerivationProfile, TransformProfile};

/// Value written to the version word.
pub const CODE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("header records {recorded} plaintext bytes but only {available} were decrypted")]
    LengthMismatch { recorded: usize, available: usize },
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PipelineConfig {
    pub key: CipherKey,
    pub seed_profile: SeedDerivationProfile,
    pub transform: TransformProfile,
    pub header_profile: HeaderProfile,
    pub padding: PaddingMode,
    pub checksum_enabled: bool,
}

impl PipelineConfig {
    /// Main-text defaults: zero padding, `f(i) = 0`, no checksum.
    pub fn new(key: CipherKey, seed_profile: SeedDerivationProfile) -> Self {
        Self {
            key,
            seed_profile,
            transform: TransformProfile::IdentityZero,
            header_profile: HeaderProfile::MainText,
            padding: PaddingMode::ZeroPad,
            checksum_enabled: false,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.checksum_enabled && self.header_profile != HeaderProfile::AppendixChecksum {
            return Err(PipelineError::InvalidConfig(
                "checksum requires the appendix header profile",
            ));
        }
        Ok(())
    }
}

/// Serializable summary of a [`PipelineConfig`], without the key.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub seed_profile: SeedDerivationProfile,
    pub transform: TransformProfile,
    pub header_profile: HeaderProfile,
    pub padding: PaddingMode,
    pub checksum_enabled: bool,
}

pub fn wrap(
    plaintext: &[u8],
    id: &DeviceIdentity,
    cfg: &PipelineConfig,
) -> Result<Vec<u8>, PipelineError> {
    cfg.validate()?;
    let plain_len = u32::try_from(plaintext.len())
        .map_err(|_| ContainerError::InvalidHeader("plaintext too large"))?;
    let seed = lcg::derive_seed(id, cfg.seed_profile);
    let sched = SubkeySchedule::new(&cfg.key);

    let layer1 = lcg::layer1_apply(plaintext, seed, cfg.transform);
    let payload = cipher::ecb_encrypt(&sched, &layer1, cfg.padding)?;

    let header = match cfg.header_profile {
        HeaderProfile::MainText => {
            let mut seed_material = [0u8; 20];
            seed_material[..4].copy_from_slice(&seed.to_le_bytes());
            seed_material[4..8].copy_from_slice(&plain_len.to_le_bytes());
            FmxHeader::main_text(
                CODE_VERSION,
                container::size_field_for(payload.len())?,
                seed_material,
            )
        }
        HeaderProfile::AppendixChecksum => {
            let flags = if cfg.checksum_enabled {
                FLAG_CHECKSUM
            } else {
                0
            };
            FmxHeader::appendix(CODE_VERSION, flags, plain_len, md5(plaintext))
        }
    };

    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&header.serialize()?);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn load(
    file: &[u8],
    id: &DeviceIdentity,
    cfg: &PipelineConfig,
) -> Result<Vec<u8>, PipelineError> {
    cfg.validate()?;
    let c = container::unwrap(file, cfg.header_profile)?;
    let sched = SubkeySchedule::new(&cfg.key);
    let mut layer1 = cipher::ecb_decrypt(&sched, &c.payload, cfg.padding)?;

    let (recorded_len, checksum) = match c.header.body {
        HeaderBody::MainText { seed_material, .. } => (
            u32::from_le_bytes(seed_material[4..8].try_into().expect("4 bytes")) as usize,
            None,
        ),
        HeaderBody::AppendixChecksum {
            flags,
            original_size,
            checksum,
        } => (
            original_size as usize,
            (cfg.checksum_enabled && flags & FLAG_CHECKSUM != 0).then_some(checksum),
        ),
    };

    if cfg.padding != PaddingMode::Pkcs7 {
        if recorded_len > layer1.len() {
            return Err(PipelineError::LengthMismatch {
                recorded: recorded_len,
                available: layer1.len(),
            });
        }
        layer1.truncate(recorded_len);
    }

    let seed = lcg::derive_seed(id, cfg.seed_profile);
    lcg::layer1_apply_in_place(&mut layer1, seed, cfg.transform);

    if let Some(expected) = checksum {
        if md5(&layer1) != expected {
            return Err(PipelineError::ChecksumMismatch);
        }
    }
    Ok(layer1)
}

/// Zero-fills `payload` up to the next 8-byte boundary, like `dd bs=8 conv=sync`.
pub fn zero_sync(payload: &[u8]) -> Vec<u8> {
    let mut buf = payload.to_vec();
    buf.resize(payload.len().next_multiple_of(BLOCK_SIZE), 0);
    buf
}

/// Layer-2 only: drop the 32-byte header, zero-sync the tail to 8 bytes and
/// ECB-decrypt every block without unpadding. Output is the Layer-1
/// ciphertext plus whatever padding artifacts were present.
pub fn layer2_only_decrypt(file: &[u8], key: &CipherKey) -> Result<Vec<u8>, PipelineError> {
    if !container::detect(file) {
        return Err(ContainerError::NotFmx.into());
    }
    let payload = file.get(HEADER_LEN..).unwrap_or_default();
    let mut buf = zero_sync(payload);
    cipher::decrypt_blocks_in_place(&SubkeySchedule::new(key), &mut buf);
    Ok(buf)
}
