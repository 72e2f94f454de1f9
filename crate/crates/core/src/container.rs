//! FMX container: a fixed 32-byte header followed by the encrypted payload.
//!
//! ```text
//! 0x00  magic "FMX\x01"
//! 0x04  version              u32 LE
//! 0x08  size / flags         u32 LE
//! 0x0C  20 bytes, layout depends on the header profile
//! 0x20  payload
//! ```
//!
//! Two layouts circulate for bytes 8..32 and they cannot be told apart from
//! the bytes, so every call takes an explicit [`HeaderProfile`].

use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 4] = *b"FMX\x01";
pub const HEADER_LEN: usize = 32;
/// Observed difference between the size field and the stored payload length.
pub const SIZE_SLACK: u32 = 12;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ContainerError {
    #[error("missing FMX magic")]
    NotFmx,
    #[error("file is {0} bytes, shorter than the 32-byte header")]
    Truncated(usize),
    #[error("invalid header: {0}")]
    InvalidHeader(&'static str),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeaderProfile {
    /// size at 0x08, 20 bytes of seed material at 0x0C.
    #[default]
    MainText,
    /// flags at 0x08, original size at 0x0C, MD5 checksum at 0x10.
    AppendixChecksum,
}

impl std::str::FromStr for HeaderProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "main" | "main_text" | "a" => Ok(Self::MainText),
            "appendix" | "checksum" | "appendix_checksum" | "b" => Ok(Self::AppendixChecksum),
            other => Err(format!("unknown header profile `{other}`")),
        }
    }
}

/// Profile-specific part of the header (bytes 8..32).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum HeaderBody {
    MainText {
        size_field: u32,
        #[serde(with = "hex_array")]
        seed_material: [u8; 20],
    },
    AppendixChecksum {
        flags: u32,
        original_size: u32,
        #[serde(with = "hex_array")]
        checksum: [u8; 16],
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FmxHeader {
    #[serde(with = "hex_array")]
    pub magic: [u8; 4],
    pub version: u32,
    #[serde(flatten)]
    pub body: HeaderBody,
}

/// Bit 0 of the appendix-profile flags word enables checksum verification.
pub const FLAG_CHECKSUM: u32 = 0x01;

impl FmxHeader {
    pub fn main_text(version: u32, size_field: u32, seed_material: [u8; 20]) -> Self {
        Self {
            magic: MAGIC,
            version,
            body: HeaderBody::MainText {
                size_field,
                seed_material,
            },
        }
    }

    pub fn appendix(version: u32, flags: u32, original_size: u32, checksum: [u8; 16]) -> Self {
        Self {
            magic: MAGIC,
            version,
            body: HeaderBody::AppendixChecksum {
                flags,
                original_size,
                checksum,
            },
        }
    }

    pub fn profile(&self) -> HeaderProfile {
        match self.body {
            HeaderBody::MainText { .. } => HeaderProfile::MainText,
            HeaderBody::AppendixChecksum { .. } => HeaderProfile::AppendixChecksum,
        }
    }

    /// The little-endian word at 0x08: the size under the main-text layout,
    /// the flags word under the appendix layout.
    pub fn size_field(&self) -> u32 {
        match self.body {
            HeaderBody::MainText { size_field, .. } => size_field,
            HeaderBody::AppendixChecksum { flags, .. } => flags,
        }
    }

    pub fn serialize(&self) -> Result<[u8; HEADER_LEN], ContainerError> {
        serialize_header(self)
    }
}

/// Pure prefix test on the first four bytes.
pub fn detect(bytes: &[u8]) -> bool {
    bytes.len() >= MAGIC.len() && bytes[..MAGIC.len()] == MAGIC
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn parse_header(bytes: &[u8], profile: HeaderProfile) -> Result<FmxHeader, ContainerError> {
    if !detect(bytes) {
        return Err(ContainerError::NotFmx);
    }
    if bytes.len() < HEADER_LEN {
        return Err(ContainerError::Truncated(bytes.len()));
    }
    let version = le_u32(bytes, 4);
    let body = match profile {
        HeaderProfile::MainText => HeaderBody::MainText {
            size_field: le_u32(bytes, 8),
            seed_material: bytes[12..32].try_into().expect("20-byte slice"),
        },
        HeaderProfile::AppendixChecksum => HeaderBody::AppendixChecksum {
            flags: le_u32(bytes, 8),
            original_size: le_u32(bytes, 12),
            checksum: bytes[16..32].try_into().expect("16-byte slice"),
        },
    };
    Ok(FmxHeader {
        magic: MAGIC,
        version,
        body,
    })
}

pub fn serialize_header(header: &FmxHeader) -> Result<[u8; HEADER_LEN], ContainerError> {
    if header.magic != MAGIC {
        return Err(ContainerError::InvalidHeader("magic must be FMX\\x01"));
    }
    let mut out = [0u8; HEADER_LEN];
    out[..4].copy_from_slice(&header.magic);
    out[4..8].copy_from_slice(&header.version.to_le_bytes());
    match &header.body {
        HeaderBody::MainText {
            size_field,
            seed_material,
        } => {
            out[8..12].copy_from_slice(&size_field.to_le_bytes());
            out[12..32].copy_from_slice(seed_material);
        }
        HeaderBody::AppendixChecksum {
            flags,
            original_size,
            checksum,
        } => {
            out[8..12].copy_from_slice(&flags.to_le_bytes());
            out[12..16].copy_from_slice(&original_size.to_le_bytes());
            out[16..32].copy_from_slice(checksum);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FmxContainer {
    pub header: FmxHeader,
    /// Layer-2 ciphertext: everything from offset 0x20 onward.
    pub payload: Vec<u8>,
}

impl FmxContainer {
    /// Whether the size field matches the stored payload plus 12 bytes.
    /// Only meaningful under the main-text profile.
    pub fn size_consistent(&self) -> Option<bool> {
        match self.header.body {
            HeaderBody::MainText { size_field, .. } => {
                Some(u64::from(size_field) == self.payload.len() as u64 + u64::from(SIZE_SLACK))
            }
            HeaderBody::AppendixChecksum { .. } => None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&serialize_header(&self.header)?);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }
}

pub fn unwrap(file: &[u8], profile: HeaderProfile) -> Result<FmxContainer, ContainerError> {
    let header = parse_header(file, profile)?;
    Ok(FmxContainer {
        header,
        payload: file[HEADER_LEN..].to_vec(),
    })
}

/// Main-text size field for a payload of `payload_len` bytes.
pub fn size_field_for(payload_len: usize) -> Result<u32, ContainerError> {
    u32::try_from(payload_len)
        .ok()
        .and_then(|n| n.checked_add(SIZE_SLACK))
        .ok_or(ContainerError::InvalidHeader(
            "payload too large for size field",
        ))
}

mod hex_array {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(v: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        d: D,
    ) -> Result<[u8; N], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(D::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| D::Error::custom(format!("expected {N} bytes")))
    }
}
