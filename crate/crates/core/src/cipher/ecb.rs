//! ECB mode over the block cipher: every 8-byte block is processed on its own.

use super::blowfish::{SubkeySchedule, BLOCK_SIZE};
use super::CipherError;

/// How the final partial block is filled.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Zero bytes up to the next 8-byte boundary. Aligned input gets no padding.
    #[default]
    ZeroPad,
    /// PKCS#7; aligned input gets a full extra block.
    Pkcs7,
    /// Input must already be 8-byte aligned.
    NoPad,
}

impl std::str::FromStr for PaddingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "zero" | "zero_pad" | "zeropad" => Ok(Self::ZeroPad),
            "pkcs7" => Ok(Self::Pkcs7),
            "none" | "no_pad" | "nopad" => Ok(Self::NoPad),
            other => Err(format!("unknown padding mode `{other}`")),
        }
    }
}

/// Pads `data` to a whole number of blocks according to `pad`.
pub fn pad(data: &[u8], pad: PaddingMode) -> Result<Vec<u8>, CipherError> {
    let mut out = data.to_vec();
    match pad {
        PaddingMode::ZeroPad => out.resize(data.len().next_multiple_of(BLOCK_SIZE), 0),
        PaddingMode::Pkcs7 => {
            let n = BLOCK_SIZE - data.len() % BLOCK_SIZE;
            out.resize(data.len() + n, n as u8);
        }
        PaddingMode::NoPad => {
            if !data.len().is_multiple_of(BLOCK_SIZE) {
                return Err(CipherError::Alignment(data.len()));
            }
        }
    }
    Ok(out)
}

/// Strips PKCS#7 padding, returning the data length to keep. Invalid padding
/// leaves the data untouched (the reconstructed loader behaves this way).
pub fn pkcs7_unpadded_len(data: &[u8]) -> usize {
    let Some(&last) = data.last() else {
        return 0;
    };
    let n = usize::from(last);
    if n == 0 || n > BLOCK_SIZE || n > data.len() {
        return data.len();
    }
    if data[data.len() - n..].iter().all(|&b| b == last) {
        data.len() - n
    } else {
        data.len()
    }
}

pub fn ecb_encrypt(
    sched: &SubkeySchedule,
    data: &[u8],
    padding: PaddingMode,
) -> Result<Vec<u8>, CipherError> {
    let mut buf = pad(data, padding)?;
    encrypt_blocks_in_place(sched, &mut buf);
    Ok(buf)
}

/// Decrypts whole blocks. `Pkcs7` strips valid padding, `ZeroPad` and `NoPad`
/// return every decrypted block.
pub fn ecb_decrypt(
    sched: &SubkeySchedule,
    data: &[u8],
    padding: PaddingMode,
) -> Result<Vec<u8>, CipherError> {
    if !data.len().is_multiple_of(BLOCK_SIZE) {
        return Err(CipherError::Alignment(data.len()));
    }
    let mut buf = data.to_vec();
    decrypt_blocks_in_place(sched, &mut buf);
    if padding == PaddingMode::Pkcs7 {
        let keep = pkcs7_unpadded_len(&buf);
        buf.truncate(keep);
    }
    Ok(buf)
}

pub(crate) fn encrypt_blocks_in_place(sched: &SubkeySchedule, buf: &mut [u8]) {
    debug_assert_eq!(buf.len() % BLOCK_SIZE, 0);
    for chunk in buf.chunks_exact_mut(BLOCK_SIZE) {
        let block: &mut [u8; BLOCK_SIZE] = chunk.try_into().expect("exact chunk");
        sched.encrypt_in_place(block);
    }
}

pub(crate) fn decrypt_blocks_in_place(sched: &SubkeySchedule, buf: &mut [u8]) {
    debug_assert_eq!(buf.len() % BLOCK_SIZE, 0);
    for chunk in buf.chunks_exact_mut(BLOCK_SIZE) {
        let block: &mut [u8; BLOCK_SIZE] = chunk.try_into().expect("exact chunk");
        sched.decrypt_in_place(block);
    }
}
