//! Layer 2: Blowfish in ECB mode.

mod blowfish;
mod ecb;
mod tables;

pub use blowfish::{key_schedule, CipherKey, SubkeySchedule, BLOCK_SIZE, MAX_KEY_LEN, MIN_KEY_LEN};
pub(crate) use ecb::decrypt_blocks_in_place;
pub use ecb::{ecb_decrypt, ecb_encrypt, pad, pkcs7_unpadded_len, PaddingMode};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CipherError {
    #[error("key length {0} outside 4..=56 bytes")]
    KeyLength(usize),
    #[error("key is not valid hex")]
    KeyHex,
    #[error("block must be exactly 8 bytes, got {0}")]
    BlockSize(usize),
    #[error("input length {0} is not a multiple of 8")]
    Alignment(usize),
}
