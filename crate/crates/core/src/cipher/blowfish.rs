//! Blowfish: 64-bit block, 16-round Feistel network, 4..=56 byte keys.
//!
//! Halves are read big-endian from the block, as in the reference definition.

use super::tables::{P_INIT, S_INIT};
use super::CipherError;

pub const BLOCK_SIZE: usize = 8;
pub const MIN_KEY_LEN: usize = 4;
pub const MAX_KEY_LEN: usize = 56;

const ROUNDS: usize = 16;

/// Key material for the block cipher. Length is checked on construction.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CipherKey(Vec<u8>);

impl CipherKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, CipherError> {
        let bytes = bytes.into();
        if !(MIN_KEY_LEN..=MAX_KEY_LEN).contains(&bytes.len()) {
            return Err(CipherError::KeyLength(bytes.len()));
        }
        Ok(Self(bytes))
    }

    /// Parses a hex string (case-insensitive, no separators).
    pub fn from_hex(text: &str) -> Result<Self, CipherError> {
        let bytes = hex::decode(text.trim()).map_err(|_| CipherError::KeyHex)?;
        Self::new(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl std::fmt::Debug for CipherKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CipherKey({})", self.to_hex())
    }
}

impl TryFrom<&[u8]> for CipherKey {
    type Error = CipherError;

    fn try_from(bytes: &[u8]) -> Result<Self, Self::Error> {
        Self::new(bytes)
    }
}

/// Expanded key state. Immutable once built, so one schedule can be shared
/// by any number of threads.
#[derive(Clone, PartialEq, Eq)]
pub struct SubkeySchedule {
    p: [u32; ROUNDS + 2],
    s: [[u32; 256]; 4],
}

impl std::fmt::Debug for SubkeySchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubkeySchedule")
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

/// Expands a raw key. Fails only on an out-of-range key length.
pub fn key_schedule(key: &[u8]) -> Result<SubkeySchedule, CipherError> {
    CipherKey::new(key).map(|k| SubkeySchedule::new(&k))
}

impl SubkeySchedule {
    pub fn new(key: &CipherKey) -> Self {
        Self::expand(key.as_bytes())
    }

    /// Key expansion for keys whose length is already known to be valid.
    pub(crate) fn expand(key: &[u8]) -> Self {
        let mut sched = SubkeySchedule {
            p: P_INIT,
            s: S_INIT,
        };
        sched.mix_key(key);
        sched
    }

    fn mix_key(&mut self, key: &[u8]) {
        debug_assert!((MIN_KEY_LEN..=MAX_KEY_LEN).contains(&key.len()));
        let mut pos = 0;
        for word in self.p.iter_mut() {
            let mut k = 0u32;
            for _ in 0..4 {
                k = (k << 8) | u32::from(key[pos]);
                pos = (pos + 1) % key.len();
            }
            *word ^= k;
        }

        let (mut l, mut r) = (0u32, 0u32);
        for i in (0..ROUNDS + 2).step_by(2) {
            (l, r) = self.encrypt_words(l, r);
            self.p[i] = l;
            self.p[i + 1] = r;
        }
        for b in 0..4 {
            for i in (0..256).step_by(2) {
                (l, r) = self.encrypt_words(l, r);
                self.s[b][i] = l;
                self.s[b][i + 1] = r;
            }
        }
    }

    /// Expands `N` keys together. The rounds of the independent schedules
    /// are interleaved so their latency chains overlap; results are identical
    /// to `N` separate [`expand`](Self::expand) calls.
    pub(crate) fn rekey_lanes<const N: usize>(lanes: &mut [Self; N], keys: &[&[u8]; N]) {
        for (sched, key) in lanes.iter_mut().zip(keys) {
            debug_assert!((MIN_KEY_LEN..=MAX_KEY_LEN).contains(&key.len()));
            sched.p = P_INIT;
            sched.s = S_INIT;
            let mut pos = 0;
            for word in sched.p.iter_mut() {
                let mut k = 0u32;
                for _ in 0..4 {
                    k = (k << 8) | u32::from(key[pos]);
                    pos = (pos + 1) % key.len();
                }
                *word ^= k;
            }
        }

        let mut l = [0u32; N];
        let mut r = [0u32; N];
        for i in (0..ROUNDS + 2).step_by(2) {
            Self::encrypt_lanes(lanes, &mut l, &mut r);
            for k in 0..N {
                lanes[k].p[i] = l[k];
                lanes[k].p[i + 1] = r[k];
            }
        }
        for b in 0..4 {
            for i in (0..256).step_by(2) {
                Self::encrypt_lanes(lanes, &mut l, &mut r);
                for k in 0..N {
                    lanes[k].s[b][i] = l[k];
                    lanes[k].s[b][i + 1] = r[k];
                }
            }
        }
    }

    #[inline(always)]
    fn encrypt_lanes<const N: usize>(lanes: &[Self; N], l: &mut [u32; N], r: &mut [u32; N]) {
        for i in (0..ROUNDS).step_by(2) {
            for k in 0..N {
                l[k] ^= lanes[k].p[i];
                r[k] ^= lanes[k].feistel(l[k]) ^ lanes[k].p[i + 1];
            }
            for k in 0..N {
                l[k] ^= lanes[k].feistel(r[k]);
            }
        }
        for k in 0..N {
            (l[k], r[k]) = (r[k] ^ lanes[k].p[ROUNDS + 1], l[k] ^ lanes[k].p[ROUNDS]);
        }
    }

    #[inline(always)]
    fn feistel(&self, x: u32) -> u32 {
        let [a, b, c, d] = x.to_be_bytes();
        (self.s[0][a as usize].wrapping_add(self.s[1][b as usize]) ^ self.s[2][c as usize])
            .wrapping_add(self.s[3][d as usize])
    }

    #[inline]
    pub fn encrypt_words(&self, mut l: u32, mut r: u32) -> (u32, u32) {
        for i in (0..ROUNDS).step_by(2) {
            l ^= self.p[i];
            r ^= self.feistel(l);
            r ^= self.p[i + 1];
            l ^= self.feistel(r);
        }
        (r ^ self.p[ROUNDS + 1], l ^ self.p[ROUNDS])
    }

    #[inline]
    pub fn decrypt_words(&self, mut l: u32, mut r: u32) -> (u32, u32) {
        for i in (1..=ROUNDS / 2).rev() {
            l ^= self.p[2 * i + 1];
            r ^= self.feistel(l);
            r ^= self.p[2 * i];
            l ^= self.feistel(r);
        }
        (r ^ self.p[0], l ^ self.p[1])
    }

    pub fn encrypt_in_place(&self, block: &mut [u8; BLOCK_SIZE]) {
        let (l, r) = split(block);
        let (l, r) = self.encrypt_words(l, r);
        join(block, l, r);
    }

    pub fn decrypt_in_place(&self, block: &mut [u8; BLOCK_SIZE]) {
        let (l, r) = split(block);
        let (l, r) = self.decrypt_words(l, r);
        join(block, l, r);
    }

    pub fn encrypt_block(&self, block: &[u8]) -> Result<[u8; BLOCK_SIZE], CipherError> {
        let mut out = to_block(block)?;
        self.encrypt_in_place(&mut out);
        Ok(out)
    }

    pub fn decrypt_block(&self, block: &[u8]) -> Result<[u8; BLOCK_SIZE], CipherError> {
        let mut out = to_block(block)?;
        self.decrypt_in_place(&mut out);
        Ok(out)
    }
}

fn to_block(bytes: &[u8]) -> Result<[u8; BLOCK_SIZE], CipherError> {
    bytes
        .try_into()
        .map_err(|_| CipherError::BlockSize(bytes.len()))
}

#[inline(always)]
fn split(block: &[u8; BLOCK_SIZE]) -> (u32, u32) {
    (
        u32::from_be_bytes([block[0], block[1], block[2], block[3]]),
        u32::from_be_bytes([block[4], block[5], block[6], block[7]]),
    )
}

#[inline(always)]
fn join(block: &mut [u8; BLOCK_SIZE], l: u32, r: u32) {
    block[..4].copy_from_slice(&l.to_be_bytes());
    block[4..].copy_from_slice(&r.to_be_bytes());
}
