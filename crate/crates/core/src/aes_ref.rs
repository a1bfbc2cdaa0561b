//! Functional AES-128: the golden model every simulator output is checked
//! against.
//!
//! Decryption uses the equivalent inverse cipher, so both directions apply
//! the sub-round transformations in the same order (sub bytes, shift rows,
//! mix columns, add round key) and differ only in their tables and keys.

use crate::gf256::{gf_mul, sbox_forward, sbox_inverse};
use crate::Mode;

pub const ROUNDS: usize = 10;
pub const ROUND_KEYS: usize = ROUNDS + 1;

/// First column of the encryption mix-columns matrix; the remaining columns
/// are rotations of it.
pub const ENCRYPT_COLUMN: [u8; 4] = [0x02, 0x01, 0x01, 0x03];
/// First column of the decryption mix-columns matrix.
pub const DECRYPT_COLUMN: [u8; 4] = [0x0E, 0x09, 0x0D, 0x0B];

/// Returns the mix-columns matrix for `mode` as `m[row][col]`.
pub fn mix_matrix(mode: Mode) -> [[u8; 4]; 4] {
    let first = match mode {
        Mode::Encrypt => ENCRYPT_COLUMN,
        Mode::Decrypt => DECRYPT_COLUMN,
    };
    let mut m = [[0u8; 4]; 4];
    for (row, line) in m.iter_mut().enumerate() {
        for (col, cell) in line.iter_mut().enumerate() {
            *cell = first[(row + 4 - col) % 4];
        }
    }
    m
}

/// The 4x4 AES state, stored column-major: byte `4 * col + row` holds
/// `s(row, col)`, and byte 0 is the most significant byte of the 128-bit word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CipherState(pub [u8; 16]);

impl CipherState {
    pub fn from_u128(word: u128) -> Self {
        Self(word.to_be_bytes())
    }

    pub fn to_u128(self) -> u128 {
        u128::from_be_bytes(self.0)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.0[4 * col + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.0[4 * col + row] = v;
    }

    pub fn column(&self, col: usize) -> [u8; 4] {
        [self.0[4 * col], self.0[4 * col + 1], self.0[4 * col + 2], self.0[4 * col + 3]]
    }
}

impl From<u128> for CipherState {
    fn from(w: u128) -> Self {
        Self::from_u128(w)
    }
}

impl From<CipherState> for u128 {
    fn from(s: CipherState) -> Self {
        s.to_u128()
    }
}

pub fn sub_bytes(state: CipherState, inverse: bool) -> CipherState {
    let table = if inverse { sbox_inverse } else { sbox_forward };
    CipherState(state.0.map(table))
}

/// Rotates row `r` left by `r` positions (right when `inverse`).
pub fn shift_rows(state: CipherState, inverse: bool) -> CipherState {
    let mut out = CipherState::default();
    for row in 0..4 {
        for col in 0..4 {
            let src = if inverse { (col + 4 - row) % 4 } else { (col + row) % 4 };
            out.set(row, col, state.get(row, src));
        }
    }
    out
}

pub fn mix_column(column: [u8; 4], mode: Mode) -> [u8; 4] {
    let m = mix_matrix(mode);
    let mut out = [0u8; 4];
    for (row, o) in out.iter_mut().enumerate() {
        *o = (0..4).fold(0, |acc, k| acc ^ gf_mul(m[row][k], column[k]));
    }
    out
}

pub fn mix_columns(state: CipherState, inverse: bool) -> CipherState {
    let mode = if inverse { Mode::Decrypt } else { Mode::Encrypt };
    let mut out = CipherState::default();
    for col in 0..4 {
        let mixed = mix_column(state.column(col), mode);
        out.0[4 * col..4 * col + 4].copy_from_slice(&mixed);
    }
    out
}

pub fn add_round_key(state: CipherState, key: u128) -> CipherState {
    CipherState::from_u128(state.to_u128() ^ key)
}

/// Eleven 128-bit round keys in the order the cipher for `mode` consumes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundKeySet {
    pub keys: [u128; ROUND_KEYS],
    pub mode: Mode,
}

impl RoundKeySet {
    pub fn get(&self, round: usize) -> u128 {
        self.keys[round]
    }
}

fn sub_word(w: u32) -> u32 {
    u32::from_be_bytes(w.to_be_bytes().map(sbox_forward))
}

/// Round constant for expansion step `i` (1-based): `x^(i-1)` in GF(2^8).
pub fn rcon(i: usize) -> u8 {
    (1..i).fold(1u8, |acc, _| gf_mul(acc, 0x02))
}

/// AES-128 key expansion.
pub fn key_expand(key: u128) -> RoundKeySet {
    let mut w = [0u32; 4 * ROUND_KEYS];
    for (i, word) in w.iter_mut().take(4).enumerate() {
        *word = (key >> (96 - 32 * i)) as u32;
    }
    for i in 4..w.len() {
        let mut temp = w[i - 1];
        if i % 4 == 0 {
            temp = sub_word(temp.rotate_left(8)) ^ ((rcon(i / 4) as u32) << 24);
        }
        w[i] = w[i - 4] ^ temp;
    }
    let mut keys = [0u128; ROUND_KEYS];
    for (r, k) in keys.iter_mut().enumerate() {
        *k = w[4 * r..4 * r + 4]
            .iter()
            .fold(0u128, |acc, &word| (acc << 32) | word as u128);
    }
    RoundKeySet { keys, mode: Mode::Encrypt }
}

/// Decryption keys for the equivalent inverse cipher: the encryption keys
/// reversed, with inverse mix columns applied to the nine inner keys.
pub fn key_expand_equivalent_inverse(key: u128) -> RoundKeySet {
    equivalent_inverse_keys(&key_expand(key))
}

pub fn equivalent_inverse_keys(enc: &RoundKeySet) -> RoundKeySet {
    let mut keys = [0u128; ROUND_KEYS];
    keys[0] = enc.keys[ROUNDS];
    keys[ROUNDS] = enc.keys[0];
    for (r, k) in keys.iter_mut().enumerate().take(ROUNDS).skip(1) {
        *k = mix_columns(CipherState::from_u128(enc.keys[ROUNDS - r]), true).to_u128();
    }
    RoundKeySet { keys, mode: Mode::Decrypt }
}

/// Runs the forward-structured round sequence with the given keys. The same
/// routine serves encryption and equivalent-inverse decryption.
pub fn run_rounds(keys: &RoundKeySet, block: u128) -> u128 {
    let inverse = keys.mode == Mode::Decrypt;
    let mut state = add_round_key(CipherState::from_u128(block), keys.keys[0]);
    for round in 1..ROUNDS {
        state = sub_bytes(state, inverse);
        state = shift_rows(state, inverse);
        state = mix_columns(state, inverse);
        state = add_round_key(state, keys.keys[round]);
    }
    state = sub_bytes(state, inverse);
    state = shift_rows(state, inverse);
    add_round_key(state, keys.keys[ROUNDS]).to_u128()
}

/// AES-128 with both key schedules expanded up front.
#[derive(Debug, Clone)]
pub struct Aes128 {
    pub encrypt_keys: RoundKeySet,
    pub decrypt_keys: RoundKeySet,
}

impl Aes128 {
    pub fn new(key: u128) -> Self {
        let encrypt_keys = key_expand(key);
        let decrypt_keys = equivalent_inverse_keys(&encrypt_keys);
        Self { encrypt_keys, decrypt_keys }
    }

    pub fn encrypt(&self, block: u128) -> u128 {
        run_rounds(&self.encrypt_keys, block)
    }

    pub fn decrypt(&self, block: u128) -> u128 {
        run_rounds(&self.decrypt_keys, block)
    }

    pub fn process(&self, mode: Mode, block: u128) -> u128 {
        match mode {
            Mode::Encrypt => self.encrypt(block),
            Mode::Decrypt => self.decrypt(block),
        }
    }
}

pub fn encrypt_block(key: u128, plaintext: u128) -> u128 {
    run_rounds(&key_expand(key), plaintext)
}

pub fn decrypt_block(key: u128, ciphertext: u128) -> u128 {
    run_rounds(&key_expand_equivalent_inverse(key), ciphertext)
}
