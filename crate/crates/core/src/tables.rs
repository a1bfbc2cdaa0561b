//! Memory images loaded into the block RAMs.
//!
//! Every lookup table is addressed `{mode, byte}`: the block's mode bit is
//! prepended to the 8-bit input, so addresses `0x000..=0x0FF` hold the
//! encryption half and `0x100..=0x1FF` the decryption half.

use std::io::{self, Write};

use crate::aes_ref::{mix_matrix, RoundKeySet, ROUND_KEYS};
use crate::gf256::{gf_mul, sbox_forward, sbox_inverse};
use crate::Mode;

/// Capacity of one 36 Kb block RAM tile, in bits.
pub const BRAM36_BITS: u64 = 36_864;
/// Depth of the key store: `{mode, 4-bit round}`.
pub const KEY_STORE_DEPTH: usize = 32;

/// A fixed-width word array as loaded into a block RAM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RomImage {
    width: u32,
    words: Vec<u128>,
}

impl RomImage {
    pub fn new(width: u32, words: Vec<u128>) -> Self {
        assert!((1..=128).contains(&width), "word width {width}");
        Self { width, words }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn depth(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[u128] {
        &self.words
    }

    pub fn words_mut(&mut self) -> &mut [u128] {
        &mut self.words
    }

    pub fn get(&self, address: usize) -> u128 {
        self.words[address]
    }

    pub fn bits(&self) -> u64 {
        self.width as u64 * self.words.len() as u64
    }

    /// One zero-padded hex word per line, ascending address.
    pub fn dump_hex<W: Write>(&self, mut out: W) -> io::Result<()> {
        let digits = self.width.div_ceil(4) as usize;
        for w in &self.words {
            writeln!(out, "{w:0digits$x}")?;
        }
        Ok(())
    }
}

/// `{mode, byte}` as a table address.
#[inline]
pub fn table_address(mode: Mode, byte: u8) -> usize {
    (mode.bit() << 8) | byte as usize
}

/// 512 x 8-bit combined S-box: forward table in the first 2,048 bits, inverse
/// table in the second.
pub fn build_sbox_image() -> RomImage {
    let words = (0..512usize)
        .map(|a| {
            let b = a as u8;
            (if a < 256 { sbox_forward(b) } else { sbox_inverse(b) }) as u128
        })
        .collect();
    RomImage::new(8, words)
}

/// The four products of `byte` with the first matrix column, most
/// significant sub-field first: `m0*b | m1*b | m2*b | m3*b`.
pub fn mix_products(mode: Mode, byte: u8) -> u32 {
    let m = mix_matrix(mode);
    (0..4).fold(0u32, |acc, row| (acc << 8) | gf_mul(m[row][0], byte) as u32)
}

/// 512 x 32-bit mix-columns product table.
pub fn build_mixcolumns_image() -> RomImage {
    let words = (0..512usize)
        .map(|a| {
            let mode = Mode::from_bit(a >= 256);
            mix_products(mode, a as u8) as u128
        })
        .collect();
    RomImage::new(32, words)
}

/// `{mode, round}` as a key-store address.
#[inline]
pub fn key_address(mode: Mode, round: usize) -> usize {
    (mode.bit() << 4) | round
}

/// Key store contents with all 22 round keys resident.
pub fn build_key_store_image(encrypt: &RoundKeySet, decrypt: &RoundKeySet) -> RomImage {
    let mut words = vec![0u128; KEY_STORE_DEPTH];
    for round in 0..ROUND_KEYS {
        words[key_address(Mode::Encrypt, round)] = encrypt.keys[round];
        words[key_address(Mode::Decrypt, round)] = decrypt.keys[round];
    }
    RomImage::new(128, words)
}

pub fn empty_key_store_image() -> RomImage {
    RomImage::new(128, vec![0; KEY_STORE_DEPTH])
}

/// Fraction of the datapath's block-RAM capacity holding table data: four
/// tiles' worth of S-box images and eight mix-columns images over the twelve
/// datapath tiles.
pub fn datapath_bram_utilization() -> f64 {
    let sbox = build_sbox_image().bits();
    let mix = build_mixcolumns_image().bits();
    bram_utilization(&[(4, sbox), (8, mix)], 12)
}

/// `sum(count * bits) / (tiles * 36 Kb)`.
pub fn bram_utilization(contents: &[(u64, u64)], tiles: u64) -> f64 {
    let used: u64 = contents.iter().map(|(n, bits)| n * bits).sum();
    used as f64 / (tiles * BRAM36_BITS) as f64
}
