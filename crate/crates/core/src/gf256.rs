//! Arithmetic in GF(2^8) modulo the AES polynomial `x^8 + x^4 + x^3 + x + 1`.
//!
//! Multiplication is the plain shift-and-conditionally-reduce loop. Everything
//! else in the crate that needs a product (table images, the reference cipher,
//! the mix-columns checks) is derived from [`gf_mul`], so this module is the
//! ground truth the rest is compared against.

use std::fmt;
use std::ops::{Add, Mul};
use std::sync::OnceLock;

/// Low byte of the reduction polynomial `0x11B`.
pub const AES_POLY_LOW: u8 = 0x1B;

/// An element of GF(2^8), stored as its degree-7 binary polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    /// Multiplicative inverse, with the AES convention that `0` maps to `0`.
    pub fn inverse(self) -> Self {
        Self(gf_inv(self.0))
    }
}

impl Add for FieldElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self(gf_add(self.0, rhs.0))
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(gf_mul(self.0, rhs.0))
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        Self(v)
    }
}

impl fmt::LowerHex for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

#[inline]
pub fn gf_add(a: u8, b: u8) -> u8 {
    a ^ b
}

/// Multiplication by `x`: one left shift, reduced if bit 7 fell off.
#[inline]
pub fn xtime(a: u8) -> u8 {
    let shifted = a << 1;
    if a & 0x80 != 0 {
        shifted ^ AES_POLY_LOW
    } else {
        shifted
    }
}

/// Product of `a` and `b` by iterated shift and conditional add.
pub fn gf_mul(a: u8, b: u8) -> u8 {
    let mut acc = 0u8;
    let mut multiplicand = a;
    let mut multiplier = b;
    while multiplier != 0 {
        if multiplier & 1 != 0 {
            acc ^= multiplicand;
        }
        multiplicand = xtime(multiplicand);
        multiplier >>= 1;
    }
    acc
}

/// `a^254`, which is `a^-1` for nonzero `a` and `0` for `a = 0`.
pub fn gf_inv(a: u8) -> u8 {
    // square-and-multiply over the exponent 0b1111_1110
    let mut result = 1u8;
    let mut base = a;
    let mut exp = 254u32;
    while exp != 0 {
        if exp & 1 != 0 {
            result = gf_mul(result, base);
        }
        base = gf_mul(base, base);
        exp >>= 1;
    }
    result
}

fn affine(x: u8) -> u8 {
    x ^ x.rotate_left(1) ^ x.rotate_left(2) ^ x.rotate_left(3) ^ x.rotate_left(4) ^ 0x63
}

fn inverse_affine(x: u8) -> u8 {
    x.rotate_left(1) ^ x.rotate_left(3) ^ x.rotate_left(6) ^ 0x05
}

/// Forward S-box value computed from first principles (inverse, then affine).
pub fn sbox_generate(b: u8) -> u8 {
    affine(gf_inv(b))
}

/// Inverse S-box value computed from first principles (inverse affine, then inverse).
pub fn inv_sbox_generate(b: u8) -> u8 {
    gf_inv(inverse_affine(b))
}

struct SboxTables {
    forward: [u8; 256],
    inverse: [u8; 256],
}

fn tables() -> &'static SboxTables {
    static TABLES: OnceLock<SboxTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut forward = [0u8; 256];
        let mut inverse = [0u8; 256];
        for b in 0..=255u8 {
            forward[b as usize] = sbox_generate(b);
            inverse[b as usize] = inv_sbox_generate(b);
        }
        SboxTables { forward, inverse }
    })
}

/// AES S-box. The table behind it is generated once from [`sbox_generate`].
#[inline]
pub fn sbox_forward(b: u8) -> u8 {
    tables().forward[b as usize]
}

#[inline]
pub fn sbox_inverse(b: u8) -> u8 {
    tables().inverse[b as usize]
}
