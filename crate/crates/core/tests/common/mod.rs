//! Independent oracles for integration tests: a textbook AES-128 written
//! directly from the standard, sharing no code with the crate under test.

#![allow(dead_code)]

/// Carry-less multiply, then reduce by the AES polynomial with long division.
pub fn gmul(a: u8, b: u8) -> u8 {
    let mut product: u16 = 0;
    for i in 0..8 {
        if b >> i & 1 == 1 {
            product ^= (a as u16) << i;
        }
    }
    for bit in (8..15).rev() {
        if product >> bit & 1 == 1 {
            product ^= 0x11b << (bit - 8);
        }
    }
    product as u8
}

/// Multiplicative inverse by exhaustive search.
pub fn ginv(a: u8) -> u8 {
    if a == 0 {
        return 0;
    }
    (1..=255u8).find(|&x| gmul(a, x) == 1).expect("field element has an inverse")
}

pub fn sbox(a: u8) -> u8 {
    let x = ginv(a);
    x ^ x.rotate_left(1) ^ x.rotate_left(2) ^ x.rotate_left(3) ^ x.rotate_left(4) ^ 0x63
}

pub fn sbox_table() -> [u8; 256] {
    std::array::from_fn(|i| sbox(i as u8))
}

pub fn inv_sbox_table() -> [u8; 256] {
    let fwd = sbox_table();
    let mut inv = [0u8; 256];
    for (i, &s) in fwd.iter().enumerate() {
        inv[s as usize] = i as u8;
    }
    inv
}

type State = [[u8; 4]; 4]; // state[row][col]

fn to_state(block: u128) -> State {
    let bytes = block.to_be_bytes();
    let mut s = [[0; 4]; 4];
    for (i, b) in bytes.iter().enumerate() {
        s[i % 4][i / 4] = *b;
    }
    s
}

fn from_state(s: &State) -> u128 {
    let mut bytes = [0u8; 16];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = s[i % 4][i / 4];
    }
    u128::from_be_bytes(bytes)
}

fn mix(s: &mut State, m: [u8; 4]) {
    for c in 0..4 {
        let col = [s[0][c], s[1][c], s[2][c], s[3][c]];
        for r in 0..4 {
            s[r][c] = (0..4).fold(0, |acc, k| acc ^ gmul(m[(k + 4 - r) % 4], col[k]));
        }
    }
}

/// MixColumns (or InvMixColumns) on a 128-bit state.
pub fn mix_columns(block: u128, inverse: bool) -> u128 {
    let mut s = to_state(block);
    mix(&mut s, if inverse { [0x0e, 0x0b, 0x0d, 0x09] } else { [0x02, 0x03, 0x01, 0x01] });
    from_state(&s)
}

/// Round keys from FIPS-197 section 5.2, as eleven 128-bit words.
pub fn expand(key: u128) -> [u128; 11] {
    let sb = sbox_table();
    let mut w = [0u32; 44];
    for (i, word) in w.iter_mut().take(4).enumerate() {
        *word = (key >> (96 - 32 * i)) as u32;
    }
    let mut rc = 1u8;
    for i in 4..44 {
        let mut t = w[i - 1];
        if i % 4 == 0 {
            t = t.rotate_left(8);
            t = u32::from_be_bytes(t.to_be_bytes().map(|b| sb[b as usize]));
            t ^= (rc as u32) << 24;
            rc = gmul(rc, 2);
        }
        w[i] = w[i - 4] ^ t;
    }
    std::array::from_fn(|r| (0..4).fold(0u128, |acc, j| acc << 32 | w[4 * r + j] as u128))
}

pub fn encrypt(key: u128, block: u128) -> u128 {
    let sb = sbox_table();
    let k = expand(key);
    let mut s = to_state(block ^ k[0]);
    for round in 1..=10 {
        for row in s.iter_mut() {
            for b in row.iter_mut() {
                *b = sb[*b as usize];
            }
        }
        for (r, row) in s.iter_mut().enumerate() {
            row.rotate_left(r);
        }
        if round != 10 {
            mix(&mut s, [0x02, 0x03, 0x01, 0x01]);
        }
        s = to_state(from_state(&s) ^ k[round]);
    }
    from_state(&s)
}

/// The straightforward inverse cipher (FIPS-197 section 5.3), not the
/// equivalent form.
pub fn decrypt(key: u128, block: u128) -> u128 {
    let inv = inv_sbox_table();
    let k = expand(key);
    let mut s = to_state(block ^ k[10]);
    for round in (0..10).rev() {
        for (r, row) in s.iter_mut().enumerate() {
            row.rotate_right(r);
        }
        for row in s.iter_mut() {
            for b in row.iter_mut() {
                *b = inv[*b as usize];
            }
        }
        s = to_state(from_state(&s) ^ k[round]);
        if round != 0 {
            mix(&mut s, [0x0e, 0x0b, 0x0d, 0x09]);
        }
    }
    from_state(&s)
}

/// The keys a block meets in the equivalent inverse cipher, in order.
pub fn decrypt_key_sequence(key: u128) -> [u128; 11] {
    let k = expand(key);
    std::array::from_fn(|i| match i {
        0 => k[10],
        10 => k[0],
        _ => mix_columns(k[10 - i], true),
    })
}

/// Published known-answer vectors: (key, plaintext, ciphertext).
pub const KNOWN_ANSWERS: [(u128, u128, u128); 2] = [
    // cipher example
    (
        0x2b7e151628aed2a6abf7158809cf4f3c,
        0x3243f6a8885a308d313198a2e0370734,
        0x3925841d02dc09fbdc118597196a0b32,
    ),
    // AES-128 example vector
    (
        0x000102030405060708090a0b0c0d0e0f,
        0x00112233445566778899aabbccddeeff,
        0x69c4e0d86a7b0430d8cdb78070b4c55a,
    ),
];

#[test]
fn oracle_self_check() {
    assert_eq!(sbox(0x00), 0x63);
    assert_eq!(sbox(0x53), 0xed);
    assert_eq!(gmul(0x57, 0x83), 0xc1);
    assert_eq!((expand(0x2b7e151628aed2a6abf7158809cf4f3c)[1] >> 96) as u32, 0xa0fafe17);
    for (k, p, c) in KNOWN_ANSWERS {
        assert_eq!(encrypt(k, p), c);
        assert_eq!(decrypt(k, c), p);
    }
}
