//! 128-bit hex helpers shared by the job, trace and dump formats.

use crate::Error;

/// Parses exactly 32 hex digits (an optional `0x` prefix and `_` separators
/// are accepted).
pub fn parse_block(s: &str) -> Result<u128, Error> {
    let s = s.strip_prefix("0x").unwrap_or(s);
    let digits: String = s.chars().filter(|&c| c != '_').collect();
    if digits.len() != 32 {
        return Err(Error::Parse {
            line: 0,
            message: format!("expected 32 hex digits, found {}", digits.len()),
        });
    }
    u128::from_str_radix(&digits, 16).map_err(|e| Error::Parse {
        line: 0,
        message: format!("bad hex block `{s}`: {e}"),
    })
}

pub fn format_block(v: u128) -> String {
    format!("{v:032x}")
}

pub fn block_from_bytes(bytes: &[u8]) -> u128 {
    let mut buf = [0u8; 16];
    buf.copy_from_slice(&bytes[..16]);
    u128::from_be_bytes(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format() {
        let v = parse_block("000102030405060708090a0b0c0d0e0f").unwrap();
        assert_eq!(v, 0x000102030405060708090a0b0c0d0e0f);
        assert_eq!(format_block(v), "000102030405060708090a0b0c0d0e0f");
        assert_eq!(parse_block("0x0001_0203_0405_0607_0809_0a0b_0c0d_0e0f").unwrap(), v);
        assert!(parse_block("0001").is_err());
        assert!(parse_block("zz0102030405060708090a0b0c0d0e0f").is_err());
    }
}
