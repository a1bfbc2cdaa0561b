//! A bit- and cycle-accurate software model of the DRAB-LOCUS AES-128 FPGA
//! architecture.
//!
//! The crate is layered bottom-up:
//!
//! * [`gf256`] and [`aes_ref`] are the functional ground truth.
//! * [`fabric`] models the FPGA primitives (dual-port block RAM, XOR-configured
//!   DSP slices, LUT shift registers) under a two-phase compute/commit clock.
//! * [`tables`] builds the bit-exact memory images those primitives load.
//! * [`datapath`], [`controller`] and [`key_schedule`] are the three hardware
//!   blocks, composed into one clocked circuit by [`simulator`].
//! * [`metrics`] reproduces the latency, throughput, efficiency, energy and
//!   co-location arithmetic over catalog data.
//!
//! ```
//! use drablocus::{aes_ref, simulator::{Job, Simulator}, Mode};
//!
//! let key = 0x000102030405060708090a0b0c0d0e0f;
//! let pt = 0x00112233445566778899aabbccddeeff;
//! let run = Simulator::new(key).run(&[Job::new(0, Mode::Encrypt, pt)]).unwrap();
//! assert_eq!(run.outputs[0].block, aes_ref::encrypt_block(key, pt));
//! assert_eq!(run.summary.blocks[0].latency(), 115);
//! ```

pub mod aes_ref;
pub mod controller;
pub mod datapath;
pub mod error;
pub mod fabric;
pub mod gf256;
pub mod hex;
pub mod key_schedule;
pub mod metrics;
pub mod simulator;
pub mod tables;

pub use error::{Error, SimFault};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Per-block operation. The datapath carries one mode bit per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Encrypt,
    Decrypt,
}

impl Mode {
    /// Address bit prepended to table lookups: 0 selects the low half
    /// (encryption), 1 the high half (decryption).
    #[inline]
    pub fn bit(self) -> usize {
        match self {
            Mode::Encrypt => 0,
            Mode::Decrypt => 1,
        }
    }

    #[inline]
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Mode::Decrypt
        } else {
            Mode::Encrypt
        }
    }

    /// Single-letter tag used in trace files.
    pub fn letter(self) -> char {
        match self {
            Mode::Encrypt => 'e',
            Mode::Decrypt => 'd',
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Encrypt => "enc",
            Mode::Decrypt => "dec",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enc" | "e" | "encrypt" => Ok(Mode::Encrypt),
            "dec" | "d" | "decrypt" => Ok(Mode::Decrypt),
            other => Err(Error::Parse {
                line: 0,
                message: format!("unknown mode `{other}` (expected enc or dec)"),
            }),
        }
    }
}
