//! Round-key initialization and delivery.
//!
//! Keys are computed once, before any data enters, by borrowing the
//! datapath: SubWord goes through the sub bytes BRAMs (tap into the SB input
//! OR gate) and InvMixColumns for the equivalent-inverse keys goes through
//! the mix columns unit (tap into the MC input OR gate). All 22 keys end up
//! in one dual-port key store addressed `{mode, round}`.
//!
//! Initialization schedule (cycles counted from entering `key_init`):
//!
//! | cycles  | action |
//! |---------|--------|
//! | 0       | store `K0`; present `RotWord(K0.w3)` on the SB tap |
//! | 2i      | read `SubWord` back from the SB output, store `Ki`, present the next `RotWord` (i = 1..10) |
//! | 21..29  | read `K9..K1` from the store (port B) |
//! | 22..30  | present each key on the MC tap in decrypt mode |
//! | 28..36  | read `InvMixColumns` back from the MC output, store `{dec, r}` |
//! | 30..36  | port B back on its parked address `{enc, 10}` |
//!
//! During operation port A serves the main add round key from
//! `{mode, counter[slot] + 1}`; port B is parked on `{enc, 10}`; a holding
//! register keeps `K0`. Between them these cover the initial and final
//! whitening keys of both modes: the decrypt whitening keys are the encrypt
//! ones swapped.

use crate::aes_ref::{rcon, ROUNDS};
use crate::controller::SLOTS;
use crate::datapath::{Tag, MAIN_ROUNDS};
use crate::fabric::{Bram, Clocked, Port, Reg};
use crate::tables::{empty_key_store_image, key_address, RomImage};
use crate::{Mode, SimFault};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KsState {
    Idle,
    Expanding,
    Inverting,
    Ready,
}

/// Cycles spent in [`KsState::Expanding`]: one SubWord round trip per key.
pub const EXPAND_CYCLES: u64 = 2 * ROUNDS as u64 + 1;
/// Cycles spent in [`KsState::Inverting`]: nine pipelined InvMixColumns plus
/// the store read in front and the six-cycle readback behind.
pub const INVERT_CYCLES: u64 = 1 + MAIN_ROUNDS as u64 + 6;
pub const INIT_CYCLES: u64 = EXPAND_CYCLES + INVERT_CYCLES;

/// What the key schedule drives into the datapath's OR gates this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TapDrive {
    pub sb_tap: u128,
    pub sb_mode: Mode,
    pub mc_tap: u128,
    pub mc_mode: Mode,
}

/// Keys presented to the three add-round-key consumers this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct KeyDelivery {
    pub initial: u128,
    pub main: u128,
    pub final_key: u128,
}

fn rot_word(w: u32) -> u32 {
    w.rotate_left(8)
}

/// One key-expansion step given `SubWord(RotWord(w3))`.
fn next_key(prev: u128, sub_rot: u32, round: usize) -> u128 {
    let t = sub_rot ^ (rcon(round) as u32) << 24;
    let w: [u32; 4] = std::array::from_fn(|i| (prev >> (96 - 32 * i)) as u32);
    let w4 = w[0] ^ t;
    let w5 = w[1] ^ w4;
    let w6 = w[2] ^ w5;
    let w7 = w[3] ^ w6;
    (w4 as u128) << 96 | (w5 as u128) << 64 | (w6 as u128) << 32 | w7 as u128
}

#[derive(Debug, Clone)]
pub struct KeySchedule {
    state: Reg<KsState>,
    step: Reg<u64>,
    cipher_key: u128,
    store: Bram,
    initial_key: Reg<u128>,
    /// Most recently expanded key.
    scratch: Reg<u128>,
    counters: [Reg<u8>; SLOTS],
    init_cycles: u64,
}

impl KeySchedule {
    pub fn new() -> Self {
        Self::with_store(&empty_key_store_image())
    }

    pub fn with_store(image: &RomImage) -> Self {
        Self {
            state: Reg::new(KsState::Idle),
            step: Reg::default(),
            cipher_key: 0,
            store: Bram::new("key_store", image, false),
            initial_key: Reg::default(),
            scratch: Reg::default(),
            counters: Default::default(),
            init_cycles: 0,
        }
    }

    pub fn state(&self) -> KsState {
        self.state.get()
    }

    pub fn is_ready(&self) -> bool {
        self.state.get() == KsState::Ready
    }

    /// Cycles the last initialization took.
    pub fn init_cycles(&self) -> u64 {
        self.init_cycles
    }

    pub fn store_contents(&self) -> RomImage {
        RomImage::new(128, self.store.contents().to_vec())
    }

    pub fn initial_key_register(&self) -> u128 {
        self.initial_key.get()
    }

    pub fn counter(&self, slot: u8) -> u8 {
        self.counters[slot as usize].get()
    }

    /// Starts computing round keys for `key`. The controller must be holding
    /// the datapath in `key_init`.
    pub fn initialize(&mut self, key: u128) -> Result<(), SimFault> {
        if matches!(self.state.get(), KsState::Expanding | KsState::Inverting) {
            return Err(SimFault::WrongState { state: "initializing", action: "key initialization" });
        }
        self.cipher_key = key;
        self.state.set(KsState::Expanding);
        self.step.set(0);
        self.init_cycles = 0;
        Ok(())
    }

    /// Initialization compute phase. `sb_out` and `mc_out` are the datapath
    /// unit outputs visible this cycle.
    pub fn step_init(&mut self, sb_out: u128, mc_out: u128) -> Result<TapDrive, SimFault> {
        let step = self.step.get();
        let mut taps = TapDrive::default();
        match self.state.get() {
            KsState::Expanding => {
                let round = (step / 2) as usize;
                if step.is_multiple_of(2) {
                    let key = if round == 0 {
                        self.store.write(Port::B, key_address(Mode::Decrypt, ROUNDS), self.cipher_key)?;
                        self.initial_key.set(self.cipher_key);
                        self.cipher_key
                    } else {
                        next_key(self.scratch.get(), (sb_out >> 96) as u32, round)
                    };
                    self.store.write(Port::A, key_address(Mode::Encrypt, round), key)?;
                    self.scratch.set(key);
                    if round < ROUNDS {
                        taps.sb_tap = (rot_word(key as u32) as u128) << 96;
                    } else {
                        self.store.write(Port::B, key_address(Mode::Decrypt, 0), key)?;
                    }
                }
                if step + 1 == EXPAND_CYCLES {
                    self.state.set(KsState::Inverting);
                    self.step.set(0);
                } else {
                    self.step.set(step + 1);
                }
            }
            KsState::Inverting => {
                // step j: read K[9-j]; present what step j-1 read; write back r = j-6.
                // After the last read port B goes back to parking, so K10 is
                // on the bus before the first admission.
                let b_round = if step < MAIN_ROUNDS as u64 { MAIN_ROUNDS - step as usize } else { ROUNDS };
                self.store.read(Port::B, key_address(Mode::Encrypt, b_round))?;
                if (1..=MAIN_ROUNDS as u64).contains(&step) {
                    taps.mc_tap = self.store.data_out(Port::B);
                    taps.mc_mode = Mode::Decrypt;
                }
                if step >= 7 {
                    let r = (step - 6) as usize;
                    self.store.write(Port::A, key_address(Mode::Decrypt, r), mc_out)?;
                }
                if step + 1 == INVERT_CYCLES {
                    self.state.set(KsState::Ready);
                } else {
                    self.step.set(step + 1);
                }
            }
            KsState::Idle | KsState::Ready => {}
        }
        self.init_cycles += 1;
        Ok(taps)
    }

    /// Operation compute phase. `s7` is the word now in `S7`, whose key
    /// must be read now to meet it at the ARK input one cycle later; `s10`
    /// is the word about to complete a main-loop pass; `admitted` is the
    /// slot launched this cycle.
    pub fn fetch_keys(&mut self, s7: Option<Tag>, s10: Option<Tag>, admitted: Option<u8>) -> Result<(), SimFault> {
        if self.state.get() != KsState::Ready {
            return Err(SimFault::WrongState { state: "initializing", action: "key fetch" });
        }
        if let Some(t) = s7 {
            let round = self.counters[t.slot as usize].get() as usize + 1;
            if !(1..=MAIN_ROUNDS).contains(&round) {
                return Err(SimFault::KeyRoundOutOfRange { round });
            }
            self.store.read(Port::A, key_address(t.mode, round))?;
        }
        self.store.read(Port::B, key_address(Mode::Encrypt, ROUNDS))?;
        if let Some(t) = s10 {
            let c = &mut self.counters[t.slot as usize];
            let n = c.get() + 1;
            c.set(n);
        }
        if let Some(slot) = admitted {
            self.counters[slot as usize].set(0);
        }
        Ok(())
    }

    /// Keys on the consumer buses this cycle. `initial_mode` and
    /// `final_mode` steer the whitening-key crossbar.
    pub fn delivery(&self, initial_mode: Mode, final_mode: Mode) -> KeyDelivery {
        let parked = self.store.data_out(Port::B);
        let register = self.initial_key.get();
        let pick = |use_register: bool| if use_register { register } else { parked };
        KeyDelivery {
            initial: pick(initial_mode == Mode::Encrypt),
            main: self.store.data_out(Port::A),
            final_key: pick(final_mode == Mode::Decrypt),
        }
    }
}

impl Default for KeySchedule {
    fn default() -> Self {
        Self::new()
    }
}

impl Clocked for KeySchedule {
    fn commit(&mut self) {
        self.state.commit();
        self.step.commit();
        self.store.commit();
        self.initial_key.commit();
        self.scratch.commit();
        self.counters.iter_mut().for_each(Clocked::commit);
    }
}
