//! Control FSM and block tracking.
//!
//! The controller mirrors the datapath with a handful of narrow registers:
//!
//! * a 12-bit occupancy register, bit `i` set while stage `S<i>` holds a block;
//! * a 12-bit mode register shifting in lockstep, so the units that need a
//!   block's mode bit read it at their own stage;
//! * a ring of slot ids riding alongside (the round-key counters are indexed
//!   by slot);
//! * twelve 113-bit LUT shift registers, one per slot, of which only the
//!   final bit is wired out. A token enters when the block is launched and
//!   falls out of the last position exactly when the block leaves shift rows
//!   for the last time, which is the signal to divert it to the final ARK.

use crate::datapath::{stage, Datapath, Resets, StageId, StageModes, Tag, LOOP_STAGES, TRACK_LENGTH};
use crate::fabric::{Clocked, LutShiftRegister, Reg, Taps};
use crate::{Mode, SimFault};

pub const SLOTS: usize = LOOP_STAGES;
const LOOP_MASK: u16 = (1 << LOOP_STAGES) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsmState {
    Reset,
    KeyInit,
    Flush,
    Run,
}

impl FsmState {
    pub fn name(self) -> &'static str {
        match self {
            FsmState::Reset => "reset",
            FsmState::KeyInit => "key_init",
            FsmState::Flush => "flush",
            FsmState::Run => "run",
        }
    }
}

impl std::fmt::Display for FsmState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of an admission request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Accepted { slot: u8 },
    Stalled,
}

/// What the controller drives into the datapath this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControlOutputs {
    pub modes: StageModes,
    pub resets: Resets,
    pub divert: bool,
}

/// Per-cycle status for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerStatus {
    pub fsm: FsmState,
    /// Bit `i` = stage `S<i>` occupied.
    pub occupancy: u16,
    /// Bit `i` = mode bit at stage `S<i>`.
    pub modes: u16,
    pub stall: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct EdgeStage {
    valid: bool,
    mode: Mode,
    slot: u8,
}

impl EdgeStage {
    fn tag(self) -> Option<Tag> {
        self.valid.then_some(Tag { mode: self.mode, slot: self.slot })
    }
}

#[derive(Debug, Clone)]
pub struct Controller {
    fsm: Reg<FsmState>,
    flush_remaining: Reg<u32>,
    track: Vec<LutShiftRegister>,
    busy: [Reg<bool>; SLOTS],
    occupancy: Reg<u16>,
    modes: LutShiftRegister,
    slot_ring: [Reg<u8>; LOOP_STAGES],
    initial: [Reg<EdgeStage>; 2],
    fin: [Reg<EdgeStage>; 2],
    pending: Option<(u8, Mode)>,
    stalled: Reg<bool>,
    requested: bool,
}

impl Default for Controller {
    fn default() -> Self {
        Self::new()
    }
}

impl Controller {
    pub fn new() -> Self {
        let shift = |len, taps| LutShiftRegister::new(len, taps).expect("static length");
        Self {
            fsm: Reg::new(FsmState::Reset),
            flush_remaining: Reg::default(),
            track: (0..SLOTS).map(|_| shift(TRACK_LENGTH as u32, Taps::FinalOnly)).collect(),
            busy: Default::default(),
            occupancy: Reg::default(),
            modes: shift(LOOP_STAGES as u32, Taps::All),
            slot_ring: Default::default(),
            initial: Default::default(),
            fin: Default::default(),
            pending: None,
            stalled: Reg::default(),
            requested: false,
        }
    }

    /// Leaves arbitrary bits in the track registers, as after a previous
    /// run or power-up. Only the flush state clears them.
    pub fn preload_tracks(&mut self, bits: u128) {
        self.track.iter_mut().for_each(|t| t.preload(bits));
    }

    pub fn fsm(&self) -> FsmState {
        self.fsm.get()
    }

    pub fn start_key_init(&mut self) -> Result<(), SimFault> {
        match self.fsm.get() {
            FsmState::Reset | FsmState::Run if self.is_idle() => {
                self.fsm.set(FsmState::KeyInit);
                Ok(())
            }
            s => Err(SimFault::WrongState { state: s.name(), action: "key initialization" }),
        }
    }

    /// Key schedule reports ready: flush the tracking registers next.
    pub fn finish_key_init(&mut self) -> Result<(), SimFault> {
        if self.fsm.get() != FsmState::KeyInit {
            return Err(SimFault::WrongState { state: self.fsm.get().name(), action: "leaving key_init" });
        }
        self.fsm.set(FsmState::Flush);
        self.flush_remaining.set(TRACK_LENGTH as u32);
        Ok(())
    }

    /// No blocks anywhere in the pipeline.
    pub fn is_idle(&self) -> bool {
        self.occupancy.get() == 0
            && self.initial.iter().all(|s| !s.get().valid)
            && self.fin.iter().all(|s| !s.get().valid)
    }

    pub fn in_flight(&self) -> usize {
        self.busy.iter().filter(|b| b.get()).count()
    }

    fn occupied(&self, stage: usize) -> bool {
        self.occupancy.get() >> stage & 1 == 1
    }

    fn mode_at(&self, stage: usize) -> Mode {
        Mode::from_bit(self.modes.bit(stage as u32).expect("all taps"))
    }

    /// Requests admission of a new block this cycle. A block is stalled if the
    /// word now in `S9` will be moving from add round key into sub bytes on
    /// the cycle the new block would, or if every slot is in flight.
    pub fn admit_block(&mut self, mode: Mode) -> Result<Admission, SimFault> {
        if self.fsm.get() != FsmState::Run {
            return Err(SimFault::WrongState { state: self.fsm.get().name(), action: "admission" });
        }
        if self.requested {
            return Err(SimFault::InvalidConfig("admission requested twice in one cycle".into()));
        }
        self.requested = true;
        if self.occupied(stage::ARK_IN1) {
            return Ok(Admission::Stalled);
        }
        let Some(slot) = (0..SLOTS).find(|&s| !self.busy[s].get()) else {
            return Ok(Admission::Stalled);
        };
        self.pending = Some((slot as u8, mode));
        Ok(Admission::Accepted { slot: slot as u8 })
    }

    /// Slot whose track register is asserting its final bit this cycle.
    pub fn finishing_slot(&self) -> Option<u8> {
        self.track.iter().position(|t| t.final_bit()).map(|s| s as u8)
    }

    /// Combinational outputs for this cycle. `tap_modes` are the key
    /// schedule's requested modes, honored during key initialization.
    pub fn outputs(&self, tap_modes: (Mode, Mode)) -> ControlOutputs {
        let fsm = self.fsm.get();
        let key_init = fsm == FsmState::KeyInit;
        let recirculating = self.occupied(LOOP_STAGES - 1);
        let entering = self.initial[1].get();
        let sub_bytes = if recirculating {
            self.mode_at(LOOP_STAGES - 1)
        } else if entering.valid {
            entering.mode
        } else {
            tap_modes.0
        };
        let mix_columns = if key_init { tap_modes.1 } else { self.mode_at(stage::SHIFT_ROWS) };
        ControlOutputs {
            modes: StageModes { sub_bytes, shift_rows: self.mode_at(stage::SB_OUT), mix_columns },
            resets: Resets {
                initial_ark: key_init || !self.initial[0].get().valid,
                main_ark: fsm != FsmState::Run || !self.occupied(stage::ARK_IN2),
                final_ark: key_init || !self.fin[0].get().valid,
                shift_rows: key_init,
            },
            divert: fsm == FsmState::Run && self.finishing_slot().is_some(),
        }
    }

    /// Advances every tracking register by one cycle (compute phase).
    pub fn step_tracking(&mut self, cycle: u64) -> Result<ControlOutputs, SimFault> {
        let out = self.outputs((Mode::Encrypt, Mode::Encrypt));
        let finishing = self.finishing_slot();
        let running = self.fsm.get() == FsmState::Run;
        if running && self.track.iter().filter(|t| t.final_bit()).count() > 1 {
            return Err(SimFault::TrackingMismatch {
                cycle,
                stage: "track".into(),
                detail: "more than one track register asserting its final bit".into(),
            });
        }
        if let Some(slot) = finishing.filter(|_| running) {
            let at_sr = self.slot_ring[stage::SHIFT_ROWS].get();
            if !self.occupied(stage::SHIFT_ROWS) || at_sr != slot {
                return Err(SimFault::TrackingMismatch {
                    cycle,
                    stage: StageId::Loop(stage::SHIFT_ROWS as u8).to_string(),
                    detail: format!("slot {slot} final bit set but shift rows holds {:?}", self.occupied(stage::SHIFT_ROWS).then_some(at_sr)),
                });
            }
        }

        let pending = self.pending.take();
        for (i, t) in self.track.iter_mut().enumerate() {
            t.shift(pending.is_some_and(|(s, _)| s as usize == i));
        }
        if let Some(slot) = finishing {
            self.busy[slot as usize].set(false);
        }
        if let Some((slot, _)) = pending {
            self.busy[slot as usize].set(true);
        }

        // main loop: S11 or I1 feeds S0; a diverted word leaves after S2
        let recirculating = self.occupied(LOOP_STAGES - 1);
        let entering = self.initial[1].get();
        let mut occ = ((self.occupancy.get() << 1) | (recirculating || entering.valid) as u16) & LOOP_MASK;
        if out.divert {
            occ &= !(1 << stage::MC_LOOKUP);
        }
        self.occupancy.set(occ);
        self.modes.shift(out.modes.sub_bytes == Mode::Decrypt);
        let slot_in = if recirculating { self.slot_ring[LOOP_STAGES - 1].get() } else { entering.slot };
        for i in (1..LOOP_STAGES).rev() {
            let prev = self.slot_ring[i - 1].get();
            self.slot_ring[i].set(prev);
        }
        self.slot_ring[0].set(slot_in);

        let i0 = self.initial[0].get();
        self.initial[1].set(i0);
        self.initial[0].set(match pending {
            Some((slot, mode)) => EdgeStage { valid: true, mode, slot },
            None => EdgeStage::default(),
        });
        let f0 = self.fin[0].get();
        self.fin[1].set(f0);
        self.fin[0].set(if out.divert {
            EdgeStage {
                valid: true,
                mode: self.mode_at(stage::SHIFT_ROWS),
                slot: self.slot_ring[stage::SHIFT_ROWS].get(),
            }
        } else {
            EdgeStage::default()
        });

        if self.fsm.get() == FsmState::Flush {
            let left = self.flush_remaining.get() - 1;
            self.flush_remaining.set(left);
            if left == 0 {
                self.fsm.set(FsmState::Run);
            }
        }
        self.stalled.set(self.requested && pending.is_none());
        self.requested = false;
        Ok(out)
    }

    /// Controller's view of the word in each stage.
    pub fn expected_tag(&self, id: StageId) -> Option<Tag> {
        match id {
            StageId::Initial(i) => self.initial[i as usize].get().tag(),
            StageId::Final(i) => self.fin[i as usize].get().tag(),
            StageId::Loop(i) => {
                let i = i as usize;
                self.occupied(i).then(|| Tag { mode: self.mode_at(i), slot: self.slot_ring[i].get() })
            }
        }
    }

    /// Checks that the datapath's metadata agrees with the tracking registers.
    pub fn reconcile(&self, dp: &Datapath, cycle: u64) -> Result<(), SimFault> {
        for id in StageId::TRACE_ORDER {
            let (want, got) = (self.expected_tag(id), dp.stage_tag(id));
            if want != got {
                return Err(SimFault::TrackingMismatch {
                    cycle,
                    stage: id.to_string(),
                    detail: format!("controller {want:?}, datapath {got:?}"),
                });
            }
        }
        Ok(())
    }

    /// Status as of the start of the current cycle. `stall` reports whether
    /// the previous cycle's request was refused.
    pub fn status(&self) -> ControllerStatus {
        ControllerStatus {
            fsm: self.fsm.get(),
            occupancy: self.occupancy.get(),
            modes: self.modes.bits().expect("all taps") as u16,
            stall: self.stalled.get(),
        }
    }

    pub fn track_final_bits(&self) -> u16 {
        self.track.iter().enumerate().fold(0, |acc, (i, t)| acc | (t.final_bit() as u16) << i)
    }

    /// Every track register holds only zeros.
    pub fn tracks_empty(&self) -> bool {
        self.track.iter().all(LutShiftRegister::is_empty)
    }
}

impl Clocked for Controller {
    fn commit(&mut self) {
        self.fsm.commit();
        self.flush_remaining.commit();
        self.track.iter_mut().for_each(Clocked::commit);
        self.busy.iter_mut().for_each(Clocked::commit);
        self.occupancy.commit();
        self.modes.commit();
        self.slot_ring.iter_mut().for_each(Clocked::commit);
        self.initial.iter_mut().for_each(Clocked::commit);
        self.fin.iter_mut().for_each(Clocked::commit);
        self.stalled.commit();
    }
}
