//! Composes datapath, controller and key schedule into one clocked circuit
//! and drives job schedules through it.
//!
//! Cycle 0 is the first cycle of key initialization. The circuit then spends
//! its key-init cycles, 113 flush cycles, and starts admitting blocks. A
//! block admitted (presented to the initial ARK) in cycle `a` is readable at
//! the final ARK output during cycle `a + 115`.
//!
//! # Trace format
//!
//! One line per record, fields in this order, cycles ascending:
//!
//! ```text
//! cycle=<n> ctrl fsm=<reset|key_init|flush|run> occ=<3 hex> modes=<3 hex> stall=<0|1>
//! cycle=<n> stage=<I0..I1|S0..S11|F0..F1> slot=<id> mode=<e|d> data=<32 hex>
//! cycle=<n> key=<initial|main|final> slot=<id> mode=<e|d> data=<32 hex>
//! ```
//!
//! Every cycle starts with its `ctrl` line (register state during that
//! cycle; `occ` bit `i` is stage `S<i>`, `stall` reports the previous
//! cycle's request). Stage lines follow for each stage holding a valid block,
//! in pipeline order, then `key` lines for each key latched by an ARK input
//! register in that cycle. `S3`/`S4` hold 512 bits of lookup products; the
//! trace shows the state they sum to.

use std::collections::VecDeque;
use std::io::Write;

use crate::controller::{Admission, Controller, FsmState};
use crate::datapath::{stage, Datapath, DatapathDrive, PipelineWord, StageId, BLOCK_LATENCY, LOOP_STAGES};
use crate::fabric::Clocked;
use crate::hex::{format_block, parse_block};
use crate::key_schedule::{KeySchedule, TapDrive};
use crate::tables::{build_mixcolumns_image, build_sbox_image, RomImage};
use crate::{Error, Mode, SimFault};

/// One block to process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Job {
    pub seq: u64,
    pub mode: Mode,
    pub block: u128,
}

pub type JobRecord = Job;

impl Job {
    pub fn new(seq: u64, mode: Mode, block: u128) -> Self {
        Self { seq, mode, block }
    }
}

/// Parses a job file: `<seq> <enc|dec> <32 hex>` per line, `#` starts a
/// comment. Sequence ids must be unique and form a contiguous range.
pub fn parse_jobs(text: &str) -> Result<Vec<Job>, Error> {
    let mut jobs = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse { line: line_no, message };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [seq, mode, block] = fields[..] else {
            return Err(err(format!("expected `<seq> <enc|dec> <32 hex>`, found {} fields", fields.len())));
        };
        let seq: u64 = seq.parse().map_err(|_| err(format!("bad sequence id `{seq}`")))?;
        let mode: Mode = mode.parse().map_err(|e: Error| err(strip_line(e)))?;
        let block = parse_block(block).map_err(|e| err(strip_line(e)))?;
        if let Some(prev) = seen.insert(seq, line_no) {
            return Err(err(format!("sequence id {seq} already used on line {prev}")));
        }
        jobs.push(Job::new(seq, mode, block));
    }
    if let (Some(lo), Some(hi)) = (seen.keys().min(), seen.keys().max()) {
        if hi - lo + 1 != jobs.len() as u64 {
            return Err(Error::Parse {
                line: 0,
                message: format!("sequence ids {lo}..={hi} are not dense ({} jobs)", jobs.len()),
            });
        }
    }
    Ok(jobs)
}

fn strip_line(e: Error) -> String {
    match e {
        Error::Parse { message, .. } => message,
        other => other.to_string(),
    }
}

/// A finished block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Output {
    pub seq: u64,
    pub mode: Mode,
    pub block: u128,
}

/// `<seq> <32 hex>` per line.
pub fn write_outputs<W: Write>(outputs: &[Output], mut out: W) -> std::io::Result<()> {
    for o in outputs {
        writeln!(out, "{} {}", o.seq, format_block(o.block))?;
    }
    Ok(())
}

/// Timing and key usage of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStats {
    pub seq: u64,
    pub mode: Mode,
    pub slot: u8,
    /// Cycle the block was presented to the initial ARK.
    pub admitted: u64,
    /// First cycle the result is readable.
    pub completed: u64,
    /// Round keys the block met, in order: initial, nine main, final.
    pub keys: Vec<u128>,
}

impl BlockStats {
    pub fn latency(&self) -> u64 {
        self.completed - self.admitted
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub total_cycles: u64,
    pub key_init_cycles: u64,
    pub flush_cycles: u64,
    /// First cycle in the run state.
    pub run_start: u64,
    /// In input order.
    pub blocks: Vec<BlockStats>,
    /// Cycles in which a waiting block was refused admission.
    pub stall_cycles: u64,
    /// Most blocks in flight at once.
    pub max_in_flight: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// In completion order.
    pub outputs: Vec<Output>,
    pub summary: RunSummary,
}

impl RunResult {
    pub fn outputs_in_input_order(&self, jobs: &[Job]) -> Vec<Output> {
        let by_seq: std::collections::HashMap<u64, Output> = self.outputs.iter().map(|o| (o.seq, *o)).collect();
        jobs.iter().filter_map(|j| by_seq.get(&j.seq).copied()).collect()
    }
}

/// Steady-state throughput, as measured and as idealized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cadence {
    /// Measured blocks per cycle; `None` if the run never reached steady state.
    pub measured: Option<f64>,
    /// Blocks and cycles the measurement spans.
    pub window: Option<(usize, u64)>,
    /// Twelve blocks every 115 cycles.
    pub ideal: f64,
    pub measured_gbps: Option<f64>,
    pub ideal_gbps: f64,
}

impl Cadence {
    pub fn steady(&self) -> bool {
        self.measured.is_some()
    }
}

/// Jobs needed for three full batches of twelve.
pub const SATURATION_JOBS: usize = 3 * LOOP_STAGES;

/// Measures cadence over the middle third of the completions, in whole
/// groups of twelve so the result does not depend on where a batch boundary
/// falls.
pub fn measure_cadence(summary: &RunSummary, freq_mhz: f64) -> Cadence {
    let ideal = LOOP_STAGES as f64 / BLOCK_LATENCY as f64;
    let gbps = |bpc: f64| bpc * 128.0 * freq_mhz / 1000.0;
    let mut done: Vec<u64> = summary.blocks.iter().map(|b| b.completed).collect();
    done.sort_unstable();
    let mut measured = None;
    let mut window = None;
    let n = done.len();
    if n >= SATURATION_JOBS {
        let (i, end) = (n / 3, 2 * n / 3);
        let m = (end - i) / LOOP_STAGES;
        if m > 0 {
            let cycles = done[i + LOOP_STAGES * m] - done[i];
            measured = Some((LOOP_STAGES * m) as f64 / cycles as f64);
            window = Some((LOOP_STAGES * m, cycles));
        }
    }
    Cadence { measured, window, ideal, measured_gbps: measured.map(gbps), ideal_gbps: gbps(ideal) }
}

/// Per-cycle record of what happened, for traces and tests.
#[derive(Debug, Clone, Default)]
struct CycleEvents {
    admitted: Option<(usize, u8)>,
    stalled: bool,
    keys: Vec<(&'static str, u8, Mode, u128)>,
}

/// The full composed circuit.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub datapath: Datapath,
    pub controller: Controller,
    pub keys: KeySchedule,
    cycle: u64,
    key_init_cycles: u64,
    flush_cycles: u64,
}

impl Circuit {
    /// Powers up and starts key initialization.
    pub fn new(key: u128) -> Result<Self, SimFault> {
        Self::with_images(key, &build_sbox_image(), &build_mixcolumns_image())
    }

    pub fn with_images(key: u128, sbox: &RomImage, mix: &RomImage) -> Result<Self, SimFault> {
        let mut c = Self {
            datapath: Datapath::with_images(sbox, mix)?,
            controller: Controller::new(),
            keys: KeySchedule::new(),
            cycle: 0,
            key_init_cycles: 0,
            flush_cycles: 0,
        };
        c.begin_key_init(key)?;
        Ok(c)
    }

    fn begin_key_init(&mut self, key: u128) -> Result<(), SimFault> {
        self.controller.start_key_init()?;
        self.keys.initialize(key)?;
        self.controller.commit();
        self.keys.commit();
        self.key_init_cycles = 0;
        self.flush_cycles = 0;
        Ok(())
    }

    /// Loads a new cipher key: lets the pipeline drain, then goes back
    /// through key initialization and flush.
    pub fn rekey(&mut self, key: u128) -> Result<(), Error> {
        while !self.controller.is_idle() {
            self.clock(None, None)?;
        }
        Ok(self.begin_key_init(key)?)
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn fsm(&self) -> FsmState {
        self.controller.fsm()
    }

    /// Clocks until the run state is reached.
    pub fn wait_ready(&mut self, mut trace: Option<&mut (dyn Write + '_)>) -> Result<(), Error> {
        while self.fsm() != FsmState::Run {
            self.clock(None, trace.as_deref_mut())?;
        }
        Ok(())
    }

    /// One full clock cycle. `request` is the block waiting at the input.
    fn clock(&mut self, request: Option<&Job>, trace: Option<&mut (dyn Write + '_)>) -> Result<(CycleEvents, Option<PipelineWord>), Error> {
        let cycle = self.cycle;
        let fsm = self.controller.fsm();
        self.controller.reconcile(&self.datapath, cycle)?;
        if let Some(w) = trace {
            self.trace_state(w, cycle)?;
        }
        let mut ev = CycleEvents::default();

        let taps = match fsm {
            FsmState::KeyInit if self.keys.is_ready() => {
                self.controller.finish_key_init()?;
                TapDrive::default()
            }
            FsmState::KeyInit => self.keys.step_init(self.datapath.sub_bytes_out(), self.datapath.mix_columns_out())?,
            _ => TapDrive::default(),
        };
        match fsm {
            FsmState::KeyInit => self.key_init_cycles += 1,
            FsmState::Flush => self.flush_cycles += 1,
            _ => {}
        }

        let mut admit = None;
        if let (Some(job), FsmState::Run) = (request, fsm) {
            match self.controller.admit_block(job.mode)? {
                Admission::Accepted { slot } => {
                    admit = Some(PipelineWord::new(job.block, job.mode, slot));
                    ev.admitted = Some((0, slot));
                }
                Admission::Stalled => ev.stalled = true,
            }
        }
        let out = self.controller.outputs((taps.sb_mode, taps.mc_mode));
        let tags = self.datapath.tags();
        let diverting = out.divert.then(|| tags[stage::SHIFT_ROWS]).flatten();
        if fsm == FsmState::Run {
            self.keys.fetch_keys(tags[stage::MC_SLICE1], tags[stage::ARK_IN2], admit.map(|w| w.slot))?;
        }
        let delivery = self.keys.delivery(
            admit.map_or(Mode::Encrypt, |w| w.mode),
            diverting.map_or(Mode::Encrypt, |t| t.mode),
        );
        if let Some(w) = admit {
            ev.keys.push(("initial", w.slot, w.mode, delivery.initial));
        }
        if let Some(t) = tags[stage::MC_SLICE2] {
            ev.keys.push(("main", t.slot, t.mode, delivery.main));
        }
        if let Some(t) = diverting {
            ev.keys.push(("final", t.slot, t.mode, delivery.final_key));
        }

        let drive = DatapathDrive {
            admit,
            initial_key: delivery.initial,
            main_key: delivery.main,
            final_key: delivery.final_key,
            sb_tap: taps.sb_tap,
            mc_tap: taps.mc_tap,
            modes: out.modes,
            divert: out.divert,
            resets: out.resets,
        };
        self.datapath.drive(&drive, cycle)?;
        self.controller.step_tracking(cycle)?;

        self.datapath.commit();
        self.controller.commit();
        self.keys.commit();
        self.cycle += 1;
        Ok((ev, self.datapath.finished()))
    }

    fn trace_state(&self, w: &mut dyn Write, cycle: u64) -> std::io::Result<()> {
        let s = self.controller.status();
        writeln!(
            w,
            "cycle={cycle} ctrl fsm={} occ={:03x} modes={:03x} stall={}",
            s.fsm, s.occupancy, s.modes, s.stall as u8
        )?;
        for (id, word) in self.datapath.occupied() {
            writeln!(
                w,
                "cycle={cycle} stage={id} slot={} mode={} data={}",
                word.slot,
                word.mode.letter(),
                format_block(word.data)
            )?;
        }
        Ok(())
    }

    /// Runs `jobs` to completion with greedy admission in list order.
    pub fn process(&mut self, jobs: &[Job], mut trace: Option<&mut (dyn Write + '_)>) -> Result<RunResult, Error> {
        if jobs.is_empty() {
            return Err(Error::Precondition("job list is empty".into()));
        }
        let start = self.cycle;
        self.wait_ready(trace.as_deref_mut())?;
        let run_start = self.cycle;

        let mut stats: Vec<Option<BlockStats>> = vec![None; jobs.len()];
        let mut slot_owner: [Option<usize>; LOOP_STAGES] = [None; LOOP_STAGES];
        let mut finishing: VecDeque<usize> = VecDeque::new();
        let mut outputs = Vec::with_capacity(jobs.len());
        let mut next = 0;
        let mut stall_cycles = 0;
        let mut max_in_flight = 0;
        let limit = run_start + (jobs.len() as u64 + 2) * (BLOCK_LATENCY as u64 + LOOP_STAGES as u64) + 1000;

        while outputs.len() < jobs.len() {
            if self.cycle > limit {
                return Err(SimFault::Protocol { cycle: self.cycle, detail: "run did not complete".into() }.into());
            }
            let cycle = self.cycle;
            let diverting = self.controller.outputs((Mode::Encrypt, Mode::Encrypt)).divert;
            let diverting_slot = self.datapath.tags()[stage::SHIFT_ROWS].map(|t| t.slot);

            let mut buf = Vec::new();
            let (ev, finished) = self.clock(jobs.get(next), trace.is_some().then_some(&mut buf as &mut dyn Write))?;
            if ev.stalled {
                stall_cycles += 1;
            }
            if let Some((_, slot)) = ev.admitted {
                let job = jobs[next];
                slot_owner[slot as usize] = Some(next);
                stats[next] = Some(BlockStats {
                    seq: job.seq,
                    mode: job.mode,
                    slot,
                    admitted: cycle,
                    completed: 0,
                    keys: Vec::with_capacity(11),
                });
                next += 1;
            }
            for &(kind, slot, mode, key) in &ev.keys {
                let owner = slot_owner[slot as usize].expect("key for an owned slot");
                stats[owner].as_mut().expect("admitted").keys.push(key);
                if trace.is_some() {
                    writeln!(buf, "cycle={cycle} key={kind} slot={slot} mode={} data={}", mode.letter(), format_block(key))?;
                }
            }
            if diverting {
                let slot = diverting_slot.expect("divert with a word in shift rows");
                finishing.push_back(slot_owner[slot as usize].take().expect("owned slot"));
            }
            if let Some(word) = finished {
                let owner = finishing.pop_front().ok_or_else(|| SimFault::Protocol {
                    cycle,
                    detail: "output with no block in the final ARK".into(),
                })?;
                let st = stats[owner].as_mut().expect("admitted");
                st.completed = cycle + 1;
                if word.mode != st.mode || word.slot != st.slot {
                    return Err(SimFault::TrackingMismatch {
                        cycle,
                        stage: StageId::Final(1).to_string(),
                        detail: format!("finished word {word:?} does not belong to block {}", st.seq),
                    }
                    .into());
                }
                outputs.push(Output { seq: st.seq, mode: st.mode, block: word.data });
            }
            max_in_flight = max_in_flight.max(self.controller.in_flight());
            if let Some(w) = trace.as_deref_mut() {
                w.write_all(&buf)?;
            }
        }
        // the last output is read during this cycle
        let (_, extra) = self.clock(None, trace)?;
        debug_assert!(extra.is_none());

        let blocks = stats.into_iter().map(|s| s.expect("every job admitted")).collect();
        Ok(RunResult {
            outputs,
            summary: RunSummary {
                total_cycles: self.cycle - start,
                key_init_cycles: self.key_init_cycles,
                flush_cycles: self.flush_cycles,
                run_start,
                blocks,
                stall_cycles,
                max_in_flight,
            },
        })
    }
}

/// Builds a fresh circuit per run.
#[derive(Debug, Clone)]
pub struct Simulator {
    key: u128,
    sbox: RomImage,
    mix: RomImage,
}

impl Simulator {
    pub fn new(key: u128) -> Self {
        Self { key, sbox: build_sbox_image(), mix: build_mixcolumns_image() }
    }

    /// Replaces the table images loaded into the datapath BRAMs.
    pub fn with_images(mut self, sbox: RomImage, mix: RomImage) -> Self {
        self.sbox = sbox;
        self.mix = mix;
        self
    }

    pub fn key(&self) -> u128 {
        self.key
    }

    pub fn circuit(&self) -> Result<Circuit, SimFault> {
        Circuit::with_images(self.key, &self.sbox, &self.mix)
    }

    pub fn run(&self, jobs: &[Job]) -> Result<RunResult, Error> {
        self.circuit()?.process(jobs, None)
    }

    pub fn run_traced(&self, jobs: &[Job], trace: &mut dyn Write) -> Result<RunResult, Error> {
        self.circuit()?.process(jobs, Some(trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes_ref::Aes128;

    const KEY: u128 = 0x000102030405060708090a0b0c0d0e0f;

    #[test]
    fn parse_job_file() {
        let text = "# header\n0 enc 00112233445566778899aabbccddeeff\n\n1 dec 69c4e0d86a7b0430d8cdb78070b4c55a # trailing\n";
        let jobs = parse_jobs(text).unwrap();
        assert_eq!(jobs.len(), 2);
        assert_eq!(jobs[1].mode, Mode::Decrypt);
        assert_eq!(jobs[1].block, 0x69c4e0d86a7b0430d8cdb78070b4c55a);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let short = parse_jobs("0 enc 0011\n").unwrap_err();
        assert!(matches!(short, Error::Parse { line: 1, .. }), "{short}");
        let dup = parse_jobs("0 enc 00112233445566778899aabbccddeeff\n0 enc 00112233445566778899aabbccddeeff\n").unwrap_err();
        assert!(matches!(dup, Error::Parse { line: 2, .. }), "{dup}");
        let gap = parse_jobs("0 enc 00112233445566778899aabbccddeeff\n2 enc 00112233445566778899aabbccddeeff\n").unwrap_err();
        assert!(gap.to_string().contains("dense"));
        let mode = parse_jobs("0 both 00112233445566778899aabbccddeeff\n").unwrap_err();
        assert!(matches!(mode, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_job_list_is_a_precondition_error() {
        assert!(matches!(Simulator::new(KEY).run(&[]), Err(Error::Precondition(_))));
    }

    #[test]
    fn key_store_after_initialization() {
        let mut c = Circuit::new(KEY).unwrap();
        c.wait_ready(None).unwrap();
        let aes = Aes128::new(KEY);
        let store = c.keys.store_contents();
        for r in 0..11 {
            assert_eq!(store.get(r), aes.encrypt_keys.keys[r], "enc {r}");
            assert_eq!(store.get(16 + r), aes.decrypt_keys.keys[r], "dec {r}");
        }
        assert_eq!(c.keys.initial_key_register(), KEY);
    }

    #[test]
    fn mixed_stream_matches_reference() {
        let aes = Aes128::new(KEY);
        let jobs: Vec<Job> = (0..30u64)
            .map(|i| Job::new(i, Mode::from_bit(i % 3 == 2), (i as u128).wrapping_mul(0x9e3779b97f4a7c15_f39cc0605cedc834)))
            .collect();
        let run = Simulator::new(KEY).run(&jobs).unwrap();
        for (o, j) in run.outputs_in_input_order(&jobs).iter().zip(&jobs) {
            assert_eq!(o.block, aes.process(j.mode, j.block), "job {}", j.seq);
        }
        assert!(run.summary.blocks.iter().all(|b| b.latency() == 115));
    }

    #[test]
    fn single_job_cadence_is_not_steady() {
        let run = Simulator::new(KEY).run(&[Job::new(0, Mode::Encrypt, 0)]).unwrap();
        let c = measure_cadence(&run.summary, 528.262);
        assert!(!c.steady());
        assert!((c.ideal_gbps - 7.0557).abs() < 1e-3);
    }

    #[test]
    fn rekey_requires_an_empty_pipeline_and_takes_effect() {
        let mut c = Circuit::new(KEY).unwrap();
        let job = [Job::new(0, Mode::Encrypt, 0x00112233445566778899aabbccddeeff)];
        let first = c.process(&job, None).unwrap();
        assert_eq!(first.outputs[0].block, 0x69c4e0d86a7b0430d8cdb78070b4c55a);
        let other = 0x2b7e151628aed2a6abf7158809cf4f3c;
        c.rekey(other).unwrap();
        let second = c.process(&job, None).unwrap();
        assert_eq!(second.outputs[0].block, crate::aes_ref::encrypt_block(other, job[0].block));
        assert_eq!(second.summary.blocks[0].latency(), 115);
    }
}
