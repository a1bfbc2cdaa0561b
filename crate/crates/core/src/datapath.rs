//! The 12-stage iterative, inner-pipelined round datapath.
//!
//! ```text
//!            +--------------------------------------------------------------+
//!            v                                                              |
//! init ARK -OR-> SB lookup -> SB out -> SR -OR-> MC lookup -> MC out -> DSP x4 -> ARK x3
//!   (I0,I1)  S0            S1        S2  |   S3           S4        S5..S8    S9..S11
//!                                        +--> final ARK (F0,F1) -> ciphertext
//! ```
//!
//! Each transformation keeps its pipeline stages inside the block RAM and DSP
//! primitives wherever those have registers: the S-box and product lookups use
//! the BRAM read latch and output register, mix columns sums its partial
//! products in a DSP cascade, and add round key uses the DSP input and output
//! registers. Only shift rows (and the extra cascade delay) spend slice
//! flip-flops.
//!
//! Empty pipeline slots are not zeroed as they travel: an all-zero word comes
//! out of the S-box as `0x63..63` and keeps going. The add-round-key output
//! resets are what keep the feedback OR gate safe, exactly as in hardware.

use crate::fabric::{Bram, Clocked, DspCascade, DspConfig, DspWidth, DspXorSlice, Netlist, Port, Reg};
use crate::tables::{build_mixcolumns_image, build_sbox_image, table_address, RomImage};
use crate::{Mode, SimFault};

pub const SUB_BYTES_LATENCY: usize = 2;
pub const SHIFT_ROWS_LATENCY: usize = 1;
pub const MIX_COLUMNS_LATENCY: usize = 6;
pub const MAIN_ARK_LATENCY: usize = 3;
/// Initial and final add-round-key instances use one input register.
pub const EDGE_ARK_LATENCY: usize = 2;
pub const LOOP_STAGES: usize =
    SUB_BYTES_LATENCY + SHIFT_ROWS_LATENCY + MIX_COLUMNS_LATENCY + MAIN_ARK_LATENCY;
pub const MAIN_ROUNDS: usize = 9;
/// Cycles outside the loop: initial ARK, then the final round's SB, SR and ARK.
pub const EXTRA_CYCLES: usize =
    EDGE_ARK_LATENCY + SUB_BYTES_LATENCY + SHIFT_ROWS_LATENCY + EDGE_ARK_LATENCY;
pub const BLOCK_LATENCY: usize = LOOP_STAGES * MAIN_ROUNDS + EXTRA_CYCLES;
/// Admission to final-ARK input: initial ARK, nine loops, final SB and SR.
pub const TRACK_LENGTH: usize = BLOCK_LATENCY - EDGE_ARK_LATENCY;

/// Stage indices into the main loop.
pub mod stage {
    pub const SB_LOOKUP: usize = 0;
    pub const SB_OUT: usize = 1;
    pub const SHIFT_ROWS: usize = 2;
    pub const MC_LOOKUP: usize = 3;
    pub const MC_OUT: usize = 4;
    pub const MC_CASCADE_IN: usize = 5;
    pub const MC_SLICE0: usize = 6;
    pub const MC_SLICE1: usize = 7;
    pub const MC_SLICE2: usize = 8;
    pub const ARK_IN1: usize = 9;
    pub const ARK_IN2: usize = 10;
    pub const ARK_OUT: usize = 11;
}

/// Register stage names, including the two-stage initial and final ARK
/// instances outside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageId {
    Initial(u8),
    Loop(u8),
    Final(u8),
}

impl StageId {
    pub const TRACE_ORDER: [StageId; 16] = [
        StageId::Initial(0),
        StageId::Initial(1),
        StageId::Loop(0),
        StageId::Loop(1),
        StageId::Loop(2),
        StageId::Loop(3),
        StageId::Loop(4),
        StageId::Loop(5),
        StageId::Loop(6),
        StageId::Loop(7),
        StageId::Loop(8),
        StageId::Loop(9),
        StageId::Loop(10),
        StageId::Loop(11),
        StageId::Final(0),
        StageId::Final(1),
    ];

    /// What the stage's register holds.
    pub fn describe(self) -> &'static str {
        match self {
            StageId::Initial(0) => "initial ARK input register",
            StageId::Initial(_) => "initial ARK output register",
            StageId::Final(0) => "final ARK input register",
            StageId::Final(_) => "final ARK output register",
            StageId::Loop(s) => match s as usize {
                stage::SB_LOOKUP => "sub bytes BRAM read",
                stage::SB_OUT => "sub bytes BRAM output register",
                stage::SHIFT_ROWS => "shift rows switch register",
                stage::MC_LOOKUP => "mix columns BRAM read",
                stage::MC_OUT => "mix columns BRAM output register",
                stage::MC_CASCADE_IN => "mix columns DSP input register",
                stage::MC_SLICE0 => "mix columns first cascade slice",
                stage::MC_SLICE1 => "mix columns second cascade slice",
                stage::MC_SLICE2 => "mix columns third cascade slice",
                stage::ARK_IN1 => "add round key DSP input register 1",
                stage::ARK_IN2 => "add round key DSP input register 2",
                _ => "add round key DSP output register",
            },
        }
    }
}

impl std::fmt::Display for StageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageId::Initial(i) => write!(f, "I{i}"),
            StageId::Loop(i) => write!(f, "S{i}"),
            StageId::Final(i) => write!(f, "F{i}"),
        }
    }
}

/// Per-block metadata that travels with the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    pub mode: Mode,
    pub slot: u8,
}

/// A 128-bit state plus the metadata moving in lockstep with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineWord {
    pub data: u128,
    pub valid: bool,
    pub mode: Mode,
    pub slot: u8,
}

impl PipelineWord {
    pub fn new(data: u128, mode: Mode, slot: u8) -> Self {
        Self { data, valid: true, mode, slot }
    }

    pub fn tag(&self) -> Option<Tag> {
        self.valid.then_some(Tag { mode: self.mode, slot: self.slot })
    }

    pub fn from_tag(data: u128, tag: Tag) -> Self {
        Self::new(data, tag.mode, tag.slot)
    }
}

/// Bitwise OR of a datapath value and a key-schedule tap. The protocol
/// guarantees at most one side is nonzero; a violation is a fault.
pub fn or_mux(site: &'static str, a: u128, b: u128) -> Result<u128, SimFault> {
    if a != 0 && b != 0 {
        return Err(SimFault::OrMuxConflict { site, a, b });
    }
    Ok(a | b)
}

#[inline]
fn lane(word: u128, i: usize) -> u8 {
    (word >> (120 - 8 * i)) as u8
}

fn port_of(lane: usize) -> Port {
    if lane.is_multiple_of(2) {
        Port::A
    } else {
        Port::B
    }
}

/// Sixteen parallel lookups into eight dual-port BRAMs, two lanes per BRAM.
#[derive(Debug, Clone)]
struct LookupBank {
    brams: Vec<Bram>,
    lane_bits: u32,
}

impl LookupBank {
    fn new(prefix: &str, image: &RomImage) -> Self {
        let brams = (0..8).map(|i| Bram::new(format!("{prefix}{i}"), image, true)).collect();
        Self { brams, lane_bits: image.width() }
    }

    fn lookup(&mut self, input: u128, mode: Mode) -> Result<(), SimFault> {
        for i in 0..16 {
            self.brams[i / 2].read(port_of(i), table_address(mode, lane(input, i)))?;
        }
        Ok(())
    }

    fn lanes(&self, latch: bool) -> [u128; 16] {
        std::array::from_fn(|i| {
            let b = &self.brams[i / 2];
            if latch {
                b.read_latch(port_of(i))
            } else {
                b.data_out(port_of(i))
            }
        })
    }

    /// Concatenated lanes; only meaningful for 8-bit images.
    fn assemble(&self, latch: bool) -> u128 {
        debug_assert_eq!(self.lane_bits, 8);
        self.lanes(latch).iter().fold(0u128, |acc, &w| (acc << 8) | w)
    }

    fn commit(&mut self) {
        self.brams.iter_mut().for_each(Clocked::commit);
    }
}

/// A clocked transformation with fixed latency, used both inside
/// [`Datapath`] and standalone through [`UnitHarness`].
pub trait Unit: Clocked {
    const LATENCY: usize;
    /// Presents `data` (and `key`, for add round key) for this cycle.
    fn drive(&mut self, data: u128, mode: Mode, key: u128) -> Result<(), SimFault>;
    fn output(&self) -> u128;
}

/// Sub bytes: each lane addresses its BRAM with `{mode, byte}`.
#[derive(Debug, Clone)]
pub struct SubBytesUnit {
    bank: LookupBank,
}

impl SubBytesUnit {
    pub fn new(image: &RomImage) -> Self {
        Self { bank: LookupBank::new("sbox", image) }
    }

    /// Contents of the BRAM read latches (stage S0).
    pub fn lookup_stage(&self) -> u128 {
        self.bank.assemble(true)
    }
}

impl Default for SubBytesUnit {
    fn default() -> Self {
        Self::new(&build_sbox_image())
    }
}

impl Clocked for SubBytesUnit {
    fn commit(&mut self) {
        self.bank.commit();
    }
}

impl Unit for SubBytesUnit {
    const LATENCY: usize = SUB_BYTES_LATENCY;

    fn drive(&mut self, data: u128, mode: Mode, _key: u128) -> Result<(), SimFault> {
        self.bank.lookup(data, mode)
    }

    fn output(&self) -> u128 {
        self.bank.assemble(false)
    }
}

/// Source lane for each output lane of the shift-rows switch.
pub fn shift_rows_routing(mode: Mode) -> [usize; 16] {
    std::array::from_fn(|out| {
        let (col, row) = (out / 4, out % 4);
        let src_col = match mode {
            Mode::Encrypt => (col + row) % 4,
            Mode::Decrypt => (col + 4 - row) % 4,
        };
        4 * src_col + row
    })
}

/// Shift rows: a byte-routing switch selected by mode, into one 128-bit register.
#[derive(Debug, Clone, Default)]
pub struct ShiftRowsUnit {
    reg: Reg<u128>,
    reset: bool,
}

impl ShiftRowsUnit {
    pub fn set_reset(&mut self, reset: bool) {
        self.reset = reset;
    }
}

impl Clocked for ShiftRowsUnit {
    fn commit(&mut self) {
        self.reg.commit();
    }
}

impl Unit for ShiftRowsUnit {
    const LATENCY: usize = SHIFT_ROWS_LATENCY;

    fn drive(&mut self, data: u128, mode: Mode, _key: u128) -> Result<(), SimFault> {
        if self.reset {
            self.reg.set(0);
            return Ok(());
        }
        let routing = shift_rows_routing(mode);
        let out = routing.iter().fold(0u128, |acc, &src| (acc << 8) | lane(data, src) as u128);
        self.reg.set(out);
        Ok(())
    }

    fn output(&self) -> u128 {
        self.reg.get()
    }
}

/// Output-byte ranges of the three XOR groups: bits [127:80], [79:32], [31:0].
pub const GROUP_BYTES: [std::ops::Range<usize>; 3] = [0..6, 6..12, 12..16];

/// Which product sub-field (0 = bits [31:24]) of which input lane feeds term
/// `k` of output byte `j`: lane `s(k, col)` and field `(row - k) mod 4`.
pub fn packing_source(out_byte: usize, k: usize) -> (usize, usize) {
    let (col, row) = (out_byte / 4, out_byte % 4);
    (4 * col + k, (row + 4 - k) % 4)
}

/// Rearranges the sixteen 32-bit product words into four addend vectors per
/// group, so that the XOR of the four vectors is the mix-columns output.
/// Returns `vectors[group][k]`.
pub fn pack_vectors(products: &[u32; 16]) -> [[u64; 4]; 3] {
    let mut out = [[0u64; 4]; 3];
    for (g, range) in GROUP_BYTES.iter().enumerate() {
        for (k, vector) in out[g].iter_mut().enumerate() {
            *vector = range.clone().fold(0u64, |acc, j| {
                let (src, field) = packing_source(j, k);
                let byte = (products[src] >> (24 - 8 * field)) as u8;
                (acc << 8) | byte as u64
            });
        }
    }
    out
}

fn join_groups(parts: [u64; 3]) -> u128 {
    (parts[0] as u128) << 80 | (parts[1] as u128) << 32 | parts[2] as u128
}

fn split_groups(word: u128) -> [u64; 3] {
    [
        (word >> 80) as u64 & ((1 << 48) - 1),
        (word >> 32) as u64 & ((1 << 48) - 1),
        word as u64 & 0xffff_ffff,
    ]
}

/// Mix columns: product lookups (2 stages), vector packing, then three
/// three-slice DSP cascades (4 stages).
#[derive(Debug, Clone)]
pub struct MixColumnsUnit {
    bank: LookupBank,
    cascades: [DspCascade; 3],
}

impl MixColumnsUnit {
    pub fn new(image: &RomImage) -> Self {
        let cascade = |w| DspCascade::new(w, 3).expect("static cascade configuration");
        Self {
            bank: LookupBank::new("mix", image),
            cascades: [cascade(DspWidth::W48), cascade(DspWidth::W48), cascade(DspWidth::W32)],
        }
    }

    /// Flip-flops spent on the external delay rank in front of the third slices.
    pub fn external_flip_flops(&self) -> u32 {
        self.cascades.iter().map(DspCascade::external_flip_flops).sum()
    }

    /// Register contents of stages S3 through S8, in order. The two lookup
    /// stages hold 512 bits of products; they are shown reduced to the
    /// 128-bit state those products sum to.
    pub fn stage_values(&self) -> [u128; 6] {
        let slices: Vec<Vec<u64>> = self.cascades.iter().map(DspCascade::slice_outputs).collect();
        let slice = |i: usize| join_groups([slices[0][i], slices[1][i], slices[2][i]]);
        let reduced = |latch: bool| {
            let products: [u32; 16] = self.bank.lanes(latch).map(|w| w as u32);
            join_groups(pack_vectors(&products).map(|v| v.iter().fold(0, |a, b| a ^ b)))
        };
        [
            reduced(true),
            reduced(false),
            join_groups(std::array::from_fn(|g| self.cascades[g].first_input())),
            slice(0),
            slice(1),
            slice(2),
        ]
    }
}

impl Default for MixColumnsUnit {
    fn default() -> Self {
        Self::new(&build_mixcolumns_image())
    }
}

impl Clocked for MixColumnsUnit {
    fn commit(&mut self) {
        self.bank.commit();
        self.cascades.iter_mut().for_each(Clocked::commit);
    }
}

impl Unit for MixColumnsUnit {
    const LATENCY: usize = MIX_COLUMNS_LATENCY;

    fn drive(&mut self, data: u128, mode: Mode, _key: u128) -> Result<(), SimFault> {
        let products: [u32; 16] = self.bank.lanes(false).map(|w| w as u32);
        let vectors = pack_vectors(&products);
        for (cascade, v) in self.cascades.iter_mut().zip(vectors.iter()) {
            cascade.compute(v);
        }
        self.bank.lookup(data, mode)
    }

    fn output(&self) -> u128 {
        join_groups(std::array::from_fn(|g| self.cascades[g].output()))
    }
}

/// Add round key: three parallel XOR slices (48 + 48 + 32 bits).
#[derive(Debug, Clone)]
pub struct AddRoundKeyUnit {
    slices: [DspXorSlice; 3],
    reset: bool,
}

impl AddRoundKeyUnit {
    /// `input_stages` is 2 for the main instance and 1 for the initial and
    /// final instances.
    pub fn new(input_stages: u8) -> Result<Self, SimFault> {
        let slice = |width| {
            DspXorSlice::new(DspConfig {
                width,
                a_stages: input_stages,
                b_stages: input_stages,
                cascade_input: false,
                output_register: true,
            })
        };
        Ok(Self {
            slices: [slice(DspWidth::W48)?, slice(DspWidth::W48)?, slice(DspWidth::W32)?],
            reset: false,
        })
    }

    pub fn main() -> Self {
        Self::new(2).expect("static configuration")
    }

    pub fn edge() -> Self {
        Self::new(1).expect("static configuration")
    }

    pub fn latency(&self) -> usize {
        self.slices[0].latency() as usize
    }

    /// Holds the output register at zero from the next cycle on.
    pub fn set_reset(&mut self, reset: bool) {
        self.reset = reset;
    }

    /// State-side contents of the first input register.
    pub fn first_input(&self) -> u128 {
        join_groups(std::array::from_fn(|g| self.slices[g].a_input()))
    }

    /// State-side contents of the `n`th input register (for traces).
    pub fn input_stage(&self, n: usize) -> u128 {
        if n == 0 {
            return self.first_input();
        }
        join_groups(std::array::from_fn(|g| self.slices[g].a_stage(n)))
    }

    fn drive_ark(&mut self, data: u128, key: u128) {
        let (state, key) = (split_groups(data), split_groups(key));
        for (g, slice) in self.slices.iter_mut().enumerate() {
            slice.compute(state[g], key[g], 0, self.reset);
        }
    }
}

impl Clocked for AddRoundKeyUnit {
    fn commit(&mut self) {
        self.slices.iter_mut().for_each(Clocked::commit);
    }
}

/// The main-loop add round key (two input registers).
#[derive(Debug, Clone)]
pub struct MainArk(pub AddRoundKeyUnit);

impl Default for MainArk {
    fn default() -> Self {
        Self(AddRoundKeyUnit::main())
    }
}

impl Clocked for MainArk {
    fn commit(&mut self) {
        self.0.commit();
    }
}

impl Unit for MainArk {
    const LATENCY: usize = MAIN_ARK_LATENCY;

    fn drive(&mut self, data: u128, _mode: Mode, key: u128) -> Result<(), SimFault> {
        self.0.drive_ark(data, key);
        Ok(())
    }

    fn output(&self) -> u128 {
        join_groups(std::array::from_fn(|g| self.0.slices[g].output()))
    }
}

/// The initial or final add round key (one input register).
#[derive(Debug, Clone)]
pub struct EdgeArk(pub AddRoundKeyUnit);

impl Default for EdgeArk {
    fn default() -> Self {
        Self(AddRoundKeyUnit::edge())
    }
}

impl Clocked for EdgeArk {
    fn commit(&mut self) {
        self.0.commit();
    }
}

impl Unit for EdgeArk {
    const LATENCY: usize = EDGE_ARK_LATENCY;

    fn drive(&mut self, data: u128, _mode: Mode, key: u128) -> Result<(), SimFault> {
        self.0.drive_ark(data, key);
        Ok(())
    }

    fn output(&self) -> u128 {
        join_groups(std::array::from_fn(|g| self.0.slices[g].output()))
    }
}

/// Runs a single unit with a metadata delay line matching its latency, so a
/// word's tags come out when its data does.
#[derive(Debug, Clone)]
pub struct UnitHarness<U: Unit> {
    pub unit: U,
    tags: Vec<Option<Tag>>,
}

impl<U: Unit> UnitHarness<U> {
    pub fn new(unit: U) -> Self {
        Self { unit, tags: vec![None; U::LATENCY] }
    }

    /// Presents `input` for one cycle and commits. Returns the word the
    /// output shows in the following cycle, so a word presented on call `t`
    /// comes back from call `t + LATENCY - 1`.
    pub fn clock(&mut self, input: Option<PipelineWord>, key: u128) -> Result<Option<PipelineWord>, SimFault> {
        let (data, mode) = input.map_or((0, Mode::Encrypt), |w| (w.data, w.mode));
        self.unit.drive(data, mode, key)?;
        self.unit.commit();
        self.tags.rotate_right(1);
        self.tags[0] = input.and_then(|w| w.tag());
        Ok(self.tags[U::LATENCY - 1].map(|t| PipelineWord::from_tag(self.unit.output(), t)))
    }
}

/// Reset lines driven by the controller for one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Resets {
    pub initial_ark: bool,
    pub main_ark: bool,
    pub final_ark: bool,
    pub shift_rows: bool,
}

/// Mode bits presented to the mode-addressed units this cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StageModes {
    pub sub_bytes: Mode,
    pub shift_rows: Mode,
    pub mix_columns: Mode,
}

/// Everything the datapath samples in one cycle.
#[derive(Debug, Clone, Copy, Default)]
pub struct DatapathDrive {
    /// New block presented to the initial ARK.
    pub admit: Option<PipelineWord>,
    pub initial_key: u128,
    pub main_key: u128,
    pub final_key: u128,
    /// Key-schedule tap into the sub bytes OR gate.
    pub sb_tap: u128,
    /// Key-schedule tap into the mix columns OR gate.
    pub mc_tap: u128,
    pub modes: StageModes,
    /// Route the word leaving shift rows to the final ARK instead of mix columns.
    pub divert: bool,
    pub resets: Resets,
}

/// The composed datapath: loop units, edge ARK instances, and the
/// per-stage metadata that travels with the data.
#[derive(Debug, Clone)]
pub struct Datapath {
    pub sub_bytes: SubBytesUnit,
    pub shift_rows: ShiftRowsUnit,
    pub mix_columns: MixColumnsUnit,
    pub main_ark: MainArk,
    pub initial_ark: EdgeArk,
    pub final_ark: EdgeArk,
    tags: [Reg<Option<Tag>>; LOOP_STAGES],
    initial_tags: [Reg<Option<Tag>>; 2],
    final_tags: [Reg<Option<Tag>>; 2],
}

impl Datapath {
    pub fn new() -> Result<Self, SimFault> {
        Self::with_images(&build_sbox_image(), &build_mixcolumns_image())
    }

    pub fn with_images(sbox: &RomImage, mix: &RomImage) -> Result<Self, SimFault> {
        Self::netlist().validate()?;
        Ok(Self {
            sub_bytes: SubBytesUnit::new(sbox),
            shift_rows: ShiftRowsUnit::default(),
            mix_columns: MixColumnsUnit::new(mix),
            main_ark: MainArk::default(),
            initial_ark: EdgeArk::default(),
            final_ark: EdgeArk::default(),
            tags: Default::default(),
            initial_tags: Default::default(),
            final_tags: Default::default(),
        })
    }

    /// Static wiring, including the key-schedule taps and key store.
    pub fn netlist() -> Netlist {
        let mut n = Netlist::new();
        let initial = n.add_node("initial_ark", true);
        let main = n.add_node("main_ark", true);
        let fin = n.add_node("final_ark", true);
        let sb_or = n.add_node("sb_or", false);
        let sb = n.add_node("sub_bytes", true);
        let sr = n.add_node("shift_rows", true);
        let mc_or = n.add_node("mc_or", false);
        let lookup = n.add_node("mix_lookup", true);
        let pack = n.add_node("vector_pack", false);
        let cascade = n.add_node("mix_cascade", true);
        let ks = n.add_node("key_schedule", true);
        let store = n.add_node("key_store", true);
        for (a, b) in [
            (initial, sb_or),
            (main, sb_or),
            (ks, sb_or),
            (sb_or, sb),
            (sb, sr),
            (sb, ks),
            (sr, mc_or),
            (ks, mc_or),
            (mc_or, lookup),
            (lookup, pack),
            (pack, cascade),
            (cascade, main),
            (cascade, ks),
            (sr, fin),
            (ks, store),
            (store, main),
            (store, initial),
            (store, fin),
        ] {
            n.connect(a, b);
        }
        n
    }

    /// Metadata of the word in each loop stage.
    pub fn tags(&self) -> [Option<Tag>; LOOP_STAGES] {
        std::array::from_fn(|i| self.tags[i].get())
    }

    pub fn initial_tags(&self) -> [Option<Tag>; 2] {
        [self.initial_tags[0].get(), self.initial_tags[1].get()]
    }

    pub fn final_tags(&self) -> [Option<Tag>; 2] {
        [self.final_tags[0].get(), self.final_tags[1].get()]
    }

    /// Output of the sub bytes unit (the key schedule's SubWord readback).
    pub fn sub_bytes_out(&self) -> u128 {
        self.sub_bytes.output()
    }

    /// Output of the mix columns unit (the key schedule's InvMixColumns readback).
    pub fn mix_columns_out(&self) -> u128 {
        self.mix_columns.output()
    }

    /// Completed block visible on the final ARK output this cycle.
    pub fn finished(&self) -> Option<PipelineWord> {
        self.final_tags[1].get().map(|t| PipelineWord::from_tag(self.final_ark.output(), t))
    }

    /// Register contents of every stage, valid or not.
    pub fn stage_value(&self, id: StageId) -> u128 {
        match id {
            StageId::Initial(0) => self.initial_ark.0.first_input(),
            StageId::Initial(_) => self.initial_ark.output(),
            StageId::Final(0) => self.final_ark.0.first_input(),
            StageId::Final(_) => self.final_ark.output(),
            StageId::Loop(s) => match s as usize {
                stage::SB_LOOKUP => self.sub_bytes.lookup_stage(),
                stage::SB_OUT => self.sub_bytes.output(),
                stage::SHIFT_ROWS => self.shift_rows.output(),
                s @ stage::MC_LOOKUP..=stage::MC_SLICE2 => {
                    self.mix_columns.stage_values()[s - stage::MC_LOOKUP]
                }
                stage::ARK_IN1 => self.main_ark.0.input_stage(0),
                stage::ARK_IN2 => self.main_ark.0.input_stage(1),
                _ => self.main_ark.output(),
            },
        }
    }

    pub fn stage_tag(&self, id: StageId) -> Option<Tag> {
        match id {
            StageId::Initial(i) => self.initial_tags[i as usize].get(),
            StageId::Loop(i) => self.tags[i as usize].get(),
            StageId::Final(i) => self.final_tags[i as usize].get(),
        }
    }

    /// Valid words currently held, in trace order.
    pub fn occupied(&self) -> Vec<(StageId, PipelineWord)> {
        StageId::TRACE_ORDER
            .iter()
            .filter_map(|&id| self.stage_tag(id).map(|t| (id, PipelineWord::from_tag(self.stage_value(id), t))))
            .collect()
    }

    /// Compute phase for one cycle.
    pub fn drive(&mut self, d: &DatapathDrive, cycle: u64) -> Result<(), SimFault> {
        let loop_out = self.main_ark.output();
        let initial_out = self.initial_ark.output();
        let recirculating = self.tags[LOOP_STAGES - 1].get();
        let entering = self.initial_tags[1].get();
        if recirculating.is_some() && entering.is_some() {
            return Err(SimFault::Collision { cycle, stage: StageId::Loop(0).to_string() });
        }
        if d.divert && self.tags[stage::SHIFT_ROWS].get().is_none() {
            return Err(SimFault::Protocol {
                cycle,
                detail: "divert asserted with no block leaving shift rows".into(),
            });
        }

        // sub bytes <- OR(main ARK, initial ARK, key schedule)
        let sb_in = or_mux("sub bytes input", or_mux("sub bytes input", loop_out, initial_out)?, d.sb_tap)?;
        self.sub_bytes.drive(sb_in, d.modes.sub_bytes, 0)?;

        self.shift_rows.set_reset(d.resets.shift_rows);
        self.shift_rows.drive(self.sub_bytes.output(), d.modes.shift_rows, 0)?;

        let sr_out = self.shift_rows.output();
        let mc_in = or_mux("mix columns input", sr_out, d.mc_tap)?;
        self.mix_columns.drive(mc_in, d.modes.mix_columns, 0)?;

        self.main_ark.0.set_reset(d.resets.main_ark);
        self.main_ark.drive(self.mix_columns.output(), Mode::Encrypt, d.main_key)?;

        self.initial_ark.0.set_reset(d.resets.initial_ark);
        let admit_data = d.admit.map_or(0, |w| w.data);
        self.initial_ark.drive(admit_data, Mode::Encrypt, d.initial_key)?;

        self.final_ark.0.set_reset(d.resets.final_ark);
        self.final_ark.drive(sr_out, Mode::Encrypt, d.final_key)?;

        // metadata
        let leaving_sr = self.tags[stage::SHIFT_ROWS].get();
        for i in (1..LOOP_STAGES).rev() {
            let prev = self.tags[i - 1].get();
            self.tags[i].set(prev);
        }
        self.tags[0].set(recirculating.or(entering));
        if d.divert {
            self.tags[stage::MC_LOOKUP].set(None);
        }
        let i0 = self.initial_tags[0].get();
        self.initial_tags[1].set(i0);
        self.initial_tags[0].set(d.admit.and_then(|w| w.tag()));
        let f0 = self.final_tags[0].get();
        self.final_tags[1].set(f0);
        self.final_tags[0].set(if d.divert { leaving_sr } else { None });
        Ok(())
    }
}

impl Clocked for Datapath {
    fn commit(&mut self) {
        self.sub_bytes.commit();
        self.shift_rows.commit();
        self.mix_columns.commit();
        self.main_ark.commit();
        self.initial_ark.commit();
        self.final_ark.commit();
        self.tags.iter_mut().for_each(Clocked::commit);
        self.initial_tags.iter_mut().for_each(Clocked::commit);
        self.final_tags.iter_mut().for_each(Clocked::commit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes_ref::{self, CipherState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mode_of(i: usize) -> Mode {
        Mode::from_bit(i % 3 == 1)
    }

    /// Feeds a stream of words (one per cycle) and collects outputs with the
    /// call index at which each came back.
    fn stream<U: Unit>(unit: U, words: &[PipelineWord], key: impl Fn(usize) -> u128) -> Vec<(usize, PipelineWord)> {
        let mut h = UnitHarness::new(unit);
        let mut out = Vec::new();
        for call in 0..words.len() + U::LATENCY {
            let input = words.get(call).copied();
            if let Some(w) = h.clock(input, key(call)).unwrap() {
                out.push((call, w));
            }
        }
        out
    }

    fn random_words(n: usize, seed: u64) -> Vec<PipelineWord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|i| PipelineWord::new(rng.gen(), mode_of(i), (i % 12) as u8)).collect()
    }

    #[test]
    fn latency_ledger() {
        assert_eq!(LOOP_STAGES, 12);
        assert_eq!(EXTRA_CYCLES, 7);
        assert_eq!(BLOCK_LATENCY, 115);
        assert_eq!(TRACK_LENGTH, 113);
        assert_eq!(AddRoundKeyUnit::main().latency(), MAIN_ARK_LATENCY);
        assert_eq!(AddRoundKeyUnit::edge().latency(), EDGE_ARK_LATENCY);
    }

    #[test]
    fn sub_bytes_of_zero_is_63_after_two_cycles() {
        let out = stream(SubBytesUnit::default(), &[PipelineWord::new(0, Mode::Encrypt, 3)], |_| 0);
        assert_eq!(out.len(), 1);
        // returned from call 1 = visible in cycle 2
        assert_eq!(out[0].0, 1);
        assert_eq!(out[0].1.data, 0x63636363_63636363_63636363_63636363);
        assert_eq!(out[0].1.slot, 3);
    }

    #[test]
    fn sub_bytes_matches_reference_and_inverts() {
        let words = random_words(10_000, 1);
        let out = stream(SubBytesUnit::default(), &words, |_| 0);
        assert_eq!(out.len(), words.len());
        for ((_, got), w) in out.iter().zip(&words) {
            let want = aes_ref::sub_bytes(CipherState::from_u128(w.data), w.mode == Mode::Decrypt);
            assert_eq!(got.data, want.to_u128());
            assert_eq!(got.tag(), w.tag());
        }
        let fwd: Vec<PipelineWord> = out.iter().map(|(_, w)| PipelineWord { mode: Mode::Encrypt, ..*w }).collect();
        let fwd_out = stream(SubBytesUnit::default(), &fwd, |_| 0);
        let back: Vec<PipelineWord> = fwd_out.iter().map(|(_, w)| PipelineWord { mode: Mode::Decrypt, ..*w }).collect();
        let back_out = stream(SubBytesUnit::default(), &back, |_| 0);
        for ((_, w), (_, orig)) in back_out.iter().zip(&out) {
            assert_eq!(w.data, orig.data);
        }
    }

    #[test]
    fn shift_rows_switch() {
        let row_constant = 0x00112233_00112233_00112233_00112233;
        let out = stream(ShiftRowsUnit::default(), &[PipelineWord::new(row_constant, Mode::Encrypt, 0)], |_| 0);
        assert_eq!(out[0], (0, PipelineWord::new(row_constant, Mode::Encrypt, 0)));

        let words = random_words(10_000, 2);
        let out = stream(ShiftRowsUnit::default(), &words, |_| 0);
        for ((_, got), w) in out.iter().zip(&words) {
            let want = aes_ref::shift_rows(CipherState::from_u128(w.data), w.mode == Mode::Decrypt);
            assert_eq!(got.data, want.to_u128());
        }
        let enc = shift_rows_routing(Mode::Encrypt);
        let dec = shift_rows_routing(Mode::Decrypt);
        for i in 0..16 {
            assert_eq!(enc[dec[i]], i);
        }
    }

    #[test]
    fn shift_rows_reset_outputs_zero() {
        let mut sr = ShiftRowsUnit::default();
        sr.set_reset(true);
        sr.drive(u128::MAX, Mode::Encrypt, 0).unwrap();
        sr.commit();
        assert_eq!(sr.output(), 0);
    }

    #[test]
    fn packing_matches_published_vector_equations() {
        // (vector, output byte in the high group) -> (row of source byte, sub-field)
        // sub-field 0 = RAM[..][31:24], 1 = [23:16], 2 = [15:8], 3 = [7:0]
        let published: [[(usize, usize, usize); 6]; 4] = [
            [(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 0, 3), (0, 1, 0), (0, 1, 1)],
            [(1, 0, 3), (1, 0, 0), (1, 0, 1), (1, 0, 2), (1, 1, 3), (1, 1, 0)],
            [(2, 0, 2), (2, 0, 3), (2, 0, 0), (2, 0, 1), (2, 1, 2), (2, 1, 3)],
            [(3, 0, 1), (3, 0, 2), (3, 0, 3), (3, 0, 0), (3, 1, 1), (3, 1, 2)],
        ];
        for (k, terms) in published.iter().enumerate() {
            for (j, &(row, col, field)) in terms.iter().enumerate() {
                assert_eq!(packing_source(j, k), (4 * col + row, field), "Vec_{k} byte {j}");
            }
        }
    }

    #[test]
    fn packing_lines_up_matrix_terms_for_every_output_byte() {
        for mode in [Mode::Encrypt, Mode::Decrypt] {
            let m = aes_ref::mix_matrix(mode);
            let first = [m[0][0], m[1][0], m[2][0], m[3][0]];
            for j in 0..16 {
                let (col, row) = (j / 4, j % 4);
                for k in 0..4 {
                    let (src, field) = packing_source(j, k);
                    assert_eq!(src, 4 * col + k, "term {k} of byte {j} reads s({k},{col})");
                    assert_eq!(first[field], m[row][k], "coefficient of term {k}, byte {j}");
                }
            }
        }
    }

    #[test]
    fn mix_columns_unit_worked_column() {
        let state = CipherState([0xdb, 0x13, 0x53, 0x45, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let out = stream(MixColumnsUnit::default(), &[PipelineWord::new(state.to_u128(), Mode::Encrypt, 0)], |_| 0);
        assert_eq!(out[0].0, 5);
        let got = CipherState::from_u128(out[0].1.data);
        assert_eq!(got.column(0), [0x8e, 0x4d, 0xa1, 0xbc]);
        assert_eq!(got.column(1), [0; 4]);
    }

    #[test]
    fn mix_columns_zero_in_zero_out() {
        let out = stream(MixColumnsUnit::default(), &[PipelineWord::new(0, Mode::Decrypt, 1)], |_| 0);
        assert_eq!(out, vec![(5, PipelineWord::new(0, Mode::Decrypt, 1))]);
    }

    #[test]
    fn mix_columns_unit_matches_reference() {
        let words = random_words(10_000, 3);
        let out = stream(MixColumnsUnit::default(), &words, |_| 0);
        assert_eq!(out.len(), words.len());
        for ((_, got), w) in out.iter().zip(&words) {
            let want = aes_ref::mix_columns(CipherState::from_u128(w.data), w.mode == Mode::Decrypt);
            assert_eq!(got.data, want.to_u128());
        }
    }

    #[test]
    fn mix_columns_extra_delay_rank_is_128_flip_flops() {
        assert_eq!(MixColumnsUnit::default().external_flip_flops(), 128);
    }

    #[test]
    fn add_round_key_units() {
        let words = random_words(10_000, 4);
        let keys: Vec<u128> = random_words(10_000, 5).iter().map(|w| w.data).collect();
        let key = |i: usize| keys.get(i).copied().unwrap_or(0);
        let main = stream(MainArk::default(), &words, key);
        let edge = stream(EdgeArk::default(), &words, key);
        assert_eq!(main[0].0, 2);
        assert_eq!(edge[0].0, 1);
        for (i, w) in words.iter().enumerate() {
            assert_eq!(main[i].1.data, w.data ^ keys[i]);
            assert_eq!(edge[i].1.data, w.data ^ keys[i]);
        }
        // self-cancellation and identity
        let out = stream(MainArk::default(), &words[..1], |_| words[0].data);
        assert_eq!(out[0].1.data, 0);
        let out = stream(EdgeArk::default(), &words[..1], |_| 0);
        assert_eq!(out[0].1.data, words[0].data);
    }

    #[test]
    fn or_mux_protocol() {
        assert_eq!(or_mux("t", 5, 0).unwrap(), 5);
        assert_eq!(or_mux("t", 0, 9).unwrap(), 9);
        assert!(matches!(or_mux("t", 1, 2), Err(SimFault::OrMuxConflict { .. })));
    }

    #[test]
    fn netlist_is_free_of_combinational_loops() {
        assert!(Datapath::netlist().validate().is_ok());
    }

    /// One valid word through S0..S11, with the main-loop key presented to
    /// the ARK input registers as the controller would.
    #[test]
    fn single_round_through_the_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..200 {
            let mode = mode_of(trial);
            let x: u128 = rng.gen();
            let k: u128 = rng.gen();
            let mut dp = Datapath::new().unwrap();
            let tag = Tag { mode, slot: 0 };
            // land the word in I1 first, then watch it go round once
            let mut drive = DatapathDrive {
                admit: Some(PipelineWord::from_tag(x, tag)),
                resets: Resets { main_ark: true, final_ark: true, ..Default::default() },
                ..Default::default()
            };
            let mut result = None;
            for cycle in 0..16u64 {
                let tags = dp.tags();
                drive.modes = StageModes {
                    sub_bytes: dp.initial_tags()[1].map_or(Mode::Encrypt, |t| t.mode),
                    shift_rows: tags[1].map_or(Mode::Encrypt, |t| t.mode),
                    mix_columns: tags[2].map_or(Mode::Encrypt, |t| t.mode),
                };
                drive.main_key = k;
                drive.resets.main_ark = tags[stage::ARK_IN2].is_none();
                drive.resets.initial_ark = dp.initial_tags()[0].is_none();
                dp.drive(&drive, cycle).unwrap();
                dp.commit();
                drive.admit = None;
                if let Some(t) = dp.tags()[stage::ARK_OUT] {
                    result = Some((cycle, t, dp.main_ark.output()));
                    break;
                }
            }
            let (cycle, t, data) = result.expect("word reached S11");
            // admitted in cycle 0: I0, I1, then S0 at commit 2 .. S11 at commit 13
            assert_eq!(cycle, 13);
            assert_eq!(t, tag);
            let inv = mode == Mode::Decrypt;
            let s = CipherState::from_u128(x);
            let want = aes_ref::add_round_key(
                aes_ref::mix_columns(aes_ref::shift_rows(aes_ref::sub_bytes(s, inv), inv), inv),
                k,
            );
            assert_eq!(data, want.to_u128());
        }
    }

    #[test]
    fn collision_entering_s0_is_a_fault() {
        let mut dp = Datapath::new().unwrap();
        dp.tags[LOOP_STAGES - 1] = Reg::new(Some(Tag { mode: Mode::Encrypt, slot: 0 }));
        dp.initial_tags[1] = Reg::new(Some(Tag { mode: Mode::Encrypt, slot: 1 }));
        let err = dp.drive(&DatapathDrive::default(), 7).unwrap_err();
        assert_eq!(err, SimFault::Collision { cycle: 7, stage: "S0".into() });
    }
}
