//! Cycle-accurate models of the FPGA primitives the architecture is built from.
//!
//! Every model follows the same two-phase clock. During the compute phase a
//! caller reads outputs (which reflect only previously committed state) and
//! drives inputs, which stage next-state values. [`Clocked::commit`] then
//! latches them. Nothing driven in a cycle is observable until after that
//! cycle's commit, so the evaluation order of components within a cycle does
//! not matter.

use petgraph::algo::{is_cyclic_directed, kosaraju_scc};
use petgraph::graph::{DiGraph, NodeIndex};

use crate::tables::RomImage;
use crate::SimFault;

/// Anything holding registered state.
pub trait Clocked {
    /// Latches every staged next-state value. Called once per simulated cycle.
    fn commit(&mut self);
}

/// A single register. Undriven registers hold their value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Reg<T: Copy> {
    cur: T,
    next: T,
}

impl<T: Copy> Reg<T> {
    pub fn new(init: T) -> Self {
        Self { cur: init, next: init }
    }

    #[inline]
    pub fn get(&self) -> T {
        self.cur
    }

    #[inline]
    pub fn set(&mut self, v: T) {
        self.next = v;
    }
}

impl<T: Copy> Clocked for Reg<T> {
    #[inline]
    fn commit(&mut self) {
        self.cur = self.next;
    }
}

/// Selects one of the two block-RAM ports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    A,
    B,
}

impl Port {
    fn index(self) -> usize {
        match self {
            Port::A => 0,
            Port::B => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct BramPort {
    latch: Reg<u128>,
    out: Reg<u128>,
    reset: bool,
    write: Option<(usize, u128)>,
}

/// True dual-port block RAM.
///
/// A read issued in cycle `t` is visible on the port's data output in cycle
/// `t + 1`, or `t + 2` with the output register enabled. Writes land at
/// commit; a read of the same address in the same cycle returns the old word.
#[derive(Debug, Clone)]
pub struct Bram {
    name: String,
    width: u32,
    image: Vec<u128>,
    output_register: bool,
    ports: [BramPort; 2],
}

impl Bram {
    pub fn new(name: impl Into<String>, image: &RomImage, output_register: bool) -> Self {
        Self {
            name: name.into(),
            width: image.width(),
            image: image.words().to_vec(),
            output_register,
            ports: Default::default(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depth(&self) -> usize {
        self.image.len()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn latency(&self) -> u32 {
        if self.output_register {
            2
        } else {
            1
        }
    }

    fn check(&self, address: usize) -> Result<(), SimFault> {
        if address >= self.image.len() {
            return Err(SimFault::AddressOutOfRange {
                component: self.name.clone(),
                address,
                depth: self.image.len(),
            });
        }
        Ok(())
    }

    /// Presents `address` on `port` for this cycle.
    pub fn read(&mut self, port: Port, address: usize) -> Result<(), SimFault> {
        self.check(address)?;
        let word = self.image[address];
        self.ports[port.index()].latch.set(word);
        Ok(())
    }

    pub fn write(&mut self, port: Port, address: usize, data: u128) -> Result<(), SimFault> {
        self.check(address)?;
        let mask = width_mask(self.width);
        self.ports[port.index()].write = Some((address, data & mask));
        Ok(())
    }

    /// Synchronously clears the port's output register this cycle. Without an
    /// output register the read latch is cleared instead.
    pub fn reset_output(&mut self, port: Port) {
        self.ports[port.index()].reset = true;
    }

    pub fn data_out(&self, port: Port) -> u128 {
        let p = &self.ports[port.index()];
        if self.output_register {
            p.out.get()
        } else {
            p.latch.get()
        }
    }

    /// The port's first-stage read register (the word most recently looked up).
    pub fn read_latch(&self, port: Port) -> u128 {
        self.ports[port.index()].latch.get()
    }

    /// Direct view of the memory contents (for dumps and tests, not a port).
    pub fn contents(&self) -> &[u128] {
        &self.image
    }
}

impl Clocked for Bram {
    fn commit(&mut self) {
        for p in &mut self.ports {
            if self.output_register {
                p.out.set(if p.reset { 0 } else { p.latch.get() });
            } else if p.reset {
                p.latch.set(0);
            }
            p.reset = false;
            p.out.commit();
            p.latch.commit();
            if let Some((addr, data)) = p.write.take() {
                self.image[addr] = data;
            }
        }
    }
}

pub fn width_mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// The two DSP data widths used: the full 48-bit ALU, or 32 bits for the low
/// word of a 128-bit operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DspWidth {
    W48,
    W32,
}

impl DspWidth {
    pub fn bits(self) -> u32 {
        match self {
            DspWidth::W48 => 48,
            DspWidth::W32 => 32,
        }
    }

    fn mask(self) -> u64 {
        (1u64 << self.bits()) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DspConfig {
    pub width: DspWidth,
    /// Input register stages on the A operand (0, 1 or 2).
    pub a_stages: u8,
    /// Input register stages on the B operand (0, 1 or 2).
    pub b_stages: u8,
    /// Replace the A operand with the unregistered cascade input.
    pub cascade_input: bool,
    pub output_register: bool,
}

impl DspConfig {
    pub fn latency(&self) -> u32 {
        self.a_stages.max(self.b_stages) as u32 + self.output_register as u32
    }
}

/// A DSP slice configured as a wide XOR.
#[derive(Debug, Clone)]
pub struct DspXorSlice {
    cfg: DspConfig,
    a: [Reg<u64>; 2],
    b: [Reg<u64>; 2],
    p: Reg<u64>,
}

impl DspXorSlice {
    pub fn new(cfg: DspConfig) -> Result<Self, SimFault> {
        if cfg.a_stages > 2 || cfg.b_stages > 2 {
            return Err(SimFault::InvalidConfig(
                "DSP input registers support at most 2 stages".into(),
            ));
        }
        if cfg.cascade_input && cfg.a_stages != 0 {
            return Err(SimFault::InvalidConfig(
                "cascade input bypasses the A input registers".into(),
            ));
        }
        if !cfg.output_register && (cfg.cascade_input || cfg.a_stages == 0 || cfg.b_stages == 0) {
            return Err(SimFault::InvalidConfig(
                "a slice without an output register needs both inputs registered".into(),
            ));
        }
        Ok(Self {
            cfg,
            a: Default::default(),
            b: Default::default(),
            p: Reg::default(),
        })
    }

    pub fn config(&self) -> &DspConfig {
        &self.cfg
    }

    pub fn latency(&self) -> u32 {
        self.cfg.latency()
    }

    fn staged(regs: &[Reg<u64>; 2], stages: u8, live: u64) -> u64 {
        match stages {
            0 => live,
            n => regs[n as usize - 1].get(),
        }
    }

    /// Drives the operands for this cycle. `cascade_in` is ignored unless the
    /// slice is configured for it, in which case `a` is ignored.
    pub fn compute(&mut self, a: u64, b: u64, cascade_in: u64, reset: bool) {
        let mask = self.cfg.width.mask();
        let a_val = if self.cfg.cascade_input {
            cascade_in
        } else {
            Self::staged(&self.a, self.cfg.a_stages, a & mask)
        };
        let b_val = Self::staged(&self.b, self.cfg.b_stages, b & mask);

        for (regs, stages, live) in [
            (&mut self.a, self.cfg.a_stages, a & mask),
            (&mut self.b, self.cfg.b_stages, b & mask),
        ] {
            if stages >= 2 {
                let first = regs[0].get();
                regs[1].set(first);
            }
            if stages >= 1 {
                regs[0].set(live);
            }
            if reset && !self.cfg.output_register && stages >= 1 {
                regs[stages as usize - 1].set(0);
            }
        }

        if self.cfg.output_register {
            self.p.set(if reset { 0 } else { (a_val ^ b_val) & mask });
        }
    }

    /// Contents of the A operand's first input register.
    pub fn a_input(&self) -> u64 {
        self.a[0].get()
    }

    /// Contents of the A operand's `n`th input register (0 or 1).
    pub fn a_stage(&self, n: usize) -> u64 {
        self.a[n].get()
    }

    pub fn output(&self) -> u64 {
        if self.cfg.output_register {
            self.p.get()
        } else {
            (self.a[self.cfg.a_stages as usize - 1].get() ^ self.b[self.cfg.b_stages as usize - 1].get())
                & self.cfg.width.mask()
        }
    }
}

impl Clocked for DspXorSlice {
    fn commit(&mut self) {
        self.a.iter_mut().for_each(Clocked::commit);
        self.b.iter_mut().for_each(Clocked::commit);
        self.p.commit();
    }
}

/// A chain of XOR slices linked through their cascade ports, summing `n + 1`
/// vectors presented in the same cycle.
///
/// Slice 0 registers its two operands once and adds an output register
/// (latency 2). Slice `k` takes slice `k - 1`'s output on the cascade input,
/// so its B operand must be delayed `k + 1` cycles to stay aligned; delays
/// beyond the two internal input registers come from an external flip-flop
/// rank in front of the slice.
#[derive(Debug, Clone)]
pub struct DspCascade {
    slices: Vec<DspXorSlice>,
    external: Vec<Vec<Reg<u64>>>,
}

impl DspCascade {
    pub fn new(width: DspWidth, slices: usize) -> Result<Self, SimFault> {
        if slices == 0 {
            return Err(SimFault::InvalidConfig("a cascade needs at least one slice".into()));
        }
        let mut chain = Vec::with_capacity(slices);
        let mut external = Vec::with_capacity(slices);
        for k in 0..slices {
            let cfg = if k == 0 {
                DspConfig { width, a_stages: 1, b_stages: 1, cascade_input: false, output_register: true }
            } else {
                let delay = k + 1;
                let internal = delay.min(2);
                external.push(vec![Reg::default(); delay - internal]);
                DspConfig {
                    width,
                    a_stages: 0,
                    b_stages: internal as u8,
                    cascade_input: true,
                    output_register: true,
                }
            };
            if k == 0 {
                external.push(Vec::new());
            }
            chain.push(DspXorSlice::new(cfg)?);
        }
        Ok(Self { slices: chain, external })
    }

    pub fn vectors(&self) -> usize {
        self.slices.len() + 1
    }

    pub fn latency(&self) -> u32 {
        self.slices.len() as u32 + 1
    }

    /// Number of external flip-flops (bits) used to extend input delays.
    pub fn external_flip_flops(&self) -> u32 {
        let width = self.slices[0].cfg.width.bits();
        self.external.iter().map(|r| r.len() as u32 * width).sum()
    }

    pub fn compute(&mut self, vectors: &[u64]) {
        assert_eq!(vectors.len(), self.vectors(), "cascade vector count");
        let outputs: Vec<u64> = self.slices.iter().map(DspXorSlice::output).collect();
        for (k, slice) in self.slices.iter_mut().enumerate() {
            if k == 0 {
                slice.compute(vectors[0], vectors[1], 0, false);
                continue;
            }
            let rank = &mut self.external[k];
            let b = match rank.len() {
                0 => vectors[k + 1],
                n => {
                    let delayed = rank[n - 1].get();
                    for i in (1..n).rev() {
                        let prev = rank[i - 1].get();
                        rank[i].set(prev);
                    }
                    rank[0].set(vectors[k + 1]);
                    delayed
                }
            };
            slice.compute(0, b, outputs[k - 1], false);
        }
    }

    pub fn output(&self) -> u64 {
        self.slices.last().map(DspXorSlice::output).unwrap_or(0)
    }

    /// Output register of each slice, first to last.
    pub fn slice_outputs(&self) -> Vec<u64> {
        self.slices.iter().map(DspXorSlice::output).collect()
    }

    /// Contents of slice 0's A input register (the first vector one cycle in).
    pub fn first_input(&self) -> u64 {
        self.slices[0].a[0].get()
    }
}

impl Clocked for DspCascade {
    fn commit(&mut self) {
        self.slices.iter_mut().for_each(Clocked::commit);
        self.external.iter_mut().flatten().for_each(Clocked::commit);
    }
}

/// Which bits of a LUT shift register are visible to surrounding logic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Taps {
    /// Clocked-LUT chains: only the last bit is readable.
    FinalOnly,
    /// Flip-flop backed: every bit is readable.
    All,
}

/// A shift register of up to 128 bits. Position 0 receives the input bit;
/// a bit injected in cycle `t` reaches the final position after `len` commits.
#[derive(Debug, Clone)]
pub struct LutShiftRegister {
    len: u32,
    taps: Taps,
    bits: Reg<u128>,
}

impl LutShiftRegister {
    pub fn new(len: u32, taps: Taps) -> Result<Self, SimFault> {
        if len == 0 || len > 128 {
            return Err(SimFault::InvalidConfig(format!(
                "shift register length {len} outside 1..=128"
            )));
        }
        Ok(Self { len, taps, bits: Reg::default() })
    }

    pub fn len(&self) -> u32 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.bits.get() == 0
    }

    fn mask(&self) -> u128 {
        width_mask(self.len)
    }

    /// Loads arbitrary contents, as left behind by earlier operation. LUT shift
    /// registers have no reset, so only flushing clears this.
    pub fn preload(&mut self, bits: u128) {
        let v = bits & self.mask();
        self.bits = Reg::new(v);
    }

    pub fn shift(&mut self, bit_in: bool) {
        let next = ((self.bits.get() << 1) | bit_in as u128) & self.mask();
        self.bits.set(next);
    }

    pub fn final_bit(&self) -> bool {
        self.bits.get() >> (self.len - 1) & 1 == 1
    }

    pub fn bit(&self, position: u32) -> Result<bool, SimFault> {
        if position >= self.len {
            return Err(SimFault::InvalidConfig(format!(
                "tap {position} beyond register length {}",
                self.len
            )));
        }
        if self.taps == Taps::FinalOnly && position != self.len - 1 {
            return Err(SimFault::InvalidConfig(format!(
                "tap {position} is not readable on a final-bit-only register"
            )));
        }
        Ok(self.bits.get() >> position & 1 == 1)
    }

    /// All bits, position 0 in the least significant bit.
    pub fn bits(&self) -> Result<u128, SimFault> {
        match self.taps {
            Taps::All => Ok(self.bits.get()),
            Taps::FinalOnly => Err(SimFault::InvalidConfig(
                "contents of a final-bit-only register are not observable".into(),
            )),
        }
    }

    /// Model introspection that bypasses the tap restriction.
    pub fn raw_contents(&self) -> u128 {
        self.bits.get()
    }
}

impl Clocked for LutShiftRegister {
    fn commit(&mut self) {
        self.bits.commit();
    }
}

/// Static wiring of a composed circuit, used to reject combinational loops.
///
/// A path is combinational only while it passes through unregistered nodes;
/// an edge leaving a registered node starts a new cycle and cannot close a
/// loop within one evaluation.
#[derive(Debug, Default, Clone)]
pub struct Netlist {
    graph: DiGraph<(String, bool), ()>,
}

pub type NodeId = NodeIndex;

impl Netlist {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, registered: bool) -> NodeId {
        self.graph.add_node((name.into(), registered))
    }

    pub fn connect(&mut self, from: NodeId, to: NodeId) {
        self.graph.add_edge(from, to, ());
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn validate(&self) -> Result<(), SimFault> {
        let comb = self.graph.filter_map(
            |_, n| Some(n.clone()),
            |e, _| {
                let (src, _) = self.graph.edge_endpoints(e)?;
                (!self.graph[src].1).then_some(())
            },
        );
        if !is_cyclic_directed(&comb) {
            return Ok(());
        }
        for scc in kosaraju_scc(&comb) {
            let self_loop = scc.len() == 1 && comb.contains_edge(scc[0], scc[0]);
            if scc.len() > 1 || self_loop {
                let mut nodes: Vec<String> = scc.iter().map(|&i| comb[i].0.clone()).collect();
                nodes.sort();
                return Err(SimFault::CombinationalLoop { nodes });
            }
        }
        unreachable!("cyclic graph without a cyclic component")
    }
}
