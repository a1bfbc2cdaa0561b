//! Latency, throughput, efficiency, energy and co-location arithmetic.
//!
//! Everything here is a pure function of its arguments or of a [`Catalog`].
//! Power figures and resource counts are inputs, never derived.

mod catalog;
pub mod report;

pub use catalog::{AcceleratorEntry, Catalog, DesignEntry, DeviceEntry, PowerBreakdown};

use serde::{Deserialize, Serialize};

use crate::Error;

/// Resource counts. `None` means the figure is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceVector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub luts: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_flops: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brams: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsps: Option<i64>,
}

impl ResourceVector {
    /// All five counts known and zero.
    pub fn zero() -> Self {
        Self::new(0, 0, 0, 0, 0)
    }

    pub fn new(slices: i64, luts: i64, flip_flops: i64, brams: i64, dsps: i64) -> Self {
        Self {
            slices: Some(slices),
            luts: Some(luts),
            flip_flops: Some(flip_flops),
            brams: Some(brams),
            dsps: Some(dsps),
        }
    }

    /// The three counts that matter for co-location.
    pub fn placement(slices: i64, brams: i64, dsps: i64) -> Self {
        Self { slices: Some(slices), brams: Some(brams), dsps: Some(dsps), ..Self::default() }
    }

    fn zip(self, other: Self, f: impl Fn(i64, i64) -> i64) -> Self {
        let op = |a: Option<i64>, b: Option<i64>| Some(f(a?, b?));
        Self {
            slices: op(self.slices, other.slices),
            luts: op(self.luts, other.luts),
            flip_flops: op(self.flip_flops, other.flip_flops),
            brams: op(self.brams, other.brams),
            dsps: op(self.dsps, other.dsps),
        }
    }
}

impl std::ops::Add for ResourceVector {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub for ResourceVector {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self.zip(rhs, |a, b| a - b)
    }
}

/// Latency of an iterative pipeline: `stages * rounds + extra` cycles, and
/// that many clock periods in nanoseconds.
pub fn latency_ns(stages: u64, rounds: u64, extra_cycles: u64, clock_period_ns: f64) -> Result<(u64, f64), Error> {
    if stages == 0 || rounds == 0 || clock_period_ns.is_nan() || clock_period_ns <= 0.0 {
        return Err(Error::Precondition("stages, rounds and clock period must be positive".into()));
    }
    let cycles = stages * rounds + extra_cycles;
    Ok((cycles, cycles as f64 * clock_period_ns))
}

/// Clock period in nanoseconds for a frequency in MHz.
pub fn period_ns(freq_mhz: f64) -> f64 {
    1000.0 / freq_mhz
}

/// `block_bits * freq / cycles_per_batch * blocks_per_batch`, in Gbps.
pub fn throughput_gbps(block_bits: u32, freq_mhz: f64, cycles_per_batch: u64, blocks_per_batch: u64) -> f64 {
    block_bits as f64 * freq_mhz / cycles_per_batch as f64 * blocks_per_batch as f64 / 1000.0
}

/// Throughput per datapath resource, in Mbps per unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EfficiencyReport {
    pub per_lut: Option<f64>,
    pub per_flip_flop: Option<f64>,
    /// Scaled by the block-RAM utilization factor.
    pub per_bram: Option<f64>,
    pub per_dsp: Option<f64>,
    /// Over total slices, the conventional figure.
    pub per_slice: Option<f64>,
    pub bram_utilization: f64,
}

fn per(mbps: f64, count: Option<i64>) -> Option<f64> {
    match count {
        Some(n) if n > 0 => Some(mbps / n as f64),
        _ => None,
    }
}

/// Per-resource efficiency over the datapath-only resource counts.
pub fn efficiency_report(entry: &DesignEntry, bram_utilization: f64) -> Result<EfficiencyReport, Error> {
    if !(bram_utilization > 0.0 && bram_utilization <= 1.0) {
        return Err(Error::Precondition(format!("block RAM utilization {bram_utilization} outside (0, 1]")));
    }
    let mbps = entry
        .throughput_mbps
        .ok_or_else(|| Error::Precondition(format!("{} has no throughput figure", entry.name)))?;
    let dp = entry
        .datapath
        .ok_or_else(|| Error::Precondition(format!("{} has no datapath resource breakdown", entry.name)))?;
    Ok(EfficiencyReport {
        per_lut: per(mbps, dp.luts),
        per_flip_flop: per(mbps, dp.flip_flops),
        per_bram: per(mbps, dp.brams).map(|v| v * bram_utilization),
        per_dsp: per(mbps, dp.dsps),
        per_slice: per(mbps, entry.total.slices),
        bram_utilization,
    })
}

/// Energy to process one block, in nanowatt-seconds: power over the block
/// completion rate.
pub fn energy_per_block_nws(total_power_mw: f64, throughput_mbps: f64, block_bits: u32) -> f64 {
    if total_power_mw == 0.0 {
        return 0.0;
    }
    total_power_mw * block_bits as f64 / throughput_mbps
}

/// Resources left after placing an accelerator and an AES design on a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Colocation {
    pub slices: i64,
    pub brams: i64,
    pub dsps: i64,
    pub feasible: bool,
}

/// `device - accelerator - design` over slices, block RAMs and DSPs.
pub fn colocate(device: &ResourceVector, accelerator: &ResourceVector, design: &ResourceVector) -> Result<Colocation, Error> {
    let r = *device - *accelerator - *design;
    match (r.slices, r.brams, r.dsps) {
        (Some(slices), Some(brams), Some(dsps)) => Ok(Colocation {
            slices,
            brams,
            dsps,
            feasible: slices >= 0 && brams >= 0 && dsps >= 0,
        }),
        _ => Err(Error::Precondition("slice, block RAM and DSP counts must all be known".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_examples() {
        let (c, ns) = latency_ns(12, 9, 7, 1.893).unwrap();
        assert_eq!(c, 115);
        assert!((ns - 217.695).abs() < 1e-9);
        assert_eq!(latency_ns(1, 1, 0, 1.0).unwrap(), (1, 1.0));
        let (c, ns) = latency_ns(8, 9, 12, 1.818).unwrap();
        assert_eq!(c, 84);
        assert!((ns - 152.712).abs() < 1e-9);
        assert!(latency_ns(0, 9, 7, 1.0).is_err());
    }

    #[test]
    fn throughput_examples() {
        assert!((throughput_gbps(128, 528.262, 115, 12) - 7.055).abs() < 1e-3);
        assert!((throughput_gbps(128, 100.0, 128, 1) - 0.1).abs() < 1e-12);
        assert!((throughput_gbps(128, 611.0, 1, 1) - 78.208).abs() < 1e-9);
    }

    #[test]
    fn energy_examples() {
        assert!((energy_per_block_nws(412.0, 7055.0, 128) - 7.47).abs() < 0.01);
        assert!((energy_per_block_nws(491.0, 6700.0, 128) - 9.37).abs() < 0.02);
        assert_eq!(energy_per_block_nws(0.0, 6700.0, 128), 0.0);
    }

    #[test]
    fn zero_throughput_gives_zero_figures() {
        let mut e = Catalog::reference().design("DRAB-LOCUS").unwrap().clone();
        e.throughput_mbps = Some(0.0);
        let r = efficiency_report(&e, 0.5).unwrap();
        assert_eq!(r.per_lut, Some(0.0));
        assert_eq!(r.per_bram, Some(0.0));
        assert_eq!(r.per_dsp, Some(0.0));
    }

    #[test]
    fn unknown_resource_gives_absent_figure() {
        let mut e = Catalog::reference().design("AES-Efficient").unwrap().clone();
        e.datapath = Some(ResourceVector { luts: None, flip_flops: Some(0), ..e.datapath.unwrap() });
        let r = efficiency_report(&e, 1.0).unwrap();
        assert_eq!(r.per_lut, None);
        assert_eq!(r.per_flip_flop, None);
        assert!(r.per_dsp.is_some());
    }

    #[test]
    fn colocate_identity_and_sign_rule() {
        let dev = ResourceVector::placement(13300, 140, 220);
        let empty = ResourceVector::placement(0, 0, 0);
        assert_eq!(
            colocate(&dev, &empty, &empty).unwrap(),
            Colocation { slices: 13300, brams: 140, dsps: 220, feasible: true }
        );
        let r = colocate(&dev, &ResourceVector::placement(10973, 134, 202), &ResourceVector::placement(310, 16, 18)).unwrap();
        assert_eq!((r.slices, r.brams, r.dsps, r.feasible), (2017, -10, 0, false));
    }
}
