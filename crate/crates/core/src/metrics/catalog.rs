//! Device, accelerator and design catalogs.
//!
//! The on-disk format is TOML with one array-of-tables per kind:
//!
//! ```toml
//! [[device]]
//! name = "xc7z020"
//! family = "Zynq 7000"      # optional
//! slices = 13300
//! brams = 140
//! dsps = 220
//!
//! [[accelerator]]
//! name = "Video"
//! device = "xc7z020"        # home device, optional
//! slices = 8315
//! brams = 105
//! dsps = 26
//!
//! [[design]]
//! name = "DRAB-LOCUS"
//! device = "Zynq 7000"      # all fields below are optional
//! frequency_mhz = 528.262
//! latency_cycles = 115
//! blocks_per_batch = 12
//! throughput_mbps = 7055.0
//! bram_utilization = 0.375
//! energy_nws = 7.47         # only for designs without a throughput figure
//! total = { slices = 310, luts = 909, flip_flops = 593, brams = 16, dsps = 18 }
//! datapath = { slices = 167, luts = 266, flip_flops = 256, brams = 12, dsps = 18 }
//! power_mw = { logic = 7.0, bram = 259.0, dsp = 58.0, signal_clock = 88.0, total = 412.0 }
//! ```
//!
//! Unknown keys are rejected and the error carries the line number.

use serde::{Deserialize, Serialize};

use super::ResourceVector;
use crate::Error;

static REFERENCE: &str = include_str!("../../catalog/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEntry {
    pub name: String,
    #[serde(default)]
    pub family: Option<String>,
    pub slices: i64,
    pub brams: i64,
    pub dsps: i64,
}

impl DeviceEntry {
    pub fn capacity(&self) -> ResourceVector {
        ResourceVector::placement(self.slices, self.brams, self.dsps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorEntry {
    pub name: String,
    #[serde(default)]
    pub device: Option<String>,
    pub slices: i64,
    pub brams: i64,
    pub dsps: i64,
}

impl AcceleratorEntry {
    pub fn usage(&self) -> ResourceVector {
        ResourceVector::placement(self.slices, self.brams, self.dsps)
    }
}

/// Power by category, in mW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerBreakdown {
    pub logic: f64,
    pub bram: f64,
    pub dsp: f64,
    pub signal_clock: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEntry {
    pub name: String,
    #[serde(default)]
    pub device: Option<String>,
    #[serde(default)]
    pub frequency_mhz: Option<f64>,
    #[serde(default)]
    pub latency_cycles: Option<u64>,
    #[serde(default)]
    pub blocks_per_batch: Option<u64>,
    #[serde(default)]
    pub throughput_mbps: Option<f64>,
    #[serde(default)]
    pub bram_utilization: Option<f64>,
    #[serde(default)]
    pub energy_nws: Option<f64>,
    #[serde(default)]
    pub total: ResourceVector,
    #[serde(default)]
    pub datapath: Option<ResourceVector>,
    #[serde(default)]
    pub power_mw: Option<PowerBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    #[serde(default, rename = "device")]
    pub devices: Vec<DeviceEntry>,
    #[serde(default, rename = "accelerator")]
    pub accelerators: Vec<AcceleratorEntry>,
    #[serde(default, rename = "design")]
    pub designs: Vec<DesignEntry>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn lookup<'a, T>(kind: &'static str, items: &'a [T], name: &str, key: impl Fn(&T) -> &str) -> Result<&'a T, Error> {
    items.iter().find(|i| key(i) == name).ok_or_else(|| Error::UnknownName {
        kind,
        name: name.to_string(),
        available: items.iter().map(|i| key(i).to_string()).collect(),
    })
}

impl Catalog {
    /// The built-in catalog of published figures.
    pub fn reference() -> Self {
        Self::parse(REFERENCE).expect("embedded catalog parses")
    }

    pub fn reference_text() -> &'static str {
        REFERENCE
    }

    pub fn parse(text: &str) -> Result<Self, Error> {
        let catalog: Catalog = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, Error> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<(), Error> {
        for d in &self.devices {
            if d.slices <= 0 || d.brams <= 0 || d.dsps <= 0 {
                return Err(Error::Catalog(format!("device {} must have positive capacities", d.name)));
            }
        }
        for a in &self.accelerators {
            if a.slices < 0 || a.brams < 0 || a.dsps < 0 {
                return Err(Error::Catalog(format!("accelerator {} has a negative count", a.name)));
            }
        }
        for d in &self.designs {
            let positive = |v: Option<f64>| v.is_none_or(|x| x > 0.0);
            if !positive(d.frequency_mhz) || !positive(d.throughput_mbps) {
                return Err(Error::Catalog(format!("design {}: frequency and throughput must be positive", d.name)));
            }
        }
        let mut names: Vec<(&str, &str)> = self
            .devices
            .iter()
            .map(|d| ("device", d.name.as_str()))
            .chain(self.accelerators.iter().map(|a| ("accelerator", a.name.as_str())))
            .chain(self.designs.iter().map(|d| ("design", d.name.as_str())))
            .collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Catalog(format!("duplicate {} `{}`", w[0].0, w[0].1)));
        }
        Ok(())
    }

    pub fn device(&self, name: &str) -> Result<&DeviceEntry, Error> {
        lookup("device", &self.devices, name, |d| &d.name)
    }

    pub fn accelerator(&self, name: &str) -> Result<&AcceleratorEntry, Error> {
        lookup("accelerator", &self.accelerators, name, |a| &a.name)
    }

    pub fn design(&self, name: &str) -> Result<&DesignEntry, Error> {
        lookup("design", &self.designs, name, |d| &d.name)
    }

    /// Designs with a total slice, BRAM and DSP count, in catalog order.
    pub fn placeable_designs(&self) -> impl Iterator<Item = &DesignEntry> {
        self.designs
            .iter()
            .filter(|d| d.total.slices.is_some() && d.total.brams.is_some() && d.total.dsps.is_some())
    }

    /// Co-location on a named device, defaulting to the accelerator's home device.
    pub fn colocate(&self, device: Option<&str>, accelerator: &str, design: &str) -> Result<super::Colocation, Error> {
        let acc = self.accelerator(accelerator)?;
        let device_name = match (device, &acc.device) {
            (Some(d), _) => d,
            (None, Some(d)) => d.as_str(),
            (None, None) => {
                return Err(Error::Precondition(format!("accelerator {accelerator} names no device; pass one")))
            }
        };
        let dev = self.device(device_name)?;
        let des = self.design(design)?;
        super::colocate(&dev.capacity(), &acc.usage(), &des.total)
    }
}
