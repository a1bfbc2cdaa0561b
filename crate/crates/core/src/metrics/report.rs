//! Plain-text tables and line-delimited JSON records.

use std::fmt::Write as _;

use serde::Serialize;

use super::{efficiency_report, energy_per_block_nws, Catalog, Colocation, EfficiencyReport};
use crate::tables::datapath_bram_utilization;
use crate::Error;

fn cell_i(v: Option<i64>) -> String {
    v.map_or("n/a".into(), |n| n.to_string())
}

fn cell_f(v: Option<f64>, prec: usize) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.prec$}"))
}

/// Right-aligns every column but the first.
fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        for (c, cell) in cells.iter().enumerate() {
            if c == 0 {
                let _ = write!(out, "{cell:<w$}", w = width[0]);
            } else {
                let _ = write!(out, "  {cell:>w$}", w = width[c]);
            }
        }
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    let total: usize = width.iter().sum::<usize>() + 2 * (cols - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// One machine-readable record.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum Record {
    Design {
        name: String,
        scope: &'static str,
        slices: Option<i64>,
        luts: Option<i64>,
        flip_flops: Option<i64>,
        brams: Option<i64>,
        dsps: Option<i64>,
        frequency_mhz: Option<f64>,
        latency_cycles: Option<u64>,
        throughput_gbps: Option<f64>,
        device: Option<String>,
    },
    Efficiency {
        name: String,
        bram_factor_source: &'static str,
        #[serde(flatten)]
        report: EfficiencyReport,
    },
    Power {
        name: String,
        logic_mw: f64,
        bram_mw: f64,
        dsp_mw: f64,
        signal_clock_mw: f64,
        total_mw: f64,
        energy_nws: Option<f64>,
        energy_source: &'static str,
    },
    Colocation {
        device: String,
        accelerator: String,
        design: String,
        #[serde(flatten)]
        result: Colocation,
    },
}

impl Record {
    /// The design a record describes.
    pub fn subject(&self) -> &str {
        match self {
            Record::Design { name, .. } | Record::Efficiency { name, .. } | Record::Power { name, .. } => name,
            Record::Colocation { design, .. } => design,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Resource and performance rows, with datapath-only sub-rows.
pub fn design_records(cat: &Catalog) -> Vec<Record> {
    let mut out = Vec::new();
    for d in &cat.designs {
        if d.total == Default::default() && d.frequency_mhz.is_none() {
            continue;
        }
        let gbps = d.throughput_mbps.map(|m| m / 1000.0);
        out.push(Record::Design {
            name: d.name.clone(),
            scope: "total",
            slices: d.total.slices,
            luts: d.total.luts,
            flip_flops: d.total.flip_flops,
            brams: d.total.brams,
            dsps: d.total.dsps,
            frequency_mhz: d.frequency_mhz,
            latency_cycles: d.latency_cycles,
            throughput_gbps: gbps,
            device: d.device.clone(),
        });
        if let Some(dp) = d.datapath {
            out.push(Record::Design {
                name: d.name.clone(),
                scope: "datapath",
                slices: dp.slices,
                luts: dp.luts,
                flip_flops: dp.flip_flops,
                brams: dp.brams,
                dsps: dp.dsps,
                frequency_mhz: None,
                latency_cycles: None,
                throughput_gbps: None,
                device: None,
            });
        }
    }
    out
}

pub fn design_table(cat: &Catalog) -> String {
    let rows: Vec<Vec<String>> = design_records(cat)
        .into_iter()
        .filter_map(|r| match r {
            Record::Design { name, scope, slices, luts, flip_flops, brams, dsps, frequency_mhz, latency_cycles, throughput_gbps, device } => {
                let datapath = scope == "datapath";
                let blank = |s: String| if datapath { String::new() } else { s };
                Some(vec![
                    if datapath { "  datapath".into() } else { name },
                    cell_i(slices),
                    cell_i(luts),
                    cell_i(flip_flops),
                    cell_i(brams),
                    cell_i(dsps),
                    blank(cell_f(frequency_mhz, 3)),
                    blank(latency_cycles.map_or("n/a".into(), |c| c.to_string())),
                    blank(cell_f(throughput_gbps, 3)),
                    blank(device.unwrap_or_else(|| "n/a".into())),
                ])
            }
            _ => None,
        })
        .collect();
    render(&["design", "slices", "LUTs", "FFs", "BRAMs", "DSPs", "MHz", "cycles", "Gbps", "device"], &rows)
}

/// Per-resource efficiency for every design with a datapath breakdown. A
/// design whose catalog entry carries its own BRAM factor gets a row with
/// that factor; DRAB-LOCUS also gets a row with the factor computed from its
/// own table images.
pub fn efficiency_records(cat: &Catalog) -> Result<Vec<Record>, Error> {
    let mut out = Vec::new();
    for d in cat.designs.iter().filter(|d| d.datapath.is_some() && d.throughput_mbps.is_some()) {
        if let Some(f) = d.bram_utilization {
            out.push(Record::Efficiency { name: d.name.clone(), bram_factor_source: "catalog", report: efficiency_report(d, f)? });
        }
        if d.name == "DRAB-LOCUS" || d.bram_utilization.is_none() {
            let f = if d.name == "DRAB-LOCUS" { datapath_bram_utilization() } else { 1.0 };
            let source = if d.name == "DRAB-LOCUS" { "table images" } else { "assumed full" };
            out.push(Record::Efficiency { name: d.name.clone(), bram_factor_source: source, report: efficiency_report(d, f)? });
        }
    }
    Ok(out)
}

pub fn efficiency_table(records: &[Record]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .filter_map(|r| match r {
            Record::Efficiency { name, bram_factor_source, report } => Some(vec![
                name.clone(),
                cell_f(report.per_lut, 2),
                cell_f(report.per_flip_flop, 2),
                cell_f(report.per_bram, 2),
                cell_f(report.per_dsp, 2),
                cell_f(report.per_slice, 2),
                format!("{:.4} ({bram_factor_source})", report.bram_utilization),
            ]),
            _ => None,
        })
        .collect();
    render(&["design (Mbps/unit)", "LUT", "FF", "BRAM", "DSP", "slice", "BRAM factor"], &rows)
}

pub fn power_records(cat: &Catalog) -> Vec<Record> {
    cat.designs
        .iter()
        .filter_map(|d| {
            let p = d.power_mw?;
            let (energy, source) = match (d.throughput_mbps, d.energy_nws) {
                (Some(mbps), _) => (Some(energy_per_block_nws(p.total, mbps, 128)), "computed"),
                (None, Some(e)) => (Some(e), "catalog"),
                (None, None) => (None, "unknown"),
            };
            Some(Record::Power {
                name: d.name.clone(),
                logic_mw: p.logic,
                bram_mw: p.bram,
                dsp_mw: p.dsp,
                signal_clock_mw: p.signal_clock,
                total_mw: p.total,
                energy_nws: energy,
                energy_source: source,
            })
        })
        .collect()
}

pub fn power_table(records: &[Record]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .filter_map(|r| match r {
            Record::Power { name, logic_mw, bram_mw, dsp_mw, signal_clock_mw, total_mw, energy_nws, energy_source } => Some(vec![
                name.clone(),
                format!("{logic_mw:.0}"),
                format!("{bram_mw:.0}"),
                format!("{dsp_mw:.0}"),
                format!("{signal_clock_mw:.0}"),
                format!("{total_mw:.0}"),
                format!("{} ({energy_source})", cell_f(*energy_nws, 2)),
            ]),
            _ => None,
        })
        .collect();
    render(&["design (mW)", "logic", "BRAM", "DSP", "signal+clock", "total", "nWs/block"], &rows)
}

/// Every accelerator against every placeable design, on each accelerator's
/// home device.
pub fn colocation_records(cat: &Catalog) -> Result<Vec<Record>, Error> {
    let mut out = Vec::new();
    for acc in &cat.accelerators {
        for des in cat.placeable_designs() {
            let device = acc.device.clone().unwrap_or_default();
            let result = cat.colocate(None, &acc.name, &des.name)?;
            out.push(Record::Colocation { device, accelerator: acc.name.clone(), design: des.name.clone(), result });
        }
    }
    Ok(out)
}

/// Rows are accelerators; each design contributes a slices/BRAMs/DSPs group.
pub fn colocation_table(cat: &Catalog, records: &[Record]) -> String {
    let designs: Vec<&str> = cat.placeable_designs().map(|d| d.name.as_str()).collect();
    let mut header = vec!["accelerator".to_string()];
    for d in &designs {
        header.extend([format!("{d} slices"), "BRAMs".into(), "DSPs".into(), "fits".into()]);
    }
    let rows: Vec<Vec<String>> = cat
        .accelerators
        .iter()
        .map(|acc| {
            let mut row = vec![acc.name.clone()];
            for d in &designs {
                let hit = records.iter().find_map(|r| match r {
                    Record::Colocation { accelerator, design, result, .. } if accelerator == &acc.name && design == d => Some(*result),
                    _ => None,
                });
                match hit {
                    Some(c) => row.extend([
                        c.slices.to_string(),
                        c.brams.to_string(),
                        c.dsps.to_string(),
                        if c.feasible { "yes".into() } else { "no".into() },
                    ]),
                    None => row.extend(std::iter::repeat_n("n/a".to_string(), 4)),
                }
            }
            row
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    render(&h, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_render_with_aligned_columns() {
        let cat = Catalog::reference();
        let t = design_table(&cat);
        assert!(t.contains("DRAB-LOCUS"));
        assert!(t.contains("  datapath"));
        let widths: Vec<usize> = t.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{t}");
    }

    #[test]
    fn efficiency_has_both_bram_factors_for_drab_locus() {
        let recs = efficiency_records(&Catalog::reference()).unwrap();
        let drab: Vec<_> = recs
            .iter()
            .filter_map(|r| match r {
                Record::Efficiency { name, report, .. } if name == "DRAB-LOCUS" => report.per_bram,
                _ => None,
            })
            .collect();
        assert_eq!(drab.len(), 2);
        assert!((drab[0] - 220.47).abs() < 0.01);
        assert!((drab[1] - 195.97).abs() < 0.01);
    }

    #[test]
    fn json_lines_are_tagged() {
        let recs = colocation_records(&Catalog::reference()).unwrap();
        assert_eq!(recs.len(), 24);
        let line = recs[0].to_json_line();
        assert!(line.starts_with("{\"table\":\"colocation\""), "{line}");
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["feasible"], serde_json::Value::Bool(false));
    }

    #[test]
    fn expanded_energy_comes_from_catalog() {
        let recs = power_records(&Catalog::reference());
        let exp = recs
            .iter()
            .find_map(|r| match r {
                Record::Power { name, energy_nws, energy_source, .. } if name == "AES-Expanded" => Some((*energy_nws, *energy_source)),
                _ => None,
            })
            .unwrap();
        assert_eq!(exp, (Some(622.17), "catalog"));
    }
}
