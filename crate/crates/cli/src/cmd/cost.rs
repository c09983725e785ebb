use anyhow::Result;
use bnf_core::cost::{cost_table, FirstLayerDims, GateCostTable};
use bnf_core::model::{preset, FirstLayerMode, Preset};

use crate::args::{CostArgs, Format};
use crate::usage;

fn dims(a: &CostArgs) -> Result<FirstLayerDims> {
    if let Some(p) = &a.preset {
        let p: Preset = p.parse().map_err(|e: bnf_core::Error| usage(e.to_string()))?;
        let mut cfg = preset(p);
        cfg.bits = u8::try_from(a.m).map_err(|_| usage("--M out of range"))?;
        cfg.bil_filters = a.k.map(|k| k as usize);
        cfg.first_layer_mode = if a.k.is_some() { FirstLayerMode::Bil } else { FirstLayerMode::Baseline };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        return Ok(FirstLayerDims::from_config(&cfg)?);
    }
    let missing: Vec<&str> = [("--H", a.h), ("--W", a.w), ("--C", a.c), ("--F", a.f), ("--I", a.i)]
        .iter()
        .filter(|(_, v)| v.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(usage(format!("missing dimensions {} (or give --preset)", missing.join(" "))));
    }
    let unwrap = |v: Option<u64>| v.unwrap_or_default();
    FirstLayerDims::new(unwrap(a.h), unwrap(a.w), unwrap(a.c), a.m, unwrap(a.f), unwrap(a.i), a.k).map_err(|e| usage(e.to_string()))
}

pub fn run(a: CostArgs) -> Result<()> {
    let d = dims(&a)?;
    let gates = GateCostTable {
        gates_float_mult: a.float_gates,
        ..GateCostTable::default()
    };
    gates.validate().map_err(|e| usage(e.to_string()))?;
    let rows = cost_table(&d, &gates)?;
    if d.k.is_none() {
        log::warn!("no --K given, BIL row omitted");
    }
    match a.format {
        Format::Csv => {
            println!("approach,mult_count,weight_count,gate_count,relative_area_pct");
            for r in &rows {
                println!("{},{},{},{},{:.2}", r.approach, r.mult_count, r.weight_count, r.gate_count, r.relative_area_pct);
            }
        }
        Format::Text => {
            println!("{:<9} {:>14} {:>12} {:>16} {:>8}", "approach", "mults", "weights", "gates", "area");
            for r in &rows {
                println!(
                    "{:<9} {:>14} {:>12} {:>16} {:>7.2}%",
                    r.approach.to_string(),
                    r.mult_count,
                    r.weight_count,
                    r.gate_count,
                    r.relative_area_pct
                );
            }
        }
    }
    Ok(())
}
