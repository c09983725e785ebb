//! Multiplication, weight and gate counts for the first layer.
//!
//! Only multiplications are costed. Adders, accumulators and weight storage
//! are left out, and energy is taken to scale like area.

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::model::{FirstLayerMode, LayerSpec, ModelConfig};
use crate::{Error, Result};

/// Dimensions of a first convolution. `f_elems` is the number of kernel
/// taps (`F²` for square kernels, 3 for a `1×3` kernel).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstLayerDims {
    pub h: u64,
    pub w: u64,
    pub c: u64,
    pub m: u64,
    pub f_elems: u64,
    pub i: u64,
    /// Width of the BIL 1×1 stage.
    pub k: Option<u64>,
}

impl FirstLayerDims {
    pub fn new(h: u64, w: u64, c: u64, m: u64, f_elems: u64, i: u64, k: Option<u64>) -> Result<Self> {
        let d = FirstLayerDims { h, w, c, m, f_elems, i, k };
        if [h, w, c, m, f_elems, i].contains(&0) || k == Some(0) {
            return Err(invalid!("all dimensions must be positive: {d:?}"));
        }
        Ok(d)
    }

    /// The PAMAP2 first layer: 7×100×1 input, 24 filters of 1×3, M = 8.
    pub fn pamap2(k: Option<u64>) -> Self {
        FirstLayerDims {
            h: 7,
            w: 100,
            c: 1,
            m: 8,
            f_elems: 3,
            i: 24,
            k,
        }
    }

    /// Reads the first convolution of a model.
    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        let Some(&LayerSpec::Conv { filters, kernel }) = cfg.layers.first() else {
            return Err(Error::Config("the first layer must be a convolution".into()));
        };
        let (kh, kw) = cfg.axis_policy.window(kernel);
        let &[h, w, c] = cfg.input_shape.dims() else {
            return Err(Error::Config("input shape must be H×W×C".into()));
        };
        FirstLayerDims::new(
            h as u64,
            w as u64,
            c as u64,
            cfg.bits as u64,
            (kh * kw) as u64,
            filters as u64,
            cfg.bil_filters.map(|k| k as u64),
        )
    }

    fn bil_k(&self) -> Result<u64> {
        self.k.ok_or_else(|| Error::Config("K required for bil".into()))
    }
}

fn mul(xs: &[u64]) -> Result<u64> {
    xs.iter()
        .try_fold(1u64, |acc, &x| acc.checked_mul(x))
        .ok_or_else(|| Error::Overflow(format!("product of {xs:?} exceeds u64")))
}

fn add(a: u64, b: u64) -> Result<u64> {
    a.checked_add(b).ok_or_else(|| Error::Overflow(format!("{a} + {b} exceeds u64")))
}

pub fn mult_count(approach: FirstLayerMode, d: &FirstLayerDims) -> Result<u64> {
    match approach {
        FirstLayerMode::Baseline | FirstLayerMode::Fpid => mul(&[d.h, d.w, d.c, d.f_elems, d.i]),
        FirstLayerMode::Dbi => mul(&[d.h, d.w, d.c, d.f_elems, d.i, d.m]),
        FirstLayerMode::Bil => {
            let k = d.bil_k()?;
            let inner = add(mul(&[d.m, d.c])?, mul(&[d.f_elems, d.i])?)?;
            mul(&[d.h, d.w, k, inner])
        }
    }
}

pub fn weight_count(approach: FirstLayerMode, d: &FirstLayerDims) -> Result<u64> {
    match approach {
        FirstLayerMode::Baseline | FirstLayerMode::Fpid => mul(&[d.c, d.f_elems, d.i]),
        FirstLayerMode::Dbi => mul(&[d.c, d.f_elems, d.i, d.m]),
        FirstLayerMode::Bil => {
            let k = d.bil_k()?;
            add(mul(&[d.c, d.m, k])?, mul(&[d.f_elems, d.i, k])?)
        }
    }
}

/// NAND-gate equivalents per multiplier type.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCostTable {
    pub gates_binary_mult: f64,
    /// `None` means `M` gates (one AND per input bit).
    pub gates_fixed_by_binary_mult: Option<f64>,
    /// Calibrated so the published rounded percentages come out; any value
    /// in roughly `[3813, 3834]` does.
    pub gates_float_mult: f64,
}

impl Default for GateCostTable {
    fn default() -> Self {
        GateCostTable {
            gates_binary_mult: 1.0,
            gates_fixed_by_binary_mult: None,
            gates_float_mult: 3820.0,
        }
    }
}

impl GateCostTable {
    pub fn validate(&self) -> Result<()> {
        let fixed = self.gates_fixed_by_binary_mult.unwrap_or(1.0);
        if [self.gates_binary_mult, fixed, self.gates_float_mult]
            .iter()
            .any(|g| !(g.is_finite() && *g > 0.0))
        {
            return Err(invalid!("gate costs must be positive and finite: {self:?}"));
        }
        Ok(())
    }

    pub fn gates_per_mult(&self, approach: FirstLayerMode, m: u64) -> f64 {
        match approach {
            FirstLayerMode::Baseline => self.gates_float_mult,
            FirstLayerMode::Fpid => self.gates_fixed_by_binary_mult.unwrap_or(m as f64),
            FirstLayerMode::Dbi | FirstLayerMode::Bil => self.gates_binary_mult,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub approach: FirstLayerMode,
    pub mult_count: u64,
    pub weight_count: u64,
    pub gate_count: f64,
    pub relative_area_pct: f64,
}

impl CostReport {
    /// Energy is assumed to track area.
    pub fn relative_energy_pct(&self) -> f64 {
        self.relative_area_pct
    }
}

/// Area of each report's multipliers as a percentage of the baseline's.
pub fn relative_area(reports: &[CostReport], gates: &GateCostTable, m: u64) -> Result<Vec<f64>> {
    gates.validate()?;
    let base = reports
        .iter()
        .find(|r| r.approach == FirstLayerMode::Baseline)
        .ok_or_else(|| invalid!("relative area needs a baseline report"))?;
    let base_gates = base.mult_count as f64 * gates.gates_float_mult;
    if base_gates == 0.0 {
        return Err(invalid!("baseline has zero gates"));
    }
    Ok(reports
        .iter()
        .map(|r| 100.0 * (r.mult_count as f64 * gates.gates_per_mult(r.approach, m)) / base_gates)
        .collect())
}

/// One report per approach. BIL is skipped when `K` is not set; `K` does not
/// affect the other rows.
pub fn cost_table(d: &FirstLayerDims, gates: &GateCostTable) -> Result<Vec<CostReport>> {
    let mut reports = Vec::with_capacity(4);
    for approach in FirstLayerMode::ALL {
        if approach == FirstLayerMode::Bil && d.k.is_none() {
            continue;
        }
        let mults = mult_count(approach, d)?;
        reports.push(CostReport {
            approach,
            mult_count: mults,
            weight_count: weight_count(approach, d)?,
            gate_count: mults as f64 * gates.gates_per_mult(approach, d.m),
            relative_area_pct: 0.0,
        });
    }
    let pct = relative_area(&reports, gates, d.m)?;
    for (r, p) in reports.iter_mut().zip(pct) {
        r.relative_area_pct = p;
    }
    Ok(reports)
}
