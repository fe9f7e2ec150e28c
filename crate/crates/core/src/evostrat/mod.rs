//! Evolution strategies: the CMSA-ES used inside each niche and the
//! mixed-integer restart CMA-ES baseline.
//!
//! Both strategies work internally in coordinates normalized to the unit box
//! (so one scalar step size serves parameter axes of very different physical
//! scales: curvatures span 0.25 mm⁻¹ while gaps span millimeters) and repair
//! out-of-box samples by reflection, which keeps every evaluated point inside
//! the box — and therefore, when the box encodes a descriptor's sign
//! constraints, keeps every evaluated design in the descriptor.

pub mod cmaes;
pub mod cmsa;

pub use cmaes::{
    cma_es_baseline_run, cma_es_baseline_run_streamed, round_integer_coordinates, BaselineConfig,
    BaselinePoint, Regime,
};
pub use cmsa::{cmsa_es_run, EsConfig, EsRunResult};

use serde::{Deserialize, Serialize};

/// Why an evolution-strategy run stopped.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Evaluation budget exhausted.
    Budget,
    /// Mean moved less than the parameter-change tolerance.
    ParamTol,
    /// Generation-best value changed less than the function-value tolerance.
    FunTol,
    /// Best values over the history window span less than the tolerance.
    HistTol,
    /// Stopped by the caller (e.g. an interrupt), not by a criterion.
    ExternalStop,
}

/// Deterministic sub-seed derivation (splitmix64 over the master seed and a
/// sequence of context words). Used everywhere a component needs its own RNG
/// so results are independent of scheduling.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    let mut mix = |w: u64| {
        state = state.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(w);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let mut out = mix(0);
    for &w in parts {
        out = mix(w ^ out);
    }
    out
}

/// Fold `x` into `[lo, hi]` by reflection at the walls.
pub(crate) fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(hi >= lo);
    if x >= lo && x <= hi {
        return x;
    }
    let w = hi - lo;
    if w == 0.0 {
        return lo;
    }
    let period = 2.0 * w;
    let mut t = (x - lo) % period;
    if t < 0.0 {
        t += period;
    }
    if t > w {
        t = period - t;
    }
    lo + t
}

pub(crate) fn denormalize(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter()
        .zip(bounds)
        .map(|(&ui, &(lo, hi))| lo + ui * (hi - lo))
        .collect()
}

pub(crate) fn normalize(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(&xi, &(lo, hi))| if hi > lo { (xi - lo) / (hi - lo) } else { 0.0 })
        .collect()
}
