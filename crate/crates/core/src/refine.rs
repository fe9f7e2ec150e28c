//! Gradient-based post-optimization of candidate designs.
//!
//! A quasi-Newton (BFGS) descent with Armijo backtracking polishes a design
//! in the variables the coarse search leaves roughest: every optimizable
//! curvature and the distance to the image sensor. Thicknesses and materials
//! stay fixed. Curvature steps are projected back inside the design's sign
//! boxes, so refinement never flips a curvature sign and the refined design
//! keeps the descriptor it was archived under.
//!
//! The generic driver [`bfgs_minimize`] is separated from the lens wrapper
//! [`bfgs_refine`] so its convergence can be checked against analytic
//! objectives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{describe, Descriptor, SIGN_MARGIN};
use crate::error::{Error, Result};
use crate::glass::Catalog;
use crate::hvea::ArchiveEntry;
use crate::merit::{self, MeritConfig, MeritFn};
use crate::optics::{gradient::DesignFn, ImageDistance, LensDesign, ParamKind};
use crate::scalar::Dual;

/// Settings of one refinement run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Most accepted descent steps.
    pub max_iterations: usize,
    /// Stop once the gradient 2-norm falls below this.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease coefficient of the line search.
    pub armijo_c1: f64,
    /// Step-length multiplier when the line search backtracks.
    pub backtrack: f64,
    /// Smallest step length the line search tries before giving up.
    pub step_floor: f64,
}

impl RefineConfig {
    /// Stock settings: 1000 iterations, gradient tolerance 1e-6, Armijo
    /// coefficient 1e-4 with halving.
    pub fn new() -> RefineConfig {
        RefineConfig {
            max_iterations: 1000,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            step_floor: 1e-14,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidArgument("gradient tolerance must be positive".into()));
        }
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::InvalidArgument("Armijo coefficient must be in (0, 1)".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidArgument("backtracking factor must be in (0, 1)".into()));
        }
        if !(self.step_floor > 0.0 && self.step_floor < 1.0) {
            return Err(Error::InvalidArgument("step floor must be in (0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig::new()
    }
}

/// Why a refinement stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefineStop {
    /// Gradient norm under the tolerance.
    GradTol,
    /// Accepted-step cap reached.
    IterationCap,
    /// The line search backtracked to the step floor without finding a
    /// finite decreasing point.
    StepFloor,
    /// The gradient could not be evaluated at an accepted point; the last
    /// good iterate is returned.
    GradientFailed,
}

/// Outcome of the generic descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Gradient 2-norm at the final iterate (of the last successful
    /// gradient evaluation).
    pub grad_norm: f64,
    pub reason: RefineStop,
    /// Candidate points the projection had to move.
    pub projections: usize,
    /// Objective value after each accepted step, starting with the initial
    /// value; never increasing.
    pub trace: Vec<f64>,
}

/// Minimize `value` by BFGS with Armijo backtracking, keeping every iterate
/// inside `project`'s feasible set.
///
/// `value` may signal an unusable candidate by returning an error or a
/// non-finite number: the line search treats both as a rejected step and
/// backtracks, down to the configured step floor. The starting point must
/// evaluate finitely. `project` is applied to every candidate before
/// evaluation; a projected candidate is accepted on the Armijo rule over the
/// actual (post-projection) step, so accepted steps never increase the
/// objective.
pub fn bfgs_minimize<F, G, P>(
    mut value: F,
    mut grad: G,
    x0: &[f64],
    project: P,
    cfg: &RefineConfig,
) -> Result<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    P: Fn(&mut [f64]),
{
    cfg.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidArgument("nothing to optimize".into()));
    }
    let mut x = x0.to_vec();
    project(&mut x);
    let mut f = value(&x)?;
    if !f.is_finite() {
        return Err(Error::InvalidArgument(
            "objective is not finite at the starting point".into(),
        ));
    }
    let mut g = grad(&x)?;
    let mut projections = 0usize;
    let mut trace = vec![f];

    // Inverse Hessian estimate, dense row-major.
    let mut h: Vec<f64> = vec![0.0; n * n];
    let reset = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    reset(&mut h);

    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut iterations = 0usize;
    let mut reason = RefineStop::IterationCap;

    while iterations < cfg.max_iterations {
        let gnorm = norm(&g);
        if gnorm < cfg.grad_tol {
            reason = RefineStop::GradTol;
            break;
        }
        // Search direction d = -H g, with a steepest-descent fallback when
        // numerical noise makes it lose the descent property.
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        if d.iter().zip(&g).map(|(di, gi)| di * gi).sum::<f64>() >= 0.0 {
            reset(&mut h);
            d = g.iter().map(|gi| -gi).collect();
        }

        // Backtracking line search on the projected candidate.
        let mut t = 1.0;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        while t >= cfg.step_floor {
            let mut xc: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let before = xc.clone();
            project(&mut xc);
            if xc != before {
                projections += 1;
            }
            if let Ok(fc) = value(&xc) {
                if fc.is_finite() {
                    let step_dec: f64 =
                        g.iter().zip(xc.iter().zip(&x)).map(|(gi, (ci, xi))| gi * (ci - xi)).sum();
                    let ok = if step_dec < 0.0 {
                        fc <= f + cfg.armijo_c1 * step_dec
                    } else {
                        // Projection bent the step away from the descent
                        // direction; insist on plain decrease.
                        fc < f
                    };
                    if ok {
                        accepted = Some((xc, fc));
                        break;
                    }
                }
            }
            t *= cfg.backtrack;
        }
        let Some((xn, fn_)) = accepted else {
            reason = RefineStop::StepFloor;
            break;
        };

        let gn = match grad(&xn) {
            Ok(gn) => gn,
            Err(_) => {
                x = xn;
                f = fn_;
                trace.push(f);
                iterations += 1;
                reason = RefineStop::GradientFailed;
                break;
            }
        };
        // BFGS inverse update, skipped when the curvature condition fails.
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-10 * norm(&s) * norm(&y) {
            let rho = 1.0 / sy;
            // H' = (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum::<f64>())
                .collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += rho * rho * yhy * s[i] * s[j]
                        - rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * s[i] * s[j];
                }
            }
        }
        x = xn;
        f = fn_;
        g = gn;
        trace.push(f);
        iterations += 1;
    }

    let grad_norm = norm(&g);
    Ok(BfgsOutcome { x, value: f, iterations, grad_norm, reason, projections, trace })
}

/// Report of one design refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub input: LensDesign,
    pub input_value: f64,
    pub refined: LensDesign,
    pub refined_value: f64,
    /// Accepted descent steps.
    pub iterations: usize,
    /// Gradient 2-norm over the free variables at the final iterate.
    pub grad_norm: f64,
    /// `input_value / refined_value`; at least 1 up to rounding.
    pub improvement: f64,
    pub reason: RefineStop,
    /// Line-search candidates the sign-box projection had to move.
    pub projections: usize,
}

/// The free slots of a refinement: indices into the full parameter layout
/// and, for curvature slots, the sign box each one is confined to.
struct FreeSet {
    indices: Vec<usize>,
    boxes: Vec<Option<(f64, f64)>>,
}

/// Free variables: every optimizable curvature (boxed to its sign interval,
/// widened if the input starts outside it) plus the image distance
/// (unboxed). Flat (zero-sign) curvatures are frozen at zero so the
/// descriptor survives.
fn free_set(design: &LensDesign, descriptor: &Descriptor, cfg: &MeritConfig) -> FreeSet {
    let layout = design.param_layout();
    let params = design.continuous_params();
    let mut indices = Vec::new();
    let mut boxes = Vec::new();
    let mut sign_slot = 0usize;
    for (i, kind) in layout.kinds.iter().enumerate() {
        match kind {
            ParamKind::Curvature(_) => {
                let sign = descriptor.signs[sign_slot];
                sign_slot += 1;
                let c0 = params[i];
                let b = match sign {
                    1 => (SIGN_MARGIN.min(c0.abs()), cfg.max_curvature.max(c0.abs())),
                    -1 => (-cfg.max_curvature.max(c0.abs()), -SIGN_MARGIN.min(c0.abs())),
                    _ => (0.0, 0.0),
                };
                indices.push(i);
                boxes.push(Some(b));
            }
            ParamKind::ImageDistance => {
                indices.push(i);
                boxes.push(None);
            }
            ParamKind::Thickness(_) => {}
        }
    }
    FreeSet { indices, boxes }
}

/// Polish one design: BFGS over its curvatures and image distance, merit
/// values and exact gradients from the configured merit function.
///
/// The image plane is first pinned where the design currently puts it (the
/// paraxial solve for solved designs), then optimized as an ordinary
/// variable. The refined design keeps the input's descriptor; its value
/// never exceeds the input's.
pub fn bfgs_refine(
    design: &LensDesign,
    catalog: &Catalog,
    merit_cfg: &MeritConfig,
    cfg: &RefineConfig,
) -> Result<RefineReport> {
    cfg.validate()?;
    let breakdown = merit::objective(design, catalog, merit_cfg)?;
    let input_value = breakdown.total;
    let descriptor = describe(design);

    let mut working = design.clone();
    working.image_distance = ImageDistance::Fixed(breakdown.image_distance);
    let free = free_set(&working, &descriptor, merit_cfg);
    let full0 = working.continuous_params();
    let z0: Vec<f64> = free.indices.iter().map(|&i| full0[i]).collect();

    let assemble = |z: &[f64]| -> Vec<f64> {
        let mut p = full0.clone();
        for (&i, &v) in free.indices.iter().zip(z) {
            p[i] = v;
        }
        p
    };
    let merit_fn = MeritFn { cfg: merit_cfg.clone() };
    let value = |z: &[f64]| merit_fn.eval_scalar::<f64>(&working, catalog, &assemble(z));
    let grad = |z: &[f64]| -> Result<Vec<f64>> {
        let p = assemble(z);
        let mut duals: Vec<Dual> = p.iter().map(|&v| Dual::constant(v)).collect();
        let mut g = Vec::with_capacity(free.indices.len());
        for &i in &free.indices {
            duals[i] = Dual::variable(p[i]);
            let out = merit_fn.eval_scalar::<Dual>(&working, catalog, &duals)?;
            g.push(out.d);
            duals[i] = Dual::constant(p[i]);
        }
        Ok(g)
    };
    let project = |z: &mut [f64]| {
        for (v, b) in z.iter_mut().zip(&free.boxes) {
            if let Some((lo, hi)) = b {
                *v = v.clamp(*lo, *hi);
            }
        }
    };

    let out = bfgs_minimize(value, grad, &z0, project, cfg)?;

    let refined = working.with_continuous_params(&assemble(&out.x))?;
    let refined_descriptor = describe(&refined);
    if refined_descriptor != descriptor {
        return Err(Error::DescriptorMismatch {
            expected: descriptor.serialize(),
            actual: refined_descriptor.serialize(),
        });
    }
    let refined_value = out.value;
    let improvement = if refined_value == 0.0 && input_value == 0.0 {
        1.0
    } else {
        input_value / refined_value
    };
    Ok(RefineReport {
        input: design.clone(),
        input_value,
        refined,
        refined_value,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        improvement,
        reason: out.reason,
        projections: out.projections,
    })
}

/// Refine the `k` best entries of a candidate pool (ascending by archived
/// value), concurrently; reports come back in that rank order.
pub fn refine_top_k(
    entries: &[ArchiveEntry],
    k: usize,
    catalog: &Catalog,
    merit_cfg: &MeritConfig,
    cfg: &RefineConfig,
) -> Result<Vec<RefineReport>> {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].value.total_cmp(&entries[b].value));
    order.truncate(k);
    order
        .par_iter()
        .map(|&i| bfgs_refine(&entries[i].design, catalog, merit_cfg, cfg))
        .collect()
}
