//! Multimodal search inside one descriptor's subspace.
//!
//! The search alternates exploration and exploitation under a single shared
//! evaluation budget: uniform samples are clustered into basins by the
//! hill-valley test (two points share a basin when no tested point on the
//! segment between them rises above both endpoints), each newly discovered
//! basin is refined by a budget slice of [`cmsa_es_run`], and every basin's
//! best candidate goes into a quality-windowed [`NicheArchive`] that keeps
//! only candidates within `w` of the best value seen.
//!
//! Materials are fixed throughout a run; the continuous box comes from
//! [`crate::descriptor::subspace_bounds`], whose curvature intervals exclude
//! zero, so every point searched here maps to a design with the run's
//! descriptor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::descriptor::{describe, Descriptor};
use crate::error::{Error, Result};
use crate::evostrat::{cmsa_es_run, derive_seed, EsConfig, StopReason};
use crate::optics::LensDesign;

/// Relative tie tolerance of the hill-valley test; stabilizes flat plateaus.
const HILL_VALLEY_TIE_EPS: f64 = 1e-12;

/// Most interior points a single hill-valley test may evaluate.
const MAX_TEST_POINTS: usize = 5;

/// Configuration of one descriptor-subspace run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HveaConfig {
    /// Quality-window width: the archive keeps only candidates with value
    /// within `window` of its minimum.
    pub window: f64,
    /// Expected niche count used to slice the evaluation budget; each new
    /// niche's local search receives `budget / niche_cap` evaluations
    /// (remainder spread round-robin).
    pub niche_cap: usize,
    pub seed: u64,
    /// Template for the per-niche local searches; its `bounds`, `budget`,
    /// and `seed` are replaced for every niche (see [`EsConfig::for_niche`]),
    /// the step size and tolerances carry through.
    pub es: EsConfig,
}

impl HveaConfig {
    /// Defaults: quality window `w = 0.5`, budget sliced for 16 niches,
    /// stock local-search settings.
    pub fn new(seed: u64) -> HveaConfig {
        HveaConfig { window: 0.5, niche_cap: 16, seed, es: EsConfig::template() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0) {
            return Err(Error::InvalidArgument("quality window must be positive".into()));
        }
        if self.niche_cap == 0 {
            return Err(Error::InvalidArgument("niche cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// One archived candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub design: LensDesign,
    pub value: f64,
}

/// Candidates of one descriptor, sorted ascending by value, with every entry
/// within `window` of the minimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NicheArchive {
    pub descriptor: Descriptor,
    pub window: f64,
    entries: Vec<ArchiveEntry>,
}

impl NicheArchive {
    pub fn new(descriptor: Descriptor, window: f64) -> NicheArchive {
        NicheArchive { descriptor, window, entries: Vec::new() }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest archived value, if any.
    pub fn min_value(&self) -> Option<f64> {
        self.entries.first().map(|e| e.value)
    }

    /// Largest archived value, if any.
    pub fn max_value(&self) -> Option<f64> {
        self.entries.last().map(|e| e.value)
    }
}

/// Insert a candidate into the archive under the quality-window rule.
///
/// A candidate worse than `min + window` is rejected (returns `false`);
/// otherwise it is inserted in sorted position and every entry worse than the
/// new `min + window` is evicted. The candidate's design must carry the
/// archive's descriptor.
pub fn archive_insert(
    archive: &mut NicheArchive,
    design: LensDesign,
    value: f64,
) -> Result<bool> {
    let actual = describe(&design);
    if actual != archive.descriptor {
        return Err(Error::DescriptorMismatch {
            expected: archive.descriptor.serialize(),
            actual: actual.serialize(),
        });
    }
    if value.is_nan() {
        return Err(Error::InvalidArgument("archive values must not be NaN".into()));
    }
    if let Some(min) = archive.min_value() {
        if value > min + archive.window {
            return Ok(false);
        }
    }
    let pos = archive.entries.partition_point(|e| e.value <= value);
    archive.entries.insert(pos, ArchiveEntry { design, value });
    let cutoff = archive.entries[0].value + archive.window;
    archive.entries.retain(|e| !(e.value > cutoff));
    Ok(true)
}

/// Decide whether `a` and `b` lie in the same basin by evaluating `n_test`
/// equally spaced interior points of the segment between them: they do iff no
/// tested value exceeds `max(f_a, f_b)` (plus a relative tie tolerance).
///
/// Stops at the first point that exceeds the threshold, so it evaluates *up
/// to* `n_test` points; identical endpoints cost nothing.
pub fn hill_valley_test<F: FnMut(&[f64]) -> Result<f64>>(
    a: &[f64],
    b: &[f64],
    f_a: f64,
    f_b: f64,
    n_test: usize,
    mut evaluator: F,
) -> Result<bool> {
    if a == b {
        return Ok(true);
    }
    let hi = f_a.max(f_b);
    let threshold = hi + HILL_VALLEY_TIE_EPS * hi.abs().max(1.0);
    let mut point = vec![0.0; a.len()];
    for k in 1..=n_test {
        let t = k as f64 / (n_test + 1) as f64;
        for (p, (&ai, &bi)) in point.iter_mut().zip(a.iter().zip(b)) {
            *p = ai + t * (bi - ai);
        }
        if evaluator(&point)? > threshold {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Best point of one discovered basin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NichePoint {
    /// Continuous parameters in the design's layout order.
    pub point: Vec<f64>,
    pub value: f64,
    /// How the basin's local search stopped; `None` when it could not run
    /// (no budget left, or the seed region evaluates to infinity).
    pub stop: Option<StopReason>,
}

/// Outcome of one descriptor-subspace run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HveaResult {
    /// All accepted candidates across niches.
    pub archive: NicheArchive,
    /// The archive minimum (infinite only if nothing was archived).
    pub best_value: f64,
    pub evaluations: usize,
    pub niche_count: usize,
    /// One representative per discovered basin, in discovery order.
    pub niches: Vec<NichePoint>,
}

/// Objective wrapper counting every evaluation against the shared budget and
/// stashing the first error when callers need plain values.
struct Counted<'a, F> {
    inner: &'a mut F,
    used: usize,
    stashed: Option<Error>,
}

impl<F: FnMut(&[f64]) -> Result<f64>> Counted<'_, F> {
    fn call(&mut self, x: &[f64]) -> Result<f64> {
        self.used += 1;
        (self.inner)(x)
    }

    /// Infinity-on-error variant for callers that cannot propagate.
    fn call_or_inf(&mut self, x: &[f64]) -> f64 {
        match self.call(x) {
            Ok(v) => v,
            Err(e) => {
                if self.stashed.is_none() {
                    self.stashed = Some(e);
                }
                f64::INFINITY
            }
        }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn box_diagonal(bounds: &[(f64, f64)]) -> f64 {
    bounds.iter().map(|&(lo, hi)| (hi - lo) * (hi - lo)).sum::<f64>().sqrt()
}

/// Mean pairwise distance between niche representatives; the box diagonal
/// until two niches exist.
fn mean_niche_spacing(niches: &[NichePoint], bounds: &[(f64, f64)]) -> f64 {
    if niches.len() < 2 {
        return box_diagonal(bounds).max(f64::MIN_POSITIVE);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..niches.len() {
        for j in i + 1..niches.len() {
            total += euclid(&niches[i].point, &niches[j].point);
            count += 1;
        }
    }
    (total / count as f64).max(f64::MIN_POSITIVE)
}

/// Interior points to test between a candidate and a niche at `distance`:
/// more for candidates far away relative to the current niche spacing.
fn test_schedule(distance: f64, spacing: f64) -> usize {
    let extra = (distance / spacing).floor();
    let extra = if extra.is_finite() && extra >= 0.0 { extra as usize } else { 0 };
    MAX_TEST_POINTS.min(1 + extra)
}

/// Explore one descriptor's subspace under an evaluation budget.
///
/// Repeats until the budget is exhausted: draw a uniform point in the box,
/// test it against each existing niche's best point (nearest first), and when
/// it belongs to none, open a new niche there and refine it with a budget
/// slice of [`cmsa_es_run`]; the refined candidate goes into the shared
/// archive. A sample that joins a niche and improves on its best replaces
/// the niche's representative and is archived too. Every objective call —
/// samples, hill-valley tests, local search — counts against `budget`.
///
/// The objective receives continuous parameters in `template.param_layout()`
/// order; `bounds` must match that layout (one box per parameter). The
/// template's materials are replaced by the descriptor's, and archived
/// designs are the template resolved at each niche's best point.
pub fn hvea_run<F: FnMut(&[f64]) -> Result<f64>>(
    mut objective: F,
    descriptor: &Descriptor,
    template: &LensDesign,
    bounds: &[(f64, f64)],
    budget: usize,
    cfg: &HveaConfig,
) -> Result<HveaResult> {
    cfg.validate()?;
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    let template = template.with_materials(&descriptor.materials)?;
    let layout_len = template.param_layout().len();
    if bounds.len() != layout_len {
        return Err(Error::InvalidArgument(format!(
            "{} bounds for a design with {} continuous parameters",
            bounds.len(),
            layout_len
        )));
    }
    if bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite()) || lo > hi) {
        return Err(Error::InvalidArgument("bounds must be finite with lo <= hi".into()));
    }

    let mut counted = Counted { inner: &mut objective, used: 0, stashed: None };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0]));
    let mut niches: Vec<NichePoint> = Vec::new();
    let mut archive = NicheArchive::new(descriptor.clone(), cfg.window);

    let base_slice = budget / cfg.niche_cap;
    let slice_remainder = budget % cfg.niche_cap;

    while counted.used < budget {
        // Explore: one uniform sample.
        let x: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
        let fx = counted.call(&x)?;

        // Cluster: does the sample belong to a known basin? Nearest first.
        let spacing = mean_niche_spacing(&niches, bounds);
        let mut order: Vec<(f64, usize)> = niches
            .iter()
            .enumerate()
            .map(|(i, np)| (euclid(&x, &np.point), i))
            .collect();
        order.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let mut member: Option<usize> = None;
        let mut out_of_budget = false;
        for &(distance, ni) in &order {
            let n_test = test_schedule(distance, spacing);
            if counted.used + n_test > budget {
                // Not enough budget left to decide membership.
                out_of_budget = true;
                break;
            }
            let niche = &niches[ni];
            if hill_valley_test(&x, &niche.point, fx, niche.value, n_test, |p| {
                counted.call(p)
            })? {
                member = Some(ni);
                break;
            }
        }
        if out_of_budget {
            break;
        }
        if let Some(ni) = member {
            // A sample that improves on its basin's best becomes the basin's
            // representative and is offered to the archive, so the run's best
            // reflects the best point seen even before any local search.
            if fx < niches[ni].value {
                archive_insert(&mut archive, template.with_continuous_params(&x)?, fx)?;
                niches[ni].point = x;
                niches[ni].value = fx;
            }
            continue;
        }

        // Exploit: new niche, refined by a slice of the budget.
        let niche_idx = niches.len();
        let slice = base_slice + usize::from(niche_idx % cfg.niche_cap < slice_remainder);
        let slice = slice.min(budget - counted.used);
        let es_cfg = cfg.es.for_niche(
            bounds.to_vec(),
            slice,
            derive_seed(cfg.seed, &[1, niche_idx as u64]),
        );
        let es_out = cmsa_es_run(|p| counted.call_or_inf(p), &es_cfg, &x);
        if let Some(err) = counted.stashed.take() {
            return Err(err);
        }
        let (point, value, stop) = match es_out {
            Ok(out) if out.best_value < fx => {
                (out.best_point, out.best_value, Some(out.reason))
            }
            Ok(out) if out.evaluations > 0 => (x, fx, Some(out.reason)),
            Ok(_) => (x, fx, None),
            // The seed region evaluates to infinity; keep the seed as the
            // basin's representative rather than abort the whole run.
            Err(_) if fx == f64::INFINITY => (x, fx, None),
            Err(e) => return Err(e),
        };

        // The local search can walk out of the seed's basin and converge
        // into an already-known one; a duplicate representative would break
        // niche distinctness and skew the spacing estimate. Re-test the
        // converged candidate and absorb it instead when it landed in an
        // existing basin.
        let mut absorbed = false;
        let mut dedup_order: Vec<(f64, usize)> = niches
            .iter()
            .enumerate()
            .map(|(i, np)| (euclid(&point, &np.point), i))
            .collect();
        dedup_order.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        for &(distance, ni) in &dedup_order {
            let n_test = test_schedule(distance, spacing);
            if counted.used + n_test > budget {
                break;
            }
            let niche = &niches[ni];
            if hill_valley_test(&point, &niche.point, value, niche.value, n_test, |p| {
                counted.call(p)
            })? {
                if value < niches[ni].value {
                    archive_insert(&mut archive, template.with_continuous_params(&point)?, value)?;
                    niches[ni].point = point.clone();
                    niches[ni].value = value;
                    niches[ni].stop = stop;
                }
                absorbed = true;
                break;
            }
        }
        if absorbed {
            continue;
        }

        let design = template.with_continuous_params(&point)?;
        archive_insert(&mut archive, design, value)?;
        niches.push(NichePoint { point, value, stop });
    }

    Ok(HveaResult {
        best_value: archive.min_value().unwrap_or(f64::INFINITY),
        evaluations: counted.used,
        niche_count: niches.len(),
        niches,
        archive,
    })
}
