//! Two-stage descriptor-learning loop over lens topologies.
//!
//! The search space factors into a discrete outer level — a descriptor
//! assigning each optimizable curvature a sign and each element a glass —
//! and, per descriptor, a continuous box searched by [`hvea_run`]. An
//! estimation-of-distribution loop learns which descriptors contain good
//! designs: each iteration samples `lambda` descriptors from a factorized
//! distribution, scores each one by the best merit value its budgeted
//! subspace search reaches, selects the `mu` best, and moves the
//! distribution toward their empirical marginals. Every subspace archive is
//! merged into a global pool keyed by descriptor, so a run ends with a
//! portfolio of distinct topologies rather than a single design.
//!
//! The ablated variant keeps the distribution uniform — no update, and the
//! distribution-convergence stop is disabled because the distribution never
//! moves. It is the control arm for measuring what descriptor learning adds.
//!
//! Stage-1 slots run concurrently up to a thread cap; each slot derives its
//! own seed from (master seed, iteration, slot index), so results are
//! independent of scheduling and a run is reproducible from (seed, config)
//! alone (wall-clock fields aside).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descriptor::{describe, subspace_bounds, Descriptor, DescriptorDistribution};
use crate::error::{Error, Result};
use crate::evostrat::{
    cma_es_baseline_run_streamed, derive_seed, BaselineConfig, BaselinePoint, EsConfig,
};
use crate::glass::Catalog;
use crate::hvea::{archive_insert, hvea_run, ArchiveEntry, HveaConfig, HveaResult, NicheArchive};
use crate::merit::{objective, MeritConfig};
use crate::optics::{LensDesign, ParamKind};
use crate::preset::LensPreset;

/// Configuration of one outer-loop run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Descriptors sampled per iteration.
    pub lambda: usize,
    /// Descriptors selected for the distribution update.
    pub mu: usize,
    /// Learning rate of the distribution update.
    pub alpha: f64,
    /// Quality-window width of every niche archive.
    pub window: f64,
    /// Outer-iteration cap.
    pub iterations: usize,
    /// Objective-evaluation budget of each descriptor's subspace search.
    pub hvea_budget: usize,
    /// Iterations without improvement before the run stalls out.
    pub stagnation_window: usize,
    /// Smallest best-value improvement that still counts as progress.
    pub stagnation_tol: f64,
    /// Distribution-convergence stop: halt when the divergence between
    /// consecutive distributions falls below this (0 disables).
    pub kl_threshold: f64,
    /// Uniform descriptor sampling with no distribution update.
    pub ablated: bool,
    pub seed: u64,
    /// Most Stage-1 slots evaluated concurrently; 0 picks the default.
    pub threads: usize,
    pub preset: LensPreset,
    pub merit: MeritConfig,
    /// Template for the per-niche local searches inside every slot.
    pub es: EsConfig,
    pub catalog_path: PathBuf,
}

impl RunConfig {
    /// Stock settings: 50 descriptors per iteration, top 5 selected, full
    /// learning rate, window 0.5, 15 iterations, 1e5 evaluations per
    /// descriptor; merit settings derived from the preset.
    pub fn new(preset: LensPreset, catalog_path: PathBuf, seed: u64) -> RunConfig {
        let merit = MeritConfig::for_preset(&preset);
        RunConfig {
            lambda: 50,
            mu: 5,
            alpha: 1.0,
            window: 0.5,
            iterations: 15,
            hvea_budget: 100_000,
            stagnation_window: 5,
            stagnation_tol: 1e-6,
            kl_threshold: 1e-4,
            ablated: false,
            seed,
            threads: 0,
            preset,
            merit,
            es: EsConfig::template(),
            catalog_path,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda == 0 {
            return Err(Error::InvalidArgument("lambda must be at least 1".into()));
        }
        if self.mu == 0 || self.mu > self.lambda {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= mu <= lambda, got mu={} lambda={}",
                self.mu, self.lambda
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument("alpha must be in (0, 1]".into()));
        }
        if !(self.window > 0.0) {
            return Err(Error::InvalidArgument("quality window must be positive".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("need at least 1 iteration".into()));
        }
        if self.hvea_budget == 0 {
            return Err(Error::InvalidArgument("per-descriptor budget must be positive".into()));
        }
        if self.stagnation_window == 0 {
            return Err(Error::InvalidArgument("stagnation window must be at least 1".into()));
        }
        if !(self.stagnation_tol >= 0.0 && self.stagnation_tol.is_finite()) {
            return Err(Error::InvalidArgument("stagnation tolerance must be finite and >= 0".into()));
        }
        if !(self.kl_threshold >= 0.0 && self.kl_threshold.is_finite()) {
            return Err(Error::InvalidArgument("divergence threshold must be finite and >= 0".into()));
        }
        self.merit.validate()?;
        self.es.validate()?;
        Ok(())
    }
}

/// Why a run stopped, first criterion to fire wins; within one iteration the
/// cap is checked before stagnation, stagnation before distribution
/// convergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    /// The outer-iteration cap was reached.
    IterationCap,
    /// The best value improved by less than the tolerance across the
    /// stagnation window.
    Stagnation,
    /// Consecutive descriptor distributions diverged by less than the
    /// threshold.
    DistributionConverged,
}

/// One Stage-1 slot: the descriptor it evaluated, the subspace-search
/// outcome, and the failure note when the slot errored (an errored slot
/// reports an empty archive and an infinite best value instead of aborting
/// the batch).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub descriptor: Descriptor,
    pub result: HveaResult,
    pub error: Option<String>,
}

/// Everything one iteration did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    /// The `lambda` sampled descriptors, in slot order.
    pub sampled: Vec<Descriptor>,
    /// Best value of each slot's subspace search, parallel to `sampled`.
    pub values: Vec<f64>,
    /// Failure notes of errored slots, as (slot index, message).
    pub slot_errors: Vec<(usize, String)>,
    /// The `mu` descriptors selected for the update.
    pub selected: Vec<Descriptor>,
    /// Distribution after this iteration's update (the sampling distribution
    /// of the next iteration).
    pub distribution: DescriptorDistribution,
    /// Divergence of the updated distribution from its predecessor; absent
    /// in ablated runs, which never update.
    pub kl_to_previous: Option<f64>,
    /// Objective evaluations spent by this iteration's slots.
    pub evaluations: usize,
    /// Wall-clock seconds; telemetry only, not reproducible from the seed.
    pub wall_time_s: f64,
    /// Descriptors whose fresh results were merged into an archive already
    /// in the global pool (resampled descriptors).
    pub merges: Vec<Descriptor>,
}

/// Outcome of a full run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub generations: Vec<GenerationRecord>,
    /// Global candidate pool: one archive per distinct descriptor, sorted by
    /// descriptor serialization; only finite-valued candidates are kept.
    pub archives: Vec<NicheArchive>,
    /// Number of distinct descriptors holding at least one candidate.
    pub distinct_descriptors: usize,
    /// Total candidates across all archives.
    pub candidates: usize,
    /// The best candidate over the whole pool, if any slot produced a finite
    /// design.
    pub best: Option<ArchiveEntry>,
    pub total_evaluations: usize,
    pub reason: TerminationReason,
}

/// The production slot evaluation: resolve the preset template to the
/// descriptor's materials, bound the continuous box by the descriptor's
/// signs, and search it with [`hvea_run`] under the configured budget. Merit
/// evaluation failures inside the box (dead ray bundles, afocal systems)
/// count as infinitely bad points rather than errors, so a slot only errors
/// on structural problems.
pub fn merit_slot_evaluator<'a>(
    cfg: &'a RunConfig,
    catalog: &'a Catalog,
) -> impl Fn(&Descriptor, u64) -> Result<HveaResult> + Sync + 'a {
    move |descriptor: &Descriptor, seed: u64| -> Result<HveaResult> {
        let template = cfg.preset.design();
        let bounds = subspace_bounds(descriptor, &template, &cfg.merit)?;
        let resolved = template.with_materials(&descriptor.materials)?;
        let objective = |x: &[f64]| -> Result<f64> {
            let design = resolved.with_continuous_params(x)?;
            match crate::merit::objective(&design, catalog, &cfg.merit) {
                Ok(breakdown) => Ok(breakdown.total),
                Err(_) => Ok(f64::INFINITY),
            }
        };
        let mut hv = HveaConfig::new(seed);
        hv.window = cfg.window;
        hv.es = cfg.es.clone();
        hvea_run(objective, descriptor, &template, &bounds, cfg.hvea_budget, &hv)
    }
}

/// Evaluate one iteration's descriptors with an injected slot evaluator.
///
/// Results come back in input order regardless of completion order. Slot `i`
/// of iteration `t` is seeded with a hash of (master seed, t, i), so the
/// outcome does not depend on the thread cap or scheduling, and duplicate
/// descriptors in one batch get independent searches. A slot that errors
/// yields an infinite best value and a failure note; it never aborts the
/// batch.
pub fn stage1_evaluate_with<E>(
    descriptors: &[Descriptor],
    cfg: &RunConfig,
    t: u64,
    eval: &E,
) -> Result<Vec<SlotOutcome>>
where
    E: Fn(&Descriptor, u64) -> Result<HveaResult> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        descriptors
            .par_iter()
            .enumerate()
            .map(|(i, descriptor)| {
                let seed = derive_seed(cfg.seed, &[t, i as u64]);
                match eval(descriptor, seed) {
                    Ok(result) => {
                        SlotOutcome { descriptor: descriptor.clone(), result, error: None }
                    }
                    Err(e) => SlotOutcome {
                        descriptor: descriptor.clone(),
                        result: HveaResult {
                            archive: NicheArchive::new(descriptor.clone(), cfg.window),
                            best_value: f64::INFINITY,
                            evaluations: 0,
                            niche_count: 0,
                            niches: Vec::new(),
                        },
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    }))
}

/// [`stage1_evaluate_with`] wired to the production merit evaluator.
pub fn stage1_evaluate(
    descriptors: &[Descriptor],
    cfg: &RunConfig,
    catalog: &Catalog,
    t: u64,
) -> Result<Vec<SlotOutcome>> {
    stage1_evaluate_with(descriptors, cfg, t, &merit_slot_evaluator(cfg, catalog))
}

/// The `mu` descriptors with the smallest values; ties broken by the
/// (value, descriptor serialization) lexicographic order so selection is
/// deterministic.
pub fn select_top(records: &[(Descriptor, f64)], mu: usize) -> Result<Vec<Descriptor>> {
    if mu > records.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot select {mu} of {} records",
            records.len()
        )));
    }
    let mut order: Vec<(f64, String, usize)> = records
        .iter()
        .enumerate()
        .map(|(i, (d, f))| (*f, d.serialize(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    Ok(order[..mu].iter().map(|&(_, _, i)| records[i].0.clone()).collect())
}

/// Run the outer loop with an injected slot evaluator.
///
/// `catalog_size` sizes the material marginals of the sampling distribution.
/// Each iteration: sample `lambda` descriptors (first sign forced positive
/// when the preset demands it), evaluate every slot, merge the finite
/// candidates of each slot archive into the global pool (noting merges into
/// pre-existing archives), select the top `mu`, and — unless ablated —
/// update the distribution. Stops at the first of: iteration cap, best-value
/// improvement across the stagnation window below tolerance, or (non-ablated
/// only) distribution divergence below threshold.
pub fn ldgea_run_with<E>(cfg: &RunConfig, catalog_size: usize, eval: E) -> Result<RunResult>
where
    E: Fn(&Descriptor, u64) -> Result<HveaResult> + Sync,
{
    ldgea_run_observed(cfg, catalog_size, eval, |_| Ok(()))
}

/// [`ldgea_run_with`] plus a per-generation observer, called with each
/// completed [`GenerationRecord`] before the next iteration starts. Lets a
/// front-end stream the generation log to disk as the run progresses; an
/// observer error aborts the run.
pub fn ldgea_run_observed<E, O>(
    cfg: &RunConfig,
    catalog_size: usize,
    eval: E,
    mut on_generation: O,
) -> Result<RunResult>
where
    E: Fn(&Descriptor, u64) -> Result<HveaResult> + Sync,
    O: FnMut(&GenerationRecord) -> Result<()>,
{
    cfg.validate()?;
    if catalog_size == 0 {
        return Err(Error::InvalidArgument("catalog is empty".into()));
    }
    let n_signs = cfg.preset.n_variable_curvatures();
    let n_elements = cfg.preset.n_elements();
    let mut dist = DescriptorDistribution::uniform(n_signs, n_elements, catalog_size, cfg.alpha);

    let mut generations: Vec<GenerationRecord> = Vec::new();
    let mut global: BTreeMap<String, NicheArchive> = BTreeMap::new();
    let mut best_history: Vec<f64> = Vec::new();
    let mut best_so_far = f64::INFINITY;
    let mut total_evaluations = 0usize;
    let mut reason: Option<TerminationReason> = None;

    for t in 1..=cfg.iterations {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[t as u64, u64::MAX]));
        let sampled = dist.sample_batch(&mut rng, cfg.lambda, cfg.preset.first_curvature_positive);
        let outcomes = stage1_evaluate_with(&sampled, cfg, t as u64, &eval)?;

        let mut merges: Vec<Descriptor> = Vec::new();
        for outcome in &outcomes {
            let finite: Vec<&ArchiveEntry> = outcome
                .result
                .archive
                .entries()
                .iter()
                .filter(|e| e.value.is_finite())
                .collect();
            if finite.is_empty() {
                continue;
            }
            let key = outcome.descriptor.serialize();
            if let Some(existing) = global.get_mut(&key) {
                merges.push(outcome.descriptor.clone());
                for entry in finite {
                    archive_insert(existing, entry.design.clone(), entry.value)?;
                }
            } else {
                let mut fresh = NicheArchive::new(outcome.descriptor.clone(), cfg.window);
                for entry in finite {
                    archive_insert(&mut fresh, entry.design.clone(), entry.value)?;
                }
                global.insert(key, fresh);
            }
        }

        let records: Vec<(Descriptor, f64)> = outcomes
            .iter()
            .map(|o| (o.descriptor.clone(), o.result.best_value))
            .collect();
        let selected = select_top(&records, cfg.mu)?;
        let slot_errors: Vec<(usize, String)> = outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.error.clone().map(|e| (i, e)))
            .collect();
        let evaluations: usize = outcomes.iter().map(|o| o.result.evaluations).sum();
        total_evaluations += evaluations;
        let generation_best =
            records.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        best_so_far = best_so_far.min(generation_best);
        best_history.push(best_so_far);

        let (next_dist, kl) = if cfg.ablated {
            (dist.clone(), None)
        } else {
            let next = dist.update(&selected, cfg.alpha)?;
            let kl = next.kl_divergence(&dist);
            (next, Some(kl))
        };

        generations.push(GenerationRecord {
            iteration: t,
            sampled,
            values: records.iter().map(|r| r.1).collect(),
            slot_errors,
            selected,
            distribution: next_dist.clone(),
            kl_to_previous: kl,
            evaluations,
            wall_time_s: started.elapsed().as_secs_f64(),
            merges,
        });
        on_generation(generations.last().unwrap())?;
        dist = next_dist;

        if t == cfg.iterations {
            reason = Some(TerminationReason::IterationCap);
            break;
        }
        if t >= cfg.stagnation_window {
            let improvement = best_history[t - cfg.stagnation_window] - best_history[t - 1];
            if improvement < cfg.stagnation_tol {
                reason = Some(TerminationReason::Stagnation);
                break;
            }
        }
        if let Some(kl) = kl {
            if kl < cfg.kl_threshold {
                reason = Some(TerminationReason::DistributionConverged);
                break;
            }
        }
    }

    let archives: Vec<NicheArchive> = global.into_values().collect();
    let distinct_descriptors = archives.len();
    let candidates = archives.iter().map(|a| a.len()).sum();
    let best = archives
        .iter()
        .filter_map(|a| a.entries().first())
        .min_by(|x, y| x.value.total_cmp(&y.value))
        .cloned();

    Ok(RunResult {
        generations,
        archives,
        distinct_descriptors,
        candidates,
        best,
        total_evaluations,
        reason: reason.unwrap_or(TerminationReason::IterationCap),
    })
}

/// Run the outer loop end to end: load the glass catalog from the configured
/// path, validate the preset against it, and optimize with the production
/// merit evaluator. Load or validation failures abort before the first
/// iteration, with no evaluations spent.
pub fn ldgea_run(cfg: &RunConfig) -> Result<RunResult> {
    ldgea_run_streamed(cfg, |_| Ok(()))
}

/// [`ldgea_run`] plus a per-generation observer (see [`ldgea_run_observed`]).
pub fn ldgea_run_streamed<O>(cfg: &RunConfig, on_generation: O) -> Result<RunResult>
where
    O: FnMut(&GenerationRecord) -> Result<()>,
{
    cfg.validate()?;
    let catalog = Catalog::load(&cfg.catalog_path)?;
    cfg.preset.validate(&catalog)?;
    ldgea_run_observed(cfg, catalog.len(), merit_slot_evaluator(cfg, &catalog), on_generation)
}

// ---------------------------------------------------------------------------
// Full-parameter comparison baseline

/// Equal-budget rule for the comparison arm: the baseline may spend exactly
/// what the descriptor-guided run may spend — `lambda · hvea_budget ·
/// iterations` objective evaluations.
pub fn equal_budget(cfg: &RunConfig) -> usize {
    cfg.lambda * cfg.hvea_budget * cfg.iterations
}

/// Baseline knobs with no outer-loop counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSettings {
    /// Evaluation budget; `None` applies [`equal_budget`].
    pub budget: Option<usize>,
    /// Initial step size, as a fraction of each box width.
    pub sigma0: f64,
    /// Sampling-variance floor of the glass coordinates, in index units.
    pub min_integer_std: f64,
    /// Population override; `None` keeps the dimension-based default.
    pub lambda: Option<usize>,
}

impl Default for BaselineSettings {
    fn default() -> BaselineSettings {
        BaselineSettings { budget: None, sigma0: 0.3, min_integer_std: 0.2, lambda: None }
    }
}

/// Mixed-integer search box over a template's full parameter vector: the
/// continuous layout first — curvatures sign-free within the manufacturing
/// bound (the leading one restricted non-negative when the preset pins it
/// positive), variable gaps within their bounds — then one glass index per
/// element. The boolean mask marks the glass coordinates.
pub fn baseline_problem(
    preset: &LensPreset,
    merit: &MeritConfig,
    catalog_size: usize,
) -> Result<(Vec<(f64, f64)>, Vec<bool>)> {
    if catalog_size == 0 {
        return Err(Error::InvalidArgument("catalog is empty".into()));
    }
    let design = preset.design();
    let layout = design.param_layout();
    let mut bounds: Vec<(f64, f64)> = Vec::with_capacity(layout.len() + preset.n_elements());
    let mut leading_curvature = true;
    for kind in &layout.kinds {
        match *kind {
            ParamKind::Curvature(_) => {
                let lo = if leading_curvature && merit.first_curvature_positive {
                    0.0
                } else {
                    -merit.max_curvature
                };
                leading_curvature = false;
                bounds.push((lo, merit.max_curvature));
            }
            ParamKind::Thickness(i) => bounds.push(design.surfaces[i].thickness_bounds),
            ParamKind::ImageDistance => {
                return Err(Error::InvalidArgument(
                    "the baseline searches templates with a solved image distance".into(),
                ))
            }
        }
    }
    let n_continuous = bounds.len();
    bounds.extend(std::iter::repeat((0.0, (catalog_size - 1) as f64)).take(preset.n_elements()));
    let mask = (0..bounds.len()).map(|j| j >= n_continuous).collect();
    Ok((bounds, mask))
}

/// Merit total over a mixed baseline vector (continuous block then glass
/// indices); any evaluation failure scores `+∞`, the same penalty semantics
/// as a failed descriptor slot.
pub fn baseline_lens_objective<'a>(
    preset: &'a LensPreset,
    catalog: &'a Catalog,
    merit: &'a MeritConfig,
) -> impl FnMut(&[f64]) -> f64 + 'a {
    let n_continuous = preset.continuous_dim();
    move |x: &[f64]| {
        let materials: Vec<usize> =
            x[n_continuous..].iter().map(|v| v.round().max(0.0) as usize).collect();
        match preset
            .build_design(&x[..n_continuous], &materials)
            .and_then(|d| objective(&d, catalog, merit))
        {
            Ok(b) => b.total,
            Err(_) => f64::INFINITY,
        }
    }
}

/// A converged baseline point mapped back to lens form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineCandidate {
    pub point: BaselinePoint,
    pub design: LensDesign,
    pub descriptor: Descriptor,
}

/// What a baseline run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    /// Budget granted (and consumed exactly).
    pub budget: usize,
    /// One candidate per restart, in restart order.
    pub candidates: Vec<BaselineCandidate>,
    /// Distinct descriptors among the finite-valued candidates — infinite
    /// "candidates" are not lenses and do not count toward diversity.
    pub distinct_descriptors: usize,
    /// Smallest candidate value, if any is finite.
    pub best_value: Option<f64>,
}

fn candidate_from_point(preset: &LensPreset, point: &BaselinePoint) -> Result<BaselineCandidate> {
    let n_continuous = preset.continuous_dim();
    let materials: Vec<usize> =
        point.x[n_continuous..].iter().map(|v| v.round().max(0.0) as usize).collect();
    let design = preset.build_design(&point.x[..n_continuous], &materials)?;
    let descriptor = describe(&design);
    Ok(BaselineCandidate { point: point.clone(), design, descriptor })
}

/// Run the comparison baseline end to end: load the catalog, build the
/// full-parameter mixed-integer problem, and spend the budget (equal-budget
/// rule unless overridden) on restart CMA-ES. Each restart's best point is
/// mapped back to a design and its descriptor.
pub fn baseline_lens_run(cfg: &RunConfig, settings: &BaselineSettings) -> Result<BaselineOutcome> {
    baseline_lens_run_streamed(cfg, settings, |_| Ok(()))
}

/// [`baseline_lens_run`] plus a per-candidate sink, called as each restart
/// converges, so a front-end can flush partial results; a sink error aborts
/// the remaining restarts.
pub fn baseline_lens_run_streamed<S>(
    cfg: &RunConfig,
    settings: &BaselineSettings,
    mut sink: S,
) -> Result<BaselineOutcome>
where
    S: FnMut(&BaselineCandidate) -> Result<()>,
{
    cfg.validate()?;
    let catalog = Catalog::load(&cfg.catalog_path)?;
    cfg.preset.validate(&catalog)?;
    let budget = settings.budget.unwrap_or_else(|| equal_budget(cfg));
    let (bounds, mask) = baseline_problem(&cfg.preset, &cfg.merit, catalog.len())?;
    let mut es_cfg = BaselineConfig::new(bounds, mask, catalog.len(), budget, cfg.seed);
    es_cfg.sigma0 = settings.sigma0;
    es_cfg.min_integer_std = settings.min_integer_std;
    es_cfg.lambda = settings.lambda;

    let mut candidates: Vec<BaselineCandidate> = Vec::new();
    let mut objective_fn = baseline_lens_objective(&cfg.preset, &catalog, &cfg.merit);
    cma_es_baseline_run_streamed(&mut objective_fn, &es_cfg, |point| {
        let candidate = candidate_from_point(&cfg.preset, point)?;
        let fed = sink(&candidate);
        candidates.push(candidate);
        fed
    })?;

    let distinct: std::collections::BTreeSet<String> = candidates
        .iter()
        .filter(|c| c.point.value.is_finite())
        .map(|c| c.descriptor.serialize())
        .collect();
    let best_value = candidates
        .iter()
        .map(|c| c.point.value)
        .filter(|v| v.is_finite())
        .min_by(f64::total_cmp);
    Ok(BaselineOutcome {
        budget,
        distinct_descriptors: distinct.len(),
        best_value,
        candidates,
    })
}
