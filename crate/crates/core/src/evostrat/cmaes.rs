//! Restart CMA-ES baseline over the full mixed parameter vector.
//!
//! A standard (μ/μ_w, λ) CMA-ES — cumulative step-size adaptation, rank-1
//! plus rank-μ covariance update — searches all coordinates at once. Masked
//! coordinates are integers (glass catalog indices): they are rounded to the
//! nearest index, clamped to the catalog, before every evaluation, and their
//! sampling variance is floored (`min_integer_std` in integer units) so the
//! rounding cannot freeze them once the step size shrinks below one grid
//! cell.
//!
//! When a run converges internally with budget left, the strategy restarts
//! under the BIPOP scheme: a large regime whose population doubles at each
//! large restart, and a small regime with a random small population and
//! shrunken initial step size; whichever regime has consumed less budget runs
//! next. Every converged run contributes its best point to the returned
//! archive, and the whole procedure consumes exactly the configured budget.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{denormalize, derive_seed, reflect, StopReason};
use crate::error::{Error, Result};

/// Configuration of the full baseline (all restarts included).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Search box per coordinate; integer coordinates use `(0, catalog-1)`.
    pub bounds: Vec<(f64, f64)>,
    /// True for coordinates that are glass catalog indices.
    pub integer_mask: Vec<bool>,
    /// Number of valid integer values (indices `0..catalog_size`).
    pub catalog_size: usize,
    /// Total evaluation budget across all restarts; consumed exactly.
    pub budget: usize,
    pub seed: u64,
    /// Initial step size as a fraction of each box width.
    pub sigma0: f64,
    /// Default population; `None` means `4 + ⌊3 ln n⌋`.
    pub lambda: Option<usize>,
    /// Variance floor for integer coordinates, in integer units.
    pub min_integer_std: f64,
}

impl BaselineConfig {
    pub fn new(
        bounds: Vec<(f64, f64)>,
        integer_mask: Vec<bool>,
        catalog_size: usize,
        budget: usize,
        seed: u64,
    ) -> BaselineConfig {
        BaselineConfig {
            bounds,
            integer_mask,
            catalog_size,
            budget,
            seed,
            sigma0: 0.3,
            lambda: None,
            min_integer_std: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != self.integer_mask.len() {
            return Err(Error::InvalidArgument("mask length must match bounds".into()));
        }
        if self.integer_mask.iter().any(|m| *m) && self.catalog_size == 0 {
            return Err(Error::InvalidArgument("integer coordinates need a catalog".into()));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::InvalidArgument("sigma0 must be positive".into()));
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite()) || lo > hi) {
            return Err(Error::InvalidArgument("bounds must be finite with lo <= hi".into()));
        }
        Ok(())
    }

    fn default_lambda(&self) -> usize {
        self.lambda
            .unwrap_or(4 + (3.0 * (self.bounds.len().max(1) as f64).ln()).floor() as usize)
    }
}

/// BIPOP restart regime.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Large,
    Small,
}

/// One converged (or budget-cut) run's best point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselinePoint {
    /// Mixed vector in original units, integer coordinates already rounded.
    pub x: Vec<f64>,
    pub value: f64,
    pub run_index: usize,
    pub regime: Regime,
    pub lambda: usize,
    pub reason: StopReason,
    pub evaluations: usize,
}

/// Round masked coordinates to the nearest integer (half away from zero) and
/// clamp into `[0, catalog_size - 1]`; continuous coordinates pass through.
pub fn round_integer_coordinates(x: &[f64], mask: &[bool], catalog_size: usize) -> Vec<f64> {
    let top = (catalog_size.max(1) - 1) as f64;
    x.iter()
        .zip(mask)
        .map(|(&v, &is_int)| if is_int { v.round().clamp(0.0, top) } else { v })
        .collect()
}

struct EigPair {
    sqrt_c: DMatrix<f64>,
    inv_sqrt_c: DMatrix<f64>,
    max_eig: f64,
    min_eig: f64,
    diag_std: DVector<f64>,
}

fn decompose(c: &DMatrix<f64>) -> EigPair {
    let n = c.nrows();
    let eig = SymmetricEigen::new(c.clone());
    let clamped = eig.eigenvalues.map(|v| v.max(1e-30));
    let sqrt_vals = clamped.map(f64::sqrt);
    let inv_vals = sqrt_vals.map(|v| 1.0 / v);
    let sqrt_c = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    let inv_sqrt_c =
        &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    EigPair {
        sqrt_c,
        inv_sqrt_c,
        max_eig: clamped.max(),
        min_eig: clamped.min(),
        diag_std: DVector::from_fn(n, |j, _| c[(j, j)].max(0.0).sqrt()),
    }
}

struct RunOutcome {
    best_x_norm: DVector<f64>,
    best_value: f64,
    evaluations: usize,
    reason: StopReason,
}

/// One CMA-ES run in unit-box coordinates, at most `run_budget` evaluations.
fn single_run<F: FnMut(&[f64]) -> f64>(
    objective: &mut F,
    cfg: &BaselineConfig,
    lambda: usize,
    sigma0: f64,
    run_budget: usize,
    seed: u64,
) -> RunOutcome {
    let n = cfg.bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mu = (lambda / 2).max(1);
    let mut weights: Vec<f64> =
        (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let nf = n as f64;
    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c_1 = 2.0 / ((nf + 1.3) * (nf + 1.3) + mu_eff);
    let c_mu = (2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0) * (nf + 2.0) + mu_eff))
        .min(1.0 - c_1);
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
    let hist_window = 10 + (30.0 * nf / lambda as f64).ceil() as usize;

    // Variance floor for integer coordinates, in unit-box units.
    let int_floor: Vec<f64> = cfg
        .bounds
        .iter()
        .zip(&cfg.integer_mask)
        .map(|(&(lo, hi), &is_int)| {
            if is_int && hi > lo {
                cfg.min_integer_std / (hi - lo)
            } else {
                0.0
            }
        })
        .collect();

    let mut mean = DVector::from_fn(n, |_, _| rng.gen::<f64>());
    let mut sigma = sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut p_sigma = DVector::<f64>::zeros(n);
    let mut p_c = DVector::<f64>::zeros(n);

    let mut evals = 0usize;
    let mut best_value = f64::INFINITY;
    let mut best_x_norm = mean.clone();
    let mut hist: Vec<f64> = Vec::new();
    let mut gen_index = 0usize;

    let reason = loop {
        if evals >= run_budget {
            break StopReason::Budget;
        }
        let gen_size = lambda.min(run_budget - evals);
        let eig = decompose(&cov);

        let mut offspring: Vec<(f64, DVector<f64>)> = Vec::with_capacity(gen_size);
        for _ in 0..gen_size {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut y = &eig.sqrt_c * z;
            for j in 0..n {
                if int_floor[j] > 0.0 && sigma * eig.diag_std[j] < int_floor[j] {
                    y[j] += int_floor[j] / sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let mut x = &mean + &y * sigma;
            for j in 0..n {
                x[j] = reflect(x[j], 0.0, 1.0);
            }
            let raw = denormalize(x.as_slice(), &cfg.bounds);
            let f = objective(&round_integer_coordinates(&raw, &cfg.integer_mask, cfg.catalog_size));
            evals += 1;
            if f < best_value {
                best_value = f;
                best_x_norm = x.clone();
            }
            offspring.push((f, x));
        }
        if gen_size < lambda {
            // Truncated final generation: evaluations counted, no adaptation.
            break StopReason::Budget;
        }
        offspring
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let gen_min = offspring[0].0;

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, (_, x)) in weights.iter().zip(&offspring) {
            y_w += (x - &mean) * (*w / sigma);
        }
        let new_mean = &mean + &y_w * sigma;

        p_sigma = &p_sigma * (1.0 - c_sigma)
            + &eig.inv_sqrt_c * &y_w * (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt();
        sigma *= ((c_sigma / d_sigma) * (p_sigma.norm() / chi_n - 1.0)).exp();
        sigma = sigma.min(2.0);

        gen_index += 1;
        let h_sig = p_sigma.norm()
            / (1.0 - (1.0 - c_sigma).powi(2 * gen_index as i32)).sqrt()
            < (1.4 + 2.0 / (nf + 1.0)) * chi_n;
        let h = if h_sig { 1.0 } else { 0.0 };
        p_c = &p_c * (1.0 - c_c) + &y_w * (h * (c_c * (2.0 - c_c) * mu_eff).sqrt());

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, (_, x)) in weights.iter().zip(&offspring) {
            let y = (x - &mean) / sigma;
            rank_mu += &y * y.transpose() * *w;
        }
        cov = &cov * (1.0 - c_1 - c_mu)
            + (&p_c * p_c.transpose() + &cov * ((1.0 - h) * c_c * (2.0 - c_c))) * c_1
            + rank_mu * c_mu;
        cov = (&cov + cov.transpose()) * 0.5;
        mean = new_mean;

        hist.push(gen_min);
        if hist.len() > hist_window {
            hist.remove(0);
        }
        if hist.len() == hist_window {
            let lo = hist.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = hist.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= 1e-12 {
                break StopReason::HistTol;
            }
        }
        if sigma * eig.max_eig.sqrt() < 1e-12 || eig.max_eig / eig.min_eig > 1e14 {
            break StopReason::ParamTol;
        }
    };

    RunOutcome { best_x_norm, best_value, evaluations: evals, reason }
}

/// Run the full baseline: CMA-ES with BIPOP restarts until the budget is
/// exhausted, archiving each run's best point (the final, budget-cut run's
/// current best included).
pub fn cma_es_baseline_run<F: FnMut(&[f64]) -> f64>(
    objective: F,
    cfg: &BaselineConfig,
) -> Result<Vec<BaselinePoint>> {
    cma_es_baseline_run_streamed(objective, cfg, |_| Ok(()))
}

/// [`cma_es_baseline_run`] plus a per-point sink, called with each converged
/// point as its restart finishes. Lets a front-end flush partial results to
/// disk while the budget is being spent; a sink error aborts the remaining
/// restarts (the points already sunk stand).
pub fn cma_es_baseline_run_streamed<F, S>(
    mut objective: F,
    cfg: &BaselineConfig,
    mut sink: S,
) -> Result<Vec<BaselinePoint>>
where
    F: FnMut(&[f64]) -> f64,
    S: FnMut(&BaselinePoint) -> Result<()>,
{
    cfg.validate()?;
    let lambda_def = cfg.default_lambda();
    let mut regime_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[u64::MAX]));

    let mut archive = Vec::new();
    let mut used_total = 0usize;
    let mut used_large = 0usize;
    let mut used_small = 0usize;
    let mut large_lambda = lambda_def;
    let mut run_index = 0usize;

    while used_total < cfg.budget {
        let (regime, lambda, sigma) = if run_index == 0 {
            (Regime::Large, lambda_def, cfg.sigma0)
        } else if used_small < used_large {
            let u1: f64 = regime_rng.gen();
            let u2: f64 = regime_rng.gen();
            let lam = ((lambda_def as f64)
                * (0.5 * large_lambda as f64 / lambda_def as f64).powf(u1 * u1))
            .floor() as usize;
            (Regime::Small, lam.clamp(2, large_lambda), cfg.sigma0 * 10f64.powf(-2.0 * u2))
        } else {
            large_lambda *= 2;
            (Regime::Large, large_lambda, cfg.sigma0)
        };

        let out = single_run(
            &mut objective,
            cfg,
            lambda,
            sigma,
            cfg.budget - used_total,
            derive_seed(cfg.seed, &[run_index as u64]),
        );
        used_total += out.evaluations;
        match regime {
            Regime::Large => used_large += out.evaluations,
            Regime::Small => used_small += out.evaluations,
        }
        let raw = denormalize(out.best_x_norm.as_slice(), &cfg.bounds);
        archive.push(BaselinePoint {
            x: round_integer_coordinates(&raw, &cfg.integer_mask, cfg.catalog_size),
            value: out.best_value,
            run_index,
            regime,
            lambda,
            reason: out.reason,
            evaluations: out.evaluations,
        });
        sink(archive.last().unwrap())?;
        run_index += 1;
    }
    Ok(archive)
}
