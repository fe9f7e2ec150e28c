//! Covariance matrix self-adaptation evolution strategy (CMSA-ES).
//!
//! The inner single-basin optimizer: each offspring carries its own
//! log-normally mutated step size, the parental step size is the average of
//! the selected offspring's, and the covariance is learned by a rank-μ update
//! with learning time `τ_c = 1 + n(n+1)/(2μ)`. No evolution paths, no
//! cumulative step adaptation — self-adaptation only.
//!
//! A run stops on the first of four criteria, checked in this order every
//! generation: evaluation budget, mean movement below `eps_param`,
//! generation-best change below `eps_fun`, best-value range over the last
//! `hist_window` generations below `eps_hist`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{denormalize, normalize, reflect, StopReason};
use crate::error::{Error, Result};

/// Configuration of one CMSA-ES run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    /// Offspring per generation.
    pub lambda: usize,
    /// Parents (best offspring averaged), `1 <= mu <= lambda`.
    pub mu: usize,
    /// Initial step size as a fraction of each box width (the strategy works
    /// in unit-box coordinates internally).
    pub sigma0: f64,
    /// Search box, one `(lo, hi)` per dimension.
    pub bounds: Vec<(f64, f64)>,
    /// Evaluation budget; every objective call counts, including the initial
    /// point's.
    pub budget: usize,
    /// Parameter-change tolerance (original units).
    pub eps_param: f64,
    /// Function-value tolerance between consecutive generation bests.
    pub eps_fun: f64,
    /// Fitness-history tolerance over `hist_window` generations.
    pub eps_hist: f64,
    /// Generations in the fitness-history window.
    pub hist_window: usize,
    pub seed: u64,
}

impl EsConfig {
    /// Published defaults for dimension `n`: `λ = 4 + ⌊3 ln n⌋`, `μ = ⌊λ/2⌋`,
    /// `σ₀ = 0.3 × box width`, history window `10 + ⌈30 n / λ⌉`.
    pub fn for_dimension(bounds: Vec<(f64, f64)>, budget: usize, seed: u64) -> EsConfig {
        let n = bounds.len();
        let lambda = 4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize;
        let hist_window = 10 + (30.0 * n as f64 / lambda as f64).ceil() as usize;
        EsConfig {
            lambda,
            mu: lambda / 2,
            sigma0: 0.3,
            bounds,
            budget,
            eps_param: 1e-10,
            eps_fun: 1e-10,
            eps_hist: 1e-5,
            hist_window,
            seed,
        }
    }

    /// A dimensionless template: default step size and tolerances with no
    /// box, budget, or seed yet. Specialize with [`EsConfig::for_niche`]
    /// before running; carried by higher-level configs so the tolerances can
    /// be overridden in one place.
    pub fn template() -> EsConfig {
        EsConfig::for_dimension(Vec::new(), 0, 0)
    }

    /// Specialize this config (treated as a template) for a concrete search:
    /// `bounds`, `budget`, and `seed` are replaced, the population shape and
    /// history window are resized for the new dimension, and `sigma0` and the
    /// tolerances carry over.
    pub fn for_niche(&self, bounds: Vec<(f64, f64)>, budget: usize, seed: u64) -> EsConfig {
        let mut cfg = EsConfig::for_dimension(bounds, budget, seed);
        cfg.sigma0 = self.sigma0;
        cfg.eps_param = self.eps_param;
        cfg.eps_fun = self.eps_fun;
        cfg.eps_hist = self.eps_hist;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.mu > self.lambda {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= mu <= lambda, got mu={} lambda={}",
                self.mu, self.lambda
            )));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::InvalidArgument("sigma0 must be positive".into()));
        }
        if !(self.eps_param > 0.0 && self.eps_fun > 0.0 && self.eps_hist > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo.is_finite() && hi.is_finite()) || lo > hi) {
            return Err(Error::InvalidArgument("bounds must be finite with lo <= hi".into()));
        }
        Ok(())
    }
}

/// Outcome of a CMSA-ES run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsRunResult {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub reason: StopReason,
    /// Best objective value of each generation, in order.
    pub trace: Vec<f64>,
}

/// Smallest allowed covariance eigenvalue, as a fraction of the mean
/// eigenvalue. Bounds the condition number of the search distribution so a
/// run of unlucky rank-mu updates cannot collapse it onto a subspace.
const MIN_EIG_FRACTION: f64 = 0.25;

/// Largest allowed recombined step size, in unit-box coordinates. Beyond
/// about half the box width, reflection repair folds offspring into an
/// effectively uniform sample, fitness decouples from the individual step
/// sizes, and the log-normal recombination bias would ratchet sigma upward
/// without limit.
const SIGMA_MAX: f64 = 0.5;

/// Matrix square root of a symmetric PSD matrix, eigenvalues clamped to a
/// tiny positive floor for numerical safety.
fn sqrt_spd(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(c.clone());
    let vals = eig.eigenvalues.map(|v| v.max(1e-30).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Run CMSA-ES from `init` (which must lie inside the box).
///
/// The objective may return `+inf` for failed evaluations; only a non-finite
/// value at the initial point is a hard error. With a zero budget the initial
/// point is returned unevaluated.
pub fn cmsa_es_run<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    cfg: &EsConfig,
    init: &[f64],
) -> Result<EsRunResult> {
    cfg.validate()?;
    let n = cfg.bounds.len();
    if init.len() != n {
        return Err(Error::InvalidArgument(format!(
            "init point has {} coordinates, bounds have {n}",
            init.len()
        )));
    }
    if cfg.budget == 0 {
        return Ok(EsRunResult {
            best_point: init.to_vec(),
            best_value: f64::INFINITY,
            evaluations: 0,
            reason: StopReason::Budget,
            trace: Vec::new(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let tau = 1.0 / (2.0 * n as f64).sqrt();
    let tau_c = 1.0 + (n * (n + 1)) as f64 / (2.0 * cfg.mu as f64);

    let mut mean = DVector::from_vec(normalize(init, &cfg.bounds));
    let mut sigma = cfg.sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);

    let mut evals = 0usize;
    let f_init = {
        let v = objective(&denormalize(mean.as_slice(), &cfg.bounds));
        evals += 1;
        v
    };
    if !f_init.is_finite() && f_init != f64::INFINITY {
        return Err(Error::InvalidArgument("objective is NaN at the initial point".into()));
    }
    if f_init == f64::INFINITY {
        return Err(Error::InvalidArgument("objective is infinite at the initial point".into()));
    }

    let mut best_point = mean.clone();
    let mut best_value = f_init;
    let mut prev_gen_min = f_init;
    let mut trace: Vec<f64> = Vec::new();
    let mut hist: Vec<f64> = Vec::new();

    let finish = |reason: StopReason,
                  best_point: &DVector<f64>,
                  best_value: f64,
                  evaluations: usize,
                  trace: Vec<f64>| {
        Ok(EsRunResult {
            best_point: denormalize(best_point.as_slice(), &cfg.bounds),
            best_value,
            evaluations,
            reason,
            trace,
        })
    };

    loop {
        if evals >= cfg.budget {
            return finish(StopReason::Budget, &best_point, best_value, evals, trace);
        }
        let gen_size = cfg.lambda.min(cfg.budget - evals);
        let sqrt_c = sqrt_spd(&cov);

        // Offspring: own step size, correlated direction, reflection repair.
        let mut offspring: Vec<(f64, f64, DVector<f64>, DVector<f64>)> =
            Vec::with_capacity(gen_size);
        for _ in 0..gen_size {
            let sigma_l = sigma * (tau * rng.sample::<f64, _>(StandardNormal)).exp();
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = &sqrt_c * z;
            let mut x = &mean + &s * sigma_l;
            for j in 0..n {
                x[j] = reflect(x[j], 0.0, 1.0);
            }
            // Keep the learned direction consistent with the repaired point.
            let s_eff = (&x - &mean) / sigma_l;
            let f = objective(&denormalize(x.as_slice(), &cfg.bounds));
            evals += 1;
            offspring.push((f, sigma_l, x, s_eff));
        }
        offspring.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));

        let mu_eff = cfg.mu.min(gen_size);
        let selected = &offspring[..mu_eff];
        let gen_min = selected[0].0;
        if gen_min < best_value {
            best_value = gen_min;
            best_point = selected[0].2.clone();
        }
        trace.push(gen_min);

        let mut new_mean = DVector::zeros(n);
        let mut new_sigma = 0.0;
        for (_, sl, x, _) in selected {
            new_mean += x;
            new_sigma += sl;
        }
        new_mean /= mu_eff as f64;
        new_sigma /= mu_eff as f64;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (_, _, _, s) in selected {
            rank_mu += s * s.transpose();
        }
        rank_mu /= mu_eff as f64;
        cov = &cov * (1.0 - 1.0 / tau_c) + rank_mu * (1.0 / tau_c);
        cov = (&cov + cov.transpose()) * 0.5;
        // Two safeguards keep the learned matrix healthy under the small
        // rank-mu sample (mu directions in n dimensions):
        //  - normalize to unit mean eigenvalue, so the matrix carries shape
        //    only and all scale lives in sigma (the raw update is biased
        //    toward contraction, which would compound with the self-adapted
        //    step size);
        //  - floor the spectrum at a fraction of the mean eigenvalue, since
        //    the rank-deficient sample estimate drifts multiplicatively and
        //    can otherwise starve whole directions of search variance.
        let eig = SymmetricEigen::new(cov.clone());
        let mean_eig = eig.eigenvalues.mean();
        if mean_eig > 0.0 && mean_eig.is_finite() {
            let vals = eig.eigenvalues.map(|v| v.max(mean_eig * MIN_EIG_FRACTION));
            cov = &eig.eigenvectors
                * DMatrix::from_diagonal(&vals)
                * eig.eigenvectors.transpose();
            cov /= cov.trace() / n as f64;
        }

        // Mean movement in original units.
        let delta: f64 = new_mean
            .iter()
            .zip(mean.iter())
            .zip(&cfg.bounds)
            .map(|((a, b), &(lo, hi))| ((a - b) * (hi - lo)).powi(2))
            .sum::<f64>()
            .sqrt();

        mean = new_mean;
        sigma = new_sigma.min(SIGMA_MAX);

        hist.push(gen_min);
        if hist.len() > cfg.hist_window {
            hist.remove(0);
        }

        if evals >= cfg.budget {
            return finish(StopReason::Budget, &best_point, best_value, evals, trace);
        }
        if delta <= cfg.eps_param {
            return finish(StopReason::ParamTol, &best_point, best_value, evals, trace);
        }
        if (gen_min - prev_gen_min).abs() <= cfg.eps_fun {
            return finish(StopReason::FunTol, &best_point, best_value, evals, trace);
        }
        if hist.len() == cfg.hist_window {
            let lo = hist.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = hist.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo <= cfg.eps_hist {
                return finish(StopReason::HistTol, &best_point, best_value, evals, trace);
            }
        }
        prev_gen_min = gen_min;
    }
}
