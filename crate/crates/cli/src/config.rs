//! Job configuration: a TOML file naming the lens template and glass
//! catalog (via `[preset]` / `[catalog]` path includes, resolved relative to
//! the file) plus optional sections overriding run, search, merit, baseline,
//! and refinement knobs. Every numeric constant can also be overridden on
//! the command line, so sweeps need no file edits.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use lensopt::glass::Catalog;
use lensopt::ldgea::{BaselineSettings, RunConfig};
use lensopt::preset::LensPreset;
use lensopt::refine::RefineConfig;

use crate::args::Args;
use crate::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    pub preset: Option<Include>,
    pub catalog: Option<Include>,
    pub run: Option<RunSection>,
    pub es: Option<EsSection>,
    pub merit: Option<MeritSection>,
    pub baseline: Option<BaselineSection>,
    pub refine: Option<RefineSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Include {
    pub path: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub lambda: Option<usize>,
    pub mu: Option<usize>,
    pub alpha: Option<f64>,
    pub window: Option<f64>,
    pub iterations: Option<usize>,
    /// Evaluation budget of each descriptor's subspace search.
    pub budget: Option<usize>,
    pub stagnation_window: Option<usize>,
    pub stagnation_tol: Option<f64>,
    pub kl_threshold: Option<f64>,
    pub ablated: Option<bool>,
    pub threads: Option<usize>,
    pub out_dir: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsSection {
    pub sigma0: Option<f64>,
    pub eps_param: Option<f64>,
    pub eps_fun: Option<f64>,
    pub eps_hist: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeritSection {
    pub weights: Option<[f64; 5]>,
    pub min_glass_thickness: Option<f64>,
    pub min_air_gap: Option<f64>,
    pub min_working_distance: Option<f64>,
    pub target_efl: Option<f64>,
    pub efl_dead_zone: Option<f64>,
    /// Manufacturing limit as a minimum radius of curvature, mm.
    pub min_radius: Option<f64>,
    pub first_curvature_positive: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub budget: Option<usize>,
    pub sigma0: Option<f64>,
    pub min_integer_std: Option<f64>,
    pub lambda: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSection {
    pub top_k: Option<usize>,
    pub max_iterations: Option<usize>,
    pub grad_tol: Option<f64>,
    pub armijo_c1: Option<f64>,
    pub backtrack: Option<f64>,
    pub step_floor: Option<f64>,
}

/// A fully resolved job: validated core configs plus front-end settings.
#[derive(Clone, Debug)]
pub struct Job {
    pub run: RunConfig,
    pub baseline: BaselineSettings,
    pub refine: RefineConfig,
    pub top_k: usize,
    pub out_dir: Option<PathBuf>,
    /// The catalog the run will use, preloaded so input problems surface
    /// before any artifact is written.
    pub catalog: Catalog,
}

/// Environment variable capping worker threads (overridden by `--threads`).
pub const THREADS_ENV: &str = "LENSOPT_THREADS";

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Job {
    /// Read a job file, apply command-line overrides, and validate
    /// everything that can be validated without running. All failures here
    /// are configuration errors; nothing has been written yet.
    pub fn load(config_path: &Path, args: &Args) -> CliResult<Job> {
        let text = std::fs::read_to_string(config_path)
            .map_err(|e| CliError::config(format!("{}: {e}", config_path.display())))?;
        let file: JobFile = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", config_path.display())))?;
        let base = config_path.parent().unwrap_or_else(|| Path::new("."));

        let preset_inc = file
            .preset
            .as_ref()
            .ok_or_else(|| CliError::config("config needs a [preset] section with a path"))?;
        let catalog_inc = file
            .catalog
            .as_ref()
            .ok_or_else(|| CliError::config("config needs a [catalog] section with a path"))?;
        let preset_path = resolve(base, &preset_inc.path);
        let catalog_path = resolve(base, &catalog_inc.path);
        let preset = LensPreset::load(&preset_path)
            .map_err(|e| CliError::config(format!("{}: {e}", preset_path.display())))?;
        let catalog = Catalog::load(&catalog_path)
            .map_err(|e| CliError::config(format!("{}: {e}", catalog_path.display())))?;

        let run_sec = file.run.unwrap_or_default();
        let seed = match args.parsed::<u64>("seed")? {
            Some(s) => s,
            None => run_sec.seed.unwrap_or(0),
        };
        let mut rc = RunConfig::new(preset, catalog_path, seed);

        // File sections first, then command-line flags on top.
        apply(&mut rc.lambda, run_sec.lambda);
        apply(&mut rc.mu, run_sec.mu);
        apply(&mut rc.alpha, run_sec.alpha);
        apply(&mut rc.window, run_sec.window);
        apply(&mut rc.iterations, run_sec.iterations);
        apply(&mut rc.hvea_budget, run_sec.budget);
        apply(&mut rc.stagnation_window, run_sec.stagnation_window);
        apply(&mut rc.stagnation_tol, run_sec.stagnation_tol);
        apply(&mut rc.kl_threshold, run_sec.kl_threshold);
        apply(&mut rc.ablated, run_sec.ablated);

        let es_sec = file.es.unwrap_or_default();
        apply(&mut rc.es.sigma0, es_sec.sigma0);
        apply(&mut rc.es.eps_param, es_sec.eps_param);
        apply(&mut rc.es.eps_fun, es_sec.eps_fun);
        apply(&mut rc.es.eps_hist, es_sec.eps_hist);

        let merit_sec = file.merit.unwrap_or_default();
        apply(&mut rc.merit.weights, merit_sec.weights);
        apply(&mut rc.merit.min_glass_thickness, merit_sec.min_glass_thickness);
        apply(&mut rc.merit.min_air_gap, merit_sec.min_air_gap);
        apply(&mut rc.merit.min_working_distance, merit_sec.min_working_distance);
        apply(&mut rc.merit.target_efl, merit_sec.target_efl);
        apply(&mut rc.merit.efl_dead_zone, merit_sec.efl_dead_zone);
        apply(&mut rc.merit.first_curvature_positive, merit_sec.first_curvature_positive);
        if let Some(r) = merit_sec.min_radius {
            rc.merit.max_curvature = validated_min_radius(r)?;
        }

        apply(&mut rc.lambda, args.parsed("lambda")?);
        apply(&mut rc.mu, args.parsed("mu")?);
        apply(&mut rc.alpha, args.parsed("alpha")?);
        apply(&mut rc.window, args.parsed("window")?);
        apply(&mut rc.iterations, args.parsed("iterations")?);
        apply(&mut rc.hvea_budget, args.parsed("budget")?);
        apply(&mut rc.stagnation_window, args.parsed("stagnation-window")?);
        apply(&mut rc.stagnation_tol, args.parsed("stagnation-tol")?);
        apply(&mut rc.kl_threshold, args.parsed("kl-threshold")?);
        if args.switch("ablated") {
            rc.ablated = true;
        }
        apply(&mut rc.es.sigma0, args.parsed("sigma0")?);
        apply(&mut rc.es.eps_param, args.parsed("eps-param")?);
        apply(&mut rc.es.eps_fun, args.parsed("eps-fun")?);
        apply(&mut rc.es.eps_hist, args.parsed("eps-hist")?);
        apply(&mut rc.merit.target_efl, args.parsed("target-efl")?);
        if let Some(r) = args.parsed::<f64>("min-radius")? {
            rc.merit.max_curvature = validated_min_radius(r)?;
        }

        // Thread cap: flag beats environment beats file beats default.
        rc.threads = match args.parsed::<usize>("threads")? {
            Some(t) => t,
            None => match std::env::var(THREADS_ENV) {
                Ok(raw) => raw
                    .parse::<usize>()
                    .map_err(|e| CliError::config(format!("{THREADS_ENV}={raw}: {e}")))?,
                Err(_) => run_sec.threads.unwrap_or(0),
            },
        };

        let mut baseline = BaselineSettings::default();
        let base_sec = file.baseline.unwrap_or_default();
        if base_sec.budget.is_some() {
            baseline.budget = base_sec.budget;
        }
        apply(&mut baseline.sigma0, base_sec.sigma0);
        apply(&mut baseline.min_integer_std, base_sec.min_integer_std);
        if base_sec.lambda.is_some() {
            baseline.lambda = base_sec.lambda;
        }
        if let Some(b) = args.parsed::<usize>("baseline-budget")? {
            baseline.budget = Some(b);
        }
        apply(&mut baseline.sigma0, args.parsed("baseline-sigma0")?);
        apply(&mut baseline.min_integer_std, args.parsed("min-integer-std")?);
        if let Some(l) = args.parsed::<usize>("baseline-lambda")? {
            baseline.lambda = Some(l);
        }

        let mut refine = RefineConfig::new();
        let refine_sec = file.refine.unwrap_or_default();
        apply(&mut refine.max_iterations, refine_sec.max_iterations);
        apply(&mut refine.grad_tol, refine_sec.grad_tol);
        apply(&mut refine.armijo_c1, refine_sec.armijo_c1);
        apply(&mut refine.backtrack, refine_sec.backtrack);
        apply(&mut refine.step_floor, refine_sec.step_floor);
        apply(&mut refine.max_iterations, args.parsed("refine-iterations")?);
        apply(&mut refine.grad_tol, args.parsed("grad-tol")?);
        let mut top_k = refine_sec.top_k.unwrap_or(10);
        apply(&mut top_k, args.parsed("top-k")?);

        let out_dir = args
            .value("out")
            .map(PathBuf::from)
            .or_else(|| run_sec.out_dir.as_ref().map(|d| resolve(base, d)));

        rc.preset.validate(&catalog).map_err(CliError::from)?;
        rc.validate().map_err(CliError::from)?;
        refine.validate().map_err(CliError::from)?;
        if top_k == 0 {
            return Err(CliError::config("--top-k must be at least 1"));
        }

        Ok(Job { run: rc, baseline, refine, top_k, out_dir, catalog })
    }

    /// Artifact directory: `--out`, else the file's `out_dir`, else
    /// `runs/<command>-<preset>-s<seed>`.
    pub fn out_dir(&self, command: &str) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| {
            PathBuf::from("runs").join(format!(
                "{command}-{}-s{}",
                self.run.preset.name, self.run.seed
            ))
        })
    }

    /// Stable identifier stamped into every archive record of a run.
    pub fn run_id(&self, command: &str) -> String {
        let variant = if command == "run" && self.run.ablated { "ablated" } else { command };
        format!("{variant}-{}-s{}", self.run.preset.name, self.run.seed)
    }

    /// The effective configuration, written next to the artifacts so a run
    /// directory is self-contained: its `[preset]`/`[catalog]` point at the
    /// copies saved alongside.
    pub fn resolved_toml(&self, command: &str) -> String {
        let rc = &self.run;
        let mut s = String::new();
        s.push_str("# effective configuration, written by `lensopt ");
        s.push_str(command);
        s.push_str("`\n\n[preset]\npath = \"preset.lens\"\n\n[catalog]\npath = \"catalog.glass\"\n\n");
        s.push_str("[run]\n");
        s.push_str(&format!("seed = {}\n", rc.seed));
        s.push_str(&format!("lambda = {}\n", rc.lambda));
        s.push_str(&format!("mu = {}\n", rc.mu));
        s.push_str(&format!("alpha = {}\n", float_toml(rc.alpha)));
        s.push_str(&format!("window = {}\n", float_toml(rc.window)));
        s.push_str(&format!("iterations = {}\n", rc.iterations));
        s.push_str(&format!("budget = {}\n", rc.hvea_budget));
        s.push_str(&format!("stagnation_window = {}\n", rc.stagnation_window));
        s.push_str(&format!("stagnation_tol = {}\n", float_toml(rc.stagnation_tol)));
        s.push_str(&format!("kl_threshold = {}\n", float_toml(rc.kl_threshold)));
        s.push_str(&format!("ablated = {}\n", rc.ablated));
        s.push_str(&format!("threads = {}\n", rc.threads));
        s.push_str("\n[es]\n");
        s.push_str(&format!("sigma0 = {}\n", float_toml(rc.es.sigma0)));
        s.push_str(&format!("eps_param = {}\n", float_toml(rc.es.eps_param)));
        s.push_str(&format!("eps_fun = {}\n", float_toml(rc.es.eps_fun)));
        s.push_str(&format!("eps_hist = {}\n", float_toml(rc.es.eps_hist)));
        s.push_str("\n[merit]\n");
        s.push_str(&format!(
            "weights = [{}]\n",
            rc.merit.weights.iter().map(|w| float_toml(*w)).collect::<Vec<_>>().join(", ")
        ));
        s.push_str(&format!("min_glass_thickness = {}\n", float_toml(rc.merit.min_glass_thickness)));
        s.push_str(&format!("min_air_gap = {}\n", float_toml(rc.merit.min_air_gap)));
        s.push_str(&format!("min_working_distance = {}\n", float_toml(rc.merit.min_working_distance)));
        s.push_str(&format!("target_efl = {}\n", float_toml(rc.merit.target_efl)));
        s.push_str(&format!("efl_dead_zone = {}\n", float_toml(rc.merit.efl_dead_zone)));
        s.push_str(&format!("min_radius = {}\n", float_toml(1.0 / rc.merit.max_curvature)));
        s.push_str(&format!("first_curvature_positive = {}\n", rc.merit.first_curvature_positive));
        s.push_str("\n[baseline]\n");
        if let Some(b) = self.baseline.budget {
            s.push_str(&format!("budget = {b}\n"));
        }
        s.push_str(&format!("sigma0 = {}\n", float_toml(self.baseline.sigma0)));
        s.push_str(&format!("min_integer_std = {}\n", float_toml(self.baseline.min_integer_std)));
        if let Some(l) = self.baseline.lambda {
            s.push_str(&format!("lambda = {l}\n"));
        }
        s.push_str("\n[refine]\n");
        s.push_str(&format!("top_k = {}\n", self.top_k));
        s.push_str(&format!("max_iterations = {}\n", self.refine.max_iterations));
        s.push_str(&format!("grad_tol = {}\n", float_toml(self.refine.grad_tol)));
        s.push_str(&format!("armijo_c1 = {}\n", float_toml(self.refine.armijo_c1)));
        s.push_str(&format!("backtrack = {}\n", float_toml(self.refine.backtrack)));
        s.push_str(&format!("step_floor = {}\n", float_toml(self.refine.step_floor)));
        s
    }
}

fn validated_min_radius(r: f64) -> CliResult<f64> {
    if !(r > 0.0) {
        return Err(CliError::config("min_radius must be positive"));
    }
    Ok(1.0 / r)
}

/// TOML floats need a decimal point or exponent to stay floats on re-read.
fn float_toml(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("nan") {
        s
    } else {
        format!("{s}.0")
    }
}

fn apply<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
