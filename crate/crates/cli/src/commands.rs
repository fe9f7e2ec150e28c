//! The subcommands. Exit codes: 0 success, 2 configuration error (nothing
//! written), 3 runtime failure (partial artifacts flushed up to the failure).

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use lensopt::descriptor::describe;
use lensopt::glass::{synthetic_catalog, Catalog};
use lensopt::hvea::ArchiveEntry;
use lensopt::ldgea::{
    baseline_lens_run_streamed, equal_budget, ldgea_run_streamed, TerminationReason,
};
use lensopt::merit::objective;
use lensopt::preset::{cooke_triplet, double_gauss, LensPreset};
use lensopt::refine::{refine_top_k, RefineStop};

use crate::archive::{
    now_ts, read_archive, record_design, write_records, ArchiveRecord, JsonlWriter,
};
use crate::args::Args;
use crate::config::Job;
use crate::render::render_svg;
use crate::report::{read_generations, report_text, series_csv, GenLine, Source};
use crate::{CliError, CliResult};

const USAGE: &str = "\
lensopt — descriptor-guided lens design runner

usage:
  lensopt run <config.toml> [overrides]       two-stage descriptor-learning run
  lensopt baseline <config.toml> [overrides]  full-parameter CMA-ES comparison run
  lensopt refine <run-dir> [overrides]        BFGS-polish the best archived candidates
  lensopt report <path>... [--out DIR]        metrics over run dirs / archive files
  lensopt render <run-dir> <rank> [--out F]   SVG cross-section of the rank-th candidate
  lensopt scaffold [--dir D] [--force]        write bundled presets, catalogs, configs
  lensopt help                                this text

overrides (flag beats file; every constant of the method is reachable):
  --seed N --lambda N --mu N --alpha X --window X --iterations N --budget N
  --stagnation-window N --stagnation-tol X --kl-threshold X --ablated
  --threads N (or env LENSOPT_THREADS) --out PATH --limit-seconds X
  --sigma0 X --eps-param X --eps-fun X --eps-hist X
  --min-radius MM --target-efl MM
  --baseline-budget N --baseline-sigma0 X --baseline-lambda N --min-integer-std X
  --top-k N --grad-tol X --refine-iterations N

artifacts of a run directory:
  archive.jsonl      one JSON record per archived candidate (append-only)
  generations.jsonl  one record per outer iteration, flushed as it completes
  summary.json       headline numbers
  resolved.toml + preset.lens + catalog.glass   the exact inputs, re-runnable
";

const JOB_FLAGS: &[&str] = &[
    "seed", "lambda", "mu", "alpha", "window", "iterations", "budget",
    "stagnation-window", "stagnation-tol", "kl-threshold", "ablated", "threads",
    "sigma0", "eps-param", "eps-fun", "eps-hist", "min-radius", "target-efl",
    "baseline-budget", "baseline-sigma0", "baseline-lambda", "min-integer-std",
    "top-k", "grad-tol", "refine-iterations", "out", "limit-seconds",
];

/// Entry point: returns the process exit code.
pub fn dispatch(argv: &[String]) -> u8 {
    match run_command(argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("lensopt: {e}");
            e.exit_code()
        }
    }
}

fn run_command(argv: &[String]) -> CliResult<()> {
    let Some(cmd) = argv.first() else {
        println!("{USAGE}");
        return Err(CliError::config("missing subcommand"));
    };
    if cmd == "help" || cmd == "--help" {
        println!("{USAGE}");
        return Ok(());
    }
    let args = Args::parse(&argv[1..])?;
    if args.switch("help") {
        println!("{USAGE}");
        return Ok(());
    }
    match cmd.as_str() {
        "run" => cmd_run(&args),
        "baseline" => cmd_baseline(&args),
        "refine" => cmd_refine(&args),
        "report" => cmd_report(&args),
        "render" => cmd_render(&args),
        "scaffold" => cmd_scaffold(&args),
        other => Err(CliError::config(format!("unknown command '{other}' (see `lensopt help`)"))),
    }
}

/// Optional wall-clock cutoff, checked after each flushed unit of progress.
fn deadline_from(args: &Args) -> CliResult<Option<Instant>> {
    match args.parsed::<f64>("limit-seconds")? {
        None => Ok(None),
        Some(s) if s >= 0.0 && s.is_finite() => {
            Ok(Some(Instant::now() + Duration::from_secs_f64(s)))
        }
        Some(s) => Err(CliError::config(format!("--limit-seconds {s}: must be non-negative"))),
    }
}

fn check_deadline(deadline: Option<Instant>) -> lensopt::Result<()> {
    if let Some(d) = deadline {
        if Instant::now() >= d {
            return Err(lensopt::Error::Interrupted("wall-clock limit reached".into()));
        }
    }
    Ok(())
}

/// Writer errors crossing back into library callbacks keep their message.
fn as_core(e: CliError) -> lensopt::Error {
    lensopt::Error::Io(std::io::Error::new(std::io::ErrorKind::Other, e.message().to_string()))
}

/// Create the artifact directory and store the exact inputs, making the
/// directory self-contained and re-runnable. Called only after the
/// configuration validated, so a config error leaves no artifacts behind.
fn prepare_run_dir(dir: &Path, job: &Job, command: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    let write = |name: &str, text: String| -> CliResult<()> {
        std::fs::write(dir.join(name), text)
            .map_err(|e| CliError::runtime(format!("{}: {e}", dir.join(name).display())))
    };
    write("preset.lens", job.run.preset.to_text())?;
    write("catalog.glass", job.catalog.to_text())?;
    write("resolved.toml", job.resolved_toml(command))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::runtime(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct RunSummary {
    run_id: String,
    command: &'static str,
    algorithm: &'static str,
    seed: u64,
    preset: String,
    catalog_glasses: usize,
    lambda: usize,
    mu: usize,
    iterations_configured: usize,
    budget_per_slot: usize,
    evaluation_cap: usize,
    threads: usize,
    iterations_run: usize,
    termination: TerminationReason,
    total_evaluations: usize,
    candidates: usize,
    distinct_descriptors: usize,
    best_value: Option<f64>,
    best_descriptor: Option<String>,
    wall_time_s: f64,
}

fn cmd_run(args: &Args) -> CliResult<()> {
    args.ensure_known(JOB_FLAGS)?;
    args.expect_positionals(1, "lensopt run <config.toml> [overrides]")?;
    let job = Job::load(Path::new(&args.positionals[0]), args)?;
    let deadline = deadline_from(args)?;
    let dir = job.out_dir("run");
    let run_id = job.run_id("run");
    prepare_run_dir(&dir, &job, "run")?;

    let mut gen_writer = JsonlWriter::create(&dir.join("generations.jsonl"))?;
    let started = Instant::now();
    let result = ldgea_run_streamed(&job.run, |g| {
        gen_writer.append(&GenLine::from_record(g)).map_err(as_core)?;
        gen_writer.flush().map_err(as_core)?;
        check_deadline(deadline)
    })
    .map_err(CliError::from)?;
    let wall = started.elapsed().as_secs_f64();

    let records = crate::archive::records_from_pool(
        &result,
        &job.catalog,
        &job.run.merit,
        &run_id,
        job.run.seed,
    );
    write_records(&dir.join("archive.jsonl"), &records)?;

    let summary = RunSummary {
        run_id: run_id.clone(),
        command: "run",
        algorithm: if job.run.ablated { "ablated" } else { "ldgea" },
        seed: job.run.seed,
        preset: job.run.preset.name.clone(),
        catalog_glasses: job.catalog.len(),
        lambda: job.run.lambda,
        mu: job.run.mu,
        iterations_configured: job.run.iterations,
        budget_per_slot: job.run.hvea_budget,
        evaluation_cap: equal_budget(&job.run),
        threads: job.run.threads,
        iterations_run: result.generations.len(),
        termination: result.reason,
        total_evaluations: result.total_evaluations,
        candidates: result.candidates,
        distinct_descriptors: result.distinct_descriptors,
        best_value: result.best.as_ref().map(|b| b.value),
        best_descriptor: result.best.as_ref().map(|b| describe(&b.design).serialize()),
        wall_time_s: wall,
    };
    write_json(&dir.join("summary.json"), &summary)?;

    println!(
        "{run_id}: {} candidates across {} descriptors, best F {}, {} evaluations, {:.1}s -> {}",
        result.candidates,
        result.distinct_descriptors,
        summary.best_value.map_or("-".into(), |v| format!("{v:.6}")),
        result.total_evaluations,
        wall,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BaselineSummary {
    run_id: String,
    command: &'static str,
    seed: u64,
    preset: String,
    catalog_glasses: usize,
    /// Evaluation budget, consumed exactly (equal-budget rule by default).
    budget: usize,
    restarts: usize,
    distinct_descriptors: usize,
    best_value: Option<f64>,
    wall_time_s: f64,
}

fn cmd_baseline(args: &Args) -> CliResult<()> {
    args.ensure_known(JOB_FLAGS)?;
    args.expect_positionals(1, "lensopt baseline <config.toml> [overrides]")?;
    let job = Job::load(Path::new(&args.positionals[0]), args)?;
    let deadline = deadline_from(args)?;
    let dir = job.out_dir("baseline");
    let run_id = job.run_id("baseline");
    prepare_run_dir(&dir, &job, "baseline")?;

    let mut writer = JsonlWriter::create(&dir.join("archive.jsonl"))?;
    let started = Instant::now();
    let catalog = &job.catalog;
    let merit = &job.run.merit;
    let outcome = baseline_lens_run_streamed(&job.run, &job.baseline, |candidate| {
        let breakdown = if candidate.point.value.is_finite() {
            objective(&candidate.design, catalog, merit).ok()
        } else {
            None
        };
        let record = ArchiveRecord {
            run_id: run_id.clone(),
            seed: job.run.seed,
            iteration: candidate.point.run_index,
            descriptor: candidate.descriptor.serialize(),
            window: job.run.window,
            params: candidate.design.continuous_params(),
            materials: candidate.design.materials(),
            value: candidate.point.value,
            breakdown,
            ts: now_ts(),
        };
        writer.append(&record).map_err(as_core)?;
        writer.flush().map_err(as_core)?;
        check_deadline(deadline)
    })
    .map_err(CliError::from)?;
    let wall = started.elapsed().as_secs_f64();

    let summary = BaselineSummary {
        run_id: run_id.clone(),
        command: "baseline",
        seed: job.run.seed,
        preset: job.run.preset.name.clone(),
        catalog_glasses: job.catalog.len(),
        budget: outcome.budget,
        restarts: outcome.candidates.len(),
        distinct_descriptors: outcome.distinct_descriptors,
        best_value: outcome.best_value,
        wall_time_s: wall,
    };
    write_json(&dir.join("summary.json"), &summary)?;

    println!(
        "{run_id}: {} restarts, {} distinct descriptors, best F {}, budget {} consumed, {:.1}s -> {}",
        summary.restarts,
        summary.distinct_descriptors,
        summary.best_value.map_or("-".into(), |v| format!("{v:.6}")),
        summary.budget,
        wall,
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RefineLine {
    rank: usize,
    descriptor: String,
    input_value: f64,
    refined_value: f64,
    improvement: f64,
    iterations: usize,
    grad_norm: f64,
    reason: RefineStop,
    projections: usize,
}

fn cmd_refine(args: &Args) -> CliResult<()> {
    args.ensure_known(JOB_FLAGS)?;
    args.expect_positionals(1, "lensopt refine <run-dir> [overrides]")?;
    let run_dir = PathBuf::from(&args.positionals[0]);
    let job = Job::load(&run_dir.join("resolved.toml"), args)?;
    let records = read_archive(&run_dir.join("archive.jsonl"))?;

    let mut entries: Vec<ArchiveEntry> = Vec::new();
    for r in records.iter().filter(|r| r.value.is_finite()) {
        entries.push(ArchiveEntry { design: record_design(&job.run.preset, r)?, value: r.value });
    }
    if entries.is_empty() {
        return Err(CliError::config(format!(
            "{}: no finite candidates to refine",
            run_dir.join("archive.jsonl").display()
        )));
    }
    let k = job.top_k.min(entries.len());
    let out_dir = args.value("out").map(PathBuf::from).unwrap_or_else(|| run_dir.clone());
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", out_dir.display())))?;

    let reports =
        refine_top_k(&entries, k, &job.catalog, &job.run.merit, &job.refine).map_err(CliError::from)?;

    let run_id = job.run_id("refine");
    let mut refined_records = Vec::with_capacity(reports.len());
    let mut lines = Vec::with_capacity(reports.len());
    for (i, rep) in reports.iter().enumerate() {
        let descriptor = describe(&rep.refined);
        refined_records.push(ArchiveRecord {
            run_id: run_id.clone(),
            seed: job.run.seed,
            iteration: i + 1,
            descriptor: descriptor.serialize(),
            window: job.run.window,
            params: rep.refined.continuous_params(),
            materials: rep.refined.materials(),
            value: rep.refined_value,
            breakdown: objective(&rep.refined, &job.catalog, &job.run.merit).ok(),
            ts: now_ts(),
        });
        lines.push(RefineLine {
            rank: i + 1,
            descriptor: descriptor.serialize(),
            input_value: rep.input_value,
            refined_value: rep.refined_value,
            improvement: rep.improvement,
            iterations: rep.iterations,
            grad_norm: rep.grad_norm,
            reason: rep.reason,
            projections: rep.projections,
        });
    }
    write_records(&out_dir.join("refined.jsonl"), &refined_records)?;
    write_json(&out_dir.join("refine_report.json"), &lines)?;

    let best = reports
        .iter()
        .map(|r| r.refined_value)
        .fold(f64::INFINITY, f64::min);
    println!(
        "{run_id}: refined top {k} of {} candidates, best F {best:.6} -> {}",
        entries.len(),
        out_dir.display()
    );
    Ok(())
}

/// A report input: a run directory (archive.jsonl + optional
/// generations.jsonl inside) or an archive file directly.
fn load_source(path: &Path, taken: &mut std::collections::BTreeSet<String>) -> CliResult<Source> {
    let (archive_path, gen_path, name) = if path.is_dir() {
        (
            path.join("archive.jsonl"),
            Some(path.join("generations.jsonl")),
            path.file_name().map(|n| n.to_string_lossy().into_owned()),
        )
    } else {
        let gen = path.parent().map(|p| p.join("generations.jsonl"));
        let name = if path.file_name().is_some_and(|n| n == "archive.jsonl") {
            path.parent()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        } else {
            path.file_stem().map(|n| n.to_string_lossy().into_owned())
        };
        (path.to_path_buf(), gen, name)
    };
    let base = name.unwrap_or_else(|| "archive".to_string());
    let mut label = base.clone();
    let mut i = 2;
    while !taken.insert(label.clone()) {
        label = format!("{base}#{i}");
        i += 1;
    }
    let records = read_archive(&archive_path)?;
    let generations: Vec<GenLine> = match gen_path {
        Some(p) if p.is_file() => read_generations(&p)?,
        _ => Vec::new(),
    };
    Ok(Source { label, records, generations })
}

fn cmd_report(args: &Args) -> CliResult<()> {
    args.ensure_known(&["out"])?;
    if args.positionals.is_empty() {
        return Err(CliError::config("usage: lensopt report <run-dir|archive.jsonl>... [--out DIR]"));
    }
    let mut taken = std::collections::BTreeSet::new();
    let mut sources = Vec::new();
    for p in &args.positionals {
        sources.push(load_source(Path::new(p), &mut taken)?);
    }
    let out_dir = PathBuf::from(args.value("out").unwrap_or("report"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::runtime(format!("{}: {e}", out_dir.display())))?;
    let text = report_text(&sources);
    let csv = series_csv(&sources);
    std::fs::write(out_dir.join("report.txt"), &text)
        .map_err(|e| CliError::runtime(format!("report.txt: {e}")))?;
    std::fs::write(out_dir.join("series.csv"), &csv)
        .map_err(|e| CliError::runtime(format!("series.csv: {e}")))?;
    println!(
        "report over {} source(s) -> {} and {}",
        sources.len(),
        out_dir.join("report.txt").display(),
        out_dir.join("series.csv").display()
    );
    Ok(())
}

fn cmd_render(args: &Args) -> CliResult<()> {
    args.ensure_known(&["out"])?;
    args.expect_positionals(2, "lensopt render <run-dir> <rank> [--out FILE]")?;
    let dir = PathBuf::from(&args.positionals[0]);
    let rank: usize = args.positionals[1]
        .parse()
        .map_err(|e| CliError::config(format!("rank '{}': {e}", args.positionals[1])))?;

    let preset = LensPreset::load(&dir.join("preset.lens"))
        .map_err(|e| CliError::config(e.to_string()))?;
    let catalog = Catalog::load(&dir.join("catalog.glass"))
        .map_err(|e| CliError::config(e.to_string()))?;
    let records = read_archive(&dir.join("archive.jsonl"))?;
    if rank == 0 || rank > records.len() {
        return Err(CliError::config(format!(
            "rank {rank} outside the archive (1..={})",
            records.len()
        )));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        records[a]
            .value
            .total_cmp(&records[b].value)
            .then_with(|| records[a].descriptor.cmp(&records[b].descriptor))
            .then(a.cmp(&b))
    });
    let rec = &records[order[rank - 1]];
    let design = record_design(&preset, rec)?;
    let image_distance = rec.breakdown.as_ref().map(|b| b.image_distance);
    let title = format!("{} rank {} F={:.6} {}", rec.run_id, rank, rec.value, rec.descriptor);
    let svg = render_svg(&design, &catalog, image_distance, &title)?;
    let out = args
        .value("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.join(format!("render-rank{rank}.svg")));
    std::fs::write(&out, svg).map_err(|e| CliError::runtime(format!("{}: {e}", out.display())))?;
    println!("rendered rank {rank} ({}) -> {}", rec.descriptor, out.display());
    Ok(())
}

const SCALED_TRIPLET_TOML: &str = "\
# Desk-scale diversity experiment: Cooke-triplet template over a 20-glass
# catalog, with the descriptor-guided run and the full-parameter baseline
# granted equal evaluation budgets (8 * 2000 * 5 = 80000).

[preset]
path = \"../presets/cooke_triplet.lens\"

[catalog]
path = \"../catalogs/synthetic20.glass\"

[run]
seed = 42
lambda = 8
mu = 5
iterations = 5
budget = 2000
threads = 8
";

const FULL_DOUBLE_GAUSS_TOML: &str = "\
# Full-size run: double-Gauss template over the whole synthetic catalog,
# every knob at its published default. Expect lambda * budget * iterations
# = 50 * 100000 * 15 = 7.5e7 evaluations; bring a large machine.

[preset]
path = \"../presets/double_gauss.lens\"

[catalog]
path = \"../catalogs/synthetic24.glass\"

[run]
seed = 1
lambda = 50
mu = 5
iterations = 15
budget = 100000
threads = 0
";

fn cmd_scaffold(args: &Args) -> CliResult<()> {
    args.ensure_known(&["dir", "force"])?;
    let root = PathBuf::from(args.value("dir").unwrap_or("."));
    let force = args.switch("force");

    let full = synthetic_catalog();
    let twenty = Catalog { glasses: full.glasses[..20].to_vec() };
    let files: Vec<(PathBuf, String)> = vec![
        (root.join("presets/cooke_triplet.lens"), cooke_triplet().to_text()),
        (root.join("presets/double_gauss.lens"), double_gauss().to_text()),
        (root.join("catalogs/synthetic24.glass"), full.to_text()),
        (root.join("catalogs/synthetic20.glass"), twenty.to_text()),
        (root.join("configs/scaled_triplet.toml"), SCALED_TRIPLET_TOML.to_string()),
        (root.join("configs/full_double_gauss.toml"), FULL_DOUBLE_GAUSS_TOML.to_string()),
    ];
    for (path, content) in files {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
        }
        match std::fs::read_to_string(&path) {
            Ok(existing) if existing == content => {
                println!("unchanged {}", path.display());
                continue;
            }
            Ok(_) if !force => {
                return Err(CliError::config(format!(
                    "{} exists with different content (use --force to overwrite)",
                    path.display()
                )));
            }
            _ => {}
        }
        std::fs::write(&path, content)
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
