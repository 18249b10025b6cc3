//! Batch front-end for the stochastic biharmonic heat equation laboratory.
//!
//! Every subcommand reads one INI-style configuration file, runs a single
//! study, and writes CSV results, a run manifest and a gnuplot script into
//! the output directory. Identical configurations produce byte-identical
//! CSV and plot files; the manifest additionally records the wall time
//! (its only nondeterministic line).

mod config;

use biharm_core::fem::{FemOperators, FemSpace};
use biharm_core::lab::{
    det_fem_study, fit_rate, format_float, fulldisc_error_mc, modeling_error_split,
    semidiscrete_error_mc, timedisc_errors_exact, timedisc_vs_fulldisc_mc, ConvergenceStudy,
    ErrorMode, McConfig,
};
use biharm_core::noise::{NoiseGrid, NoiseRealization, SeedSpec};
use biharm_core::oracle::{NoiseHistory, TimePartition};
use biharm_core::spectral::{
    p_poly, series_decay_partial_sum, series_semigroup_partial_sum, SpectralCutoff,
};
use config::RunConfig;
use std::path::{Path, PathBuf};
use std::time::Instant;

const USAGE: &str = "usage: biharmlab <subcommand> <config.ini> [--out DIR]

subcommands:
  sample-path         one noise realization and its mild-solution path
  modeling-error      exact regularization error, Δt or Δx sweep
  time-error          exact Backward Euler time-discretization error sweep
  semidiscrete-error  Monte Carlo spatial error of the semidiscrete scheme
  full-error          Monte Carlo error of the fully-discrete scheme
  compare-time-full   Monte Carlo time-discrete vs fully-discrete gap
  det-convergence     deterministic Galerkin convergence study
  series-check        eigenvalue-series boundedness sweeps

The BIHARMLAB_OUT environment variable overrides the output directory.";

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        eprintln!("{USAGE}");
        return 64;
    }
    let sub = args[0].as_str();
    let known = [
        "sample-path",
        "modeling-error",
        "time-error",
        "semidiscrete-error",
        "full-error",
        "compare-time-full",
        "det-convergence",
        "series-check",
    ];
    if !known.contains(&sub) {
        eprintln!("unknown subcommand `{sub}`\n{USAGE}");
        return 64;
    }
    if args.len() < 2 {
        eprintln!("missing config path\n{USAGE}");
        return 64;
    }
    let config_path = PathBuf::from(&args[1]);
    let mut out_override: Option<String> = None;
    let mut i = 2;
    while i < args.len() {
        match args[i].as_str() {
            "--out" if i + 1 < args.len() => {
                out_override = Some(args[i + 1].clone());
                i += 2;
            }
            other => {
                eprintln!("unexpected argument `{other}`\n{USAGE}");
                return 64;
            }
        }
    }

    let raw = match std::fs::read_to_string(&config_path) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", config_path.display());
            return 2;
        }
    };
    let cfg = match RunConfig::parse(&raw) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    // Environment override wins over --out, which wins over the config.
    let out_dir = std::env::var("BIHARMLAB_OUT")
        .ok()
        .or(out_override)
        .unwrap_or_else(|| cfg.str_or("output", "dir", "out").to_string());
    let started = Instant::now();
    match dispatch(sub, &cfg, Path::new(&out_dir), started) {
        Ok(()) => 0,
        Err(CliError::Validation(msg)) => {
            eprintln!("{msg}");
            2
        }
        Err(CliError::Guard(msg)) => {
            eprintln!("{msg}");
            3
        }
    }
}

enum CliError {
    Validation(String),
    Guard(String),
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<biharm_core::Error> for CliError {
    fn from(e: biharm_core::Error) -> Self {
        match e {
            biharm_core::Error::Guard(_) | biharm_core::Error::Solver(_) => {
                CliError::Guard(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o error: {e}"))
    }
}

/// Accumulates manifest lines and writes the output artifacts.
struct Study {
    dir: PathBuf,
    manifest: Vec<String>,
    started: Instant,
}

impl Study {
    fn new(dir: &Path, sub: &str, cfg: &RunConfig, started: Instant) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = vec![
            format!("subcommand = {sub}"),
            format!("version = {}", env!("CARGO_PKG_VERSION")),
        ];
        for line in cfg.echo().lines() {
            manifest.push(format!("config | {line}"));
        }
        Ok(Study { dir: dir.to_path_buf(), manifest, started })
    }

    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.manifest.push(format!("{key} = {value}"));
    }

    fn write_csv(&self, name: &str, header: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }

    fn write_plot(&self, name: &str, body: &str) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), body)?;
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.manifest
            .push(format!("wall_time_ms = {}", self.started.elapsed().as_millis()));
        let mut text = self.manifest.join("\n");
        text.push('\n');
        std::fs::write(self.dir.join("manifest.txt"), text)?;
        Ok(())
    }
}

fn loglog_plot(csv: &str, title: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set logscale xy\n\
         set key left top\n\
         set xlabel 'parameter'\n\
         set ylabel 'squared error'\n\
         plot '{csv}' skip 1 using 1:2 with linespoints title '{title}', \\\n\
         \x20    '{csv}' skip 1 using 1:3 with lines dashtype 2 title 'ci low', \\\n\
         \x20    '{csv}' skip 1 using 1:4 with lines dashtype 2 title 'ci high'\n"
    )
}

fn common_grid(cfg: &RunConfig) -> Result<NoiseGrid, CliError> {
    let d = cfg.usize_or("problem", "d", 2)?;
    let t_final = cfg.f64_or("problem", "t_final", 0.1)?;
    let n_star = cfg.usize_or("noise", "n_star", 4)?;
    let j_star = cfg.usize_or("noise", "j_star", 4)?;
    Ok(NoiseGrid::new(d, t_final, n_star, j_star)?)
}

fn error_mode(cfg: &RunConfig) -> Result<ErrorMode, CliError> {
    match cfg.str_or("mode", "kind", "mc") {
        "mc" | "monte_carlo" => Ok(ErrorMode::MonteCarlo {
            replicates: cfg.usize_or("mode", "replicates", 100)?,
            bootstrap_resamples: cfg.usize_or("mode", "bootstrap", 1000)?,
        }),
        "exact" | "exact_covariance" => Ok(ErrorMode::ExactCovariance),
        other => Err(CliError::Validation(format!("unknown [mode] kind `{other}`"))),
    }
}

fn mc_config(cfg: &RunConfig) -> Result<McConfig, CliError> {
    // Exact covariance evaluation only exists for spectral-vs-spectral
    // quantities; every study that reaches this point needs sampling.
    match error_mode(cfg)? {
        ErrorMode::MonteCarlo { replicates, bootstrap_resamples } => Ok(McConfig {
            replicates,
            master_seed: cfg.u64_or("seeds", "master", 1)?,
            bootstrap_resamples,
        }),
        ErrorMode::ExactCovariance => Err(CliError::Validation(
            "this study involves the Galerkin space; exact covariance mode only \
             applies to spectral-vs-spectral quantities"
                .into(),
        )),
    }
}

fn note_grid(study: &mut Study, grid: &NoiseGrid) {
    study.note("noise.dim", grid.dim());
    study.note("noise.t_final", format_float(grid.t_final()));
    study.note("noise.n_star", grid.time_cells());
    study.note("noise.j_star", grid.space_cells());
}

fn dispatch(sub: &str, cfg: &RunConfig, dir: &Path, started: Instant) -> Result<(), CliError> {
    let mut study = Study::new(dir, sub, cfg, started)?;
    match sub {
        "sample-path" => sample_path(cfg, &mut study)?,
        "modeling-error" => modeling_error(cfg, &mut study)?,
        "time-error" => time_error(cfg, &mut study)?,
        "semidiscrete-error" => semidiscrete_error(cfg, &mut study)?,
        "full-error" => full_error(cfg, &mut study)?,
        "compare-time-full" => compare_time_full(cfg, &mut study)?,
        "det-convergence" => det_convergence(cfg, &mut study)?,
        "series-check" => series_check(cfg, &mut study)?,
        _ => unreachable!(),
    }
    study.finish()
}

fn sample_path(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let grid = common_grid(cfg)?;
    let cutoff = SpectralCutoff::new(grid.dim(), cfg.usize_or("spectral", "cutoff", 16)?)?;
    let steps = cfg.usize_or("time", "steps", 16)?;
    let seed = SeedSpec::new(
        cfg.u64_or("seeds", "master", 1)?,
        cfg.u64_or("seeds", "replicate", 0)?,
    );
    note_grid(study, &grid);
    study.note("spectral.cutoff", cutoff.n_max());
    study.note("time.steps", steps);
    study.note("seeds.master", seed.master_seed);
    study.note("seeds.replicate", seed.replicate);
    let r = NoiseRealization::sample(grid, seed);
    let mut bin = Vec::new();
    r.write_binary(&mut bin)?;
    std::fs::write(study.dir.join("noise.bin"), bin)?;
    if grid.cell_count() <= 65_536 {
        let mut csv = Vec::new();
        r.write_csv(&mut csv)?;
        std::fs::write(study.dir.join("noise.csv"), csv)?;
    }
    let hist = NoiseHistory::new(&r, cutoff)?;
    let partition = TimePartition::uniform(grid.t_final(), steps)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);
    for &t in partition.nodes() {
        let u = hist.uhat(t)?;
        norms.push(vec![t, u.l2_norm()]);
        states.push(u);
    }
    let path = biharm_core::oracle::PathSolution {
        times: partition.nodes().to_vec(),
        states,
        provenance: biharm_core::oracle::Provenance {
            seed: Some(seed),
            noise_grid: Some(grid),
            uniform_partition: true,
            scheme: "mild-solution",
        },
    };
    let mut csv = Vec::new();
    path.write_csv(&mut csv)?;
    std::fs::write(study.dir.join("results.csv"), csv)?;
    study.write_csv("path_norms.csv", "time,l2_norm", &norms)?;
    study.write_plot(
        "plot.gp",
        "set datafile separator ','\n\
         set xlabel 'time'\n\
         set ylabel 'L2 norm'\n\
         plot 'path_norms.csv' skip 1 using 1:2 with linespoints title 'mild solution norm'\n",
    )?;
    Ok(())
}

fn modeling_error(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let base = common_grid(cfg)?;
    let cutoff = SpectralCutoff::new(base.dim(), cfg.usize_or("spectral", "cutoff", 64)?)?;
    let t = cfg.f64_or("study", "t", base.t_final())?;
    let parameter = cfg.str_or("sweep", "parameter", "dt").to_string();
    let levels = cfg.usize_list_or("sweep", "levels", &[base.time_cells()])?;
    let want_split = cfg.flag_or("study", "theta_split", false)?;
    note_grid(study, &base);
    study.note("spectral.cutoff", cutoff.n_max());
    study.note("study.t", format_float(t));
    study.note("sweep.parameter", &parameter);
    let mut rows = Vec::new();
    let mut split_rows = Vec::new();
    for &level in &levels {
        let grid = match parameter.as_str() {
            "dt" => NoiseGrid::new(base.dim(), base.t_final(), level, base.space_cells())?,
            "dx" => NoiseGrid::new(base.dim(), base.t_final(), base.time_cells(), level)?,
            other => {
                return Err(CliError::Validation(format!(
                    "modeling-error sweeps dt or dx, not `{other}`"
                )))
            }
        };
        let split = modeling_error_split(&grid, t, cutoff)?;
        let p = if parameter == "dt" { grid.dt() } else { grid.dx() };
        rows.push(vec![p, split.total, split.total, split.total]);
        split_rows.push(vec![p, split.space_sq, split.time_sq]);
    }
    study.write_csv("results.csv", "parameter,error_sq,ci_low,ci_high", &rows)?;
    if want_split {
        study.write_csv("results_split.csv", "parameter,space_sq,time_sq", &split_rows)?;
    }
    fit_into_manifest(study, &rows, "modeling");
    study.write_plot("plot.gp", &loglog_plot("results.csv", "modeling error"))?;
    Ok(())
}

fn time_error(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let grid = common_grid(cfg)?;
    let cutoff = SpectralCutoff::new(grid.dim(), cfg.usize_or("spectral", "cutoff", 32)?)?;
    let levels = cfg.usize_list_or("sweep", "levels", &[4, 8, 16, 32, 64])?;
    note_grid(study, &grid);
    study.note("spectral.cutoff", cutoff.n_max());
    let mut rows = Vec::new();
    for &m in &levels {
        let errs = timedisc_errors_exact(&grid, m, cutoff)?;
        let max = errs.iter().cloned().fold(0.0f64, f64::max);
        rows.push(vec![grid.t_final() / m as f64, max, max, max]);
    }
    study.write_csv("results.csv", "parameter,error_sq,ci_low,ci_high", &rows)?;
    fit_into_manifest(study, &rows, "time-discretization");
    study.write_plot("plot.gp", &loglog_plot("results.csv", "time-discretization error"))?;
    Ok(())
}

fn semidiscrete_error(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let grid = common_grid(cfg)?;
    let cutoff = SpectralCutoff::new(grid.dim(), cfg.usize_or("spectral", "cutoff", 32)?)?;
    let degree = cfg.usize_or("fem", "degree", 3)?;
    let levels = cfg.usize_list_or("sweep", "levels", &[2, 4, 8])?;
    let times = cfg.f64_list_or("study", "times", &[grid.t_final()])?;
    let mc = mc_config(cfg)?;
    let eig_limit =
        cfg.usize_or("guards", "eig_dof_limit", biharm_core::fem::DEFAULT_EIG_DOF_LIMIT)?;
    note_grid(study, &grid);
    study.note("spectral.cutoff", cutoff.n_max());
    study.note("fem.degree", degree);
    study.note("mode.replicates", mc.replicates);
    study.note("mode.bootstrap", mc.bootstrap_resamples);
    study.note("seeds.master", mc.master_seed);
    study.note("guards.eig_dof_limit", eig_limit);
    let mut rows = Vec::new();
    for &k in &levels {
        let ops = make_ops(cfg, grid.dim(), degree, k)?;
        let rep = semidiscrete_error_mc(&ops, &grid, &times, cutoff, &mc, eig_limit)?;
        rows.push(vec![1.0 / k as f64, rep.max_sq.mean, rep.max_sq.ci_low, rep.max_sq.ci_high]);
    }
    study.write_csv("results.csv", "parameter,error_sq,ci_low,ci_high", &rows)?;
    fit_into_manifest(study, &rows, "semidiscrete");
    study.write_plot("plot.gp", &loglog_plot("results.csv", "semidiscrete error"))?;
    Ok(())
}

fn make_ops(
    cfg: &RunConfig,
    dim: usize,
    degree: usize,
    elements: usize,
) -> Result<FemOperators, CliError> {
    let mut space = FemSpace::new(dim, degree, elements)?;
    if let Some(limit) = cfg.get("guards", "dof_limit") {
        let limit: usize = limit
            .parse()
            .map_err(|_| CliError::Validation("cannot parse [guards] dof_limit".into()))?;
        space = space.with_dof_limit(limit);
    }
    Ok(FemOperators::new(space)?)
}

fn full_error(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let grid = common_grid(cfg)?;
    let cutoff = SpectralCutoff::new(grid.dim(), cfg.usize_or("spectral", "cutoff", 32)?)?;
    let degree = cfg.usize_or("fem", "degree", 3)?;
    let steps = cfg.usize_or("time", "steps", 64)?;
    let levels = cfg.usize_list_or("sweep", "levels", &[2, 4, 8])?;
    let mc = mc_config(cfg)?;
    note_grid(study, &grid);
    study.note("spectral.cutoff", cutoff.n_max());
    study.note("fem.degree", degree);
    study.note("time.steps", steps);
    study.note("mode.replicates", mc.replicates);
    study.note("mode.bootstrap", mc.bootstrap_resamples);
    study.note("seeds.master", mc.master_seed);
    let partition = TimePartition::uniform(grid.t_final(), steps)?;
    let mut l2_rows = Vec::new();
    let mut linf_rows = Vec::new();
    for &k in &levels {
        let ops = make_ops(cfg, grid.dim(), degree, k)?;
        let rep = fulldisc_error_mc(&ops, &grid, &partition, cutoff, &mc)?;
        let h = 1.0 / k as f64;
        l2_rows.push(vec![h, rep.l2_time_sq.mean, rep.l2_time_sq.ci_low, rep.l2_time_sq.ci_high]);
        linf_rows.push(vec![
            h,
            rep.linf_time_sq.mean,
            rep.linf_time_sq.ci_low,
            rep.linf_time_sq.ci_high,
        ]);
    }
    study.write_csv("results.csv", "parameter,error_sq,ci_low,ci_high", &l2_rows)?;
    study.write_csv("results_linf.csv", "parameter,error_sq,ci_low,ci_high", &linf_rows)?;
    fit_into_manifest(study, &l2_rows, "fully-discrete-l2t");
    study.write_plot("plot.gp", &loglog_plot("results.csv", "fully-discrete error"))?;
    Ok(())
}

fn compare_time_full(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let grid = common_grid(cfg)?;
    let cutoff = SpectralCutoff::new(grid.dim(), cfg.usize_or("spectral", "cutoff", 32)?)?;
    let degree = cfg.usize_or("fem", "degree", 3)?;
    let elements = cfg.usize_or("fem", "elements", 4)?;
    let levels = cfg.usize_list_or("sweep", "levels", &[256, 512, 1024, 2048, 4096])?;
    let mc = mc_config(cfg)?;
    note_grid(study, &grid);
    study.note("spectral.cutoff", cutoff.n_max());
    study.note("fem.degree", degree);
    study.note("fem.elements", elements);
    study.note("mode.replicates", mc.replicates);
    study.note("seeds.master", mc.master_seed);
    let ops = make_ops(cfg, grid.dim(), degree, elements)?;
    let mut rows = Vec::new();
    for &m in &levels {
        let rep = timedisc_vs_fulldisc_mc(&ops, &grid, m, cutoff, &mc)?;
        rows.push(vec![
            grid.t_final() / m as f64,
            rep.max_sq.mean,
            rep.max_sq.ci_low,
            rep.max_sq.ci_high,
        ]);
    }
    study.write_csv("results.csv", "parameter,error_sq,ci_low,ci_high", &rows)?;
    let lo = rows.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r[1]).fold(0.0f64, f64::max);
    study.note("comparison.min", format_float(lo));
    study.note("comparison.max", format_float(hi));
    study.note("comparison.variation", format_float((hi - lo) / (0.5 * (hi + lo))));
    study.write_plot("plot.gp", &loglog_plot("results.csv", "time vs full comparison"))?;
    Ok(())
}

fn det_convergence(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let dim = cfg.usize_or("problem", "d", 2)?;
    let t_final = cfg.f64_or("problem", "t_final", 0.01)?;
    let degree = cfg.usize_or("fem", "degree", 3)?;
    let levels = cfg.usize_list_or("sweep", "levels", &[4, 8, 16, 32])?;
    let steps = cfg.usize_or("time", "steps", 32)?;
    let quad_points = cfg.usize_or("study", "quad_points", 32)?;
    let eig_limit =
        cfg.usize_or("guards", "eig_dof_limit", biharm_core::fem::DEFAULT_EIG_DOF_LIMIT)?;
    let cutoff = SpectralCutoff::new(dim, cfg.usize_or("spectral", "cutoff", 2)?)?;
    study.note("problem.d", dim);
    study.note("problem.t_final", format_float(t_final));
    study.note("fem.degree", degree);
    study.note("time.steps", steps);
    study.note("study.quad_points", quad_points);
    study.note("spectral.cutoff", cutoff.n_max());
    study.note("guards.eig_dof_limit", eig_limit);
    let alpha = biharm_core::spectral::MultiIndex::new(&vec![1u32; dim][..])
        .map_err(CliError::from)?;
    let w0 = biharm_core::spectral::SpectralField::unit(cutoff, &alpha)?;
    let report =
        det_fem_study(&w0, dim, degree, &levels, t_final, steps, quad_points, 0.5, eig_limit)?;
    let semi_rows: Vec<Vec<f64>> = report
        .h_values
        .iter()
        .zip(&report.semidiscrete_errors)
        .map(|(&h, &e)| vec![h, e * e, e * e, e * e])
        .collect();
    let coupled_rows: Vec<Vec<f64>> = report
        .h_values
        .iter()
        .zip(&report.be_coupled_errors)
        .map(|(&h, &e)| vec![h, e * e, e * e, e * e])
        .collect();
    study.write_csv("results.csv", "parameter,error_sq,ci_low,ci_high", &semi_rows)?;
    study.write_csv("results_coupled.csv", "parameter,error_sq,ci_low,ci_high", &coupled_rows)?;
    study.note("semidiscrete.slope", format_float(report.semidiscrete_rate.slope));
    study.note(
        "semidiscrete.theory",
        format_float(report.semidiscrete_rate.theory_exponent),
    );
    study.note("semidiscrete.pass", report.semidiscrete_rate.pass);
    study.note("coupled.slope", format_float(report.be_coupled_rate.slope));
    study.note("coupled.pass", report.be_coupled_rate.pass);
    study.write_plot("plot.gp", &loglog_plot("results.csv", "deterministic convergence"))?;
    Ok(())
}

fn series_check(cfg: &RunConfig, study: &mut Study) -> Result<(), CliError> {
    let dim = cfg.usize_or("problem", "d", 2)?;
    study.note("problem.d", dim);
    // Semigroup series sweep: Σ (1−e^{−λ²δ})/λ² against the envelope
    // p_d(δ^{1/4}) δ^{(4−d)/4}, cutoff scaled like δ^{-1/4}.
    let mut rows = Vec::new();
    let mut delta = 1e-6f64;
    let safety = if dim == 3 { 6.0 } else { 10.0 };
    while delta <= 1e-1 + 1e-12 {
        let n_max = ((delta.powf(-0.25) * safety).ceil() as usize).max(8);
        let sum = series_semigroup_partial_sum(dim, delta, n_max)?;
        let env = p_poly(dim, delta.powf(0.25)) * delta.powf((4.0 - dim as f64) / 4.0);
        rows.push(vec![delta, sum, sum / env]);
        delta *= 10.0;
    }
    study.write_csv("results.csv", "delta,sum,bound_ratio", &rows)?;
    // Decay series: ε · Σ |α|^{-(d+ε)} over a dyadic ε sweep.
    let n_max = match dim {
        1 => 1_000_000,
        2 => 512,
        _ => 128,
    };
    study.note("series.decay_cutoff", n_max);
    let mut a1_rows = Vec::new();
    for k in -1i32..=10 {
        let eps = 2f64.powi(-k);
        let sum = series_decay_partial_sum(dim, 1.0, eps, n_max)?;
        a1_rows.push(vec![eps, sum, eps * sum]);
    }
    study.write_csv("results_decay.csv", "eps,sum,eps_times_sum", &a1_rows)?;
    let worst = rows.iter().map(|r| r[2]).fold(0.0f64, f64::max);
    study.note("semigroup.max_ratio", format_float(worst));
    let worst_a1 = a1_rows.iter().map(|r| r[2]).fold(0.0f64, f64::max);
    study.note("decay.max_eps_times_sum", format_float(worst_a1));
    study.write_plot(
        "plot.gp",
        "set datafile separator ','\n\
         set logscale x\n\
         set xlabel 'delta'\n\
         set ylabel 'sum / envelope'\n\
         plot 'results.csv' skip 1 using 1:3 with linespoints title 'bound ratio'\n",
    )?;
    Ok(())
}

/// Fits √error against the parameter when the sweep has enough points and
/// records the slope in the manifest.
fn fit_into_manifest(study: &mut Study, rows: &[Vec<f64>], label: &str) {
    if rows.len() < 3 {
        return;
    }
    let params: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let roots: Vec<f64> = rows.iter().map(|r| r[1].max(1e-300).sqrt()).collect();
    if let Ok(s) = ConvergenceStudy::new("parameter", params, roots) {
        let rep = fit_rate(&s, 0.0, 0.0);
        study.note(&format!("{label}.root_slope"), format_float(rep.slope));
        study.note(&format!("{label}.loo_max_dev"), format_float(rep.loo_max_dev));
        study.note(&format!("{label}.excluded_coarsest"), rep.excluded_coarsest);
    }
}
