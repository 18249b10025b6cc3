//! Monte Carlo error studies with common random numbers.
//!
//! Every study couples the Galerkin scheme and the semi-analytic oracle on
//! the identical noise realization, so the sampled differences estimate
//! the scheme error directly rather than a difference of two large
//! variances. Replicates run in parallel, each on its own counter-based
//! stream; aggregation is a deterministic function of the replicate set.

use super::fit::{bootstrap_matrix_max, bootstrap_mean, McMoment};
use crate::fem::{DiffQuadrature, FemOperators};

use crate::lab::RateReport;
use crate::noise::{NoiseGrid, NoiseRealization, SeedSpec};
use crate::oracle::{deterministic_be, NoiseHistory, TimePartition};
use crate::quad::GaussRule;
use crate::spectral::{SpectralCutoff, SpectralField};
use crate::{Error, Result};
use rayon::prelude::*;

/// Replicate count, stream seed and bootstrap configuration for one study.
#[derive(Debug, Clone, Copy)]
pub struct McConfig {
    pub replicates: usize,
    pub master_seed: u64,
    pub bootstrap_resamples: usize,
}

impl McConfig {
    pub fn new(replicates: usize, master_seed: u64) -> Self {
        McConfig { replicates, master_seed, bootstrap_resamples: 1000 }
    }

    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::invalid("Monte Carlo needs at least 2 replicates"));
        }
        Ok(())
    }
}

/// Monte Carlo moments of the fully-discrete error ‖Û_h^m − û(τ_m)‖².
#[derive(Debug, Clone)]
pub struct FullDiscretizationReport {
    /// E‖Û_h^m − û(τ_m)‖² for m = 0..=M.
    pub per_step: Vec<McMoment>,
    /// Σ_m k_m E‖·‖² (discrete L²ₜ aggregate, squared scale).
    pub l2_time_sq: McMoment,
    /// max_m E‖·‖² (discrete L∞ₜ aggregate, squared scale).
    pub linf_time_sq: McMoment,
    pub replicates: usize,
}

/// Per-replicate worker output, ordered by replicate id for deterministic
/// aggregation.
fn run_replicates<F>(mc: &McConfig, worker: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    (0..mc.replicates as u64)
        .into_par_iter()
        .map(|rep| worker(rep).map_err(|e| Error::solver(format!("replicate {rep}: {e}"))))
        .collect()
}

/// Fully-discrete vs mild-solution error on common noise:
/// for each replicate the Backward Euler Galerkin path and the exact
/// û(τ_m) coefficients consume the same realization, and the squared L²
/// distances are averaged across replicates.
pub fn fulldisc_error_mc(
    ops: &FemOperators,
    grid: &NoiseGrid,
    partition: &TimePartition,
    cutoff: SpectralCutoff,
    mc: &McConfig,
) -> Result<FullDiscretizationReport> {
    mc.validate()?;
    let pairing = ops.spectral_pairing(cutoff)?;
    let rows = run_replicates(mc, |rep| {
        let r = NoiseRealization::sample(*grid, SeedSpec::new(mc.master_seed, rep));
        let path = ops.fully_discrete_path(&r, partition)?;
        let hist = NoiseHistory::new(&r, cutoff)?;
        let mut row = Vec::with_capacity(partition.num_steps() + 1);
        for (m, t) in partition.nodes().iter().enumerate() {
            let uh = hist.uhat(*t)?;
            row.push(ops.l2_diff_sq(&pairing, &path.states[m], &uh)?);
        }
        Ok(row)
    })?;
    let per_step = per_column_moments(&rows, mc);
    let l2_rows: Vec<f64> = rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .skip(1)
                .map(|(m, e)| partition.step(m - 1) * e)
                .sum()
        })
        .collect();
    let l2_time_sq = bootstrap_mean(&l2_rows, mc.bootstrap_resamples, mc.master_seed ^ 0x17);
    let linf_time_sq =
        bootstrap_matrix_max(&rows, mc.bootstrap_resamples, mc.master_seed ^ 0x18);
    Ok(FullDiscretizationReport {
        per_step,
        l2_time_sq,
        linf_time_sq,
        replicates: mc.replicates,
    })
}

/// Moments of ‖Û_h^m − Û^m‖² between the fully-discrete scheme and the
/// spectral time-discrete iterates on common noise and a common uniform
/// partition. The comparison isolates the spatial error: its size should
/// not respond to Δτ.
#[derive(Debug, Clone)]
pub struct PathComparisonReport {
    pub per_step: Vec<McMoment>,
    pub max_sq: McMoment,
    /// Bound on the second moment carried by modes beyond the cutoff,
    /// Σ_tail 1/(2λ²): when it exceeds `max_sq` the measured gap is
    /// dominated by spectral truncation rather than by the mesh.
    pub truncation_bound_sq: f64,
    pub replicates: usize,
}

pub fn timedisc_vs_fulldisc_mc(
    ops: &FemOperators,
    grid: &NoiseGrid,
    m_steps: usize,
    cutoff: SpectralCutoff,
    mc: &McConfig,
) -> Result<PathComparisonReport> {
    mc.validate()?;
    let partition = TimePartition::uniform(grid.t_final(), m_steps)?;
    let pairing = ops.spectral_pairing(cutoff)?;
    let rows = run_replicates(mc, |rep| {
        let r = NoiseRealization::sample(*grid, SeedSpec::new(mc.master_seed, rep));
        let fem_path = ops.fully_discrete_path(&r, &partition)?;
        let hist = NoiseHistory::new(&r, cutoff)?;
        let spectral_path = hist.time_discrete_path(&partition)?;
        let mut row = Vec::with_capacity(m_steps);
        for m in 1..=m_steps {
            row.push(ops.l2_diff_sq(&pairing, &fem_path.states[m], &spectral_path.states[m])?);
        }
        Ok(row)
    })?;
    let per_step = per_column_moments(&rows, mc);
    let max_sq = bootstrap_matrix_max(&rows, mc.bootstrap_resamples, mc.master_seed ^ 0x19);
    Ok(PathComparisonReport {
        per_step,
        max_sq,
        truncation_bound_sq: cutoff.tail_majorant_inv_lambda_sq() / 2.0,
        replicates: mc.replicates,
    })
}

/// Moments of the semidiscrete error ‖û_h(t) − û(t)‖² at the query times,
/// with û_h evolved exactly through the discrete eigenpairs (Duhamel with
/// piecewise-constant loads).
#[derive(Debug, Clone)]
pub struct SemidiscreteReport {
    pub per_time: Vec<McMoment>,
    pub max_sq: McMoment,
    pub replicates: usize,
}

pub fn semidiscrete_error_mc(
    ops: &FemOperators,
    grid: &NoiseGrid,
    times: &[f64],
    cutoff: SpectralCutoff,
    mc: &McConfig,
    eig_dof_limit: usize,
) -> Result<SemidiscreteReport> {
    mc.validate()?;
    if times.is_empty() {
        return Err(Error::invalid("need at least one query time"));
    }
    let eig = ops.discrete_eigenpairs(eig_dof_limit)?;
    let pairing = ops.spectral_pairing(cutoff)?;
    let rows = run_replicates(mc, |rep| {
        let r = NoiseRealization::sample(*grid, SeedSpec::new(mc.master_seed, rep));
        let loads = ops.noise_cell_loads(&r)?;
        let hist = NoiseHistory::new(&r, cutoff)?;
        let mut row = Vec::with_capacity(times.len());
        for &t in times {
            let semi = eig.duhamel(&loads, grid, t)?;
            row.push(ops.l2_diff_sq(&pairing, &semi, &hist.uhat(t)?)?);
        }
        Ok(row)
    })?;
    let per_time = per_column_moments(&rows, mc);
    let max_sq = bootstrap_matrix_max(&rows, mc.bootstrap_resamples, mc.master_seed ^ 0x1a);
    Ok(SemidiscreteReport { per_time, max_sq, replicates: mc.replicates })
}

fn per_column_moments(rows: &[Vec<f64>], mc: &McConfig) -> Vec<McMoment> {
    let cols = rows[0].len();
    (0..cols)
        .map(|c| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            bootstrap_mean(&col, mc.bootstrap_resamples, mc.master_seed ^ (c as u64))
        })
        .collect()
}

/// Deterministic convergence study: L²ₜ(L²ₓ) distances of the semidiscrete
/// flow w_h to the exact flow w, and of the fully-discrete Backward Euler
/// path W_h^m to the time-discrete iterates W^m, over a sweep of mesh
/// sizes, with fitted slopes against ν̃(r, 1).
#[derive(Debug, Clone)]
pub struct DetFemStudyReport {
    pub h_values: Vec<f64>,
    /// √∫₀ᵀ ‖w − w_h‖² dt per mesh.
    pub semidiscrete_errors: Vec<f64>,
    /// √Σ_m k_m ‖W^m − W_h^m‖² per mesh.
    pub be_coupled_errors: Vec<f64>,
    pub semidiscrete_rate: RateReport,
    pub be_coupled_rate: RateReport,
}

#[allow(clippy::too_many_arguments)]
pub fn det_fem_study(
    w0: &SpectralField,
    dim: usize,
    degree: usize,
    elements_list: &[usize],
    t_final: f64,
    be_steps: usize,
    time_quad_points: usize,
    slack: f64,
    eig_dof_limit: usize,
) -> Result<DetFemStudyReport> {
    if elements_list.len() < 3 {
        return Err(Error::invalid("mesh sweep needs at least 3 resolutions"));
    }
    let cutoff = w0.cutoff();
    let partition = TimePartition::uniform(t_final, be_steps)?;
    let be_exact = deterministic_be(w0, &partition)?;
    let rule = GaussRule::new(time_quad_points.max(4));
    let mut h_values = Vec::new();
    let mut semi_errors = Vec::new();
    let mut coupled_errors = Vec::new();
    for &k in elements_list {
        let ops = FemOperators::new(crate::fem::FemSpace::new(dim, degree, k)?)?;
        let dq = DiffQuadrature::new(ops.space().clone(), cutoff)?;
        let eig = ops.discrete_eigenpairs(eig_dof_limit)?;
        let load = ops.load_spectral(w0)?;
        // ∫₀ᵀ ‖w − w_h‖² dt by Gauss quadrature in time
        let mut l2t = 0.0;
        for (t, w) in rule.mapped(0.0, t_final) {
            let wh = eig.evolve_from_load(&load, t)?;
            let exact = w0.semigroup(t)?;
            let e = dq.l2_error(&wh, &exact)?;
            l2t += w * e * e;
        }
        // Σ_m k_m ‖W^m − W_h^m‖²
        let fd_path = ops.deterministic_fd_path(w0, &partition)?;
        let mut coupled = 0.0;
        for m in 1..=be_steps {
            let e = dq.l2_error(&fd_path.states[m], &be_exact.states[m])?;
            coupled += partition.step(m - 1) * e * e;
        }
        h_values.push(1.0 / k as f64);
        semi_errors.push(l2t.max(0.0).sqrt());
        coupled_errors.push(coupled.max(0.0).sqrt());
    }
    let theory = super::deterministic_rate_exponent(degree, 1.0);
    let semi_study =
        super::ConvergenceStudy::new("h", h_values.clone(), semi_errors.clone())?;
    let coupled_study =
        super::ConvergenceStudy::new("h", h_values.clone(), coupled_errors.clone())?;
    Ok(DetFemStudyReport {
        h_values,
        semidiscrete_errors: semi_errors,
        be_coupled_errors: coupled_errors,
        semidiscrete_rate: super::fit_rate(&semi_study, theory, slack),
        be_coupled_rate: super::fit_rate(&coupled_study, theory, slack),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FemSpace;
    use crate::spectral::MultiIndex;

    fn small_ops(degree: usize, k: usize) -> FemOperators {
        FemOperators::new(FemSpace::new(2, degree, k).unwrap()).unwrap()
    }

    #[test]
    fn fulldisc_mc_zero_noise_hook_and_exact_isometry_band() {
        // With all increments forced to zero through the test hook the
        // error vanishes identically.
        let ops = small_ops(2, 3);
        let grid = NoiseGrid::new(2, 0.05, 2, 2).unwrap();
        let partition = TimePartition::uniform(0.05, 2).unwrap();
        let cutoff = SpectralCutoff::new(2, 6).unwrap();
        let dq = DiffQuadrature::new(ops.space().clone(), cutoff).unwrap();
        let r = NoiseRealization::zeros(grid);
        let path = ops.fully_discrete_path(&r, &partition).unwrap();
        let hist = NoiseHistory::new(&r, cutoff).unwrap();
        for (m, t) in partition.nodes().iter().enumerate() {
            let e = dq.l2_error(&path.states[m], &hist.uhat(*t).unwrap()).unwrap();
            assert_eq!(e, 0.0);
        }
        // Small-replicate smoke run of the full study.
        let mc = McConfig { replicates: 8, master_seed: 2, bootstrap_resamples: 200 };
        let rep = fulldisc_error_mc(&ops, &grid, &partition, cutoff, &mc).unwrap();
        assert_eq!(rep.per_step.len(), 3);
        assert_eq!(rep.per_step[0].mean, 0.0);
        assert!(rep.l2_time_sq.mean > 0.0);
        assert!(rep.linf_time_sq.ci_low <= rep.linf_time_sq.mean);
        // Determinism of the aggregate.
        let rep2 = fulldisc_error_mc(&ops, &grid, &partition, cutoff, &mc).unwrap();
        assert_eq!(rep.l2_time_sq.mean, rep2.l2_time_sq.mean);
        assert_eq!(rep.linf_time_sq.ci_high, rep2.linf_time_sq.ci_high);
    }

    #[test]
    fn comparison_mc_runs_and_replicate_errors_report_id() {
        let ops = small_ops(2, 3);
        let grid = NoiseGrid::new(2, 0.05, 4, 2).unwrap();
        let cutoff = SpectralCutoff::new(2, 6).unwrap();
        let mc = McConfig { replicates: 6, master_seed: 9, bootstrap_resamples: 100 };
        let rep = timedisc_vs_fulldisc_mc(&ops, &grid, 4, cutoff, &mc).unwrap();
        assert_eq!(rep.per_step.len(), 4);
        assert!(rep.max_sq.mean > 0.0);
    }

    #[test]
    fn semidiscrete_mc_time_zero_is_exact() {
        let ops = small_ops(2, 2);
        let grid = NoiseGrid::new(2, 0.04, 2, 2).unwrap();
        let cutoff = SpectralCutoff::new(2, 5).unwrap();
        let mc = McConfig { replicates: 4, master_seed: 3, bootstrap_resamples: 50 };
        let rep =
            semidiscrete_error_mc(&ops, &grid, &[0.0, 0.04], cutoff, &mc, 4096).unwrap();
        assert_eq!(rep.per_time[0].mean, 0.0, "both solutions start at zero");
        assert!(rep.per_time[1].mean > 0.0);
    }

    #[test]
    fn det_fem_study_zero_data_rejected_and_mode_runs() {
        let cutoff = SpectralCutoff::new(2, 2).unwrap();
        let alpha = MultiIndex::new(&[1, 1]).unwrap();
        let w0 = SpectralField::unit(cutoff, &alpha).unwrap();
        let report =
            det_fem_study(&w0, 2, 2, &[3, 4, 6], 0.002, 16, 24, 0.6, 4096).unwrap();
        assert_eq!(report.h_values.len(), 3);
        assert!(report.semidiscrete_errors.iter().all(|&e| e > 0.0));
        assert!(report.be_coupled_errors.iter().all(|&e| e > 0.0));
        // Zero initial data produces zero errors, which the study rejects
        // as a degenerate log-log input.
        let zero = SpectralField::zeros(cutoff);
        assert!(det_fem_study(&zero, 2, 2, &[3, 4, 6], 0.002, 8, 16, 0.6, 4096).is_err());
    }
}
