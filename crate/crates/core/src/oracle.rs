//! Semi-analytic solutions of the regularized problem.
//!
//! Because the forcing Ŵ is piecewise constant on the noise grid and the
//! problem is diagonal in the product-sine basis, the mild solution
//!
//!   û(t,x) = ∫_0^t ∫_D G(t−s; x, y) Ŵ(s, y) ds dy
//!
//! has modewise coefficients that are finite sums of closed-form
//! exponential integrals: û_α(t) = Σ_n Ŵ_{α,n} I_{n,α}(t), with
//! Ŵ_{α,n} the spectral coefficient of Ŵ on the n-th time cell and
//!
//!   I_{n,α}(t) = ∫_{T_n ∩ (0,t)} e^{−λ_α²(t−s)} ds.
//!
//! No time quadrature appears anywhere: every integral of an exponential
//! is evaluated in expm1 form (cancellation-free for λ²Δt ≪ 1, which is
//! exactly the regime the convergence rates live in), and integrals of Ŵ
//! over partition intervals are exact interval-overlap sums.
//!
//! The same calculus gives the Backward Euler time-discrete iterates
//! Û^m (resolvent powers in place of the semigroup) and the deterministic
//! problem's exact and time-discrete solutions.

use crate::noise::{NoiseGrid, NoiseRealization, SeedSpec};
use crate::spectral::{cell_energy_table_1d, SpectralCutoff, SpectralField};
use crate::util::pairwise_sum_by;
use crate::{Error, Result};

/// Nodes 0 = τ_0 < τ_1 < … < τ_M = T of a time partition.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    nodes: Vec<f64>,
    uniform: bool,
}

impl TimePartition {
    /// Uniform partition with M steps of size T/M.
    pub fn uniform(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || steps == 0 {
            return Err(Error::invalid("partition needs t_final > 0 and steps >= 1"));
        }
        let nodes = (0..=steps).map(|m| t_final * m as f64 / steps as f64).collect();
        Ok(TimePartition { nodes, uniform: true })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::invalid("partition must start at 0 and have >= 1 step"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("partition nodes must strictly increase"));
        }
        let k0 = nodes[1] - nodes[0];
        let uniform = nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - k0).abs() <= 1e-12 * k0);
        Ok(TimePartition { nodes, uniform })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn num_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// k_m = τ_m − τ_{m−1} for m = 1..=M (0-based argument).
    pub fn step(&self, m: usize) -> f64 {
        self.nodes[m + 1] - self.nodes[m]
    }

    pub fn k_max(&self) -> f64 {
        (1..self.nodes.len())
            .map(|m| self.nodes[m] - self.nodes[m - 1])
            .fold(0.0, f64::max)
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }
}

/// Time-indexed record of one solution trajectory.
#[derive(Debug, Clone)]
pub struct PathSolution<T> {
    pub times: Vec<f64>,
    pub states: Vec<T>,
    pub provenance: Provenance,
}

/// Where a path came from: enough to reproduce it.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    pub seed: Option<SeedSpec>,
    pub noise_grid: Option<NoiseGrid>,
    pub uniform_partition: bool,
    pub scheme: &'static str,
}

pub type SpectralPath = PathSolution<SpectralField>;

impl SpectralPath {
    /// CSV rows (time, alpha, coefficient); alpha components are joined
    /// with ':'.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"time,alpha,coeff\n")?;
        for (t, f) in self.times.iter().zip(&self.states) {
            for (alpha, c) in f.cutoff().iter().zip(f.coeffs()) {
                let label = alpha
                    .comps()
                    .iter()
                    .map(|a| a.to_string())
                    .collect::<Vec<_>>()
                    .join(":");
                w.write_all(
                    format!("{},{label},{}\n", crate::lab::format_float(*t), crate::lab::format_float(*c))
                        .as_bytes(),
                )?;
            }
        }
        Ok(())
    }
}

/// ∫_{(a,b) ∩ (0,t)} e^{−ρ(t−s)} ds in cancellation-free form.
/// `rho` is the modal decay rate λ_α² (or a discrete eigenvalue).
pub fn decay_cell_integral(rho: f64, t: f64, a: f64, b: f64) -> f64 {
    if t <= a {
        return 0.0;
    }
    let hi = b.min(t);
    let width = hi - a;
    if width <= 0.0 {
        return 0.0;
    }
    (-(rho * (t - hi)).min(700.0)).exp() * (-(-rho * width).exp_m1()) / rho
}

/// Σ_n I_{n,α}(t)² over the cells of a uniform time grid, in closed form:
/// the full cells form a geometric series in e^{−2ρΔt},
///
///   Σ_{n<N̂} I_n² = g² e^{−2ρ(t−t_{N̂−1})} (1−q^{N̂−1})/(1−q),
///   g = (1−e^{−ρΔt})/ρ,  q = e^{−2ρΔt},
///
/// plus the straddled cell (1−e^{−ρ(t−t_{N̂−1})})²/ρ². All factors in
/// expm1 form, so the cell count can be astronomically large (needed to
/// push the temporal floor below a spatial sweep) at O(1) cost.
pub(crate) fn sum_sq_decay_integrals(rho: f64, t: f64, grid: &NoiseGrid) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let dt = grid.dt();
    let last = grid.time_cell_of(t).unwrap_or(grid.time_cells() - 1);
    let t_last = last as f64 * dt;
    let partial = (-(-rho * (t - t_last)).exp_m1()) / rho;
    let mut acc = partial * partial;
    if last > 0 {
        let g = (-(-rho * dt).exp_m1()) / rho;
        let damp = (-(2.0 * rho * (t - t_last)).min(1400.0)).exp();
        // (1−q^{N̂−1})/(1−q) with q = e^{−2ρΔt}
        let num = -(-2.0 * rho * dt * last as f64).exp_m1();
        let den = -(-2.0 * rho * dt).exp_m1();
        acc += g * g * damp * num / den;
    }
    acc
}

/// Precomputed per-time-cell spectral coefficients of Ŵ for one
/// realization; the workhorse behind û and the time-discrete iterates.
#[derive(Debug, Clone)]
pub struct NoiseHistory {
    grid: NoiseGrid,
    cutoff: SpectralCutoff,
    seed: Option<SeedSpec>,
    lambda2: Vec<f64>,
    /// coeffs[n][idx]: Ŵ_α on time cell n.
    coeffs: Vec<Vec<f64>>,
}

impl NoiseHistory {
    pub fn new(r: &NoiseRealization, cutoff: SpectralCutoff) -> Result<Self> {
        let fields = r.spectral_coeffs(cutoff)?;
        Ok(NoiseHistory {
            grid: *r.grid(),
            cutoff,
            seed: r.seed(),
            lambda2: cutoff.eigenvalues().iter().map(|l| l * l).collect(),
            coeffs: fields.into_iter().map(|f| f.coeffs().to_vec()).collect(),
        })
    }

    pub fn grid(&self) -> &NoiseGrid {
        &self.grid
    }

    pub fn cutoff(&self) -> SpectralCutoff {
        self.cutoff
    }

    /// Mild-solution coefficients û_α(t) = Σ_n Ŵ_{α,n} I_{n,α}(t).
    pub fn uhat(&self, t: f64) -> Result<SpectralField> {
        if !(0.0..=self.grid.t_final() + 1e-12).contains(&t) {
            return Err(Error::invalid("time outside [0, T]"));
        }
        let dt = self.grid.dt();
        let n_cells = self.grid.time_cells();
        let mut coeffs = vec![0.0; self.cutoff.len()];
        for (idx, c) in coeffs.iter_mut().enumerate() {
            let rho = self.lambda2[idx];
            let mut acc = 0.0;
            for n in (0..n_cells).rev() {
                let a = n as f64 * dt;
                if t <= a {
                    continue;
                }
                let i = decay_cell_integral(rho, t, a, (n + 1) as f64 * dt);
                let term = self.coeffs[n][idx] * i;
                acc += term;
                if i * i <= 1e-68 * (acc * acc + 1e-300) {
                    break;
                }
            }
            *c = acc;
        }
        SpectralField::from_coeffs(self.cutoff, coeffs)
    }

    /// Exact overlap integrals J_α = ∫_a^b Ŵ_α dτ (interval intersections
    /// of the noise grid with (a, b); never quadrature).
    pub fn integral_of_noise(&self, a: f64, b: f64) -> Vec<f64> {
        let dt = self.grid.dt();
        let mut out = vec![0.0; self.cutoff.len()];
        for n in 0..self.grid.time_cells() {
            let lo = (n as f64 * dt).max(a);
            let hi = ((n + 1) as f64 * dt).min(b);
            if hi <= lo {
                continue;
            }
            let w = hi - lo;
            for (o, c) in out.iter_mut().zip(&self.coeffs[n]) {
                *o += w * c;
            }
        }
        out
    }

    /// Backward Euler time-discrete path by the one-step recursion
    /// Û^m = (I + k_m Δ²)^{−1} (Û^{m−1} + ∫_{Δ_m} Ŵ dτ), valid for any
    /// partition. Û^0 = 0.
    pub fn time_discrete_path(&self, partition: &TimePartition) -> Result<SpectralPath> {
        if (partition.t_final() - self.grid.t_final()).abs() > 1e-12 * self.grid.t_final() {
            return Err(Error::invalid("partition horizon differs from the noise grid"));
        }
        let mut states = Vec::with_capacity(partition.num_steps() + 1);
        let mut current = vec![0.0; self.cutoff.len()];
        states.push(SpectralField::zeros(self.cutoff));
        for m in 0..partition.num_steps() {
            let k = partition.step(m);
            let j = self.integral_of_noise(partition.nodes()[m], partition.nodes()[m + 1]);
            for (idx, c) in current.iter_mut().enumerate() {
                *c = (*c + j[idx]) / (1.0 + k * self.lambda2[idx]);
            }
            states.push(SpectralField::from_coeffs(self.cutoff, current.clone())?);
        }
        Ok(SpectralPath {
            times: partition.nodes().to_vec(),
            states,
            provenance: Provenance {
                seed: self.seed,
                noise_grid: Some(self.grid),
                uniform_partition: partition.is_uniform(),
                scheme: "backward-euler-time-discrete",
            },
        })
    }

    /// Resolvent-power closed form Û^m = Σ_{j≤m} Λ^{m−j+1} ∫_{Δ_j} Ŵ dτ.
    /// Only valid on uniform partitions; used to cross-check the recursion.
    pub fn time_discrete_closed_form(&self, partition: &TimePartition) -> Result<SpectralPath> {
        if !partition.is_uniform() {
            return Err(Error::invalid("closed form requires a uniform partition"));
        }
        let dtau = partition.step(0);
        let m_steps = partition.num_steps();
        let overlaps: Vec<Vec<f64>> = (0..m_steps)
            .map(|m| self.integral_of_noise(partition.nodes()[m], partition.nodes()[m + 1]))
            .collect();
        let mut states = vec![SpectralField::zeros(self.cutoff)];
        for m in 1..=m_steps {
            let mut coeffs = vec![0.0; self.cutoff.len()];
            for (idx, c) in coeffs.iter_mut().enumerate() {
                let q = 1.0 / (1.0 + dtau * self.lambda2[idx]);
                *c = pairwise_sum_by(m, |jm1| {
                    overlaps[jm1][idx] * q.powi((m - jm1) as i32)
                });
            }
            states.push(SpectralField::from_coeffs(self.cutoff, coeffs)?);
        }
        Ok(SpectralPath {
            times: partition.nodes().to_vec(),
            states,
            provenance: Provenance {
                seed: self.seed,
                noise_grid: Some(self.grid),
                uniform_partition: true,
                scheme: "backward-euler-resolvent-powers",
            },
        })
    }
}

/// û(t) for one realization (thin wrapper; use [`NoiseHistory`] directly
/// when evaluating many times against the same realization).
pub fn uhat_coeffs(
    r: &NoiseRealization,
    t: f64,
    cutoff: SpectralCutoff,
) -> Result<SpectralField> {
    NoiseHistory::new(r, cutoff)?.uhat(t)
}

/// Exact deterministic solution w(t) = S(t) w_0 of ∂ₜw + Δ²w = 0.
pub fn deterministic_exact(w0: &SpectralField, t: f64) -> Result<SpectralField> {
    w0.semigroup(t)
}

/// Backward Euler iterates of the deterministic problem:
/// W^0 = w_0, W^m = (I + k_m Δ²)^{−1} W^{m−1}.
pub fn deterministic_be(w0: &SpectralField, partition: &TimePartition) -> Result<SpectralPath> {
    let mut states = Vec::with_capacity(partition.num_steps() + 1);
    states.push(w0.clone());
    let mut current = w0.clone();
    for m in 0..partition.num_steps() {
        current = current.resolvent(partition.step(m))?;
        states.push(current.clone());
    }
    Ok(SpectralPath {
        times: partition.nodes().to_vec(),
        states,
        provenance: Provenance {
            seed: None,
            noise_grid: None,
            uniform_partition: partition.is_uniform(),
            scheme: "backward-euler-deterministic",
        },
    })
}

/// Exact second moment of the time increment,
/// E‖û(τ_b) − û(τ_a)‖² = (Δt Δx^d)^{-1} Σ_α B²_α Σ_n (I_{n,α}(τ_b) − I_{n,α}(τ_a))²,
/// where B²_α = Σ_μ b_{α,μ}² factorizes across dimensions. This is the Itô
/// isometry applied modewise to the deterministic response of û_α to a
/// unit increment on each cell.
pub fn holder_moment_exact(
    grid: &NoiseGrid,
    tau_a: f64,
    tau_b: f64,
    cutoff: SpectralCutoff,
) -> Result<f64> {
    if cutoff.dim() != grid.dim() {
        return Err(Error::invalid("cutoff dimension mismatch"));
    }
    if !(0.0 <= tau_a && tau_a <= tau_b && tau_b <= grid.t_final() + 1e-12) {
        return Err(Error::invalid("need 0 <= tau_a <= tau_b <= T"));
    }
    let energy_1d = cell_energy_table_1d(cutoff.n_max(), grid.space_cells());
    let dt = grid.dt();
    let inv_vol = 1.0 / grid.cell_volume();
    let modes: Vec<_> = cutoff.iter().collect();
    Ok(pairwise_sum_by(modes.len(), |idx| {
        let alpha = &modes[idx];
        let lam = alpha.eigenvalue();
        let rho = lam * lam;
        let b2: f64 = alpha.comps().iter().map(|&a| energy_1d[a as usize - 1]).product();
        let mut acc = 0.0;
        for n in 0..grid.time_cells() {
            let a = n as f64 * dt;
            if tau_b <= a {
                break;
            }
            let d = decay_cell_integral(rho, tau_b, a, a + dt)
                - decay_cell_integral(rho, tau_a, a, a + dt);
            acc += d * d;
        }
        b2 * acc * inv_vol
    }))
}

/// Exact per-mode second moments Var û_α(t) = B²_α Σ_n I_{n,α}(t)² / (ΔtΔx^d),
/// summed over the cutoff set: E‖û(t)‖² restricted to the retained modes.
pub fn uhat_second_moment_exact(
    grid: &NoiseGrid,
    t: f64,
    cutoff: SpectralCutoff,
) -> Result<f64> {
    holder_moment_exact(grid, 0.0, t, cutoff)
}
