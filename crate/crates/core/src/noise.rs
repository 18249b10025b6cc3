//! The regularized space-time noise Ŵ.
//!
//! White noise on [0,T] × D only has well-defined cell integrals
//! R^{n,μ} = ∫_{S_{n,μ}} 1 dW over the space-time cells S_{n,μ} = T_n × D_μ
//! of a grid with mesh lengths Δt = T/N★ and Δx = 1/J★. The R^{n,μ} are
//! independent N(0, Δt·Δx^d) variables, and the regularization is the
//! piecewise-constant random field
//!
//!   Ŵ(t,x) = R^{n,μ} / (Δt·Δx^d)   on S_{n,μ}.
//!
//! Sampling is counter-based: each (master seed, replicate, cell) triple is
//! hashed to one Gaussian draw through an inverse-CDF lookup, so streams
//! are splittable, order-independent, and refining a Galerkin mesh while
//! keeping the noise grid reuses bit-identical noise — the coupling needed
//! for common-random-number error studies.

use crate::quad::GaussRule;
use crate::spectral::{cell_integral_table_1d, SpectralCutoff, SpectralField};
use crate::util::pairwise_sum;
use crate::{Error, Result};
use std::io::{Read, Write};

/// The space-time cell grid carrying the noise increments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseGrid {
    dim: usize,
    t_final: f64,
    time_cells: usize,
    space_cells: usize,
}

impl NoiseGrid {
    pub fn new(dim: usize, t_final: f64, time_cells: usize, space_cells: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid("dimension must be 1, 2 or 3"));
        }
        if !(t_final > 0.0) {
            return Err(Error::invalid("final time must be positive"));
        }
        if time_cells == 0 || space_cells == 0 {
            return Err(Error::invalid("grid needs at least one cell per direction"));
        }
        Ok(NoiseGrid { dim, t_final, time_cells, space_cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// N★, the number of time cells.
    pub fn time_cells(&self) -> usize {
        self.time_cells
    }

    /// J★, the number of space cells per dimension.
    pub fn space_cells(&self) -> usize {
        self.space_cells
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.time_cells as f64
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.space_cells as f64
    }

    /// Cell volume Δt·Δx^d, the variance of each increment.
    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.dx().powi(self.dim as i32)
    }

    /// Number of spatial cells (J★)^d.
    pub fn space_cell_count(&self) -> usize {
        self.space_cells.pow(self.dim as u32)
    }

    pub fn cell_count(&self) -> usize {
        self.time_cells * self.space_cell_count()
    }

    /// Time node t_n = n·Δt.
    pub fn time_node(&self, n: usize) -> f64 {
        self.t_final * n as f64 / self.time_cells as f64
    }

    /// 0-based time-cell index of t under the left-closed convention
    /// ([t_{n-1}, t_n) for interior cells, the last cell right-closed).
    /// The boundary choice is measure-zero but fixed so results are
    /// bit-reproducible.
    pub fn time_cell_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.t_final).contains(&t) {
            return Err(Error::invalid("time outside [0, T]"));
        }
        Ok(((t / self.dt()) as usize).min(self.time_cells - 1))
    }

    /// 0-based spatial cell index per coordinate, same convention.
    pub fn space_cell_of(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.dim {
            return Err(Error::invalid("point dimension mismatch"));
        }
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("point outside the closed unit cube"));
        }
        Ok(x.iter()
            .map(|&v| ((v / self.dx()) as usize).min(self.space_cells - 1))
            .collect())
    }

    /// Flattened index of (time cell n, space cell μ), both 0-based,
    /// row-major with the last spatial coordinate fastest.
    pub fn flat_index(&self, n: usize, mu: &[usize]) -> usize {
        let mut idx = n;
        for &m in mu {
            idx = idx * self.space_cells + m;
        }
        idx
    }
}

/// Identifies one reproducible noise stream. Distinct (master seed,
/// replicate) pairs give independent streams; the same pair always
/// reproduces identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate: u64) -> Self {
        SeedSpec { master_seed, replicate }
    }

    fn stream_key(&self) -> u64 {
        // Two mixing rounds decorrelate (master, replicate) pairs that
        // differ in few bits.
        mix64(self.master_seed ^ mix64(self.replicate.wrapping_mul(0xD1B5_4A32_D192_ED03)))
    }

    /// k-th uniform draw of this stream, in the open interval (0, 1).
    pub fn uniform(&self, k: u64) -> f64 {
        let bits = mix64(
            self.stream_key()
                .wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0) // 2^53
    }

    /// k-th standard normal draw, via the inverse CDF of the k-th uniform.
    /// Inverse-CDF keeps the stream splittable and order-independent,
    /// unlike rejection or Box–Muller pairs.
    pub fn normal(&self, k: u64) -> f64 {
        standard_normal_quantile(self.uniform(k))
    }
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse standard normal CDF (Wichura's PPND16 rational approximations),
/// accurate to ~1e-16 relative over (0, 1).
pub fn standard_normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = poly(
            r,
            &[
                3.387_132_872_796_366_608e0,
                1.331_416_678_917_843_774_5e2,
                1.971_590_950_306_551_442_7e3,
                1.373_169_376_550_946_112_5e4,
                4.592_195_393_154_987_145_7e4,
                6.726_577_092_700_870_085_3e4,
                3.343_057_558_358_812_810_5e4,
                2.509_080_928_730_122_672_7e3,
            ],
        );
        let den = poly(
            r,
            &[
                1.0,
                4.231_333_070_160_091_125_2e1,
                6.871_870_074_920_579_083e2,
                5.394_196_021_424_751_107_7e3,
                2.121_379_430_158_659_586_7e4,
                3.930_789_580_009_271_061e4,
                2.872_908_573_572_194_267_4e4,
                5.226_495_278_852_854_561e3,
            ],
        );
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        let num = poly(
            r,
            &[
                1.423_437_110_749_683_577_34e0,
                4.630_337_846_156_545_295_9e0,
                5.769_497_221_460_691_405_5e0,
                3.647_848_324_763_204_605_04e0,
                1.270_458_252_452_368_382_58e0,
                2.417_807_251_774_506_117_7e-1,
                2.272_384_498_926_918_458_33e-2,
                7.745_450_142_783_414_076_4e-4,
            ],
        );
        let den = poly(
            r,
            &[
                1.0,
                2.053_191_626_637_758_821_87e0,
                1.676_384_830_183_803_849_4e0,
                6.897_673_349_851_000_045_5e-1,
                1.481_039_764_274_800_745_9e-1,
                1.519_866_656_361_645_719_66e-2,
                5.475_938_084_995_344_946e-4,
                1.050_750_071_644_416_843_24e-9,
            ],
        );
        num / den
    } else {
        let r = r - 5.0;
        let num = poly(
            r,
            &[
                6.657_904_643_501_103_777_2e0,
                5.463_784_911_164_114_369_9e0,
                1.784_826_539_917_291_335_8e0,
                2.965_605_718_285_048_912_3e-1,
                2.653_218_952_657_612_309_3e-2,
                1.242_660_947_388_078_438_6e-3,
                2.711_555_568_743_487_578_15e-5,
                2.010_334_399_292_288_132_65e-7,
            ],
        );
        let den = poly(
            r,
            &[
                1.0,
                5.998_322_065_558_879_376_9e-1,
                1.369_298_809_227_358_053_1e-1,
                1.487_536_129_085_061_485_25e-2,
                7.868_691_311_456_132_591e-4,
                1.846_318_317_510_054_681_8e-5,
                1.421_511_758_316_445_888_7e-7,
                2.044_263_103_389_939_785_64e-15,
            ],
        );
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

fn poly(x: f64, coeffs: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// One sample of the increment array R^{n,μ}: iid N(0, Δt·Δx^d) entries,
/// immutable after creation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    grid: NoiseGrid,
    seed: Option<SeedSpec>,
    values: Vec<f64>,
}

impl NoiseRealization {
    /// Draws the full increment array for one (grid, seed) pair.
    pub fn sample(grid: NoiseGrid, seed: SeedSpec) -> Self {
        let sd = grid.cell_volume().sqrt();
        let values = (0..grid.cell_count() as u64).map(|k| sd * seed.normal(k)).collect();
        NoiseRealization { grid, seed: Some(seed), values }
    }

    /// All-zero increments. Test hook for degenerate-noise paths.
    pub fn zeros(grid: NoiseGrid) -> Self {
        NoiseRealization { grid, seed: None, values: vec![0.0; grid.cell_count()] }
    }

    pub fn from_values(grid: NoiseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::invalid("increment count does not match the grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite increment"));
        }
        Ok(NoiseRealization { grid, seed: None, values })
    }

    pub fn grid(&self) -> &NoiseGrid {
        &self.grid
    }

    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    /// Raw increments, row-major (time cell outermost).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// R^{n,μ} with 0-based indices.
    pub fn increment(&self, n: usize, mu: &[usize]) -> f64 {
        self.values[self.grid.flat_index(n, mu)]
    }

    /// Ŵ(t, x) = R^{n,μ}/(Δt·Δx^d) on the unique cell containing (t, x).
    pub fn value_at(&self, t: f64, x: &[f64]) -> Result<f64> {
        let n = self.grid.time_cell_of(t)?;
        let mu = self.grid.space_cell_of(x)?;
        Ok(self.values[self.grid.flat_index(n, &mu)] / self.grid.cell_volume())
    }

    /// Per-time-cell spectral coefficients of Ŵ:
    /// Ŵ_α|_{T_n} = Σ_μ R^{n,μ} b_{α,μ} / (Δt·Δx^d),
    /// evaluated by separable tensor contractions over the cell-integral
    /// tables (cost O(J(J + n_max)) per 1D pass instead of the naive
    /// n_max^d · J^d product).
    pub fn spectral_coeffs(&self, cutoff: SpectralCutoff) -> Result<Vec<SpectralField>> {
        if cutoff.dim() != self.grid.dim() {
            return Err(Error::invalid("cutoff dimension mismatch"));
        }
        let n_max = cutoff.n_max();
        let j = self.grid.space_cells;
        let table = cell_integral_table_1d(n_max, j); // [a][cell]
        let inv_vol = 1.0 / self.grid.cell_volume();
        let per_space = self.grid.space_cell_count();
        let mut out = Vec::with_capacity(self.grid.time_cells);
        for n in 0..self.grid.time_cells {
            let r = &self.values[n * per_space..(n + 1) * per_space];
            let coeffs = match self.grid.dim {
                1 => {
                    let mut c = vec![0.0; n_max];
                    for (a, row) in table.iter().enumerate() {
                        c[a] = inv_vol
                            * pairwise_sum(
                                &row.iter().zip(r).map(|(&b, &v)| b * v).collect::<Vec<_>>(),
                            );
                    }
                    c
                }
                2 => {
                    // stage 1: t1[a1][m2] = Σ_{m1} R[m1,m2] b[a1][m1]
                    let mut t1 = vec![0.0; n_max * j];
                    for a1 in 0..n_max {
                        for m2 in 0..j {
                            let mut acc = 0.0;
                            for m1 in 0..j {
                                acc += r[m1 * j + m2] * table[a1][m1];
                            }
                            t1[a1 * j + m2] = acc;
                        }
                    }
                    // stage 2: c[a1][a2] = Σ_{m2} t1[a1][m2] b[a2][m2]
                    let mut c = vec![0.0; n_max * n_max];
                    for a1 in 0..n_max {
                        for a2 in 0..n_max {
                            let mut acc = 0.0;
                            for m2 in 0..j {
                                acc += t1[a1 * j + m2] * table[a2][m2];
                            }
                            c[a1 * n_max + a2] = acc * inv_vol;
                        }
                    }
                    c
                }
                3 => {
                    let jj = j * j;
                    let mut t1 = vec![0.0; n_max * jj];
                    for a1 in 0..n_max {
                        for rest in 0..jj {
                            let mut acc = 0.0;
                            for m1 in 0..j {
                                acc += r[m1 * jj + rest] * table[a1][m1];
                            }
                            t1[a1 * jj + rest] = acc;
                        }
                    }
                    let mut t2 = vec![0.0; n_max * n_max * j];
                    for a1 in 0..n_max {
                        for a2 in 0..n_max {
                            for m3 in 0..j {
                                let mut acc = 0.0;
                                for m2 in 0..j {
                                    acc += t1[a1 * jj + m2 * j + m3] * table[a2][m2];
                                }
                                t2[(a1 * n_max + a2) * j + m3] = acc;
                            }
                        }
                    }
                    let mut c = vec![0.0; n_max * n_max * n_max];
                    for a12 in 0..n_max * n_max {
                        for a3 in 0..n_max {
                            let mut acc = 0.0;
                            for m3 in 0..j {
                                acc += t2[a12 * j + m3] * table[a3][m3];
                            }
                            c[a12 * n_max + a3] = acc * inv_vol;
                        }
                    }
                    c
                }
                _ => unreachable!(),
            };
            out.push(SpectralField::from_coeffs(cutoff, coeffs)?);
        }
        Ok(out)
    }

    /// Flat binary layout: magic, version, d, N★, J★, T, seed flag + seed,
    /// then the increments row-major as little-endian f64.
    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(b"BHNR")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.time_cells as u64).to_le_bytes())?;
        w.write_all(&(self.grid.space_cells as u64).to_le_bytes())?;
        w.write_all(&self.grid.t_final.to_le_bytes())?;
        match self.seed {
            Some(s) => {
                w.write_all(&1u32.to_le_bytes())?;
                w.write_all(&s.master_seed.to_le_bytes())?;
                w.write_all(&s.replicate.to_le_bytes())?;
            }
            None => {
                w.write_all(&0u32.to_le_bytes())?;
                w.write_all(&0u64.to_le_bytes())?;
                w.write_all(&0u64.to_le_bytes())?;
            }
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"BHNR" {
            return Err(Error::invalid("bad magic in noise file"));
        }
        let version = read_u32(r)?;
        if version != 1 {
            return Err(Error::invalid(format!("unsupported noise file version {version}")));
        }
        let dim = read_u32(r)? as usize;
        let time_cells = read_u64(r)? as usize;
        let space_cells = read_u64(r)? as usize;
        let t_final = f64::from_le_bytes(read_bytes(r)?);
        let has_seed = read_u32(r)? != 0;
        let master = read_u64(r)?;
        let replicate = read_u64(r)?;
        let grid = NoiseGrid::new(dim, t_final, time_cells, space_cells)?;
        let mut values = Vec::with_capacity(grid.cell_count());
        for _ in 0..grid.cell_count() {
            values.push(f64::from_le_bytes(read_bytes(r)?));
        }
        let mut out = NoiseRealization::from_values(grid, values)?;
        if has_seed {
            out.seed = Some(SeedSpec::new(master, replicate));
        }
        Ok(out)
    }

    /// CSV export (row per cell) for small grids: n, mu_1.., increment.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let d = self.grid.dim;
        let mut header = String::from("n");
        for i in 1..=d {
            header.push_str(&format!(",mu{i}"));
        }
        header.push_str(",increment\n");
        w.write_all(header.as_bytes())?;
        let mut mu = vec![0usize; d];
        for n in 0..self.grid.time_cells {
            mu.iter_mut().for_each(|m| *m = 0);
            loop {
                let v = self.values[self.grid.flat_index(n, &mu)];
                let mut line = format!("{}", n + 1);
                for &m in &mu {
                    line.push_str(&format!(",{}", m + 1));
                }
                line.push_str(&format!(",{}\n", crate::lab::format_float(v)));
                w.write_all(line.as_bytes())?;
                // advance odometer
                let mut i = d;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    mu[i] += 1;
                    if mu[i] < self.grid.space_cells {
                        break;
                    }
                    mu[i] = 0;
                }
                if mu.iter().all(|&m| m == 0) {
                    break;
                }
            }
        }
        Ok(())
    }
}

fn read_bytes<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_bytes(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_bytes(r)?))
}

/// Cell means of g over the noise grid: the space-time projection
/// Π̂(g)|_{S_{n,μ}} = (1/(Δt·Δx^d)) ∫_{S_{n,μ}} g, with the integral by a
/// tensor Gauss rule of `points` nodes per direction. Idempotent on its
/// range (piecewise-constant functions are reproduced exactly).
pub fn project_cell_means<F>(g: &F, grid: &NoiseGrid, points: usize) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let rule = GaussRule::new(points.max(1));
    let d = grid.dim;
    let inv_vol = 1.0 / grid.cell_volume();
    let mut out = vec![0.0; grid.cell_count()];
    let mut mu = vec![0usize; d];
    for n in 0..grid.time_cells {
        mu.iter_mut().for_each(|m| *m = 0);
        loop {
            let idx = grid.flat_index(n, &mu);
            out[idx] = inv_vol * cell_integral_fn(g, grid, n, &mu, &rule);
            let mut i = d;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                mu[i] += 1;
                if mu[i] < grid.space_cells {
                    break;
                }
                mu[i] = 0;
            }
            if mu.iter().all(|&m| m == 0) {
                break;
            }
        }
    }
    out
}

/// ∫_{S_{n,μ}} g by a tensor Gauss rule.
fn cell_integral_fn<F>(g: &F, grid: &NoiseGrid, n: usize, mu: &[usize], rule: &GaussRule) -> f64
where
    F: Fn(f64, &[f64]) -> f64,
{
    let d = grid.dim;
    let (t_lo, t_hi) = (grid.time_node(n), grid.time_node(n + 1));
    let dx = grid.dx();
    let t_nodes: Vec<(f64, f64)> = rule.mapped(t_lo, t_hi).collect();
    let x_nodes: Vec<Vec<(f64, f64)>> = mu
        .iter()
        .map(|&m| rule.mapped(m as f64 * dx, (m + 1) as f64 * dx).collect())
        .collect();
    let mut acc = 0.0;
    let q = rule.len();
    let mut point = vec![0.0; d];
    let mut idx = vec![0usize; d];
    for &(t, wt) in &t_nodes {
        idx.iter_mut().for_each(|i| *i = 0);
        loop {
            let mut w = wt;
            for i in 0..d {
                let (x, wx) = x_nodes[i][idx[i]];
                point[i] = x;
                w *= wx;
            }
            acc += w * g(t, &point);
            let mut i = d;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < q {
                    break;
                }
                idx[i] = 0;
            }
            if idx.iter().all(|&v| v == 0) {
                break;
            }
        }
    }
    acc
}

/// Both sides of the pairing identity
/// ∫ Π̂(g) dW = ∫∫ Ŵ g dt dx for one realization.
#[derive(Debug, Clone, Copy)]
pub struct PairingCheck {
    /// Σ_{n,μ} (cell mean of g) · R^{n,μ}.
    pub lhs: f64,
    /// Σ_{n,μ} R^{n,μ}/(Δt·Δx^d) · ∫_{S_{n,μ}} g, with an independent
    /// quadrature degree.
    pub rhs: f64,
    /// Σ_{n,μ} |term|: the magnitude scale of the sums. The signed sums can
    /// cancel to zero for zero-mean noise, so residuals are judged against
    /// this rather than against |lhs|.
    pub scale: f64,
}

impl PairingCheck {
    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }

    pub fn relative_residual(&self) -> f64 {
        self.residual().abs() / self.scale.max(f64::MIN_POSITIVE)
    }
}

/// Evaluates both sides of the pairing identity. The two sides use
/// different quadrature degrees (`points` and `points + 4`) so that the
/// residual witnesses quadrature convergence rather than comparing one
/// rounding of the same sum with itself.
pub fn ito_pair_check<F>(r: &NoiseRealization, g: &F, points: usize) -> PairingCheck
where
    F: Fn(f64, &[f64]) -> f64,
{
    let grid = r.grid();
    let means = project_cell_means(g, grid, points);
    let lhs_terms: Vec<f64> =
        means.iter().zip(r.values()).map(|(&m, &rv)| m * rv).collect();
    let lhs = pairwise_sum(&lhs_terms);
    let scale = pairwise_sum(&lhs_terms.iter().map(|t| t.abs()).collect::<Vec<_>>());
    let rule = GaussRule::new(points + 4);
    let inv_vol = 1.0 / grid.cell_volume();
    let d = grid.dim;
    let mut terms = Vec::with_capacity(grid.cell_count());
    let mut mu = vec![0usize; d];
    for n in 0..grid.time_cells {
        mu.iter_mut().for_each(|m| *m = 0);
        loop {
            let idx = grid.flat_index(n, &mu);
            terms.push(r.values()[idx] * inv_vol * cell_integral_fn(g, grid, n, &mu, &rule));
            let mut i = d;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                mu[i] += 1;
                if mu[i] < grid.space_cells {
                    break;
                }
                mu[i] = 0;
            }
            if mu.iter().all(|&m| m == 0) {
                break;
            }
        }
    }
    PairingCheck { lhs, rhs: pairwise_sum(&terms), scale }
}
