//! Symmetric jump kernels, their Fourier symbols and convolution powers.
//!
//! A kernel is a probability density `a` on `R^d` with `a(x) = a(-x)`.
//! Its characteristic function `â(k) = ∫ cos(k·y) a(y) dy` is real. Near
//! the origin `1 - â(k) ≈ A |k|^α`; the pair `(A, α)` is carried as
//! [`TailParams`] when known and can be estimated with
//! [`fit_small_k_expansion`].

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FftNd, FieldGrid, GridSpec};

/// Boundary density above which periodic convolution is rejected.
pub const ALIASING_THRESHOLD: f64 = 1e-12;

/// Small-frequency expansion `1 - â(k) = A |k|^α + o(|k|^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailParams {
    /// The constant `A`.
    pub scale: f64,
    pub alpha: f64,
}

impl TailParams {
    pub fn new(scale: f64, alpha: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!("tail scale must be positive, got {scale}")));
        }
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0, 2], got {alpha}")));
        }
        Ok(Self { scale, alpha })
    }
}

type PointFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A kernel given by user-supplied evaluators.
pub struct CustomKernel {
    name: String,
    density: Box<PointFn>,
    fourier: Box<PointFn>,
    decay_radius: f64,
    isotropic: bool,
}

struct Table {
    grid: GridSpec,
    field: FieldGrid,
    alias: WeightedAliasIndex<f64>,
}

#[derive(Clone)]
enum Family {
    Gaussian,
    Cauchy,
    Tabulated(Arc<Table>),
    Custom(Arc<CustomKernel>),
}

/// A symmetric probability density on `R^d` together with its symbol.
#[derive(Clone)]
pub struct JumpKernel {
    dim: usize,
    family: Family,
    tail: Option<TailParams>,
}

impl std::fmt::Debug for JumpKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JumpKernel")
            .field("name", &self.name())
            .field("dim", &self.dim)
            .field("tail", &self.tail)
            .finish()
    }
}

impl JumpKernel {
    /// `a(x) = (4π)^{-d/2} e^{-|x|²/4}`, `â(k) = e^{-|k|²}`.
    pub fn gaussian(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        Ok(Self {
            dim,
            family: Family::Gaussian,
            tail: Some(TailParams { scale: 1.0, alpha: 2.0 }),
        })
    }

    /// One-dimensional Cauchy density `1/(π(1+x²))`, `â(k) = e^{-|k|}`.
    pub fn cauchy() -> Self {
        Self {
            dim: 1,
            family: Family::Cauchy,
            tail: Some(TailParams { scale: 1.0, alpha: 1.0 }),
        }
    }

    /// Kernel from a nonnegative, even table; rescaled to unit trapezoidal mass.
    pub fn tabulated(samples: &FieldGrid) -> Result<Self> {
        let grid = *samples.grid();
        let vals = samples.values();
        if let Some((index, &value)) = vals.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeSample { index, value });
        }
        let mass: f64 = crate::quad::pairwise_sum(vals) * grid.cell_volume();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        let peak = vals.iter().cloned().fold(0.0, f64::max);
        let deviation = (0..vals.len())
            .map(|i| (vals[i] - vals[grid.mirror(i)]).abs())
            .fold(0.0, f64::max)
            / peak;
        if deviation > 1e-9 {
            return Err(Error::AsymmetricTable { deviation });
        }
        let values: Vec<f64> = vals.iter().map(|v| v / mass).collect();
        let alias = WeightedAliasIndex::new(values.clone()).map_err(|_| Error::ZeroMass)?;
        Ok(Self {
            dim: grid.dim(),
            family: Family::Tabulated(Arc::new(Table {
                grid,
                field: FieldGrid::from_raw(grid, values),
                alias,
            })),
            tail: None,
        })
    }

    /// Kernel from closures. `decay_radius` is the radius beyond which
    /// `|â| < 1e-6`; `isotropic` enables radial Fourier quadrature.
    pub fn custom<D, F>(
        dim: usize,
        name: &str,
        density: D,
        fourier: F,
        decay_radius: f64,
        isotropic: bool,
    ) -> Result<Self>
    where
        D: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if !(decay_radius.is_finite() && decay_radius > 0.0) {
            return Err(Error::InvalidParameter("decay radius must be positive".into()));
        }
        Ok(Self {
            dim,
            family: Family::Custom(Arc::new(CustomKernel {
                name: name.to_string(),
                density: Box::new(density),
                fourier: Box::new(fourier),
                decay_radius,
                isotropic,
            })),
            tail: None,
        })
    }

    /// Attach (or replace) the small-frequency parameters, e.g. from a fit.
    pub fn with_tail_params(mut self, tail: TailParams) -> Self {
        self.tail = Some(tail);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tail_params(&self) -> Option<TailParams> {
        self.tail
    }

    pub fn name(&self) -> String {
        match &self.family {
            Family::Gaussian => "gaussian".into(),
            Family::Cauchy => "cauchy".into(),
            Family::Tabulated(_) => "tabulated".into(),
            Family::Custom(c) => c.name.clone(),
        }
    }

    pub fn is_isotropic(&self) -> bool {
        match &self.family {
            Family::Gaussian | Family::Cauchy => true,
            Family::Tabulated(_) => self.dim == 1,
            Family::Custom(c) => c.isotropic || self.dim == 1,
        }
    }

    /// Grid of the table for tabulated kernels.
    pub fn table_grid(&self) -> Option<GridSpec> {
        match &self.family {
            Family::Tabulated(t) => Some(t.grid),
            _ => None,
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (4.0 * PI).powf(-(self.dim as f64) / 2.0) * (-r2 / 4.0).exp()
            }
            Family::Cauchy => 1.0 / (PI * (1.0 + x[0] * x[0])),
            Family::Tabulated(t) => {
                if !t.grid.contains(x) {
                    return 0.0;
                }
                t.field.interpolate(x).unwrap_or(0.0)
            }
            Family::Custom(c) => (c.density)(x),
        }
    }

    pub fn fourier(&self, k: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian => (-k.iter().map(|v| v * v).sum::<f64>()).exp(),
            Family::Cauchy => (-k[0].abs()).exp(),
            Family::Tabulated(t) => {
                t.grid.cell_volume() * table_sum(t, k, |phase| phase.cos())
            }
            Family::Custom(c) => (c.fourier)(k),
        }
    }

    /// `1 - â(k)` without cancellation for small `|k|`.
    pub fn symbol_gap(&self, k: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian => -(-k.iter().map(|v| v * v).sum::<f64>()).exp_m1(),
            Family::Cauchy => -(-k[0].abs()).exp_m1(),
            Family::Tabulated(t) => {
                t.grid.cell_volume()
                    * table_sum(t, k, |phase| {
                        let s = (0.5 * phase).sin();
                        2.0 * s * s
                    })
            }
            Family::Custom(c) => 1.0 - (c.fourier)(k),
        }
    }

    /// `â` along a ray, for isotropic kernels.
    pub fn fourier_radial(&self, r: f64) -> f64 {
        let mut k = vec![0.0; self.dim];
        k[0] = r;
        self.fourier(&k)
    }

    pub fn gap_radial(&self, r: f64) -> f64 {
        let mut k = vec![0.0; self.dim];
        k[0] = r;
        self.symbol_gap(&k)
    }

    /// Radius beyond which `|â| < 1e-6` (validation probes start here).
    pub fn decay_radius(&self) -> f64 {
        match &self.family {
            Family::Gaussian => 4.0,
            Family::Cauchy => 14.0,
            Family::Tabulated(t) => 0.9 * PI / t.grid.spacing(),
            Family::Custom(c) => c.decay_radius,
        }
    }

    /// Radius beyond which `â` is negligible for spectral integrals.
    pub fn spectral_radius(&self) -> f64 {
        match &self.family {
            Family::Gaussian => 7.0,
            Family::Cauchy => 45.0,
            Family::Tabulated(t) => PI / t.grid.spacing(),
            Family::Custom(c) => 4.0 * c.decay_radius,
        }
    }

    pub fn has_sampler(&self) -> bool {
        matches!(
            self.family,
            Family::Gaussian | Family::Cauchy | Family::Tabulated(_)
        )
    }

    /// Draw one jump with density `a` into `out`.
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match &self.family {
            Family::Gaussian => {
                // Each coordinate is N(0, 2).
                for o in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = std::f64::consts::SQRT_2 * z;
                }
                Ok(())
            }
            Family::Cauchy => {
                let u: f64 = rng.random();
                out[0] = (PI * (u - 0.5)).tan();
                Ok(())
            }
            Family::Tabulated(t) => {
                let cell = t.alias.sample(rng);
                let h = t.grid.spacing();
                let n = t.grid.points_per_axis();
                let mut f = cell;
                for axis in (0..self.dim).rev() {
                    let j = f % n;
                    f /= n;
                    let jitter: f64 = rng.random::<f64>() - 0.5;
                    out[axis] = t.grid.coordinate(j) + h * jitter;
                }
                Ok(())
            }
            Family::Custom(c) => Err(Error::NoJumpSampler(c.name.clone())),
        }
    }

    /// Largest density value on the box faces `x_i = -L`.
    pub fn boundary_density(&self, grid: &GridSpec) -> f64 {
        (0..grid.len())
            .into_par_iter()
            .filter(|&i| grid.on_boundary(i))
            .map(|i| self.density(&grid.point(i)).abs())
            .reduce(|| 0.0, f64::max)
    }

    /// Sample the kernel on `grid` and precompute its discrete symbol.
    pub fn discretize(&self, grid: &GridSpec) -> Result<DiscreteKernel> {
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch(format!(
                "kernel dimension {} vs grid dimension {}",
                self.dim,
                grid.dim()
            )));
        }
        let samples = match &self.family {
            Family::Tabulated(t) => {
                t.grid.ensure_same(grid)?;
                t.field.clone()
            }
            _ => FieldGrid::from_fn(*grid, |x| self.density(x)),
        };
        let boundary = (0..grid.len())
            .filter(|&i| grid.on_boundary(i))
            .map(|i| samples.values()[i].abs())
            .fold(0.0, f64::max);
        if boundary > ALIASING_THRESHOLD {
            return Err(Error::AliasingViolation {
                boundary,
                threshold: ALIASING_THRESHOLD,
            });
        }
        DiscreteKernel::from_samples(samples)
    }
}

/// `Σ_j a_j g(k·x_j)` over the table entries.
fn table_sum<G: Fn(f64) -> f64 + Sync>(t: &Table, k: &[f64], g: G) -> f64 {
    let grid = &t.grid;
    let n = grid.points_per_axis();
    let dim = grid.dim();
    let terms: Vec<f64> = t
        .field
        .values()
        .par_iter()
        .enumerate()
        .map(|(flat, &a)| {
            if a == 0.0 {
                return 0.0;
            }
            let mut f = flat;
            let mut phase = 0.0;
            for axis in (0..dim).rev() {
                phase += k[axis] * grid.coordinate(f % n);
                f /= n;
            }
            a * g(phase)
        })
        .collect();
    crate::quad::pairwise_sum(&terms)
}

/// A kernel sampled on a grid with its real discrete symbol
/// `F(k) = h^d Σ_m a(x_m) e^{-i k·x_m}`.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    samples: FieldGrid,
    fft: FftNd,
    symbol: Vec<f64>,
}

impl DiscreteKernel {
    pub fn from_samples(samples: FieldGrid) -> Result<Self> {
        let grid = *samples.grid();
        let fft = FftNd::new(grid);
        let offset = grid.to_offset_order(samples.values());
        let spec = fft.forward_real(&offset);
        let hd = grid.cell_volume();
        let symbol = spec.iter().map(|c| c.re * hd).collect();
        Ok(Self {
            samples,
            fft,
            symbol,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.samples.grid()
    }

    pub fn samples(&self) -> &FieldGrid {
        &self.samples
    }

    /// Symbol values in DFT index order.
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn fft(&self) -> &FftNd {
        &self.fft
    }

    /// Spectrum of a field (standard order) for repeated multiplier use.
    pub fn spectrum(&self, f: &FieldGrid) -> Result<Vec<Complex64>> {
        self.grid().ensure_same(f.grid())?;
        Ok(self.fft.forward_real(f.values()))
    }

    /// Inverse transform of `m(F_j) · spec_j`, returned as a real field.
    pub fn apply_multiplier<M>(&self, spec: &[Complex64], m: M) -> FieldGrid
    where
        M: Fn(f64) -> f64 + Sync,
    {
        let mut data: Vec<Complex64> = spec
            .par_iter()
            .zip(self.symbol.par_iter())
            .map(|(s, &f)| s * m(f))
            .collect();
        self.fft.inverse(&mut data);
        FieldGrid::from_raw(*self.grid(), data.iter().map(|c| c.re).collect())
    }

    /// Periodic convolution `a * f`.
    pub fn convolve(&self, f: &FieldGrid) -> Result<FieldGrid> {
        let spec = self.spectrum(f)?;
        Ok(self.apply_multiplier(&spec, |s| s))
    }

    /// `a^{*n}` on the grid (standard order).
    pub fn power(&self, n: usize) -> Result<FieldGrid> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "convolution power n = 0 is a point mass, not a grid function".into(),
            ));
        }
        let grid = *self.grid();
        let hd = grid.cell_volume();
        let mut data: Vec<Complex64> = self
            .symbol
            .par_iter()
            .map(|&f| Complex64::new(f.powi(n as i32) / hd, 0.0))
            .collect();
        self.fft.inverse(&mut data);
        let offset: Vec<f64> = data.iter().map(|c| c.re).collect();
        Ok(FieldGrid::from_raw(grid, grid.to_standard_order(&offset)))
    }

    /// Convolution of two kernel-like fields held in standard order.
    pub fn convolve_fields(grid: &GridSpec, a: &FieldGrid, b: &FieldGrid) -> Result<FieldGrid> {
        grid.ensure_same(a.grid())?;
        grid.ensure_same(b.grid())?;
        let fft = FftNd::new(*grid);
        let sa = fft.forward_real(&grid.to_offset_order(a.values()));
        let mut sb = fft.forward_real(b.values());
        let hd = grid.cell_volume();
        sb.par_iter_mut().zip(sa.par_iter()).for_each(|(x, y)| *x *= y * hd);
        fft.inverse(&mut sb);
        Ok(FieldGrid::from_raw(*grid, sb.iter().map(|c| c.re).collect()))
    }
}

/// `a^{*n}` sampled on `grid`, via forward transform, n-th power, inverse.
pub fn convolve_power(kernel: &JumpKernel, n: usize, grid: &GridSpec) -> Result<FieldGrid> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "convolution power n = 0 is a point mass, not a grid function".into(),
        ));
    }
    kernel.discretize(grid)?.power(n)
}

/// Result of [`fit_small_k_expansion`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFit {
    pub scale: f64,
    pub alpha: f64,
    /// Coefficient of the linear-in-|k| correction term.
    pub correction: f64,
    /// Max relative deviation between the fitted model and `1 - â`.
    pub residual: f64,
}

impl ExpansionFit {
    pub fn tail_params(&self) -> Result<TailParams> {
        TailParams::new(self.scale, self.alpha.min(2.0))
    }
}

/// Fit `log(1 - â(k)) ≈ log A + α log|k| + β|k|` on log-spaced probes
/// along the first axis.
///
/// The `β|k|` column absorbs the leading `o(|k|^α)` correction, which
/// otherwise biases `A` by several percent for kernels such as Cauchy.
pub fn fit_small_k_expansion(
    kernel: &JumpKernel,
    k_min: f64,
    k_max: f64,
    n_probe: usize,
) -> Result<ExpansionFit> {
    if !(k_min > 0.0 && k_max > k_min) {
        return Err(Error::InvalidParameter(format!(
            "probe window must satisfy 0 < k_min < k_max, got [{k_min}, {k_max}]"
        )));
    }
    if n_probe < 4 {
        return Err(Error::InvalidParameter("need at least 4 probes".into()));
    }
    let ratio = (k_max / k_min).ln() / (n_probe - 1) as f64;
    let mut rows = Vec::with_capacity(n_probe);
    for i in 0..n_probe {
        let k = k_min * (ratio * i as f64).exp();
        let gap = kernel.gap_radial(k);
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(Error::DegenerateProbe { k });
        }
        rows.push((k, gap));
    }
    // Normal equations on centred columns; 3x3 is well conditioned here.
    let cols = |k: f64| [1.0, k.ln(), k];
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for &(k, gap) in &rows {
        let c = cols(k);
        let y = gap.ln();
        for i in 0..3 {
            aty[i] += c[i] * y;
            for j in 0..3 {
                ata[i][j] += c[i] * c[j];
            }
        }
    }
    let coef = solve3(ata, aty).ok_or_else(|| Error::DegenerateProbe { k: k_min })?;
    let residual = rows
        .iter()
        .map(|&(k, gap)| {
            let c = cols(k);
            let model = (coef[0] * c[0] + coef[1] * c[1] + coef[2] * c[2]).exp();
            (model / gap - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Ok(ExpansionFit {
        scale: coef[0].exp(),
        alpha: coef[1],
        correction: coef[2],
        residual,
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for c in row + 1..3 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Outcome of [`validate_kernel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub symmetry_deviation: f64,
    pub symmetric: bool,
    pub min_density: f64,
    pub positive: bool,
    pub normalization_error: f64,
    pub normalized: bool,
    pub max_abs_fourier: f64,
    pub bounded: bool,
    pub max_tail_fourier: f64,
    pub decays: bool,
    pub boundary_density: f64,
    pub grid_admissible: bool,
}

impl KernelReport {
    /// The kernel-level checks (grid admissibility is reported separately).
    pub fn passed(&self) -> bool {
        self.symmetric && self.positive && self.normalized && self.bounded && self.decays
    }
}

pub fn validate_kernel(kernel: &JumpKernel, grid: &GridSpec) -> KernelReport {
    let d = kernel.dim();
    let dims_match = grid.dim() == d;
    let (symmetry_deviation, min_density, boundary_density) = if dims_match {
        let stats: Vec<(f64, f64)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.point(i);
                let neg: Vec<f64> = x.iter().map(|v| -v).collect();
                let a = kernel.density(&x);
                ((a - kernel.density(&neg)).abs(), a)
            })
            .collect();
        let dev = stats.iter().map(|s| s.0).fold(0.0, f64::max);
        let min = stats.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        (dev, min, kernel.boundary_density(grid))
    } else {
        (f64::INFINITY, f64::NAN, f64::INFINITY)
    };
    let peak = kernel.density(&vec![0.0; d]).abs().max(1e-300);
    let sym_tol = match kernel.family {
        Family::Tabulated(_) => 1e-9 * peak,
        _ => 1e-12,
    };

    let origin = vec![0.0; d];
    let normalization_error = (kernel.fourier(&origin) - 1.0).abs();

    // Probe |â| along each axis and the main diagonal.
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let mut v = vec![0.0; d];
            v[a] = 1.0;
            v
        })
        .collect();
    if d > 1 {
        dirs.push(vec![1.0 / (d as f64).sqrt(); d]);
    }
    let cutoff = kernel.decay_radius();
    let mut max_abs_fourier: f64 = 0.0;
    let mut max_tail_fourier: f64 = 0.0;
    for dir in &dirs {
        for i in 1..=32 {
            let r = cutoff * i as f64 / 32.0;
            let k: Vec<f64> = dir.iter().map(|v| v * r).collect();
            max_abs_fourier = max_abs_fourier.max(kernel.fourier(&k).abs());
        }
        let tail_factors: &[f64] = match kernel.family {
            Family::Tabulated(_) => &[1.0, 1.05, 1.1],
            _ => &[1.0, 1.5, 2.0, 3.0],
        };
        for &f in tail_factors {
            let k: Vec<f64> = dir.iter().map(|v| v * cutoff * f).collect();
            let v = kernel.fourier(&k).abs();
            max_tail_fourier = max_tail_fourier.max(v);
            max_abs_fourier = max_abs_fourier.max(v);
        }
    }

    KernelReport {
        symmetry_deviation,
        symmetric: symmetry_deviation <= sym_tol,
        min_density,
        positive: min_density >= 0.0,
        normalization_error,
        normalized: normalization_error <= 1e-9,
        max_abs_fourier,
        bounded: max_abs_fourier <= 1.0 + 1e-12,
        max_tail_fourier,
        decays: max_tail_fourier < 1e-6,
        boundary_density,
        grid_admissible: boundary_density <= ALIASING_THRESHOLD,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::Quad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gaussian_density_matches_inverse_transform() {
        // a(0) = (2π)^{-1} ∫ e^{-k²} dk
        let q = Quad::default()
            .integrate(|k| (-k * k).exp(), -40.0, 40.0)
            .unwrap()
            .value
            / (2.0 * PI);
        let g = JumpKernel::gaussian(1).unwrap();
        assert!((g.density(&[0.0]) - q).abs() < 1e-12);
        assert!((g.fourier(&[0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(g.tail_params(), Some(TailParams { scale: 1.0, alpha: 2.0 }));
    }

    #[test]
    fn cauchy_density_matches_inverse_transform() {
        // a(1) = (1/π) ∫_0^∞ cos(k) e^{-k} dk
        let q = Quad::default()
            .integrate_to_infinity(|k| k.cos() * (-k).exp(), 0.0)
            .unwrap()
            .value
            / PI;
        let c = JumpKernel::cauchy();
        assert!((c.density(&[1.0]) - q).abs() < 1e-12);
        assert!((c.density(&[1.0]) - 1.0 / (2.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_rejects_zero_dimension() {
        assert!(matches!(JumpKernel::gaussian(0), Err(Error::InvalidDimension(0))));
    }

    fn gaussian_table(scale: f64) -> FieldGrid {
        let g = GridSpec::new(1, 256, 20.0).unwrap();
        FieldGrid::from_fn(g, |x| scale * (4.0 * PI).powf(-0.5) * (-x[0] * x[0] / 4.0).exp())
    }

    #[test]
    fn tabulated_kernel_is_normalized_and_scale_invariant() {
        let k1 = JumpKernel::tabulated(&gaussian_table(1.0)).unwrap();
        let k2 = JumpKernel::tabulated(&gaussian_table(7.3)).unwrap();
        assert!((k1.fourier(&[0.0]) - 1.0).abs() < 1e-9);
        for &k in &[0.1, 0.7, 2.0] {
            assert!((k1.fourier(&[k]) - k2.fourier(&[k])).abs() < 1e-14);
            assert!((k1.fourier(&[k]) - (-k * k).exp()).abs() < 1e-10);
        }
        assert!((k1.density(&[0.5]) - k2.density(&[0.5])).abs() < 1e-14);
    }

    #[test]
    fn tabulated_kernel_rejects_bad_tables() {
        let mut t = gaussian_table(1.0).into_values();
        let g = GridSpec::new(1, 256, 20.0).unwrap();
        t[10] = -1e-3;
        assert!(matches!(
            JumpKernel::tabulated(&FieldGrid::new(g, t.clone()).unwrap()),
            Err(Error::NegativeSample { index: 10, .. })
        ));
        t[10] = 0.5;
        assert!(matches!(
            JumpKernel::tabulated(&FieldGrid::new(g, t).unwrap()),
            Err(Error::AsymmetricTable { .. })
        ));
        assert!(matches!(
            JumpKernel::tabulated(&FieldGrid::constant(g, 0.0)),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn fit_recovers_gaussian_and_cauchy_parameters() {
        let g = fit_small_k_expansion(&JumpKernel::gaussian(2).unwrap(), 1e-3, 5e-2, 64).unwrap();
        assert!((g.alpha - 2.0).abs() < 0.02 && (g.scale - 1.0).abs() < 0.02, "{g:?}");
        let c = fit_small_k_expansion(&JumpKernel::cauchy(), 1e-3, 5e-2, 64).unwrap();
        assert!((c.alpha - 1.0).abs() < 0.02 && (c.scale - 1.0).abs() < 0.02, "{c:?}");
    }

    #[test]
    fn fit_rejects_degenerate_symbol() {
        let k = JumpKernel::custom(1, "flat", |_| 0.0, |_| 1.0, 1.0, true).unwrap();
        assert!(matches!(
            fit_small_k_expansion(&k, 1e-3, 5e-2, 16),
            Err(Error::DegenerateProbe { .. })
        ));
    }

    #[test]
    fn convolve_power_gaussian_variances_add() {
        let g = GridSpec::new(1, 256, 32.0).unwrap();
        let k = JumpKernel::gaussian(1).unwrap();
        let a1 = convolve_power(&k, 1, &g).unwrap();
        let a2 = convolve_power(&k, 2, &g).unwrap();
        for i in 0..g.len() {
            let x = g.coordinate(i);
            assert!((a1.values()[i] - k.density(&[x])).abs() < 1e-10);
            let exact = (8.0 * PI).powf(-0.5) * (-x * x / 8.0).exp();
            assert!((a2.values()[i] - exact).abs() < 1e-8);
        }
        assert!(convolve_power(&k, 0, &g).is_err());
    }

    #[test]
    fn convolve_power_gaussian_3d_origin() {
        let g = GridSpec::new(3, 32, 16.0).unwrap();
        let k = JumpKernel::gaussian(3).unwrap();
        let a2 = convolve_power(&k, 2, &g).unwrap();
        let origin = g.nearest(&[0.0, 0.0, 0.0]);
        // h = 1 sampling aliases the product Gaussian at 2π: 6 e^{-2π²} ≈ 1.6e-8 relative.
        assert!((a2.values()[origin] / (8.0 * PI).powf(-1.5) - 1.0).abs() < 3e-8);
    }

    #[test]
    fn convolve_power_rejects_aliasing() {
        let g = GridSpec::new(1, 64, 4.0).unwrap();
        let k = JumpKernel::gaussian(1).unwrap();
        assert!(matches!(
            convolve_power(&k, 1, &g),
            Err(Error::AliasingViolation { .. })
        ));
        let big = GridSpec::new(1, 1024, 100.0).unwrap();
        assert!(matches!(
            convolve_power(&JumpKernel::cauchy(), 1, &big),
            Err(Error::AliasingViolation { .. })
        ));
    }

    #[test]
    fn validate_reports() {
        let g = GridSpec::new(1, 256, 20.0).unwrap();
        assert!(validate_kernel(&JumpKernel::gaussian(1).unwrap(), &g).passed());
        let t = JumpKernel::tabulated(&gaussian_table(2.0)).unwrap();
        assert!(validate_kernel(&t, &g).passed());
        let odd = JumpKernel::custom(1, "odd", |x| x[0], |_| 1.0, 1.0, true).unwrap();
        let r = validate_kernel(&odd, &g);
        assert!(!r.symmetric && !r.passed());
    }

    #[test]
    fn gaussian_jump_variance_is_two() {
        let k = JumpKernel::gaussian(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = [0.0];
        let n = 200_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            k.sample_jump(&mut rng, &mut x).unwrap();
            s2 += x[0] * x[0];
        }
        let var = s2 / n as f64;
        // stderr of the second moment is sqrt(2)*2/sqrt(n) ≈ 0.0063
        assert!((var - 2.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn tabulated_sampler_has_table_variance() {
        let k = JumpKernel::tabulated(&gaussian_table(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = [0.0];
        let n = 200_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            k.sample_jump(&mut rng, &mut x).unwrap();
            s2 += x[0] * x[0];
        }
        let h = 40.0 / 256.0;
        let var = s2 / n as f64;
        assert!((var - (2.0 + h * h / 12.0)).abs() < 0.03, "{var}");
    }
}
