//! Exact simulation of the unit-rate compound Poisson process and Monte
//! Carlo estimators built on its piecewise-constant paths.
//!
//! Path `i` of a run with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`, so results do not
//! depend on the number of worker threads. Within a path the draws
//! alternate: holding time `Exp(1)`, then one jump.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{potential_truncation_bound, CLFunction};
use crate::kernels::JumpKernel;
use crate::quad::pairwise_sum;

/// Paths per reduction chunk for histogram averages.
pub const PATH_CHUNK: usize = 1024;

/// The random stream of path `index` under master seed `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn check_horizon(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("horizon must be positive, got {t}")))
    }
}

fn check_start(kernel: &JumpKernel, x: &[f64]) -> Result<()> {
    if x.len() != kernel.dim() {
        return Err(Error::InvalidDimension(x.len()));
    }
    if !kernel.has_sampler() {
        return Err(Error::NoJumpSampler(kernel.name()));
    }
    Ok(())
}

fn check_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

/// Walk one path on `[0, horizon]`, calling `visit(position, duration)` for
/// every holding interval (the last one clipped at the horizon).
pub(crate) fn walk<R: Rng + ?Sized, V: FnMut(&[f64], f64)>(
    kernel: &JumpKernel,
    x: &[f64],
    horizon: f64,
    rng: &mut R,
    mut visit: V,
) -> Result<()> {
    let mut pos = x.to_vec();
    let mut jump = vec![0.0; x.len()];
    let mut now = 0.0;
    loop {
        let hold: f64 = rng.sample(Exp1);
        let next = now + hold;
        if next >= horizon {
            visit(&pos, horizon - now);
            return Ok(());
        }
        visit(&pos, hold);
        now = next;
        kernel.sample_jump(rng, &mut jump)?;
        for (p, j) in pos.iter_mut().zip(&jump) {
            *p += j;
        }
    }
}

/// Position at time `t` of a path started at `x`.
pub(crate) fn position_at<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    x: &[f64],
    t: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut pos = x.to_vec();
    let mut jump = vec![0.0; x.len()];
    let mut now = 0.0;
    loop {
        let hold: f64 = rng.sample(Exp1);
        now += hold;
        if now > t {
            return Ok(pos);
        }
        kernel.sample_jump(rng, &mut jump)?;
        for (p, j) in pos.iter_mut().zip(&jump) {
            *p += j;
        }
    }
}

/// One compound Poisson trajectory on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CppPath {
    pub start: Vec<f64>,
    /// Strictly increasing jump times in `(0, horizon]`.
    pub jump_times: Vec<f64>,
    /// `positions[i]` is the state on `[jump_times[i], jump_times[i+1])`.
    pub positions: Vec<Vec<f64>>,
    pub horizon: f64,
}

impl CppPath {
    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// `X(t)` for `0 ≤ t ≤ horizon`.
    pub fn state_at(&self, t: f64) -> &[f64] {
        let i = self.jump_times.partition_point(|&s| s <= t);
        if i == 0 {
            &self.start
        } else {
            &self.positions[i - 1]
        }
    }

    /// Holding intervals as `(state, duration)`.
    pub fn intervals(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        let n = self.jump_times.len();
        (0..=n).map(move |i| {
            let from = if i == 0 { 0.0 } else { self.jump_times[i - 1] };
            let to = if i == n { self.horizon } else { self.jump_times[i] };
            let state = if i == 0 { &self.start[..] } else { &self.positions[i - 1][..] };
            (state, to - from)
        })
    }

    /// `∫_0^T f(X(t)) dt`, exact for the piecewise-constant path.
    pub fn occupation_integral(&self, f: &CLFunction) -> f64 {
        self.intervals().map(|(s, d)| f.eval(s) * d).sum()
    }

    /// Occupation measure of this path on `bins`.
    pub fn occupation(&self, bins: &OccupationBins) -> Result<OccupationHistogram> {
        let mut acc = PathOccupation::new(bins.len());
        for (s, d) in self.intervals() {
            acc.deposit(bins, s, d);
        }
        Ok(OccupationHistogram::single(bins.clone(), acc, self.horizon))
    }
}

/// Sample one path; draws follow the same order as the estimators.
pub fn sample_cpp_path<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    x: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<CppPath> {
    check_horizon(horizon)?;
    check_start(kernel, x)?;
    let mut pos = x.to_vec();
    let mut jump = vec![0.0; x.len()];
    let mut now = 0.0;
    let mut jump_times = Vec::new();
    let mut positions = Vec::new();
    loop {
        let hold: f64 = rng.sample(Exp1);
        now += hold;
        if now >= horizon {
            break;
        }
        kernel.sample_jump(rng, &mut jump)?;
        for (p, j) in pos.iter_mut().zip(&jump) {
            *p += j;
        }
        jump_times.push(now);
        positions.push(pos.clone());
    }
    Ok(CppPath {
        start: x.to_vec(),
        jump_times,
        positions,
        horizon,
    })
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Deterministic bias bound (horizon truncation or grid bias), when known.
    pub bias_bound: Option<f64>,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
            seed,
            bias_bound: None,
        }
    }

    pub(crate) fn exact(value: f64, n: usize, seed: u64) -> Self {
        Self {
            mean: value,
            stderr: 0.0,
            n_samples: n,
            seed,
            bias_bound: None,
        }
    }

    /// `|mean - target| ≤ max(k · stderr + bias, rel · |target|)`.
    pub fn agrees_with(&self, target: f64, k: f64, rel: f64) -> bool {
        let bias = self.bias_bound.unwrap_or(0.0);
        (self.mean - target).abs() <= (k * self.stderr + bias).max(rel * target.abs())
    }
}

/// Run `n` independent replicas in parallel, in path-index order.
pub(crate) fn replicate<T, F>(n: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|i| f(&mut substream(seed, i as u64)))
        .collect()
}

/// `E^x[f(X(t))]` from `n` paths.
pub fn mc_expectation(
    kernel: &JumpKernel,
    f: &CLFunction,
    x: &[f64],
    t: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_samples(n)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be nonnegative, got {t}")));
    }
    if x.len() != kernel.dim() {
        return Err(Error::InvalidDimension(x.len()));
    }
    if let Some(c) = f.as_constant() {
        return Ok(McEstimate::exact(c, n, seed));
    }
    if t == 0.0 {
        return Ok(McEstimate::exact(f.eval(x), n, seed));
    }
    check_start(kernel, x)?;
    let samples = replicate(n, seed, |rng| Ok(f.eval(&position_at(kernel, x, t, rng)?)))?;
    Ok(McEstimate::from_samples(&samples, seed))
}

/// One draw of `Y^x(f) = ∫_0^T f(X(t)) dt`.
pub fn sample_random_potential<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    f: &CLFunction,
    x: &[f64],
    horizon: f64,
    rng: &mut R,
) -> Result<f64> {
    check_horizon(horizon)?;
    check_start(kernel, x)?;
    let mut total = 0.0;
    walk(kernel, x, horizon, rng, |p, d| total += f.eval(p) * d)?;
    Ok(total)
}

/// `E^x ∫_0^T f(X(t)) dt` from `n` exact path integrals.
pub fn mc_truncated_potential(
    kernel: &JumpKernel,
    f: &CLFunction,
    x: &[f64],
    horizon: f64,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_samples(n)?;
    check_horizon(horizon)?;
    if x.len() != kernel.dim() {
        return Err(Error::InvalidDimension(x.len()));
    }
    if let Some(c) = f.as_constant() {
        return Ok(McEstimate::exact(c * horizon, n, seed));
    }
    let samples = replicate(n, seed, |rng| sample_random_potential(kernel, f, x, horizon, rng))?;
    let mut est = McEstimate::from_samples(&samples, seed);
    est.bias_bound = potential_truncation_bound(kernel, f, horizon).ok();
    Ok(est)
}

/// Rectangular binning of a box `[lower, upper)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationBins {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
}

impl OccupationBins {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let d = lower.len();
        if d == 0 || upper.len() != d || counts.len() != d {
            return Err(Error::InvalidParameter("bin corners and counts must share a dimension".into()));
        }
        for a in 0..d {
            if !(upper[a] > lower[a]) || counts[a] == 0 {
                return Err(Error::InvalidParameter(format!("empty bin range on axis {a}")));
            }
        }
        Ok(Self { lower, upper, counts })
    }

    /// `[-half_width, half_width)^d` split into `per_axis` bins per axis.
    pub fn cube(dim: usize, half_width: f64, per_axis: usize) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim], vec![per_axis; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn width(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.counts[axis] as f64
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.width(a)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.index(x).is_some()
    }

    /// Flat bin index (last axis fastest), `None` outside the box.
    pub fn index(&self, x: &[f64]) -> Option<usize> {
        let mut flat = 0;
        for a in 0..self.dim() {
            let s = (x[a] - self.lower[a]) / self.width(a);
            if !(s >= 0.0) {
                return None;
            }
            let j = s as usize;
            if j >= self.counts[a] {
                return None;
            }
            flat = flat * self.counts[a] + j;
        }
        Some(flat)
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.counts[a];
            flat /= self.counts[a];
        }
        idx
    }

    /// Lower corner of bin `i`.
    pub fn bin_lower(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(a, &j)| self.lower[a] + j as f64 * self.width(a))
            .collect()
    }

    pub fn bin_upper(&self, i: usize) -> Vec<f64> {
        self.bin_lower(i)
            .iter()
            .enumerate()
            .map(|(a, l)| l + self.width(a))
            .collect()
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        self.bin_lower(i)
            .iter()
            .enumerate()
            .map(|(a, l)| l + 0.5 * self.width(a))
            .collect()
    }

    /// Bin `i` does not touch the outer faces of the box.
    pub fn is_interior(&self, i: usize) -> bool {
        self.multi_index(i)
            .iter()
            .zip(&self.counts)
            .all(|(&j, &c)| j > 0 && j + 1 < c)
    }
}

/// Occupation of one path, with the touched bins remembered for reset.
pub(crate) struct PathOccupation {
    masses: Vec<f64>,
    touched: Vec<usize>,
    escaped: f64,
}

impl PathOccupation {
    pub(crate) fn new(n_bins: usize) -> Self {
        Self {
            masses: vec![0.0; n_bins],
            touched: Vec::new(),
            escaped: 0.0,
        }
    }

    pub(crate) fn deposit(&mut self, bins: &OccupationBins, x: &[f64], duration: f64) {
        match bins.index(x) {
            Some(i) => {
                if self.masses[i] == 0.0 {
                    self.touched.push(i);
                }
                self.masses[i] += duration;
            }
            None => self.escaped += duration,
        }
    }

    fn clear(&mut self) {
        for &i in &self.touched {
            self.masses[i] = 0.0;
        }
        self.touched.clear();
        self.escaped = 0.0;
    }
}

/// Occupation masses (time units) per bin, averaged over `n_paths`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationHistogram {
    pub bins: OccupationBins,
    pub masses: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Time spent outside the binned box.
    pub escaped: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: Option<u64>,
    /// Masses have been divided by this factor (1 for raw occupation).
    pub normalization: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramMetadata {
    pub seed: Option<u64>,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub kernel: String,
    pub normalization: f64,
    pub escaped: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl OccupationHistogram {
    fn single(bins: OccupationBins, acc: PathOccupation, horizon: f64) -> Self {
        let n = bins.len();
        Self {
            bins,
            masses: acc.masses,
            stderr: vec![0.0; n],
            escaped: acc.escaped,
            horizon,
            n_paths: 1,
            seed: None,
            normalization: 1.0,
        }
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.masses)
    }

    /// `∫ g d(histogram)` for a bin-constant `g`.
    pub fn integrate(&self, per_bin: &[f64]) -> Result<f64> {
        if per_bin.len() != self.masses.len() {
            return Err(Error::GridMismatch("one value per bin required".into()));
        }
        let terms: Vec<f64> = self.masses.iter().zip(per_bin).map(|(m, g)| m * g).collect();
        Ok(pairwise_sum(&terms))
    }

    /// Divide masses and errors by `n`.
    pub fn normalized(mut self, n: f64) -> Self {
        for m in self.masses.iter_mut() {
            *m /= n;
        }
        for s in self.stderr.iter_mut() {
            *s /= n;
        }
        self.escaped /= n;
        self.normalization *= n;
        self
    }

    pub fn metadata(&self, kernel: &str) -> HistogramMetadata {
        HistogramMetadata {
            seed: self.seed,
            n: self.n_paths,
            horizon: self.horizon,
            kernel: kernel.into(),
            normalization: self.normalization,
            escaped: self.escaped,
            lower: self.bins.lower.clone(),
            upper: self.bins.upper.clone(),
            counts: self.bins.counts.clone(),
        }
    }

    /// CSV with bin-centre coordinates, mass and standard error.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.bins.dim();
        let mut header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
        header.push("mass".into());
        header.push("stderr".into());
        out.write_record(&header)?;
        for i in 0..self.masses.len() {
            let mut row: Vec<String> = self.bins.center(i).iter().map(|c| c.to_string()).collect();
            row.push(self.masses[i].to_string());
            row.push(self.stderr[i].to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Occupation measure of a single path drawn from `rng`.
pub fn empirical_random_green_measure<R: Rng + ?Sized>(
    kernel: &JumpKernel,
    x: &[f64],
    horizon: f64,
    bins: &OccupationBins,
    rng: &mut R,
) -> Result<OccupationHistogram> {
    check_horizon(horizon)?;
    check_start(kernel, x)?;
    if !bins.contains(x) {
        return Err(Error::PointOutsideBins(x.to_vec()));
    }
    let mut acc = PathOccupation::new(bins.len());
    walk(kernel, x, horizon, rng, |p, d| acc.deposit(bins, p, d))?;
    Ok(OccupationHistogram::single(bins.clone(), acc, horizon))
}

#[derive(Clone)]
struct ChunkSums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    escaped: f64,
}

/// Average per-path occupation measures produced by `path`, which feeds
/// `(position, duration)` pairs for path `i` into the provided sink.
pub(crate) fn average_occupation<F>(
    bins: &OccupationBins,
    n: usize,
    seed: u64,
    horizon: f64,
    path: F,
) -> Result<OccupationHistogram>
where
    F: Fn(&mut ChaCha8Rng, &mut dyn FnMut(&[f64], f64)) -> Result<()> + Sync,
{
    check_samples(n)?;
    let nb = bins.len();
    let n_chunks = n.div_ceil(PATH_CHUNK);
    let chunks: Vec<ChunkSums> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sums = ChunkSums {
                sum: vec![0.0; nb],
                sum_sq: vec![0.0; nb],
                escaped: 0.0,
            };
            let mut acc = PathOccupation::new(nb);
            for i in c * PATH_CHUNK..((c + 1) * PATH_CHUNK).min(n) {
                let mut rng = substream(seed, i as u64);
                path(&mut rng, &mut |p, d| acc.deposit(bins, p, d))?;
                for &b in &acc.touched {
                    let m = acc.masses[b];
                    sums.sum[b] += m;
                    sums.sum_sq[b] += m * m;
                }
                sums.escaped += acc.escaped;
                acc.clear();
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;
    let nf = n as f64;
    let mut masses = vec![0.0; nb];
    let mut stderr = vec![0.0; nb];
    let column = |f: &dyn Fn(&ChunkSums) -> f64| pairwise_sum(&chunks.iter().map(f).collect::<Vec<_>>());
    for b in 0..nb {
        let s = column(&|c| c.sum[b]);
        let s2 = column(&|c| c.sum_sq[b]);
        let mean = s / nf;
        let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
        masses[b] = mean;
        stderr[b] = (var / nf).sqrt();
    }
    let escaped = column(&|c| c.escaped) / nf;
    Ok(OccupationHistogram {
        bins: bins.clone(),
        masses,
        stderr,
        escaped,
        horizon,
        n_paths: n,
        seed: Some(seed),
        normalization: 1.0,
    })
}

/// Mean of `n` per-path occupation measures (the expected Green measure
/// truncated at the horizon), with per-bin standard errors.
pub fn average_random_green_measure(
    kernel: &JumpKernel,
    x: &[f64],
    horizon: f64,
    bins: &OccupationBins,
    n: usize,
    seed: u64,
) -> Result<OccupationHistogram> {
    check_horizon(horizon)?;
    check_start(kernel, x)?;
    if !bins.contains(x) {
        return Err(Error::PointOutsideBins(x.to_vec()));
    }
    average_occupation(bins, n, seed, horizon, |rng, sink| {
        walk(kernel, x, horizon, rng, |p, d| sink(p, d))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::evolve_semigroup;
    use crate::grid::{FieldGrid, GridSpec};

    fn gauss(d: usize) -> JumpKernel {
        JumpKernel::gaussian(d).unwrap()
    }

    #[test]
    fn jump_count_has_mean_t() {
        let k = gauss(1);
        let counts = replicate(100_000, 7, |rng| {
            Ok(sample_cpp_path(&k, &[0.0], 10.0, rng)?.n_jumps() as f64)
        })
        .unwrap();
        let est = McEstimate::from_samples(&counts, 7);
        assert!((est.mean - 10.0).abs() < 3.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn path_structure() {
        let k = gauss(2);
        let mut rng = substream(3, 0);
        let p = sample_cpp_path(&k, &[1.0, -1.0], 20.0, &mut rng).unwrap();
        assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
        assert!(p.jump_times.iter().all(|&t| t > 0.0 && t <= 20.0));
        assert_eq!(p.state_at(0.0), &[1.0, -1.0]);
        let total: f64 = p.intervals().map(|(_, d)| d).sum();
        assert!((total - 20.0).abs() < 1e-12);
        assert!(sample_cpp_path(&k, &[0.0, 0.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn zero_jump_path_is_constant() {
        let k = gauss(1);
        let f = CLFunction::gaussian_bump(vec![0.0], 1.0, 1.0).unwrap();
        let bins = OccupationBins::cube(1, 4.0, 8).unwrap();
        let mut found = false;
        for i in 0..50 {
            let p = sample_cpp_path(&k, &[0.3], 0.01, &mut substream(1, i)).unwrap();
            if p.n_jumps() == 0 {
                assert_eq!(p.state_at(0.009), &[0.3]);
                let y = sample_random_potential(&k, &f, &[0.3], 0.01, &mut substream(1, i)).unwrap();
                assert!((y - f.eval(&[0.3]) * 0.01).abs() < 1e-15);
                let h = empirical_random_green_measure(&k, &[0.3], 0.01, &bins, &mut substream(1, i)).unwrap();
                assert_eq!(h.masses[bins.index(&[0.3]).unwrap()], 0.01);
                assert_eq!(h.total_mass(), 0.01);
                found = true;
            }
        }
        assert!(found);
    }

    #[test]
    fn expectation_trivial_cases() {
        let k = gauss(1);
        let f = CLFunction::gaussian_bump(vec![0.0], 1.0, 2.0).unwrap();
        let e = mc_expectation(&k, &f, &[0.5], 0.0, 10, 1).unwrap();
        assert_eq!(e.mean, f.eval(&[0.5]));
        assert_eq!(e.stderr, 0.0);
        let one = CLFunction::constant(1, 1.0);
        assert_eq!(mc_expectation(&k, &one, &[0.0], 3.0, 10, 1).unwrap().mean, 1.0);
        assert!(mc_expectation(&k, &f, &[0.0], 1.0, 1, 1).is_err());
    }

    #[test]
    fn expectation_matches_semigroup() {
        let k = gauss(1);
        let f = CLFunction::kernel_density(&k);
        let g = GridSpec::new(1, 256, 32.0).unwrap();
        let u = evolve_semigroup(&k, &f.sample(&g), 1.0, 1e-14).unwrap();
        let target = u.interpolate(&[0.0]).unwrap();
        let e = mc_expectation(&k, &f, &[0.0], 1.0, 100_000, 11).unwrap();
        assert!((e.mean - target).abs() < 3.0 * e.stderr, "{} vs {target}", e.mean);
    }

    #[test]
    fn truncated_potential_trivial_cases() {
        let k = gauss(3);
        let zero = CLFunction::zero(3);
        assert_eq!(mc_truncated_potential(&k, &zero, &[0.0; 3], 5.0, 4, 0).unwrap().mean, 0.0);
        let c = mc_truncated_potential(&k, &CLFunction::constant(3, 2.5), &[0.0; 3], 4.0, 4, 0).unwrap();
        assert_eq!((c.mean, c.stderr), (10.0, 0.0));
        let one = CLFunction::new(3, "one", |_| 1.0, Some(1.0), None);
        let mut rng = substream(5, 0);
        let y = sample_random_potential(&k, &one, &[0.0; 3], 7.0, &mut rng).unwrap();
        assert!((y - 7.0).abs() < 1e-12);
    }

    #[test]
    fn random_potential_has_positive_variance() {
        let k = gauss(3);
        let f = CLFunction::kernel_density(&k);
        let ys = replicate(10_000, 2, |rng| sample_random_potential(&k, &f, &[0.0; 3], 50.0, rng)).unwrap();
        let e = McEstimate::from_samples(&ys, 2);
        assert!(e.stderr > 0.0);
    }

    #[test]
    fn histogram_mass_and_expectation_identity() {
        let k = gauss(2);
        let bins = OccupationBins::cube(2, 6.0, 6).unwrap();
        let x = [0.5, -0.5];
        let per_bin: Vec<f64> = (0..bins.len()).map(|i| (i % 5) as f64 * 0.1 + 0.2).collect();
        let bins_f = bins.clone();
        let pb = per_bin.clone();
        let f = CLFunction::new(
            2,
            "bin_constant",
            move |p| bins_f.index(p).map(|i| pb[i]).unwrap_or(0.0),
            Some(1.0),
            Some(1.0),
        );
        for i in 0..20 {
            let h = empirical_random_green_measure(&k, &x, 30.0, &bins, &mut substream(9, i)).unwrap();
            assert!((h.total_mass() + h.escaped - 30.0).abs() < 1e-12);
            assert!(h.masses.iter().all(|&m| m >= 0.0));
            let y = sample_random_potential(&k, &f, &x, 30.0, &mut substream(9, i)).unwrap();
            assert!((h.integrate(&per_bin).unwrap() - y).abs() < 1e-12 * y.abs().max(1.0));
        }
        let avg = average_random_green_measure(&k, &x, 30.0, &bins, 3000, 9).unwrap();
        let mc = mc_truncated_potential(&k, &f, &x, 30.0, 3000, 9).unwrap();
        assert!((avg.integrate(&per_bin).unwrap() - mc.mean).abs() < 1e-12 * mc.mean);
        assert!((avg.total_mass() + avg.escaped - 30.0).abs() < 1e-10);
    }

    #[test]
    fn histogram_rejects_start_outside_box() {
        let k = gauss(1);
        let bins = OccupationBins::cube(1, 1.0, 4).unwrap();
        assert!(matches!(
            empirical_random_green_measure(&k, &[2.0], 1.0, &bins, &mut substream(0, 0)),
            Err(Error::PointOutsideBins(_))
        ));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let k = gauss(3);
        let f = CLFunction::kernel_density(&k);
        let bins = OccupationBins::cube(3, 3.0, 3).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    let e = mc_truncated_potential(&k, &f, &[0.0; 3], 20.0, 3000, 42).unwrap();
                    let h = average_random_green_measure(&k, &[0.0; 3], 20.0, &bins, 3000, 42).unwrap();
                    (e, h)
                })
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.0.mean.to_bits(), b.0.mean.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn bins_geometry() {
        let b = OccupationBins::cube(2, 3.5, 7).unwrap();
        assert_eq!(b.len(), 49);
        assert_eq!(b.index(&[0.0, 0.0]), Some(24));
        assert_eq!(b.center(24), vec![0.0, 0.0]);
        assert!(b.is_interior(24) && !b.is_interior(0));
        assert_eq!(b.index(&[3.5, 0.0]), None);
        assert!((b.volume() - 1.0).abs() < 1e-15);
        let mut buf = Vec::new();
        let h = OccupationHistogram::single(b.clone(), PathOccupation::new(49), 1.0);
        h.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x0,x1,mass,stderr\n"));
    }

    #[test]
    fn semigroup_grid_oracle_for_constant() {
        let g = GridSpec::new(1, 64, 16.0).unwrap();
        let one = FieldGrid::constant(g, 1.0);
        let u = evolve_semigroup(&gauss(1), &one, 2.0, 1e-12).unwrap();
        assert!((u.values()[5] - 1.0).abs() < 1e-10);
    }
}
