//! Uniform periodic box grids and the real fields sampled on them.
//!
//! A [`GridSpec`] describes the box `[-L, L)^d` with `N` points per axis;
//! point `j` on an axis sits at `-L + j h` with `h = 2L / N`. Fields are
//! stored lexicographically (last axis fastest) in this "standard" order.
//!
//! Convolution kernels are kept in "offset" order instead, where index `m`
//! on an axis corresponds to the displacement `m h` wrapped into
//! `[-L, L)`. The two orders differ by a half-length cyclic shift per axis.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on `N^d`; 2^24 points is 128 MiB per real field.
pub const MAX_GRID_POINTS: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    points_per_axis: usize,
    half_width: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points_per_axis: usize, half_width: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "points per axis must be a power of two >= 8, got {points_per_axis}"
            )));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        let total = (points_per_axis as u128).checked_pow(dim as u32);
        match total {
            Some(t) if t <= MAX_GRID_POINTS as u128 => {}
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "{points_per_axis}^{dim} points exceed the memory budget of {MAX_GRID_POINTS}"
                )))
            }
        }
        Ok(Self {
            dim,
            points_per_axis,
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    /// `h^d`, the trapezoidal weight of every point on the periodic box.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinate of axis index `j`.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    /// Per-axis indices of a flat (standard order) index.
    pub fn unflatten(&self, mut flat: usize, out: &mut [usize]) {
        let n = self.points_per_axis;
        for axis in (0..self.dim).rev() {
            out[axis] = flat % n;
            flat /= n;
        }
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter()
            .fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Coordinates of a flat index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim];
        self.unflatten(flat, &mut idx);
        idx.iter().map(|&j| self.coordinate(j)).collect()
    }

    /// Flat index of the mirror point `-x`.
    pub fn mirror(&self, flat: usize) -> usize {
        let n = self.points_per_axis;
        let mut idx = vec![0; self.dim];
        self.unflatten(flat, &mut idx);
        for i in idx.iter_mut() {
            *i = (n - *i) % n;
        }
        self.flatten(&idx)
    }

    /// Whether a flat index touches the box face `x_i = -L`.
    pub fn on_boundary(&self, flat: usize) -> bool {
        let n = self.points_per_axis;
        let mut f = flat;
        for _ in 0..self.dim {
            if f % n == 0 {
                return true;
            }
            f /= n;
        }
        false
    }

    /// Flat index of the grid point nearest to `x` (periodic wrap).
    pub fn nearest(&self, x: &[f64]) -> usize {
        let n = self.points_per_axis as i64;
        let h = self.spacing();
        let idx: Vec<usize> = x
            .iter()
            .map(|&xi| {
                let j = ((xi + self.half_width) / h).round() as i64;
                j.rem_euclid(n) as usize
            })
            .collect();
        self.flatten(&idx)
    }

    /// Whether `x` lies inside the box (no wrap needed).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x
                .iter()
                .all(|&xi| xi >= -self.half_width && xi < self.half_width)
    }

    /// Displacement `m h` represented by offset-order index `m` on one axis.
    pub fn offset_coordinate(&self, m: usize) -> f64 {
        let n = self.points_per_axis;
        let signed = if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
        signed * self.spacing()
    }

    /// Angular frequency of DFT bin `m` on one axis.
    pub fn frequency(&self, m: usize) -> f64 {
        let n = self.points_per_axis;
        let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        std::f64::consts::PI * signed / self.half_width
    }

    pub fn ensure_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }

    /// Standard order -> offset order (half cyclic shift per axis).
    pub fn to_offset_order<T: Copy + Send + Sync>(&self, values: &[T]) -> Vec<T> {
        self.shift(values)
    }

    /// Offset order -> standard order. The half shift is an involution.
    pub fn to_standard_order<T: Copy + Send + Sync>(&self, values: &[T]) -> Vec<T> {
        self.shift(values)
    }

    fn shift<T: Copy + Send + Sync>(&self, values: &[T]) -> Vec<T> {
        let n = self.points_per_axis;
        let half = n / 2;
        let dim = self.dim;
        (0..self.len())
            .into_par_iter()
            .map(|flat| {
                let mut src = 0usize;
                let mut f = flat;
                let mut stride = 1usize;
                for _ in 0..dim {
                    let i = f % n;
                    f /= n;
                    src += ((i + half) % n) * stride;
                    stride *= n;
                }
                values[src]
            })
            .collect()
    }
}

/// A real field sampled on a [`GridSpec`] in standard order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    grid: GridSpec,
    values: Vec<f64>,
}

impl FieldGrid {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn<F>(grid: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; grid.dim()],
                |x, flat| {
                    let mut f_idx = flat;
                    let n = grid.points_per_axis();
                    for axis in (0..grid.dim()).rev() {
                        x[axis] = grid.coordinate(f_idx % n);
                        f_idx /= n;
                    }
                    f(x)
                },
            )
            .collect();
        Self { grid, values }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoidal integral on the periodic box.
    pub fn integral(&self) -> f64 {
        crate::quad::pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        let abs: Vec<f64> = self.values.iter().map(|v| v.abs()).collect();
        crate::quad::pairwise_sum(&abs) * self.grid.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &FieldGrid) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> FieldGrid {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &FieldGrid, f: F) -> Result<FieldGrid> {
        self.grid.ensure_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Multilinear interpolation with periodic wrap; exact at grid points.
    pub fn interpolate(&self, x: &[f64]) -> Result<f64> {
        let d = self.grid.dim();
        if x.len() != d {
            return Err(Error::GridMismatch(format!(
                "point has {} coordinates, grid has {d}",
                x.len()
            )));
        }
        let n = self.grid.points_per_axis() as i64;
        let h = self.grid.spacing();
        let mut base = vec![0i64; d];
        let mut frac = vec![0.0; d];
        for a in 0..d {
            let s = (x[a] + self.grid.half_width()) / h;
            let fl = s.floor();
            let mut fr = s - fl;
            if fr < 1e-12 {
                fr = 0.0;
            } else if fr > 1.0 - 1e-12 {
                fr = 1.0;
            }
            base[a] = fl as i64;
            frac[a] = fr;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                idx[a] = (base[a] + bit as i64).rem_euclid(n) as usize;
            }
            if w != 0.0 {
                acc += w * self.values[self.grid.flatten(&idx)];
            }
        }
        Ok(acc)
    }

    /// Binary layout: `d: u32, N: u32, L: f64` (little endian) then `N^d`
    /// little-endian `f64` values in standard order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.grid.points_per_axis() as u32).to_le_bytes())?;
        w.write_all(&self.grid.half_width().to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut u = [0u8; 4];
        r.read_exact(&mut u)?;
        let dim = u32::from_le_bytes(u) as usize;
        r.read_exact(&mut u)?;
        let n = u32::from_le_bytes(u) as usize;
        let mut f = [0u8; 8];
        r.read_exact(&mut f)?;
        let l = f64::from_le_bytes(f);
        let grid = GridSpec::new(dim, n, l)?;
        let mut bytes = vec![0u8; grid.len() * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        FieldGrid::new(grid, values)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(file))
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// CSV with columns `x0..x{d-1}, value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.grid.dim();
        let mut header: Vec<String> = (0..d).map(|a| format!("x{a}")).collect();
        header.push("value".into());
        out.write_record(&header)?;
        let mut idx = vec![0; d];
        for (flat, v) in self.values.iter().enumerate() {
            self.grid.unflatten(flat, &mut idx);
            let mut rec: Vec<String> = idx
                .iter()
                .map(|&j| format!("{:.12e}", self.grid.coordinate(j)))
                .collect();
            rec.push(format!("{v:.17e}"));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Separable d-dimensional complex FFT on a [`GridSpec`].
#[derive(Clone)]
pub struct FftNd {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("grid", &self.grid).finish()
    }
}

impl FftNd {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        Self {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1 / N^d` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.par_iter_mut().for_each(|c| *c *= scale);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.grid.points_per_axis();
        let d = self.grid.dim();
        assert_eq!(data.len(), self.grid.len());
        // Last axis is contiguous.
        data.par_chunks_mut(n).for_each(|line| plan.process(line));
        let total = data.len();
        let mut stride = n;
        for _ in 1..d {
            // Lines along an axis with the given stride; each block of
            // `stride * n` elements holds `stride` independent lines.
            let block = stride * n;
            data.par_chunks_mut(block).for_each(|chunk| {
                let mut line = vec![Complex64::new(0.0, 0.0); n];
                for offset in 0..stride {
                    for (k, c) in line.iter_mut().enumerate() {
                        *c = chunk[offset + k * stride];
                    }
                    plan.process(&mut line);
                    for (k, c) in line.iter().enumerate() {
                        chunk[offset + k * stride] = *c;
                    }
                }
            });
            stride = block;
            debug_assert!(stride <= total);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(GridSpec::new(0, 16, 1.0).is_err());
        assert!(GridSpec::new(1, 12, 1.0).is_err());
        assert!(GridSpec::new(1, 4, 1.0).is_err());
        assert!(GridSpec::new(1, 16, 0.0).is_err());
        assert!(GridSpec::new(5, 1024, 1.0).is_err());
    }

    #[test]
    fn shift_is_an_involution_and_centers_origin() {
        let g = GridSpec::new(2, 8, 4.0).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| i as f64).collect();
        let off = g.to_offset_order(&vals);
        // Offset index 0 is the origin, which is standard index (4, 4).
        assert_eq!(off[0], vals[g.flatten(&[4, 4])]);
        assert_eq!(g.to_standard_order(&off), vals);
    }

    #[test]
    fn mirror_maps_coordinates_to_negatives() {
        let g = GridSpec::new(2, 8, 2.0).unwrap();
        for flat in 0..g.len() {
            let x = g.point(flat);
            let y = g.point(g.mirror(flat));
            for a in 0..2 {
                let expect = if (x[a] + 2.0).abs() < 1e-12 { -2.0 } else { -x[a] };
                assert!((y[a] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fft_roundtrip_3d() {
        let g = GridSpec::new(3, 8, 1.0).unwrap();
        let fft = FftNd::new(g);
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 7919) % 13) as f64).collect();
        let mut data = fft.forward_real(&vals);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&vals) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn fft_matches_direct_dft_2d() {
        let g = GridSpec::new(2, 8, 1.0).unwrap();
        let fft = FftNd::new(g);
        let vals: Vec<f64> = (0..g.len()).map(|i| (i as f64).sin()).collect();
        let data = fft.forward_real(&vals);
        let n = 8usize;
        for k0 in 0..n {
            for k1 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j0 in 0..n {
                    for j1 in 0..n {
                        let ph = -2.0 * std::f64::consts::PI * ((k0 * j0 + k1 * j1) as f64) / n as f64;
                        acc += vals[j0 * n + j1] * Complex64::from_polar(1.0, ph);
                    }
                }
                assert!((acc - data[k0 * n + k1]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linear_between() {
        let g = GridSpec::new(1, 16, 4.0).unwrap();
        let f = FieldGrid::from_fn(g, |x| 2.0 * x[0] + 1.0);
        assert!((f.interpolate(&[0.5]).unwrap() - 2.0).abs() < 1e-12);
        assert!((f.interpolate(&[0.25]).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn binary_roundtrip_and_layout() {
        let g = GridSpec::new(2, 8, 3.0).unwrap();
        let f = FieldGrid::from_fn(g, |x| x[0] * x[1]);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 64 * 8);
        assert_eq!(&buf[0..4], &2u32.to_le_bytes());
        assert_eq!(&buf[4..8], &8u32.to_le_bytes());
        assert_eq!(&buf[8..16], &3.0f64.to_le_bytes());
        let back = FieldGrid::read_binary(&buf[..]).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_has_coordinates_and_value() {
        let g = GridSpec::new(1, 8, 1.0).unwrap();
        let f = FieldGrid::constant(g, 0.5);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,value");
        assert_eq!(text.lines().count(), 9);
    }
}
