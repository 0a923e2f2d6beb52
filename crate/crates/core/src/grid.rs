use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::params::{DomainSpec, ModelParams, TORUS_LENGTH};

/// Tensor grid on `[-L, L)^d x [0, 2 pi)^m` with its FFT plans.
///
/// Samples are stored x-major: the unbounded axes come first and the torus
/// axis (if any) varies fastest.
pub struct Grid {
    params: ModelParams,
    domain: DomainSpec,
    shape: Vec<usize>,
    len: usize,
    coords: Vec<Vec<f64>>,
    wave: Vec<Vec<f64>>,
    dwave: Vec<Vec<f64>>,
    kx2: Vec<f64>,
    ky2: Vec<f64>,
    plans: Vec<(Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>)>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("params", &self.params)
            .field("domain", &self.domain)
            .field("shape", &self.shape)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.domain == other.domain
    }
}

/// Integer frequency index of FFT bin `j` on an axis of length `n`.
pub(crate) fn freq_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

fn axis_wavenumbers(n: usize, period: f64) -> (Vec<f64>, Vec<f64>) {
    let base = 2.0 * PI / period;
    let wave: Vec<f64> = (0..n).map(|j| base * freq_index(j, n) as f64).collect();
    let mut dwave = wave.clone();
    // First derivatives of the real Nyquist mode vanish at the nodes.
    dwave[n / 2] = 0.0;
    (wave, dwave)
}

impl Grid {
    pub fn new(params: ModelParams, domain: DomainSpec) -> Result<Arc<Self>> {
        match (params.m, domain.n_y) {
            (0, Some(_)) => {
                return Err(Error::InvalidDomain("n_y given but m = 0".into()));
            }
            (1, None) => return Err(Error::InvalidDomain("m = 1 requires n_y".into())),
            _ => {}
        }
        let mut shape = vec![domain.n_x; params.d];
        if let Some(n_y) = domain.n_y {
            shape.push(n_y);
        }
        let len = shape.iter().product();
        let mut planner = FftPlanner::new();
        let mut coords = Vec::new();
        let mut wave = Vec::new();
        let mut dwave = Vec::new();
        let mut plans = Vec::new();
        for (axis, &n) in shape.iter().enumerate() {
            let (period, origin) = if axis < params.d {
                (2.0 * domain.half_length, -domain.half_length)
            } else {
                (TORUS_LENGTH, 0.0)
            };
            let h = period / n as f64;
            coords.push((0..n).map(|j| origin + j as f64 * h).collect());
            let (w, dw) = axis_wavenumbers(n, period);
            wave.push(w);
            dwave.push(dw);
            plans.push((planner.plan_fft_forward(n), planner.plan_fft_inverse(n)));
        }
        let mut grid = Self {
            params,
            domain,
            shape,
            len,
            coords,
            wave,
            dwave,
            kx2: Vec::new(),
            ky2: Vec::new(),
            plans,
        };
        let mut kx2 = vec![0.0; len];
        let mut ky2 = vec![0.0; len];
        let mut idx = [0usize; 3];
        for i in 0..len {
            grid.unravel(i, &mut idx);
            for a in 0..params.d {
                kx2[i] += grid.wave[a][idx[a]].powi(2);
            }
            if params.m == 1 {
                ky2[i] = grid.wave[params.d][idx[params.d]].powi(2);
            }
        }
        grid.kx2 = kx2;
        grid.ky2 = ky2;
        Ok(Arc::new(grid))
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn has_torus(&self) -> bool {
        self.params.m == 1
    }

    /// `h_x^d h_y^m`.
    pub fn cell_volume(&self) -> f64 {
        let mut v = self.domain.h_x().powi(self.params.d as i32);
        if let Some(h_y) = self.domain.h_y() {
            v *= h_y;
        }
        v
    }

    /// Node coordinates along `axis` (unbounded axes first, then the torus).
    pub fn axis_coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    /// Angular wavenumbers along `axis`, Nyquist bin kept at `-pi/h`.
    pub fn axis_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wave[axis]
    }

    /// Wavenumbers used for first derivatives (Nyquist bin zeroed).
    pub fn axis_derivative_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.dwave[axis]
    }

    /// Per-bin `|k_x|^2` of the discrete Laplacian.
    ///
    /// The Nyquist bin keeps its full weight: with it zeroed the
    /// alternating mode would carry no kinetic energy, and minimizers
    /// find that loophole.
    pub fn kx2(&self) -> &[f64] {
        &self.kx2
    }

    /// Per-bin `k_y^2` of the discrete Laplacian (zero when m = 0).
    pub fn ky2(&self) -> &[f64] {
        &self.ky2
    }

    /// Splits a flat index into per-axis indices.
    pub fn unravel(&self, mut i: usize, out: &mut [usize; 3]) {
        for a in (0..self.shape.len()).rev() {
            out[a] = i % self.shape[a];
            i /= self.shape[a];
        }
    }

    /// Euclidean `|x|^2` over the unbounded axes at flat index `i`.
    pub fn x_radius2(&self, i: usize) -> f64 {
        let mut idx = [0usize; 3];
        self.unravel(i, &mut idx);
        (0..self.params.d)
            .map(|a| self.coords[a][idx[a]].powi(2))
            .sum()
    }

    /// Per-point `|x|^2`, cached by callers that loop repeatedly.
    pub fn x_radius2_all(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.x_radius2(i)).collect()
    }

    /// Trapezoid rule: `sum f * h_x^d h_y^m`.
    pub fn quadrature(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len);
        f.iter().sum::<f64>() * self.cell_volume()
    }

    /// Unnormalized forward transform over every axis.
    pub fn forward(&self, data: &mut [C64]) {
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, false);
        }
    }

    /// Inverse transform over every axis, normalized so that
    /// `inverse(forward(u)) == u`.
    pub fn inverse(&self, data: &mut [C64]) {
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, true);
        }
        let s = 1.0 / self.len as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    /// Applies a diagonal Fourier multiplier given per flat spectral index.
    pub fn apply_symbol<F>(&self, values: &[C64], symbol: F) -> Vec<C64>
    where
        F: Fn(usize) -> C64,
    {
        let mut buf = values.to_vec();
        self.forward(&mut buf);
        buf.iter_mut().enumerate().for_each(|(i, z)| *z *= symbol(i));
        self.inverse(&mut buf);
        buf
    }

    /// Same as [`Grid::apply_symbol`] for a real multiplier table.
    pub fn apply_real_symbol(&self, values: &[C64], symbol: &[f64]) -> Vec<C64> {
        self.apply_symbol(values, |i| C64::new(symbol[i], 0.0))
    }

    /// Unnormalized 1-d transform of every line along `axis`.
    pub(crate) fn transform_axis(&self, data: &mut [C64], axis: usize, inverse: bool) {
        let n = self.shape[axis];
        let fft = if inverse {
            &self.plans[axis].1
        } else {
            &self.plans[axis].0
        };
        transform_lines(fft.as_ref(), data, n, self.shape[axis + 1..].iter().product());
    }
}

/// Transforms all lines of length `n` with stride `inner` in blocks of `n * inner`.
pub(crate) fn transform_lines(fft: &dyn Fft<f64>, data: &mut [C64], n: usize, inner: usize) {
    let mut scratch = vec![C64::default(); fft.get_inplace_scratch_len()];
    if inner == 1 {
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    let block_len = n * inner;
    let mut buf = vec![C64::default(); block_len];
    for block in data.chunks_exact_mut(block_len) {
        for j in 0..n {
            for i in 0..inner {
                buf[i * n + j] = block[j * inner + i];
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for j in 0..n {
            for i in 0..inner {
                block[j * inner + i] = buf[i * n + j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_transform() {
        let p = ModelParams::new(2, 1, 3.0).unwrap();
        let g = Grid::new(p, DomainSpec::new(4.0, 8, Some(4)).unwrap()).unwrap();
        let orig: Vec<C64> = (0..g.len())
            .map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let mut buf = orig.clone();
        g.forward(&mut buf);
        g.inverse(&mut buf);
        for (a, b) in orig.iter().zip(&buf) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn box_volume() {
        let p = ModelParams::quintic_waveguide();
        let g = Grid::new(p, DomainSpec::new(8.0, 64, Some(16)).unwrap()).unwrap();
        let v = g.quadrature(&vec![1.0; g.len()]);
        assert!((v - 16.0 * 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn torus_presence_checked() {
        let p = ModelParams::quintic_waveguide();
        assert!(Grid::new(p, DomainSpec::new(8.0, 64, None).unwrap()).is_err());
        let p0 = p.without_torus();
        assert!(Grid::new(p0, DomainSpec::new(8.0, 64, Some(8)).unwrap()).is_err());
    }
}
