use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{freq_index, transform_lines, Grid};
use crate::params::{DomainSpec, ModelParams};

/// Relative spectral or spatial loss above which a resample is reported as aliased.
pub const ALIASING_THRESHOLD: f64 = 1e-8;

/// Complex samples on a [`Grid`].
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<C64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("len", &self.values.len())
            .finish()
    }
}

/// Coordinates of one grid node. Unused axes are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: [f64; 2],
    pub y: f64,
}

impl Point {
    pub fn r2(&self) -> f64 {
        self.x[0] * self.x[0] + self.x[1] * self.x[1]
    }
}

/// Positive rational `num/den`, kept reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Factor(format!("{num}/{den}")));
        }
        let g = gcd(num, den);
        Ok(Self {
            num: num / g,
            den: den / g,
        })
    }

    pub fn integer(n: u64) -> Result<Self> {
        Self::new(n, 1)
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn recip(&self) -> Self {
        Self {
            num: self.den,
            den: self.num,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Ratio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Factor(s.to_string());
        match s.split_once('/') {
            Some((p, q)) => Self::new(
                p.trim().parse().map_err(|_| bad())?,
                q.trim().parse().map_err(|_| bad())?,
            ),
            None => Self::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

/// Result of a resample: the new field and the fraction of content lost to
/// aliasing or to the box edge.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub field: Field,
    pub lost_fraction: f64,
}

impl Resampled {
    pub fn aliased(&self) -> bool {
        self.lost_fraction > ALIASING_THRESHOLD
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    /// Skips validation; callers guarantee length and finiteness.
    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self::from_parts(grid, vec![C64::default(); n])
    }

    /// Samples `f` at every node.
    pub fn from_fn<F>(grid: Arc<Grid>, f: F) -> Result<Self>
    where
        F: Fn(Point) -> C64,
    {
        let values = (0..grid.len()).map(|i| f(point_at(&grid, i))).collect();
        Self::new(grid, values)
    }

    /// Samples a real function at every node.
    pub fn from_real_fn<F>(grid: Arc<Grid>, f: F) -> Result<Self>
    where
        F: Fn(Point) -> f64,
    {
        Self::from_fn(grid, |p| C64::new(f(p), 0.0))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        self.grid.params()
    }

    pub fn domain(&self) -> &DomainSpec {
        self.grid.domain()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> Point {
        point_at(&self.grid, i)
    }

    /// `|u|^2` per node.
    pub fn abs2(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `int |u|^2`.
    pub fn norm2(&self) -> f64 {
        self.grid.quadrature(&self.abs2())
    }

    /// `Re int u conj(v)`.
    pub fn inner(&self, other: &Field) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        s * self.grid.cell_volume()
    }

    pub fn scaled(&self, s: f64) -> Field {
        Self::from_parts(
            self.grid.clone(),
            self.values.iter().map(|z| z * s).collect(),
        )
    }

    pub fn map<F>(&self, f: F) -> Field
    where
        F: Fn(C64) -> C64,
    {
        Self::from_parts(self.grid.clone(), self.values.iter().map(|&z| f(z)).collect())
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        Self::from_parts(
            self.grid.clone(),
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b * s)
                .collect(),
        )
    }

    /// Pointwise modulus.
    pub fn modulus(&self) -> Field {
        self.map(|z| C64::new(z.norm(), 0.0))
    }

    /// Largest `|Im u|` and most negative `Re u`, both as nonnegative numbers.
    pub fn distance_from_nonneg_real(&self) -> f64 {
        self.values
            .iter()
            .map(|z| z.im.abs().max((-z.re).max(0.0)))
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Unnormalized discrete Fourier coefficients.
    pub fn spectrum(&self) -> Vec<C64> {
        let mut buf = self.values.clone();
        self.grid.forward(&mut buf);
        buf
    }

    /// Spectral derivative along each unbounded axis.
    pub fn gradient_x(&self) -> Vec<Field> {
        let spec = self.spectrum();
        (0..self.params().d)
            .map(|a| self.derivative_from_spectrum(&spec, a))
            .collect()
    }

    /// Spectral derivative along the torus axis.
    pub fn gradient_y(&self) -> Result<Field> {
        if !self.grid.has_torus() {
            return Err(Error::NoTorusAxis);
        }
        let spec = self.spectrum();
        Ok(self.derivative_from_spectrum(&spec, self.params().d))
    }

    fn derivative_from_spectrum(&self, spec: &[C64], axis: usize) -> Field {
        let k = self.grid.axis_derivative_wavenumbers(axis);
        let mut buf = spec.to_vec();
        let mut idx = [0usize; 3];
        for (i, z) in buf.iter_mut().enumerate() {
            self.grid.unravel(i, &mut idx);
            *z *= C64::new(0.0, k[idx[axis]]);
        }
        self.grid.inverse(&mut buf);
        Self::from_parts(self.grid.clone(), buf)
    }

    /// `-Delta_x u` and `-Delta_y u` from the [`Grid::kx2`] and [`Grid::ky2`] symbols.
    pub fn neg_laplacians(&self) -> (Field, Field) {
        let spec = self.spectrum();
        let mut bx: Vec<C64> = spec.iter().zip(self.grid.kx2()).map(|(z, k)| z * k).collect();
        let mut by: Vec<C64> = spec.iter().zip(self.grid.ky2()).map(|(z, k)| z * k).collect();
        self.grid.inverse(&mut bx);
        self.grid.inverse(&mut by);
        (
            Self::from_parts(self.grid.clone(), bx),
            Self::from_parts(self.grid.clone(), by),
        )
    }

    /// Fraction of `int |u|^2` on the outer 10% shell of the box along any unbounded axis.
    pub fn boundary_mass_fraction(&self) -> f64 {
        let total = self.norm2();
        if total == 0.0 {
            return 0.0;
        }
        let cut = 0.9 * self.domain().half_length;
        let d = self.params().d;
        let shell: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let p = point_at(&self.grid, *i);
                p.x[..d].iter().any(|x| x.abs() > cut)
            })
            .map(|(_, z)| z.norm_sqr())
            .sum();
        shell * self.grid.cell_volume() / total
    }

    /// Fourier interpolation of `u(f x, y)` onto the same grid.
    ///
    /// The denominator of `f` must be a power of two. Content mapped from
    /// outside the box is dropped; the dropped and aliased fractions are
    /// reported in [`Resampled::lost_fraction`].
    pub fn resample(&self, factor: Ratio) -> Result<Resampled> {
        let (p, q) = (factor.num() as usize, factor.den() as usize);
        if !q.is_power_of_two() {
            return Err(Error::Factor(factor.to_string()));
        }
        if p == 1 && q == 1 {
            return Ok(Resampled {
                field: self.clone(),
                lost_fraction: 0.0,
            });
        }
        let n = self.domain().n_x;
        let total = self.norm2();
        let mut values = self.values.clone();
        let mut lost = 0.0;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv_fine = planner.plan_fft_inverse(q * n);
        let shape = self.grid.shape().to_vec();
        for axis in 0..self.params().d {
            let inner: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..axis].iter().product();
            let mut line = vec![C64::default(); n];
            let mut fine = vec![C64::default(); q * n];
            let mut aliased = 0.0;
            let mut dropped = 0.0;
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    for j in 0..n {
                        line[j] = values[base + j * inner];
                    }
                    transform_lines(fwd.as_ref(), &mut line, n, 1);
                    if p > q {
                        for (j, c) in line.iter().enumerate() {
                            if (freq_index(j, n).unsigned_abs() as usize) * p > (n / 2) * q {
                                aliased += c.norm_sqr() / n as f64;
                            }
                        }
                    }
                    fine.iter_mut().for_each(|z| *z = C64::default());
                    for (j, &c) in line.iter().enumerate() {
                        let k = freq_index(j, n);
                        if q > 1 && j == n / 2 {
                            fine[n / 2] = c * 0.5;
                            fine[q * n - n / 2] = c * 0.5;
                        } else if k >= 0 {
                            fine[k as usize] = c;
                        } else {
                            fine[(q * n as usize) - k.unsigned_abs() as usize] = c;
                        }
                    }
                    transform_lines(inv_fine.as_ref(), &mut fine, q * n, 1);
                    let scale = 1.0 / n as f64;
                    let offset = (n / 2) as i64 * (q as i64 - p as i64);
                    for j in 0..n {
                        let src = p as i64 * j as i64 + offset;
                        // Nodes with |f x| >= L would see periodic copies of u.
                        values[base + j * inner] = if (0..(q * n) as i64).contains(&src) {
                            fine[src as usize] * scale
                        } else {
                            C64::default()
                        };
                    }
                }
            }
            if p > q {
                // Zeroing beyond |f x| = L is only harmless if u vanishes near the edge.
                let edge = 0.9 * self.domain().half_length;
                let coords = self.grid.axis_coords(axis);
                for o in 0..outer {
                    for j in 0..n {
                        if coords[j].abs() > edge {
                            for i in 0..inner {
                                dropped += self.values[o * n * inner + j * inner + i].norm_sqr();
                            }
                        }
                    }
                }
            }
            if p < q {
                // Content of u outside |x| <= f L never reaches the new grid.
                let keep = self.domain().half_length * p as f64 / q as f64;
                let coords = self.grid.axis_coords(axis);
                for o in 0..outer {
                    for j in 0..n {
                        if coords[j].abs() > keep {
                            for i in 0..inner {
                                dropped += self.values[o * n * inner + j * inner + i].norm_sqr();
                            }
                        }
                    }
                }
            }
            let vol = self.grid.cell_volume();
            if total > 0.0 {
                lost += (aliased * vol + dropped * vol) / total;
            }
        }
        Ok(Resampled {
            field: Self::from_parts(self.grid.clone(), values),
            lost_fraction: lost,
        })
    }

    /// `(d/2) u + x . grad_x u`: the derivative of `t^{d/2} u(t x, y)` at `t = 1`.
    pub fn dilation_generator(&self) -> Field {
        let d = self.params().d;
        let grads = self.gradient_x();
        let vals = (0..self.len())
            .map(|i| {
                let p = self.point(i);
                let mut z = self.values[i] * (0.5 * d as f64);
                for (a, g) in grads.iter().enumerate() {
                    z += g.values()[i] * p.x[a];
                }
                z
            })
            .collect();
        Field::from_parts(self.grid.clone(), vals)
    }

    /// `u(x - s, y)` via the trigonometric interpolant.
    pub fn translate_x(&self, s: f64) -> Result<Field> {
        let grid = &self.grid;
        let k = grid.axis_wavenumbers(0);
        let n = grid.domain().n_x;
        let vals = grid.apply_symbol(&self.values, |i| {
            let mut id = [0usize; 3];
            grid.unravel(i, &mut id);
            let j = id[0];
            if j == n / 2 {
                C64::new((k[j] * s).cos(), 0.0)
            } else {
                C64::from_polar(1.0, -k[j] * s)
            }
        });
        Field::new(grid.clone(), vals)
    }

    /// Circular centre of mass along `x` on the periodic box.
    pub fn centre_x(&self) -> f64 {
        let half = self.domain().half_length;
        let coords = self.grid.axis_coords(0);
        let n = self.domain().n_x;
        let inner = self.len() / n;
        let mut acc = C64::default();
        for (j, x) in coords.iter().enumerate() {
            let w: f64 = self.values[j * inner..(j + 1) * inner].iter().map(|z| z.norm_sqr()).sum();
            acc += C64::from_polar(w, PI * x / half);
        }
        acc.arg() * half / PI
    }

    /// Evaluates the trigonometric interpolant at `u(t x, y)` for real `t > 0`.
    ///
    /// Points with `|t x| > L + h_x/2` are set to zero. Each line is a
    /// fractional DFT, evaluated with a chirp-z convolution in
    /// `O(n_x log n_x)`.
    pub fn dilate_continuous(&self, t: f64) -> Result<Field> {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::InvalidArgument(format!("dilation factor {t}")));
        }
        let n = self.domain().n_x;
        let half = self.domain().half_length;
        // Points within half a cell of the seam still read the interpolant.
        let reach = half + 0.5 * self.domain().h_x();
        let coords = self.grid.axis_coords(0).to_vec();
        let chirp = Chirp::new(n, t);
        let mut values = self.values.clone();
        let shape = self.grid.shape().to_vec();
        let mut line = vec![C64::default(); n];
        let mut out = vec![C64::default(); n];
        for axis in 0..self.params().d {
            let inner: usize = shape[axis + 1..].iter().product();
            let outer: usize = shape[..axis].iter().product();
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    for j in 0..n {
                        line[j] = values[base + j * inner];
                    }
                    chirp.apply(&line, &mut out);
                    for j in 0..n {
                        values[base + j * inner] = if (t * coords[j]).abs() > reach {
                            C64::default()
                        } else {
                            out[j]
                        };
                    }
                }
            }
        }
        Field::new(self.grid.clone(), values)
    }
}

/// Evaluates `sum_k c_k exp(i k (t x_j + L))` on `x_j = -L + j h` from
/// samples, with the Nyquist mode taken as a cosine.
///
/// With `q` the signed index, the phase is `pi q (1 - t) + 2 pi t q j / n`;
/// `q j = (q^2 + j^2 - (j - q)^2) / 2` turns the sum into a convolution.
struct Chirp {
    n: usize,
    t: f64,
    fwd: Arc<dyn rustfft::Fft<f64>>,
    big_fwd: Arc<dyn rustfft::Fft<f64>>,
    big_inv: Arc<dyn rustfft::Fft<f64>>,
    kernel: Vec<C64>,
}

impl Chirp {
    fn new(n: usize, t: f64) -> Self {
        let big = 2 * n;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let big_fwd = planner.plan_fft_forward(big);
        let big_inv = planner.plan_fft_inverse(big);
        let off = n as i64 / 2 - 1;
        let mut kernel: Vec<C64> = (0..big)
            .map(|q| {
                let m = q as i64 - off;
                if q < 2 * n - 2 {
                    C64::from_polar(1.0, -chirp_phase(m, t, n))
                } else {
                    C64::default()
                }
            })
            .collect();
        big_fwd.process(&mut kernel);
        Self {
            n,
            t,
            fwd,
            big_fwd,
            big_inv,
            kernel,
        }
    }

    fn apply(&self, line: &[C64], out: &mut [C64]) {
        let n = self.n;
        let t = self.t;
        let mut c = line.to_vec();
        self.fwd.process(&mut c);
        let scale = 1.0 / n as f64;
        let off = n as i64 / 2 - 1;
        let mut a = vec![C64::default(); 2 * n];
        for (k, ck) in c.iter().enumerate() {
            if k == n / 2 {
                continue;
            }
            let q = freq_index(k, n);
            let phase = std::f64::consts::PI * q as f64 * (1.0 - t) + chirp_phase(q, t, n);
            a[(q + off) as usize] = ck * C64::from_polar(scale, phase);
        }
        self.big_fwd.process(&mut a);
        for (x, k) in a.iter_mut().zip(&self.kernel) {
            *x *= k;
        }
        self.big_inv.process(&mut a);
        let norm = 1.0 / (2 * n) as f64;
        let nyq = c[n / 2] * scale;
        let nyq_base = std::f64::consts::PI * (n / 2) as f64 * (1.0 - t);
        for (j, o) in out.iter_mut().enumerate() {
            let conv = a[j + n - 2] * norm;
            let nyq_term = nyq * (nyq_base + std::f64::consts::PI * t * j as f64).cos();
            *o = conv * C64::from_polar(1.0, chirp_phase(j as i64, t, n)) + nyq_term;
        }
    }
}

/// `pi t m^2 / n`, reduced to keep the argument small.
fn chirp_phase(m: i64, t: f64, n: usize) -> f64 {
    let m2 = (m * m) as f64;
    (std::f64::consts::PI * t * m2 / n as f64) % std::f64::consts::TAU
}

pub(crate) fn point_at(grid: &Grid, i: usize) -> Point {
    let mut idx = [0usize; 3];
    grid.unravel(i, &mut idx);
    let d = grid.params().d;
    let mut x = [0.0; 2];
    for (a, xa) in x.iter_mut().enumerate().take(d) {
        *xa = grid.axis_coords(a)[idx[a]];
    }
    let y = if grid.has_torus() {
        grid.axis_coords(d)[idx[d]]
    } else {
        0.0
    };
    Point { x, y }
}


#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid1(m: usize) -> Arc<Grid> {
        let p = ModelParams::new(1, m, 4.0).unwrap();
        let n_y = (m == 1).then_some(16);
        Grid::new(p, DomainSpec::new(16.0, 512, n_y).unwrap()).unwrap()
    }

    #[test]
    fn ratio_parsing() {
        let r: Ratio = "4/2".parse().unwrap();
        assert_eq!(r, Ratio::integer(2).unwrap());
        assert_eq!("1/2".parse::<Ratio>().unwrap().value(), 0.5);
        assert!("0/3".parse::<Ratio>().is_err());
        assert!("x".parse::<Ratio>().is_err());
    }

    #[test]
    fn sine_derivative_exact() {
        let g = grid1(0);
        let l = 16.0;
        let u = Field::from_real_fn(g, |p| (PI * p.x[0] / l).sin()).unwrap();
        let du = &u.gradient_x()[0];
        for i in 0..u.len() {
            let want = PI / l * (PI * u.point(i).x[0] / l).cos();
            assert!((du.values()[i].re - want).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_y_rejected_without_torus() {
        let u = Field::zeros(grid1(0));
        assert!(matches!(u.gradient_y(), Err(Error::NoTorusAxis)));
    }

    #[test]
    fn single_mode_y_derivative() {
        let u = Field::from_fn(grid1(1), |p| {
            C64::from_polar((-p.x[0] * p.x[0]).exp(), p.y)
        })
        .unwrap();
        let dy = u.gradient_y().unwrap();
        for (a, b) in dy.values().iter().zip(u.values()) {
            assert!((a - C64::i() * b).norm() < 1e-13);
        }
        let v = Field::from_real_fn(grid1(1), |p| (-p.x[0] * p.x[0]).exp() * (2.0 * p.y).cos())
            .unwrap();
        let dv = v.gradient_y().unwrap();
        for i in 0..v.len() {
            let p = v.point(i);
            let want = -2.0 * (-p.x[0] * p.x[0]).exp() * (2.0 * p.y).sin();
            assert!((dv.values()[i].re - want).abs() < 1e-13);
        }
    }

    #[test]
    fn resample_identity_and_roundtrip() {
        let g = grid1(1);
        let u = Field::from_real_fn(g, |p| (-p.x[0] * p.x[0]).exp() * (1.0 + 0.3 * p.y.cos()))
            .unwrap();
        let same = u.resample(Ratio::integer(1).unwrap()).unwrap();
        assert_eq!(same.field.values(), u.values());
        let two = u.resample(Ratio::integer(2).unwrap()).unwrap();
        assert!(!two.aliased(), "lost {}", two.lost_fraction);
        let back = two.field.resample(Ratio::new(1, 2).unwrap()).unwrap();
        let err = back
            .field
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "roundtrip error {err}");
    }

    #[test]
    fn resample_matches_closed_form() {
        let g = grid1(0);
        let u = Field::from_real_fn(g, |p| (-p.x[0] * p.x[0]).exp()).unwrap();
        for r in ["2", "1/2", "3/2", "4", "3/4"] {
            let f: Ratio = r.parse().unwrap();
            let v = u.resample(f).unwrap();
            let t = f.value();
            for i in 0..u.len() {
                let x = u.point(i).x[0];
                let want = (-(t * x) * (t * x)).exp();
                assert!((v.field.values()[i].re - want).abs() < 1e-12, "{r} at {x}");
            }
        }
        assert!(u.resample(Ratio::new(1, 3).unwrap()).is_err());
    }

    #[test]
    fn resample_flags_aliasing() {
        let g = grid1(0);
        let u = Field::from_real_fn(g, |p| (-p.x[0] * p.x[0] / 200.0).exp()).unwrap();
        // Wide profile: compression wraps content across the box edge.
        assert!(u.resample(Ratio::integer(2).unwrap()).unwrap().aliased());
        // Expansion loses the part outside |x| < L/2.
        assert!(u.resample(Ratio::new(1, 2).unwrap()).unwrap().aliased());
    }

    #[test]
    fn continuous_dilation_matches_closed_form() {
        let g = grid1(1);
        let u = Field::from_real_fn(g, |p| (-p.x[0] * p.x[0]).exp() * (2.0 + p.y.sin())).unwrap();
        let t = 1.37;
        let v = u.dilate_continuous(t).unwrap();
        for i in 0..u.len() {
            let p = u.point(i);
            let want = (-(t * p.x[0]).powi(2)).exp() * (2.0 + p.y.sin());
            assert!((v.values()[i].re - want).abs() < 1e-12);
        }
    }

    /// Direct `O(n^2)` evaluation of the interpolant at `t x_j`.
    fn dilate_direct(u: &Field, t: f64) -> Vec<C64> {
        let n = u.domain().n_x;
        let half = u.domain().half_length;
        let reach = half + 0.5 * u.domain().h_x();
        let kk = u.grid().axis_wavenumbers(0).to_vec();
        let inner = u.len() / n;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let mut out = vec![C64::default(); u.len()];
        for i in 0..inner {
            let mut line: Vec<C64> = (0..n).map(|m| u.values()[m * inner + i]).collect();
            fft.process(&mut line);
            for j in 0..n {
                let xs = t * u.grid().axis_coords(0)[j];
                if xs.abs() > reach {
                    continue;
                }
                let mut acc = C64::default();
                for k in 0..n {
                    let e = if k == n / 2 {
                        C64::new((kk[k] * (xs + half)).cos(), 0.0)
                    } else {
                        C64::from_polar(1.0, kk[k] * (xs + half))
                    };
                    acc += line[k] * e / n as f64;
                }
                out[j * inner + i] = acc;
            }
        }
        out
    }

    #[test]
    fn chirp_dilation_matches_direct_sum() {
        let g = grid1(1);
        let u = Field::from_fn(g.clone(), |p| {
            C64::new((-(p.x[0] - 0.3).powi(2)).exp(), 0.2 * (-p.x[0] * p.x[0]).exp() * p.y.cos())
        })
        .unwrap();
        let wide = Field::from_fn(g.clone(), |p| {
            C64::new((-(p.x[0] / 5.0).powi(2)).exp() * (1.0 + 0.3 * p.y.cos()), 0.0)
        })
        .unwrap();
        for t in [0.6, 0.924, 1.0, 1.0 + 1e-9, 1.9] {
            let fast = wide.dilate_continuous(t).unwrap();
            let slow = dilate_direct(&wide, t);
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12, "wide t = {t} {a} {b}");
            }
        }
        for t in [0.6, 1.0, 1.0 + 1e-9, 1.9] {
            let fast = u.dilate_continuous(t).unwrap();
            let slow = dilate_direct(&u, t);
            for (a, b) in fast.values().iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12, "t = {t}");
            }
        }
    }

    #[test]
    fn boundary_fraction_small_for_localized() {
        let u = Field::from_real_fn(grid1(0), |p| (-p.x[0] * p.x[0]).exp()).unwrap();
        assert!(u.boundary_mass_fraction() < 1e-30);
        let w = Field::from_real_fn(grid1(0), |_| 1.0).unwrap();
        assert!((w.boundary_mass_fraction() - 0.1).abs() < 0.01);
    }
}
