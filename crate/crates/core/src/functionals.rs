use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Ratio, Resampled};
use crate::params::ModelParams;

/// The four integrals every functional is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantities {
    pub mass: f64,
    pub kinetic_x: f64,
    pub kinetic_y: f64,
    pub potential: f64,
}

impl Quantities {
    pub fn of(u: &Field) -> Self {
        let grid = u.grid();
        let alpha = u.params().alpha;
        let vol = grid.cell_volume();
        let spec = u.spectrum();
        let inv_n = 1.0 / grid.len() as f64;
        let (mut kx, mut ky) = (0.0, 0.0);
        for ((z, a), b) in spec.iter().zip(grid.kx2()).zip(grid.ky2()) {
            let w = z.norm_sqr();
            kx += a * w;
            ky += b * w;
        }
        let (mut mass, mut pot) = (0.0, 0.0);
        for z in u.values() {
            let r2 = z.norm_sqr();
            mass += r2;
            pot += r2.powf(0.5 * alpha + 1.0);
        }
        Self {
            mass: mass * vol,
            kinetic_x: kx * inv_n * vol,
            kinetic_y: ky * inv_n * vol,
            potential: pot * vol,
        }
    }

    /// `kinetic_y / (kinetic_x + kinetic_y)`, zero for a constant field.
    pub fn y_fraction(&self) -> f64 {
        let t = self.kinetic_x + self.kinetic_y;
        if t > 0.0 {
            self.kinetic_y / t
        } else {
            0.0
        }
    }

    pub fn virial(&self, p: &ModelParams) -> f64 {
        self.kinetic_x - p.virial_coeff() * self.potential
    }

    pub fn energy(&self, p: &ModelParams) -> f64 {
        0.5 * (self.kinetic_x + self.kinetic_y) - self.potential / (p.alpha + 2.0)
    }

    pub fn action(&self, p: &ModelParams, omega: f64) -> f64 {
        self.energy(p) + 0.5 * omega * self.mass
    }

    pub fn nehari(&self, omega: f64) -> f64 {
        omega * self.mass + self.kinetic_x + self.kinetic_y - self.potential
    }

    /// `I = E - K/2`.
    pub fn i_plain(&self, p: &ModelParams) -> f64 {
        let d = p.d as f64;
        0.5 * self.kinetic_y + (p.alpha * d - 4.0) / (4.0 * (p.alpha + 2.0)) * self.potential
    }
}

/// Every scalar functional of one field at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub omega: f64,
    pub mass: f64,
    pub kinetic_x: f64,
    pub kinetic_y: f64,
    pub potential: f64,
    pub energy: f64,
    pub action: f64,
    pub virial: f64,
    pub nehari: f64,
    pub i_omega: f64,
    pub i_plain: f64,
}

impl FunctionalReport {
    pub fn from_quantities(q: &Quantities, p: &ModelParams, omega: f64) -> Self {
        let i_plain = q.i_plain(p);
        Self {
            omega,
            mass: q.mass,
            kinetic_x: q.kinetic_x,
            kinetic_y: q.kinetic_y,
            potential: q.potential,
            energy: q.energy(p),
            action: q.action(p, omega),
            virial: q.virial(p),
            nehari: q.nehari(omega),
            i_omega: 0.5 * omega * q.mass + i_plain,
            i_plain,
        }
    }

    pub fn quantities(&self) -> Quantities {
        Quantities {
            mass: self.mass,
            kinetic_x: self.kinetic_x,
            kinetic_y: self.kinetic_y,
            potential: self.potential,
        }
    }

    pub fn y_fraction(&self) -> f64 {
        self.quantities().y_fraction()
    }
}

pub fn evaluate(u: &Field, omega: f64) -> FunctionalReport {
    FunctionalReport::from_quantities(&Quantities::of(u), u.params(), omega)
}

/// Amplitude `s` with `K(s u) = 0`, and `s u`.
pub fn project_k(u: &Field) -> Result<(f64, Field)> {
    let q = Quantities::of(u);
    let s = project_k_amplitude(&q, u.params())?;
    Ok((s, u.scaled(s)))
}

pub(crate) fn project_k_amplitude(q: &Quantities, p: &ModelParams) -> Result<f64> {
    if !(q.kinetic_x > 0.0) {
        return Err(Error::Degenerate("zero x-gradient"));
    }
    if !(q.potential > 0.0) {
        return Err(Error::Degenerate("zero potential"));
    }
    Ok((q.kinetic_x / (p.virial_coeff() * q.potential)).powf(1.0 / p.alpha))
}

/// Amplitude `s` with `N_omega(s u) = 0`, and `s u`.
pub fn project_n(u: &Field, omega: f64) -> Result<(f64, Field)> {
    let q = Quantities::of(u);
    let s = project_n_amplitude(&q, u.params(), omega)?;
    Ok((s, u.scaled(s)))
}

pub(crate) fn project_n_amplitude(q: &Quantities, p: &ModelParams, omega: f64) -> Result<f64> {
    if !(q.potential > 0.0) {
        return Err(Error::Degenerate("zero potential"));
    }
    let lin = omega * q.mass + q.kinetic_x + q.kinetic_y;
    if !(lin > 0.0) {
        return Err(Error::Degenerate("nonpositive quadratic part"));
    }
    Ok((lin / q.potential).powf(1.0 / p.alpha))
}

/// `t^{d/2} u(t x, y)` together with the resample loss.
pub fn dilate_v_with_loss(u: &Field, t: Ratio) -> Result<Resampled> {
    let mut r = u.resample(t)?;
    r.field = r.field.scaled(t.value().powf(0.5 * u.params().d as f64));
    Ok(r)
}

pub fn dilate_v(u: &Field, t: Ratio) -> Result<Field> {
    dilate_v_with_loss(u, t).map(|r| r.field)
}

/// `kappa^{2/alpha} u(kappa x, y)` together with the resample loss.
pub fn scale_t_with_loss(u: &Field, kappa: Ratio) -> Result<Resampled> {
    let mut r = u.resample(kappa)?;
    r.field = r.field.scaled(kappa.value().powf(2.0 / u.params().alpha));
    Ok(r)
}

pub fn scale_t(u: &Field, kappa: Ratio) -> Result<Field> {
    scale_t_with_loss(u, kappa).map(|r| r.field)
}

/// Exponents `(a, b)`: kinetic_x, potential and K scale by `kappa^a`,
/// kinetic_y and mass by `kappa^b` under `T_kappa`.
pub fn scale_t_exponents(p: &ModelParams) -> (f64, f64) {
    let d = p.d as f64;
    (2.0 + 4.0 / p.alpha - d, 4.0 / p.alpha - d)
}

/// Potential over the scale-invariant Gagliardo-Nirenberg denominator.
pub fn gn_ratio(u: &Field) -> Result<f64> {
    let q = Quantities::of(u);
    gn_ratio_of(&q, u.params())
}

pub fn gn_ratio_of(q: &Quantities, p: &ModelParams) -> Result<f64> {
    if q.mass == 0.0 {
        return Err(Error::ZeroField);
    }
    if q.kinetic_x == 0.0 {
        return Err(Error::Degenerate("zero x-gradient"));
    }
    let (a, d, m) = (p.alpha, p.d as f64, p.m as f64);
    let den = q.kinetic_x.powf(a * d / 4.0)
        * q.mass.powf((4.0 - a * (d + m - 2.0)) / 4.0)
        * (q.mass.powf(a * m / 4.0) + q.kinetic_y.powf(a * m / 4.0));
    Ok(q.potential / den)
}

/// Piecewise-linear torus profile: zero off `(a, 2 pi - a)`, peak
/// `((alpha + 3)/3)^{1/alpha}` at `y = pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoProfile {
    pub a: f64,
    pub alpha: f64,
    pub samples: Vec<f64>,
}

/// Smallest admissible `a` for the given exponent.
pub fn rho_lower_bound(alpha: f64) -> f64 {
    PI - 3.0 * PI * (3.0 / (alpha + 3.0)).powf(2.0 / alpha)
}

pub fn rho_value(a: f64, alpha: f64, y: f64) -> f64 {
    let peak = ((alpha + 3.0) / 3.0).powf(1.0 / alpha);
    let y = y.rem_euclid(2.0 * PI);
    if y <= a || y >= 2.0 * PI - a {
        0.0
    } else if y <= PI {
        peak * (y - a) / (PI - a)
    } else {
        peak * (2.0 * PI - a - y) / (PI - a)
    }
}

pub fn rho_test(a: f64, alpha: f64, n_y: usize) -> Result<RhoProfile> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Inadmissible(format!("alpha = {alpha}")));
    }
    if !(a > 0.0 && a < PI && a > rho_lower_bound(alpha)) {
        return Err(Error::Inadmissible(format!(
            "a = {a} outside ({}, pi)",
            rho_lower_bound(alpha).max(0.0)
        )));
    }
    if n_y < 4 {
        return Err(Error::Inadmissible(format!("n_y = {n_y}")));
    }
    let samples = (0..n_y)
        .map(|j| rho_value(a, alpha, 2.0 * PI * j as f64 / n_y as f64))
        .collect();
    Ok(RhoProfile { a, alpha, samples })
}

impl RhoProfile {
    pub fn h(&self) -> f64 {
        2.0 * PI / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().cloned().fold(0.0, f64::max)
    }

    /// `int |rho|^p` for the piecewise-linear interpolant of the samples.
    ///
    /// Exact for the profile itself whenever `a` lies on a node.
    pub fn lp_power(&self, p: f64) -> f64 {
        let n = self.samples.len();
        let h = self.h();
        (0..n)
            .map(|j| segment_power(self.samples[j], self.samples[(j + 1) % n], p) * h)
            .sum()
    }

    pub fn l2_squared(&self) -> f64 {
        self.lp_power(2.0)
    }

    /// Trapezoid rule on the samples.
    pub fn trapezoid_power(&self, p: f64) -> f64 {
        self.samples.iter().map(|v| v.powf(p)).sum::<f64>() * self.h()
    }
}

/// Mean of `f^p` over a segment on which `f` is linear and nonnegative.
fn segment_power(f0: f64, f1: f64, p: f64) -> f64 {
    let scale = f0.max(f1);
    if scale == 0.0 {
        return 0.0;
    }
    if (f1 - f0).abs() <= 1e-6 * scale {
        let mid = 0.5 * (f0 + f1);
        return (f0.powf(p) + 4.0 * mid.powf(p) + f1.powf(p)) / 6.0;
    }
    (f1.powf(p + 1.0) - f0.powf(p + 1.0)) / ((p + 1.0) * (f1 - f0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::params::DomainSpec;

    fn gaussian() -> Field {
        let p = ModelParams::new(1, 0, 4.0).unwrap();
        let g = Grid::new(p, DomainSpec::new(16.0, 512, None).unwrap()).unwrap();
        Field::from_real_fn(g, |p| (-p.x[0] * p.x[0]).exp()).unwrap()
    }

    #[test]
    fn gaussian_integrals() {
        let q = Quantities::of(&gaussian());
        assert!((q.kinetic_x - (PI / 2.0).sqrt()).abs() < 1e-10);
        assert!((q.mass - (PI / 2.0).sqrt()).abs() < 1e-12);
        assert!((q.potential - (PI / 6.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_k_projection() {
        let (s, v) = project_k(&gaussian()).unwrap();
        assert!((s - 27f64.sqrt().powf(0.25)).abs() < 1e-10);
        let r = evaluate(&v, 1.0);
        assert!(r.virial.abs() <= 1e-12 * r.kinetic_x);
    }

    #[test]
    fn zero_field_degenerate() {
        let z = gaussian().scaled(0.0);
        assert!(project_k(&z).is_err());
        assert!(project_n(&z, 1.0).is_err());
        assert!(matches!(gn_ratio(&z), Err(Error::ZeroField)));
        let r = evaluate(&z, 1.0);
        assert_eq!(r.mass, 0.0);
        assert_eq!(r.action, 0.0);
    }

    #[test]
    fn rho_shape() {
        let r = rho_test(3.0 * PI / 4.0, 4.0, 64).unwrap();
        assert_eq!(r.samples[0], 0.0);
        assert!((r.peak() - (7.0f64 / 3.0).powf(0.25)).abs() < 1e-14);
        assert!(rho_test(0.0, 4.0, 64).is_err());
        assert!(rho_test(PI, 4.0, 64).is_err());
        // The lower bound stays negative across the exponent range.
        for alpha in [0.1, 1.0, 4.0, 40.0] {
            assert!(rho_lower_bound(alpha) < 0.0);
        }
        assert!(rho_test(1.0, -1.0, 64).is_err());
    }
}
