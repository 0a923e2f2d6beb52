use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functionals::Quantities;
use crate::grid::Grid;
use crate::params::{DomainSpec, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMethod {
    ClosedForm1d,
    Shooting2d,
}

/// Unit-frequency constants of the positive solution of `-Q'' + Q = |Q|^alpha Q` on R^d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConstants {
    pub mass: f64,
    pub potential: f64,
    pub q0: f64,
}

impl ReferenceConstants {
    /// Unit-frequency action `alpha P / (2 (alpha + 2))`.
    pub fn gamma_hat_1(&self, alpha: f64) -> f64 {
        alpha * self.potential / (2.0 * (alpha + 2.0))
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSoliton {
    pub profile: Field,
    pub omega: f64,
    /// Unit-frequency mass of Q.
    pub mass: f64,
    /// Quadrature of `|profile|^2` on the grid.
    pub grid_mass: f64,
    /// Action of the frequency-omega profile on R^d.
    pub gamma_hat: f64,
    /// Relative L2 residual of the stationary equation on the grid.
    pub residual: f64,
    pub method: ReferenceMethod,
}

/// Closed-form 1-d profile `((alpha+2)/2)^{1/alpha} sech^{2/alpha}(alpha x / 2)`.
pub fn q_1d(alpha: f64, x: f64) -> f64 {
    let s = 1.0 / (0.5 * alpha * x).cosh();
    ((alpha + 2.0) / 2.0).powf(1.0 / alpha) * s.powf(2.0 / alpha)
}

pub fn reference_constants(d: usize, alpha: f64) -> Result<ReferenceConstants> {
    match d {
        1 => {
            if alpha == 4.0 {
                // int sqrt(3) sech(2x) dx and int 3^{3/2} sech^3(2x) dx.
                let mass = 3f64.sqrt() * PI / 2.0;
                return Ok(ReferenceConstants {
                    mass,
                    potential: 1.5 * mass,
                    q0: 3f64.powf(0.25),
                });
            }
            // Spectrally accurate trapezoid rule on a wide interval.
            let half = 60.0 / alpha.min(2.0);
            let n = 200_000;
            let h = 2.0 * half / n as f64;
            let (mut m, mut p) = (0.0, 0.0);
            for j in 0..n {
                let q = q_1d(alpha, -half + j as f64 * h);
                m += q * q;
                p += q.powf(alpha + 2.0);
            }
            Ok(ReferenceConstants {
                mass: m * h,
                potential: p * h,
                q0: q_1d(alpha, 0.0),
            })
        }
        2 => {
            let r = RadialProfile::shoot(alpha)?;
            Ok(ReferenceConstants {
                mass: r.mass,
                potential: r.potential,
                q0: r.q0,
            })
        }
        _ => Err(Error::InvalidParams(format!("d = {d}"))),
    }
}

/// `(2 pi)^m` times the R^d ground-state action at frequency omega.
pub fn rd_reference(params: &ModelParams, omega: f64) -> Result<f64> {
    let c = reference_constants(params.d, params.alpha)?;
    Ok(TORUS_FACTOR.powi(params.m as i32) * gamma_hat(params, &c, omega))
}

const TORUS_FACTOR: f64 = 2.0 * PI;

fn gamma_hat(params: &ModelParams, c: &ReferenceConstants, omega: f64) -> f64 {
    let e = 1.0 + 2.0 / params.alpha - params.d as f64 / 2.0;
    omega.powf(e) * c.gamma_hat_1(params.alpha)
}

/// Samples `Q_omega = omega^{1/alpha} Q(sqrt(omega) x)` on an m = 0 grid.
pub fn solve_reference(params: &ModelParams, domain: &DomainSpec, omega: f64) -> Result<ReferenceSoliton> {
    if params.m != 0 {
        return Err(Error::InvalidParams("reference soliton lives on R^d (m = 0)".into()));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidArgument(format!("omega = {omega}")));
    }
    let grid = Grid::new(*params, *domain)?;
    let alpha = params.alpha;
    let amp = omega.powf(1.0 / alpha);
    let root = omega.sqrt();
    let (profile, consts, method) = match params.d {
        1 => {
            let f = Field::from_real_fn(grid.clone(), |p| amp * q_1d(alpha, root * p.x[0]))?;
            (f, reference_constants(1, alpha)?, ReferenceMethod::ClosedForm1d)
        }
        _ => {
            let r = RadialProfile::shoot(alpha)?;
            let f = Field::from_real_fn(grid.clone(), |p| amp * r.eval(root * p.r2().sqrt()))?;
            let c = ReferenceConstants {
                mass: r.mass,
                potential: r.potential,
                q0: r.q0,
            };
            (f, c, ReferenceMethod::Shooting2d)
        }
    };
    let q = Quantities::of(&profile);
    let residual = stationary_residual(&profile, omega);
    let unscale = omega.powf(params.d as f64 / 2.0 - 2.0 / alpha);
    let mass = match method {
        ReferenceMethod::ClosedForm1d => q.mass * unscale,
        ReferenceMethod::Shooting2d => consts.mass,
    };
    Ok(ReferenceSoliton {
        profile,
        omega,
        mass,
        grid_mass: q.mass,
        gamma_hat: gamma_hat(params, &consts, omega),
        residual,
        method,
    })
}

/// Relative L2 residual of `-Delta u + omega u = |u|^alpha u`.
pub fn stationary_residual(u: &Field, omega: f64) -> f64 {
    let alpha = u.params().alpha;
    let (lx, ly) = u.neg_laplacians();
    let grid: &Arc<Grid> = u.grid();
    let (mut num, mut den_a, mut den_b, mut den_c) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..u.len() {
        let z = u.values()[i];
        let lap = lx.values()[i] + ly.values()[i];
        let nl = z * z.norm_sqr().powf(0.5 * alpha);
        num += (lap + z * omega - nl).norm_sqr();
        den_a += lap.norm_sqr();
        den_b += (z * omega).norm_sqr();
        den_c += nl.norm_sqr();
    }
    let vol = grid.cell_volume();
    let den = (den_a * vol).sqrt() + (den_b * vol).sqrt() + (den_c * vol).sqrt();
    if den == 0.0 {
        0.0
    } else {
        (num * vol).sqrt() / den
    }
}

/// Radial solution of `Q'' + Q'/r - Q + |Q|^alpha Q = 0` on a uniform mesh.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub q0: f64,
    pub h: f64,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Beyond this radius the profile is `a K_0(r)`.
    pub r_match: f64,
    pub tail_amp: f64,
    pub mass: f64,
    pub potential: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    Over,
    Under,
    Neither,
}

const SHOOT_H: f64 = 1e-3;
const SHOOT_R_MAX: f64 = 24.0;
const R_MATCH: f64 = 10.0;

fn rhs(alpha: f64, r: f64, q: f64, dq: f64) -> f64 {
    -dq / r + q - q.abs().powf(alpha) * q
}

/// Integrates from the series start; returns the classification and the trajectory.
fn shoot(q0: f64, alpha: f64, keep: bool) -> (Shot, Vec<f64>, Vec<f64>) {
    let h = SHOOT_H;
    let c = 0.5 * (q0 - q0.powf(alpha + 1.0));
    let mut r = h;
    let mut q = q0 + 0.5 * c * h * h;
    let mut dq = c * h;
    let (mut qs, mut dqs) = (Vec::new(), Vec::new());
    if keep {
        qs.push(q0);
        dqs.push(0.0);
        qs.push(q);
        dqs.push(dq);
    }
    let steps = (SHOOT_R_MAX / h) as usize;
    for _ in 1..steps {
        let k1q = dq;
        let k1p = rhs(alpha, r, q, dq);
        let k2q = dq + 0.5 * h * k1p;
        let k2p = rhs(alpha, r + 0.5 * h, q + 0.5 * h * k1q, k2q);
        let k3q = dq + 0.5 * h * k2p;
        let k3p = rhs(alpha, r + 0.5 * h, q + 0.5 * h * k2q, k3q);
        let k4q = dq + h * k3p;
        let k4p = rhs(alpha, r + h, q + h * k3q, k4q);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        dq += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        r += h;
        if keep {
            qs.push(q);
            dqs.push(dq);
        }
        if q < 0.0 {
            return (Shot::Over, qs, dqs);
        }
        if dq > 0.0 {
            return (Shot::Under, qs, dqs);
        }
    }
    (Shot::Neither, qs, dqs)
}

/// `K_0(r)` for `r >= 8` from its asymptotic expansion.
fn bessel_k0_large(r: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..12 {
        let odd = (2 * k - 1) as f64;
        term *= -odd * odd / (k as f64 * 8.0 * r);
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    (PI / (2.0 * r)).sqrt() * (-r).exp() * sum
}

impl RadialProfile {
    pub fn shoot(alpha: f64) -> Result<Self> {
        let mut lo = 1.0 + 1e-6;
        let mut hi = 2.0;
        if shoot(lo, alpha, false).0 != Shot::Under {
            return Err(Error::Shooting(format!("no undershoot at Q(0) = {lo}")));
        }
        let mut tries = 0;
        while shoot(hi, alpha, false).0 != Shot::Over {
            hi *= 1.5;
            tries += 1;
            if tries > 40 {
                return Err(Error::Shooting("no overshoot bracket found".into()));
            }
        }
        while hi - lo > 4.0 * f64::EPSILON * hi {
            let mid = 0.5 * (lo + hi);
            match shoot(mid, alpha, false).0 {
                Shot::Over => hi = mid,
                Shot::Under => lo = mid,
                Shot::Neither => {
                    lo = mid;
                    break;
                }
            }
        }
        let (_, qs, dqs) = shoot(lo, alpha, true);
        let n_match = (R_MATCH / SHOOT_H).round() as usize;
        if qs.len() <= n_match {
            return Err(Error::Shooting(format!(
                "trajectory departs before r = {R_MATCH}"
            )));
        }
        let mut values = qs[..=n_match].to_vec();
        let mut slopes = dqs[..=n_match].to_vec();
        let tail_amp = values[n_match] / bessel_k0_large(R_MATCH);
        // Extend with the tail for quadrature.
        let n_far = (40.0 / SHOOT_H) as usize;
        for j in n_match + 1..=n_far {
            let r = j as f64 * SHOOT_H;
            values.push(tail_amp * bessel_k0_large(r));
            slopes.push(0.0);
        }
        let simpson = |f: &dyn Fn(usize) -> f64| {
            let n = values.len() - 1;
            let n = n - n % 2;
            let mut s = f(0) + f(n);
            for j in 1..n {
                s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(j);
            }
            s * SHOOT_H / 3.0
        };
        let mass = 2.0 * PI * simpson(&|j| values[j] * values[j] * j as f64 * SHOOT_H);
        let potential =
            2.0 * PI * simpson(&|j| values[j].powf(alpha + 2.0) * j as f64 * SHOOT_H);
        values.truncate(n_match + 1);
        slopes.truncate(n_match + 1);
        Ok(Self {
            q0: lo,
            h: SHOOT_H,
            values,
            slopes,
            r_match: R_MATCH,
            tail_amp,
            mass,
            potential,
        })
    }

    /// Cubic Hermite interpolation inside the mesh, Bessel tail outside.
    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.r_match {
            return self.tail_amp * bessel_k0_large(r);
        }
        let s = r / self.h;
        let j = (s.floor() as usize).min(self.values.len() - 2);
        let t = s - j as f64;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (m0, m1) = (self.slopes[j] * self.h, self.slopes[j + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quintic_closed_form_matches_general_formula() {
        for x in [0.0, 0.3, 1.7] {
            let q = 3f64.powf(0.25) / (2.0 * x as f64).cosh().sqrt();
            assert!((q_1d(4.0, x) - q).abs() < 1e-15);
        }
    }

    #[test]
    fn k0_expansion() {
        // K_0(10) = 1.778006231616e-5
        // The expansion is asymptotic; at r = 10 its floor is near exp(-2r).
        assert!((bessel_k0_large(10.0) / 1.778006231616765e-5 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cubic_1d_constants_by_quadrature() {
        // -Q'' + Q = Q^3: Q = sqrt(2) sech x, mass 4.
        let c = reference_constants(1, 2.0).unwrap();
        assert!((c.mass - 4.0).abs() < 1e-10);
    }
}
