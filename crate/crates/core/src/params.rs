use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    MassCritical,
    Intercritical,
}

/// PDE instance: `d` unbounded axes, `m` torus axes, nonlinearity `|u|^alpha u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
    pub mode: Mode,
}

impl ModelParams {
    pub fn new(d: usize, m: usize, alpha: f64) -> Result<Self> {
        if !(1..=2).contains(&d) {
            return Err(Error::InvalidParams(format!("d = {d}, expected 1 or 2")));
        }
        if m > 1 {
            return Err(Error::InvalidParams(format!("m = {m}, expected 0 or 1")));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidParams(format!("alpha = {alpha}")));
        }
        let lower = 4.0 / d as f64;
        if alpha < lower {
            return Err(Error::InvalidParams(format!(
                "alpha = {alpha} is below the mass-critical exponent {lower}"
            )));
        }
        if d + m >= 3 {
            let upper = 4.0 / (d + m - 2) as f64;
            if alpha >= upper {
                return Err(Error::InvalidParams(format!(
                    "alpha = {alpha} is not below the energy-critical exponent {upper}"
                )));
            }
        }
        let mode = if alpha == lower {
            Mode::MassCritical
        } else {
            Mode::Intercritical
        };
        Ok(Self { d, m, alpha, mode })
    }

    /// Quintic on R x T, the default desk configuration.
    pub fn quintic_waveguide() -> Self {
        Self::new(1, 1, 4.0).expect("valid")
    }

    pub fn is_mass_critical(&self) -> bool {
        self.mode == Mode::MassCritical
    }

    /// Coefficient `alpha d / (2 (alpha + 2))` of the potential in K.
    pub fn virial_coeff(&self) -> f64 {
        self.alpha * self.d as f64 / (2.0 * (self.alpha + 2.0))
    }

    /// Same model with the torus factor removed.
    pub fn without_torus(&self) -> Self {
        Self::new(self.d, 0, self.alpha).expect("dropping the torus keeps alpha admissible")
    }
}

/// Box truncation of R^d and grid sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub half_length: f64,
    pub n_x: usize,
    pub n_y: Option<usize>,
}

pub const TORUS_LENGTH: f64 = 2.0 * std::f64::consts::PI;

impl DomainSpec {
    pub fn new(half_length: f64, n_x: usize, n_y: Option<usize>) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidDomain(format!("half_length = {half_length}")));
        }
        if !n_x.is_power_of_two() || n_x < 4 {
            return Err(Error::InvalidDomain(format!("n_x = {n_x} is not a power of two >= 4")));
        }
        if let Some(n) = n_y {
            if !n.is_power_of_two() || n < 2 {
                return Err(Error::InvalidDomain(format!("n_y = {n} is not a power of two >= 2")));
            }
        }
        Ok(Self { half_length, n_x, n_y })
    }

    /// L = 16, n_x = 512, n_y = 64.
    pub fn desk() -> Self {
        Self::new(16.0, 512, Some(64)).expect("valid")
    }

    /// Domain sized for a frequency-omega ground state of the quintic waveguide:
    /// box at least 16/sqrt(omega), spacing resolving the decay rate sqrt(omega).
    pub fn for_frequency(omega: f64, with_torus: bool) -> Self {
        let root = omega.sqrt();
        let half_length = (16.0 / root).max(16.0);
        let half_length = 2f64.powi(half_length.log2().ceil() as i32);
        let h_target = (0.125 / root).min(0.125);
        let n_x = ((2.0 * half_length / h_target).ceil() as usize)
            .next_power_of_two()
            .max(512);
        let n_y = with_torus.then(|| {
            ((TORUS_LENGTH * root / 0.125).ceil() as usize)
                .next_power_of_two()
                .max(64)
        });
        Self::new(half_length, n_x, n_y).expect("valid by construction")
    }

    /// Twice as many points on every axis, same box.
    pub fn refined(&self) -> Self {
        Self {
            half_length: self.half_length,
            n_x: 2 * self.n_x,
            n_y: self.n_y.map(|n| 2 * n),
        }
    }

    pub fn h_x(&self) -> f64 {
        2.0 * self.half_length / self.n_x as f64
    }

    pub fn h_y(&self) -> Option<f64> {
        self.n_y.map(|n| TORUS_LENGTH / n as f64)
    }
}

/// How a multi-frequency workflow picks its domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainPolicy {
    Fixed(DomainSpec),
    PerFrequency,
}

impl DomainPolicy {
    pub fn domain_for(&self, omega: f64, with_torus: bool) -> DomainSpec {
        match self {
            Self::Fixed(d) => *d,
            Self::PerFrequency => DomainSpec::for_frequency(omega, with_torus),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admissible_range() {
        assert!(ModelParams::new(1, 1, 4.0).unwrap().is_mass_critical());
        assert!(ModelParams::new(2, 0, 2.0).unwrap().is_mass_critical());
        assert_eq!(ModelParams::new(1, 1, 6.0).unwrap().mode, Mode::Intercritical);
        assert!(ModelParams::new(1, 1, 3.9).is_err());
        // d + m = 3: alpha < 4
        assert!(ModelParams::new(2, 1, 3.0).is_ok());
        assert!(ModelParams::new(2, 1, 4.0).is_err());
        assert!(ModelParams::new(3, 0, 2.0).is_err());
        assert!(ModelParams::new(1, 2, 4.0).is_err());
    }

    #[test]
    fn domain_validation() {
        assert!(DomainSpec::new(16.0, 500, None).is_err());
        assert!(DomainSpec::new(-1.0, 512, None).is_err());
        assert!(DomainSpec::new(16.0, 512, Some(48)).is_err());
        let d = DomainSpec::desk();
        assert_eq!(d.h_x(), 1.0 / 16.0);
    }

    #[test]
    fn frequency_domains() {
        let lo = DomainSpec::for_frequency(0.05, true);
        assert!(lo.half_length >= 16.0 / 0.05f64.sqrt());
        let hi = DomainSpec::for_frequency(15.0, true);
        assert!(hi.h_x() * 15f64.sqrt() <= 0.125 + 1e-12);
        assert!(hi.h_y().unwrap() * 15f64.sqrt() <= 0.125 + 1e-12);
        assert_eq!(DomainSpec::for_frequency(1.0, true), DomainSpec::desk());
    }
}
