//! Initial data and random corpora. All randomness goes through
//! [`rng`], a ChaCha20 stream keyed by `(seed, stream)`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::field::Field;
use crate::grid::Grid;

/// Counter-based generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// `exp(-omega |x|^2 / 2) (1 + modulation cos y)`.
pub fn gaussian(grid: &Arc<Grid>, omega: f64, modulation: f64) -> Field {
    Field::from_real_fn(grid.clone(), |p| {
        (-0.5 * omega * p.r2()).exp() * (1.0 + modulation * p.y.cos())
    })
    .expect("finite by construction")
}

/// Default symmetry-breaking start for frequency solves.
pub fn modulated(grid: &Arc<Grid>, omega: f64) -> Field {
    gaussian(grid, omega, if grid.has_torus() { 0.3 } else { 0.0 })
}

/// y-independent start for frequency solves.
pub fn flat(grid: &Arc<Grid>, omega: f64) -> Field {
    gaussian(grid, omega, 0.0)
}

/// Smooth, localized random field with a few low Fourier modes in y and x
/// and an optional phase. Nonzero with positive potential.
pub fn random_smooth(grid: &Arc<Grid>, rng: &mut ChaCha20Rng, complex: bool) -> Field {
    let d = grid.params().d;
    let half = grid.domain().half_length;
    let width = rng.random_range(0.6..1.8);
    let mut center = [0.0; 2];
    for c in center.iter_mut().take(d) {
        *c = rng.random_range(-0.1..0.1) * half;
    }
    let y_modes: Vec<(f64, f64)> = (1..=3)
        .map(|k| (rng.random_range(0.0..0.6) / k as f64, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let x_wave = rng.random_range(0.0..1.5);
    let x_amp = rng.random_range(0.0..0.4);
    let x_phase = rng.random_range(0.0..2.0 * PI);
    let chirp = if complex { rng.random_range(-1.0..1.0) } else { 0.0 };
    let torus = grid.has_torus();
    Field::from_fn(grid.clone(), |p| {
        let mut r2 = 0.0;
        let mut proj = 0.0;
        for a in 0..d {
            let dx = p.x[a] - center[a];
            r2 += dx * dx;
            proj += dx;
        }
        let env = (-0.5 * r2 / (width * width)).exp();
        let mut ymod = 1.0;
        if torus {
            for (k, (a, ph)) in y_modes.iter().enumerate() {
                ymod += a * ((k + 1) as f64 * p.y + ph).cos();
            }
        }
        let xmod = 1.0 + x_amp * (x_wave * proj + x_phase).cos();
        C64::from_polar(env * ymod * xmod, chirp * proj)
    })
    .expect("finite by construction")
}
