use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functionals::Quantities;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub sample_every: usize,
    /// Shrink the step like `(G_0 / G)^2` as the gradient norm G grows.
    pub adaptive: bool,
    pub grad_cutoff: f64,
    pub drift_tol: f64,
    /// Boundary-shell mass fraction at which the run is cut.
    pub boundary_tol: f64,
    /// Cutoff radius for the localized virial; defaults to `L/4`.
    pub radius: Option<f64>,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            sample_every: 10,
            adaptive: true,
            grad_cutoff: 1e6,
            drift_tol: 1e-5,
            boundary_tol: 1e-6,
            radius: None,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStatus {
    Complete,
    GradientCutoff,
    Drift,
    Boundary,
    StepLimit,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    CoerciveGlobal,
    BlowupIndicated,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass_t: Vec<f64>,
    pub energy_t: Vec<f64>,
    pub virial_k_t: Vec<f64>,
    pub variance_j_t: Vec<f64>,
    pub local_virial_zr_t: Vec<f64>,
    pub dzdt_t: Vec<f64>,
    pub radius: f64,
    /// `||grad u||_2`.
    pub grad_norm_t: Vec<f64>,
    pub kinetic_t: Vec<f64>,
    pub potential_t: Vec<f64>,
    pub boundary_t: Vec<f64>,
    /// Samples `[0, valid_len)` are within the conservation tolerance.
    pub valid_len: usize,
    pub status: TraceStatus,
    pub steps: usize,
    pub alpha: f64,
    /// `1/2 ||grad u_0||^2 + P(u_0)/(alpha+2)`, the scale for energy drift.
    pub energy_scale: f64,
    pub classification: Classification,
    pub mei_d: Option<f64>,
}

impl EvolutionTrace {
    pub fn max_mass_drift(&self) -> f64 {
        let m0 = self.mass_t[0];
        self.mass_t[..self.valid_len]
            .iter()
            .map(|m| (m - m0).abs() / m0.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy_t[0];
        self.energy_t[..self.valid_len]
            .iter()
            .map(|e| (e - e0).abs() / self.energy_scale.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    pub fn grad_growth(&self) -> f64 {
        let g0 = self.grad_norm_t[0];
        self.grad_norm_t[..self.valid_len]
            .iter()
            .cloned()
            .fold(0.0, f64::max)
            / g0
    }

    /// `(t_i, second difference of J at t_i, 8 K(t_i))` on interior valid
    /// samples, thinned so that neighbouring stencil points are at least
    /// `min_spacing` apart in time.
    pub fn glassey_samples(&self, min_spacing: f64) -> Vec<(f64, f64, f64)> {
        let t = &self.times;
        let j = &self.variance_j_t;
        let mut idx = Vec::new();
        for i in 0..self.valid_len {
            if idx.last().is_none_or(|&l: &usize| t[i] - t[l] >= min_spacing) {
                idx.push(i);
            }
        }
        idx.windows(3)
            .map(|w| {
                let (a, i, b) = (w[0], w[1], w[2]);
                let (h0, h1) = (t[i] - t[a], t[b] - t[i]);
                let d2 = 2.0 * ((j[b] - j[i]) / h1 - (j[i] - j[a]) / h0) / (h0 + h1);
                (t[i], d2, 8.0 * self.virial_k_t[i])
            })
            .collect()
    }

    pub const CSV_HEADER: &'static str = "t,mass,energy,K,J,z_R,grad_norm";

    pub fn csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for i in 0..self.times.len() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.times[i],
                self.mass_t[i],
                self.energy_t[i],
                self.virial_k_t[i],
                self.variance_j_t[i],
                self.local_virial_zr_t[i],
                self.grad_norm_t[i]
            ));
        }
        s
    }
}

/// Cutoff profile: `r^2` on `[0, 1]`, a C^2 quintic on `[1, 2]`, zero beyond.
pub fn chi(r: f64) -> f64 {
    if r <= 1.0 {
        r * r
    } else if r >= 2.0 {
        0.0
    } else {
        let s = r - 1.0;
        1.0 + s * (2.0 + s * (1.0 + s * (-25.0 + s * (34.0 - 13.0 * s))))
    }
}

/// Radial derivative of [`chi`].
pub fn chi_prime(r: f64) -> f64 {
    if r <= 1.0 {
        2.0 * r
    } else if r >= 2.0 {
        0.0
    } else {
        let s = r - 1.0;
        2.0 + s * (2.0 + s * (-75.0 + s * (136.0 - 65.0 * s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialSample {
    pub j: f64,
    pub z_r: f64,
    pub dzdt: f64,
    pub k: f64,
}

/// Variance, localized variance `z_R`, its time derivative and K.
pub fn virial_diagnostics(u: &Field, radius: f64) -> Result<VirialSample> {
    let half = u.domain().half_length;
    if !(radius > 0.0 && radius <= 0.5 * half) {
        return Err(Error::RadiusTooLarge {
            r: radius,
            half_length: half,
        });
    }
    let d = u.params().d;
    let grads = u.gradient_x();
    let (mut j, mut z, mut dz) = (0.0, 0.0, 0.0);
    for (i, val) in u.values().iter().enumerate() {
        let p = u.point(i);
        let a2 = val.norm_sqr();
        let r2 = p.r2();
        j += r2 * a2;
        let r = r2.sqrt();
        z += radius * radius * chi(r / radius) * a2;
        if r > 0.0 {
            let w = radius * chi_prime(r / radius) / r;
            let mut s = C64::default();
            for (a, g) in grads.iter().enumerate().take(d) {
                s += g.values()[i] * p.x[a];
            }
            dz += w * (s * val.conj()).im;
        }
    }
    let vol = u.grid().cell_volume();
    Ok(VirialSample {
        j: j * vol,
        z_r: z * vol,
        dzdt: 2.0 * dz * vol,
        k: Quantities::of(u).virial(u.params()),
    })
}

struct Recorder {
    trace: EvolutionTrace,
    m0: f64,
    e0: f64,
}

impl Recorder {
    /// Appends a sample; returns a stop reason when a tolerance is exceeded.
    fn record(&mut self, t: f64, u: &Field, opts: &EvolveOptions) -> Result<Option<TraceStatus>> {
        let p = *u.params();
        let q = Quantities::of(u);
        let v = virial_diagnostics(u, self.trace.radius)?;
        let energy = q.energy(&p);
        let grad = (q.kinetic_x + q.kinetic_y).sqrt();
        let bnd = u.boundary_mass_fraction();
        let tr = &mut self.trace;
        tr.times.push(t);
        tr.mass_t.push(q.mass);
        tr.energy_t.push(energy);
        tr.virial_k_t.push(v.k);
        tr.variance_j_t.push(v.j);
        tr.local_virial_zr_t.push(v.z_r);
        tr.dzdt_t.push(v.dzdt);
        tr.grad_norm_t.push(grad);
        tr.kinetic_t.push(q.kinetic_x + q.kinetic_y);
        tr.potential_t.push(q.potential);
        tr.boundary_t.push(bnd);
        if !(energy.is_finite() && q.mass.is_finite()) {
            return Ok(Some(TraceStatus::NonFinite));
        }
        let mass_drift = (q.mass - self.m0).abs() / self.m0.max(f64::MIN_POSITIVE);
        let energy_drift = (energy - self.e0).abs() / tr.energy_scale.max(f64::MIN_POSITIVE);
        if mass_drift > opts.drift_tol || energy_drift > opts.drift_tol {
            return Ok(Some(TraceStatus::Drift));
        }
        tr.valid_len = tr.times.len();
        if bnd > opts.boundary_tol {
            return Ok(Some(TraceStatus::Boundary));
        }
        if grad > opts.grad_cutoff {
            return Ok(Some(TraceStatus::GradientCutoff));
        }
        Ok(None)
    }
}

/// Largest accepted step, `h_x^2 / pi`.
pub fn max_dt(grid: &crate::grid::Grid) -> f64 {
    let h = grid.domain().h_x();
    h * h / std::f64::consts::PI
}

/// Step used when none is given, `max_dt / 4`.
pub fn default_dt(grid: &crate::grid::Grid) -> f64 {
    0.25 * max_dt(grid)
}

/// Strang splitting for `i u_t + Delta u = -|u|^alpha u`.
pub fn evolve(u0: &Field, t_end: f64, dt: f64, opts: &EvolveOptions) -> Result<EvolutionTrace> {
    if !(dt > 0.0 && dt.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt = {dt}, t_end = {t_end}")));
    }
    if opts.sample_every == 0 {
        return Err(Error::InvalidArgument("sample_every = 0".into()));
    }
    let grid = u0.grid().clone();
    let cfl = max_dt(&grid);
    if dt > cfl {
        return Err(Error::InvalidArgument(format!("dt = {dt} above h_x^2/pi = {cfl}")));
    }
    let p = *u0.params();
    let radius = opts.radius.unwrap_or(0.25 * grid.domain().half_length);
    let q0 = Quantities::of(u0);
    let k2: Vec<f64> = grid
        .kx2()
        .iter()
        .zip(grid.ky2())
        .map(|(a, b)| a + b)
        .collect();
    let vol_n = grid.cell_volume() / grid.len() as f64;
    let mut rec = Recorder {
        trace: EvolutionTrace {
            times: vec![],
            mass_t: vec![],
            energy_t: vec![],
            virial_k_t: vec![],
            variance_j_t: vec![],
            local_virial_zr_t: vec![],
            dzdt_t: vec![],
            radius,
            grad_norm_t: vec![],
            kinetic_t: vec![],
            potential_t: vec![],
            boundary_t: vec![],
            valid_len: 0,
            status: TraceStatus::Complete,
            steps: 0,
            alpha: p.alpha,
            energy_scale: 0.5 * (q0.kinetic_x + q0.kinetic_y) + q0.potential / (p.alpha + 2.0),
            classification: Classification::Inconclusive,
            mei_d: None,
        },
        m0: q0.mass,
        e0: q0.energy(&p),
    };
    if let Some(s) = rec.record(0.0, u0, opts)? {
        rec.trace.status = s;
        return Ok(rec.trace);
    }
    let g0 = (q0.kinetic_x + q0.kinetic_y).sqrt();
    let step_for = |g: f64| -> f64 {
        if opts.adaptive && g > g0 && g0 > 0.0 {
            dt * (g0 / g).powi(2)
        } else {
            dt
        }
    };
    let half_alpha = 0.5 * p.alpha;
    let mut spec = u0.values().to_vec();
    grid.forward(&mut spec);
    let mut t = 0.0;
    let mut h = step_for(g0).min(t_end);
    propagate(&mut spec, &k2, 0.5 * h);
    let mut phys = vec![C64::default(); spec.len()];
    let mut steps = 0usize;
    let status = loop {
        if t >= t_end - 1e-15 * t_end.max(1.0) {
            break TraceStatus::Complete;
        }
        if steps >= opts.max_steps {
            break TraceStatus::StepLimit;
        }
        phys.copy_from_slice(&spec);
        grid.inverse(&mut phys);
        for z in phys.iter_mut() {
            let a = z.norm_sqr().powf(half_alpha);
            *z *= C64::from_polar(1.0, h * a);
        }
        spec.copy_from_slice(&phys);
        grid.forward(&mut spec);
        steps += 1;
        t += h;
        let kin: f64 = spec.iter().zip(&k2).map(|(z, k)| z.norm_sqr() * k).sum::<f64>() * vol_n;
        let g = kin.sqrt();
        if !g.is_finite() {
            break TraceStatus::NonFinite;
        }
        let next = step_for(g).min((t_end - t).max(0.0));
        let sample = steps % opts.sample_every == 0 || next <= 0.0 || g > opts.grad_cutoff;
        if sample {
            propagate(&mut spec, &k2, 0.5 * h);
            phys.copy_from_slice(&spec);
            grid.inverse(&mut phys);
            let u = Field::new(grid.clone(), phys.clone());
            let Ok(u) = u else {
                break TraceStatus::NonFinite;
            };
            if let Some(s) = rec.record(t, &u, opts)? {
                break s;
            }
            propagate(&mut spec, &k2, 0.5 * next);
        } else {
            propagate(&mut spec, &k2, 0.5 * (h + next));
        }
        h = next;
    };
    rec.trace.status = status;
    rec.trace.steps = steps;
    if rec.trace.times.len() == 1 && status == TraceStatus::NonFinite {
        return Err(Error::NonFinite(0));
    }
    Ok(rec.trace)
}

fn propagate(spec: &mut [C64], k2: &[f64], tau: f64) {
    if tau == 0.0 {
        return;
    }
    for (z, k) in spec.iter_mut().zip(k2) {
        *z *= C64::from_polar(1.0, -k * tau);
    }
}

/// Parameters of the set `{M < c, E < m_c - nu, K > 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeiParams {
    pub c: f64,
    pub m_c: Option<f64>,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub classification: Classification,
    /// `M/(c - M) + E/(m_c - nu - E)`; absent outside the admissible region.
    pub mei_d: Option<f64>,
    pub in_set_initially: bool,
    pub set_persisted: bool,
    /// `max_t P / ((alpha + 2) ||grad u||^2)` over the valid samples.
    pub delta: f64,
    pub h1_sup: f64,
    pub h1_bound: Option<f64>,
    pub concave_fraction: f64,
    pub grad_growth: f64,
}

pub fn mei_functional(mass: f64, energy: f64, c: f64, level: f64) -> Option<f64> {
    (mass < c && energy < level).then(|| mass / (c - mass) + energy / (level - energy))
}

/// Fraction of interior samples with a negative second difference of J.
pub fn concave_fraction(trace: &EvolutionTrace) -> f64 {
    let g = trace.glassey_samples(0.0);
    if g.is_empty() {
        return 0.0;
    }
    g.iter().filter(|s| s.1 < 0.0).count() as f64 / g.len() as f64
}

pub fn classify(trace: &mut EvolutionTrace, mei: &MeiParams) -> Result<ClassifyReport> {
    let m_c = mei.m_c.ok_or(Error::MissingMc)?;
    if trace.valid_len == 0 {
        return Err(Error::InvalidArgument("trace has no valid samples".into()));
    }
    let n = trace.valid_len;
    let level = m_c - mei.nu;
    let (m0, e0, k0) = (trace.mass_t[0], trace.energy_t[0], trace.virial_k_t[0]);
    let mei_d = mei_functional(m0, e0, mei.c, level);
    let concave = concave_fraction(trace);
    let growth = trace.grad_growth();
    let h1_sup = (0..n)
        .map(|i| trace.mass_t[i] + trace.kinetic_t[i])
        .fold(0.0, f64::max);
    let delta = (0..n)
        .filter(|&i| trace.kinetic_t[i] > 0.0)
        .map(|i| trace.potential_t[i] / ((trace.alpha + 2.0) * trace.kinetic_t[i]))
        .fold(0.0, f64::max);
    let zero = m0 == 0.0;
    let in_set = zero || (m0 < mei.c && e0 < level && k0 > 0.0);
    let persisted = zero || trace.virial_k_t[..n].iter().all(|&k| k > 0.0);
    let h1_bound = mei_d
        .filter(|_| delta < 0.5)
        .map(|dv| (m_c + mei.c - mei.nu) * dv / (0.5 - delta));
    let classification = if !zero && concave >= 0.9 && growth >= 10.0 {
        Classification::BlowupIndicated
    } else if in_set && persisted && h1_bound.is_some_and(|b| h1_sup <= b * (1.0 + 1e-12)) {
        Classification::CoerciveGlobal
    } else {
        Classification::Inconclusive
    };
    trace.classification = classification;
    trace.mei_d = mei_d;
    Ok(ClassifyReport {
        classification,
        mei_d,
        in_set_initially: in_set,
        set_persisted: persisted,
        delta,
        h1_sup,
        h1_bound,
        concave_fraction: concave,
        grad_growth: growth,
    })
}

/// `u(x, y) = A exp(-|x|^2 / (2 sigma^2)) (1 + b cos y)` scaled to mass `m0`.
pub fn gaussian_datum(grid: &std::sync::Arc<crate::grid::Grid>, m0: f64, sigma: f64, b: f64) -> Field {
    let f = Field::from_real_fn(grid.clone(), |p| {
        (-0.5 * p.r2() / (sigma * sigma)).exp() * (1.0 + b * p.y.cos())
    })
    .expect("finite by construction");
    let m = f.norm2();
    f.scaled((m0 / m).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_is_c2() {
        let e = 1e-7;
        for r in [1.0, 2.0] {
            assert!((chi(r - e) - chi(r + e)).abs() < 1e-6);
            assert!((chi_prime(r - e) - chi_prime(r + e)).abs() < 1e-5);
        }
        let d2 = |r: f64| (chi_prime(r + e) - chi_prime(r - e)) / (2.0 * e);
        assert!((d2(1.0 - 1e-5) - d2(1.0 + 1e-5)).abs() < 1e-2);
        assert!(d2(2.0 - 1e-5).abs() < 1e-2);
        for r in [1.2, 1.5, 1.9] {
            let fd = (chi(r + e) - chi(r - e)) / (2.0 * e);
            assert!((fd - chi_prime(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn mei_outside_region() {
        assert_eq!(mei_functional(2.0, 0.1, 1.0, 1.0), None);
        assert_eq!(mei_functional(0.0, 0.0, 1.0, 1.0), Some(0.0));
    }
}
