use std::sync::Arc;
use std::thread;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::functionals::{
    project_k_amplitude, project_n_amplitude, FunctionalReport, Quantities,
};
use crate::grid::Grid;
use crate::init;
use crate::params::{DomainPolicy, DomainSpec, ModelParams};
use crate::reference::{rd_reference, stationary_residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    PohozaevK,
    NehariN,
    MassM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// Line search could not decrease the objective.
    Stalled,
    /// Iterate collapsed to (numerically) zero.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Relative preconditioned-gradient norm at which a solve stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative constraint residual required of a converged state.
    pub constraint_tol: f64,
    /// Replace each iterate by its pointwise modulus.
    pub modulus: bool,
    /// Pin mass-critical iterates to the dilation representative that
    /// solves the stationary equation itself.
    pub natural_gauge: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 4000,
            constraint_tol: 1e-8,
            modulus: true,
            natural_gauge: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub field: Field,
    pub omega: f64,
    pub constraint: Constraint,
    pub value: f64,
    pub report: FunctionalReport,
    pub el_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub converged: bool,
    pub boundary_mass_fraction: f64,
    pub gradient_norm: f64,
    /// Prescribed mass for mass-constrained states.
    pub target_mass: Option<f64>,
}

/// Boundary-shell mass fraction above which a state is flagged.
pub const BOUNDARY_FLAG: f64 = 1e-8;

impl GroundState {
    pub fn y_fraction(&self) -> f64 {
        self.report.y_fraction()
    }

    pub fn boundary_flagged(&self) -> bool {
        self.boundary_mass_fraction > BOUNDARY_FLAG
    }

    /// Relative residual of the active constraint.
    pub fn constraint_residual(&self) -> f64 {
        let r = &self.report;
        match self.constraint {
            Constraint::PohozaevK => r.virial.abs() / r.kinetic_x.max(f64::MIN_POSITIVE),
            Constraint::NehariN => {
                r.nehari.abs()
                    / (r.omega * r.mass + r.kinetic_x + r.kinetic_y).max(f64::MIN_POSITIVE)
            }
            Constraint::MassM => {
                let c = self.target_mass.unwrap_or(r.mass);
                (r.mass - c).abs() / c
            }
        }
    }

    pub fn summary(&self) -> GroundStateSummary {
        GroundStateSummary {
            omega: self.omega,
            constraint: self.constraint,
            value: self.value,
            report: self.report,
            el_residual: self.el_residual,
            iterations: self.iterations,
            status: self.status,
            converged: self.converged,
            boundary_mass_fraction: self.boundary_mass_fraction,
            boundary_flagged: self.boundary_flagged(),
            gradient_norm: self.gradient_norm,
            y_fraction: self.y_fraction(),
            target_mass: self.target_mass,
        }
    }
}

/// Serializable part of a [`GroundState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateSummary {
    pub omega: f64,
    pub constraint: Constraint,
    pub value: f64,
    pub report: FunctionalReport,
    pub el_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub converged: bool,
    pub boundary_mass_fraction: f64,
    pub boundary_flagged: bool,
    pub gradient_norm: f64,
    pub y_fraction: f64,
    pub target_mass: Option<f64>,
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("omega = {omega}")))
    }
}

/// `|u|^alpha u` per node.
pub(crate) fn nonlinearity(u: &Field) -> Vec<C64> {
    let half = 0.5 * u.params().alpha;
    u.values()
        .iter()
        .map(|z| z * z.norm_sqr().powf(half))
        .collect()
}

fn rel_norm(d: &[C64], u: &Field) -> f64 {
    let num: f64 = d.iter().map(|z| z.norm_sqr()).sum();
    let den: f64 = u.values().iter().map(|z| z.norm_sqr()).sum();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        f64::INFINITY
    }
}

struct Iterate {
    u: Field,
    q: Quantities,
    value: f64,
}

fn finish(
    it: Iterate,
    omega: f64,
    constraint: Constraint,
    iterations: usize,
    status: SolveStatus,
    gradient_norm: f64,
) -> GroundState {
    let report = FunctionalReport::from_quantities(&it.q, it.u.params(), omega);
    let el_residual = stationary_residual(&it.u, omega);
    GroundState {
        boundary_mass_fraction: it.u.boundary_mass_fraction(),
        field: it.u,
        omega,
        constraint,
        value: it.value,
        report,
        el_residual,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        gradient_norm,
        target_mass: None,
    }
}

fn degenerate(init: &Field, omega: f64, constraint: Constraint, iterations: usize) -> GroundState {
    let z = Field::zeros(init.grid().clone());
    let q = Quantities::of(&z);
    finish(
        Iterate { u: z, q, value: 0.0 },
        omega,
        constraint,
        iterations,
        SolveStatus::Degenerate,
        f64::NAN,
    )
}

/// Nehari route: minimize `S_omega` on `{N_omega = 0}`.
pub fn solve_beta(init: &Field, omega: f64, opts: &SolverOptions) -> Result<GroundState> {
    check_omega(omega)?;
    let p = *init.params();
    let grid = init.grid().clone();
    let pre: Vec<f64> = grid
        .kx2()
        .iter()
        .zip(grid.ky2())
        .map(|(a, b)| 1.0 / (omega + a + b))
        .collect();
    let start = if opts.modulus { init.modulus() } else { init.clone() };
    let project = |v: &Field| -> Option<Iterate> {
        let q = Quantities::of(v);
        let s = project_n_amplitude(&q, &p, omega).ok()?;
        let u = v.scaled(s);
        let q = Quantities::of(&u);
        let value = q.action(&p, omega);
        value.is_finite().then_some(Iterate { u, q, value })
    };
    let Some(mut cur) = project(&start) else {
        return Ok(degenerate(init, omega, Constraint::NehariN, 0));
    };
    let mut tau: f64 = 1.0;
    let mut gnorm = f64::INFINITY;
    let mut stagnant = Stagnation::default();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = opts.max_iter;
    for iter in 0..opts.max_iter {
        let f = Field::from_parts(grid.clone(), nonlinearity(&cur.u));
        let pf = grid.apply_real_symbol(f.values(), &pre);
        let d: Vec<C64> = cur.u.values().iter().zip(&pf).map(|(a, b)| a - b).collect();
        gnorm = rel_norm(&d, &cur.u);
        if gnorm < opts.tol {
            status = SolveStatus::Converged;
            iterations = iter;
            break;
        }
        let dir = Field::from_parts(grid.clone(), d);
        tau = (2.0 * tau).min(1.0);
        let surgery = opts.modulus && gnorm > MODULUS_UNTIL;
        let next = line_search(&cur, &mut tau, |t| {
            let v = cur.u.axpy(-t, &dir);
            let v = if surgery { v.modulus() } else { v };
            project(&v)
        });
        let next = next.filter(|n| !stagnant.observe(cur.value, n.value));
        match next {
            Some(n) if n.q.mass > 0.0 => cur = n,
            Some(_) => return Ok(degenerate(init, omega, Constraint::NehariN, iter)),
            None => {
                status = SolveStatus::Stalled;
                iterations = iter;
                break;
            }
        }
    }
    if opts.modulus {
        cur = project(&cur.u.modulus()).unwrap_or(cur);
    }
    Ok(finish(cur, omega, Constraint::NehariN, iterations, status, gnorm))
}

/// Gradient norm below which the modulus is no longer taken. On a coarse
/// grid the discrete minimizer may carry tiny negative ringing, and
/// taking the modulus every step would pin the iteration short of it.
/// The modulus is applied once more to the final state.
const MODULUS_UNTIL: f64 = 1e-4;

/// Counts consecutive steps that leave the value unchanged.
#[derive(Default)]
pub(crate) struct Stagnation {
    run: usize,
}

impl Stagnation {
    const LIMIT: usize = 50;

    /// True once the value has not moved for `LIMIT` steps in a row.
    pub(crate) fn observe(&mut self, old: f64, new: f64) -> bool {
        if (old - new).abs() <= 1e-15 * old.abs() {
            self.run += 1;
        } else {
            self.run = 0;
        }
        self.run >= Self::LIMIT
    }
}

/// Halving backtracking; accepts the first trial that does not increase the value.
fn line_search<F>(cur: &Iterate, tau: &mut f64, trial: F) -> Option<Iterate>
where
    F: Fn(f64) -> Option<Iterate>,
{
    let slack = 1e-12 * cur.value.abs().max(1e-300);
    while *tau > 1e-12 {
        if let Some(n) = trial(*tau) {
            if n.value <= cur.value + slack {
                return Some(n);
            }
        }
        *tau *= 0.5;
    }
    None
}

/// Kinetic_x that makes a mass-critical state on `{K = 0}` also satisfy `N_omega = 0`.
fn natural_kinetic_x(q: &Quantities, p: &ModelParams, omega: f64) -> f64 {
    (omega * q.mass + q.kinetic_y) * 2.0 / p.alpha
}

/// Recentres `u` along x, then dilates by `t` keeping its mass: `t^{d/2} u(t x, y)`.
pub fn dilate_mass_preserving(u: &Field, t: f64) -> Result<Field> {
    let centred = u.translate_x(-u.centre_x())?;
    Ok(centred.dilate_continuous(t)?.scaled(t.powf(0.5 * u.params().d as f64)))
}

/// Pohozaev route: minimize `S_omega` on `{K = 0}`.
pub fn solve_gamma(init: &Field, omega: f64, opts: &SolverOptions) -> Result<GroundState> {
    check_omega(omega)?;
    let p = *init.params();
    let grid = init.grid().clone();
    let d = p.d as f64;
    let project = |v: &Field| -> Option<Iterate> {
        let q = Quantities::of(v);
        let s = project_k_amplitude(&q, &p).ok()?;
        let u = v.scaled(s);
        let q = Quantities::of(&u);
        let value = q.action(&p, omega);
        value.is_finite().then_some(Iterate { u, q, value })
    };
    let regauge = |it: Iterate| -> Iterate {
        let target = natural_kinetic_x(&it.q, &p, omega);
        let t = (target / it.q.kinetic_x).sqrt();
        match dilate_mass_preserving(&it.u, t).ok().and_then(|v| project(&v)) {
            Some(n) => n,
            None => it,
        }
    };
    let start = if opts.modulus { init.modulus() } else { init.clone() };
    let Some(mut cur) = project(&start) else {
        return Ok(degenerate(init, omega, Constraint::PohozaevK, 0));
    };
    let gauge = p.is_mass_critical() && opts.natural_gauge;
    if gauge {
        cur = regauge(cur);
    }
    let mut tau: f64 = 1.0;
    let mut gnorm = f64::INFINITY;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = opts.max_iter;
    let mut stagnant = Stagnation::default();
    let gauge_ratio = |it: &Iterate| it.q.kinetic_x / natural_kinetic_x(&it.q, &p, omega);
    for iter in 0..opts.max_iter {
        let q = cur.q;
        let n = q.nehari(omega);
        let theta_x = 1.0 + 2.0 * n / (p.alpha * q.kinetic_x);
        let theta_p = 1.0 + d * n / (2.0 * q.kinetic_x);
        let (lx, ly) = cur.u.neg_laplacians();
        let f = nonlinearity(&cur.u);
        let g: Vec<C64> = (0..cur.u.len())
            .map(|i| {
                cur.u.values()[i] * omega + ly.values()[i] + lx.values()[i] * theta_x
                    - f[i] * theta_p
            })
            .collect();
        let pre: Vec<f64> = grid
            .kx2()
            .iter()
            .zip(grid.ky2())
            .map(|(a, b)| 1.0 / (omega + theta_x * a + b))
            .collect();
        let mut dvals = grid.apply_real_symbol(&g, &pre);
        if gauge {
            // Remove the component along the normal of the gauge constraint
            // `kinetic_x = natural`, in the metric of the preconditioner.
            let normal: Vec<C64> = (0..cur.u.len())
                .map(|i| {
                    lx.values()[i] * 2.0 - ly.values()[i] - cur.u.values()[i] * omega
                })
                .collect();
            let pn = grid.apply_real_symbol(&normal, &pre);
            let num: f64 = g.iter().zip(&pn).map(|(a, b)| (a * b.conj()).re).sum();
            let den: f64 = normal.iter().zip(&pn).map(|(a, b)| (a * b.conj()).re).sum();
            if den > 0.0 {
                let c = num / den;
                for (v, b) in dvals.iter_mut().zip(&pn) {
                    *v -= b * c;
                }
            }
        }
        gnorm = rel_norm(&dvals, &cur.u);
        if gnorm < opts.tol {
            status = SolveStatus::Converged;
            iterations = iter;
            break;
        }
        let dir = Field::from_parts(grid.clone(), dvals);
        tau = (2.0 * tau).min(1.0);
        let surgery = opts.modulus && gnorm > MODULUS_UNTIL;
        let next = line_search(&cur, &mut tau, |t| {
            let v = cur.u.axpy(-t, &dir);
            let v = if surgery { v.modulus() } else { v };
            project(&v)
        });
        let next = next.filter(|n| !stagnant.observe(cur.value, n.value));
        match next {
            Some(n) if n.q.mass > 0.0 => {
                cur = n;
                if gauge && (gauge_ratio(&cur) - 1.0).abs() > 1e-6 {
                    cur = regauge(cur);
                }
            }
            Some(_) => return Ok(degenerate(init, omega, Constraint::PohozaevK, iter)),
            None => {
                status = SolveStatus::Stalled;
                iterations = iter;
                break;
            }
        }
    }
    if gauge {
        cur = regauge(cur);
    }
    if opts.modulus {
        cur = project(&cur.u.modulus()).unwrap_or(cur);
    }
    Ok(finish(cur, omega, Constraint::PohozaevK, iterations, status, gnorm))
}

/// Minimizers from the symmetry-breaking and the y-independent starts.
#[derive(Debug, Clone)]
pub struct BranchSolve {
    pub modulated: GroundState,
    pub flat: Option<GroundState>,
}

impl BranchSolve {
    /// Lowest-value state, preferring converged ones.
    pub fn best(&self) -> &GroundState {
        let mut best = &self.modulated;
        if let Some(f) = &self.flat {
            let better = match (f.converged, best.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => f.value < best.value,
            };
            if better {
                best = f;
            }
        }
        best
    }
}

/// Runs `solver` from `modulated` and (when there is a torus) `flat`, concurrently.
pub fn solve_branches<F>(modulated: &Field, flat: Option<&Field>, solver: F) -> Result<BranchSolve>
where
    F: Fn(&Field) -> Result<GroundState> + Sync,
{
    let (m, f) = thread::scope(|s| {
        let h = flat.map(|fl| s.spawn(|| solver(fl)));
        let m = solver(modulated);
        (m, h.map(|h| h.join().expect("solver thread panicked")))
    });
    Ok(BranchSolve {
        modulated: m?,
        flat: f.transpose()?,
    })
}

/// `solve_gamma` from the default modulated and flat initial guesses.
pub fn solve_gamma_branches(grid: &Arc<Grid>, omega: f64, opts: &SolverOptions) -> Result<BranchSolve> {
    let m = init::modulated(grid, omega);
    let f = grid.has_torus().then(|| init::flat(grid, omega));
    solve_branches(&m, f.as_ref(), |u| solve_gamma(u, omega, opts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub omega: f64,
    pub gamma: f64,
    pub beta: f64,
    pub mass_c: f64,
    pub y_fraction: f64,
    pub rd_reference: f64,
    pub converged: bool,
}

pub const SWEEP_CSV_HEADER: &str = "omega,gamma,beta,mass_c,y_fraction,rd_reference,converged";

impl SweepRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.omega,
            self.gamma,
            self.beta,
            self.mass_c,
            self.y_fraction,
            self.rd_reference,
            self.converged
        )
    }

    /// Relative Nehari/Pohozaev discrepancy.
    pub fn duality_gap(&self) -> f64 {
        (self.gamma - self.beta).abs() / self.gamma.abs()
    }
}

/// `kappa^{2/alpha} u(kappa x, y)` for real `kappa`, used for warm starts.
pub fn scale_t_continuous(u: &Field, kappa: f64) -> Result<Field> {
    Ok(u
        .dilate_continuous(kappa)?
        .scaled(kappa.powf(2.0 / u.params().alpha)))
}

/// One sweep entry; `warm` is the previous minimizer and its frequency.
pub fn sweep_entry(
    grid: &Arc<Grid>,
    omega: f64,
    warm: Option<(&Field, f64)>,
    opts: &SolverOptions,
) -> Result<(SweepRecord, GroundState)> {
    check_omega(omega)?;
    let start = match warm {
        Some((prev, w_prev)) => {
            let kappa = (omega / w_prev).sqrt();
            let base = scale_t_continuous(&prev.modulus(), kappa)?;
            if grid.has_torus() {
                base.axpy(0.3, &modulate_cos(&base))
            } else {
                base
            }
        }
        None => init::modulated(grid, omega),
    };
    let flat = grid.has_torus().then(|| init::flat(grid, omega));
    let (g, b) = thread::scope(|s| {
        let hb = s.spawn(|| solve_branches(&start, flat.as_ref(), |u| solve_beta(u, omega, opts)));
        let g = solve_branches(&start, flat.as_ref(), |u| solve_gamma(u, omega, opts));
        (g, hb.join().expect("solver thread panicked"))
    });
    let (g, b) = (g?, b?);
    let gs = g.best().clone();
    let bs = b.best();
    let rec = SweepRecord {
        omega,
        gamma: gs.value,
        beta: bs.value,
        mass_c: gs.report.mass,
        y_fraction: gs.y_fraction(),
        rd_reference: rd_reference(grid.params(), omega)?,
        converged: gs.converged && bs.converged,
    };
    Ok((rec, gs))
}

/// `u(x, y) cos y`.
fn modulate_cos(u: &Field) -> Field {
    let grid = u.grid().clone();
    let vals = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| z * u.point(i).y.cos())
        .collect();
    Field::from_parts(grid, vals)
}

/// Frequency sweep; consecutive entries on the same domain are warm-started
/// from the previous converged minimizer.
pub fn sweep(
    params: &ModelParams,
    policy: &DomainPolicy,
    omegas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<SweepRecord>> {
    if omegas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("omega list must be sorted".into()));
    }
    let mut out = Vec::with_capacity(omegas.len());
    let mut warm: Option<(GroundState, f64)> = None;
    for &w in omegas {
        let grid = Grid::new(*params, policy.domain_for(w, params.m > 0))?;
        let prev = warm
            .as_ref()
            .filter(|(g, _)| g.field.domain() == grid.domain())
            .map(|(g, o)| (&g.field, *o));
        let (rec, gs) = sweep_entry(&grid, w, prev, opts)?;
        if gs.converged {
            warm = Some((gs, w));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProbe {
    pub omega: f64,
    pub gamma: f64,
    pub rd_reference: f64,
    pub y_fraction: f64,
    pub below_reference: bool,
    pub y_dependent: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// Midpoint of `bracket`.
    pub estimate: f64,
    /// Interval hull of the two indicator brackets.
    pub bracket: (f64, f64),
    pub value_bracket: (f64, f64),
    pub y_bracket: (f64, f64),
    pub consistent: bool,
    pub probes: Vec<ThresholdProbe>,
}

impl ThresholdResult {
    pub fn relative_width(&self) -> f64 {
        (self.bracket.1 - self.bracket.0) / self.bracket.1
    }
}

/// y_fraction above which a minimizer counts as y-dependent.
pub const Y_DEPENDENT: f64 = 1e-4;

pub fn threshold_probe(grid: &Arc<Grid>, omega: f64, opts: &SolverOptions) -> Result<ThresholdProbe> {
    let b = solve_gamma_branches(grid, omega, opts)?;
    let best = b.best();
    let rd = rd_reference(grid.params(), omega)?;
    let margin = 1e-4 * rd / (2.0 * std::f64::consts::PI).powi(grid.params().m as i32);
    Ok(ThresholdProbe {
        omega,
        gamma: best.value,
        rd_reference: rd,
        y_fraction: best.y_fraction(),
        below_reference: best.value < rd - margin,
        y_dependent: best.y_fraction() > Y_DEPENDENT,
        converged: best.converged,
    })
}

/// Bisection for the frequency at which minimizers start depending on y.
pub fn find_omega_star(
    params: &ModelParams,
    domain: &DomainSpec,
    bracket: (f64, f64),
    tol: f64,
    opts: &SolverOptions,
) -> Result<ThresholdResult> {
    if params.m != 1 {
        return Err(Error::NoTorusAxis);
    }
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("bracket [{lo}, {hi}], tol {tol}")));
    }
    let grid = Grid::new(*params, *domain)?;
    let (a, b) = thread::scope(|s| {
        let h = s.spawn(|| threshold_probe(&grid, hi, opts));
        (threshold_probe(&grid, lo, opts), h.join().expect("probe thread panicked"))
    });
    let (a, b) = (a?, b?);
    if a.below_reference == b.below_reference {
        return Err(Error::NoSignChange { lo, hi });
    }
    let rising = b.below_reference;
    let mut probes = vec![a, b];
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let pr = threshold_probe(&grid, mid, opts)?;
        if pr.below_reference == rising {
            hi = mid;
        } else {
            lo = mid;
        }
        probes.push(pr);
    }
    probes.sort_by(|x, y| x.omega.total_cmp(&y.omega));
    let bracket_of = |flag: &dyn Fn(&ThresholdProbe) -> bool| -> (f64, f64) {
        let lo = probes
            .iter()
            .filter(|p| flag(p) != rising)
            .map(|p| p.omega)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = probes
            .iter()
            .filter(|p| flag(p) == rising)
            .map(|p| p.omega)
            .fold(f64::INFINITY, f64::min);
        (lo, hi)
    };
    let value_bracket = bracket_of(&|p| p.below_reference);
    let y_bracket = bracket_of(&|p| p.y_dependent);
    let consistent = probes.iter().all(|p| p.below_reference == p.y_dependent);
    let hull = (
        value_bracket.0.min(y_bracket.0),
        value_bracket.1.max(y_bracket.1),
    );
    Ok(ThresholdResult {
        estimate: 0.5 * (hull.0 + hull.1),
        bracket: hull,
        value_bracket,
        y_bracket,
        consistent,
        probes,
    })
}
