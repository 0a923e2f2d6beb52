use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::frequency::{
    dilate_mass_preserving, nonlinearity, solve_gamma_branches, Stagnation, Constraint, GroundState, SolveStatus, SolverOptions,
};
use crate::functionals::{FunctionalReport, Quantities};
use crate::grid::Grid;
use crate::init;
use crate::params::ModelParams;
use crate::reference::{reference_constants, stationary_residual};

/// Relative |K| / kinetic_x accepted from the retraction.
const RETRACT_TOL: f64 = 1e-11;

/// Relative constraint error accepted along the descent. Looser values
/// leak into I above the line-search slack.
const CHORD_TOL: f64 = 1e-14;

/// Gradient norm below which the gauge multiplier is trusted.
const SETTLED: f64 = 1e-3;

/// Largest mass for which m_c is defined on the quintic waveguide, `(2 pi)^m M(Q)`.
pub fn critical_mass(params: &ModelParams) -> Result<f64> {
    let c = reference_constants(params.d, params.alpha)?;
    Ok((2.0 * std::f64::consts::PI).powi(params.m as i32) * c.mass)
}

#[derive(Debug, Clone)]
pub enum MassInit {
    /// Two-piece construction with disjoint supports, balanced to K = 0.
    Surgery,
    /// Random smooth field from the `(seed, stream)` generator.
    Random { seed: u64, stream: u64 },
    Given(Field),
}

#[derive(Debug, Clone)]
pub struct MassSolve {
    pub state: GroundState,
    /// Multiplier of the mass constraint, gauge independent.
    pub omega_lagrange: f64,
    /// Multiplier ratio; dilating by `sqrt(theta)` gives a solution of the stationary equation.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassCurveRecord {
    pub c: f64,
    pub m_c: f64,
    pub omega_lagrange: f64,
    pub lf_discrepancy: Option<f64>,
    pub y_fraction: f64,
    pub converged: bool,
}

pub const MASS_CSV_HEADER: &str = "c,m_c,omega_lagrange,lf_discrepancy,y_fraction,converged";

impl MassCurveRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.c,
            self.m_c,
            self.omega_lagrange,
            self.lf_discrepancy.map(|v| v.to_string()).unwrap_or_default(),
            self.y_fraction,
            self.converged
        )
    }
}

struct Iterate {
    u: Field,
    q: Quantities,
    value: f64,
}

/// `s |w|^p` with mass `c`, for the exponent `p` at which K vanishes.
///
/// Small powers flatten the field (K > 0), large ones concentrate it
/// (K < 0); the root is bracketed from `p0` outward and then refined.
fn retract(w: &Field, c: f64, p0: f64) -> Option<(Iterate, f64)> {
    const P_MIN: f64 = 0.05;
    const P_MAX: f64 = 64.0;
    let params = *w.params();
    let peak = w.max_abs();
    if !(peak > 0.0) {
        return None;
    }
    let modulus: Vec<f64> = w.values().iter().map(|z| z.norm() / peak).collect();
    let grid = w.grid().clone();
    let eval = |p: f64| -> Option<(f64, Iterate)> {
        let vals: Vec<C64> = modulus.iter().map(|a| C64::new(a.powf(p), 0.0)).collect();
        let v = Field::from_parts(grid.clone(), vals);
        let q = Quantities::of(&v);
        if !(q.mass > 0.0 && q.kinetic_x > 0.0) {
            return None;
        }
        let u = v.scaled((c / q.mass).sqrt());
        let q = Quantities::of(&u);
        let h = q.virial(&params) / q.kinetic_x;
        let value = q.i_plain(&params);
        (h.is_finite() && value.is_finite()).then_some((h, Iterate { u, q, value }))
    };
    let (h0, it0) = eval(p0)?;
    if h0.abs() < RETRACT_TOL {
        return Some((it0, p0));
    }
    // Near a feasible point a few secant steps suffice.
    {
        let (mut pa, mut ha) = (p0, h0);
        let mut pb = p0 * (1.0 + 1e-3 * h0.signum());
        let (mut hb, _) = eval(pb)?;
        for _ in 0..8 {
            let pn = pb - hb * (pb - pa) / (hb - ha);
            if !(pn.is_finite() && (P_MIN..=P_MAX).contains(&pn)) {
                break;
            }
            let (hn, inew) = eval(pn)?;
            if hn.abs() < RETRACT_TOL {
                return Some((inew, pn));
            }
            (pa, ha) = (pb, hb);
            (pb, hb) = (pn, hn);
        }
    }
    // Bracket: K decreases as p grows.
    let grow = if h0 > 0.0 { 1.25 } else { 0.8 };
    let (mut pa, mut ha) = (p0, h0);
    let (mut pb, mut hb, mut ib) = (p0, h0, it0);
    while hb.signum() == h0.signum() {
        (pa, ha) = (pb, hb);
        pb *= grow;
        if !(P_MIN..=P_MAX).contains(&pb) {
            return None;
        }
        (hb, ib) = eval(pb)?;
    }
    if hb.abs() < RETRACT_TOL {
        return Some((ib, pb));
    }
    // Illinois regula falsi on [pa, pb].
    let mut side = 0;
    for _ in 0..100 {
        let pn = (pa * hb - pb * ha) / (hb - ha);
        let (hn, inew) = eval(pn)?;
        if hn.abs() < RETRACT_TOL {
            return Some((inew, pn));
        }
        if hn.signum() == hb.signum() {
            (pb, hb) = (pn, hn);
            if side == -1 {
                ha *= 0.5;
            }
            side = -1;
        } else {
            (pa, ha) = (pn, hn);
            if side == 1 {
                hb *= 0.5;
            }
            side = 1;
        }
        if (pb - pa).abs() < 1e-15 * pb.abs() {
            return Some((inew, pn));
        }
    }
    None
}

/// Constraint values `(M, K, kinetic_x)`.
fn constraint_values(q: &Quantities, params: &ModelParams) -> [f64; 3] {
    [q.mass, q.virial(params), q.kinetic_x]
}

/// Moves `w` along `dirs` until the first `n` constraint values hit `goal`.
///
/// `jac[i][j]` is the derivative of constraint `i` along `dirs[j]`, frozen
/// at the base point.
fn retract_chord(
    w: &Field,
    dirs: &[Field],
    jac: &[[f64; 3]; 3],
    goal: [f64; 3],
    n: usize,
) -> Option<Iterate> {
    let params = *w.params();
    let scale = [goal[0], goal[2].max(1e-300), goal[2].max(1e-300)];
    let mut u = w.clone();
    for _ in 0..30 {
        let q = Quantities::of(&u);
        let vals = constraint_values(&q, &params);
        let mut r = [0.0; 3];
        let mut worst: f64 = 0.0;
        for i in 0..n {
            r[i] = goal[i] - vals[i];
            worst = worst.max(r[i].abs() / scale[i]);
        }
        if !worst.is_finite() {
            return None;
        }
        if worst < CHORD_TOL {
            let value = q.i_plain(&params);
            return Some(Iterate { u, q, value });
        }
        let s = solve_small(jac, &r, n)?;
        for j in 0..n {
            u = u.axpy(s[j], &dirs[j]);
        }
    }
    None
}

/// Gradients of I, K and M (as `2u`) at `u`.
fn gradients(u: &Field) -> (Field, Field, Field) {
    let p = u.params();
    let d = p.d as f64;
    let grid = u.grid().clone();
    let (lx, ly) = u.neg_laplacians();
    let f = nonlinearity(u);
    let ci = (p.alpha * d - 4.0) / 4.0;
    let ck = p.alpha * d / 2.0;
    let gi = (0..u.len()).map(|i| ly.values()[i] + f[i] * ci).collect();
    let gk = (0..u.len())
        .map(|i| lx.values()[i] * 2.0 - f[i] * ck)
        .collect();
    (
        Field::from_parts(grid.clone(), gi),
        Field::from_parts(grid, gk),
        u.scaled(2.0),
    )
}

/// Least-squares multipliers of `grad I + lambda grad K + omega u = 0` and the
/// relative residual.
fn multipliers(u: &Field) -> (f64, f64, f64) {
    let (gi, gk, _) = gradients(u);
    let a11 = gk.inner(&gk);
    let a12 = gk.inner(u);
    let a22 = u.inner(u);
    let b1 = -gi.inner(&gk);
    let b2 = -gi.inner(u);
    let det = a11 * a22 - a12 * a12;
    let lambda = (b1 * a22 - b2 * a12) / det;
    let omega = (a11 * b2 - a12 * b1) / det;
    let r = gi.axpy(lambda, &gk).axpy(omega, u);
    let scale = gi.norm2().sqrt() + lambda.abs() * gk.norm2().sqrt() + omega.abs() * u.norm2().sqrt();
    (lambda, omega, r.norm2().sqrt() / scale)
}

fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], n: usize) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut r = *b;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..n).rev() {
        let mut s = r[row];
        for k in row + 1..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

/// Preconditioner `1 / (omega + |k|^2)`.
fn preconditioner(grid: &Grid, omega: f64) -> Vec<f64> {
    let shift = if omega > 0.0 { omega.clamp(1e-3, 1e3) } else { 1.0 };
    grid.kx2()
        .iter()
        .zip(grid.ky2())
        .map(|(a, b)| 1.0 / (shift + a + b))
        .collect()
}

/// Constraint normals at a point, raw and preconditioned, with their Gram
/// matrix `jac[i][j] = <t_i, b_j>`.
struct Normals {
    t: Vec<Field>,
    b: Vec<Field>,
    jac: [[f64; 3]; 3],
}

impl Normals {
    fn at(u: &Field, gk: Field, gm: Field, pre: &[f64], gauge: bool) -> Self {
        let grid = u.grid().clone();
        let mut t = vec![gm, gk];
        if gauge {
            let (lx, _) = u.neg_laplacians();
            t.push(lx.scaled(2.0));
        }
        let b: Vec<Field> = t
            .iter()
            .map(|v| Field::from_parts(grid.clone(), grid.apply_real_symbol(v.values(), pre)))
            .collect();
        let mut jac = [[0.0; 3]; 3];
        for i in 0..t.len() {
            for j in 0..t.len() {
                jac[i][j] = t[i].inner(&b[j]);
            }
        }
        Self { t, b, jac }
    }

    fn len(&self) -> usize {
        self.t.len()
    }
}

/// Dilate to `kinetic_x = target` keeping the mass, then restore the
/// constraints exactly.
fn regauge(it: &Iterate, c: f64, target: f64, pre: &[f64]) -> Option<Iterate> {
    let t = (target / it.q.kinetic_x).sqrt();
    let v = dilate_mass_preserving(&it.u, t).ok()?;
    let (_, gk, gm) = gradients(&v);
    let normals = Normals::at(&v, gk, gm, pre, true);
    retract_chord(&v, &normals.b, &normals.jac, [c, 0.0, target], normals.len())
}

/// Minimize I on `{M = c, K = 0}` starting from `init`.
///
/// At the mass-critical exponent I is constant along mass-preserving
/// dilations of `{K = 0}`, so `kinetic_x` is held at a target value and
/// the target is moved whenever the iterate settles, until the settled
/// state solves the stationary equation itself (multiplier `theta = 1`).
pub fn solve_m_c_from(init: &Field, c: f64, opts: &SolverOptions) -> Result<MassSolve> {
    let params = *init.params();
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("c = {c}")));
    }
    let grid = init.grid().clone();
    let Some((mut cur, _)) = retract(init, c, 1.0) else {
        return Err(Error::Infeasible(format!(
            "no power of the initial field reaches K = 0 at mass {c}"
        )));
    };
    let gauge = params.is_mass_critical();
    let mut pre = preconditioner(&grid, multipliers(&cur.u).1);
    let mut target = cur.q.kinetic_x;
    let mut tau: f64 = 1.0;
    let mut gnorm = f64::INFINITY;
    let mut settle_from = f64::INFINITY;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = opts.max_iter;
    let mut stagnant = Stagnation::default();
    for iter in 0..opts.max_iter {
        let (gi, gk, gm) = gradients(&cur.u);
        let pgi = Field::from_parts(grid.clone(), grid.apply_real_symbol(gi.values(), &pre));
        let normals = Normals::at(&cur.u, gk, gm, &pre, gauge);
        let n_dirs = normals.len();
        let mut rhs = [0.0; 3];
        for i in 0..n_dirs {
            rhs[i] = normals.t[i].inner(&pgi);
        }
        let Some(coef) = solve_small(&normals.jac, &rhs, n_dirs) else {
            status = SolveStatus::Stalled;
            iterations = iter;
            break;
        };
        let mut dir = pgi;
        for j in 0..n_dirs {
            dir = dir.axpy(-coef[j], &normals.b[j]);
        }
        gnorm = (dir.norm2() / c).sqrt();
        if gauge && gnorm < SETTLED && (gnorm < opts.tol || gnorm < 1e-2 * settle_from) {
            let (lambda, omega, _) = multipliers(&cur.u);
            let theta = 2.0 * lambda;
            settle_from = gnorm;
            if theta > 0.0 && (theta - 1.0).abs() > 1e-6 {
                let moved = theta * cur.q.kinetic_x;
                let fresh = preconditioner(&grid, omega);
                if let Some(n) = regauge(&cur, c, moved, &fresh) {
                    (cur, target, pre) = (n, moved, fresh);
                    tau = 1.0;
                    continue;
                }
            }
        }
        if gnorm < opts.tol {
            status = SolveStatus::Converged;
            iterations = iter;
            break;
        }
        tau = (2.0 * tau).min(4.0);
        let slack = 1e-12 * cur.value.abs().max(1e-300);
        // Sufficient decrease along the tangent direction.
        let slope = gi.inner(&dir);
        let goal = [c, 0.0, target];
        let mut accepted = None;
        while tau > 1e-12 {
            let w = cur.u.axpy(-tau, &dir);
            if let Some(n) = retract_chord(&w, &normals.b, &normals.jac, goal, n_dirs) {
                if n.value <= cur.value - 0.25 * tau * slope + slack {
                    accepted = Some(n);
                    break;
                }
            }
            tau *= 0.5;
        }
        match accepted.filter(|n| !stagnant.observe(cur.value, n.value)) {
            Some(n) => cur = n,
            None => {
                status = SolveStatus::Stalled;
                iterations = iter;
                break;
            }
        }
    }
    let (lambda, omega_lagrange, _) = multipliers(&cur.u);
    let el_residual = if gauge {
        stationary_residual(&cur.u, omega_lagrange)
    } else {
        multipliers(&cur.u).2
    };
    let report = FunctionalReport::from_quantities(&cur.q, &params, omega_lagrange);
    let state = GroundState {
        boundary_mass_fraction: cur.u.boundary_mass_fraction(),
        field: cur.u,
        omega: omega_lagrange,
        constraint: Constraint::MassM,
        value: cur.value,
        report,
        el_residual,
        iterations,
        converged: status == SolveStatus::Converged,
        status,
        gradient_norm: gnorm,
        target_mass: Some(c),
    };
    Ok(MassSolve {
        state,
        omega_lagrange,
        theta: 2.0 * lambda,
    })
}

/// Minimize I on `{M = c, K = 0}` from the chosen initializer.
pub fn solve_m_c(grid: &Arc<Grid>, c: f64, init: &MassInit, opts: &SolverOptions) -> Result<MassSolve> {
    let params = grid.params();
    if !params.is_mass_critical() {
        return Err(Error::InvalidParams(
            "mass-constrained solves need the mass-critical exponent".into(),
        ));
    }
    if params.m == 1 {
        let cap = critical_mass(params)?;
        if !(c > 0.0 && c < cap) {
            return Err(Error::InvalidArgument(format!("c = {c} outside (0, {cap})")));
        }
    }
    let start = match init {
        MassInit::Surgery => feasible_state(grid, c, None)?,
        MassInit::Random { seed, stream } => {
            let mut r = init::rng(*seed, *stream);
            init::random_smooth(grid, &mut r, false)
        }
        MassInit::Given(f) => f.clone(),
    };
    solve_m_c_from(&start, c, opts)
}

/// Frequency solve at omega, then the mass solve at `c = M(u_omega)` from an
/// independent random start.
pub fn lf_check(grid: &Arc<Grid>, omega: f64, seed: u64, opts: &SolverOptions) -> Result<(MassCurveRecord, GroundState, MassSolve)> {
    let gs = solve_gamma_branches(grid, omega, opts)?.best().clone();
    let c = gs.report.mass;
    let ms = solve_m_c(grid, c, &MassInit::Random { seed, stream: 0x1f }, opts)?;
    let predicted = gs.value - 0.5 * c * omega;
    let rec = MassCurveRecord {
        c,
        m_c: ms.state.value,
        omega_lagrange: ms.omega_lagrange,
        lf_discrepancy: Some((ms.state.value - predicted).abs()),
        y_fraction: ms.state.y_fraction(),
        converged: ms.state.converged && gs.converged,
    };
    Ok((rec, gs, ms))
}

/// m_c along an increasing list of masses.
pub fn mass_curve(grid: &Arc<Grid>, cs: &[f64], init: &MassInit, opts: &SolverOptions) -> Result<Vec<MassCurveRecord>> {
    if cs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("mass list must be sorted".into()));
    }
    cs.iter()
        .map(|&c| {
            Ok(match solve_m_c(grid, c, init, opts) {
                Ok(ms) => mass_record(c, &ms),
                Err(Error::Infeasible(_)) => MassCurveRecord {
                    c,
                    m_c: f64::NAN,
                    omega_lagrange: f64::NAN,
                    lf_discrepancy: None,
                    y_fraction: f64::NAN,
                    converged: false,
                },
                Err(e) => return Err(e),
            })
        })
        .collect()
}

pub fn mass_record(c: f64, ms: &MassSolve) -> MassCurveRecord {
    MassCurveRecord {
        c,
        m_c: ms.state.value,
        omega_lagrange: ms.omega_lagrange,
        lf_discrepancy: None,
        y_fraction: ms.state.y_fraction(),
        converged: ms.state.converged,
    }
}

/// Smooth step: 1 on `[0, 1]`, 0 on `[2, inf)`.
pub fn smooth_cutoff(r: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        f(2.0 - r) / (f(2.0 - r) + f(r - 1.0))
    }
}

fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(4)
    }
}

/// Two-piece field with mass `c` and K = 0: a y-localized piece with K < 0
/// near `x = -L/2` and a y-independent compact bump near `x = +L/2` whose
/// width balances K.
///
/// `localized` overrides the default y-localized piece; it is cut off and
/// translated to `x = -L/2`.
pub fn feasible_state(grid: &Arc<Grid>, c: f64, localized: Option<&Field>) -> Result<Field> {
    let params = *grid.params();
    if params.m != 1 || params.d != 1 {
        return Err(Error::InvalidParams("surgery initializer is implemented for d = 1, m = 1".into()));
    }
    let half = grid.domain().half_length;
    let x0 = -0.5 * half;
    let x1 = 0.5 * half;
    let reach = 0.25 * half;
    let cut = |x: f64| smooth_cutoff((x - x0).abs() / (0.5 * reach));
    match localized {
        Some(f) => {
            // Translate by x0 with the interpolant, then cut off.
            let shifted = f.translate_x(x0)?;
            let piece = Field::new(
                grid.clone(),
                shifted
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, z)| z * cut(shifted.point(i).x[0]))
                    .collect(),
            )?;
            balance(grid, &piece, c, x1, reach)
        }
        None => {
            let mut last = Error::Infeasible(format!("no y-localized piece at mass {c}"));
            for fraction in [0.6, 0.4, 0.8, 0.25, 0.9] {
                for kappa in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
                    let piece = default_piece(grid, fraction * c, kappa, x0, &cut)?;
                    match balance(grid, &piece, c, x1, reach) {
                        Ok(v) => return Ok(v),
                        Err(e) => last = e,
                    }
                }
            }
            Err(last)
        }
    }
}

/// Adds a y-independent bump at `x1` carrying the remaining mass, with the
/// width that makes K vanish.
fn balance(grid: &Arc<Grid>, piece: &Field, c: f64, x1: f64, reach: f64) -> Result<Field> {
    let params = *grid.params();
    let qa = Quantities::of(&piece);
    if !(qa.mass < c) {
        return Err(Error::Infeasible(format!("localized piece has mass {} >= c", qa.mass)));
    }
    let ka = qa.virial(&params);
    if !(ka < 0.0) {
        return Err(Error::Infeasible("localized piece has K >= 0".into()));
    }
    let rest = c - qa.mass;
    let coords = grid.axis_coords(0).to_vec();
    let n_y = grid.domain().n_y.unwrap_or(1);
    let bump_field = |w: f64| -> Field {
        let vals = coords
            .iter()
            .flat_map(|&x| std::iter::repeat_n(C64::new(bump((x - x1) / w), 0.0), n_y))
            .collect();
        let f = Field::from_parts(grid.clone(), vals);
        let m = f.norm2();
        f.scaled((rest / m).sqrt())
    };
    let total_k = |w: f64| -> (f64, Field) {
        let b = bump_field(w);
        let v = piece.axpy(1.0, &b);
        (Quantities::of(&v).virial(&params), v)
    };
    // K of the bump scales like 1/w^2 at fixed mass.
    let w0 = reach;
    let kb0 = Quantities::of(&bump_field(w0)).virial(&params);
    if !(kb0 > 0.0) {
        return Err(Error::Infeasible("y-independent bump has K <= 0; c too large".into()));
    }
    let mut wa = w0 * (kb0 / -ka).sqrt();
    let h = grid.domain().h_x();
    if wa > reach || wa < 4.0 * h {
        return Err(Error::Infeasible(format!(
            "balancing bump width {wa} outside [{}, {reach}]",
            4.0 * h
        )));
    }
    let (mut fa, _) = total_k(wa);
    let mut wb = wa * 1.01;
    let (mut fb, mut vb) = total_k(wb);
    for _ in 0..50 {
        let scale = Quantities::of(&vb).kinetic_x;
        if fb.abs() <= 1e-13 * scale {
            return Ok(vb);
        }
        let wn = wb - fb * (wb - wa) / (fb - fa);
        if !wn.is_finite() || wn <= 0.0 {
            break;
        }
        (wa, fa) = (wb, fb);
        wb = wn;
        (fb, vb) = total_k(wb);
    }
    Err(Error::Infeasible("K balancing did not converge".into()))
}

fn default_piece(grid: &Arc<Grid>, mass: f64, kappa: f64, x0: f64, cut: &dyn Fn(f64) -> f64) -> Result<Field> {
    let f = Field::from_real_fn(grid.clone(), |p| {
        let dx = p.x[0] - x0;
        (-0.5 * dx * dx).exp() * (kappa * (p.y.cos() - 1.0)).exp() * cut(p.x[0])
    })?;
    Ok(f.scaled((mass / f.norm2()).sqrt()))
}

