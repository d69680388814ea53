//! Finite-volume simulation of the full system on an interval with no-flux
//! ends.
//!
//! Each step solves the elliptic equation for `w`, moves mass along the
//! upwinded chemotactic flux and adds the reactions explicitly, then applies
//! backward-Euler diffusion. Values are cell averages on a cell-centred grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{solve_comparison4, CLAMP_TOL};
use crate::params::{CoefficientField, ModelConstants, ModelSpec};
use crate::rectangle::Rectangle;
use crate::tridiag;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub length: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(length: f64, n_cells: usize) -> Result<Self> {
        let grid = Grid1D { length, n_cells };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "grid length must be positive, got {}",
                self.length
            )));
        }
        if self.n_cells < 4 {
            return Err(Error::InvalidSpec(format!(
                "grid needs at least 4 cells, got {}",
                self.n_cells
            )));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }

    /// Cell centre as a fraction of the domain.
    pub fn xi(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.n_cells as f64
    }
}

/// Numerical tolerance for comparing runs with continuum statements.
pub fn tol_num(grid: &Grid1D, dt: f64) -> f64 {
    10.0 * grid.h() * grid.h() + 10.0 * dt
}

/// `max(0, base + amp cos(mode pi x / L))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitProfile {
    pub base: f64,
    pub amp: f64,
    pub mode: u32,
}

impl InitProfile {
    pub fn constant(base: f64) -> Self {
        InitProfile {
            base,
            amp: 0.0,
            mode: 0,
        }
    }

    pub fn cosine(base: f64, amp: f64, mode: u32) -> Self {
        InitProfile { base, amp, mode }
    }

    pub fn sample(&self, grid: &Grid1D) -> Vec<f64> {
        let field = CoefficientField::new(self.base, 0.0, 0.0, 0.0, self.amp, self.mode);
        (0..grid.n_cells)
            .map(|j| field.value(0.0, grid.xi(j)).max(0.0))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl SimState {
    pub fn new(grid: &Grid1D, constants: &ModelConstants, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n_cells || v.len() != grid.n_cells {
            return Err(Error::InvalidSpec("initial data does not match the grid".into()));
        }
        if u.iter().chain(&v).any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidSpec("initial data must be finite and nonnegative".into()));
        }
        let w = solve_elliptic(grid, &u, &v, constants)?;
        Ok(SimState { t: 0.0, u, v, w })
    }
}

fn neumann_operator(n: usize, off: f64, centre: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    // ghost cells mirror the boundary cell, so end rows lose one coupling
    let lower = vec![-off; n];
    let upper = vec![-off; n];
    let mut diag = vec![centre + 2.0 * off; n];
    diag[0] = centre + off;
    diag[n - 1] = centre + off;
    (lower, diag, upper)
}

/// Solves `(lambda - d3 D2) w = k u + l v` with mirrored ghost cells.
pub fn solve_elliptic(grid: &Grid1D, u: &[f64], v: &[f64], c: &ModelConstants) -> Result<Vec<f64>> {
    if !(c.lambda > 0.0) {
        return Err(Error::SingularSystem(c.lambda));
    }
    let h = grid.h();
    let (lower, diag, upper) = neumann_operator(grid.n_cells, c.d3 / (h * h), c.lambda);
    let rhs: Vec<f64> = u.iter().zip(v).map(|(u, v)| c.k * u + c.l * v).collect();
    Ok(tridiag::solve(&lower, &diag, &upper, &rhs))
}

fn implicit_diffusion(grid: &Grid1D, field: &[f64], d: f64, dt: f64) -> Vec<f64> {
    let h = grid.h();
    let (lower, diag, upper) = neumann_operator(grid.n_cells, dt * d / (h * h), 1.0);
    tridiag::solve(&lower, &diag, &upper, field)
}

/// Largest advective Courant number `dt max|chi w_x| / h` over interior faces.
pub fn courant_number(grid: &Grid1D, w: &[f64], c: &ModelConstants, dt: f64) -> f64 {
    let h = grid.h();
    let chi = c.chi1.max(c.chi2);
    w.windows(2)
        .map(|p| dt * chi * ((p[1] - p[0]) / h).abs() / h)
        .fold(0.0, f64::max)
}

/// Discrete `-(chi q w_x)_x` with the face density taken from the upwind cell
/// and no flux through the ends.
fn chemotactic_divergence(grid: &Grid1D, q: &[f64], w: &[f64], chi: f64) -> Vec<f64> {
    let n = grid.n_cells;
    let h = grid.h();
    let mut out = vec![0.0; n];
    if chi == 0.0 {
        return out;
    }
    for j in 0..n - 1 {
        let slope = (w[j + 1] - w[j]) / h;
        let upwind = if slope > 0.0 { q[j] } else { q[j + 1] };
        let flux = chi * upwind * slope;
        out[j] -= flux / h;
        out[j + 1] += flux / h;
    }
    out
}

fn explicit_stage(
    state: &SimState,
    spec: &ModelSpec,
    grid: &Grid1D,
    dt: f64,
    with_reaction: bool,
) -> (Vec<f64>, Vec<f64>) {
    let c = &spec.constants;
    let t = state.t;
    let du = chemotactic_divergence(grid, &state.u, &state.w, c.chi1);
    let dv = chemotactic_divergence(grid, &state.v, &state.w, c.chi2);
    let mut u = state.u.clone();
    let mut v = state.v.clone();
    for j in 0..grid.n_cells {
        let (uj, vj) = (state.u[j], state.v[j]);
        let (mut ru, mut rv) = (0.0, 0.0);
        if with_reaction {
            let xi = grid.xi(j);
            ru = uj * (spec.a0.value(t, xi) - spec.a1.value(t, xi) * uj - spec.a2.value(t, xi) * vj);
            rv = vj * (spec.b0.value(t, xi) - spec.b1.value(t, xi) * uj - spec.b2.value(t, xi) * vj);
        }
        u[j] += dt * (du[j] + ru);
        v[j] += dt * (dv[j] + rv);
    }
    (u, v)
}

fn admit(t: f64, field: &mut [f64]) -> Result<()> {
    for c in field.iter_mut() {
        if !c.is_finite() {
            return Err(Error::StepUnstable {
                t,
                reason: "non-finite density".into(),
            });
        }
        if *c < 0.0 {
            if *c < -CLAMP_TOL {
                return Err(Error::StepUnstable {
                    t,
                    reason: format!("density {c} became negative"),
                });
            }
            *c = 0.0;
        }
    }
    Ok(())
}

fn advance(state: &SimState, spec: &ModelSpec, grid: &Grid1D, dt: f64, with_reaction: bool) -> Result<SimState> {
    let c = &spec.constants;
    let w = solve_elliptic(grid, &state.u, &state.v, c)?;
    let courant = courant_number(grid, &w, c, dt);
    if courant > 0.5 {
        return Err(Error::CflViolated { courant });
    }
    let fresh = SimState {
        t: state.t,
        u: state.u.clone(),
        v: state.v.clone(),
        w,
    };
    let (u_star, v_star) = explicit_stage(&fresh, spec, grid, dt, with_reaction);
    let t = state.t + dt;
    let mut u = implicit_diffusion(grid, &u_star, c.d1, dt);
    let mut v = implicit_diffusion(grid, &v_star, c.d2, dt);
    admit(t, &mut u)?;
    admit(t, &mut v)?;
    let w = solve_elliptic(grid, &u, &v, c)?;
    Ok(SimState { t, u, v, w })
}

/// One IMEX step of length `dt`.
pub fn step(state: &SimState, spec: &ModelSpec, grid: &Grid1D, dt: f64) -> Result<SimState> {
    advance(state, spec, grid, dt, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub min_w: f64,
    pub max_w: f64,
    pub mass_u: f64,
    pub mass_v: f64,
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
        (lo.min(c), hi.max(c))
    })
}

impl DiagnosticRow {
    pub fn of(state: &SimState, grid: &Grid1D) -> Self {
        let (min_u, max_u) = min_max(&state.u);
        let (min_v, max_v) = min_max(&state.v);
        let (min_w, max_w) = min_max(&state.w);
        let h = grid.h();
        DiagnosticRow {
            t: state.t,
            min_u,
            max_u,
            min_v,
            max_v,
            min_w,
            max_w,
            mass_u: h * state.u.iter().sum::<f64>(),
            mass_v: h * state.v.iter().sum::<f64>(),
        }
    }
}

/// When the run settled below the ultimate bounds, up to `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundEntry {
    pub bound_u: f64,
    pub bound_v: f64,
    pub eps: f64,
    pub entry_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunDiagnostics {
    pub grid: Grid1D,
    pub dt: f64,
    pub rows: Vec<DiagnosticRow>,
    /// Present when the diagonal ultimate bounds are defined.
    pub ultimate_bound: Option<BoundEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub diagnostics: RunDiagnostics,
    /// Full fields at every saved time.
    pub snapshots: Vec<SimState>,
}

impl SimRun {
    pub fn final_state(&self) -> &SimState {
        self.snapshots.last().expect("a run saves its initial state")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
    pub save_every: usize,
}

/// Steps from `t = 0` to `t_end`, saving every `save_every` steps and at the
/// end. The last step is shortened to land on `t_end`.
pub fn simulate(
    spec: &ModelSpec,
    grid: &Grid1D,
    init_u: &InitProfile,
    init_v: &InitProfile,
    opts: &SimOptions,
) -> Result<SimRun> {
    let u0 = init_u.sample(grid);
    let v0 = init_v.sample(grid);
    simulate_from(spec, grid, u0, v0, opts)
}

pub fn simulate_from(spec: &ModelSpec, grid: &Grid1D, u0: Vec<f64>, v0: Vec<f64>, opts: &SimOptions) -> Result<SimRun> {
    spec.validate()?;
    grid.validate()?;
    let SimOptions { t_end, dt, save_every } = *opts;
    if !(dt > 0.0 && t_end >= 0.0 && save_every >= 1) {
        return Err(Error::InvalidSpec(format!(
            "need dt > 0, t_end >= 0 and save_every >= 1, got dt={dt}, t_end={t_end}, save_every={save_every}"
        )));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut state = SimState::new(grid, &spec.constants, u0, v0)?;
    let mut snapshots = vec![state.clone()];
    for i in 0..steps {
        let next = if i + 1 == steps { t_end } else { (i + 1) as f64 * dt };
        let mut s = step(&state, spec, grid, next - state.t)?;
        s.t = next;
        state = s;
        if (i + 1) % save_every == 0 || i + 1 == steps {
            snapshots.push(state.clone());
        }
    }
    let rows: Vec<DiagnosticRow> = snapshots.iter().map(|s| DiagnosticRow::of(s, grid)).collect();

    let bounds = spec.bounds_unchecked();
    let report = spec.check_hypotheses()?;
    let ultimate_bound = match (report.boundedness_diagonal, bounds.diagonal_u, bounds.diagonal_v) {
        (true, Some(bu), Some(bv)) => {
            let eps = tol_num(grid, dt);
            let entry = settle_time(&rows, |r| r.max_u <= bu + eps && r.max_v <= bv + eps);
            Some(BoundEntry {
                bound_u: bu,
                bound_v: bv,
                eps,
                entry_time: entry,
            })
        }
        _ => None,
    };
    Ok(SimRun {
        diagnostics: RunDiagnostics {
            grid: *grid,
            dt,
            rows,
            ultimate_bound,
        },
        snapshots,
    })
}

/// First saved time after which `inside` holds through the end of the run.
fn settle_time(rows: &[DiagnosticRow], inside: impl Fn(&DiagnosticRow) -> bool) -> Option<f64> {
    let mut entry = None;
    for r in rows {
        if inside(r) {
            entry.get_or_insert(r.t);
        } else {
            entry = None;
        }
    }
    entry
}

/// First saved time after which the run stays inside the `eps`-enlarged
/// rectangle; `None` if it never settles.
pub fn envelope_check(run: &RunDiagnostics, rect: &Rectangle, eps: f64) -> Option<f64> {
    settle_time(&run.rows, |r| {
        r.min_u >= rect.lo1 - eps && r.max_u <= rect.hi1 + eps && r.min_v >= rect.lo2 - eps && r.max_v <= rect.hi2 + eps
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub verdict: bool,
    pub tol_num: f64,
    /// Largest distance by which any corner run left the rectangle.
    pub worst_excursion: f64,
    pub corners: Vec<(f64, f64)>,
}

fn excursion(rows: &[DiagnosticRow], rect: &Rectangle) -> f64 {
    rows.iter()
        .map(|r| {
            (rect.lo1 - r.min_u)
                .max(r.max_u - rect.hi1)
                .max(rect.lo2 - r.min_v)
                .max(r.max_v - rect.hi2)
        })
        .fold(0.0, f64::max)
}

/// Starts constant runs at the four corners of `rect` and checks that none
/// leaves it by more than the numerical tolerance.
pub fn invariance_check(
    spec: &ModelSpec,
    grid: &Grid1D,
    rect: &Rectangle,
    opts: &SimOptions,
) -> Result<InvarianceReport> {
    let corners = vec![
        (rect.lo1, rect.lo2),
        (rect.lo1, rect.hi2),
        (rect.hi1, rect.lo2),
        (rect.hi1, rect.hi2),
    ];
    let excursions = corners
        .par_iter()
        .map(|&(u, v)| {
            let run = simulate(spec, grid, &InitProfile::constant(u), &InitProfile::constant(v), opts)?;
            Ok(excursion(&run.diagnostics.rows, rect))
        })
        .collect::<Result<Vec<f64>>>()?;
    let tol = tol_num(grid, opts.dt);
    let worst = excursions.into_iter().fold(0.0, f64::max);
    Ok(InvarianceReport {
        verdict: worst <= tol,
        tol_num: tol,
        worst_excursion: worst,
        corners,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    /// Least-squares slope of `ln E` over the later half of the usable samples.
    pub rate: Option<f64>,
}

/// Samples below this fraction of the initial energy sit at the roundoff
/// floor and carry no decay information.
const ENERGY_FLOOR: f64 = 1e-20;

/// `E(t) = h sum (u_A - u_B)^2 + (v_A - v_B)^2` at the shared save times.
pub fn energy_between(a: &SimRun, b: &SimRun) -> Result<EnergyReport> {
    let (ga, gb) = (a.diagnostics.grid, b.diagnostics.grid);
    if ga != gb {
        return Err(Error::GridMismatch(format!(
            "{} cells on [0, {}] against {} cells on [0, {}]",
            ga.n_cells, ga.length, gb.n_cells, gb.length
        )));
    }
    let ta: Vec<f64> = a.snapshots.iter().map(|s| s.t).collect();
    let tb: Vec<f64> = b.snapshots.iter().map(|s| s.t).collect();
    if ta != tb {
        return Err(Error::GridMismatch("save times differ".into()));
    }
    let h = ga.h();
    let energy: Vec<f64> = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(sa, sb)| {
            let du: f64 = sa.u.iter().zip(&sb.u).map(|(x, y)| (x - y) * (x - y)).sum();
            let dv: f64 = sa.v.iter().zip(&sb.v).map(|(x, y)| (x - y) * (x - y)).sum();
            h * (du + dv)
        })
        .collect();
    let rate = fit_rate(&ta, &energy);
    Ok(EnergyReport { t: ta, energy, rate })
}

fn fit_rate(t: &[f64], e: &[f64]) -> Option<f64> {
    let floor = (ENERGY_FLOOR * e.first().copied().unwrap_or(0.0)).max(1e-300);
    let usable: Vec<(f64, f64)> = t
        .iter()
        .zip(e)
        .take_while(|(_, e)| **e > floor)
        .map(|(t, e)| (*t, e.ln()))
        .collect();
    let tail = &usable[usable.len() / 2..];
    if tail.len() < 2 {
        return None;
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SandwichReport {
    pub verdict: bool,
    pub tol_num: f64,
    /// Largest amount by which the run left the comparison envelope.
    pub worst_excursion: f64,
}

/// Seeds the comparison ODE with the extremes of the initial data and checks
/// that it brackets the run at every saved time.
pub fn comparison_sandwich(spec: &ModelSpec, run: &SimRun) -> Result<SandwichReport> {
    let first = &run.diagnostics.rows[0];
    let init = [first.max_u, first.min_u, first.max_v, first.min_v];
    let t_end = run.diagnostics.rows.last().map_or(0.0, |r| r.t);
    let dt = run.diagnostics.dt;
    let envelope = solve_comparison4(spec, init, 0.0, t_end, dt)?;
    let mut worst: f64 = 0.0;
    for r in &run.diagnostics.rows {
        let i = (r.t / dt).round() as usize;
        let i = i.min(envelope.len() - 1);
        let [uh, ul, vh, vl] = envelope.y[i];
        worst = worst
            .max(ul - r.min_u)
            .max(r.max_u - uh)
            .max(vl - r.min_v)
            .max(r.max_v - vh);
    }
    let tol = tol_num(&run.diagnostics.grid, dt);
    Ok(SandwichReport {
        verdict: worst <= tol,
        tol_num: tol,
        worst_excursion: worst,
    })
}

/// Spatial spread `max - min` of u and v in the final state.
pub fn final_spread(run: &SimRun) -> (f64, f64) {
    let r = run.diagnostics.rows.last().expect("a run saves its initial state");
    (r.max_u - r.min_u, r.max_v - r.min_v)
}
