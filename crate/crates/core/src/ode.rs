//! Fixed-step RK4 for the four-component comparison system and the
//! space-free competition ODE, pullback construction of the entire
//! solution, and the log-ratio Lyapunov functional.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ModelSpec;

pub const DEFAULT_DT: f64 = 1e-3;

/// Undershoot below zero that is treated as roundoff and clamped.
pub const CLAMP_TOL: f64 = 1e-12;
const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> [f64; N] {
        *self.y.last().expect("trajectories hold at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// `(u_hi, u_lo, v_hi, v_lo)`.
pub type Trajectory4 = Trajectory<4>;
/// `(u, v)`.
pub type Trajectory2 = Trajectory<2>;

impl Trajectory4 {
    /// Largest amount by which a lower component exceeds its upper partner.
    pub fn ordering_violation(&self) -> f64 {
        self.y
            .iter()
            .map(|s| (s[1] - s[0]).max(s[3] - s[2]))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn rk4_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], dt: f64) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let shifted = |base: &[f64; N], k: &[f64; N], h: f64| -> [f64; N] {
        let mut out = *base;
        for i in 0..N {
            out[i] += h * k[i];
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &shifted(y, &k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &shifted(y, &k2, 0.5 * dt));
    let k4 = f(t + dt, &shifted(y, &k3, dt));
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

fn admit<const N: usize>(t: f64, y: &mut [f64; N]) -> Result<()> {
    for c in y.iter_mut() {
        if !c.is_finite() || *c > OVERFLOW_GUARD {
            return Err(Error::StepUnstable {
                t,
                reason: format!("component {c} overflowed"),
            });
        }
        if *c < 0.0 {
            if *c < -CLAMP_TOL {
                return Err(Error::StepUnstable {
                    t,
                    reason: format!("component {c} became negative"),
                });
            }
            *c = 0.0;
        }
    }
    Ok(())
}

/// Integrates from `t0` to exactly `t_end`, shortening the last step, and
/// records every step.
fn integrate<const N: usize, F>(f: F, init: [f64; N], t0: f64, t_end: f64, dt: f64) -> Result<Trajectory<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    if !(dt > 0.0) || !(t_end >= t0) {
        return Err(Error::InvalidSpec(format!(
            "need dt > 0 and t_end >= t0, got dt={dt}, t0={t0}, t_end={t_end}"
        )));
    }
    let mut y = init;
    admit(t0, &mut y)?;
    let steps = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut traj = Trajectory {
        t: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
    };
    traj.t.push(t0);
    traj.y.push(y);
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        let next = if i + 1 == steps {
            t_end
        } else {
            t0 + (i + 1) as f64 * dt
        };
        y = rk4_step(&f, t, &y, next - t);
        admit(next, &mut y)?;
        traj.t.push(next);
        traj.y.push(y);
    }
    Ok(traj)
}

/// Right-hand side of the comparison system. The upper components use the
/// largest growth and smallest damping available at time `t`, the lower ones
/// the reverse, and each is pushed apart by the chemotactic term.
fn comparison_rhs(spec: &ModelSpec, t: f64, y: &[f64; 4]) -> [f64; 4] {
    let c = &spec.constants;
    let [uh, ul, vh, vl] = *y;
    let spread = (c.k * uh + c.l * vh) - (c.k * ul + c.l * vl);
    let su = c.chi1 / c.d3;
    let sv = c.chi2 / c.d3;
    [
        su * uh * spread + uh * (spec.a0.sup_at(t) - spec.a1.inf_at(t) * uh - spec.a2.inf_at(t) * vl),
        su * ul * -spread + ul * (spec.a0.inf_at(t) - spec.a1.sup_at(t) * ul - spec.a2.sup_at(t) * vh),
        sv * vh * spread + vh * (spec.b0.sup_at(t) - spec.b1.inf_at(t) * ul - spec.b2.inf_at(t) * vh),
        sv * vl * -spread + vl * (spec.b0.inf_at(t) - spec.b1.sup_at(t) * uh - spec.b2.sup_at(t) * vl),
    ]
}

fn lv_rhs(spec: &ModelSpec, t: f64, y: &[f64; 2]) -> [f64; 2] {
    let [u, v] = *y;
    [
        u * (spec.a0.value(t, 0.0) - spec.a1.value(t, 0.0) * u - spec.a2.value(t, 0.0) * v),
        v * (spec.b0.value(t, 0.0) - spec.b1.value(t, 0.0) * u - spec.b2.value(t, 0.0) * v),
    ]
}

/// `init` is `(u_hi, u_lo, v_hi, v_lo)`.
pub fn solve_comparison4(spec: &ModelSpec, init: [f64; 4], t0: f64, t_end: f64, dt: f64) -> Result<Trajectory4> {
    spec.validate()?;
    if init[1] > init[0] || init[3] > init[2] {
        return Err(Error::InvalidSpec(
            "comparison data must satisfy u_lo <= u_hi and v_lo <= v_hi".into(),
        ));
    }
    integrate(|t, y| comparison_rhs(spec, t, y), init, t0, t_end, dt)
}

pub fn solve_lv(spec: &ModelSpec, init: [f64; 2], t0: f64, t_end: f64, dt: f64) -> Result<Trajectory2> {
    spec.validate()?;
    if !spec.is_space_independent() {
        return Err(Error::NotSpaceIndependent);
    }
    if !(init[0] > 0.0 && init[1] > 0.0) {
        return Err(Error::InvalidSpec("competition ODE needs positive data".into()));
    }
    integrate(|t, y| lv_rhs(spec, t, y), init, t0, t_end, dt)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntireSolution {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `(k u + l v) / lambda` along the samples.
    pub w: Vec<f64>,
    /// Largest difference between the two pullback runs on the sample grid.
    pub deviation: f64,
    pub t_back: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PullbackOptions {
    pub dt: f64,
    pub inits: [[f64; 2]; 2],
}

impl Default for PullbackOptions {
    fn default() -> Self {
        PullbackOptions {
            dt: DEFAULT_DT,
            inits: [[0.1, 0.1], [10.0, 10.0]],
        }
    }
}

/// Integrates the competition ODE to each of the sorted `times` from
/// `times[0] - t_back`, landing exactly on every sample.
fn pullback_run(spec: &ModelSpec, init: [f64; 2], times: &[f64], t_back: f64, dt: f64) -> Result<Vec<[f64; 2]>> {
    let mut y = init;
    let mut t = times[0] - t_back;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let leg = integrate(|s, z| lv_rhs(spec, s, z), y, t, target, dt)?;
        y = leg.last();
        t = target;
        out.push(y);
    }
    Ok(out)
}

/// Approximates the entire positive solution of the competition ODE on
/// `t_grid` by starting two distinct positive states `t_back` before the
/// first sample. Fails when the two runs have not merged to within `tol`.
pub fn pullback_entire_solution(
    spec: &ModelSpec,
    t_back: f64,
    t_grid: &[f64],
    tol: f64,
    opts: &PullbackOptions,
) -> Result<EntireSolution> {
    spec.validate()?;
    if !spec.is_space_independent() {
        return Err(Error::NotSpaceIndependent);
    }
    let (pu, pv) = spec.lv_persistence_margins();
    if !(pu > 0.0 && pv > 0.0) {
        return Err(Error::HypothesisNotMet(
            "the signal-free persistence condition does not hold".into(),
        ));
    }
    if t_grid.is_empty() || !(t_back > 0.0) {
        return Err(Error::InvalidSpec(
            "pullback needs samples and a positive horizon".into(),
        ));
    }
    let mut times = t_grid.to_vec();
    times.sort_by(f64::total_cmp);

    let first = pullback_run(spec, opts.inits[0], &times, t_back, opts.dt)?;
    let second = pullback_run(spec, opts.inits[1], &times, t_back, opts.dt)?;
    let deviation = first
        .iter()
        .zip(&second)
        .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
        .fold(0.0, f64::max);
    if !(deviation < tol) {
        return Err(Error::PullbackNotConverged { deviation, tol });
    }
    let c = &spec.constants;
    let u: Vec<f64> = first.iter().map(|s| s[0]).collect();
    let v: Vec<f64> = first.iter().map(|s| s[1]).collect();
    let w = u.iter().zip(&v).map(|(u, v)| (c.k * u + c.l * v) / c.lambda).collect();
    Ok(EntireSolution {
        t: times,
        u,
        v,
        w,
        deviation,
        t_back,
    })
}

/// `ln(u_hi / u_lo) + ln(v_hi / v_lo)` along a comparison trajectory.
pub fn lyapunov_ratio(traj: &Trajectory4) -> Result<Vec<f64>> {
    traj.y
        .iter()
        .enumerate()
        .map(|(index, s)| {
            if s.iter().all(|c| *c > 0.0) {
                Ok((s[0] / s[1]).ln() + (s[2] / s[3]).ln())
            } else {
                Err(Error::NonPositiveComponent { index })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::tests::symmetric;
    use crate::params::CoefficientField;

    #[test]
    fn logistic_upper_bound() {
        let spec = symmetric(0.0, 3.0, 2.0, 0.0);
        let traj = solve_comparison4(&spec, [4.0, 0.2, 4.0, 0.2], 0.0, 20.0, 1e-2).unwrap();
        for c in traj.last() {
            assert!((c - 1.5).abs() < 1e-10);
        }
    }

    #[test]
    fn collapsed_comparison_is_the_competition_ode() {
        let mut spec = symmetric(0.2, 3.0, 2.0, 0.5);
        spec.a0 = CoefficientField::periodic(3.0, 0.5, 1.0);
        let four = solve_comparison4(&spec, [0.7, 0.7, 1.9, 1.9], 0.0, 5.0, 1e-3).unwrap();
        let two = solve_lv(&spec, [0.7, 1.9], 0.0, 5.0, 1e-3).unwrap();
        assert_eq!(four.t, two.t);
        for (a, b) in four.y.iter().zip(&two.y) {
            assert_eq!([a[0], a[2]], *b);
            assert_eq!([a[1], a[3]], *b);
        }
    }

    #[test]
    fn running_example_contracts_to_the_point() {
        let spec = symmetric(0.1, 3.0, 2.0, 0.5);
        let coarse = solve_comparison4(&spec, [2.0, 0.3, 1.7, 0.5], 0.0, 60.0, 2e-3).unwrap();
        let fine = solve_comparison4(&spec, [2.0, 0.3, 1.7, 0.5], 0.0, 60.0, 1e-3).unwrap();
        assert!(coarse.ordering_violation() <= 0.0);
        for (c, f) in coarse.last().iter().zip(fine.last()) {
            assert!((c - 1.2).abs() < 1e-6);
            assert!((c - f).abs() < 1e-10);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let spec = symmetric(0.0, 3.0, 2.0, 1.0);
        let exact = solve_lv(&spec, [0.2, 1.7], 0.0, 2.0, 1e-4).unwrap().last();
        let err = |dt: f64| {
            let y = solve_lv(&spec, [0.2, 1.7], 0.0, 2.0, dt).unwrap().last();
            (y[0] - exact[0]).abs().max((y[1] - exact[1]).abs())
        };
        let ratio = err(0.1) / err(0.05);
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn competition_ode_equilibria() {
        let spec = symmetric(0.0, 3.0, 2.0, 1.0);
        let y = solve_lv(&spec, [0.3, 2.5], 0.0, 60.0, 1e-2).unwrap().last();
        assert!((y[0] - 1.0).abs() < 1e-9 && (y[1] - 1.0).abs() < 1e-9);

        let mut spec = symmetric(0.0, 3.0, 2.0, 1.0);
        spec.a2 = CoefficientField::constant(0.0);
        let y = solve_lv(&spec, [0.3, 2.5], 0.0, 60.0, 1e-2).unwrap().last();
        assert!((y[0] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn periodic_competition_forgets_its_start() {
        let mut spec = symmetric(0.0, 3.0, 2.0, 1.0);
        spec.a0 = CoefficientField::periodic(3.0, 0.5, 1.0);
        let a = solve_lv(&spec, [0.1, 0.1], 0.0, 100.0, 1e-3).unwrap().last();
        let b = solve_lv(&spec, [10.0, 10.0], 0.0, 100.0, 1e-3).unwrap().last();
        assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
    }

    #[test]
    fn equilibrium_is_the_entire_solution() {
        let spec = symmetric(0.0, 3.0, 2.0, 1.0);
        let grid = [0.0, 0.5, 1.0];
        let e = pullback_entire_solution(&spec, 50.0, &grid, 1e-8, &PullbackOptions::default()).unwrap();
        for i in 0..grid.len() {
            assert!((e.u[i] - 1.0).abs() < 1e-9);
            assert!((e.v[i] - 1.0).abs() < 1e-9);
            assert!((e.w[i] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pullback_samples_solve_the_ode() {
        let mut spec = symmetric(0.0, 3.0, 2.0, 0.5);
        spec.a0 = CoefficientField::periodic(3.0, 0.5, 1.0);
        let h = 1e-3;
        let grid: Vec<f64> = (0..=2000).map(|i| i as f64 * h).collect();
        let opts = PullbackOptions::default();
        let e = pullback_entire_solution(&spec, 40.0, &grid, 1e-8, &opts).unwrap();
        let mut worst: f64 = 0.0;
        for (i, &t) in grid.iter().enumerate().take(grid.len() - 1).skip(1) {
            let du = (e.u[i + 1] - e.u[i - 1]) / (2.0 * h);
            let rhs = lv_rhs(&spec, t, &[e.u[i], e.v[i]]);
            worst = worst.max((du - rhs[0]).abs());
        }
        assert!(worst < 1e-6, "residual {worst}");

        let longer = pullback_entire_solution(&spec, 80.0, &grid, 1e-8, &opts).unwrap();
        let shift =
            e.u.iter()
                .zip(&longer.u)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        assert!(shift < 1e-8);
    }

    #[test]
    fn short_pullback_is_reported() {
        let spec = symmetric(0.0, 3.0, 2.0, 1.0);
        let e = pullback_entire_solution(&spec, 0.5, &[0.0], 1e-8, &PullbackOptions::default());
        assert!(matches!(e, Err(Error::PullbackNotConverged { .. })));
    }

    #[test]
    fn lyapunov_ratio_basics() {
        let traj = Trajectory {
            t: vec![0.0, 1.0],
            y: vec![[2.0, 0.5, 2.0, 0.5], [1.0, 1.0, 1.0, 1.0]],
        };
        let l = lyapunov_ratio(&traj).unwrap();
        assert!((l[0] - 2.0 * 4.0f64.ln()).abs() < 1e-15);
        assert_eq!(l[1], 0.0);
        let bad = Trajectory {
            t: vec![0.0],
            y: vec![[1.0, 0.0, 1.0, 1.0]],
        };
        assert!(matches!(
            lyapunov_ratio(&bad),
            Err(Error::NonPositiveComponent { index: 0 })
        ));
    }

    #[test]
    fn homogeneous_stability_shrinks_the_ratio() {
        let mut spec = symmetric(0.05, 3.0, 2.0, 0.5);
        spec.a0 = CoefficientField::periodic(3.0, 0.5, 1.0);
        spec.b0 = spec.a0;
        let traj = solve_comparison4(&spec, [2.0, 0.5, 2.0, 0.5], 0.0, 30.0, 1e-3).unwrap();
        let l = lyapunov_ratio(&traj).unwrap();
        assert!(l.windows(2).all(|w| w[1] <= w[0] + 1e-12 * l[0]));
        assert!(*l.last().unwrap() < 1e-6 * l[0]);
    }
}
