//! Decay functionals along an attracting rectangle and the averaged stability
//! condition built from them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ModelSpec;
use crate::rectangle::{chemotaxis_free_rectangle, Branch, Rectangle};

/// Gain (`q`) and loss (`Q`) rates of each species at one time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayRates {
    pub q1: f64,
    pub big_q1: f64,
    pub q2: f64,
    pub big_q2: f64,
}

impl DecayRates {
    /// `max(Q1 - q1, Q2 - q2)`; negative means contraction.
    pub fn excess(&self) -> f64 {
        (self.big_q1 - self.q1).max(self.big_q2 - self.q2)
    }
}

pub fn qq_profiles(spec: &ModelSpec, rect: &Rectangle, t: f64) -> DecayRates {
    let c = &spec.constants;
    let (lo1, hi1, lo2, hi2) = (rect.lo1, rect.hi1, rect.lo2, rect.hi2);
    let signal_lo = c.k * lo1 + c.l * lo2;
    let signal_hi = c.k * hi1 + c.l * hi2;
    let gradient = c.chi1 * c.chi1 * hi1 * hi1 / c.d1 + c.chi2 * c.chi2 * hi2 * hi2 / c.d2;
    let competition = (spec.a2.sup_at(t) * hi1 + spec.b1.sup_at(t) * hi2) / 2.0;

    let q1 = 2.0 * spec.a1.inf_at(t) * lo1 + spec.a2.inf_at(t) * lo2 + c.chi1 * signal_lo / (2.0 * c.d3);
    let big_q1 = spec.a0.sup_at(t)
        + c.chi1 / (2.0 * c.d3) * signal_hi
        + c.k * c.k / (4.0 * c.lambda * c.d3) * gradient
        + competition;
    let q2 = 2.0 * spec.b2.inf_at(t) * lo2 + spec.b1.inf_at(t) * lo1 + c.chi2 * signal_lo / (2.0 * c.d3);
    let big_q2 = spec.b0.sup_at(t)
        + c.chi2 / (2.0 * c.d3) * signal_hi
        + c.l * c.l / (4.0 * c.lambda * c.d3) * gradient
        + competition;
    DecayRates { q1, big_q1, q2, big_q2 }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityOptions {
    pub horizon: f64,
    pub window: f64,
    pub quadrature_dt: f64,
}

impl StabilityOptions {
    /// Ten periods per window and five windows, or ten time units per window
    /// when nothing varies in time.
    pub fn for_spec(spec: &ModelSpec) -> Self {
        match spec.period() {
            Some(p) => StabilityOptions {
                horizon: 50.0 * p,
                window: 10.0 * p,
                quadrature_dt: p / 200.0,
            },
            None => StabilityOptions {
                horizon: 50.0,
                window: 10.0,
                quadrature_dt: 0.05,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityProfile {
    /// Largest window average of `max(Q1 - q1, Q2 - q2)`.
    pub mu_estimate: f64,
    pub window: f64,
    pub horizon: f64,
    pub quadrature_dt: f64,
    /// Allowance for the trapezoid error; the verdict needs
    /// `mu_estimate + slack < 0`.
    pub slack: f64,
    /// `(t, q1, Q1, q2, Q2)`, thinned to at most 256 rows.
    pub samples: Vec<[f64; 5]>,
    pub verdict: bool,
    pub branch: Branch,
}

const MAX_SAMPLES: usize = 256;

fn sample_row(t: f64, r: &DecayRates) -> [f64; 5] {
    [t, r.q1, r.big_q1, r.q2, r.big_q2]
}

pub fn check_average_condition(
    spec: &ModelSpec,
    rect: &Rectangle,
    opts: &StabilityOptions,
) -> Result<StabilityProfile> {
    let StabilityOptions {
        horizon,
        window,
        quadrature_dt: dt,
    } = *opts;
    if !(window > 0.0 && horizon >= 2.0 * window && dt > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "need horizon >= 2 window > 0 and a positive step, got horizon={horizon}, window={window}, dt={dt}"
        )));
    }

    if spec.is_time_constant() {
        let rates = qq_profiles(spec, rect, 0.0);
        let mu = rates.excess();
        return Ok(StabilityProfile {
            mu_estimate: mu,
            window,
            horizon,
            quadrature_dt: dt,
            slack: 0.0,
            samples: vec![sample_row(0.0, &rates)],
            verdict: mu < 0.0,
            branch: rect.branch,
        });
    }

    let n = (horizon / dt).ceil() as usize;
    let dt = horizon / n as f64;
    let m = ((window / dt).round() as usize).clamp(1, n);
    let rates: Vec<DecayRates> = (0..=n).map(|i| qq_profiles(spec, rect, i as f64 * dt)).collect();
    let f: Vec<f64> = rates.iter().map(DecayRates::excess).collect();

    let mut prefix = vec![0.0; n + 1];
    for i in 1..=n {
        prefix[i] = prefix[i - 1] + 0.5 * dt * (f[i - 1] + f[i]);
    }
    let span = m as f64 * dt;
    let mu = (0..=n - m)
        .map(|j| (prefix[j + m] - prefix[j]) / span)
        .fold(f64::NEG_INFINITY, f64::max);

    let curvature = f
        .windows(3)
        .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs() / (dt * dt))
        .fold(0.0, f64::max);
    let slack = 2.0 * dt * dt / 12.0 * curvature;

    let stride = (n + 1).div_ceil(MAX_SAMPLES);
    let samples = rates
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(i, r)| sample_row(i as f64 * dt, r))
        .collect();

    Ok(StabilityProfile {
        mu_estimate: mu,
        window,
        horizon,
        quadrature_dt: dt,
        slack,
        samples,
        verdict: mu + slack < 0.0,
        branch: rect.branch,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub premise_u: bool,
    pub premise_v: bool,
    pub lv_persistence: bool,
    /// Left and right sides of the two small-competition inequalities.
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub rectangle: Rectangle,
    pub verdict: bool,
}

impl CorollaryReport {
    pub fn margins(&self) -> [f64; 2] {
        [self.rhs[0] - self.lhs[0], self.rhs[1] - self.lhs[1]]
    }
}

/// Sufficient condition for a unique stable coexistence state of the
/// signal-free system when competition is weak.
pub fn check_corollary(spec: &ModelSpec) -> Result<CorollaryReport> {
    let rect = chemotaxis_free_rectangle(spec)?;
    let (a0i, a0s) = (spec.a0.inf, spec.a0.sup);
    let (a1i, a1s) = (spec.a1.inf, spec.a1.sup);
    let (a2i, a2s) = (spec.a2.inf, spec.a2.sup);
    let (b0i, b0s) = (spec.b0.inf, spec.b0.sup);
    let (b1i, b1s) = (spec.b1.inf, spec.b1.sup);
    let (b2i, b2s) = (spec.b2.inf, spec.b2.sup);

    // a0s / a0i < 2 a1i / a1s, cross-multiplied
    let premise_u = a0s * a1s < 2.0 * a1i * a0i;
    let premise_v = b0s * b2s < 2.0 * b2i * b0i;
    let (pu, pv) = spec.lv_persistence_margins();
    let lv_persistence = pu > 0.0 && pv > 0.0;

    let den_u = a1s * b2i - a2s * b1i;
    let den_v = b2s * a1i - b1s * a2i;
    let lhs_u = a2s * (rect.hi1 / 2.0 + (2.0 * a1i * b0s - a0s * b1i) / den_u) + b1s / 2.0 * rect.hi2 - a2i * rect.lo2;
    let rhs_u = b2i * (2.0 * a1i * a0i - a0s * a1s) / den_u;
    let lhs_v = b1s * (rect.hi2 / 2.0 + (2.0 * b2i * a0s - b0s * a2i) / den_v) + a2s / 2.0 * rect.hi1 - b1i * rect.lo1;
    let rhs_v = a1i * (2.0 * b2i * b0i - b0s * b2s) / den_v;

    let verdict = premise_u && premise_v && lv_persistence && lhs_u < rhs_u && lhs_v < rhs_v;
    Ok(CorollaryReport {
        premise_u,
        premise_v,
        lv_persistence,
        lhs: [lhs_u, lhs_v],
        rhs: [rhs_u, rhs_v],
        rectangle: rect,
        verdict,
    })
}
