//! Attracting rectangles: monotone fixed-point iteration, the equivalent
//! closed form obtained by eliminating one half of the fixed-point system,
//! and the signal-free and constant-coefficient special cases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelSpec;

/// Which family of bounds a rectangle is built from.
///
/// `Diagonal` seeds with the per-species bounds and subtracts only the
/// self-attraction; `Coupled` solves the 2x2 system that also carries the
/// cross-attraction between species.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Diagonal,
    Coupled,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::Diagonal, Branch::Coupled];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Diagonal => "diagonal",
            Branch::Coupled => "coupled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub lo1: f64,
    pub hi1: f64,
    pub lo2: f64,
    pub hi2: f64,
    pub branch: Branch,
}

impl Rectangle {
    pub fn point(u: f64, v: f64, branch: Branch) -> Self {
        Rectangle {
            lo1: u,
            hi1: u,
            lo2: v,
            hi2: v,
            branch,
        }
    }

    fn from_quad(q: [f64; 4], branch: Branch) -> Self {
        Rectangle {
            lo1: q[0],
            hi1: q[1],
            lo2: q[2],
            hi2: q[3],
            branch,
        }
    }

    pub fn quad(&self) -> [f64; 4] {
        [self.lo1, self.hi1, self.lo2, self.hi2]
    }

    pub fn max_difference(&self, other: &Rectangle) -> f64 {
        self.quad()
            .iter()
            .zip(other.quad())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Positivity, ordering and nesting inside the ultimate bounds of the
    /// branch. Empty when everything holds.
    pub fn invariant_violations(&self, spec: &ModelSpec) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lo1 > 0.0 && self.lo2 > 0.0) {
            out.push(format!("lower corner ({}, {}) is not positive", self.lo1, self.lo2));
        }
        if self.lo1 > self.hi1 || self.lo2 > self.hi2 {
            out.push("lower corner exceeds upper corner".to_string());
        }
        let b = spec.bounds_unchecked();
        let (cap1, cap2) = match self.branch {
            Branch::Diagonal => (b.diagonal_u, b.diagonal_v),
            Branch::Coupled => (b.coupled_u, b.coupled_v),
        };
        match (cap1, cap2) {
            (Some(c1), Some(c2)) => {
                if self.hi1 > c1 || self.hi2 > c2 {
                    out.push(format!(
                        "upper corner ({}, {}) leaves the ultimate bounds ({c1}, {c2})",
                        self.hi1, self.hi2
                    ));
                }
            }
            _ => out.push("ultimate bounds are undefined".to_string()),
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `(lo1, hi1, lo2, hi2)` per step, starting with the seed.
    pub quads: Vec<[f64; 4]>,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl IterationTrace {
    /// Lower components never decrease and upper components never increase.
    pub fn is_monotone(&self) -> bool {
        self.quads.windows(2).all(|w| {
            let (p, q) = (w[0], w[1]);
            q[0] >= p[0] && q[2] >= p[2] && q[1] <= p[1] && q[3] <= p[3]
        })
    }
}

/// One half of the fixed-point system, `M x = c - N y`.
///
/// `M` is `[[a, -eta_u], [-eta_v, b]]` for the coupled branch and
/// `diag(a, b)` for the diagonal one. All entries of `N` are nonnegative, which
/// makes `solve` nonincreasing in `y` even in floating point.
#[derive(Clone, Copy, Debug)]
struct Block {
    a: f64,
    b: f64,
    eta_u: f64,
    eta_v: f64,
    coupled: bool,
    n: [[f64; 2]; 2],
    c: [f64; 2],
}

impl Block {
    fn det(&self) -> f64 {
        self.a * self.b - self.eta_v * self.eta_u
    }

    fn m(&self) -> [[f64; 2]; 2] {
        [[self.a, -self.eta_u], [-self.eta_v, self.b]]
    }

    fn rhs(&self, y: [f64; 2]) -> [f64; 2] {
        [
            self.c[0] - self.n[0][1] * y[1] - self.n[0][0] * y[0],
            self.c[1] - self.n[1][0] * y[0] - self.n[1][1] * y[1],
        ]
    }

    fn solve(&self, y: [f64; 2]) -> [f64; 2] {
        let r = self.rhs(y);
        if !self.coupled {
            [r[0] / self.a, r[1] / self.b]
        } else {
            let det = self.det();
            [
                (self.b * r[0] + self.eta_u * r[1]) / det,
                (self.a * r[1] + self.eta_v * r[0]) / det,
            ]
        }
    }

    fn residual(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let m = self.m();
        let r = self.rhs(y);
        let e0 = m[0][0] * x[0] + m[0][1] * x[1] - r[0];
        let e1 = m[1][0] * x[0] + m[1][1] * x[1] - r[1];
        e0.abs().max(e1.abs())
    }
}

/// The two halves of the fixed-point system for a branch: upper corner from
/// the lower one, and lower corner from the upper one.
fn blocks(spec: &ModelSpec, branch: Branch) -> (Block, Block) {
    let s = spec.shifts();
    let (eta_u, eta_v, a2_extra, b1_extra) = match branch {
        Branch::Diagonal => (0.0, 0.0, 0.0, 0.0),
        Branch::Coupled => (s.cross_u, s.cross_v, s.cross_u, s.cross_v),
    };
    let upper = Block {
        a: spec.a1.inf - s.self_u,
        b: spec.b2.inf - s.self_v,
        eta_u,
        eta_v,
        coupled: branch == Branch::Coupled,
        n: [[s.self_u, spec.a2.inf + a2_extra], [spec.b1.inf + b1_extra, s.self_v]],
        c: [spec.a0.sup, spec.b0.sup],
    };
    let lower = Block {
        a: spec.a1.sup - s.self_u,
        b: spec.b2.sup - s.self_v,
        eta_u,
        eta_v,
        coupled: branch == Branch::Coupled,
        n: [[s.self_u, spec.a2.sup + a2_extra], [spec.b1.sup + b1_extra, s.self_v]],
        c: [spec.a0.inf, spec.b0.inf],
    };
    (upper, lower)
}

fn require_branch(spec: &ModelSpec, branch: Branch) -> Result<()> {
    let report = spec.check_hypotheses()?;
    let ok = match branch {
        Branch::Diagonal => report.rectangle_diagonal,
        Branch::Coupled => report.rectangle_coupled,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::HypothesisNotMet(format!(
            "the {} rectangle condition does not hold",
            branch.name()
        )))
    }
}

/// Largest absolute error of the four fixed-point equations at `rect`.
pub fn fixed_point_residual(spec: &ModelSpec, rect: &Rectangle) -> f64 {
    let (upper, lower) = blocks(spec, rect.branch);
    let hi = [rect.hi1, rect.hi2];
    let lo = [rect.lo1, rect.lo2];
    upper.residual(hi, lo).max(lower.residual(lo, hi))
}

/// Runs the monotone iteration from the lower corner at zero and the upper
/// corner at the ultimate bounds of `branch`.
pub fn iterate_rectangle(
    spec: &ModelSpec,
    branch: Branch,
    tol: f64,
    max_iter: usize,
) -> Result<(Rectangle, IterationTrace)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tolerance must be positive, got {tol}")));
    }
    require_branch(spec, branch)?;
    let (upper, lower) = blocks(spec, branch);

    let mut lo = [0.0, 0.0];
    let mut hi = upper.solve(lo);
    let mut trace = IterationTrace {
        quads: vec![[lo[0], hi[0], lo[1], hi[1]]],
        residual: f64::INFINITY,
        converged: false,
        iterations: 0,
    };
    let mut change = f64::INFINITY;

    for n in 1..=max_iter {
        let new_hi = upper.solve(lo);
        let new_lo = lower.solve(new_hi);
        change = (new_hi[0] - hi[0])
            .abs()
            .max((new_hi[1] - hi[1]).abs())
            .max((new_lo[0] - lo[0]).abs())
            .max((new_lo[1] - lo[1]).abs());
        hi = new_hi;
        lo = new_lo;
        trace.quads.push([lo[0], hi[0], lo[1], hi[1]]);
        trace.iterations = n;
        trace.residual = upper.residual(hi, lo).max(lower.residual(lo, hi));

        if lo[0] > hi[0] || lo[1] > hi[1] {
            return Err(Error::NotConverged {
                trace: Box::new(trace),
                change,
                reason: "lower corner crossed the upper corner".into(),
            });
        }
        if change < tol {
            trace.converged = true;
            let rect = Rectangle::from_quad([lo[0], hi[0], lo[1], hi[1]], branch);
            return Ok((rect, trace));
        }
    }
    Err(Error::NotConverged {
        trace: Box::new(trace),
        change,
        reason: format!("iteration cap of {max_iter} reached"),
    })
}

/// Coefficients of the decoupled linear systems
/// `h1 hi1 = h2 + h3 hi2, p1 hi2 = p2 + p3 hi1` (upper corner) and the
/// analogous pair for the lower corner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormCoefficients {
    pub h_bar: [f64; 3],
    pub p_bar: [f64; 3],
    pub h_lo: [f64; 3],
    pub p_lo: [f64; 3],
    pub det_bar: f64,
    pub det_lo: f64,
}

impl ClosedFormCoefficients {
    /// Largest error of the four linear relations at `rect`.
    pub fn relation_residual(&self, rect: &Rectangle) -> f64 {
        let [h1, h2, h3] = self.h_bar;
        let [p1, p2, p3] = self.p_bar;
        let [g1, g2, g3] = self.h_lo;
        let [q1, q2, q3] = self.p_lo;
        [
            h1 * rect.hi1 - h2 - h3 * rect.hi2,
            p1 * rect.hi2 - p2 - p3 * rect.hi1,
            g1 * rect.lo1 - g2 - g3 * rect.lo2,
            q1 * rect.lo2 - q2 - q3 * rect.lo1,
        ]
        .iter()
        .fold(0.0, |m, e| m.max(e.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosedForm {
    pub rectangle: Rectangle,
    pub coefficients: ClosedFormCoefficients,
    /// Rectangle invariants that the solution fails, if any.
    pub violations: Vec<String>,
}

fn adj(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]
}

fn mul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mul_vec(a: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Eliminates `y` from `M x = c - N y`, `M' y = c' - N' x`, giving
/// `(det M' M - N adj(M') N') x = det M' c - N adj(M') c'`, and returns the
/// result as `(h1, h2, h3, p1, p2, p3)` triples.
fn eliminate(own: &Block, other: &Block) -> ([f64; 3], [f64; 3], f64) {
    let det_other = other.det();
    let n_adj = mul(own.n, adj(other.m()));
    let coupling = mul(n_adj, other.n);
    let m = own.m();
    let g = [
        [
            det_other * m[0][0] - coupling[0][0],
            det_other * m[0][1] - coupling[0][1],
        ],
        [
            det_other * m[1][0] - coupling[1][0],
            det_other * m[1][1] - coupling[1][1],
        ],
    ];
    let shifted = mul_vec(n_adj, other.c);
    let rhs = [det_other * own.c[0] - shifted[0], det_other * own.c[1] - shifted[1]];
    ([g[0][0], rhs[0], -g[0][1]], [g[1][1], rhs[1], -g[1][0]], det_other)
}

fn solve_pair(h: [f64; 3], p: [f64; 3]) -> (f64, f64, f64) {
    let [h1, h2, h3] = h;
    let [p1, p2, p3] = p;
    let det = h1 * p1 - h3 * p3;
    ((h2 * p1 + h3 * p2) / det, (p2 * h1 + p3 * h2) / det, det)
}

fn degenerate(h: [f64; 3], p: [f64; 3], det: f64, det_tol: f64) -> bool {
    let scale = (h[0] * p[0]).abs() + (h[2] * p[2]).abs();
    !(det.abs() >= det_tol * scale) || scale == 0.0
}

/// Solves the fixed-point system of `branch` directly. No hypothesis is
/// required; invariant failures of the result are listed, not hidden.
///
/// A system counts as singular when a determinant is below `det_tol`
/// relative to the magnitude of its two products.
pub fn closed_form_rectangle(spec: &ModelSpec, branch: Branch, det_tol: f64) -> Result<ClosedForm> {
    spec.validate()?;
    let (upper, lower) = blocks(spec, branch);
    let (h_bar, p_bar, det_lower_block) = eliminate(&upper, &lower);
    let (h_lo, p_lo, det_upper_block) = eliminate(&lower, &upper);
    let (hi1, hi2, det_bar) = solve_pair(h_bar, p_bar);
    let (lo1, lo2, det_lo) = solve_pair(h_lo, p_lo);

    if det_lower_block == 0.0
        || det_upper_block == 0.0
        || degenerate(h_bar, p_bar, det_bar, det_tol)
        || degenerate(h_lo, p_lo, det_lo, det_tol)
    {
        return Err(Error::NonUniqueSystem { det_bar, det_lo });
    }

    let rectangle = Rectangle {
        lo1,
        hi1,
        lo2,
        hi2,
        branch,
    };
    Ok(ClosedForm {
        violations: rectangle.invariant_violations(spec),
        rectangle,
        coefficients: ClosedFormCoefficients {
            h_bar,
            p_bar,
            h_lo,
            p_lo,
            det_bar,
            det_lo,
        },
    })
}

/// For constant coefficients: whether the rectangle collapses to the single
/// coexistence point, i.e. `a2/b2 < a0/b0 < a1/b1` and
/// `(a1 - 2 k chi1/d3)(b2 - 2 l chi2/d3) > a2 b1`.
pub fn constant_coefficient_check(spec: &ModelSpec) -> Result<bool> {
    spec.validate()?;
    if !spec.is_constant() {
        return Err(Error::NotConstantCoefficients);
    }
    let s = spec.shifts();
    let (a0, a1, a2) = (spec.a0.inf, spec.a1.inf, spec.a2.inf);
    let (b0, b1, b2) = (spec.b0.inf, spec.b1.inf, spec.b2.inf);
    // cross-multiplied so that vanishing competition is allowed
    let ratios = a2 * b0 < a0 * b2 && a0 * b1 < a1 * b0;
    let product = (a1 - 2.0 * s.self_u) * (b2 - 2.0 * s.self_v) > a2 * b1;
    Ok(ratios && product)
}

/// Explicit rectangle of the signal-free system.
pub fn chemotaxis_free_rectangle(spec: &ModelSpec) -> Result<Rectangle> {
    spec.validate()?;
    let c = &spec.constants;
    if !c.chemotaxis_free() {
        return Err(Error::ChemotaxisNotZero {
            chi1: c.chi1,
            chi2: c.chi2,
        });
    }
    let (a0i, a0s) = (spec.a0.inf, spec.a0.sup);
    let (a1i, a1s) = (spec.a1.inf, spec.a1.sup);
    let (a2i, a2s) = (spec.a2.inf, spec.a2.sup);
    let (b0i, b0s) = (spec.b0.inf, spec.b0.sup);
    let (b1i, b1s) = (spec.b1.inf, spec.b1.sup);
    let (b2i, b2s) = (spec.b2.inf, spec.b2.sup);
    let weak = a1s * b2i - a2s * b1i;
    let strong = a1i * b2s - a2i * b1s;
    Ok(Rectangle {
        lo1: (a0i * b2i - a2s * b0s) / weak,
        hi1: (a0s * b2s - a2i * b0i) / strong,
        lo2: (a1i * b0i - a0s * b1s) / strong,
        hi2: (a1s * b0s - a0i * b1i) / weak,
        branch: Branch::Diagonal,
    })
}
