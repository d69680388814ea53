use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ode::{lyapunov_ratio, pullback_entire_solution, solve_comparison4, PullbackOptions};
use crate::params::HypothesisReport;
use crate::pde::{
    comparison_sandwich, energy_between, envelope_check, final_spread, invariance_check, simulate, EnergyReport,
    InvarianceReport, RunDiagnostics, SandwichReport, SimRun,
};
use crate::rectangle::{
    closed_form_rectangle, constant_coefficient_check, iterate_rectangle, Branch, ClosedForm, IterationTrace, Rectangle,
};
use crate::stability::{check_average_condition, check_corollary, CorollaryReport, StabilityOptions, StabilityProfile};

use super::config::{RunConfig, ScenarioConfig};

/// Outcome of one stage of the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum Stage<T> {
    Done { result: T },
    Failed { error: String },
    Skipped { reason: String },
}

impl<T> Stage<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(result) => Stage::Done { result },
            Err(e) => Stage::Failed { error: e.to_string() },
        }
    }

    fn skipped(reason: impl Into<String>) -> Self {
        Stage::Skipped { reason: reason.into() }
    }

    pub fn done(&self) -> Option<&T> {
        match self {
            Stage::Done { result } => Some(result),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Certified,
    Partial,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationResult {
    pub rectangle: Rectangle,
    pub trace: IterationTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchReport {
    pub branch: Branch,
    pub licensed: bool,
    pub iteration: Stage<IterationResult>,
    pub closed_form: Stage<ClosedForm>,
    /// Largest corner difference between the two rectangles.
    pub agreement: Option<f64>,
    pub stability: Stage<StabilityProfile>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub t_end: f64,
    pub final_spread: (f64, f64),
    pub bound_entry_time: Option<f64>,
    /// First time after which the run stays near the certified rectangle.
    pub envelope_entry_time: Option<f64>,
    pub sandwich: Stage<SandwichReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergySummary {
    pub first: String,
    pub second: String,
    pub initial: f64,
    pub last: f64,
    pub rate: Option<f64>,
    /// Rate from the average condition, when a stable rectangle exists.
    pub mu: Option<f64>,
    /// Smallest `eps` with `rate <= 2 (mu + eps)`.
    pub eps0: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PullbackSummary {
    pub t_back: f64,
    pub samples: usize,
    pub deviation: f64,
    /// Largest gap between `w` and `(k u + l v) / lambda`.
    pub signal_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovSummary {
    pub initial: f64,
    pub last: f64,
    /// Largest increase between consecutive steps.
    pub worst_increase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneousReport {
    pub spreads: Vec<(String, f64)>,
    pub pullback: Stage<PullbackSummary>,
    pub lyapunov: Stage<LyapunovSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificationReport {
    pub status: Status,
    pub reasons: Vec<String>,
    pub hypotheses: HypothesisReport,
    pub branches: Vec<BranchReport>,
    /// Whether the rectangle collapses to the constant coexistence state;
    /// only evaluated for constant coefficients.
    pub constant_collapse: Option<Stage<bool>>,
    /// Weak-competition test; only evaluated without chemotaxis.
    pub corollary: Option<Stage<CorollaryReport>>,
    /// Rectangle used for the simulation checks.
    pub rectangle: Option<Rectangle>,
    pub invariance: Stage<InvarianceReport>,
    pub runs: Vec<RunSummary>,
    pub energy: Vec<EnergySummary>,
    pub homogeneous: Option<HomogeneousReport>,
    /// Every verdict that decides the status.
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub exports: Exports,
}

/// Data written next to the report but kept out of it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Exports {
    pub runs: Vec<(String, RunDiagnostics)>,
    pub energy: Vec<(String, String, EnergyReport)>,
}

/// Name of the run used when the configuration lists none.
pub const MAIN_RUN: &str = "main";

fn branch_report(config: &ScenarioConfig, hyp: &HypothesisReport, branch: Branch) -> BranchReport {
    let spec = &config.model;
    let tol = &config.tolerances;
    let licensed = match branch {
        Branch::Diagonal => hyp.rectangle_diagonal,
        Branch::Coupled => hyp.rectangle_coupled,
    };
    if !licensed {
        let why = format!("the {} rectangle hypothesis does not hold", branch.name());
        return BranchReport {
            branch,
            licensed,
            iteration: Stage::skipped(&why),
            closed_form: Stage::skipped(&why),
            agreement: None,
            stability: Stage::skipped(&why),
        };
    }
    let iteration = Stage::from_result(
        iterate_rectangle(spec, branch, tol.tol, tol.max_iter)
            .map(|(rectangle, trace)| IterationResult { rectangle, trace }),
    );
    let closed_form = Stage::from_result(closed_form_rectangle(spec, branch, tol.det_tol));
    let agreement = match (iteration.done(), closed_form.done()) {
        (Some(i), Some(c)) => Some(i.rectangle.max_difference(&c.rectangle)),
        _ => None,
    };
    let stability = match iteration.done() {
        Some(i) => Stage::from_result(check_average_condition(
            spec,
            &i.rectangle,
            &StabilityOptions::for_spec(spec),
        )),
        None => Stage::skipped("no rectangle"),
    };
    BranchReport {
        branch,
        licensed,
        iteration,
        closed_form,
        agreement,
        stability,
    }
}

fn skipped_report(hypotheses: HypothesisReport, reason: String) -> CertificationReport {
    let branches = Branch::ALL
        .iter()
        .map(|&branch| BranchReport {
            branch,
            licensed: false,
            iteration: Stage::skipped(&reason),
            closed_form: Stage::skipped(&reason),
            agreement: None,
            stability: Stage::skipped(&reason),
        })
        .collect();
    CertificationReport {
        status: Status::Failed,
        reasons: vec![reason.clone()],
        hypotheses,
        branches,
        constant_collapse: None,
        corollary: None,
        rectangle: None,
        invariance: Stage::skipped(&reason),
        runs: Vec::new(),
        energy: Vec::new(),
        homogeneous: None,
        checks: Vec::new(),
        exports: Exports::default(),
    }
}

fn effective_runs(config: &ScenarioConfig) -> (Vec<RunConfig>, bool) {
    if config.runs.is_empty() {
        let main = RunConfig {
            name: MAIN_RUN.into(),
            initial_u: config.initial_u,
            initial_v: config.initial_v,
            pair_with: None,
        };
        (vec![main], false)
    } else {
        (config.runs.clone(), true)
    }
}

fn homogeneous_report(config: &ScenarioConfig, sims: &[(RunConfig, SimRun)]) -> HomogeneousReport {
    let spec = &config.model;
    let spreads = sims
        .iter()
        .map(|(run, sim)| {
            let (su, sv) = final_spread(sim);
            (run.name.clone(), su.max(sv))
        })
        .collect();

    let times: Vec<f64> = sims[0].1.diagnostics.rows.iter().map(|r| r.t).collect();
    let pullback = Stage::from_result(
        pullback_entire_solution(
            spec,
            config.tolerances.pullback_horizon,
            &times,
            config.tolerances.pullback_tol,
            &PullbackOptions::default(),
        )
        .map(|sol| {
            let c = &spec.constants;
            let signal_residual = sol
                .u
                .iter()
                .zip(&sol.v)
                .zip(&sol.w)
                .map(|((u, v), w)| (w - (c.k * u + c.l * v) / c.lambda).abs())
                .fold(0.0, f64::max);
            PullbackSummary {
                t_back: sol.t_back,
                samples: sol.t.len(),
                deviation: sol.deviation,
                signal_residual,
            }
        }),
    );

    let first = &sims[0].1.diagnostics.rows[0];
    let init = [first.max_u, first.min_u, first.max_v, first.min_v];
    let lyapunov = Stage::from_result(
        solve_comparison4(spec, init, 0.0, config.time.t_end, config.time.dt)
            .and_then(|traj| lyapunov_ratio(&traj))
            .map(|l| LyapunovSummary {
                initial: l[0],
                last: *l.last().expect("trajectory holds its start"),
                worst_increase: l.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max),
            }),
    );
    HomogeneousReport {
        spreads,
        pullback,
        lyapunov,
    }
}

/// Runs every applicable check on a validated configuration.
///
/// The result depends only on the configuration, not on the number of
/// worker threads.
pub fn run_certify(config: &ScenarioConfig) -> Result<CertificationReport> {
    let spec = &config.model;
    let hyp = spec.check_hypotheses()?;
    if !(hyp.boundedness_diagonal || hyp.boundedness_coupled) {
        let m = &hyp.margins;
        let failing: Vec<&str> = m
            .iter()
            .filter(|(k, v)| k.starts_with("boundedness.") && **v <= 0.0)
            .map(|(k, _)| k.as_str())
            .collect();
        let reason = format!("neither boundedness hypothesis holds (failing: {})", failing.join(", "));
        return Ok(skipped_report(hyp, reason));
    }

    let mut checks = Vec::new();
    let mut check = |name: String, passed: bool, detail: String| checks.push(Check { name, passed, detail });

    let branches: Vec<BranchReport> = Branch::ALL.iter().map(|&b| branch_report(config, &hyp, b)).collect();
    for b in branches.iter().filter(|b| b.licensed) {
        let name = b.branch.name();
        match &b.iteration {
            Stage::Done { result } => check(
                format!("rectangle.{name}.monotone"),
                result.trace.is_monotone(),
                format!("{} iterations", result.trace.iterations),
            ),
            Stage::Failed { error } => check(format!("rectangle.{name}.iteration"), false, error.clone()),
            Stage::Skipped { .. } => {}
        }
        match &b.closed_form {
            Stage::Done { result } => check(
                format!("rectangle.{name}.closed_form"),
                result.violations.is_empty(),
                result.violations.join("; "),
            ),
            Stage::Failed { error } => check(format!("rectangle.{name}.closed_form"), false, error.clone()),
            Stage::Skipped { .. } => {}
        }
        if let Some(delta) = b.agreement {
            let limit = 10.0 * config.tolerances.tol;
            check(
                format!("rectangle.{name}.agreement"),
                delta <= limit,
                format!("difference {delta:e}, allowed {limit:e}"),
            );
        }
    }

    let constant_collapse = spec
        .is_constant()
        .then(|| Stage::from_result(constant_coefficient_check(spec)));
    let corollary = spec
        .constants
        .chemotaxis_free()
        .then(|| Stage::from_result(check_corollary(spec)));

    // Prefer a rectangle that passed the average condition.
    let stable = branches.iter().find(|b| b.stability.done().is_some_and(|s| s.verdict));
    let rectangle = stable
        .or_else(|| branches.iter().find(|b| b.iteration.done().is_some()))
        .and_then(|b| b.iteration.done())
        .map(|i| i.rectangle);
    let mu = stable.and_then(|b| b.stability.done()).map(|s| s.mu_estimate);

    let opts = config.time.sim_options();
    let (runs, export_runs) = effective_runs(config);
    let sims: Vec<(RunConfig, SimRun)> = runs
        .into_par_iter()
        .map(|run| {
            let sim = simulate(spec, &config.grid, &run.initial_u, &run.initial_v, &opts)?;
            Ok((run, sim))
        })
        .collect::<Result<_>>()?;

    let invariance = match &rectangle {
        Some(rect) => Stage::from_result(invariance_check(spec, &config.grid, rect, &opts)),
        None => Stage::skipped("no rectangle"),
    };
    match &invariance {
        Stage::Done { result } => check(
            "invariance".into(),
            result.verdict,
            format!("excursion {:e}, allowed {:e}", result.worst_excursion, result.tol_num),
        ),
        Stage::Failed { error } => check("invariance".into(), false, error.clone()),
        Stage::Skipped { .. } => {}
    }

    let mut summaries = Vec::new();
    for (run, sim) in &sims {
        let d = &sim.diagnostics;
        let bound_entry_time = d.ultimate_bound.and_then(|b| b.entry_time);
        if hyp.boundedness_diagonal {
            check(
                format!("ultimate_bound.{}", run.name),
                bound_entry_time.is_some(),
                format!("entry time {bound_entry_time:?}"),
            );
        }
        let envelope_entry_time = rectangle.and_then(|r| envelope_check(d, &r, config.tolerances.eps));
        if rectangle.is_some() {
            check(
                format!("envelope.{}", run.name),
                envelope_entry_time.is_some(),
                format!("entry time {envelope_entry_time:?}"),
            );
        }
        let sandwich = if hyp.boundedness_coupled {
            Stage::from_result(comparison_sandwich(spec, sim))
        } else {
            Stage::skipped("the coupled boundedness hypothesis does not hold")
        };
        match &sandwich {
            Stage::Done { result } => check(
                format!("sandwich.{}", run.name),
                result.verdict,
                format!("excursion {:e}, allowed {:e}", result.worst_excursion, result.tol_num),
            ),
            Stage::Failed { error } => check(format!("sandwich.{}", run.name), false, error.clone()),
            Stage::Skipped { .. } => {}
        }
        summaries.push(RunSummary {
            name: run.name.clone(),
            t_end: d.rows.last().map_or(0.0, |r| r.t),
            final_spread: final_spread(sim),
            bound_entry_time,
            envelope_entry_time,
            sandwich,
        });
    }

    let mut energy = Vec::new();
    let mut energy_exports = Vec::new();
    for (run, sim) in &sims {
        let Some(partner) = &run.pair_with else { continue };
        let other = &sims
            .iter()
            .find(|(r, _)| &r.name == partner)
            .expect("pairs are validated")
            .1;
        let report = energy_between(sim, other)?;
        let eps0 = match (report.rate, mu) {
            (Some(rate), Some(mu)) => Some((rate / 2.0 - mu).max(0.0)),
            _ => None,
        };
        let name = format!("energy.{}_{}", run.name, partner);
        match (eps0, mu) {
            (Some(e), Some(mu)) => check(name, e < mu.abs(), format!("eps0 {e:e} against |mu| {:e}", mu.abs())),
            (None, Some(_)) => check(name, false, "no decay rate could be fitted".into()),
            _ => {}
        }
        energy.push(EnergySummary {
            first: run.name.clone(),
            second: partner.clone(),
            initial: report.energy[0],
            last: *report.energy.last().expect("runs save their start"),
            rate: report.rate,
            mu,
            eps0,
        });
        energy_exports.push((run.name.clone(), partner.clone(), report));
    }

    let homogeneous = (hyp.homogeneous_stability == Some(true)).then(|| homogeneous_report(config, &sims));
    let mut homogeneous_route = false;
    if let Some(h) = &homogeneous {
        let limit = config.tolerances.homogenization_tol;
        let mut all = true;
        for (name, spread) in &h.spreads {
            all &= *spread < limit;
            check(
                format!("homogenization.{name}"),
                *spread < limit,
                format!("spread {spread:e}, allowed {limit:e}"),
            );
        }
        let pb = match &h.pullback {
            Stage::Done { result } => result.deviation < config.tolerances.pullback_tol,
            _ => false,
        };
        let detail = match &h.pullback {
            Stage::Done { result } => format!("deviation {:e}", result.deviation),
            Stage::Failed { error } => error.clone(),
            Stage::Skipped { reason } => reason.clone(),
        };
        check("pullback".into(), pb, detail);
        let ly = match &h.lyapunov {
            Stage::Done { result } => result.worst_increase <= 1e-12 * (1.0 + result.initial),
            _ => false,
        };
        let detail = match &h.lyapunov {
            Stage::Done { result } => format!("largest increase {:e}", result.worst_increase),
            Stage::Failed { error } => error.clone(),
            Stage::Skipped { reason } => reason.clone(),
        };
        check("lyapunov".into(), ly, detail);
        homogeneous_route = all && pb && ly;
    }

    let mut reasons: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} failed: {}", c.name, c.detail))
        .collect();
    let route = stable.is_some() || homogeneous_route;
    if !route {
        reasons.push("no stable rectangle and no homogeneous stability route".into());
    }
    let status = if reasons.is_empty() {
        Status::Certified
    } else {
        Status::Partial
    };

    let exports = Exports {
        runs: if export_runs {
            sims.iter()
                .map(|(r, s)| (r.name.clone(), s.diagnostics.clone()))
                .collect()
        } else {
            Vec::new()
        },
        energy: energy_exports,
    };
    Ok(CertificationReport {
        status,
        reasons,
        hypotheses: hyp,
        branches,
        constant_collapse,
        corollary,
        rectangle,
        invariance,
        runs: summaries,
        energy,
        homogeneous,
        checks,
        exports,
    })
}

/// Runs a single configured simulation by name.
pub fn run_named(config: &ScenarioConfig, name: &str) -> Result<SimRun> {
    let (runs, _) = effective_runs(config);
    let run = runs
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::InvalidSpec(format!("no run named '{name}'")))?;
    simulate(
        &config.model,
        &config.grid,
        &run.initial_u,
        &run.initial_v,
        &config.time.sim_options(),
    )
}
