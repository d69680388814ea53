use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use coexist::ode::{solve_comparison4, solve_lv};
use coexist::rectangle::{closed_form_rectangle, iterate_rectangle, Branch};
use coexist::scenario::{diagnostics_csv, export, parse_config, run_certify, run_named, ScenarioConfig, Status};
use coexist::stability::{check_average_condition, check_corollary, StabilityOptions};
use coexist::{Error, Result};

#[derive(Parser)]
#[command(
    name = "coexist",
    version,
    about = "Coexistence certificates for competing species with chemotaxis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the hypotheses and ultimate bounds.
    Check { config: PathBuf },
    /// Compute the attracting rectangles by iteration and in closed form.
    Rectangle { config: PathBuf },
    /// Test the averaged decay condition on every licensed rectangle.
    Stability { config: PathBuf },
    /// Integrate the comparison system or the space-free competition ODE.
    Ode {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = OdeSystem::Comparison)]
        system: OdeSystem,
        /// CSV output file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one configured simulation and write its diagnostics.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        run: String,
        /// Directory for `<run>.csv`; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and write the report and CSV files.
    Certify {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OdeSystem {
    Comparison,
    Lv,
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("reports serialize"));
}

fn write_or_print(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn check(config: &ScenarioConfig) -> Result<bool> {
    let h = config.model.check_hypotheses()?;
    print_json(&h);
    Ok(h.rectangle_diagonal || h.rectangle_coupled || h.homogeneous_stability == Some(true))
}

fn rectangle(config: &ScenarioConfig) -> Result<bool> {
    let spec = &config.model;
    let h = spec.check_hypotheses()?;
    let tol = &config.tolerances;
    let mut any = false;
    let mut out = Vec::new();
    for branch in Branch::ALL {
        let licensed = match branch {
            Branch::Diagonal => h.rectangle_diagonal,
            Branch::Coupled => h.rectangle_coupled,
        };
        let iteration = if licensed {
            match iterate_rectangle(spec, branch, tol.tol, tol.max_iter) {
                Ok((r, trace)) => {
                    any = true;
                    json!({"rectangle": r, "iterations": trace.iterations, "monotone": trace.is_monotone()})
                }
                Err(e) => json!({"error": e.to_string()}),
            }
        } else {
            json!({"error": "hypothesis does not hold"})
        };
        let closed = match closed_form_rectangle(spec, branch, tol.det_tol) {
            Ok(c) => serde_json::to_value(&c).expect("reports serialize"),
            Err(e) => json!({"error": e.to_string()}),
        };
        out.push(json!({"branch": branch, "licensed": licensed, "iteration": iteration, "closed_form": closed}));
    }
    print_json(&out);
    Ok(any)
}

fn stability(config: &ScenarioConfig) -> Result<bool> {
    let spec = &config.model;
    let h = spec.check_hypotheses()?;
    let tol = &config.tolerances;
    let opts = StabilityOptions::for_spec(spec);
    let mut any = false;
    let mut out = Vec::new();
    for branch in Branch::ALL {
        let licensed = match branch {
            Branch::Diagonal => h.rectangle_diagonal,
            Branch::Coupled => h.rectangle_coupled,
        };
        if !licensed {
            continue;
        }
        let entry = match iterate_rectangle(spec, branch, tol.tol, tol.max_iter)
            .and_then(|(r, _)| check_average_condition(spec, &r, &opts))
        {
            Ok(p) => {
                any |= p.verdict;
                json!({
                    "branch": branch,
                    "mu_estimate": p.mu_estimate,
                    "slack": p.slack,
                    "window": p.window,
                    "verdict": p.verdict,
                })
            }
            Err(e) => json!({"branch": branch, "error": e.to_string()}),
        };
        out.push(entry);
    }
    let corollary = if spec.constants.chemotaxis_free() {
        match check_corollary(spec) {
            Ok(c) => serde_json::to_value(&c).expect("reports serialize"),
            Err(e) => json!({"error": e.to_string()}),
        }
    } else {
        serde_json::Value::Null
    };
    print_json(&json!({"branches": out, "corollary": corollary}));
    Ok(any)
}

fn ode(config: &ScenarioConfig, system: OdeSystem, out: Option<&Path>) -> Result<bool> {
    let spec = &config.model;
    let (t_end, dt, every) = (config.time.t_end, config.time.dt, config.time.save_every);
    let u = config.initial_u.sample(&config.grid);
    let v = config.initial_v.sample(&config.grid);
    let max = |x: &[f64]| x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = |x: &[f64]| x.iter().copied().fold(f64::INFINITY, f64::min);
    let mut text = String::new();
    let verdict = match system {
        OdeSystem::Comparison => {
            let traj = solve_comparison4(spec, [max(&u), min(&u), max(&v), min(&v)], 0.0, t_end, dt)?;
            text.push_str("t,u_hi,u_lo,v_hi,v_lo\n");
            for (i, (t, y)) in traj.t.iter().zip(&traj.y).enumerate() {
                if i % every == 0 || i + 1 == traj.len() {
                    writeln!(text, "{t:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", y[0], y[1], y[2], y[3])
                        .expect("writing to a string");
                }
            }
            traj.ordering_violation() <= 0.0
        }
        OdeSystem::Lv => {
            let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
            let traj = solve_lv(spec, [mean(&u), mean(&v)], 0.0, t_end, dt)?;
            text.push_str("t,u,v\n");
            for (i, (t, y)) in traj.t.iter().zip(&traj.y).enumerate() {
                if i % every == 0 || i + 1 == traj.len() {
                    writeln!(text, "{t:.16e},{:.16e},{:.16e}", y[0], y[1]).expect("writing to a string");
                }
            }
            traj.y.iter().all(|y| y[0] > 0.0 && y[1] > 0.0)
        }
    };
    write_or_print(&text, out)?;
    Ok(verdict)
}

fn simulate(config: &ScenarioConfig, run: &str, out: Option<&Path>) -> Result<bool> {
    let sim = run_named(config, run)?;
    let path = out.map(|dir| dir.join(format!("{run}.csv")));
    write_or_print(&diagnostics_csv(&sim.diagnostics), path.as_deref())?;
    Ok(true)
}

fn certify(config: &ScenarioConfig, out: &Path) -> Result<bool> {
    let report = run_certify(config)?;
    let written = export(&report, out)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let status = serde_json::to_value(report.status).expect("status serializes");
    println!("status: {}", status.as_str().unwrap_or_default());
    for r in &report.reasons {
        println!("  {r}");
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(report.status == Status::Certified)
}

fn run(cli: Cli) -> Result<bool> {
    let load = |p: &Path| parse_config(p);
    match cli.command {
        Command::Check { config } => check(&load(&config)?),
        Command::Rectangle { config } => rectangle(&load(&config)?),
        Command::Stability { config } => stability(&load(&config)?),
        Command::Ode { config, system, out } => ode(&load(&config)?, system, out.as_deref()),
        Command::Simulate { config, run, out } => simulate(&load(&config)?, &run, out.as_deref()),
        Command::Certify { config, out } => certify(&load(&config)?, &out),
    }
}

fn report_error(e: &Error) {
    match e {
        Error::Validation(list) => {
            eprintln!("error: invalid configuration");
            for item in list {
                eprintln!("  {item}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("COEXIST_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok());
    let result = match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => {
                eprintln!("error: cannot start {n} worker threads: {e}");
                return ExitCode::from(1);
            }
        },
        _ => run(cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            report_error(&e);
            ExitCode::from(1)
        }
    }
}
