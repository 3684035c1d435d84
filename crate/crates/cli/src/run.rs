//! Executes a scenario and evaluates its checks.

use std::path::Path;

use hyperreg_core::kernels::{observer_gains, solve_observer_kernels};
use hyperreg_core::model::ValidationReport;
use hyperreg_core::model::{build_transport_maps, DisturbanceSet, SystemParams};
use hyperreg_core::nde::StabilityReport;
use hyperreg_core::observer::epsilon_interval;
use hyperreg_core::plant::{check_cfl, FieldState, SimConfig, TraceLog};
use hyperreg_core::sim::{run_closed_loop, run_observer, ClosedLoop, Design, EpsilonChoice, GainChoice};
use serde::Serialize;

use crate::error::CliError;
use crate::output::write_atomic;
use crate::scenario::{Check, Coefficient, RunKind, Scenario, Tunable};
use crate::svg::{stacked, Series};

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub final_abs_y: f64,
    pub sup_abs_y: f64,
    pub final_norm: f64,
    pub sup_norm: f64,
    pub final_obs_err: f64,
    pub k_i: Option<f64>,
    pub epsilon: f64,
    pub rho_tilde: Option<f64>,
    pub tau: f64,
    pub dt: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub kind: RunKind,
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

pub struct Outcome {
    pub trace: TraceLog,
    pub report: Report,
}

pub fn design(s: &Scenario, params: SystemParams) -> Result<Design, CliError> {
    let c = &s.controller;
    let gain = match c.k_i {
        Tunable::Auto => GainChoice::Auto { margin: c.margin },
        Tunable::Value(k) => GainChoice::Fixed(k),
    };
    let eps = match c.epsilon {
        Tunable::Auto => EpsilonChoice::Auto,
        Tunable::Value(e) => EpsilonChoice::Fixed(e),
    };
    Ok(Design::new(params, c.rho_tilde, gain, eps)?)
}

pub fn sim_config(s: &Scenario, params: &SystemParams, tau: f64) -> Result<SimConfig, CliError> {
    let sp = &s.simulation;
    let horizon = match (sp.horizon, sp.horizon_tau) {
        (Some(h), None) => h,
        (None, Some(k)) => k * tau,
        (None, None) => return Err(CliError::Input("simulation needs horizon or horizon_tau".into())),
        (Some(_), Some(_)) => return Err(CliError::Input("give only one of horizon and horizon_tau".into())),
    };
    if !(horizon > 0.0) {
        return Err(CliError::Input(format!("horizon {horizon} must be positive")));
    }
    let mut cfg = match (sp.dt, sp.cfl) {
        (Some(_), Some(_)) => return Err(CliError::Input("give only one of dt and cfl".into())),
        (Some(dt), None) => {
            check_cfl(params, dt)?;
            SimConfig {
                dt,
                horizon,
                scheme: sp.scheme,
            }
        }
        (None, cfl) => {
            let cfl = cfl.unwrap_or(1.0);
            if !(cfl > 0.0 && cfl <= 1.0) {
                return Err(CliError::Input(format!("cfl {cfl} must lie in (0, 1]")));
            }
            SimConfig::from_cfl(params, cfl, horizon)
        }
    };
    cfg.scheme = sp.scheme;
    Ok(cfg)
}

fn field(c: &Coefficient, params: &SystemParams, what: &str) -> Result<Vec<f64>, CliError> {
    c.sample(&params.grid)
        .map_err(|e| CliError::Input(format!("{what}: {e}")))
}

pub fn run(s: &Scenario) -> Result<Outcome, CliError> {
    let params = s.params()?;
    let dist = s.disturbances(&params.grid)?;
    let initial = FieldState {
        u: field(&s.initial.u, &params, "initial.u")?,
        v: field(&s.initial.v, &params, "initial.v")?,
        t: 0.0,
    };
    let observer_initial = match (&s.initial.uhat, &s.initial.vhat) {
        (None, None) => None,
        (a, b) => {
            let zero = Coefficient::Constant(0.0);
            Some((
                field(a.as_ref().unwrap_or(&zero), &params, "initial.uhat")?,
                field(b.as_ref().unwrap_or(&zero), &params, "initial.vhat")?,
            ))
        }
    };
    match s.simulation.kind {
        RunKind::ClosedLoop => {
            let d = design(s, params)?;
            let sim = sim_config(s, &d.params, d.maps.tau)?;
            let trace = run_closed_loop(
                &d,
                &ClosedLoop {
                    mode: s.controller.mode,
                    dist,
                    sim,
                    initial,
                    initial_eta: s.initial.eta,
                    observer_initial,
                },
            )?;
            let summary = summarize(
                &trace,
                Some(d.config.k_i),
                d.config.epsilon,
                Some(d.config.rho_tilde),
                d.maps.tau,
                &sim,
            );
            let checks = evaluate(&s.checks, &trace, d.maps.tau);
            Ok(finish(s, trace, summary, Some(d.stability), Some(d.validation), checks))
        }
        RunKind::Observer => observer_run(s, params, dist, initial, observer_initial),
    }
}

fn observer_run(
    s: &Scenario,
    params: SystemParams,
    dist: DisturbanceSet,
    initial: FieldState,
    observer_initial: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<Outcome, CliError> {
    let maps = build_transport_maps(&params)?;
    let eps = match s.controller.epsilon {
        Tunable::Auto => epsilon_interval(&params).midpoint(),
        Tunable::Value(e) if (0.0..=1.0).contains(&e) => e,
        Tunable::Value(e) => return Err(CliError::Input(format!("epsilon {e} must lie in [0, 1]"))),
    };
    let ok = observer_gains(solve_observer_kernels(&params)?, &params, eps);
    let sim = sim_config(s, &params, maps.tau)?;
    let n = params.grid.len();
    let obs0 = observer_initial.unwrap_or((vec![0.0; n], vec![0.0; n]));
    let trace = run_observer(&params, &ok, &dist, &sim, &initial, obs0)?;
    let summary = summarize(&trace, None, eps, None, maps.tau, &sim);
    let checks = evaluate(&s.checks, &trace, maps.tau);
    Ok(finish(s, trace, summary, None, None, checks))
}

fn finish(
    s: &Scenario,
    trace: TraceLog,
    summary: Summary,
    stability: Option<StabilityReport>,
    validation: Option<ValidationReport>,
    checks: Vec<CheckResult>,
) -> Outcome {
    let passed = checks.iter().all(|c| c.passed);
    Outcome {
        trace,
        report: Report {
            name: s.name.clone(),
            kind: s.simulation.kind,
            summary,
            stability,
            validation,
            checks,
            passed,
        },
    }
}

fn summarize(
    trace: &TraceLog,
    k_i: Option<f64>,
    epsilon: f64,
    rho_tilde: Option<f64>,
    tau: f64,
    sim: &SimConfig,
) -> Summary {
    let last = *trace.last().expect("trace starts with the initial row");
    let fold = |f: fn(&hyperreg_core::plant::TraceRow) -> f64| trace.rows.iter().map(f).fold(0.0, f64::max);
    Summary {
        final_abs_y: last.y.abs(),
        sup_abs_y: fold(|r| r.y.abs()),
        final_norm: last.norm,
        sup_norm: fold(|r| r.norm),
        final_obs_err: last.obs_err,
        k_i,
        epsilon,
        rho_tilde,
        tau,
        dt: sim.dt,
        steps: trace.rows.len().saturating_sub(1),
    }
}

pub fn evaluate(checks: &[Check], trace: &TraceLog, tau: f64) -> Vec<CheckResult> {
    let end = trace.last().map_or(0.0, |r| r.t);
    // A window past the horizon cannot be checked, so it fails.
    let covers = |t: f64| t <= end + trace.dt;
    checks
        .iter()
        .map(|c| match c {
            Check::AbsYBelow {
                from_tau,
                to_tau,
                bound,
            } => {
                let v = trace.sup_between(from_tau * tau, to_tau * tau, |r| r.y.abs());
                let covered = covers(to_tau * tau);
                CheckResult {
                    check: format!("abs_y_below[{from_tau}τ, {to_tau}τ]"),
                    passed: covered && v <= *bound,
                    value: v,
                    bound: *bound,
                }
            }
            Check::NoGrowth {
                early_tau,
                late_tau,
                factor,
            } => {
                let sup = |w: &[f64; 2]| trace.sup_between(w[0] * tau, w[1] * tau, |r| r.y.abs());
                let (early, late) = (sup(early_tau), sup(late_tau));
                let ratio = if early > 0.0 {
                    late / early
                } else if late > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                CheckResult {
                    check: "no_growth".into(),
                    passed: covers(late_tau[1] * tau) && ratio <= *factor,
                    value: ratio,
                    bound: *factor,
                }
            }
            Check::ObsErrBelow { from_tau, bound } => {
                let v = trace.sup_between(from_tau * tau, f64::INFINITY, |r| r.obs_err);
                CheckResult {
                    check: format!("obs_err_below[{from_tau}τ, end]"),
                    passed: v <= *bound,
                    value: v,
                    bound: *bound,
                }
            }
            Check::Finite => {
                let bad = trace
                    .rows
                    .iter()
                    .filter(|r| ![r.y, r.control, r.eta, r.norm, r.obs_err].iter().all(|x| x.is_finite()))
                    .count();
                CheckResult {
                    check: "finite".into(),
                    passed: bad == 0,
                    value: bad as f64,
                    bound: 0.0,
                }
            }
        })
        .collect()
}

/// Writes `trace.csv`, `summary.json` and `plots.svg` into `dir`.
pub fn write_outputs(dir: &Path, outcome: &Outcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut csv = Vec::new();
    outcome.trace.write_csv(&mut csv)?;
    write_atomic(&dir.join("trace.csv"), &csv)?;
    let json = serde_json::to_vec_pretty(&outcome.report).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&dir.join("summary.json"), &json)?;
    let tr = &outcome.trace;
    let t = tr.times();
    let third = match outcome.report.kind {
        RunKind::ClosedLoop => Series {
            label: "norm",
            values: tr.column(|r| r.norm),
        },
        RunKind::Observer => Series {
            label: "obs_err",
            values: tr.column(|r| r.obs_err),
        },
    };
    let svg = stacked(
        &outcome.report.name,
        &t,
        &[
            Series {
                label: "y",
                values: tr.column(|r| r.y),
            },
            Series {
                label: "U",
                values: tr.column(|r| r.control),
            },
            third,
        ],
    );
    write_atomic(&dir.join("plots.svg"), svg.as_bytes())?;
    Ok(())
}
