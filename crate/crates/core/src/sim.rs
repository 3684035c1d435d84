//! Closed-loop orchestration: plant, measurement, observer, integrator and
//! control law advanced in lockstep.

use serde::Serialize;

use crate::control::{integrator_step, total_control, ControllerState, FeedbackLaw, Mode};
use crate::error::{Error, Result};
use crate::kernels::{
    observer_gains, solve_control_kernels, solve_integral_weights, solve_inverse_kernels, solve_observer_kernels,
    IntegralWeights, InverseKernelSet, KernelSet, ObserverKernelSet,
};
use crate::model::{
    build_transport_maps, norm_e, trapezoid, validate_configuration, ControlConfig, DisturbanceSet, SystemParams,
    TransportMaps, ValidationReport,
};
use crate::nde::{effective_gains, select_ki, stability_report, StabilityReport};
use crate::observer::{epsilon_interval, step_observer, ObserverState};
use crate::plant::{measure, step_characteristics, step_plant, FieldState, Scheme, SimConfig, TraceLog, TraceRow};
use crate::steady::SteadyMap;

/// How the integral gain is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainChoice {
    Fixed(f64),
    /// Delay-margin design with the given safety factor in `(0, 1)`.
    Auto {
        margin: f64,
    },
}

/// How the observer blend is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    Fixed(f64),
    /// Midpoint of the admissible interval.
    Auto,
}

/// Everything precomputed from the plant and the tuning.
#[derive(Debug, Clone)]
pub struct Design {
    pub params: SystemParams,
    pub maps: TransportMaps,
    pub kernels: KernelSet,
    pub lset: InverseKernelSet,
    pub weights: IntegralWeights,
    pub okernels: ObserverKernelSet,
    pub config: ControlConfig,
    pub stability: StabilityReport,
    pub validation: ValidationReport,
}

impl Design {
    pub fn new(params: SystemParams, rho_tilde: f64, gain: GainChoice, epsilon: EpsilonChoice) -> Result<Self> {
        params.check()?;
        let maps = build_transport_maps(&params)?;
        let kernels = solve_control_kernels(&params)?;
        let lset = solve_inverse_kernels(&kernels, &params.grid)?;
        let weights = solve_integral_weights(&lset, &params)?;
        let epsilon = match epsilon {
            EpsilonChoice::Fixed(e) => e,
            EpsilonChoice::Auto => epsilon_interval(&params).midpoint(),
        };
        let (k_i, stability) = match gain {
            GainChoice::Auto { margin } => select_ki(&params, &weights, &maps, rho_tilde, margin)?,
            GainChoice::Fixed(k_i) => {
                let config = ControlConfig {
                    rho_tilde,
                    k_i,
                    epsilon,
                };
                (
                    k_i,
                    stability_report(&effective_gains(&params, &config, &weights, &maps)),
                )
            }
        };
        let config = ControlConfig {
            rho_tilde,
            k_i,
            epsilon,
        };
        let validation = validate_configuration(&params, &config);
        if let Some(c) = validation.failures().next() {
            return Err(Error::Configuration(c.detail.clone()));
        }
        let okernels = observer_gains(solve_observer_kernels(&params)?, &params, epsilon);
        Ok(Self {
            params,
            maps,
            kernels,
            lset,
            weights,
            okernels,
            config,
            stability,
            validation,
        })
    }

    pub fn steady_map(&self, dist: &DisturbanceSet) -> Result<SteadyMap> {
        SteadyMap::new(
            &self.params,
            &self.kernels,
            &self.lset,
            &self.weights,
            &dist.m1,
            &dist.m2,
        )
    }
}

/// One closed-loop experiment on a fixed design.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub mode: Mode,
    pub dist: DisturbanceSet,
    pub sim: SimConfig,
    pub initial: FieldState,
    pub initial_eta: f64,
    /// Initial observer estimate; zero fields when absent.
    pub observer_initial: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub final_abs_y: f64,
    pub sup_abs_y: f64,
    pub final_norm: f64,
    pub sup_norm: f64,
    pub final_obs_err: f64,
    pub k_i: f64,
    pub epsilon: f64,
    pub rho_tilde: f64,
    pub tau: f64,
    pub dt: f64,
    pub steps: usize,
}

impl RunSummary {
    pub fn new(trace: &TraceLog, design: &Design) -> Self {
        let last = trace.last().copied().unwrap_or(TraceRow {
            t: 0.0,
            y: 0.0,
            y_m: 0.0,
            control: 0.0,
            eta: 0.0,
            norm: 0.0,
            obs_err: 0.0,
            alpha_bar_1: 0.0,
        });
        let sup = |f: fn(&TraceRow) -> f64| trace.rows.iter().map(f).fold(0.0, |m: f64, x| m.max(x.abs()));
        Self {
            final_abs_y: last.y.abs(),
            sup_abs_y: sup(|r| r.y),
            final_norm: last.norm,
            sup_norm: sup(|r| r.norm),
            final_obs_err: last.obs_err,
            k_i: design.config.k_i,
            epsilon: design.config.epsilon,
            rho_tilde: design.config.rho_tilde,
            tau: design.maps.tau,
            dt: trace.dt,
            steps: trace.rows.len().saturating_sub(1),
        }
    }
}

/// Runs the loop. Per step: plant advance with the current control,
/// measurement, observer advance, trapezoidal integrator update and
/// evaluation of the next control value.
pub fn run_closed_loop(design: &Design, run: &ClosedLoop) -> Result<TraceLog> {
    let params = &design.params;
    let n = params.grid.n_cells();
    let h = params.grid.h();
    let dt = run.sim.dt;
    run.dist.check(&params.grid)?;
    if run.initial.u.len() != n + 1 || run.initial.v.len() != n + 1 {
        return Err(Error::Parameter("initial state does not match the grid".into()));
    }
    if run.sim.scheme == Scheme::Characteristics && !params.is_constant_coefficient() {
        return Err(Error::Configuration(
            "the characteristics scheme needs constant coefficients".into(),
        ));
    }
    let config = &design.config;
    let steady = design.steady_map(&run.dist)?;
    let law = match run.mode {
        Mode::StateFeedback => FeedbackLaw::state(&design.kernels, &design.lset, &design.weights, params, config),
        Mode::OutputFeedback => FeedbackLaw::output(&design.kernels, &design.weights, params, config),
    };
    let alpha_at_one = |s: &FieldState| {
        let ku: Vec<f64> = design.kernels.kuu.row(n).iter().zip(&s.u).map(|(k, u)| k * u).collect();
        let kv: Vec<f64> = design.kernels.kuv.row(n).iter().zip(&s.v).map(|(k, v)| k * v).collect();
        s.u[n] - trapezoid(&ku, h) - trapezoid(&kv, h)
    };

    let mut plant = run.initial.clone();
    plant.t = 0.0;
    let mut obs = match (&run.mode, &run.observer_initial) {
        (Mode::OutputFeedback, Some((u, v))) => {
            if u.len() != n + 1 || v.len() != n + 1 {
                return Err(Error::Parameter("observer state does not match the grid".into()));
            }
            Some(ObserverState {
                uhat: u.clone(),
                vhat: v.clone(),
                t: 0.0,
            })
        }
        (Mode::OutputFeedback, None) => Some(ObserverState {
            uhat: vec![0.0; n + 1],
            vhat: vec![0.0; n + 1],
            t: 0.0,
        }),
        _ => None,
    };
    let mut y_m = measure(&plant, &run.dist.noise, 0.0);
    let mut ctrl = ControllerState::new(run.mode, y_m);
    ctrl.eta = run.initial_eta;
    let eval = |plant: &FieldState, obs: &Option<ObserverState>, y_m: f64, eta: f64| {
        let ubs = match obs {
            Some(o) => law.eval(&o.uhat, &o.vhat, y_m),
            None => law.eval(&plant.u, &plant.v, y_m),
        };
        total_control(ubs, eta, config.k_i)
    };
    let obs_err = |plant: &FieldState, obs: &Option<ObserverState>| {
        obs.as_ref().map_or(0.0, |o| {
            plant
                .u
                .iter()
                .zip(&o.uhat)
                .chain(plant.v.iter().zip(&o.vhat))
                .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
        })
    };
    let mut control = eval(&plant, &obs, y_m, ctrl.eta);
    let steps = run.sim.steps();
    let mut trace = TraceLog::new(dt);
    trace.rows.reserve(steps + 1);
    let row = |plant: &FieldState, obs: &Option<ObserverState>, y_m, control, eta| -> Result<TraceRow> {
        Ok(TraceRow {
            t: plant.t,
            y: plant.u[n],
            y_m,
            control,
            eta,
            norm: norm_e(&plant.u, &plant.v, eta),
            obs_err: obs_err(plant, obs),
            alpha_bar_1: alpha_at_one(plant) - steady.alpha_at_one(&run.dist, plant.t, 0)?,
        })
    };
    trace.push(row(&plant, &obs, y_m, control, ctrl.eta)?);
    for k in 1..=steps {
        let next = match run.sim.scheme {
            Scheme::Upwind => step_plant(&plant, params, &run.dist, control, dt)?,
            Scheme::Characteristics => step_characteristics(&plant, params, &run.dist, control, dt)?,
        };
        let t_next = k as f64 * dt;
        let mut next = next;
        next.t = t_next;
        let y_next = measure(&next, &run.dist.noise, t_next);
        if let Some(o) = obs.as_mut() {
            let mut o_next = step_observer(o, y_m, y_next, control, &design.okernels, params, dt)?;
            o_next.t = t_next;
            *o = o_next;
        }
        ctrl = integrator_step(ctrl, y_next, dt);
        control = eval(&next, &obs, y_next, ctrl.eta);
        if !control.is_finite() || !ctrl.eta.is_finite() {
            return Err(Error::Divergence {
                last_valid_time: plant.t,
            });
        }
        plant = next;
        y_m = y_next;
        trace.push(row(&plant, &obs, y_m, control, ctrl.eta)?);
    }
    Ok(trace)
}

/// Open-loop plant (`U ≡ 0`) tracked by the observer; only the estimation
/// error is of interest, so the controller constraints do not apply.
pub fn run_observer(
    params: &SystemParams,
    okernels: &ObserverKernelSet,
    dist: &DisturbanceSet,
    sim: &SimConfig,
    initial: &FieldState,
    observer_initial: (Vec<f64>, Vec<f64>),
) -> Result<TraceLog> {
    let n = params.grid.n_cells();
    dist.check(&params.grid)?;
    if initial.u.len() != n + 1 || observer_initial.0.len() != n + 1 || observer_initial.1.len() != n + 1 {
        return Err(Error::Parameter("initial state does not match the grid".into()));
    }
    let dt = sim.dt;
    let mut plant = initial.clone();
    plant.t = 0.0;
    let mut obs = ObserverState {
        uhat: observer_initial.0,
        vhat: observer_initial.1,
        t: 0.0,
    };
    let err = |p: &FieldState, o: &ObserverState| {
        p.u.iter()
            .zip(&o.uhat)
            .chain(p.v.iter().zip(&o.vhat))
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()))
    };
    let row = |p: &FieldState, o: &ObserverState, y_m: f64| TraceRow {
        t: p.t,
        y: p.u[n],
        y_m,
        control: 0.0,
        eta: 0.0,
        norm: norm_e(&p.u, &p.v, 0.0),
        obs_err: err(p, o),
        alpha_bar_1: 0.0,
    };
    let mut y_m = measure(&plant, &dist.noise, 0.0);
    let mut trace = TraceLog::new(dt);
    trace.push(row(&plant, &obs, y_m));
    for k in 1..=sim.steps() {
        let mut next = step_plant(&plant, params, dist, 0.0, dt)?;
        next.t = k as f64 * dt;
        let y_next = measure(&next, &dist.noise, next.t);
        obs = step_observer(&obs, y_m, y_next, 0.0, okernels, params, dt)?;
        obs.t = next.t;
        plant = next;
        y_m = y_next;
        let r = row(&plant, &obs, y_m);
        if !r.obs_err.is_finite() {
            return Err(Error::Divergence {
                last_valid_time: plant.t - dt,
            });
        }
        trace.push(r);
    }
    Ok(trace)
}
