//! Delay-equation analysis of the output dynamics.

use std::path::Path;

use hyperreg_core::model::TimeSignal;
use hyperreg_core::nde::{
    classify_ratio, effective_gains, nde_forcing_from_scenario, simulate_nde, stability_report, trend_window,
    window_ratio, FeedbackGains, NdeHistory, NdeTrace, StabilityReport, Trend,
};
use serde::Serialize;

use crate::error::CliError;
use crate::output::write_atomic;
use crate::run::design;
use crate::scenario::Scenario;

/// Steps per delay.
const STEPS_PER_TAU: f64 = 200.0;

#[derive(Debug, Clone, Serialize)]
pub struct NdeReport {
    pub gains: FeedbackGains,
    pub stability: StabilityReport,
    pub window: f64,
    pub windows: usize,
    pub ratio: f64,
    pub trend: Trend,
    pub sup_abs_z: f64,
    pub final_abs_z: f64,
}

pub struct NdeOutcome {
    pub trace: NdeTrace,
    pub report: NdeReport,
}

/// Integrates from a unit history plus `forcing` over `windows` trend
/// windows and classifies the last two.
pub fn analyze(
    gains: FeedbackGains,
    forcing: Option<&dyn Fn(f64, f64) -> Result<TimeSignal, CliError>>,
    windows: usize,
) -> Result<NdeOutcome, CliError> {
    if !(gains.tau > 0.0) {
        return Err(CliError::Input(format!("tau {} must be positive", gains.tau)));
    }
    if windows < 2 {
        return Err(CliError::Input("need at least two windows".into()));
    }
    let stability = stability_report(&gains);
    let window = match stability.omega_star {
        Some(w) if w > 0.0 => trend_window(gains.tau, w),
        _ => 4.0 * gains.tau,
    };
    let dt = gains.tau / STEPS_PER_TAU;
    let horizon = window * windows as f64;
    let forcing = match forcing {
        Some(f) => f(horizon, dt)?,
        None => TimeSignal::Zero,
    };
    let history = NdeHistory::from_fn(gains.tau, dt, |_| 1.0, |_| 0.0);
    let trace = simulate_nde(&gains, &forcing, &history, horizon, dt)?;
    let ratio = window_ratio(&trace, window);
    let abs = trace.z.iter().map(|z| z.abs());
    let report = NdeReport {
        gains,
        stability,
        window,
        windows,
        ratio,
        trend: classify_ratio(ratio),
        sup_abs_z: abs.clone().fold(0.0, f64::max),
        final_abs_z: trace.z.last().map_or(0.0, |z| z.abs()),
    };
    Ok(NdeOutcome { trace, report })
}

/// Gains and forcing of the scenario's closed loop.
pub fn analyze_scenario(s: &Scenario, windows: usize) -> Result<NdeOutcome, CliError> {
    let params = s.params()?;
    let dist = s.disturbances(&params.grid)?;
    let d = design(s, params)?;
    let steady = d.steady_map(&dist)?;
    let gains = effective_gains(&d.params, &d.config, &d.weights, &d.maps);
    let forcing = |horizon: f64, dt: f64| -> Result<TimeSignal, CliError> {
        Ok(nde_forcing_from_scenario(
            &dist, &steady, &d.config, &d.params, &d.maps, &d.weights, horizon, dt,
        )?)
    };
    analyze(gains, Some(&forcing), windows)
}

pub fn write_outputs(dir: &Path, outcome: &NdeOutcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["t", "z", "zdot", "forcing"]).map_err(err)?;
    let tr = &outcome.trace;
    for i in 0..tr.t.len() {
        w.write_record(
            [tr.t[i], tr.z[i], tr.zdot[i], tr.forcing[i]]
                .iter()
                .map(|x| format!("{x:e}")),
        )
        .map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&dir.join("nde.csv"), &bytes)?;
    let json = serde_json::to_vec_pretty(&outcome.report).map_err(|e| CliError::Io(e.to_string()))?;
    write_atomic(&dir.join("nde.json"), &json)
}
