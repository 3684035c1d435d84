//! Gain design and kernel export.

use std::path::Path;

use hyperreg_core::kernels::{
    realizability_factor, solve_control_kernels, solve_integral_weights, solve_inverse_kernels, solve_observer_kernels,
    write_fields_csv, TriangularField,
};
use hyperreg_core::model::SystemParams;
use hyperreg_core::nde::{ki_for_margin, StabilityReport};
use hyperreg_core::Error;
use serde::Serialize;

use crate::error::CliError;
use crate::output::write_atomic;
use crate::run::design;
use crate::scenario::{Scenario, Tunable};

#[derive(Debug, Clone, Serialize)]
pub struct GainReport {
    pub k_i: f64,
    pub k1: f64,
    pub k2: f64,
    pub tau: f64,
    pub margin: f64,
    pub boundary_factor: f64,
    pub partial_cancellation: f64,
    pub stability: StabilityReport,
}

#[derive(Debug, Clone, Copy)]
pub struct GainInputs {
    pub q: f64,
    pub rho: f64,
    pub rho_tilde: f64,
    pub tau: f64,
    pub margin: f64,
    pub boundary_factor: f64,
}

/// Integral gain from reduced data, after checking partial cancellation.
pub fn gain_from_inputs(g: GainInputs) -> Result<GainReport, CliError> {
    let partial = (g.rho * g.q).abs() + (g.rho_tilde * g.q).abs();
    if !(partial < 1.0) {
        return Err(Error::Configuration(format!("|rho q| + |rho_tilde q| = {partial} must be < 1")).into());
    }
    let k1 = (g.rho - g.rho_tilde) * g.q;
    let (k_i, stability) = ki_for_margin(k1, g.q, g.boundary_factor, g.tau, g.margin)?;
    Ok(GainReport {
        k_i,
        k1,
        k2: stability.k2,
        tau: g.tau,
        margin: g.margin,
        boundary_factor: g.boundary_factor,
        partial_cancellation: partial,
        stability,
    })
}

/// Gain for a scenario, ignoring any fixed `k_i` it carries.
pub fn gain_from_scenario(s: &Scenario) -> Result<GainReport, CliError> {
    let mut s = s.clone();
    s.controller.k_i = Tunable::Auto;
    let params = s.params()?;
    let partial = (params.rho * params.q).abs() + (s.controller.rho_tilde * params.q).abs();
    let d = design(&s, params)?;
    Ok(GainReport {
        k_i: d.config.k_i,
        k1: d.stability.k1,
        k2: d.stability.k2,
        tau: d.maps.tau,
        margin: s.controller.margin,
        boundary_factor: d.weights.boundary_factor,
        partial_cancellation: partial,
        stability: d.stability,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceCheck {
    pub n_cells: [usize; 3],
    pub diff_coarse: f64,
    pub diff_fine: f64,
    pub ratio: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub n_cells: usize,
    pub boundary_factor: f64,
    pub realizability_factor: f64,
    pub sup: Vec<(String, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceCheck>,
}

pub const CONVERGENCE_RATIO: f64 = 0.75;

fn with_cells(s: &Scenario, n: usize) -> Result<SystemParams, CliError> {
    let mut s = s.clone();
    s.grid.n_cells = n;
    s.params()
}

fn all_fields(p: &SystemParams) -> Result<Vec<(&'static str, TriangularField)>, CliError> {
    let k = solve_control_kernels(p)?;
    let l = solve_inverse_kernels(&k, &p.grid)?;
    let o = solve_observer_kernels(p)?;
    let mut out: Vec<(&'static str, TriangularField)> = Vec::new();
    out.extend(k.fields().into_iter().map(|(n, f)| (n, f.clone())));
    out.extend(l.fields().into_iter().map(|(n, f)| (n, f.clone())));
    out.extend(o.fields().into_iter().map(|(n, f)| (n, f.clone())));
    Ok(out)
}

fn max_diff(a: &[(&str, TriangularField)], b: &[(&str, TriangularField)]) -> Result<f64, CliError> {
    let mut worst: f64 = 0.0;
    for ((_, x), (_, y)) in a.iter().zip(b) {
        worst = worst.max(x.max_diff_coarse(y)?);
    }
    Ok(worst)
}

/// Writes control, inverse and observer kernels plus the integral weights
/// as CSV under `dir`, optionally checking first-order convergence.
pub fn kernels(s: &Scenario, dir: Option<&Path>, check: bool) -> Result<KernelReport, CliError> {
    let p = s.params()?;
    let k = solve_control_kernels(&p)?;
    let l = solve_inverse_kernels(&k, &p.grid)?;
    let w = solve_integral_weights(&l, &p)?;
    let o = solve_observer_kernels(&p)?;
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        for (name, fields) in [
            ("control", k.fields()),
            ("inverse", l.fields()),
            ("observer", o.fields()),
        ] {
            let mut buf = Vec::new();
            write_fields_csv(&mut buf, &p.grid, &fields)?;
            write_atomic(&dir.join(format!("{name}.csv")), &buf)?;
        }
        let mut wr = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Io(e.to_string());
        wr.write_record(["x", "l1", "l2"]).map_err(err)?;
        for i in 0..p.grid.len() {
            wr.write_record([p.grid.x(i), w.l1[i], w.l2[i]].iter().map(|x| x.to_string()))
                .map_err(err)?;
        }
        write_atomic(
            &dir.join("weights.csv"),
            &wr.into_inner().map_err(|e| CliError::Io(e.to_string()))?,
        )?;
    }
    let sup = k
        .fields()
        .into_iter()
        .chain(l.fields())
        .chain(o.fields())
        .map(|(n, f)| (n.to_string(), f.sup_norm()))
        .collect();
    let convergence = if check {
        let n = p.grid.n_cells();
        let f: Vec<_> = [n, 2 * n, 4 * n]
            .iter()
            .map(|&m| with_cells(s, m).and_then(|p| all_fields(&p)))
            .collect::<Result<_, _>>()?;
        let (d1, d2) = (max_diff(&f[0], &f[1])?, max_diff(&f[1], &f[2])?);
        let ratio = if d1 > 0.0 { d2 / d1 } else { 0.0 };
        Some(ConvergenceCheck {
            n_cells: [n, 2 * n, 4 * n],
            diff_coarse: d1,
            diff_fine: d2,
            ratio,
            passed: ratio < CONVERGENCE_RATIO,
        })
    } else {
        None
    };
    Ok(KernelReport {
        n_cells: p.grid.n_cells(),
        boundary_factor: w.boundary_factor,
        realizability_factor: realizability_factor(&l, p.q),
        sup,
        convergence,
    })
}
