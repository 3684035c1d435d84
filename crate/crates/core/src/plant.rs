//! Time stepping of the disturbed plant
//!
//! ```text
//! u_t + λ(x)u_x = γ1(x)v + d1(t)m1(x)      u(t,0) = q v(t,0) + d3(t)
//! v_t − μ(x)v_x = γ2(x)u + d2(t)m2(x)      v(t,1) = ρ u(t,1) + U(t) + d4(t)
//! ```
//!
//! and the trace log written by closed-loop runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DisturbanceSet, SystemParams, TimeSignal};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn zeros(len: usize) -> Self {
        Self {
            u: vec![0.0; len],
            v: vec![0.0; len],
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// First-order upwind, any coefficients.
    #[default]
    Upwind,
    /// Linear interpolation at the foot of the characteristic; constant
    /// coefficients only.
    Characteristics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    #[serde(default)]
    pub scheme: Scheme,
}

impl SimConfig {
    /// Time step from a Courant number: `dt = cfl·h / max(λ, μ)`.
    pub fn from_cfl(params: &SystemParams, cfl: f64, horizon: f64) -> Self {
        Self {
            dt: cfl * params.grid.h() / params.max_speed(),
            horizon,
            scheme: Scheme::Upwind,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Checks `dt·max(λ, μ)/h ≤ 1`.
pub fn check_cfl(params: &SystemParams, dt: f64) -> Result<()> {
    let c = dt * params.max_speed() / params.grid.h();
    if !(dt > 0.0) || c > 1.0 + 1e-12 {
        return Err(Error::Configuration(format!("CFL number {c:.6} exceeds 1 (dt = {dt})")));
    }
    Ok(())
}

/// One transport step of `w_t + s(x) w_x = src` (rightward when
/// `rightward`, leftward otherwise), excluding the inflow node.
#[inline]
pub(crate) fn transport(
    w: &[f64],
    speed: &[f64],
    src: impl Fn(usize) -> f64,
    dt: f64,
    h: f64,
    rightward: bool,
    out: &mut [f64],
) {
    let n = w.len() - 1;
    let r = dt / h;
    if rightward {
        for i in 1..=n {
            let c = speed[i] * r;
            let adv = if c == 1.0 {
                w[i - 1]
            } else {
                w[i] - c * (w[i] - w[i - 1])
            };
            out[i] = adv + dt * src(i);
        }
    } else {
        for i in 0..n {
            let c = speed[i] * r;
            let adv = if c == 1.0 {
                w[i + 1]
            } else {
                w[i] + c * (w[i + 1] - w[i])
            };
            out[i] = adv + dt * src(i);
        }
    }
}

/// Advances the plant by one upwind step with explicit sources. `d3` and
/// `d4` in the boundary conditions are taken at the new time level.
pub fn step_plant(
    state: &FieldState,
    params: &SystemParams,
    dist: &DisturbanceSet,
    control: f64,
    dt: f64,
) -> Result<FieldState> {
    check_cfl(params, dt)?;
    let mut next = FieldState::zeros(state.u.len());
    advance(state, params, dist, control, dt, &mut next);
    if !next.is_finite() {
        return Err(Error::Divergence {
            last_valid_time: state.t,
        });
    }
    Ok(next)
}

/// Same update as [`step_plant`] without checks or allocation.
pub(crate) fn advance(
    state: &FieldState,
    params: &SystemParams,
    dist: &DisturbanceSet,
    control: f64,
    dt: f64,
    next: &mut FieldState,
) {
    let h = params.grid.h();
    let n = params.grid.n_cells();
    let t = state.t;
    let (d1, d2) = (dist.d1.value(t), dist.d2.value(t));
    let (u, v) = (&state.u, &state.v);
    transport(
        u,
        &params.lambda,
        |i| params.gamma1[i] * v[i] + d1 * dist.m1[i],
        dt,
        h,
        true,
        &mut next.u,
    );
    transport(
        v,
        &params.mu,
        |i| params.gamma2[i] * u[i] + d2 * dist.m2[i],
        dt,
        h,
        false,
        &mut next.v,
    );
    let t1 = t + dt;
    next.t = t1;
    next.u[0] = params.q * next.v[0] + dist.d3.value(t1);
    next.v[n] = params.rho * next.u[n] + control + dist.d4.value(t1);
}

/// Constant-coefficient step interpolating at the foot of each
/// characteristic.
pub fn step_characteristics(
    state: &FieldState,
    params: &SystemParams,
    dist: &DisturbanceSet,
    control: f64,
    dt: f64,
) -> Result<FieldState> {
    if !params.is_constant_coefficient() {
        return Err(Error::Configuration(
            "the characteristics scheme needs constant coefficients".into(),
        ));
    }
    check_cfl(params, dt)?;
    let h = params.grid.h();
    let n = params.grid.n_cells();
    let cu = params.lambda[0] * dt / h;
    let cv = params.mu[0] * dt / h;
    let t = state.t;
    let (d1, d2) = (dist.d1.value(t), dist.d2.value(t));
    let (u, v) = (&state.u, &state.v);
    let mut next = FieldState::zeros(n + 1);
    for i in 1..=n {
        let foot = if cu == 1.0 {
            u[i - 1]
        } else {
            (1.0 - cu) * u[i] + cu * u[i - 1]
        };
        next.u[i] = foot + dt * (params.gamma1[i] * v[i] + d1 * dist.m1[i]);
    }
    for i in 0..n {
        let foot = if cv == 1.0 {
            v[i + 1]
        } else {
            (1.0 - cv) * v[i] + cv * v[i + 1]
        };
        next.v[i] = foot + dt * (params.gamma2[i] * u[i] + d2 * dist.m2[i]);
    }
    next.t = t + dt;
    next.u[0] = params.q * next.v[0] + dist.d3.value(next.t);
    next.v[n] = params.rho * next.u[n] + control + dist.d4.value(next.t);
    if !next.is_finite() {
        return Err(Error::Divergence { last_valid_time: t });
    }
    Ok(next)
}

/// `y_m(t) = u(t,1) + n(t)`.
pub fn measure(state: &FieldState, noise: &TimeSignal, t: f64) -> f64 {
    state.u[state.u.len() - 1] + noise.value(t)
}

/// One logged sample of a closed-loop run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    /// Regulated output `u(t,1)`.
    pub y: f64,
    pub y_m: f64,
    pub control: f64,
    pub eta: f64,
    /// `max_x max(|u|, |v|)`.
    pub norm: f64,
    /// `max_x max(|u − û|, |v − v̂|)`; zero in state feedback.
    pub obs_err: f64,
    /// Transformed boundary error `α(t,1) − α^ss(t,1)`.
    pub alpha_bar_1: f64,
}

/// Uniformly sampled closed-loop traces.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraceLog {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

impl TraceLog {
    pub fn new(dt: f64) -> Self {
        Self { dt, rows: Vec::new() }
    }

    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, f: impl Fn(&TraceRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    /// `max |f|` over rows with `t ∈ [from, to]`.
    pub fn sup_between(&self, from: f64, to: f64, f: impl Fn(&TraceRow) -> f64) -> f64 {
        let eps = 1e-9 * self.dt.max(1.0);
        self.rows
            .iter()
            .filter(|r| r.t >= from - eps && r.t <= to + eps)
            .map(|r| f(r).abs())
            .fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let err = |e: csv::Error| Error::Parameter(format!("trace export failed: {e}"));
        w.write_record(["t", "y", "y_m", "U", "eta", "norm", "obs_err", "alpha_bar_1"])
            .map_err(err)?;
        for r in &self.rows {
            w.write_record(
                [r.t, r.y, r.y_m, r.control, r.eta, r.norm, r.obs_err, r.alpha_bar_1]
                    .iter()
                    .map(|x| format!("{x:e}")),
            )
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Parameter(format!("trace export failed: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_transport_maps, SpatialGrid};

    fn plain(n: usize, rho: f64) -> SystemParams {
        let g = SpatialGrid::new(n).unwrap();
        SystemParams::constant(&g, 1.0, 1.0, 0.0, 0.0, 1.0, rho)
    }

    #[test]
    fn zero_state_stays_zero() {
        let p = SystemParams::constant(&SpatialGrid::new(20).unwrap(), 1.0, 2.0, 0.5, 0.5, 0.8, 0.3);
        let d = DisturbanceSet::none(&p.grid);
        let mut s = FieldState::zeros(21);
        for _ in 0..100 {
            s = step_plant(&s, &p, &d, 0.0, 0.02).unwrap();
        }
        assert!(s.u.iter().chain(&s.v).all(|&x| x == 0.0));
    }

    #[test]
    fn boundary_pulse_is_transported() {
        let p = SystemParams::constant(&SpatialGrid::new(100).unwrap(), 2.0, 1.0, 0.0, 0.0, 1.0, 0.0);
        let tau1 = build_transport_maps(&p).unwrap().tau1;
        let mut d = DisturbanceSet::none(&p.grid);
        d.d3 = TimeSignal::Table {
            times: vec![0.0, 0.05, 0.1, 0.15],
            values: vec![0.0, 1.0, 1.0, 0.0],
        };
        let dt = p.grid.h() / 2.0;
        let mut s = FieldState::zeros(101);
        let mut out = Vec::new();
        for _ in 0..200 {
            s = step_plant(&s, &p, &d, 0.0, dt).unwrap();
            out.push((s.t, s.u[100]));
        }
        let (t_peak, peak) = out
            .iter()
            .copied()
            .fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert!((peak - 1.0).abs() < 1e-12);
        assert!(t_peak >= tau1 + 0.05 - 1e-9 && t_peak <= tau1 + 0.1 + 1e-9, "{t_peak}");
        assert!(out.iter().all(|&(t, y)| t >= tau1 - 1e-9 || y == 0.0));
    }

    #[test]
    fn unit_cfl_upwind_matches_characteristics_bitwise() {
        let p = plain(50, 0.4);
        let mut d = DisturbanceSet::none(&p.grid);
        d.d3 = TimeSignal::sinusoid(1.0, 3.0, 0.2);
        d.d4 = TimeSignal::constant(0.1);
        let dt = p.grid.h();
        let mut a = FieldState {
            u: p.grid.sample(|x| (5.0 * x).sin()),
            v: p.grid.sample(|x| x * x),
            t: 0.0,
        };
        let mut b = a.clone();
        for k in 0..300 {
            let ctrl = (k as f64 * 0.01).cos();
            a = step_plant(&a, &p, &d, ctrl, dt).unwrap();
            b = step_characteristics(&b, &p, &d, ctrl, dt).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let p = plain(10, 0.0);
        let d = DisturbanceSet::none(&p.grid);
        let s = FieldState::zeros(11);
        assert!(matches!(
            step_plant(&s, &p, &d, 0.0, 0.11),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn blow_up_reports_last_valid_time() {
        let p = plain(10, 2.0);
        let d = DisturbanceSet::none(&p.grid);
        let s = FieldState {
            u: vec![f64::MAX; 11],
            v: vec![f64::MAX; 11],
            t: 1.5,
        };
        match step_plant(&s, &p, &d, f64::MAX, 0.05) {
            Err(Error::Divergence { last_valid_time }) => assert_eq!(last_valid_time, 1.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn measurement() {
        let mut s = FieldState::zeros(5);
        s.u[4] = 2.0;
        assert_eq!(measure(&s, &TimeSignal::Zero, 0.0), 2.0);
        s.u[4] = 0.0;
        assert_eq!(measure(&s, &TimeSignal::constant(0.1), 0.0), 0.1);
        let noise = TimeSignal::UniformNoise {
            amplitude: 0.1,
            seed: 3,
            interval: 0.05,
        };
        let a: Vec<f64> = (0..50).map(|k| measure(&s, &noise, k as f64 * 0.013)).collect();
        let b: Vec<f64> = (0..50).map(|k| measure(&s, &noise, k as f64 * 0.013)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn open_loop_growth_is_not_clamped() {
        let p = SystemParams::constant(&SpatialGrid::new(40).unwrap(), 1.0, 1.0, 1.5, 1.5, 0.99, 0.99);
        let d = DisturbanceSet::none(&p.grid);
        let mut s = FieldState {
            u: vec![0.1; 41],
            v: vec![0.1; 41],
            t: 0.0,
        };
        let n0 = crate::model::sup_norm2(&s.u, &s.v);
        for _ in 0..2000 {
            s = step_plant(&s, &p, &d, 0.0, 0.025).unwrap();
        }
        assert!(crate::model::sup_norm2(&s.u, &s.v) > 10.0 * n0);
    }
}
