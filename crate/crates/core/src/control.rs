//! Integral-action backstepping control laws and the integrator state.
//!
//! [`state_feedback_ubs`] and [`output_feedback_ubs`] evaluate the laws
//! directly and serve as references. Both laws are linear functionals of
//! the fields, so a [`FeedbackLaw`] stores them as gain vectors for the
//! per-step evaluation inside the simulation loop.

use serde::{Deserialize, Serialize};

use crate::kernels::{apply_transform, IntegralWeights, InverseKernelSet, KernelSet};
use crate::model::{trapezoid, ControlConfig, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    StateFeedback,
    OutputFeedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerState {
    pub eta: f64,
    /// Measurement at the previous step, for the trapezoidal update.
    pub y_prev: f64,
    pub mode: Mode,
}

impl ControllerState {
    pub fn new(mode: Mode, y0: f64) -> Self {
        Self {
            eta: 0.0,
            y_prev: y0,
            mode,
        }
    }
}

/// `η += dt (y_prev + y_m)/2`.
pub fn integrator_step(state: ControllerState, y_m: f64, dt: f64) -> ControllerState {
    ControllerState {
        eta: state.eta + 0.5 * dt * (state.y_prev + y_m),
        y_prev: y_m,
        mode: state.mode,
    }
}

pub fn total_control(ubs: f64, eta: f64, k_i: f64) -> f64 {
    ubs + k_i * eta
}

fn dot(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// State feedback in transformed variables:
///
/// ```text
/// U_BS = −ρ̃ α(1) − ρ ∫(Laa(1,·)α + Lab(1,·)β) + ∫(Lba(1,·)α + Lbb(1,·)β)
///        − k_I ∫(l1 α + l2 β)
/// ```
pub fn state_feedback_ubs(
    u: &[f64],
    v: &[f64],
    kernels: &KernelSet,
    lset: &InverseKernelSet,
    weights: &IntegralWeights,
    params: &SystemParams,
    config: &ControlConfig,
) -> f64 {
    let n = params.grid.n_cells();
    let h = params.grid.h();
    let (a, b) = apply_transform(u, v, kernels);
    let row = |f: &crate::kernels::TriangularField, w: &[f64]| trapezoid(&dot(f.row(n), w), h);
    -config.rho_tilde * a[n] - params.rho * (row(&lset.laa, &a) + row(&lset.lab, &b))
        + row(&lset.lba, &a)
        + row(&lset.lbb, &b)
        - config.k_i * (trapezoid(&dot(&weights.l1, &a), h) + trapezoid(&dot(&weights.l2, &b), h))
}

/// Output feedback on the observer state:
///
/// ```text
/// U_BS = −ρ̃(1−ε) û(1) − ρ̃ ε y_m − (ρ−ρ̃) ∫(Kuu(1,·)û + Kuv(1,·)v̂)
///        + ∫(Kvu(1,·)û + Kvv(1,·)v̂) − k_I ∫(l1 Γ1[û,v̂] + l2 Γ2[û,v̂])
/// ```
pub fn output_feedback_ubs(
    uhat: &[f64],
    vhat: &[f64],
    y_m: f64,
    kernels: &KernelSet,
    weights: &IntegralWeights,
    params: &SystemParams,
    config: &ControlConfig,
) -> f64 {
    let n = params.grid.n_cells();
    let h = params.grid.h();
    let eps = config.epsilon;
    let rt = config.rho_tilde;
    let row = |f: &crate::kernels::TriangularField, w: &[f64]| trapezoid(&dot(f.row(n), w), h);
    let (g1, g2) = apply_transform(uhat, vhat, kernels);
    -rt * (1.0 - eps) * uhat[n]
        - rt * eps * y_m
        - (params.rho - rt) * (row(&kernels.kuu, uhat) + row(&kernels.kuv, vhat))
        + row(&kernels.kvu, uhat)
        + row(&kernels.kvv, vhat)
        - config.k_i * (trapezoid(&dot(&weights.l1, &g1), h) + trapezoid(&dot(&weights.l2, &g2), h))
}

/// `U_BS = ⟨gu, u⟩ + ⟨gv, v⟩ + gy·y_m` as plain sums over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub mode: Mode,
    pub gu: Vec<f64>,
    pub gv: Vec<f64>,
    pub gy: f64,
}

impl FeedbackLaw {
    /// Gains obtained by probing `law` with unit vectors.
    fn probe(mode: Mode, n: usize, law: impl Fn(&[f64], &[f64], f64) -> f64) -> Self {
        let zero = vec![0.0; n + 1];
        let mut e = zero.clone();
        let mut gu = vec![0.0; n + 1];
        let mut gv = vec![0.0; n + 1];
        for i in 0..=n {
            e[i] = 1.0;
            gu[i] = law(&e, &zero, 0.0);
            gv[i] = law(&zero, &e, 0.0);
            e[i] = 0.0;
        }
        let gy = law(&zero, &zero, 1.0);
        Self { mode, gu, gv, gy }
    }

    pub fn state(
        kernels: &KernelSet,
        lset: &InverseKernelSet,
        weights: &IntegralWeights,
        params: &SystemParams,
        config: &ControlConfig,
    ) -> Self {
        Self::probe(Mode::StateFeedback, params.grid.n_cells(), |u, v, _| {
            state_feedback_ubs(u, v, kernels, lset, weights, params, config)
        })
    }

    pub fn output(
        kernels: &KernelSet,
        weights: &IntegralWeights,
        params: &SystemParams,
        config: &ControlConfig,
    ) -> Self {
        Self::probe(Mode::OutputFeedback, params.grid.n_cells(), |u, v, y| {
            output_feedback_ubs(u, v, y, kernels, weights, params, config)
        })
    }

    pub fn eval(&self, u: &[f64], v: &[f64], y_m: f64) -> f64 {
        let su: f64 = self.gu.iter().zip(u).map(|(g, x)| g * x).sum();
        let sv: f64 = self.gv.iter().zip(v).map(|(g, x)| g * x).sum();
        su + sv + self.gy * y_m
    }
}
