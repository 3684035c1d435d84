//! Disturbance-parameterized pseudo-steady state of the target system and
//! the error variables built on it.
//!
//! Everything here is linear in `(d1, d2, d3, d4)`. [`SteadyMap`] stores
//! the response to each unit disturbance once, so values and time
//! derivatives at any `t` are weighted sums driven by the analytic
//! derivatives of the disturbance signals.

use crate::error::{Error, Result};
use crate::kernels::{IntegralWeights, InverseKernelSet, KernelSet};
use crate::model::{cumulative_trapezoid, trapezoid, ControlConfig, DisturbanceSet, SystemParams};

/// Target-system forcings `D1M1`, `D2M2` and their first two time
/// derivatives at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingProfiles {
    pub d1m1: [Vec<f64>; 3],
    pub d2m2: [Vec<f64>; 3],
}

/// Forcing shapes per unit `d1`, `d2`, `d3`:
///
/// ```text
/// D1M1 = d1(m1 − ∫Kuu m1) − d2 ∫Kuv m2 − d3 Kuu(x,0)λ(0)
/// D2M2 = −d1 ∫Kvu m1 + d2(m2 − ∫Kvv m2) − d3 Kvu(x,0)λ(0)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingBasis {
    pub d1m1: [Vec<f64>; 3],
    pub d2m2: [Vec<f64>; 3],
}

impl ForcingBasis {
    pub fn new(kernels: &KernelSet, params: &SystemParams, m1: &[f64], m2: &[f64]) -> Self {
        let n = params.grid.n_cells();
        let h = params.grid.h();
        let l0 = params.lambda[0];
        let int = |k: &crate::kernels::TriangularField, m: &[f64]| -> Vec<f64> {
            (0..=n).map(|i| trapezoid(&weighted(k.row(i), m), h)).collect()
        };
        let kuu_m1 = int(&kernels.kuu, m1);
        let kuv_m2 = int(&kernels.kuv, m2);
        let kvu_m1 = int(&kernels.kvu, m1);
        let kvv_m2 = int(&kernels.kvv, m2);
        Self {
            d1m1: [
                (0..=n).map(|i| m1[i] - kuu_m1[i]).collect(),
                kuv_m2.iter().map(|x| -x).collect(),
                (0..=n).map(|i| -kernels.kuu.get(i, 0) * l0).collect(),
            ],
            d2m2: [
                kvu_m1.iter().map(|x| -x).collect(),
                (0..=n).map(|i| m2[i] - kvv_m2[i]).collect(),
                (0..=n).map(|i| -kernels.kvu.get(i, 0) * l0).collect(),
            ],
        }
    }
}

fn weighted(k: &[f64], m: &[f64]) -> Vec<f64> {
    k.iter().zip(m).map(|(a, b)| a * b).collect()
}

fn combine(basis: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (b, &c) in basis.iter().zip(w) {
        if c != 0.0 {
            for (o, x) in out.iter_mut().zip(b) {
                *o += c * x;
            }
        }
    }
    out
}

/// `k`-th time derivatives of `(d1, d2, d3, d4)` at `t`.
pub fn disturbance_derivatives(dist: &DisturbanceSet, t: f64, order: u32) -> Result<[f64; 4]> {
    let d = dist.d();
    Ok([
        d[0].derivative(t, order)?,
        d[1].derivative(t, order)?,
        d[2].derivative(t, order)?,
        d[3].derivative(t, order)?,
    ])
}

pub fn forcing_profiles(
    dist: &DisturbanceSet,
    kernels: &KernelSet,
    params: &SystemParams,
    t: f64,
) -> Result<ForcingProfiles> {
    let basis = ForcingBasis::new(kernels, params, &dist.m1, &dist.m2);
    let mut d1m1: [Vec<f64>; 3] = Default::default();
    let mut d2m2: [Vec<f64>; 3] = Default::default();
    for order in 0..3u32 {
        let w = disturbance_derivatives(dist, t, order)?;
        d1m1[order as usize] = combine(&basis.d1m1, &w[..3]);
        d2m2[order as usize] = combine(&basis.d2m2, &w[..3]);
    }
    Ok(ForcingProfiles { d1m1, d2m2 })
}

/// Response of the pseudo-steady state to one unit disturbance.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitResponse {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `∫₀¹ (l1 α + l2 β)`.
    pub weighted_integral: f64,
}

/// Unit responses to `d1..d4`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyMap {
    pub responses: [UnitResponse; 4],
    pub det_a1: f64,
}

/// Threshold on `|det A1|` below which the steady state is rejected.
pub const DET_A1_THRESHOLD: f64 = 1e-10;

impl SteadyMap {
    pub fn new(
        params: &SystemParams,
        kernels: &KernelSet,
        lset: &InverseKernelSet,
        weights: &IntegralWeights,
        m1: &[f64],
        m2: &[f64],
    ) -> Result<Self> {
        let n = params.grid.n_cells();
        let h = params.grid.h();
        let q = params.q;
        let laa = lset.laa.row(n);
        let lab = lset.lab.row(n);
        let a11 = 1.0 + trapezoid(laa, h);
        let a12 = trapezoid(lab, h);
        let det = a11 + a12 / q;
        if det.abs() < DET_A1_THRESHOLD {
            return Err(Error::Configuration(format!(
                "pseudo-steady state is not unique: det A1 = {det:.3e}"
            )));
        }
        let basis = ForcingBasis::new(kernels, params, m1, m2);
        let zero = vec![0.0; n + 1];
        let mut out: Vec<UnitResponse> = Vec::with_capacity(4);
        for k in 0..4 {
            let (f1, f2) = if k < 3 {
                (&basis.d1m1[k], &basis.d2m2[k])
            } else {
                (&zero, &zero)
            };
            let d3 = if k == 2 { 1.0 } else { 0.0 };
            let g1: Vec<f64> = (0..=n).map(|i| f1[i] / params.lambda[i]).collect();
            let g2: Vec<f64> = (0..=n).map(|i| f2[i] / params.mu[i]).collect();
            let c1 = cumulative_trapezoid(&g1, h);
            let c2 = cumulative_trapezoid(&g2, h);
            // A(x) = ∫ₓ¹ D1M1/λ, B(x) = ∫₀ˣ D2M2/μ
            let big_a: Vec<f64> = c1.iter().map(|c| c1[n] - c).collect();
            let big_b = c2;
            let b1 = trapezoid(&weighted(laa, &big_a), h) + trapezoid(&weighted(lab, &big_b), h);
            let b2 = -d3 / q - c1[n] / q;
            // [[a11, a12], [−1/q, 1]] a = b
            let a1 = (b1 - a12 * b2) / det;
            let a2 = b2 + a1 / q;
            let alpha: Vec<f64> = big_a.iter().map(|x| a1 - x).collect();
            let beta: Vec<f64> = big_b.iter().map(|x| a2 - x).collect();
            let weighted_integral =
                trapezoid(&weighted(&weights.l1, &alpha), h) + trapezoid(&weighted(&weights.l2, &beta), h);
            out.push(UnitResponse {
                alpha,
                beta,
                weighted_integral,
            });
        }
        let responses: [UnitResponse; 4] = out.try_into().map_err(|_| Error::Parameter("unit responses".into()))?;
        Ok(Self { responses, det_a1: det })
    }

    /// `order`-th time derivative of the pseudo-steady state at `t`.
    pub fn profile(
        &self,
        dist: &DisturbanceSet,
        config: &ControlConfig,
        rho: f64,
        t: f64,
        order: u32,
    ) -> Result<SteadyProfile> {
        let w = disturbance_derivatives(dist, t, order)?;
        Ok(self.profile_from_weights(&w, config, rho))
    }

    /// Steady profile for explicit disturbance weights.
    pub fn profile_from_weights(&self, w: &[f64; 4], config: &ControlConfig, rho: f64) -> SteadyProfile {
        let alphas: Vec<Vec<f64>> = self.responses.iter().map(|r| r.alpha.clone()).collect();
        let betas: Vec<Vec<f64>> = self.responses.iter().map(|r| r.beta.clone()).collect();
        let alpha = combine(&alphas, w);
        let beta = combine(&betas, w);
        let n = alpha.len() - 1;
        let eta = if config.k_i == 0.0 {
            None
        } else {
            let int: f64 = self.responses.iter().zip(w).map(|(r, c)| c * r.weighted_integral).sum();
            Some((beta[n] - (rho - config.rho_tilde) * alpha[n] - w[3]) / config.k_i + int)
        };
        SteadyProfile { alpha, beta, eta }
    }

    /// `α^ss(t,1)` and its derivative of the given order.
    pub fn alpha_at_one(&self, dist: &DisturbanceSet, t: f64, order: u32) -> Result<f64> {
        let w = disturbance_derivatives(dist, t, order)?;
        let n = self.responses[0].alpha.len() - 1;
        Ok(self.responses.iter().zip(w).map(|(r, c)| c * r.alpha[n]).sum())
    }
}

/// One time derivative (or the value) of the pseudo-steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyProfile {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Undefined without integral action (`k_I = 0`).
    pub eta: Option<f64>,
}

/// Pseudo-steady state at `t` with its first and second time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub value: SteadyProfile,
    pub rate: SteadyProfile,
    pub accel: SteadyProfile,
}

/// Builds the steady map and evaluates it at `t`. Fails when a disturbance
/// lacks the two time derivatives.
#[allow(clippy::too_many_arguments)]
pub fn solve_pseudo_steady(
    params: &SystemParams,
    kernels: &KernelSet,
    lset: &InverseKernelSet,
    weights: &IntegralWeights,
    dist: &DisturbanceSet,
    config: &ControlConfig,
    t: f64,
) -> Result<SteadyState> {
    let map = SteadyMap::new(params, kernels, lset, weights, &dist.m1, &dist.m2)?;
    Ok(SteadyState {
        value: map.profile(dist, config, params.rho, t, 0)?,
        rate: map.profile(dist, config, params.rho, t, 1)?,
        accel: map.profile(dist, config, params.rho, t, 2)?,
    })
}

/// Deviation from the pseudo-steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub alpha_bar: Vec<f64>,
    pub beta_bar: Vec<f64>,
    pub eta_bar: Option<f64>,
    /// `η̄ − ∫₀¹ (l1 ᾱ + l2 β̄)`.
    pub gamma: Option<f64>,
}

pub fn error_variables(
    alpha: &[f64],
    beta: &[f64],
    eta: f64,
    ss: &SteadyProfile,
    weights: &IntegralWeights,
) -> ErrorState {
    let n = alpha.len() - 1;
    let h = 1.0 / n as f64;
    let alpha_bar: Vec<f64> = alpha.iter().zip(&ss.alpha).map(|(a, b)| a - b).collect();
    let beta_bar: Vec<f64> = beta.iter().zip(&ss.beta).map(|(a, b)| a - b).collect();
    let eta_bar = ss.eta.map(|e| eta - e);
    let int = trapezoid(&weighted(&weights.l1, &alpha_bar), h) + trapezoid(&weighted(&weights.l2, &beta_bar), h);
    ErrorState {
        gamma: eta_bar.map(|e| e - int),
        alpha_bar,
        beta_bar,
        eta_bar,
    }
}

/// Residuals of the two steady boundary conditions,
/// `β(0) − (α(0) − d3)/q` and `α(1) + ∫Laa(1,·)α + ∫Lab(1,·)β`.
pub fn boundary_residuals(ss: &SteadyProfile, lset: &InverseKernelSet, q: f64, d3: f64) -> (f64, f64) {
    let n = ss.alpha.len() - 1;
    let h = 1.0 / n as f64;
    let r1 = ss.beta[0] - (ss.alpha[0] - d3) / q;
    let r2 = ss.alpha[n]
        + trapezoid(&weighted(lset.laa.row(n), &ss.alpha), h)
        + trapezoid(&weighted(lset.lab.row(n), &ss.beta), h);
    (r1, r2)
}
