//! ε-blended boundary observer
//!
//! ```text
//! û_t + λû_x = γ1 v̂ − P⁺(x)(û(t,1) − y_m)     û(t,0) = q v̂(t,0)
//! v̂_t − μv̂_x = γ2 û − P⁻(x)(û(t,1) − y_m)     v̂(t,1) = ρ(1−ε)û(t,1) + ρε y_m + U
//! ```
//!
//! together with the admissible range of ε, the forcing profiles of the
//! disturbed error system and its ISS envelope.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{ObserverKernelSet, TriangularField};
use crate::model::{SystemParams, TransportMaps};
use crate::plant::{check_cfl, transport};

/// Admissible observer blends `(lower, 1]` intersected with `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonInterval {
    /// Unclipped bound `1 − 1/|ρq|`; `−∞` when `ρ = 0`.
    pub raw_lower: f64,
    pub lower: f64,
    /// Whether `lower` itself is admissible.
    pub lower_closed: bool,
}

impl EpsilonInterval {
    pub fn contains(&self, eps: f64) -> bool {
        eps <= 1.0 && (eps > self.lower || (self.lower_closed && eps == self.lower))
    }

    /// Default blend: midpoint of the admissible interval.
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + 1.0)
    }
}

impl fmt::Display for EpsilonInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed { '[' } else { '(' };
        write!(f, "{open}{}, 1]", self.lower)
    }
}

/// `1 − 1/|ρq| < ε ≤ 1`, clipped to `[0, 1]`.
pub fn epsilon_interval(params: &SystemParams) -> EpsilonInterval {
    let rq = (params.rho * params.q).abs();
    if rq == 0.0 {
        return EpsilonInterval {
            raw_lower: f64::NEG_INFINITY,
            lower: 0.0,
            lower_closed: true,
        };
    }
    let raw = 1.0 - 1.0 / rq;
    if raw < 0.0 {
        EpsilonInterval {
            raw_lower: raw,
            lower: 0.0,
            lower_closed: true,
        }
    } else {
        EpsilonInterval {
            raw_lower: raw,
            lower: raw,
            lower_closed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub uhat: Vec<f64>,
    pub vhat: Vec<f64>,
    pub t: f64,
}

/// Advances the observer by one upwind step. The injection uses the
/// measurement `y_m` at the current time level; the boundary blend uses
/// `y_m_next` at the new one, so the estimation error obeys exactly the
/// same discrete boundary law as the plant.
pub fn step_observer(
    state: &ObserverState,
    y_m: f64,
    y_m_next: f64,
    control: f64,
    okernels: &ObserverKernelSet,
    params: &SystemParams,
    dt: f64,
) -> Result<ObserverState> {
    check_cfl(params, dt)?;
    let n = params.grid.n_cells();
    let mut next = ObserverState {
        uhat: vec![0.0; n + 1],
        vhat: vec![0.0; n + 1],
        t: state.t + dt,
    };
    advance_observer(state, y_m, y_m_next, control, okernels, params, dt, &mut next);
    if next.uhat.iter().chain(&next.vhat).any(|x| !x.is_finite()) {
        return Err(Error::Divergence {
            last_valid_time: state.t,
        });
    }
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn advance_observer(
    state: &ObserverState,
    y_m: f64,
    y_m_next: f64,
    control: f64,
    okernels: &ObserverKernelSet,
    params: &SystemParams,
    dt: f64,
    next: &mut ObserverState,
) {
    let n = params.grid.n_cells();
    let h = params.grid.h();
    let (u, v) = (&state.uhat, &state.vhat);
    let innov = u[n] - y_m;
    let (pp, pm) = (&okernels.pplus, &okernels.pminus);
    transport(
        u,
        &params.lambda,
        |i| params.gamma1[i] * v[i] - pp[i] * innov,
        dt,
        h,
        true,
        &mut next.uhat,
    );
    transport(
        v,
        &params.mu,
        |i| params.gamma2[i] * u[i] - pm[i] * innov,
        dt,
        h,
        false,
        &mut next.vhat,
    );
    let eps = okernels.epsilon;
    next.t = state.t + dt;
    next.uhat[0] = params.q * next.vhat[0];
    next.vhat[n] = params.rho * (1.0 - eps) * next.uhat[n] + params.rho * eps * y_m_next + control;
}

/// `∫_{x_i}^1 (a(x_i,ξ) f(ξ) + b(x_i,ξ) g(ξ)) dξ` on the upper triangle,
/// excluding the diagonal node.
#[inline]
fn upper_row_tail(a: &TriangularField, b: &TriangularField, f: &[f64], g: &[f64], i: usize, h: f64) -> f64 {
    let n = f.len() - 1;
    if i == n {
        return 0.0;
    }
    let (ra, rb) = (a.row(i), b.row(i));
    let m = ra.len() - 1;
    let mut acc = 0.5 * (ra[m] * f[n] + rb[m] * g[n]);
    for k in 1..m {
        acc += ra[k] * f[i + k] + rb[k] * g[i + k];
    }
    h * acc
}

/// Estimation error `(ũ, ṽ)` from target coordinates:
/// `ũ = α̃ − ∫ₓ¹(Puu α̃ + Puv β̃)`, `ṽ = β̃ − ∫ₓ¹(Pvu α̃ + Pvv β̃)`.
pub fn error_from_target(alpha: &[f64], beta: &[f64], ok: &ObserverKernelSet) -> (Vec<f64>, Vec<f64>) {
    let n = alpha.len() - 1;
    let h = 1.0 / n as f64;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    for i in 0..=n {
        let w = if i == n { 0.0 } else { 0.5 * h };
        u[i] = alpha[i]
            - upper_row_tail(&ok.puu, &ok.puv, alpha, beta, i, h)
            - w * (ok.puu.get(i, i) * alpha[i] + ok.puv.get(i, i) * beta[i]);
        v[i] = beta[i]
            - upper_row_tail(&ok.pvu, &ok.pvv, alpha, beta, i, h)
            - w * (ok.pvu.get(i, i) * alpha[i] + ok.pvv.get(i, i) * beta[i]);
    }
    (u, v)
}

/// Inverse of [`error_from_target`], marching from `x = 1` with a 2×2
/// solve for the diagonal term of the trapezoid rule.
pub fn target_from_error(u: &[f64], v: &[f64], ok: &ObserverKernelSet) -> (Vec<f64>, Vec<f64>) {
    let n = u.len() - 1;
    let h = 1.0 / n as f64;
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    for i in (0..=n).rev() {
        let ru = u[i] + upper_row_tail(&ok.puu, &ok.puv, &a, &b, i, h);
        let rv = v[i] + upper_row_tail(&ok.pvu, &ok.pvv, &a, &b, i, h);
        let w = if i == n { 0.0 } else { 0.5 * h };
        let m = [
            [1.0 - w * ok.puu.get(i, i), -w * ok.puv.get(i, i)],
            [-w * ok.pvu.get(i, i), 1.0 - w * ok.pvv.get(i, i)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        a[i] = (m[1][1] * ru - m[0][1] * rv) / det;
        b[i] = (m[0][0] * rv - m[1][0] * ru) / det;
    }
    (a, b)
}

/// Forcing profiles of the disturbed error system in target coordinates,
/// one `(f, g)` pair per input `n, d1, d2, d4`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorForcingProfiles {
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
    pub f4: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub g3: Vec<f64>,
    pub g4: Vec<f64>,
    pub iterations: usize,
}

/// Solves `f = s_f + ∫ₓ¹(Puu f + Puv g)`, `g = s_g + ∫ₓ¹(Pvu f + Pvv g)`
/// for the four source pairs
///
/// ```text
/// (−P⁺ − μ(1)ρε Puv(·,1),  −P⁻ − μ(1)ρε Pvv(·,1))   noise
/// (m1, 0)                                            d1
/// (0, m2)                                            d2
/// (μ(1) Puv(·,1),  μ(1) Pvv(·,1))                    d4
/// ```
///
/// by Gauss–Seidel sweeps from `x = 1` toward `x = 0`.
pub fn error_forcing_profiles(
    ok: &ObserverKernelSet,
    params: &SystemParams,
    m1: &[f64],
    m2: &[f64],
) -> Result<ErrorForcingProfiles> {
    let n = params.grid.n_cells();
    let h = params.grid.h();
    if m1.len() != n + 1 || m2.len() != n + 1 {
        return Err(Error::Parameter("profiles are not sampled on the grid".into()));
    }
    let mu1 = params.mu[n];
    let re = mu1 * params.rho * ok.epsilon;
    let sources: [(Vec<f64>, Vec<f64>); 4] = [
        (
            (0..=n).map(|i| -ok.pplus[i] - re * ok.puv.get(i, n)).collect(),
            (0..=n).map(|i| -ok.pminus[i] - re * ok.pvv.get(i, n)).collect(),
        ),
        (m1.to_vec(), vec![0.0; n + 1]),
        (vec![0.0; n + 1], m2.to_vec()),
        (
            (0..=n).map(|i| mu1 * ok.puv.get(i, n)).collect(),
            (0..=n).map(|i| mu1 * ok.pvv.get(i, n)).collect(),
        ),
    ];
    let mut sol: Vec<(Vec<f64>, Vec<f64>)> = sources.to_vec();
    let iterations = crate::kernels::fixed_point("error forcing profiles", 1e-10, 500, || {
        let mut update: f64 = 0.0;
        for ((f, g), (sf, sg)) in sol.iter_mut().zip(&sources) {
            for i in (0..=n).rev() {
                let nf = sf[i] + upper_row_full(&ok.puu, &ok.puv, f, g, i, h);
                let ng = sg[i] + upper_row_full(&ok.pvu, &ok.pvv, f, g, i, h);
                update = update.max((nf - f[i]).abs()).max((ng - g[i]).abs());
                f[i] = nf;
                g[i] = ng;
            }
        }
        update
    })?;
    let mut it = sol.into_iter();
    let (f1, g1) = it.next().unwrap_or_default();
    let (f2, g2) = it.next().unwrap_or_default();
    let (f3, g3) = it.next().unwrap_or_default();
    let (f4, g4) = it.next().unwrap_or_default();
    Ok(ErrorForcingProfiles {
        f1,
        f2,
        f3,
        f4,
        g1,
        g2,
        g3,
        g4,
        iterations,
    })
}

/// Full trapezoid `∫_{x_i}^1 (a f + b g)` on the upper triangle.
#[inline]
pub(crate) fn upper_row_full(a: &TriangularField, b: &TriangularField, f: &[f64], g: &[f64], i: usize, h: f64) -> f64 {
    let n = f.len() - 1;
    if i == n {
        return 0.0;
    }
    upper_row_tail(a, b, f, g, i, h) + 0.5 * h * (a.get(i, i) * f[i] + b.get(i, i) * g[i])
}

/// Constants of the ISS estimate
/// `‖(α̃, β̃)‖ ≤ C e^{−νt} ‖(α̃⁰, β̃⁰)‖ + S ‖(n, d1, …, d4)‖_∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IssConstants {
    pub c: f64,
    /// Decay rate; `+∞` at `ε = 1`, where the ideal error vanishes after `τ`.
    pub nu: f64,
    /// Linear gain `S` of `h2(X) = S·X`.
    pub gain_h2_slope: f64,
    pub tau: f64,
}

impl IssConstants {
    pub fn h1(&self, initial: f64, t: f64) -> f64 {
        if self.nu.is_infinite() {
            if t <= self.tau {
                self.c * initial
            } else {
                0.0
            }
        } else {
            self.c * (-self.nu * t).exp() * initial
        }
    }

    pub fn h2(&self, input_sup: f64) -> f64 {
        self.gain_h2_slope * input_sup
    }
}

pub fn iss_constants(params: &SystemParams, epsilon: f64, maps: &TransportMaps) -> Result<IssConstants> {
    let q = params.q.abs();
    let r1 = (params.rho * (1.0 - epsilon)).abs();
    let contraction = q * r1;
    if contraction >= 1.0 {
        return Err(Error::Domain(format!("|qρ(1−ε)| = {contraction} must be below 1")));
    }
    let tau = maps.tau;
    let c = 2.0 + q + r1;
    let nu = if contraction == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / contraction).ln() / tau
    };
    let (il, im) = (1.0 / params.lambda_min(), 1.0 / params.mu_min());
    let slope =
        2.0 * c / (1.0 - contraction) * (tau + il + im + 2.0) + 2.0 + q * tau + r1 * tau + (2.0 * tau + il + im);
    Ok(IssConstants {
        c,
        nu,
        gain_h2_slope: slope,
        tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub passed: bool,
    /// Smallest `bound − error` over the samples.
    pub min_margin: f64,
    pub worst_time: f64,
}

/// One-sided check `error(t) ≤ h1(initial, t) + h2(input_sup(t))` at each
/// sample, with `input_sup(t)` the running sup of the inputs on `[0, t]`.
pub fn iss_envelope_check(
    times: &[f64],
    errors: &[f64],
    input_sup: &[f64],
    initial: f64,
    consts: &IssConstants,
) -> EnvelopeReport {
    let mut report = EnvelopeReport {
        passed: true,
        min_margin: f64::INFINITY,
        worst_time: 0.0,
    };
    for ((&t, &e), &s) in times.iter().zip(errors).zip(input_sup) {
        let margin = consts.h1(initial, t) + consts.h2(s) - e;
        if margin < report.min_margin {
            report.min_margin = margin;
            report.worst_time = t;
        }
    }
    report.passed = report.min_margin >= 0.0;
    report
}
