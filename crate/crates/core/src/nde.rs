//! Neutral delay equation governing the transformed boundary error
//!
//! ```text
//! ż(t) = k1 ż(t−τ) + k2 z(t−τ) + K(t),   k1 = (ρ−ρ̃)q,  k2 = k_I q (1 + l1(1)λ(1))
//! ```
//!
//! with its characteristic equation `s − (k1 s + k2) e^{−sτ} = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{IntegralWeights, REALIZABILITY_THRESHOLD};
use crate::model::{trapezoid, ControlConfig, DisturbanceSet, SystemParams, TimeSignal, TransportMaps};
use crate::steady::{disturbance_derivatives, SteadyMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackGains {
    pub k1: f64,
    pub k2: f64,
    pub tau: f64,
}

pub fn effective_gains(
    params: &SystemParams,
    config: &ControlConfig,
    weights: &IntegralWeights,
    maps: &TransportMaps,
) -> FeedbackGains {
    FeedbackGains {
        k1: (params.rho - config.rho_tilde) * params.q,
        k2: config.k_i * params.q * weights.boundary_factor,
        tau: maps.tau,
    }
}

fn check_domain(k1: f64, k2: f64) -> Result<()> {
    if k2 == 0.0 {
        return Err(Error::Domain("k2 = 0: the delay margin is undefined".into()));
    }
    if k2 > 0.0 {
        return Err(Error::Domain(format!("k2 = {k2} must be negative")));
    }
    if !(k1.abs() < 1.0) {
        return Err(Error::Domain(format!("|k1| = {} must be below 1", k1.abs())));
    }
    Ok(())
}

/// Largest stabilizing delay, from the three-branch closed form.
pub fn tau0_formula(k1: f64, k2: f64) -> Result<f64> {
    check_domain(k1, k2)?;
    let s = (1.0 - k1 * k1).sqrt();
    let a = k2.abs();
    Ok(if k1 < 0.0 {
        -s / a * (s / k1.abs()).atan() + PI * s / a
    } else if k1 == 0.0 {
        PI / (2.0 * a)
    } else {
        s / a * (s / k1).atan()
    })
}

/// Largest stabilizing delay from the imaginary-axis crossing: the modulus
/// condition gives `ω* = |k2|/√(1−k1²)`, the phase condition
/// `e^{−iω*τ} = iω*/(k1 iω* + k2)` the smallest positive `τ`.
pub fn tau0_oracle(k1: f64, k2: f64) -> Result<(f64, f64)> {
    check_domain(k1, k2)?;
    let omega = k2.abs() / (1.0 - k1 * k1).sqrt();
    let z = Complex64::new(0.0, omega) / Complex64::new(k2, k1 * omega);
    let tau = (-z.arg()).rem_euclid(2.0 * PI) / omega;
    Ok((tau, omega))
}

/// Rectangle `[re_min, re_max] × [0, im_max]` seeded on an
/// `n_re × n_im` lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl ScanRegion {
    pub fn for_delay(tau: f64) -> Self {
        Self {
            re_min: -5.0 / tau,
            re_max: 2.0 / tau,
            im_max: 20.0 * PI / tau,
            n_re: 40,
            n_im: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralScan {
    /// Largest real part among the roots found; `−∞` if none.
    pub s0_estimate: f64,
    pub roots: Vec<(f64, f64)>,
}

/// Roots of the characteristic quasipolynomial inside `region`, found by
/// damped Newton iterations from every lattice seed. An estimate: roots
/// outside the region are not seen.
pub fn spectral_abscissa(gains: &FeedbackGains, region: &ScanRegion) -> Result<SpectralScan> {
    let ScanRegion {
        re_min,
        re_max,
        im_max,
        n_re,
        n_im,
    } = *region;
    if !(re_max > re_min) || !(im_max > 0.0) || n_re < 2 || n_im < 2 || !(gains.tau > 0.0) {
        return Err(Error::Parameter("degenerate scan region".into()));
    }
    if gains.k2 == 0.0 {
        return Err(Error::Domain("k2 = 0".into()));
    }
    let (k1, k2, tau) = (gains.k1, gains.k2, gains.tau);
    let f = |s: Complex64| {
        let e = (-s * tau).exp();
        let f = s - (k1 * s + k2) * e;
        let df = 1.0 - k1 * e + tau * (k1 * s + k2) * e;
        (f, df)
    };
    let max_step = 0.25 * (re_max - re_min).min(im_max);
    let (pad_re, pad_im) = (0.1 * (re_max - re_min), 0.05 * im_max);
    let mut roots: Vec<Complex64> = Vec::new();
    for a in 0..n_re {
        for b in 0..n_im {
            let mut s = Complex64::new(
                re_min + (re_max - re_min) * a as f64 / (n_re - 1) as f64,
                im_max * b as f64 / (n_im - 1) as f64,
            );
            let mut converged = false;
            for _ in 0..60 {
                let (fv, dv) = f(s);
                if dv.norm() == 0.0 || !fv.is_finite() {
                    break;
                }
                let mut step = fv / dv;
                if step.norm() > max_step {
                    step *= max_step / step.norm();
                }
                s -= step;
                if step.norm() < 1e-13 * (1.0 + s.norm()) {
                    converged = f(s).0.norm() < 1e-9 * (1.0 + s.norm());
                    break;
                }
            }
            let inside =
                s.re >= re_min - pad_re && s.re <= re_max + pad_re && s.im >= -pad_im && s.im <= im_max + pad_im;
            if converged && inside {
                let s = Complex64::new(s.re, s.im.abs());
                if !roots.iter().any(|r| (r - s).norm() < 1e-6 * (1.0 + s.norm())) {
                    roots.push(s);
                }
            }
        }
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok(SpectralScan {
        s0_estimate: roots.first().map_or(f64::NEG_INFINITY, |r| r.re),
        roots: roots.iter().map(|r| (r.re, r.im)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub k1: f64,
    pub k2: f64,
    pub tau: f64,
    /// `|k1| < 1 ∧ k2 < 0 ∧ 0 < τ < τ0`.
    pub stable: bool,
    /// Closed-form delay margin; `None` outside its domain.
    pub tau0: Option<f64>,
    pub tau0_oracle: Option<f64>,
    pub omega_star: Option<f64>,
    pub s0_estimate: Option<f64>,
    /// `τ0 − τ`.
    pub margin: Option<f64>,
    pub note: Option<String>,
}

pub fn stability_report(gains: &FeedbackGains) -> StabilityReport {
    let formula = tau0_formula(gains.k1, gains.k2);
    let oracle = tau0_oracle(gains.k1, gains.k2).ok();
    let scan = if gains.k2 != 0.0 && gains.tau > 0.0 {
        spectral_abscissa(gains, &ScanRegion::for_delay(gains.tau)).ok()
    } else {
        None
    };
    let tau0 = formula.as_ref().ok().copied();
    StabilityReport {
        k1: gains.k1,
        k2: gains.k2,
        tau: gains.tau,
        stable: tau0.is_some_and(|t0| gains.tau > 0.0 && gains.tau < t0),
        tau0,
        tau0_oracle: oracle.map(|o| o.0),
        omega_star: oracle.map(|o| o.1),
        s0_estimate: scan.map(|s| s.s0_estimate),
        margin: tau0.map(|t0| t0 - gains.tau),
        note: formula.err().map(|e| e.to_string()),
    }
}

/// Chooses `k_I` so that `k2 < 0` and `τ = margin·τ0(k1, k2)`.
pub fn select_ki(
    params: &SystemParams,
    weights: &IntegralWeights,
    maps: &TransportMaps,
    rho_tilde: f64,
    margin: f64,
) -> Result<(f64, StabilityReport)> {
    let k1 = (params.rho - rho_tilde) * params.q;
    ki_for_margin(k1, params.q, weights.boundary_factor, maps.tau, margin)
}

/// [`select_ki`] from the reduced data `k1`, `q`, `1 + l1(1)λ(1)` and `τ`.
pub fn ki_for_margin(k1: f64, q: f64, boundary_factor: f64, tau: f64, margin: f64) -> Result<(f64, StabilityReport)> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::Parameter(format!("safety margin {margin} must lie in (0, 1)")));
    }
    if !(tau > 0.0) || q == 0.0 {
        return Err(Error::Parameter("τ must be positive and q nonzero".into()));
    }
    if !(k1.abs() < 1.0) {
        return Err(Error::Domain(format!("|k1| = {} must be below 1", k1.abs())));
    }
    if boundary_factor.abs() < REALIZABILITY_THRESHOLD {
        return Err(Error::Configuration(format!(
            "boundary factor {boundary_factor:.3e} vanishes"
        )));
    }
    let k2 = -margin * (1.0 - k1 * k1).sqrt() * k1.acos() / tau;
    let k_i = k2 / (q * boundary_factor);
    Ok((k_i, stability_report(&FeedbackGains { k1, k2, tau })))
}

/// Sampled solution of the delay equation on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NdeTrace {
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub zdot: Vec<f64>,
    pub forcing: Vec<f64>,
}

/// History on `[−τ, 0]`, sampled at `dt` (`N + 1` points, oldest first).
#[derive(Debug, Clone, PartialEq)]
pub struct NdeHistory {
    pub z: Vec<f64>,
    pub zdot: Vec<f64>,
}

impl NdeHistory {
    pub fn from_fn(tau: f64, dt: f64, z: impl Fn(f64) -> f64, zdot: impl Fn(f64) -> f64) -> Self {
        let n = (tau / dt).round() as usize;
        let ts: Vec<f64> = (0..=n).map(|k| -tau + k as f64 * dt).collect();
        Self {
            z: ts.iter().map(|&t| z(t)).collect(),
            zdot: ts.iter().map(|&t| zdot(t)).collect(),
        }
    }

    pub fn zero(tau: f64, dt: f64) -> Self {
        Self::from_fn(tau, dt, |_| 0.0, |_| 0.0)
    }
}

/// Method of steps: `ż_n = k1 ż_{n−N} + k2 z_{n−N} + K(t_n)` from the stored
/// history, and `z_{n+1} = z_n + dt (ż_n + ż_{n+1})/2`.
pub fn simulate_nde(
    gains: &FeedbackGains,
    forcing: &TimeSignal,
    history: &NdeHistory,
    horizon: f64,
    dt: f64,
) -> Result<NdeTrace> {
    let tau = gains.tau;
    if !(dt > 0.0) || !(tau > 0.0) {
        return Err(Error::Parameter("dt and τ must be positive".into()));
    }
    let big_n = (tau / dt).round() as usize;
    if big_n == 0 || (big_n as f64 * dt - tau).abs() > 1e-9 {
        return Err(Error::Parameter(format!("dt = {dt} does not divide τ = {tau}")));
    }
    if history.z.len() != big_n + 1 || history.zdot.len() != big_n + 1 {
        return Err(Error::Parameter("history does not cover [−τ, 0] at dt".into()));
    }
    let steps = (horizon / dt).round() as usize;
    let total = big_n + steps + 1;
    let mut z = Vec::with_capacity(total);
    let mut zd = Vec::with_capacity(total);
    z.extend_from_slice(&history.z);
    zd.extend_from_slice(&history.zdot);
    let mut out = NdeTrace {
        t: Vec::with_capacity(steps + 1),
        z: Vec::with_capacity(steps + 1),
        zdot: Vec::with_capacity(steps + 1),
        forcing: Vec::with_capacity(steps + 1),
    };
    let rate = |k: usize, z: &[f64], zd: &[f64], kt: f64| gains.k1 * zd[k - big_n] + gains.k2 * z[k - big_n] + kt;
    // Index big_n is t = 0; its derivative comes from the equation.
    let k0 = forcing.value(0.0);
    zd[big_n] = rate(big_n, &z, &zd, k0);
    out.t.push(0.0);
    out.z.push(z[big_n]);
    out.zdot.push(zd[big_n]);
    out.forcing.push(k0);
    for m in 1..=steps {
        let k = big_n + m;
        let t = m as f64 * dt;
        let kt = forcing.value(t);
        let dz = rate(k, &z, &zd, kt);
        let zn = z[k - 1] + 0.5 * dt * (zd[k - 1] + dz);
        z.push(zn);
        zd.push(dz);
        if !zn.is_finite() {
            return Err(Error::Divergence {
                last_valid_time: t - dt,
            });
        }
        out.t.push(t);
        out.z.push(zn);
        out.zdot.push(dz);
        out.forcing.push(kt);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decays,
    Grows,
    Inconclusive,
}

/// Window long enough to contain a full oscillation at the crossing
/// frequency, rounded up to a whole number of delays.
pub fn trend_window(tau: f64, omega_star: f64) -> f64 {
    let periods = (2.0 * PI / (omega_star * tau)).ceil().max(1.0);
    periods * tau
}

/// Ratio of `sup|z|` over the last window to the one before it.
pub fn window_ratio(trace: &NdeTrace, window: f64) -> f64 {
    let end = trace.t.last().copied().unwrap_or(0.0);
    let sup = |a: f64, b: f64| {
        trace
            .t
            .iter()
            .zip(&trace.z)
            .filter(|(t, _)| **t > a && **t <= b)
            .map(|(_, z)| z.abs())
            .fold(0.0, f64::max)
    };
    sup(end - window, end) / sup(end - 2.0 * window, end - window)
}

pub fn classify_ratio(ratio: f64) -> Trend {
    if ratio < 0.95 {
        Trend::Decays
    } else if ratio > 1.05 {
        Trend::Grows
    } else {
        Trend::Inconclusive
    }
}

/// Forcing of the delay equation induced by noise and time-varying
/// disturbances:
///
/// ```text
/// K(t) = k_I q [n − η̇^ss + ∫(l1 α_t^ss + l2 β_t^ss)](t−τ)
///        − q ∫ β_tt^ss(ξ, t−τ1−φ2(ξ)) / μ(ξ) dξ
///        − ∫ α_tt^ss(ξ, t−τ1+φ1(ξ)) / λ(ξ) dξ
/// ```
///
/// sampled at `dt` on `[0, horizon]`. Static disturbances contribute only
/// through the noise term.
#[allow(clippy::too_many_arguments)]
pub fn nde_forcing_from_scenario(
    dist: &DisturbanceSet,
    steady: &SteadyMap,
    config: &ControlConfig,
    params: &SystemParams,
    maps: &TransportMaps,
    weights: &IntegralWeights,
    horizon: f64,
    dt: f64,
) -> Result<TimeSignal> {
    let n = params.grid.n_cells();
    let h = params.grid.h();
    let q = params.q;
    let (tau, tau1) = (maps.tau, maps.tau1);
    let steps = (horizon / dt).round() as usize;
    let static_case = dist.d().iter().all(|d| d.is_static());
    // Derivatives are requested even in the static case so that
    // non-differentiable disturbances are reported.
    disturbance_derivatives(dist, 0.0, 2)?;
    let phi1 = maps.phi1.values();
    let phi2 = maps.phi2.values();
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut ga = vec![0.0; n + 1];
    let mut gb = vec![0.0; n + 1];
    for m in 0..=steps {
        let t = m as f64 * dt;
        let td = t - tau;
        let mut k = config.k_i * q * dist.noise.value(td);
        if !static_case {
            let rate = steady.profile(dist, config, params.rho, td, 1)?;
            if let Some(eta_t) = rate.eta {
                let int = trapezoid(&mul(&weights.l1, &rate.alpha), h) + trapezoid(&mul(&weights.l2, &rate.beta), h);
                k += config.k_i * q * (int - eta_t);
            }
            for i in 0..=n {
                let wb = disturbance_derivatives(dist, t - tau1 - phi2[i], 2)?;
                let wa = disturbance_derivatives(dist, t - tau1 + phi1[i], 2)?;
                gb[i] = dot(&wb, steady, i, false) / params.mu[i];
                ga[i] = dot(&wa, steady, i, true) / params.lambda[i];
            }
            k -= q * trapezoid(&gb, h) + trapezoid(&ga, h);
        }
        times.push(t);
        values.push(k);
    }
    Ok(TimeSignal::Table { times, values })
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn dot(w: &[f64; 4], steady: &SteadyMap, i: usize, alpha: bool) -> f64 {
    steady
        .responses
        .iter()
        .zip(w)
        .map(|(r, c)| c * if alpha { r.alpha[i] } else { r.beta[i] })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tau0_examples() {
        assert!((tau0_formula(0.0, -1.0).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((tau0_formula(-0.5, -1.0).unwrap() - PI / 3f64.sqrt()).abs() < 1e-12);
        assert!(tau0_formula(0.0, 0.0).is_err());
        assert!(tau0_formula(0.0, 1.0).is_err());
        assert!(tau0_formula(1.0, -1.0).is_err());
        let (t, w) = tau0_oracle(0.0, -1.0).unwrap();
        assert!((t - PI / 2.0).abs() < 1e-15 && (w - 1.0).abs() < 1e-15);
        let (t, w) = tau0_oracle(-0.5, -1.0).unwrap();
        assert!((w - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((t - tau0_formula(-0.5, -1.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn tau0_vanishes_as_k1_approaches_one() {
        let mut prev = f64::INFINITY;
        for k1 in [0.9, 0.99, 0.999, 0.9999] {
            let (t, w) = tau0_oracle(k1, -1.0).unwrap();
            assert!(t < prev && t > 0.0);
            prev = t;
            assert!(w > 1.0);
        }
        assert!(prev < 0.02);
    }

    #[test]
    fn root_at_crossing() {
        let (t0, w) = tau0_oracle(0.3, -0.7).unwrap();
        let scan = spectral_abscissa(
            &FeedbackGains {
                k1: 0.3,
                k2: -0.7,
                tau: t0,
            },
            &ScanRegion::for_delay(t0),
        )
        .unwrap();
        assert!(scan
            .roots
            .iter()
            .any(|&(re, im)| re.abs() < 1e-6 && (im - w).abs() < 1e-6));
    }

    #[test]
    fn scan_sign_follows_delay() {
        let g = |tau| FeedbackGains { k1: 0.0, k2: -1.0, tau };
        let s1 = spectral_abscissa(&g(1.0), &ScanRegion::for_delay(1.0)).unwrap();
        let s2 = spectral_abscissa(&g(2.0), &ScanRegion::for_delay(2.0)).unwrap();
        assert!(s1.s0_estimate < 0.0);
        assert!(s2.s0_estimate > 0.0);
        let bad = ScanRegion {
            re_min: 1.0,
            re_max: 0.0,
            ..ScanRegion::for_delay(1.0)
        };
        assert!(spectral_abscissa(&g(1.0), &bad).is_err());
    }

    #[test]
    fn margin_design_example() {
        let (k_i, r) = ki_for_margin(0.0, 1.0, 1.0, 2.0, 0.5).unwrap();
        assert!((k_i + PI / 8.0).abs() < 1e-15);
        assert!((r.tau0.unwrap() - 4.0).abs() < 1e-12);
        assert!(r.stable);
        assert!((r.tau0.unwrap() - r.tau0_oracle.unwrap()).abs() < 1e-9);
        assert!(ki_for_margin(0.0, 1.0, 1.0, 2.0, 1.0).is_err());
        assert!(matches!(ki_for_margin(1.2, 1.0, 1.0, 2.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_forcing_zero_history_stays_zero() {
        let g = FeedbackGains {
            k1: 0.4,
            k2: -0.5,
            tau: 1.0,
        };
        let tr = simulate_nde(&g, &TimeSignal::Zero, &NdeHistory::zero(1.0, 0.01), 10.0, 0.01).unwrap();
        assert!(tr.z.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn constant_forcing_settles_at_equilibrium() {
        let g = FeedbackGains {
            k1: 0.2,
            k2: -0.6,
            tau: 1.0,
        };
        let tr = simulate_nde(&g, &TimeSignal::constant(0.3), &NdeHistory::zero(1.0, 0.01), 80.0, 0.01).unwrap();
        assert!((tr.z.last().unwrap() + 0.3 / g.k2).abs() < 1e-6);
    }

    #[test]
    fn step_size_must_divide_delay() {
        let g = FeedbackGains {
            k1: 0.0,
            k2: -1.0,
            tau: 1.0,
        };
        let h = NdeHistory::zero(1.0, 0.3);
        assert!(simulate_nde(&g, &TimeSignal::Zero, &h, 5.0, 0.3).is_err());
    }

    #[test]
    fn stability_flip_across_delay_margin() {
        for factor in [0.75, 1.25] {
            let tau = factor * PI / 2.0;
            let dt = tau / 400.0;
            let g = FeedbackGains { k1: 0.0, k2: -1.0, tau };
            let h = NdeHistory::from_fn(tau, dt, |_| 1.0, |_| 0.0);
            let tr = simulate_nde(&g, &TimeSignal::Zero, &h, 40.0 * tau, dt).unwrap();
            let trend = classify_ratio(window_ratio(&tr, trend_window(tau, 1.0)));
            let expect = if factor < 1.0 { Trend::Decays } else { Trend::Grows };
            assert_eq!(trend, expect);
        }
    }
}
