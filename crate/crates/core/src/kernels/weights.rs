use super::InverseKernelSet;
use crate::error::{Error, Result};
use crate::model::{cumulative_trapezoid, trapezoid, SystemParams};

/// Values of the realizability factor below this magnitude are rejected.
pub const REALIZABILITY_THRESHOLD: f64 = 1e-6;

/// Integral-action weights `l1`, `l2`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralWeights {
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    /// `1 + l1(1)λ(1)`.
    pub boundary_factor: f64,
}

/// `1 + ∫₀¹ Laa(1,ξ)dξ + (1/q)∫₀¹ Lab(1,ξ)dξ`; integral action needs it nonzero.
pub fn realizability_factor(lset: &InverseKernelSet, q: f64) -> f64 {
    let n = lset.laa.n_cells();
    let h = 1.0 / n as f64;
    1.0 + trapezoid(lset.laa.row(n), h) + trapezoid(lset.lab.row(n), h) / q
}

/// Integrates `(l1 λ)' = Laa(1,x)` forward and `(l2 μ)' = −Lab(1,x)`
/// backward from `l2(1) = 0`, with `l1(0) = μ(0) l2(0) / (q λ(0))`.
pub fn solve_integral_weights(lset: &InverseKernelSet, params: &SystemParams) -> Result<IntegralWeights> {
    params.check()?;
    let value = realizability_factor(lset, params.q);
    if value.abs() < REALIZABILITY_THRESHOLD {
        return Err(Error::Configuration(format!(
            "integral action is not realizable: 1 + ∫Laa(1,·) + ∫Lab(1,·)/q = {value:.3e}"
        )));
    }
    let n = params.grid.n_cells();
    let h = params.grid.h();
    let cum_ab = cumulative_trapezoid(lset.lab.row(n), h);
    let total_ab = cum_ab[n];
    let l2: Vec<f64> = (0..=n).map(|i| (total_ab - cum_ab[i]) / params.mu[i]).collect();
    let start = params.mu[0] * l2[0] / params.q;
    let cum_aa = cumulative_trapezoid(lset.laa.row(n), h);
    let l1: Vec<f64> = (0..=n).map(|i| (start + cum_aa[i]) / params.lambda[i]).collect();
    let boundary_factor = 1.0 + l1[n] * params.lambda[n];
    Ok(IntegralWeights {
        l1,
        l2,
        boundary_factor,
    })
}
