//! Plant description shared by every other module: the spatial grid, the
//! coefficient samples, transport times, time signals and norms.
//!
//! All spatial functions live as nodal samples on one uniform grid over
//! `[0, 1]`. Off-node values use linear interpolation and every spatial
//! integral is a composite trapezoid rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[0, 1]` with `n_cells + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    n_cells: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::Parameter("grid needs at least one cell".into()));
        }
        let h = 1.0 / n_cells as f64;
        let mut nodes: Vec<f64> = (0..=n_cells).map(|i| i as f64 * h).collect();
        nodes[n_cells] = 1.0;
        Ok(Self { n_cells, h, nodes })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of nodes, `n_cells + 1`.
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn x(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}

/// Composite trapezoid rule over all samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral, `out[i] = ∫_0^{x_i}`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Linear interpolation of nodal samples at `x`, clamped to `[0, 1]`.
pub fn interp(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len() - 1;
    if n == 0 {
        return values[0];
    }
    let s = (x / h).clamp(0.0, n as f64);
    let i = (s.floor() as usize).min(n - 1);
    let a = s - i as f64;
    values[i] + a * (values[i + 1] - values[i])
}

/// Piecewise-linear strictly increasing map sampled on a uniform grid, with
/// a bucketed lookup table for fast inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneMap {
    values: Vec<f64>,
    h: f64,
    lookup: Vec<usize>,
    bucket: f64,
}

impl MonotoneMap {
    pub fn new(values: Vec<f64>, h: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Parameter("monotone map needs two samples".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("map is not strictly increasing".into()));
        }
        let n_buckets = 4 * values.len();
        let span = values[values.len() - 1] - values[0];
        let bucket = span / n_buckets as f64;
        let mut lookup = Vec::with_capacity(n_buckets + 1);
        let mut k = 0;
        for b in 0..=n_buckets {
            let v = values[0] + b as f64 * bucket;
            while k + 2 < values.len() && values[k + 1] <= v {
                k += 1;
            }
            lookup.push(k);
        }
        Ok(Self {
            values,
            h,
            lookup,
            bucket,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        interp(&self.values, self.h, x)
    }

    /// Inverse map; arguments outside the range are clamped.
    pub fn inverse(&self, v: f64) -> f64 {
        let n = self.values.len() - 1;
        if v <= self.values[0] {
            return 0.0;
        }
        if v >= self.values[n] {
            return n as f64 * self.h;
        }
        let b = (((v - self.values[0]) / self.bucket) as usize).min(self.lookup.len() - 1);
        let mut k = self.lookup[b];
        while k + 1 < n && self.values[k + 1] < v {
            k += 1;
        }
        while k > 0 && self.values[k] > v {
            k -= 1;
        }
        let a = (v - self.values[k]) / (self.values[k + 1] - self.values[k]);
        ((k as f64 + a) * self.h).min(1.0)
    }
}

/// Coefficients of the plant, sampled on the shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub grid: SpatialGrid,
    /// Transport speed of `u` (rightward).
    pub lambda: Vec<f64>,
    /// Transport speed of `v` (leftward).
    pub mu: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    /// Distal reflection at `x = 0`.
    pub q: f64,
    /// Proximal reflection at `x = 1`.
    pub rho: f64,
}

impl SystemParams {
    pub fn from_fns(
        grid: &SpatialGrid,
        lambda: impl Fn(f64) -> f64,
        mu: impl Fn(f64) -> f64,
        gamma1: impl Fn(f64) -> f64,
        gamma2: impl Fn(f64) -> f64,
        q: f64,
        rho: f64,
    ) -> Self {
        Self {
            grid: grid.clone(),
            lambda: grid.sample(lambda),
            mu: grid.sample(mu),
            gamma1: grid.sample(gamma1),
            gamma2: grid.sample(gamma2),
            q,
            rho,
        }
    }

    pub fn constant(grid: &SpatialGrid, lambda: f64, mu: f64, gamma1: f64, gamma2: f64, q: f64, rho: f64) -> Self {
        Self::from_fns(grid, |_| lambda, |_| mu, |_| gamma1, |_| gamma2, q, rho)
    }

    /// Hard validation used by the solvers.
    pub fn check(&self) -> Result<()> {
        let n = self.grid.len();
        for (name, v) in [
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("gamma1", &self.gamma1),
            ("gamma2", &self.gamma2),
        ] {
            if v.len() != n {
                return Err(Error::Parameter(format!(
                    "{name} has {} samples, grid has {n} nodes",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parameter(format!("{name} is not finite")));
            }
        }
        if let Some(i) = self.lambda.iter().position(|&l| l <= 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be positive, lambda({}) = {}",
                self.grid.x(i),
                self.lambda[i]
            )));
        }
        if let Some(i) = self.mu.iter().position(|&m| m <= 0.0) {
            return Err(Error::Parameter(format!(
                "mu must be positive, mu({}) = {}",
                self.grid.x(i),
                self.mu[i]
            )));
        }
        if self.q == 0.0 || !self.q.is_finite() {
            return Err(Error::Parameter("q must be a nonzero real".into()));
        }
        if !self.rho.is_finite() {
            return Err(Error::Parameter("rho must be finite".into()));
        }
        Ok(())
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mu_min(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_speed(&self) -> f64 {
        self.lambda.iter().chain(self.mu.iter()).copied().fold(0.0, f64::max)
    }

    pub fn is_constant_coefficient(&self) -> bool {
        let flat = |v: &[f64]| v.iter().all(|&x| x == v[0]);
        flat(&self.lambda) && flat(&self.mu) && flat(&self.gamma1) && flat(&self.gamma2)
    }
}

/// Cumulative travel times `phi1(x) = ∫_0^x 1/λ`, `phi2(x) = ∫_0^x 1/μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMaps {
    pub phi1: MonotoneMap,
    pub phi2: MonotoneMap,
    pub tau1: f64,
    pub tau2: f64,
    pub tau: f64,
}

pub fn build_transport_maps(params: &SystemParams) -> Result<TransportMaps> {
    params.check()?;
    let h = params.grid.h();
    let inv = |v: &[f64]| v.iter().map(|s| 1.0 / s).collect::<Vec<_>>();
    let phi1 = MonotoneMap::new(cumulative_trapezoid(&inv(&params.lambda), h), h)?;
    let phi2 = MonotoneMap::new(cumulative_trapezoid(&inv(&params.mu), h), h)?;
    let tau1 = phi1.last();
    let tau2 = phi2.last();
    Ok(TransportMaps {
        phi1,
        phi2,
        tau1,
        tau2,
        tau: tau1 + tau2,
    })
}

/// Scalar signal of time. Disturbances `d1..d4` must come from the
/// differentiable generators; noise may be anything bounded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeSignal {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Step {
        time: f64,
        #[serde(default)]
        before: f64,
        after: f64,
    },
    /// Cosine ramp from `from` to `to` over `[start, end]`.
    SmoothStep {
        start: f64,
        end: f64,
        #[serde(default)]
        from: f64,
        to: f64,
    },
    Sinusoid {
        amplitude: f64,
        /// Angular frequency in rad per unit time.
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    Sum {
        terms: Vec<TimeSignal>,
    },
    /// Uniform random knots in `[-amplitude, amplitude]` every `interval`,
    /// linearly interpolated. Counter-based, so evaluation is pure.
    UniformNoise {
        amplitude: f64,
        seed: u64,
        interval: f64,
    },
    /// Linear interpolation of samples, held constant outside the range.
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TimeSignal {
    pub fn constant(value: f64) -> Self {
        TimeSignal::Constant { value }
    }

    pub fn sinusoid(amplitude: f64, omega: f64, phase: f64) -> Self {
        TimeSignal::Sinusoid {
            amplitude,
            omega,
            phase,
            offset: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeSignal::Zero => true,
            TimeSignal::Constant { value } => *value == 0.0,
            TimeSignal::Sum { terms } => terms.iter().all(|t| t.is_zero()),
            _ => false,
        }
    }

    /// Whether the first and second derivatives vanish identically.
    pub fn is_static(&self) -> bool {
        match self {
            TimeSignal::Zero | TimeSignal::Constant { .. } => true,
            TimeSignal::Sinusoid { amplitude, omega, .. } => *amplitude == 0.0 || *omega == 0.0,
            TimeSignal::Sum { terms } => terms.iter().all(|t| t.is_static()),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TimeSignal::SmoothStep { start, end, .. } if end <= start => {
                Err(Error::Signal("smooth_step needs end > start".into()))
            }
            TimeSignal::UniformNoise { interval, .. } if *interval <= 0.0 => {
                Err(Error::Signal("noise interval must be positive".into()))
            }
            TimeSignal::Table { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::Signal("table needs matching non-empty columns".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Signal("table times must increase".into()));
                }
                Ok(())
            }
            TimeSignal::Sum { terms } => terms.iter().try_for_each(|t| t.validate()),
            _ => Ok(()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeSignal::Zero => 0.0,
            TimeSignal::Constant { value } => *value,
            TimeSignal::Step { time, before, after } => {
                if t < *time {
                    *before
                } else {
                    *after
                }
            }
            TimeSignal::SmoothStep { start, end, from, to } => {
                let s = ((t - start) / (end - start)).clamp(0.0, 1.0);
                from + (to - from) * 0.5 * (1.0 - (std::f64::consts::PI * s).cos())
            }
            TimeSignal::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => offset + amplitude * (omega * t + phase).sin(),
            TimeSignal::Sum { terms } => terms.iter().map(|s| s.value(t)).sum(),
            TimeSignal::UniformNoise {
                amplitude,
                seed,
                interval,
            } => {
                let s = (t / interval).max(0.0);
                let k = s.floor() as u64;
                let a = s - k as f64;
                let v0 = noise_knot(*seed, k);
                let v1 = noise_knot(*seed, k + 1);
                amplitude * (v0 + a * (v1 - v0))
            }
            TimeSignal::Table { times, values } => table_eval(times, values, t).0,
        }
    }

    /// `order`-th time derivative. Fails for signals that are not twice
    /// differentiable (noise, tables beyond first order).
    pub fn derivative(&self, t: f64, order: u32) -> Result<f64> {
        use std::f64::consts::PI;
        if order == 0 {
            return Ok(self.value(t));
        }
        match self {
            TimeSignal::Zero | TimeSignal::Constant { .. } => Ok(0.0),
            // Derivative taken almost everywhere.
            TimeSignal::Step { .. } => Ok(0.0),
            TimeSignal::SmoothStep { start, end, from, to } => {
                if t <= *start || t >= *end {
                    return Ok(0.0);
                }
                let len = end - start;
                let s = (t - start) / len;
                let amp = (to - from) * 0.5;
                let w = PI / len;
                Ok(match order {
                    1 => amp * w * (PI * s).sin(),
                    2 => amp * w * w * (PI * s).cos(),
                    _ => return Err(Error::Signal("derivative order above 2".into())),
                })
            }
            TimeSignal::Sinusoid {
                amplitude,
                omega,
                phase,
                ..
            } => {
                let arg = omega * t + phase;
                Ok(match order {
                    1 => amplitude * omega * arg.cos(),
                    2 => -amplitude * omega * omega * arg.sin(),
                    _ => return Err(Error::Signal("derivative order above 2".into())),
                })
            }
            TimeSignal::Sum { terms } => terms.iter().map(|s| s.derivative(t, order)).sum(),
            TimeSignal::UniformNoise { .. } => Err(Error::Signal("uniform noise has no time derivative".into())),
            TimeSignal::Table { times, values } => {
                if order == 1 {
                    Ok(table_eval(times, values, t).1)
                } else {
                    Err(Error::Signal("table signals have no second derivative".into()))
                }
            }
        }
    }

    /// Sampled sup-norm over `[0, horizon]`.
    pub fn sup_norm(&self, horizon: f64, dt: f64) -> f64 {
        let steps = (horizon / dt).ceil() as usize;
        (0..=steps).map(|k| self.value(k as f64 * dt).abs()).fold(0.0, f64::max)
    }
}

fn noise_knot(seed: u64, k: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(2 * k as u128);
    rng.gen_range(-1.0..=1.0)
}

fn table_eval(times: &[f64], values: &[f64], t: f64) -> (f64, f64) {
    let n = times.len();
    if t <= times[0] {
        return (values[0], 0.0);
    }
    if t >= times[n - 1] {
        return (values[n - 1], 0.0);
    }
    let k = times.partition_point(|&s| s <= t) - 1;
    let slope = (values[k + 1] - values[k]) / (times[k + 1] - times[k]);
    (values[k] + slope * (t - times[k]), slope)
}

/// Disturbances, their spatial profiles and the measurement noise.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSet {
    pub d1: TimeSignal,
    pub d2: TimeSignal,
    pub d3: TimeSignal,
    pub d4: TimeSignal,
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub noise: TimeSignal,
}

impl DisturbanceSet {
    pub fn none(grid: &SpatialGrid) -> Self {
        Self {
            d1: TimeSignal::Zero,
            d2: TimeSignal::Zero,
            d3: TimeSignal::Zero,
            d4: TimeSignal::Zero,
            m1: vec![0.0; grid.len()],
            m2: vec![0.0; grid.len()],
            noise: TimeSignal::Zero,
        }
    }

    pub fn check(&self, grid: &SpatialGrid) -> Result<()> {
        for (name, m) in [("m1", &self.m1), ("m2", &self.m2)] {
            if m.len() != grid.len() {
                return Err(Error::Parameter(format!("{name} is not sampled on the grid")));
            }
            if m.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be nonnegative")));
            }
        }
        for s in [&self.d1, &self.d2, &self.d3, &self.d4, &self.noise] {
            s.validate()?;
        }
        Ok(())
    }

    pub fn d(&self) -> [&TimeSignal; 4] {
        [&self.d1, &self.d2, &self.d3, &self.d4]
    }

    /// Whether the pseudo-steady state is time invariant and the noise is zero.
    pub fn is_static(&self) -> bool {
        self.d().iter().all(|s| s.is_static()) && self.noise.is_zero()
    }

    /// `max(|n|, |d1|, ..., |d4|)` at time `t`.
    pub fn input_magnitude(&self, t: f64) -> f64 {
        self.d()
            .iter()
            .map(|s| s.value(t).abs())
            .fold(self.noise.value(t).abs(), f64::max)
    }
}

/// Controller and observer tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Part of the proximal reflection left uncancelled.
    pub rho_tilde: f64,
    /// Integral gain.
    pub k_i: f64,
    /// Observer trust in the measurement, in `[0, 1]`.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks every standing condition on plant and tuning and reports each one.
pub fn validate_configuration(params: &SystemParams, config: &ControlConfig) -> ValidationReport {
    let mut checks = Vec::new();
    let (lmin, lidx) = argmin(&params.lambda);
    checks.push(ConditionCheck {
        name: "lambda_positive",
        passed: lmin > 0.0,
        value: lmin,
        detail: format!("min lambda = {lmin} at x = {}", params.grid.x(lidx)),
    });
    let (mmin, midx) = argmin(&params.mu);
    checks.push(ConditionCheck {
        name: "mu_positive",
        passed: mmin > 0.0,
        value: mmin,
        detail: format!("min mu = {mmin} at x = {}", params.grid.x(midx)),
    });
    checks.push(ConditionCheck {
        name: "q_nonzero",
        passed: params.q != 0.0,
        value: params.q,
        detail: format!("q = {}", params.q),
    });
    let rq = params.rho * params.q;
    checks.push(ConditionCheck {
        name: "reflection_product",
        passed: rq < 1.0,
        value: rq,
        detail: format!("rho*q = {rq} must be < 1"),
    });
    let partial = (params.rho * params.q).abs() + (config.rho_tilde * params.q).abs();
    checks.push(ConditionCheck {
        name: "partial_cancellation",
        passed: partial < 1.0,
        value: partial,
        detail: format!("|rho q| + |rho_tilde q| = {partial} must be < 1"),
    });
    let interval = crate::observer::epsilon_interval(params);
    checks.push(ConditionCheck {
        name: "epsilon_admissible",
        passed: interval.contains(config.epsilon),
        value: config.epsilon,
        detail: format!("epsilon = {} must lie in {interval}", config.epsilon),
    });
    ValidationReport { checks }
}

fn argmin(v: &[f64]) -> (f64, usize) {
    v.iter()
        .copied()
        .enumerate()
        .fold((f64::INFINITY, 0), |(m, k), (i, x)| if x < m { (x, i) } else { (m, k) })
}

/// `‖(u, v)‖_∞ + |η|`.
pub fn norm_e(u: &[f64], v: &[f64], eta: f64) -> f64 {
    sup_norm2(u, v) + eta.abs()
}

/// `max_x max(|u|, |v|)`.
pub fn sup_norm2(u: &[f64], v: &[f64]) -> f64 {
    u.iter().chain(v.iter()).fold(0.0, |m, x| m.max(x.abs()))
}
