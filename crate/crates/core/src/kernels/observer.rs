use super::{fixed_point, Orientation, TriangularField, KERNEL_MAX_ITERATIONS, KERNEL_TOLERANCE};
use crate::error::Result;
use crate::model::{build_transport_maps, interp, MonotoneMap, SystemParams};

/// Observer kernels of `ũ = α̃ − ∫ₓ¹ (Puu α̃ + Puv β̃)`,
/// `ṽ = β̃ − ∫ₓ¹ (Pvu α̃ + Pvv β̃)`, with the output-injection gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverKernelSet {
    pub puu: TriangularField,
    pub puv: TriangularField,
    pub pvu: TriangularField,
    pub pvv: TriangularField,
    /// Gains for the configured `epsilon`; zero until [`observer_gains`].
    pub pplus: Vec<f64>,
    pub pminus: Vec<f64>,
    pub epsilon: f64,
    pub iterations: usize,
}

impl ObserverKernelSet {
    pub fn fields(&self) -> [(&'static str, &TriangularField); 4] {
        [
            ("puu", &self.puu),
            ("puv", &self.puv),
            ("pvu", &self.pvu),
            ("pvv", &self.pvv),
        ]
    }
}

/// Solves, on `x ≤ ξ`,
///
/// ```text
/// λ(x)Puu_x + (λ(ξ)Puu)_ξ =  γ1(x)Pvu      Puu(0,ξ) = q Pvu(0,ξ)
/// λ(x)Puv_x − (μ(ξ)Puv)_ξ =  γ1(x)Pvv      Puv(x,x) = γ1(x)/(λ(x)+μ(x))
/// μ(x)Pvu_x − (λ(ξ)Pvu)_ξ = −γ2(x)Puu      Pvu(x,x) = −γ2(x)/(λ(x)+μ(x))
/// μ(x)Pvv_x + (μ(ξ)Pvv)_ξ = −γ2(x)Puv      Puv(0,ξ) = q Pvv(0,ξ)
/// ```
///
/// with one-cell characteristic steps, sweeping by increasing `ξ`.
pub fn solve_observer_kernels(params: &SystemParams) -> Result<ObserverKernelSet> {
    let maps = build_transport_maps(params)?;
    let grid = &params.grid;
    let n = grid.n_cells();
    let h = grid.h();
    let (lam, mu, g1, g2, q) = (&params.lambda, &params.mu, &params.gamma1, &params.gamma2, params.q);
    let psi = MonotoneMap::new(
        maps.phi1
            .values()
            .iter()
            .zip(maps.phi2.values())
            .map(|(a, b)| a + b)
            .collect(),
        h,
    )?;
    let (p1, p2) = (maps.phi1.values(), maps.phi2.values());
    let (phi1, phi2) = (&maps.phi1, &maps.phi2);
    let at = |v: &[f64], x: f64| interp(v, h, x);
    let zero = TriangularField::zeros(grid, Orientation::Upper);
    let mut puu = zero.clone();
    let mut puv = zero.clone();
    let mut pvu = zero.clone();
    let mut pvv = zero;

    let iterations = fixed_point("observer kernels", KERNEL_TOLERANCE, KERNEL_MAX_ITERATIONS, || {
        let mut update: f64 = 0.0;
        let mut put = |f: &mut TriangularField, i: usize, j: usize, v: f64| {
            update = update.max((f.get(i, j) - v).abs());
            f.set(i, j, v);
        };
        for j in 0..=n {
            // Puv and Pvu are carried from the diagonal toward x = 0.
            for i in (0..=j).rev() {
                let x = grid.x(i);
                let v = if i == j {
                    g1[j] / (lam[j] + mu[j])
                } else {
                    let y = psi.inverse(p1[i] + p2[j]);
                    let src = mu[j] * g1[i] * pvv.get(i, j) / lam[i];
                    let g = if y <= grid.x(i + 1) {
                        let (ly, my) = (at(lam, y), at(mu, y));
                        my * at(g1, y) / (ly + my) - 0.5 * (y - x) * (src + my * at(g1, y) * pvv.eval(y, y) / ly)
                    } else {
                        let yn = grid.x(i + 1);
                        let xi = phi2.inverse(p1[i] + p2[j] - p1[i + 1]);
                        let m = at(mu, xi);
                        m * puv.eval(yn, xi) - 0.5 * h * (src + m * g1[i + 1] * pvv.eval(yn, xi) / lam[i + 1])
                    };
                    g / mu[j]
                };
                put(&mut puv, i, j, v);

                let v = if i == j {
                    -g2[j] / (lam[j] + mu[j])
                } else {
                    let y = psi.inverse(p2[i] + p1[j]);
                    let src = lam[j] * g2[i] * puu.get(i, j) / mu[i];
                    let hv = if y <= grid.x(i + 1) {
                        let (ly, my) = (at(lam, y), at(mu, y));
                        -ly * at(g2, y) / (ly + my) + 0.5 * (y - x) * (src + ly * at(g2, y) * puu.eval(y, y) / my)
                    } else {
                        let yn = grid.x(i + 1);
                        let xi = phi1.inverse(p2[i] + p1[j] - p2[i + 1]);
                        let l = at(lam, xi);
                        l * pvu.eval(yn, xi) + 0.5 * h * (src + l * g2[i + 1] * puu.eval(yn, xi) / mu[i + 1])
                    };
                    hv / lam[j]
                };
                put(&mut pvu, i, j, v);
            }
            // Puu and Pvv are carried from x = 0 toward the diagonal.
            for i in 0..=j {
                let v = if i == 0 {
                    q * pvu.get(0, j)
                } else {
                    let yp = grid.x(i - 1);
                    let xi = phi1.inverse(p1[j] - p1[i] + p1[i - 1]);
                    let l = at(lam, xi);
                    let f = l * puu.eval(yp, xi)
                        + 0.5
                            * h
                            * (l * g1[i - 1] * pvu.eval(yp, xi) / lam[i - 1] + lam[j] * g1[i] * pvu.get(i, j) / lam[i]);
                    f / lam[j]
                };
                put(&mut puu, i, j, v);

                let v = if i == 0 {
                    puv.get(0, j) / q
                } else {
                    let yp = grid.x(i - 1);
                    let xi = phi2.inverse(p2[j] - p2[i] + p2[i - 1]);
                    let m = at(mu, xi);
                    let f = m * pvv.eval(yp, xi)
                        - 0.5
                            * h
                            * (m * g2[i - 1] * puv.eval(yp, xi) / mu[i - 1] + mu[j] * g2[i] * puv.get(i, j) / mu[i]);
                    f / mu[j]
                };
                put(&mut pvv, i, j, v);
            }
        }
        update
    })?;
    Ok(ObserverKernelSet {
        puu,
        puv,
        pvu,
        pvv,
        pplus: vec![0.0; n + 1],
        pminus: vec![0.0; n + 1],
        epsilon: 1.0,
        iterations,
    })
}

/// Output-injection gains
/// `P⁺(x) = −λ(1)Puu(x,1) + μ(1)ρ(1−ε)Puv(x,1)` and likewise `P⁻` from
/// `Pvu`, `Pvv`.
pub fn observer_gains(mut pset: ObserverKernelSet, params: &SystemParams, epsilon: f64) -> ObserverKernelSet {
    let n = params.grid.n_cells();
    let l1 = params.lambda[n];
    let m1 = params.mu[n] * params.rho * (1.0 - epsilon);
    pset.pplus = (0..=n)
        .map(|i| -l1 * pset.puu.get(i, n) + m1 * pset.puv.get(i, n))
        .collect();
    pset.pminus = (0..=n)
        .map(|i| -l1 * pset.pvu.get(i, n) + m1 * pset.pvv.get(i, n))
        .collect();
    pset.epsilon = epsilon;
    pset
}
