use super::{fixed_point, Orientation, TriangularField, KERNEL_MAX_ITERATIONS, KERNEL_TOLERANCE};
use crate::error::Result;
use crate::model::{build_transport_maps, interp, MonotoneMap, SystemParams};

/// Kernels of the direct transformation
/// `α = u − ∫₀ˣ (Kuu u + Kuv v)`, `β = v − ∫₀ˣ (Kvu u + Kvv v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub kuu: TriangularField,
    pub kuv: TriangularField,
    pub kvu: TriangularField,
    pub kvv: TriangularField,
    pub iterations: usize,
}

impl KernelSet {
    pub fn zeros(grid: &crate::model::SpatialGrid) -> Self {
        let z = TriangularField::zeros(grid, Orientation::Lower);
        Self {
            kuu: z.clone(),
            kuv: z.clone(),
            kvu: z.clone(),
            kvv: z,
            iterations: 0,
        }
    }

    pub fn fields(&self) -> [(&'static str, &TriangularField); 4] {
        [
            ("kuu", &self.kuu),
            ("kuv", &self.kuv),
            ("kvu", &self.kvu),
            ("kvv", &self.kvv),
        ]
    }
}

/// Solves the Goursat system
///
/// ```text
/// λ(x)Kuu_x + (λ(ξ)Kuu)_ξ = −γ2(ξ)Kuv      Kuu(x,0) = μ(0)Kuv(x,0)/(qλ(0))
/// λ(x)Kuv_x − (μ(ξ)Kuv)_ξ = −γ1(ξ)Kuu      Kuv(x,x) = γ1(x)/(λ(x)+μ(x))
/// μ(x)Kvu_x − (λ(ξ)Kvu)_ξ =  γ2(ξ)Kvv      Kvu(x,x) = −γ2(x)/(λ(x)+μ(x))
/// μ(x)Kvv_x + (μ(ξ)Kvv)_ξ =  γ1(ξ)Kvu      Kvv(x,0) = qλ(0)Kvu(x,0)/μ(0)
/// ```
///
/// by stepping one grid cell along each characteristic and sweeping the
/// lattice by increasing `x` until the update falls below tolerance.
pub fn solve_control_kernels(params: &SystemParams) -> Result<KernelSet> {
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
    let (phi1, phi2) = (&maps.phi1, &maps.phi2);
    let at = |v: &[f64], x: f64| interp(v, h, x);

    let mut ks = KernelSet::zeros(grid);
    let iterations = fixed_point("control kernels", KERNEL_TOLERANCE, KERNEL_MAX_ITERATIONS, || {
        let mut update: f64 = 0.0;
        let mut put = |f: &mut TriangularField, i: usize, j: usize, v: f64| {
            update = update.max((f.get(i, j) - v).abs());
            f.set(i, j, v);
        };
        for i in 0..=n {
            // Kuv and Kvu are carried from the diagonal toward ξ = 0.
            for j in (0..=i).rev() {
                let xi = grid.x(j);
                let v = if j == i {
                    g1[i] / (lam[i] + mu[i])
                } else {
                    let y = psi.inverse(phi1.values()[i] + phi2.values()[j]);
                    let src = g1[j] * ks.kuu.get(i, j);
                    let g = if y <= grid.x(j + 1) {
                        at(mu, y) * at(g1, y) / (at(lam, y) + at(mu, y))
                            - 0.5 * (y - xi) * (src + at(g1, y) * ks.kuu.eval(y, y))
                    } else {
                        let xp = phi1.inverse(phi1.values()[i] + phi2.values()[j] - phi2.values()[j + 1]);
                        mu[j + 1] * ks.kuv.eval(xp, grid.x(j + 1))
                            - 0.5 * h * (src + g1[j + 1] * ks.kuu.eval(xp, grid.x(j + 1)))
                    };
                    g / mu[j]
                };
                put(&mut ks.kuv, i, j, v);

                let v = if j == i {
                    -g2[i] / (lam[i] + mu[i])
                } else {
                    let y = psi.inverse(phi2.values()[i] + phi1.values()[j]);
                    let src = g2[j] * ks.kvv.get(i, j);
                    let hv = if y <= grid.x(j + 1) {
                        -at(lam, y) * at(g2, y) / (at(lam, y) + at(mu, y))
                            + 0.5 * (y - xi) * (src + at(g2, y) * ks.kvv.eval(y, y))
                    } else {
                        let xp = phi2.inverse(phi2.values()[i] + phi1.values()[j] - phi1.values()[j + 1]);
                        lam[j + 1] * ks.kvu.eval(xp, grid.x(j + 1))
                            + 0.5 * h * (src + g2[j + 1] * ks.kvv.eval(xp, grid.x(j + 1)))
                    };
                    hv / lam[j]
                };
                put(&mut ks.kvu, i, j, v);
            }
            // Kuu and Kvv are carried from ξ = 0 toward the diagonal.
            for j in 0..=i {
                let v = if j == 0 {
                    mu[0] * ks.kuv.get(i, 0) / (q * lam[0])
                } else {
                    let xp = phi1.inverse(phi1.values()[i] - phi1.values()[j] + phi1.values()[j - 1]);
                    let prev = grid.x(j - 1);
                    let f = lam[j - 1] * ks.kuu.eval(xp, prev)
                        - 0.5 * h * (g2[j - 1] * ks.kuv.eval(xp, prev) + g2[j] * ks.kuv.get(i, j));
                    f / lam[j]
                };
                put(&mut ks.kuu, i, j, v);

                let v = if j == 0 {
                    q * lam[0] * ks.kvu.get(i, 0) / mu[0]
                } else {
                    let xp = phi2.inverse(phi2.values()[i] - phi2.values()[j] + phi2.values()[j - 1]);
                    let prev = grid.x(j - 1);
                    let f = mu[j - 1] * ks.kvv.eval(xp, prev)
                        + 0.5 * h * (g1[j - 1] * ks.kvu.eval(xp, prev) + g1[j] * ks.kvu.get(i, j));
                    f / mu[j]
                };
                put(&mut ks.kvv, i, j, v);
            }
        }
        update
    })?;
    ks.iterations = iterations;
    Ok(ks)
}
