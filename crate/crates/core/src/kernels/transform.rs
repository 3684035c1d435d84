use super::{InverseKernelSet, KernelSet, TriangularField};

/// `∫₀^{x_i} (a(x_i,ξ) f(ξ) + b(x_i,ξ) g(ξ)) dξ` by the trapezoid rule.
#[inline]
pub(crate) fn volterra_row(a: &TriangularField, b: &TriangularField, f: &[f64], g: &[f64], i: usize, h: f64) -> f64 {
    if i == 0 {
        return 0.0;
    }
    let (ra, rb) = (a.row(i), b.row(i));
    let mut acc = 0.5 * (ra[0] * f[0] + rb[0] * g[0] + ra[i] * f[i] + rb[i] * g[i]);
    for j in 1..i {
        acc += ra[j] * f[j] + rb[j] * g[j];
    }
    h * acc
}

/// `(α, β) = Γ(u, v)`.
pub fn apply_transform(u: &[f64], v: &[f64], kernels: &KernelSet) -> (Vec<f64>, Vec<f64>) {
    let n = kernels.kuu.n_cells();
    let h = 1.0 / n as f64;
    let alpha = (0..=n)
        .map(|i| u[i] - volterra_row(&kernels.kuu, &kernels.kuv, u, v, i, h))
        .collect();
    let beta = (0..=n)
        .map(|i| v[i] - volterra_row(&kernels.kvu, &kernels.kvv, u, v, i, h))
        .collect();
    (alpha, beta)
}

/// `(u, v) = Γ⁻¹(α, β)`.
pub fn apply_inverse(alpha: &[f64], beta: &[f64], lset: &InverseKernelSet) -> (Vec<f64>, Vec<f64>) {
    let n = lset.laa.n_cells();
    let h = 1.0 / n as f64;
    let u = (0..=n)
        .map(|i| alpha[i] + volterra_row(&lset.laa, &lset.lab, alpha, beta, i, h))
        .collect();
    let v = (0..=n)
        .map(|i| beta[i] + volterra_row(&lset.lba, &lset.lbb, alpha, beta, i, h))
        .collect();
    (u, v)
}
