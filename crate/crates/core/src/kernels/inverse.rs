use super::{KernelSet, Orientation, TriangularField};
use crate::error::{Error, Result};
use crate::model::SpatialGrid;

/// Kernels of the inverse transformation
/// `u = α + ∫₀ˣ (Laa α + Lab β)`, `v = β + ∫₀ˣ (Lba α + Lbb β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseKernelSet {
    pub laa: TriangularField,
    pub lab: TriangularField,
    pub lba: TriangularField,
    pub lbb: TriangularField,
}

impl InverseKernelSet {
    pub fn fields(&self) -> [(&'static str, &TriangularField); 4] {
        [
            ("laa", &self.laa),
            ("lab", &self.lab),
            ("lba", &self.lba),
            ("lbb", &self.lbb),
        ]
    }
}

type M2 = [[f64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

/// Solves the reciprocity relation `L(x,ξ) = K(x,ξ) + ∫_ξ^x L(x,s)K(s,ξ)ds`
/// row by row. On each row the trapezoid rule turns it into a sequence of
/// 2×2 linear solves marching from the diagonal toward `ξ = 0`.
pub fn solve_inverse_kernels(kernels: &KernelSet, grid: &SpatialGrid) -> Result<InverseKernelSet> {
    let n = grid.n_cells();
    if kernels.kuu.n_cells() != n {
        return Err(Error::Parameter("kernels do not match the grid".into()));
    }
    let h = grid.h();
    let k = |i: usize, j: usize| -> M2 {
        [
            [kernels.kuu.get(i, j), kernels.kuv.get(i, j)],
            [kernels.kvu.get(i, j), kernels.kvv.get(i, j)],
        ]
    };
    let mut out = InverseKernelSet {
        laa: TriangularField::zeros(grid, Orientation::Lower),
        lab: TriangularField::zeros(grid, Orientation::Lower),
        lba: TriangularField::zeros(grid, Orientation::Lower),
        lbb: TriangularField::zeros(grid, Orientation::Lower),
    };
    let mut row: Vec<M2> = vec![[[0.0; 2]; 2]; n + 1];
    for i in 0..=n {
        row[i] = k(i, i);
        for j in (0..i).rev() {
            let mut rhs = k(i, j);
            let mut add = |m: M2, w: f64| {
                for a in 0..2 {
                    for b in 0..2 {
                        rhs[a][b] += w * m[a][b];
                    }
                }
            };
            add(mul(&row[i], &k(i, j)), 0.5 * h);
            for (s, r) in row.iter().enumerate().take(i).skip(j + 1) {
                add(mul(r, &k(s, j)), h);
            }
            // L(i,j) (I − h/2 K(j,j)) = rhs
            let kd = k(j, j);
            let a = [
                [1.0 - 0.5 * h * kd[0][0], -0.5 * h * kd[0][1]],
                [-0.5 * h * kd[1][0], 1.0 - 0.5 * h * kd[1][1]],
            ];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-12 {
                return Err(Error::Solver {
                    what: "inverse kernels",
                    iterations: i,
                    last_update: det,
                    history: vec![det],
                });
            }
            let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
            row[j] = mul(&rhs, &inv);
        }
        for (j, m) in row.iter().enumerate().take(i + 1) {
            out.laa.set(i, j, m[0][0]);
            out.lab.set(i, j, m[0][1]);
            out.lba.set(i, j, m[1][0]);
            out.lbb.set(i, j, m[1][1]);
        }
    }
    if !out.laa.all_finite() || !out.lbb.all_finite() || !out.lab.all_finite() || !out.lba.all_finite() {
        return Err(Error::Solver {
            what: "inverse kernels",
            iterations: n,
            last_update: f64::NAN,
            history: Vec::new(),
        });
    }
    Ok(out)
}
