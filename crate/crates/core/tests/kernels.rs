use hyperreg_core::kernels::{
    observer_gains, realizability_factor, solve_control_kernels, solve_integral_weights, solve_inverse_kernels,
    solve_observer_kernels, write_fields_csv, TriangularField,
};
use hyperreg_core::model::{trapezoid, SpatialGrid, SystemParams};

fn variable(n: usize) -> SystemParams {
    SystemParams::from_fns(
        &SpatialGrid::new(n).unwrap(),
        |x| 1.0 + 0.5 * x,
        |x| 2.0 - x * x,
        |x| 0.5 + (3.0 * x).sin(),
        |x| -0.4 + x,
        0.8,
        0.3,
    )
}

#[test]
fn uncoupled_plant_has_zero_kernels() {
    let p = SystemParams::constant(&SpatialGrid::new(20).unwrap(), 1.0, 2.0, 0.0, 0.0, 0.8, 0.3);
    let k = solve_control_kernels(&p).unwrap();
    let o = solve_observer_kernels(&p).unwrap();
    for f in k.fields().iter().map(|f| f.1).chain(o.fields().iter().map(|f| f.1)) {
        assert_eq!(f.sup_norm(), 0.0);
    }
}

#[test]
fn diagonal_and_boundary_conditions() {
    let p = variable(80);
    let n = 80;
    let k = solve_control_kernels(&p).unwrap();
    let o = solve_observer_kernels(&p).unwrap();
    for i in 0..=n {
        let s = p.lambda[i] + p.mu[i];
        assert!((k.kuv.get(i, i) - p.gamma1[i] / s).abs() < 1e-12);
        assert!((k.kvu.get(i, i) + p.gamma2[i] / s).abs() < 1e-12);
        assert!((o.puv.get(i, i) - p.gamma1[i] / s).abs() < 1e-12);
        assert!((o.pvu.get(i, i) + p.gamma2[i] / s).abs() < 1e-12);
        let r = p.mu[0] / (p.q * p.lambda[0]);
        assert!((k.kuu.get(i, 0) - r * k.kuv.get(i, 0)).abs() < 1e-10);
        assert!((k.kvv.get(i, 0) - k.kvu.get(i, 0) / r).abs() < 1e-10);
        assert!((o.puu.get(0, i) - p.q * o.pvu.get(0, i)).abs() < 1e-10);
        assert!((o.puv.get(0, i) - p.q * o.pvv.get(0, i)).abs() < 1e-10);
    }
}

fn max_diff(a: &[(&'static str, &TriangularField)], b: &[(&'static str, &TriangularField)]) -> f64 {
    a.iter()
        .zip(b)
        .map(|((_, x), (_, y))| x.max_diff_coarse(y).unwrap())
        .fold(0.0, f64::max)
}

#[test]
fn kernels_converge_at_first_order() {
    let k: Vec<_> = [40, 80, 160]
        .iter()
        .map(|&n| solve_control_kernels(&variable(n)).unwrap())
        .collect();
    let o: Vec<_> = [40, 80, 160]
        .iter()
        .map(|&n| solve_observer_kernels(&variable(n)).unwrap())
        .collect();
    let (c1, c2) = (
        max_diff(&k[0].fields(), &k[1].fields()),
        max_diff(&k[1].fields(), &k[2].fields()),
    );
    let (o1, o2) = (
        max_diff(&o[0].fields(), &o[1].fields()),
        max_diff(&o[1].fields(), &o[2].fields()),
    );
    assert!(c2 / c1 < 0.65, "{c1} {c2}");
    assert!(o2 / o1 < 0.65, "{o1} {o2}");
}

#[test]
fn inverse_kernels_satisfy_resolvent_identity() {
    let n = 60;
    let p = variable(n);
    let h = p.grid.h();
    let k = solve_control_kernels(&p).unwrap();
    let l = solve_inverse_kernels(&k, &p.grid).unwrap();
    // L(x,ξ) = K(x,ξ) + ∫_ξ^x L(x,s) K(s,ξ) ds, checked at interior nodes.
    let lk = [(&l.laa, &l.lab), (&l.lba, &l.lbb)];
    let kk = [(&k.kuu, &k.kuv), (&k.kvu, &k.kvv)];
    let mut worst: f64 = 0.0;
    for i in (0..=n).step_by(7) {
        for j in (0..=i).step_by(5) {
            for (r, (la, lb)) in lk.iter().enumerate() {
                for (c, lfield) in [&l.laa, &l.lab, &l.lba, &l.lbb][2 * r..2 * r + 2].iter().enumerate() {
                    let kfield = [kk[r].0, kk[r].1][c];
                    let (ka, kb) = [(&k.kuu, &k.kvu), (&k.kuv, &k.kvv)][c];
                    let integrand: Vec<f64> = (j..=i)
                        .map(|s| la.get(i, s) * ka.get(s, j) + lb.get(i, s) * kb.get(s, j))
                        .collect();
                    let int = if integrand.len() > 1 {
                        trapezoid(&integrand, h)
                    } else {
                        0.0
                    };
                    worst = worst.max((lfield.get(i, j) - kfield.get(i, j) - int).abs());
                }
            }
        }
    }
    assert!(worst < 1e-10, "{worst}");
}

#[test]
fn integral_weights_match_their_definitions() {
    let n = 100;
    let p = variable(n);
    let h = p.grid.h();
    let k = solve_control_kernels(&p).unwrap();
    let l = solve_inverse_kernels(&k, &p.grid).unwrap();
    let w = solve_integral_weights(&l, &p).unwrap();
    assert!(realizability_factor(&l, p.q).abs() > 1e-6);
    assert_eq!(w.l2[n], 0.0);
    for i in [0, 30, 77] {
        let tail = trapezoid(&l.lab.row(n)[i..], h);
        assert!((w.l2[i] * p.mu[i] - tail).abs() < 1e-12);
        let head = if i == 0 { 0.0 } else { trapezoid(&l.laa.row(n)[..=i], h) };
        assert!((w.l1[i] * p.lambda[i] - p.mu[0] * w.l2[0] / p.q - head).abs() < 1e-12);
    }
    assert!((w.boundary_factor - 1.0 - w.l1[n] * p.lambda[n]).abs() < 1e-15);
}

#[test]
fn observer_gains_scale_with_trust() {
    let p = variable(40);
    let base = solve_observer_kernels(&p).unwrap();
    let full = observer_gains(base.clone(), &p, 1.0);
    let half = observer_gains(base, &p, 0.5);
    assert_eq!(full.epsilon, 1.0);
    // At ε = 1 the reflected part of the gain vanishes.
    for i in 0..=40 {
        assert!((full.pplus[i] + p.lambda[40] * full.puu.get(i, 40)).abs() < 1e-14);
        assert!(half.pplus[i].is_finite() && half.pminus[i].is_finite());
    }
}

#[test]
fn kernel_export_round_trips_through_csv() {
    let p = variable(6);
    let k = solve_control_kernels(&p).unwrap();
    let mut buf = Vec::new();
    write_fields_csv(&mut buf, &p.grid, &k.fields()).unwrap();
    let mut rdr = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rdr.headers().unwrap().len(), 6);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 28);
    let last = &rows[27];
    let v: f64 = last[2].parse().unwrap();
    assert_eq!(v, k.kuu.get(6, 6));
}
