use std::f64::consts::PI;

use hyperreg_core::control::{integrator_step, state_feedback_ubs, ControllerState, FeedbackLaw, Mode};
use hyperreg_core::kernels::apply_transform;
use hyperreg_core::model::{trapezoid, DisturbanceSet, SpatialGrid, SystemParams, TimeSignal};
use hyperreg_core::plant::{step_plant, FieldState, SimConfig, TraceLog};
use hyperreg_core::sim::{run_closed_loop, ClosedLoop, Design, EpsilonChoice, GainChoice};
use proptest::prelude::*;

fn design(n: usize) -> Design {
    let g = SpatialGrid::new(n).unwrap();
    let p = SystemParams::from_fns(
        &g,
        |x| 1.0 + 0.3 * x,
        |x| 1.2 - 0.2 * x,
        |x| 0.5 * (1.0 + x),
        |_| 0.4,
        0.8,
        0.3,
    );
    Design::new(p, 0.6, GainChoice::Auto { margin: 0.5 }, EpsilonChoice::Auto).unwrap()
}

fn bump(g: &SpatialGrid) -> FieldState {
    FieldState {
        u: g.sample(|x| (PI * x).sin()),
        v: g.sample(|x| 0.5 * (PI * x).sin().powi(2)),
        t: 0.0,
    }
}

/// Largest violation of `β(1) = (ρ−ρ̃)α(1) + k_I η − k_I∫(l1α + l2β)`
/// along a disturbance-free state-feedback run.
fn boundary_identity_defect(n: usize) -> f64 {
    let d = design(n);
    let p = &d.params;
    let h = p.grid.h();
    let dt = SimConfig::from_cfl(p, 1.0, 1.0).dt;
    let dist = DisturbanceSet::none(&p.grid);
    let law = FeedbackLaw::state(&d.kernels, &d.lset, &d.weights, p, &d.config);
    let mut s = bump(&p.grid);
    let mut ctrl = ControllerState::new(Mode::StateFeedback, s.u[n]);
    let mut u_ctl = law.eval(&s.u, &s.v, 0.0);
    let mut worst: f64 = 0.0;
    for _ in 0..(3.0 / dt) as usize {
        s = step_plant(&s, p, &dist, u_ctl, dt).unwrap();
        ctrl = integrator_step(ctrl, s.u[n], dt);
        u_ctl = law.eval(&s.u, &s.v, 0.0) + d.config.k_i * ctrl.eta;
        let (a, b) = apply_transform(&s.u, &s.v, &d.kernels);
        let w: Vec<f64> = (0..=n)
            .map(|i| d.weights.l1[i] * a[i] + d.weights.l2[i] * b[i])
            .collect();
        let rhs = (p.rho - d.config.rho_tilde) * a[n] + d.config.k_i * (ctrl.eta - trapezoid(&w, h));
        worst = worst.max((b[n] - rhs).abs());
    }
    worst
}

#[test]
fn closed_loop_boundary_identity_is_first_order() {
    let e1 = boundary_identity_defect(50);
    let e2 = boundary_identity_defect(100);
    assert!(e1 < 0.2, "{e1}");
    assert!(e2 / e1 < 0.6, "{e1} {e2}");
}

fn trace(d: &Design, dist: DisturbanceSet, horizon: f64) -> TraceLog {
    run_closed_loop(
        d,
        &ClosedLoop {
            mode: Mode::StateFeedback,
            dist,
            sim: SimConfig::from_cfl(&d.params, 1.0, horizon),
            initial: bump(&d.params.grid),
            initial_eta: 0.0,
            observer_initial: None,
        },
    )
    .unwrap()
}

#[test]
fn noisy_runs_are_deterministic() {
    let d = design(40);
    let mut dist = DisturbanceSet::none(&d.params.grid);
    dist.noise = TimeSignal::UniformNoise {
        amplitude: 0.1,
        seed: 42,
        interval: 0.05,
    };
    dist.d4 = TimeSignal::sinusoid(0.2, 1.0, 0.0);
    let a = trace(&d, dist.clone(), 5.0);
    let b = trace(&d, dist, 5.0);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn output_converges_under_grid_refinement() {
    let sample = |n: usize| {
        let tr = trace(&design(n), DisturbanceSet::none(&SpatialGrid::new(n).unwrap()), 4.0);
        (0..=8)
            .map(|k| {
                let t = 0.5 * k as f64;
                tr.rows
                    .iter()
                    .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
                    .unwrap()
                    .y
            })
            .collect::<Vec<f64>>()
    };
    let (a, b, c) = (sample(50), sample(100), sample(200));
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let (d1, d2) = (diff(&a, &b), diff(&b, &c));
    assert!(d2 < 0.7 * d1, "{d1} {d2}");
}

#[test]
fn open_loop_growth_is_not_clamped() {
    let g = SpatialGrid::new(40).unwrap();
    let p = SystemParams::constant(&g, 1.0, 1.0, 2.0, 2.0, 1.0, 0.95);
    let dist = DisturbanceSet::none(&g);
    let dt = g.h();
    let mut s = bump(&g);
    let n0 = s.u.iter().chain(&s.v).fold(0.0f64, |m, x| m.max(x.abs()));
    for _ in 0..(20.0 / dt) as usize {
        s = step_plant(&s, &p, &dist, 0.0, dt).unwrap();
    }
    let n1 = s.u.iter().chain(&s.v).fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(n1 > 10.0 * n0, "{n0} {n1}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn state_law_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, k in 1usize..5) {
        let d = design(16);
        let p = &d.params;
        let f1 = p.grid.sample(|x| (k as f64 * x).sin());
        let g1 = p.grid.sample(|x| x * x);
        let f2 = p.grid.sample(|x| (x - 0.5).abs());
        let g2 = p.grid.sample(|x| (3.0 * x).cos());
        let law = |u: &[f64], v: &[f64]| state_feedback_ubs(u, v, &d.kernels, &d.lset, &d.weights, p, &d.config);
        let u: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
        let v: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let lhs = law(&u, &v);
        let rhs = a * law(&f1, &g1) + b * law(&f2, &g2);
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
    }
}
