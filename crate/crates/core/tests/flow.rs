use hesse_core::dsl::PotentialField;
use hesse_core::flow::{
    flow_step, run_flow, self_similarity_diagnostic, torus_integrals, Boundary, MetricGrid, Scheme,
};

fn sin_sin(x: &[f64]) -> f64 {
    0.05 * x[0].sin() * x[1].sin()
}

fn integrate(grid: &MetricGrid, dt: f64, steps: usize, scheme: Scheme) -> MetricGrid {
    let mut g = grid.clone();
    for _ in 0..steps {
        g = flow_step(&g, dt, scheme).unwrap();
    }
    g
}

fn max_diff(a: &MetricGrid, b: &MetricGrid) -> f64 {
    a.state.iter().zip(&b.state).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn einstein_patch_scales_linearly() {
    let cone = PotentialField::builtin_family("log_cone", 2, None, None).unwrap();
    let g0 = MetricGrid::patch_from_field(&cone, &[-0.16, 0.84], 33, 1e-2, Boundary::einstein(1.0))
        .unwrap();
    let g = integrate(&g0, 1e-3, 100, Scheme::Rk4);
    assert!((g.t - 0.1).abs() < 1e-12);
    let mut worst: f64 = 0.0;
    for idx in 0..g.lattice.len() {
        if g.lattice.is_interior(idx) {
            for c in 0..3 {
                worst = worst.max((g.state[idx * 3 + c] - 1.2 * g0.state[idx * 3 + c]).abs());
            }
        }
    }
    assert!(worst < 1e-6, "interior error {worst}");
    let ss = self_similarity_diagnostic(&g, &g0).unwrap();
    assert!((ss.c_hat - 1.2).abs() < 1e-6 && ss.self_similar, "{ss:?}");
}

#[test]
fn euler_and_rk4_agree_and_rk4_is_fourth_order() {
    let g0 = MetricGrid::torus_potential(2, 32, sin_sin).unwrap();
    let euler = integrate(&g0, 1e-3, 50, Scheme::Euler);
    let rk4 = integrate(&g0, 1e-3, 50, Scheme::Rk4);
    assert!(max_diff(&euler, &rk4) < 1e-5);

    let a = integrate(&g0, 2e-3, 25, Scheme::Rk4);
    let c = integrate(&g0, 5e-4, 100, Scheme::Rk4);
    let order = (max_diff(&a, &rk4) / max_diff(&rk4, &c)).log2();
    assert!(order >= 3.5, "order {order}");
}

#[test]
fn stokes_identity_survives_the_flow() {
    let g0 = MetricGrid::torus_potential(2, 128, sin_sin).unwrap();
    let run = run_flow(&g0, 1e-3, 50, Scheme::Rk4).unwrap();
    assert!(run.blow_up.is_none());
    for r in &run.diagnostics.records {
        let (b, a) = (r.int_beta_trace.unwrap(), r.int_alpha_sq.unwrap());
        assert!((b - a).abs() < 1e-7, "t = {}: {}", r.t, b - a);
        assert!(a >= 0.0);
    }
    let last = torus_integrals(&run.grid).unwrap();
    assert!(last.divergence.abs() < 1e-7);
    let ss = self_similarity_diagnostic(&run.grid, &g0).unwrap();
    assert!(!ss.self_similar, "{ss:?}");
}
