use decaylab::grid::{build_damping, build_grid_1d, build_grid_2d_disk, DampingKind, DampingProfile, ExteriorGrid};
use decaylab::solver::{
    energy, make_initial_compact, prepare_initial, run, staggered_energy, BumpMode, RunOptions,
    SolverParams, Stepper, SupportCheck, WaveState,
};

fn undamped(g: &ExteriorGrid) -> DampingProfile {
    let mut d = build_damping(g, DampingKind::Constant, 1.0, 1.0, 1.0).unwrap();
    d.values.iter_mut().for_each(|a| *a = 0.0);
    d
}

#[test]
fn bump_energy_matches_quadrature() {
    // u = (1 - s^2)^3 with s = (x - c)/ρ gives ∫ u'^2 = (36/ρ) ∫_{-1}^{1} s^2 (1 - s^2)^4 ds
    let rho = 1.5;
    let integral = 2.0 * (1.0 / 3.0 - 4.0 / 5.0 + 6.0 / 7.0 - 4.0 / 9.0 + 1.0 / 11.0);
    let exact = 0.5 * 36.0 / rho * integral;
    let g = build_grid_1d(1.0, 11.0, 1000).unwrap();
    let (u0, _) = make_initial_compact(&g, &[4.0], rho, 1.0, BumpMode::BumpU).unwrap();
    let state = WaveState {
        v: vec![0.0; u0.len()],
        u: u0,
        t: 0.0,
    };
    let e = energy(&state, &g);
    assert!((e - exact).abs() <= 2e-2 * exact, "{e} vs {exact}");
}

#[test]
fn undamped_energy_drift_is_negligible_1d() {
    let g = build_grid_1d(0.0, 250.0, 2500).unwrap();
    let d = undamped(&g);
    let (u0, u1) = make_initial_compact(&g, &[20.0], 2.0, 1.0, BumpMode::Both).unwrap();
    let p = SolverParams::new(&g, 0.9, 2.0, 100.0).unwrap();
    let init = prepare_initial(u0, u1, &g, &d, &p).unwrap();
    let e0 = staggered_energy(&init, &g, p.dt);
    let out = run(&g, &d, &init, &p, &RunOptions::default(), &mut ()).unwrap();
    assert_eq!(out.d_cum, 0.0);
    let e = staggered_energy(&out.final_state, &g, p.dt);
    assert!((e - e0).abs() <= 1e-6 * e0, "{e0} -> {e}");
}

#[test]
fn undamped_energy_drift_is_negligible_2d() {
    let g = build_grid_2d_disk(1.0, 12.0, 0.1).unwrap();
    let d = undamped(&g);
    let (u0, u1) = make_initial_compact(&g, &[3.0, 0.0], 1.0, 1.0, BumpMode::BumpU).unwrap();
    let p = SolverParams::new(&g, 0.9, 2.0, 5.0).unwrap();
    let init = prepare_initial(u0, u1, &g, &d, &p).unwrap();
    let e0 = staggered_energy(&init, &g, p.dt);
    let out = run(&g, &d, &init, &p, &RunOptions::default(), &mut ()).unwrap();
    let e = staggered_energy(&out.final_state, &g, p.dt);
    assert!((e - e0).abs() <= 1e-10 * e0, "{e0} -> {e}");
}

#[test]
fn zero_horizon_gives_one_sample() {
    let g = build_grid_1d(0.5, 20.0, 195).unwrap();
    let d = build_damping(&g, DampingKind::Constant, 1.0, 1.0, 1.0).unwrap();
    let (u0, u1) = make_initial_compact(&g, &[3.0], 1.0, 1.0, BumpMode::BumpU).unwrap();
    let p = SolverParams::new(&g, 0.5, 2.0, 0.0).unwrap();
    let init = prepare_initial(u0, u1, &g, &d, &p).unwrap();
    let out = run(&g, &d, &init, &p, &RunOptions::default(), &mut ()).unwrap();
    assert_eq!((out.steps, out.samples), (0, 1));
    assert_eq!(out.final_state, init);
}

#[test]
fn constant_damping_dissipates() {
    let g = build_grid_1d(0.5, 30.0, 295).unwrap();
    let d = build_damping(&g, DampingKind::Constant, 1.0, 1.0, 1.0).unwrap();
    let (u0, u1) = make_initial_compact(&g, &[3.0], 1.0, 1.0, BumpMode::Both).unwrap();
    let p = SolverParams::new(&g, 0.5, 2.0, 10.0).unwrap();
    let init = prepare_initial(u0, u1, &g, &d, &p).unwrap();
    let e0 = energy(&init, &g);
    let out = run(&g, &d, &init, &p, &RunOptions::default(), &mut ()).unwrap();
    assert!(out.d_cum > 0.0);
    assert!(energy(&out.final_state, &g) < e0);
}

#[test]
fn unit_cfl_in_1d_respects_the_cone() {
    let g = build_grid_1d(1.0, 40.0, 390).unwrap();
    let d = build_damping(&g, DampingKind::Constant, 0.5, 1.0, 0.5).unwrap();
    let (u0, u1) = make_initial_compact(&g, &[2.0], 1.0, 1.0, BumpMode::Both).unwrap();
    let p = SolverParams::new(&g, 1.0, 1.5, 30.0).unwrap();
    let init = prepare_initial(u0, u1, &g, &d, &p).unwrap();
    let opts = RunOptions {
        sample_stride: 1,
        support: Some(SupportCheck {
            radius: 3.0,
            threshold: 1e-12,
            strict: true,
        }),
    };
    let out = run(&g, &d, &init, &p, &opts, &mut ()).unwrap();
    assert!(out.support_excess.unwrap() <= 0.0);
}

#[test]
fn stepping_is_reproducible() {
    let g = build_grid_1d(0.5, 20.0, 195).unwrap();
    let d = build_damping(&g, DampingKind::Constant, 2.0, 1.0, 2.0).unwrap();
    let (u0, u1) = make_initial_compact(&g, &[3.0], 1.0, 1.0, BumpMode::Both).unwrap();
    let p = SolverParams::new(&g, 0.7, 2.5, 5.0).unwrap();
    let init = prepare_initial(u0, u1, &g, &d, &p).unwrap();
    let out = run(&g, &d, &init, &p, &RunOptions::default(), &mut ()).unwrap();
    let mut state = init.clone();
    let mut stepper = Stepper::new(&g, &d, p).unwrap();
    for _ in 0..p.steps() {
        stepper.advance(&mut state).unwrap();
    }
    assert_eq!(state.u, out.final_state.u);
    assert_eq!(state.v, out.final_state.v);
}
