use stablehk::model::ModelParams;
use stablehk::simulator::pde::{
    contraction_and_ultracontractivity_check, free_gaussian_oracle, gaussian_bump, propagate_with,
    relative_l1, PropagateOptions,
};
use stablehk::simulator::{Direction, GridSpec, SimConfig};

fn config(kappa: f64, t: f64) -> SimConfig {
    let p = if kappa == 0.0 {
        ModelParams::free(3, 1.5, 1e-2).unwrap()
    } else {
        ModelParams::new(3, 1.5, kappa, 1e-2).unwrap()
    };
    SimConfig::new(p, t, 10_000, 1)
}

#[test]
fn free_grid_evolution_matches_periodized_oracle() {
    let c = config(0.0, 1.0);
    let f0 = gaussian_bump(c.grid, [0.0; 3], 1.0);
    let run = propagate_with(&f0, Direction::FokkerPlanck, &c, &PropagateOptions::default()).unwrap();
    let oracle = free_gaussian_oracle(c.grid, 1.5, 1.0, 1.0).unwrap();
    let err = relative_l1(&run.field, &oracle);
    println!("free L1 error {err:e}, oracle mass {}", oracle.integral());
    assert!(err < 1e-3, "{err}");
}

#[test]
fn fokker_planck_conserves_mass() {
    let c = config(5.0, 0.5);
    let f0 = gaussian_bump(c.grid, [0.5, 0.0, 0.0], 0.7);
    let run = propagate_with(&f0, Direction::FokkerPlanck, &c, &PropagateOptions::default()).unwrap();
    let m0 = run.mass_history[0];
    let drift = run.mass_history.iter().map(|m| (m - m0).abs()).fold(0.0, f64::max) / m0;
    println!("mass drift {drift:e} over {} steps, min {:e}", run.steps, run.min_history.iter().cloned().fold(f64::INFINITY, f64::min));
    assert!(drift / c.t_final <= 1e-6);
    assert!(run.min_history.iter().all(|m| *m >= -1e-10));
}

#[test]
fn forward_max_norm_nonincreasing() {
    let c = config(5.0, 0.5);
    let rep = contraction_and_ultracontractivity_check(&c, &[([0.3, 0.0, 0.0], 0.6)]).unwrap();
    println!("{rep:?}");
    assert!(rep.passed);
}

#[test]
fn cfl_violation_is_a_config_error() {
    let mut c = config(5.0, 0.5);
    c.dt = Some(0.5);
    c.params = c.params.with_eps(1e-4);
    let f0 = gaussian_bump(GridSpec::default(), [0.0; 3], 1.0);
    assert!(propagate_with(&f0, Direction::FokkerPlanck, &c, &PropagateOptions::default()).is_err());
}
