use stablehk::model::ModelParams;
use stablehk::simulator::SimConfig;
use stablehk::verifier::*;

fn params() -> ModelParams {
    ModelParams::new(3, 1.5, 5.0, 1e-3).unwrap()
}

#[test]
fn restarted_paths_match_direct_paths() {
    let mut c = SimConfig::new(params(), 0.5, 100_000, 3);
    c.blocks = 20;
    // The outward drift carries most of the mass to |y| ≈ 4 by time 1.
    let spots: Vec<Vec<f64>> = [3.0, 4.0, 5.0, 6.0].iter().map(|r| vec![*r, 0.0, 0.0]).collect();
    let ck = chapman_kolmogorov_check(&[1.0, 0.0, 0.0], &c, &spots).unwrap();
    println!("{ck:?}");
    assert_eq!(ck.compared, 4);
    assert!(ck.passed, "max z {}", ck.max_z);
}

#[test]
fn desingularizing_ratios_are_refinement_stable() {
    let reps = verify_desingularizing_l1(&params().with_eps(1e-6), 1.0, &DESING_RADII, &RadialSettings::default()).unwrap();
    for r in &reps {
        println!("{} {} drift {}", r.part, r.value, r.drift);
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.notes);
    }
}

#[test]
fn integral_lower_bound_is_positive_and_stable() {
    let p = params();
    let bumps = default_bumps(p.alpha, 1.0);
    let r = verify_integral_lower(&p, 1.0, &bumps, &RadialSettings::default(), Default::default(), None).unwrap();
    println!("nu {} drift {}", r.value, r.drift);
    assert!(r.value > 0.0 && r.value < 1.0);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn bumps_outside_the_box_margin_are_rejected() {
    let p = params();
    let far = vec![([3.5, 0.0, 0.0], 0.6)];
    assert!(verify_integral_lower(&p, 1.0, &far, &RadialSettings::default(), Default::default(), None).is_err());
}

#[test]
fn suite_rescaling_follows_parabolic_scaling() {
    let s = Suite::new(SimConfig::new(params(), 1.0, 10_000, 1), Design::default());
    let r = s.rescaled(8.0);
    let lambda = 8f64.powf(1.0 / 1.5);
    assert_eq!(r.design.t, 8.0);
    assert!((r.config.params.eps / 1e-3 - lambda * lambda).abs() < 1e-12);
    assert!((r.config.grid.box_size / s.config.grid.box_size - lambda).abs() < 1e-12);
}
