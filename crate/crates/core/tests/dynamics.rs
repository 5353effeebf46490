mod common;

use std::sync::Arc;

use approx::assert_relative_eq;
use common::{square, Mat};
use proptest::prelude::*;
use roaforge_core::bench;
use roaforge_core::dynamics::{
    discretize, matrix_exp, simulate, step_linear, Controller, FnField, LinearSystem, NonlinearSystem,
};

fn linear_plant(a: Mat, b: Mat) -> NonlinearSystem {
    let n = a.nrows();
    let m = b.ncols();
    NonlinearSystem::new(
        Arc::new(FnField(move |x: &[f64], u: &[f64], dx: &mut [f64]| {
            for i in 0..n {
                dx[i] = (0..n).map(|j| a[(i, j)] * x[j]).sum::<f64>() + (0..m).map(|j| b[(i, j)] * u[j]).sum::<f64>();
            }
        })),
        vec![0.0; n],
        vec![0.0; m],
        None,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponential_is_a_semigroup(a in square(4), s in 0.0..1.0f64, t in 0.0..1.0f64) {
        let lhs = matrix_exp(&a, s).unwrap() * matrix_exp(&a, t).unwrap();
        let rhs = matrix_exp(&a, s + t).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
    }

    #[test]
    fn zero_order_hold_composes(a in square(3), b_raw in prop::collection::vec(-1.0..1.0f64, 3), tau in 0.001..0.2f64) {
        let n = a.nrows();
        let b = Mat::from_vec(n, 1, b_raw[..n].to_vec());
        let lin = LinearSystem::new(a, b).unwrap();
        let one = discretize(&lin, tau).unwrap();
        let two = discretize(&lin, 2.0 * tau).unwrap();
        let a2 = &one.a * &one.a;
        let b2 = &one.a * &one.b + &one.b;
        prop_assert!((&two.a - a2).norm() <= 1e-10 * (1.0 + two.a.norm()));
        prop_assert!((&two.b - b2).norm() <= 1e-10 * (1.0 + two.b.norm()));
    }

    #[test]
    fn sampled_linear_plant_matches_the_discrete_step(
        a in square(3),
        raw in prop::collection::vec(-1.0..1.0f64, 6),
        x0 in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let n = a.nrows();
        let b = Mat::from_vec(n, 1, raw[..n].to_vec());
        let gain = Controller::new(Mat::from_vec(1, n, raw[3..3 + n].to_vec())).unwrap();
        let tau = 0.01;
        let dsys = discretize(&LinearSystem::new(a.clone(), b.clone()).unwrap(), tau).unwrap();
        let traj = simulate(&linear_plant(a, b), &gain, &x0[..n], tau, 20).unwrap();
        let mut x = x0[..n].to_vec();
        for (r, state) in traj.states.iter().enumerate() {
            for (got, want) in state.iter().zip(&x) {
                prop_assert!((got - want).abs() <= 1e-9, "step {}: {} vs {}", r, got, want);
            }
            x = step_linear(&dsys, &gain, &x).unwrap();
        }
    }
}

#[test]
fn every_benchmark_rests_at_its_equilibrium() {
    for name in bench::NAMES {
        let spec = bench::by_name(name).unwrap();
        let problem = spec.problem(0.01, Some(&vec![3; spec.state_dim()])).unwrap();
        let gain = roaforge_core::lqr::lqr_gain(&problem.dsys, &problem.weights).unwrap();
        let x0 = spec.plant.equilibrium_state().to_vec();
        let traj = simulate(&spec.plant, &gain, &x0, 0.01, 200).unwrap();
        assert!(!traj.diverged, "{name}");
        for (got, want) in traj.final_state().iter().zip(&x0) {
            assert_relative_eq!(*got, *want, epsilon = 1e-12);
        }
    }
}
