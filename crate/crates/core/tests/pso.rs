use proptest::prelude::*;
use roaforge_core::certificate::{build_grid, CertifyOptions, ExemptionRadius};
use roaforge_core::dynamics::DiscreteLinearSystem;
use roaforge_core::linalg::Matrix;
use roaforge_core::lqr::CostWeights;
use roaforge_core::pso::{
    baseline, synthesize, synthesize_controller, CandidateKind, Evaluation, FitnessSpec, Objective, PsoParams,
    SynthesisProblem,
};

/// Shifted quadratic bowl with its minimum at `center`.
struct Bowl {
    center: Vec<f64>,
}

impl Objective for Bowl {
    type Detail = ();

    fn dim(&self) -> usize {
        self.center.len()
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation<()> {
        Evaluation {
            fitness: x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum(),
            detail: (),
        }
    }
}

fn bounds(dim: usize) -> (Vec<f64>, Vec<f64>) {
    (vec![-3.0; dim], vec![2.0; dim])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn swarm_respects_bounds_and_history_is_monotone(
        center in prop::collection::vec(-4.0..4.0f64, 1..=4),
        seed in any::<u64>(),
        particles in 2..20usize,
    ) {
        let dim = center.len();
        let (lo, hi) = bounds(dim);
        let mut params = PsoParams::trelea(seed, particles, lo.clone(), hi.clone());
        params.max_iter = 200;
        let res = synthesize(&mut Bowl { center }, &params).unwrap();
        for (g, (l, h)) in res.gbest.iter().zip(lo.iter().zip(&hi)) {
            prop_assert!(l <= g && g <= h);
        }
        prop_assert!(res.iterations_run <= 200);
        prop_assert!(res.history.windows(2).all(|w| w[1].gbest_fitness <= w[0].gbest_fitness));
        prop_assert_eq!(res.history.last().unwrap().gbest_fitness, res.gbest_fitness);
    }

    #[test]
    fn equal_seeds_give_equal_runs(seed in any::<u64>()) {
        let (lo, hi) = bounds(3);
        let mut params = PsoParams::trelea(seed, 8, lo, hi);
        params.max_iter = 100;
        let a = synthesize(&mut Bowl { center: vec![0.5, -1.0, 0.0] }, &params).unwrap();
        let b = synthesize(&mut Bowl { center: vec![0.5, -1.0, 0.0] }, &params).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}

fn problem() -> SynthesisProblem {
    SynthesisProblem {
        dsys: DiscreteLinearSystem::new(
            Matrix::from_row_slice(2, 2, &[1.0, 0.01, 0.1, 0.999]),
            Matrix::from_row_slice(2, 1, &[0.0, 0.01]),
            0.01,
        )
        .unwrap(),
        weights: CostWeights::identity(2, 1),
        grid: build_grid(&[-1.0, -1.0], &[1.0, 1.0], &[21, 21]).unwrap(),
        certify: CertifyOptions {
            exemption: ExemptionRadius::Absolute(0.2),
        },
    }
}

#[test]
fn scaling_both_weights_keeps_the_optimum() {
    let problem = problem();
    let base = baseline(&problem, &CandidateKind::Quadratic).unwrap();
    let spec = |scale: f64| FitnessSpec {
        w1: scale,
        w2: 0.5 * scale,
        baseline_cost: base.cost,
        baseline_roa: base.estimate.size_cells.max(1) as f64,
        candidate_kind: CandidateKind::Quadratic,
    };
    let mut params = PsoParams::trelea(3, 10, vec![0.0, 0.0], vec![30.0, 30.0]);
    params.max_iter = 300;
    let reference = synthesize_controller(&problem, spec(1.0), &params).unwrap();
    for scale in [0.25, 4.0] {
        let scaled = synthesize_controller(&problem, spec(scale), &params).unwrap();
        assert_eq!(scaled.result.gbest, reference.result.gbest, "scale {scale}");
    }
}
