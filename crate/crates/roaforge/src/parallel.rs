//! Data-parallel swarm evaluation.

use rayon::prelude::*;
use roaforge_core::pso::{Evaluation, Objective};

/// Evaluates each swarm batch on the rayon pool. Results keep input order,
/// so runs stay bit-identical to the sequential objective.
#[derive(Debug, Clone)]
pub struct ParallelObjective<O>(pub O);

impl<O> Objective for ParallelObjective<O>
where
    O: Objective + Sync,
    O::Detail: Send,
{
    type Detail = O::Detail;

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation<O::Detail> {
        self.0.evaluate(x)
    }

    fn evaluate_batch(&self, xs: &[Vec<f64>]) -> Vec<Evaluation<O::Detail>> {
        xs.par_iter().map(|x| self.0.evaluate(x)).collect()
    }

    fn observe_gbest(&mut self, x: &[f64], detail: &O::Detail) {
        self.0.observe_gbest(x, detail);
    }
}
