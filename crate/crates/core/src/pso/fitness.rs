//! Controller fitness `ω₁·cost(K)/cost(K_LQR) − ω₂·roa(K)/roa(K_LQR)`.

use alloc::vec;
use alloc::vec::Vec;

use super::{synthesize, Evaluation, HistoryTerms, Objective, PsoParams, SynthesisResult};
use crate::certificate::{certify_roa, CertifyOptions, LinearStep, QuadraticCandidate, RoaEstimate, StateGrid};
use crate::dynamics::{Controller, DiscreteLinearSystem};
use crate::lqr::{lqr_cost_metric, lqr_gain, CostWeights};
use crate::nn::{train, Activation, LyapunovNet, TrainConfig, DEFAULT_EPSILON};
use crate::{Error, Result};

/// Plant, weights and the shared certification grid of one synthesis run.
#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    pub dsys: DiscreteLinearSystem,
    pub weights: CostWeights,
    pub grid: StateGrid,
    pub certify: CertifyOptions,
}

impl SynthesisProblem {
    pub fn gain_len(&self) -> usize {
        self.dsys.state_dim() * self.dsys.input_dim()
    }

    pub fn gain_from_flat(&self, flat: &[f64]) -> Result<Controller> {
        Controller::from_flat(self.dsys.input_dim(), self.dsys.state_dim(), flat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralSettings {
    /// Hidden widths; the input width is the state dimension.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epsilon: f64,
    pub train: TrainConfig,
    /// Start each training run from the net of the current gbest.
    pub warm_start: bool,
    pub init_seed: u64,
}

impl Default for NeuralSettings {
    fn default() -> Self {
        NeuralSettings {
            hidden: vec![16, 16],
            activation: Activation::default(),
            epsilon: DEFAULT_EPSILON,
            train: TrainConfig::default(),
            warm_start: true,
            init_seed: 0,
        }
    }
}

impl NeuralSettings {
    pub fn layer_dims(&self, state_dim: usize) -> Vec<usize> {
        let mut dims = vec![state_dim];
        dims.extend_from_slice(&self.hidden);
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum CandidateKind {
    #[default]
    Quadratic,
    Neural(NeuralSettings),
}

impl CandidateKind {
    pub fn name(&self) -> &'static str {
        match self {
            CandidateKind::Quadratic => "quadratic",
            CandidateKind::Neural(_) => "neural",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessSpec {
    pub w1: f64,
    pub w2: f64,
    pub baseline_cost: f64,
    pub baseline_roa: f64,
    pub candidate_kind: CandidateKind,
}

impl FitnessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.w1 >= 0.0 && self.w2 >= 0.0) || !self.w1.is_finite() || !self.w2.is_finite() {
            return Err(Error::invalid("weights", "w1 and w2 must be finite and non-negative"));
        }
        if !(self.w1 + self.w2 > 0.0) {
            return Err(Error::invalid("weights", "w1 + w2 must be positive"));
        }
        if !(self.baseline_cost > 0.0) || !self.baseline_cost.is_finite() {
            return Err(Error::invalid("baseline_cost", "must be positive and finite"));
        }
        if !(self.baseline_roa > 0.0) || !self.baseline_roa.is_finite() {
            return Err(Error::invalid("baseline_roa", "must be positive and finite"));
        }
        Ok(())
    }
}

/// Breakdown of one fitness evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessTerms {
    pub stable: bool,
    /// `λ_max(P(K))`, `+∞` when unstable.
    pub cost: f64,
    /// Certified cells; zero when the ROA term was skipped or the loop is unstable.
    pub roa_cells: usize,
    pub cost_ratio: f64,
    pub roa_ratio: f64,
    /// Trained net for neural candidates.
    pub net: Option<LyapunovNet>,
}

impl FitnessTerms {
    fn unstable() -> Self {
        FitnessTerms {
            stable: false,
            cost: f64::INFINITY,
            roa_cells: 0,
            cost_ratio: f64::INFINITY,
            roa_ratio: 0.0,
            net: None,
        }
    }
}

impl HistoryTerms for FitnessTerms {
    fn cost_term(&self) -> f64 {
        self.cost_ratio
    }

    fn roa_term(&self) -> f64 {
        self.roa_ratio
    }
}

/// Certifies `ctrl` with the configured candidate. `None` when unstable.
fn certify_with(
    problem: &SynthesisProblem,
    ctrl: &Controller,
    p: crate::linalg::Matrix,
    kind: &CandidateKind,
    warm: Option<&LyapunovNet>,
) -> Result<(RoaEstimate, Option<LyapunovNet>)> {
    let step = LinearStep::closed_loop(&problem.dsys, ctrl)?;
    match kind {
        CandidateKind::Quadratic => {
            let cand = QuadraticCandidate::for_step(p, &step)?;
            Ok((certify_roa(&cand, &step, &problem.grid, &problem.certify)?, None))
        }
        CandidateKind::Neural(settings) => {
            let net = match warm {
                Some(net) if settings.warm_start => net.clone(),
                _ => LyapunovNet::init(
                    &settings.layer_dims(problem.dsys.state_dim()),
                    settings.epsilon,
                    settings.activation,
                    settings.init_seed,
                )?,
            };
            let out = train(net, &step, &problem.grid, &settings.train, &problem.certify)?;
            Ok((out.estimate, Some(out.net)))
        }
    }
}

/// LQR gain with its cost and certified ROA, the normalization baselines.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub gain: Controller,
    pub cost: f64,
    pub estimate: RoaEstimate,
    pub net: Option<LyapunovNet>,
}

pub fn baseline(problem: &SynthesisProblem, kind: &CandidateKind) -> Result<Baseline> {
    let gain = lqr_gain(&problem.dsys, &problem.weights)?;
    let report = lqr_cost_metric(&problem.dsys, &gain, &problem.weights)?;
    if !report.stable {
        return Err(Error::NotStabilizing);
    }
    let (estimate, net) = certify_with(problem, &gain, report.p, kind, None)?;
    Ok(Baseline {
        gain,
        cost: report.metric,
        estimate,
        net,
    })
}

/// Swarm objective over row-major flattened gains.
#[derive(Debug, Clone)]
pub struct ControllerFitness<'a> {
    problem: &'a SynthesisProblem,
    spec: FitnessSpec,
    warm: Option<LyapunovNet>,
}

impl<'a> ControllerFitness<'a> {
    pub fn new(problem: &'a SynthesisProblem, spec: FitnessSpec) -> Result<Self> {
        spec.validate()?;
        Ok(ControllerFitness {
            problem,
            spec,
            warm: None,
        })
    }

    pub fn with_warm_start(mut self, net: Option<LyapunovNet>) -> Self {
        self.warm = net;
        self
    }

    pub fn spec(&self) -> &FitnessSpec {
        &self.spec
    }

    fn try_evaluate(&self, flat: &[f64]) -> Result<Evaluation<FitnessTerms>> {
        let ctrl = self.problem.gain_from_flat(flat)?;
        let report = lqr_cost_metric(&self.problem.dsys, &ctrl, &self.problem.weights)?;
        if !report.stable {
            return Ok(Evaluation {
                fitness: f64::INFINITY,
                detail: FitnessTerms::unstable(),
            });
        }
        let cost_ratio = report.metric / self.spec.baseline_cost;
        let mut terms = FitnessTerms {
            stable: true,
            cost: report.metric,
            roa_cells: 0,
            cost_ratio,
            roa_ratio: 0.0,
            net: None,
        };
        let mut fitness = self.spec.w1 * cost_ratio;
        if self.spec.w2 > 0.0 {
            let (est, net) = certify_with(
                self.problem,
                &ctrl,
                report.p,
                &self.spec.candidate_kind,
                self.warm.as_ref(),
            )?;
            terms.roa_cells = est.size_cells;
            terms.roa_ratio = est.size_cells as f64 / self.spec.baseline_roa;
            terms.net = net;
            fitness -= self.spec.w2 * terms.roa_ratio;
        }
        Ok(Evaluation { fitness, detail: terms })
    }
}

impl Objective for ControllerFitness<'_> {
    type Detail = FitnessTerms;

    fn dim(&self) -> usize {
        self.problem.gain_len()
    }

    /// Numerical failures count as infeasible so the swarm stays total.
    fn evaluate(&self, x: &[f64]) -> Evaluation<FitnessTerms> {
        self.try_evaluate(x).unwrap_or(Evaluation {
            fitness: f64::INFINITY,
            detail: FitnessTerms::unstable(),
        })
    }

    fn observe_gbest(&mut self, _x: &[f64], detail: &FitnessTerms) {
        if let Some(net) = &detail.net {
            self.warm = Some(net.clone());
        }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerSynthesis {
    pub gain: Controller,
    pub result: SynthesisResult<FitnessTerms>,
}

/// Runs the swarm on [`ControllerFitness`].
pub fn synthesize_controller(
    problem: &SynthesisProblem,
    spec: FitnessSpec,
    params: &PsoParams,
) -> Result<ControllerSynthesis> {
    let mut objective = ControllerFitness::new(problem, spec)?;
    let result = synthesize(&mut objective, params)?;
    Ok(ControllerSynthesis {
        gain: problem.gain_from_flat(&result.gbest)?,
        result,
    })
}
