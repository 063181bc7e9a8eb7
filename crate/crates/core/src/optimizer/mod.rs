//! Crow search over a discrete parameter grid.
//!
//! Two variants share one driver:
//!
//! * [`Algorithm::Csa`] is the classic crow search: each crow follows the
//!   memory of a random crow unless that crow notices, in which case it jumps
//!   to a uniformly random grid point.
//! * [`Algorithm::SsaCsa`] follows only members of a Pareto-based superior
//!   set, uses a chaos value for the step, samples global moves from a weight
//!   map built around past superior positions, and lets fitness rank decide
//!   which crows search locally.
//!
//! Evaluations inside one iteration run in parallel; everything else is
//! sequential, so runs are reproducible bit for bit for a given seed.

mod moves;
mod pareto;
mod weight_map;

pub use moves::{balance_decide, csa_local_step, quantile, ssa_local_step, Move};
pub use pareto::{dominates, pareto_front, select_superior_set, superior_size};
pub use weight_map::{WeightMap, WeightedSampler};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::fitness::{FitnessError, FitnessReport, ObjectiveVector};
use crate::init::{ChaosStream, InitError, InitScheme};
use crate::param_space::{ParameterSpace, Position};
use crate::recon::ReconError;

/// Fitness assigned to positions whose evaluation failed.
pub const PENALTY_FITNESS: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Init(#[from] InitError),
}

/// Why an evaluation produced no usable fitness.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct EvaluationError(pub String);

impl From<FitnessError> for EvaluationError {
    fn from(e: FitnessError) -> Self {
        Self(e.to_string())
    }
}

impl From<ReconError> for EvaluationError {
    fn from(e: ReconError) -> Self {
        Self(e.to_string())
    }
}

/// Black-box objective. Must be callable from several threads at once.
pub trait Evaluator: Sync {
    fn evaluate(&self, position: &Position) -> Result<FitnessReport, EvaluationError>;
}

impl<F> Evaluator for F
where
    F: Fn(&Position) -> Result<FitnessReport, EvaluationError> + Sync,
{
    fn evaluate(&self, position: &Position) -> Result<FitnessReport, EvaluationError> {
        self(position)
    }
}

/// Report stored for failed evaluations.
pub fn penalty_report() -> FitnessReport {
    FitnessReport {
        snr: 1.0 / PENALTY_FITNESS,
        hfer: 0.0,
        laplacian_var: None,
        fitness: PENALTY_FITNESS,
        objectives: ObjectiveVector {
            inv_snr: PENALTY_FITNESS,
            hfer_deficit: 1.0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Csa,
    SsaCsa,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Csa => "csa",
            Self::SsaCsa => "ssa-csa",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = OptimizerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "csa" => Ok(Self::Csa),
            "ssa-csa" | "ssacsa" => Ok(Self::SsaCsa),
            other => Err(OptimizerError::InvalidConfig(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub population: usize,
    pub iterations: usize,
    pub flight_length: f64,
    pub ap0: f64,
    /// `None` picks the rate that takes the quantile from `ap0` to 0.9 over
    /// the run.
    pub ap_inc: Option<f64>,
    pub kappa0: f64,
    pub omega_inc: f64,
    pub k0: f64,
    pub weight_floor: f64,
    /// Neighbourhood half-width for weight-map bumps, as a fraction of each
    /// parameter's range.
    pub neighborhood: f64,
    /// Fixed awareness probability of the classic variant.
    pub csa_ap: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 25,
            iterations: 30,
            flight_length: 2.0,
            ap0: 0.3,
            ap_inc: None,
            kappa0: 0.4,
            omega_inc: 1.05,
            k0: 1.0,
            weight_floor: 1.0,
            neighborhood: 0.10,
            csa_ap: 0.1,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn ap_inc(&self) -> f64 {
        self.ap_inc
            .unwrap_or_else(|| (0.9 / self.ap0).powf(1.0 / self.iterations.max(1) as f64))
    }

    pub fn kappa_red(&self) -> f64 {
        1.0 - 1.0 / self.iterations as f64
    }

    /// Awareness quantile used in iteration `t`.
    pub fn ap_at(&self, t: usize) -> f64 {
        self.ap0 * self.ap_inc().powi(t as i32)
    }

    /// Superior-set fraction after `t` decays.
    pub fn kappa_at(&self, t: usize) -> f64 {
        self.kappa0 * self.kappa_red().powi(t as i32)
    }

    /// Weight-map deposit after `t` updates.
    pub fn k_at(&self, t: usize) -> f64 {
        self.k0 * self.omega_inc.powi(t as i32)
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |msg: String| Err(OptimizerError::InvalidConfig(msg));
        if self.population < 2 {
            return bad(format!("population must be at least 2, got {}", self.population));
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.flight_length > 0.0 && self.flight_length.is_finite()) {
            return bad(format!("flight_length must be positive, got {}", self.flight_length));
        }
        if !(self.ap0 > 0.0 && self.ap0 < 1.0) {
            return bad(format!("ap0 must lie in (0, 1), got {}", self.ap0));
        }
        let inc = self.ap_inc();
        if !(inc >= 1.0 && inc.is_finite()) {
            return bad(format!("ap_inc must be at least 1, got {inc}"));
        }
        if self.ap_at(self.iterations) > 1.0 + 1e-12 {
            return bad(format!(
                "ap0 * ap_inc^iterations = {} exceeds 1",
                self.ap_at(self.iterations)
            ));
        }
        if !(self.kappa0 > 0.0 && self.kappa0 <= 1.0) {
            return bad(format!("kappa0 must lie in (0, 1], got {}", self.kappa0));
        }
        if !(self.omega_inc > 1.0 && self.omega_inc.is_finite()) {
            return bad(format!("omega_inc must exceed 1, got {}", self.omega_inc));
        }
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return bad(format!("k0 must be positive, got {}", self.k0));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor.is_finite()) {
            return bad(format!("weight_floor must be positive, got {}", self.weight_floor));
        }
        if !(self.neighborhood >= 0.0 && self.neighborhood <= 1.0) {
            return bad(format!("neighborhood must lie in [0, 1], got {}", self.neighborhood));
        }
        if !(self.csa_ap >= 0.0 && self.csa_ap <= 1.0) {
            return bad(format!("csa_ap must lie in [0, 1], got {}", self.csa_ap));
        }
        Ok(())
    }
}

/// One row of the convergence history. Row 0 describes the initial
/// population.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub superior_size: usize,
    pub explorations: usize,
    pub memory_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    pub iteration: usize,
    pub crow: usize,
    pub position: Position,
    pub report: FitnessReport,
    pub penalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub init: InitScheme,
    pub config: OptimizerConfig,
    pub history: Vec<IterationStats>,
    pub evaluations: Vec<EvaluationRecord>,
    pub best_position: Position,
    pub best_report: FitnessReport,
    /// Final weight map; `None` for the classic variant, which has none.
    pub weight_map: Option<WeightMap>,
}

impl RunRecord {
    pub fn total_evaluations(&self) -> usize {
        self.evaluations.len()
    }

    pub fn best_fitness(&self) -> f64 {
        self.best_report.fitness
    }

    /// Best fitness found by the end of each iteration, starting with the
    /// initial population.
    pub fn best_curve(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.best_fitness).collect()
    }
}

#[derive(Clone)]
struct Crow {
    position: Position,
    memory: Position,
    memory_report: FitnessReport,
}

fn evaluate_all(evaluator: &dyn Evaluator, positions: &[Position]) -> Vec<(FitnessReport, bool)> {
    positions
        .par_iter()
        .map(|p| match evaluator.evaluate(p) {
            Ok(report) if report.fitness.is_finite() => (report, false),
            _ => (penalty_report(), true),
        })
        .collect()
}

fn best_index(crows: &[Crow]) -> usize {
    (0..crows.len())
        .min_by(|&a, &b| {
            crows[a]
                .memory_report
                .fitness
                .total_cmp(&crows[b].memory_report.fitness)
                .then(a.cmp(&b))
        })
        .expect("population is non-empty")
}

fn stats(iteration: usize, crows: &[Crow], superior_size: usize, explorations: usize, updates: usize) -> IterationStats {
    let fitness: Vec<f64> = crows.iter().map(|c| c.memory_report.fitness).collect();
    IterationStats {
        iteration,
        best_fitness: fitness.iter().copied().fold(f64::INFINITY, f64::min),
        mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
        superior_size,
        explorations,
        memory_updates: updates,
    }
}

fn uniform_position(space: &ParameterSpace, rng: &mut impl Rng) -> Position {
    let indices = space.specs().iter().map(|s| rng.random_range(0..s.count())).collect();
    Position::from_indices(space, indices).expect("indices drawn inside each grid")
}

/// Runs the optimizer for `config.iterations` iterations and returns the full
/// record. Evaluator failures and non-finite fitness values are replaced by
/// [`penalty_report`].
pub fn run(
    space: &ParameterSpace,
    evaluator: &dyn Evaluator,
    config: &OptimizerConfig,
    algorithm: Algorithm,
    init: InitScheme,
) -> Result<RunRecord, OptimizerError> {
    config.validate()?;
    let n = config.population;
    let initial = init.initialize(space, n, config.seed)?.into_positions();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_edc0_de0f_c20e);
    let mut chaos = ChaosStream::new();

    let mut evaluations = Vec::with_capacity(n * (config.iterations + 1));
    let results = evaluate_all(evaluator, &initial);
    let mut crows: Vec<Crow> = Vec::with_capacity(n);
    for (i, (pos, (report, penalized))) in initial.into_iter().zip(results).enumerate() {
        evaluations.push(EvaluationRecord {
            iteration: 0,
            crow: i,
            position: pos.clone(),
            report,
            penalized,
        });
        crows.push(Crow {
            position: pos.clone(),
            memory: pos,
            memory_report: report,
        });
    }
    let mut history = vec![stats(0, &crows, 0, 0, 0)];

    let mut weight_map = match algorithm {
        Algorithm::SsaCsa => Some(WeightMap::new(
            space,
            config.weight_floor,
            config.k0,
            config.omega_inc,
            config.neighborhood,
        )),
        Algorithm::Csa => None,
    };

    for t in 1..=config.iterations {
        let mut explorations = 0;
        let mut superior_len = 0;
        let proposals: Vec<Position> = match algorithm {
            Algorithm::Csa => (0..n)
                .map(|i| {
                    let j = rng.random_range(0..n);
                    if rng.random::<f64>() >= config.csa_ap {
                        let r = rng.random::<f64>();
                        csa_local_step(space, &crows[i].position, &crows[j].memory, config.flight_length, r)
                    } else {
                        explorations += 1;
                        uniform_position(space, &mut rng)
                    }
                })
                .collect(),
            Algorithm::SsaCsa => {
                let map = weight_map.as_mut().expect("weight map exists for SSA-CSA");
                let objectives: Vec<[f64; 2]> = crows.iter().map(|c| c.memory_report.objectives.as_array()).collect();
                let fitness: Vec<f64> = crows.iter().map(|c| c.memory_report.fitness).collect();
                let superior = select_superior_set(&objectives, &fitness, config.kappa_at(t - 1));
                superior_len = superior.len();
                map.update(superior.iter().map(|&s| &crows[s].memory));
                let sampler = map.sampler();
                let threshold = quantile(&fitness, config.ap_at(t));
                (0..n)
                    .map(|i| match moves::decide_against(fitness[i], threshold) {
                        Move::Local => {
                            let j = superior[rng.random_range(0..superior.len())];
                            let c = chaos.next_value();
                            ssa_local_step(space, &crows[i].position, &crows[j].memory, config.flight_length, c)
                        }
                        Move::Global => {
                            explorations += 1;
                            sampler.sample(&mut rng)
                        }
                    })
                    .collect()
            }
        };

        let results = evaluate_all(evaluator, &proposals);
        let mut updates = 0;
        for (i, (pos, (report, penalized))) in proposals.into_iter().zip(results).enumerate() {
            evaluations.push(EvaluationRecord {
                iteration: t,
                crow: i,
                position: pos.clone(),
                report,
                penalized,
            });
            let crow = &mut crows[i];
            if report.fitness < crow.memory_report.fitness {
                crow.memory = pos.clone();
                crow.memory_report = report;
                updates += 1;
            }
            crow.position = pos;
        }
        history.push(stats(t, &crows, superior_len, explorations, updates));
    }

    let best = best_index(&crows);
    Ok(RunRecord {
        algorithm,
        init,
        config: config.clone(),
        history,
        evaluations,
        best_position: crows[best].memory.clone(),
        best_report: crows[best].memory_report,
        weight_map,
    })
}
