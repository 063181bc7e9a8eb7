//! Population initialization schemes.
//!
//! Four schemes are provided: uniform random, Latin hypercube (LHS), diagonal
//! linear uniform (DLU) and chaotic DLU (CDLU). CDLU keeps the even marginal
//! coverage of DLU but breaks its "all minima / all maxima" ordering by
//! reordering each dimension with a sine-map chaos sequence, so it needs no
//! random seed at all.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::param_space::{ParameterSpace, Position};

/// Starting value of the sine chaos map.
pub const CHAOS_SEED: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InitError {
    #[error("population size must be at least 2, got {0}")]
    PopulationTooSmall(usize),
    #[error("unknown initialization scheme `{0}`")]
    UnknownScheme(String),
}

/// Deterministic sine-map sequence `c <- sin(pi * c)` started at 0.7.
#[derive(Debug, Clone, PartialEq)]
pub struct ChaosStream {
    current: f64,
}

impl Default for ChaosStream {
    fn default() -> Self {
        Self::new()
    }
}

impl ChaosStream {
    pub fn new() -> Self {
        Self::with_seed(CHAOS_SEED)
    }

    pub fn with_seed(seed: f64) -> Self {
        Self { current: seed }
    }

    /// Last emitted value (the seed before the first call).
    pub fn current(&self) -> f64 {
        self.current
    }

    /// Advances the map and returns the new value, which lies in `(0, 1]`.
    pub fn next_value(&mut self) -> f64 {
        self.current = (std::f64::consts::PI * self.current).sin();
        self.current
    }
}

impl Iterator for ChaosStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_value())
    }
}

/// A set of on-grid starting positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    positions: Vec<Position>,
}

impl Population {
    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn into_positions(self) -> Vec<Position> {
        self.positions
    }

    /// Grid indices of every individual along dimension `d`.
    pub fn column(&self, d: usize) -> Vec<usize> {
        self.positions.iter().map(|p| p.indices()[d]).collect()
    }

    fn from_columns(columns: Vec<Vec<usize>>, n: usize) -> Self {
        let positions = (0..n)
            .map(|i| Position::from_indices_unchecked(columns.iter().map(|c| c[i]).collect()))
            .collect();
        Self { positions }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitScheme {
    Random,
    Lhs,
    Dlu,
    Cdlu,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Random => "random",
            InitScheme::Lhs => "lhs",
            InitScheme::Dlu => "dlu",
            InitScheme::Cdlu => "cdlu",
        }
    }

    /// Builds a population; `seed` is ignored by the deterministic schemes.
    pub fn initialize(self, space: &ParameterSpace, n: usize, seed: u64) -> Result<Population, InitError> {
        match self {
            InitScheme::Random => init_random(space, n, seed),
            InitScheme::Lhs => init_lhs(space, n, seed),
            InitScheme::Dlu => init_dlu(space, n),
            InitScheme::Cdlu => init_cdlu(space, n),
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitScheme {
    type Err = InitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "random" => Ok(InitScheme::Random),
            "lhs" => Ok(InitScheme::Lhs),
            "dlu" => Ok(InitScheme::Dlu),
            "cdlu" => Ok(InitScheme::Cdlu),
            _ => Err(InitError::UnknownScheme(s.to_string())),
        }
    }
}

fn check_size(n: usize) -> Result<(), InitError> {
    if n < 2 {
        return Err(InitError::PopulationTooSmall(n));
    }
    Ok(())
}

/// Each coordinate drawn independently and uniformly over its grid.
pub fn init_random(space: &ParameterSpace, n: usize, seed: u64) -> Result<Population, InitError> {
    check_size(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n)
        .map(|_| {
            let indices = space.specs().iter().map(|s| rng.random_range(0..s.count())).collect();
            Position::from_indices_unchecked(indices)
        })
        .collect();
    Ok(Population { positions })
}

/// Latin hypercube sampling over grid indices.
///
/// Each dimension's index range `[0, count)` is cut into `n` equal strata;
/// every stratum receives exactly one sample and the stratum order is
/// shuffled independently per dimension.
pub fn init_lhs(space: &ParameterSpace, n: usize, seed: u64) -> Result<Population, InitError> {
    check_size(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = Vec::with_capacity(space.dim());
    for spec in space.specs() {
        let count = spec.count();
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        let column = strata
            .into_iter()
            .map(|j| {
                let lo = (j * count).div_ceil(n);
                let hi = ((j + 1) * count).div_ceil(n);
                if lo < hi {
                    rng.random_range(lo..hi)
                } else {
                    // Stratum narrower than one grid cell.
                    (j * count / n).min(count - 1)
                }
            })
            .collect();
        columns.push(column);
    }
    Ok(Population::from_columns(columns, n))
}

/// The diagonal arithmetic progression for one dimension, snapped to the grid.
fn dlu_column(spec: &crate::param_space::ParameterSpec, n: usize) -> Vec<usize> {
    let span = spec.max() - spec.min();
    (0..n)
        .map(|i| {
            if i == n - 1 {
                spec.snap_index(spec.max())
            } else {
                spec.snap_index(spec.min() + i as f64 * span / (n - 1) as f64)
            }
        })
        .collect()
}

/// Diagonal linear uniform initialization: individual `i` sits at fraction
/// `i / (n - 1)` of every range.
pub fn init_dlu(space: &ParameterSpace, n: usize) -> Result<Population, InitError> {
    check_size(n)?;
    let columns = space.specs().iter().map(|s| dlu_column(s, n)).collect();
    Ok(Population::from_columns(columns, n))
}

/// Rank of each element (0-based) with ties broken by position.
pub fn rank_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    for (rank, idx) in order.into_iter().enumerate() {
        ranks[idx] = rank;
    }
    ranks
}

/// Chaotic DLU: the DLU progression of each dimension, reordered by the rank
/// order of `n` fresh values from one shared chaos stream (dimensions are
/// consumed in order).
pub fn init_cdlu(space: &ParameterSpace, n: usize) -> Result<Population, InitError> {
    check_size(n)?;
    let mut chaos = ChaosStream::new();
    let columns = space
        .specs()
        .iter()
        .map(|spec| {
            let progression = dlu_column(spec, n);
            let draws: Vec<f64> = chaos.by_ref().take(n).collect();
            rank_order(&draws).into_iter().map(|r| progression[r]).collect()
        })
        .collect();
    Ok(Population::from_columns(columns, n))
}
