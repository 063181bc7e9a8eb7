//! Local flight rules and the local/global balance decision.

use crate::param_space::{ParameterSpace, Position};

/// Which kind of move a crow makes in the current iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    Local,
    Global,
}

/// `x + r * flight * (target - x)`, computed in grid-index coordinates and
/// snapped back onto the grid.
fn follow(space: &ParameterSpace, x: &Position, target: &Position, flight: f64, r: f64) -> Position {
    let raw: Vec<f64> = x
        .indices()
        .iter()
        .zip(target.indices())
        .map(|(&a, &b)| a as f64 + r * flight * (b as f64 - a as f64))
        .collect();
    space
        .snap_fractional(&raw)
        .expect("positions share the space's dimension")
}

/// Classic crow move towards another crow's memory, with `r` drawn uniformly
/// from `[0, 1]` by the caller.
pub fn csa_local_step(space: &ParameterSpace, x: &Position, memory_j: &Position, flight: f64, r: f64) -> Position {
    follow(space, x, memory_j, flight, r)
}

/// Move towards a superior crow's memory, scaled by a chaos value instead of
/// a uniform draw.
pub fn ssa_local_step(
    space: &ParameterSpace,
    x: &Position,
    superior_memory: &Position,
    flight: f64,
    chaos: f64,
) -> Position {
    follow(space, x, superior_memory, flight, chaos)
}

/// Quantile `p` of `values` with linear interpolation between order
/// statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Crow `i` searches locally iff its fitness is strictly below the
/// `ap`-quantile of all fitnesses.
pub fn balance_decide(fitnesses: &[f64], i: usize, ap: f64) -> Move {
    decide_against(fitnesses[i], quantile(fitnesses, ap))
}

pub(crate) fn decide_against(fitness: f64, threshold: f64) -> Move {
    if fitness < threshold {
        Move::Local
    } else {
        Move::Global
    }
}
