//! Per-dimension sampling weights over each parameter grid.
//!
//! Every superior crow deposits weight at its grid position and half as much
//! on the grid points within a fixed fraction of the parameter's range. The
//! deposit grows geometrically over iterations, so recent good regions
//! dominate the exploration distribution while every grid point keeps the
//! initial floor weight.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::param_space::{ParameterSpace, Position};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    weights: Vec<Vec<f64>>,
    /// Half-width of the neighbourhood band, in grid steps, per dimension.
    bands: Vec<f64>,
    k0: f64,
    omega_inc: f64,
    updates: u32,
}

impl WeightMap {
    /// Uniform map with every weight set to `floor`.
    pub fn new(space: &ParameterSpace, floor: f64, k0: f64, omega_inc: f64, neighborhood: f64) -> Self {
        assert!(floor > 0.0, "weight floor must be positive");
        let weights = space.specs().iter().map(|s| vec![floor; s.count()]).collect();
        let bands = space
            .specs()
            .iter()
            .map(|s| neighborhood * (s.max() - s.min()) / s.step())
            .collect();
        Self {
            weights,
            bands,
            k0,
            omega_inc,
            updates: 0,
        }
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn dimension(&self, d: usize) -> &[f64] {
        &self.weights[d]
    }

    /// Number of updates applied so far.
    pub fn updates(&self) -> u32 {
        self.updates
    }

    /// Deposit used by the most recent update, `k0 * omega_inc^updates`.
    pub fn current_k(&self) -> f64 {
        self.k0 * self.omega_inc.powi(self.updates as i32)
    }

    /// Grows the deposit by `omega_inc`, then bumps the map around every
    /// position in `members`.
    pub fn update<'a>(&mut self, members: impl IntoIterator<Item = &'a Position>) {
        self.updates += 1;
        let k = self.current_k();
        for member in members {
            for (d, &center) in member.indices().iter().enumerate() {
                let w = &mut self.weights[d];
                let reach = (self.bands[d] + 1e-9).floor() as usize;
                let lo = center.saturating_sub(reach);
                let hi = (center + reach).min(w.len() - 1);
                for (idx, slot) in w.iter_mut().enumerate().take(hi + 1).skip(lo) {
                    *slot += if idx == center { k } else { 0.5 * k };
                }
            }
        }
    }

    /// Frozen sampler for the current weights.
    pub fn sampler(&self) -> WeightedSampler {
        WeightedSampler {
            dims: self
                .weights
                .iter()
                .map(|w| WeightedIndex::new(w).expect("weights are positive and finite"))
                .collect(),
        }
    }

    /// Draws one position, each dimension independently proportional to its
    /// weights.
    pub fn sample(&self, rng: &mut impl Rng) -> Position {
        self.sampler().sample(rng)
    }
}

/// Per-dimension categorical samplers built from a [`WeightMap`].
#[derive(Debug, Clone)]
pub struct WeightedSampler {
    dims: Vec<WeightedIndex<f64>>,
}

impl WeightedSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> Position {
        Position::from_indices_unchecked(self.dims.iter().map(|d| d.sample(rng)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::ParameterSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(count: usize) -> ParameterSpace {
        ParameterSpace::new(vec![ParameterSpec::new("x", 0.0, (count - 1) as f64, 1.0).unwrap()]).unwrap()
    }

    fn at(k: usize) -> Position {
        Position::from_indices_unchecked(vec![k])
    }

    #[test]
    fn isolated_bump() {
        // Ten points, 10% of range = 0.9 steps: no neighbours in the band.
        let space = line(10);
        let mut map = WeightMap::new(&space, 1.0, 1.0, 1.05, 0.10);
        map.update([&at(5)]);
        let k1 = 1.05;
        for (i, &w) in map.dimension(0).iter().enumerate() {
            assert_eq!(w, if i == 5 { 1.0 + k1 } else { 1.0 });
        }
    }

    #[test]
    fn neighbours_get_half() {
        // 21 points: 10% of range = 2 steps.
        let space = line(21);
        let mut map = WeightMap::new(&space, 1.0, 2.0, 1.5, 0.10);
        map.update([&at(1)]);
        let k = 3.0;
        let w = map.dimension(0);
        assert_eq!(w[1], 1.0 + k);
        for i in [0, 2, 3] {
            assert_eq!(w[i], 1.0 + 0.5 * k);
        }
        assert_eq!(w[4], 1.0);
    }

    #[test]
    fn deposit_grows_geometrically() {
        let space = line(10);
        let mut map = WeightMap::new(&space, 1.0, 1.0, 1.2, 0.10);
        map.update([&at(3)]);
        assert!((map.dimension(0)[3] - (1.0 + 1.2)).abs() < 1e-12);
        map.update([&at(3)]);
        assert!((map.dimension(0)[3] - (1.0 + 1.2 + 1.44)).abs() < 1e-12);
        assert_eq!(map.updates(), 2);
        assert_eq!(map.current_k(), 1.2f64.powi(2));
    }

    #[test]
    fn heavy_point_dominates_sampling() {
        let space = line(2);
        let mut map = WeightMap::new(&space, 1.0, 8.0 / 1.05, 1.05, 0.0);
        map.update([&at(1)]);
        assert!((map.dimension(0)[1] - 9.0).abs() < 1e-12);
        let sampler = map.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws = 100_000;
        let heavy = (0..draws).filter(|_| sampler.sample(&mut rng).indices()[0] == 1).count();
        let sd = (draws as f64 * 0.9 * 0.1).sqrt();
        assert!((heavy as f64 - 0.9 * draws as f64).abs() < 4.0 * sd, "{heavy}");
    }

    #[test]
    fn uniform_weights_pass_chi_square() {
        let space = line(10);
        let map = WeightMap::new(&space, 1.0, 1.0, 1.05, 0.10);
        let sampler = map.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..draws {
            counts[sampler.sample(&mut rng).indices()[0]] += 1;
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99th percentile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 21.666, "chi2 = {chi2}");
    }

    #[test]
    fn floor_keeps_full_support() {
        let space = line(10);
        let mut map = WeightMap::new(&space, 1.0, 1.0, 2.0, 0.10);
        for _ in 0..10 {
            map.update([&at(0)]);
        }
        // Index 0 now holds 2047 times the weight of any other point.
        let sampler = map.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = [false; 10];
        for _ in 0..1_000_000 {
            seen[sampler.sample(&mut rng).indices()[0]] = true;
        }
        assert!(map.dimension(0).iter().all(|&w| w >= 1.0));
        assert!(seen.iter().all(|&s| s));
    }
}
