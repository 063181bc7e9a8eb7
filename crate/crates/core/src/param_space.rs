//! Discretized hyperparameter grids.
//!
//! Every tunable parameter lives on a uniform grid `min + k * step` for
//! `0 <= k < count`. The optimizer works with grid indices; real values are
//! only materialized when a parameter set is handed to a reconstruction.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Relative tolerance used when deciding whether a real value sits on a grid
/// point, and when detecting exact halfway ties during snapping.
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("invalid grid for `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value {value} is not on the grid of `{name}`")]
    OffGrid { name: String, value: f64 },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("unknown reconstruction algorithm `{0}`")]
    UnknownAlgorithm(String),
}

/// A single parameter grid `[min, max, step]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    name: String,
    min: f64,
    max: f64,
    step: f64,
    count: usize,
}

impl ParameterSpec {
    pub fn new(name: impl Into<String>, min: f64, max: f64, step: f64) -> Result<Self, SpaceError> {
        let name = name.into();
        let invalid = |reason: &str| SpaceError::InvalidSpec {
            name: name.clone(),
            reason: reason.to_string(),
        };
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(invalid("bounds and step must be finite"));
        }
        if step <= 0.0 {
            return Err(invalid("step must be positive"));
        }
        if min > max {
            return Err(invalid("min exceeds max"));
        }
        // floor((max - min) / step) + 1, tolerant of 0.99 - 0.9 = 0.0899999...
        let ratio = (max - min) / step;
        let count = (ratio + GRID_TOL * ratio.max(1.0)).floor() as usize + 1;
        Ok(Self {
            name,
            min,
            max,
            step,
            count,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of grid points.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Largest representable value, `min + (count - 1) * step`.
    pub fn grid_max(&self) -> f64 {
        self.value_at(self.count - 1)
    }

    /// Value of grid point `k`. Panics if `k` is out of range.
    pub fn value_at(&self, k: usize) -> f64 {
        assert!(k < self.count, "grid index {k} out of range for `{}`", self.name);
        self.min + k as f64 * self.step
    }

    /// Snaps a fractional grid coordinate to a valid index: clamp, then round
    /// to nearest with exact ties going toward `min`.
    pub fn snap_fractional_index(&self, raw: f64) -> usize {
        if raw.is_nan() {
            return 0;
        }
        let top = (self.count - 1) as f64;
        let clamped = raw.clamp(0.0, top);
        let floor = clamped.floor();
        let frac = clamped - floor;
        let k = if frac > 0.5 + GRID_TOL { floor + 1.0 } else { floor };
        (k as usize).min(self.count - 1)
    }

    /// Index of the grid point nearest to `value` (clamped, ties toward min).
    pub fn snap_index(&self, value: f64) -> usize {
        self.snap_fractional_index((value - self.min) / self.step)
    }

    /// Nearest grid value to `value`.
    pub fn snap_value(&self, value: f64) -> f64 {
        self.value_at(self.snap_index(value))
    }

    /// Exact inverse of [`value_at`](Self::value_at); errors if `value` is off-grid.
    pub fn grid_index(&self, value: f64) -> Result<usize, SpaceError> {
        let off_grid = || SpaceError::OffGrid {
            name: self.name.clone(),
            value,
        };
        let raw = (value - self.min) / self.step;
        let k = raw.round();
        if !raw.is_finite() || (raw - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.count {
            return Err(off_grid());
        }
        Ok(k as usize)
    }
}

/// An on-grid point of a [`ParameterSpace`], stored as one grid index per
/// dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    indices: Vec<usize>,
}

impl Position {
    /// Builds a position from grid indices, checking them against `space`.
    pub fn from_indices(space: &ParameterSpace, indices: Vec<usize>) -> Result<Self, SpaceError> {
        if indices.len() != space.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: space.dim(),
                got: indices.len(),
            });
        }
        for (spec, &k) in space.specs().iter().zip(&indices) {
            if k >= spec.count() {
                return Err(SpaceError::OffGrid {
                    name: spec.name().to_string(),
                    value: spec.min() + k as f64 * spec.step(),
                });
            }
        }
        Ok(Self { indices })
    }

    pub(crate) fn from_indices_unchecked(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Materializes the real parameter values.
    pub fn values(&self, space: &ParameterSpace) -> Vec<f64> {
        space
            .specs()
            .iter()
            .zip(&self.indices)
            .map(|(spec, &k)| spec.value_at(k))
            .collect()
    }
}

/// Reconstruction algorithms with a shipped search-space preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReconAlgorithm {
    AsdPocs,
    AwPcsd,
    Piccs,
}

impl ReconAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            ReconAlgorithm::AsdPocs => "asd-pocs",
            ReconAlgorithm::AwPcsd => "awpcsd",
            ReconAlgorithm::Piccs => "piccs",
        }
    }
}

impl fmt::Display for ReconAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReconAlgorithm {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "asd-pocs" | "asdpocs" => Ok(ReconAlgorithm::AsdPocs),
            "awpcsd" | "aw-pcsd" => Ok(ReconAlgorithm::AwPcsd),
            "piccs" => Ok(ReconAlgorithm::Piccs),
            _ => Err(SpaceError::UnknownAlgorithm(s.to_string())),
        }
    }
}

/// An ordered set of parameter grids.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    specs: Vec<ParameterSpec>,
}

impl ParameterSpace {
    pub fn new(specs: Vec<ParameterSpec>) -> Result<Self, SpaceError> {
        for (i, spec) in specs.iter().enumerate() {
            if specs[..i].iter().any(|s| s.name() == spec.name()) {
                return Err(SpaceError::DuplicateName(spec.name().to_string()));
            }
        }
        Ok(Self { specs })
    }

    /// The grids used for each reconstruction algorithm's tunable parameters.
    pub fn preset(algorithm: ReconAlgorithm) -> Self {
        let row = |name: &str, min, max, step| ParameterSpec::new(name, min, max, step).expect("preset grid");
        let specs = match algorithm {
            ReconAlgorithm::AsdPocs | ReconAlgorithm::Piccs => vec![
                row("max_iter", 5.0, 50.0, 1.0),
                row("tv_iter", 5.0, 50.0, 1.0),
                row("epsilon", 50.0, 1500.0, 10.0),
                row("alpha", 0.0001, 0.1, 0.0001),
                row("alpha_red", 0.9, 0.99, 0.01),
                row("lambda", 0.9, 0.99, 0.01),
                row("lambda_red", 0.9, 0.99, 0.01),
                row("r_max", 0.9, 0.99, 0.01),
            ],
            ReconAlgorithm::AwPcsd => vec![
                row("max_iter", 5.0, 50.0, 1.0),
                row("tv_iter", 5.0, 50.0, 1.0),
                row("epsilon", 50.0, 1500.0, 10.0),
                row("lambda", 0.9, 0.99, 0.01),
                row("lambda_red", 0.9, 0.99, 0.01),
                row("delta", 0.005, 2.0, 0.005),
            ],
        };
        Self { specs }
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn spec(&self, name: &str) -> Option<&ParameterSpec> {
        self.specs.iter().find(|s| s.name() == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name() == name)
    }

    /// Clamps each coordinate into its range and rounds it to the nearest
    /// grid point (exact ties round toward `min`).
    pub fn snap(&self, raw: &[f64]) -> Result<Position, SpaceError> {
        self.check_len(raw.len())?;
        let indices = self.specs.iter().zip(raw).map(|(spec, &v)| spec.snap_index(v)).collect();
        Ok(Position { indices })
    }

    /// Like [`snap`](Self::snap) but for fractional grid coordinates.
    pub fn snap_fractional(&self, raw_indices: &[f64]) -> Result<Position, SpaceError> {
        self.check_len(raw_indices.len())?;
        let indices = self
            .specs
            .iter()
            .zip(raw_indices)
            .map(|(spec, &r)| spec.snap_fractional_index(r))
            .collect();
        Ok(Position { indices })
    }

    /// Total number of grid points in the product space (saturating).
    pub fn cardinality(&self) -> u128 {
        self.specs
            .iter()
            .fold(1u128, |acc, s| acc.saturating_mul(s.count() as u128))
    }

    fn check_len(&self, got: usize) -> Result<(), SpaceError> {
        if got != self.dim() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(min: f64, max: f64, step: f64) -> ParameterSpec {
        ParameterSpec::new("p", min, max, step).unwrap()
    }

    #[test]
    fn preset_grids_match_table() {
        let asd = ParameterSpace::preset(ReconAlgorithm::AsdPocs);
        assert_eq!(asd.dim(), 8);
        let alpha = asd.spec("alpha").unwrap();
        assert_eq!((alpha.min(), alpha.max(), alpha.step()), (0.0001, 0.1, 0.0001));
        assert_eq!(alpha.count(), 1000);
        let eps = asd.spec("epsilon").unwrap();
        assert_eq!((eps.min(), eps.max(), eps.step()), (50.0, 1500.0, 10.0));
        assert_eq!(eps.count(), 146);
        assert_eq!(asd.spec("max_iter").unwrap().count(), 46);
        for name in ["alpha_red", "lambda", "lambda_red", "r_max"] {
            assert_eq!(asd.spec(name).unwrap().count(), 10, "{name}");
        }

        let aw = ParameterSpace::preset(ReconAlgorithm::AwPcsd);
        assert_eq!(aw.dim(), 6);
        let delta = aw.spec("delta").unwrap();
        assert_eq!((delta.min(), delta.max(), delta.step()), (0.005, 2.0, 0.005));
        assert_eq!(delta.count(), 400);
        assert!(aw.spec("alpha").is_none());

        let names: Vec<_> = ParameterSpace::preset(ReconAlgorithm::Piccs)
            .specs()
            .iter()
            .map(|s| s.name().to_string())
            .collect();
        assert_eq!(
            names,
            ["max_iter", "tv_iter", "epsilon", "alpha", "alpha_red", "lambda", "lambda_red", "r_max"]
        );
    }

    #[test]
    fn grid_max_lands_on_max() {
        for space in [
            ParameterSpace::preset(ReconAlgorithm::AsdPocs),
            ParameterSpace::preset(ReconAlgorithm::AwPcsd),
        ] {
            for s in space.specs() {
                assert!((s.grid_max() - s.max()).abs() < 1e-9, "{}", s.name());
            }
        }
    }

    #[test]
    fn snap_examples() {
        let alpha = spec(0.0001, 0.1, 0.0001);
        assert_eq!(alpha.snap_value(0.00014), 0.0001);
        let eps = spec(50.0, 1500.0, 10.0);
        assert_eq!(eps.snap_value(2000.0), 1500.0);
        assert_eq!(eps.snap_value(-3.0), 50.0);
        // |0.934 - 0.93| = 0.004 < |0.934 - 0.94| = 0.006
        let lam = spec(0.9, 0.99, 0.01);
        assert_eq!(lam.snap_index(0.934), 3);
        assert!((lam.snap_value(0.934) - 0.93).abs() < 1e-12);
    }

    #[test]
    fn halfway_ties_round_toward_min() {
        let eps = spec(50.0, 1500.0, 10.0);
        assert_eq!(eps.snap_value(775.0), 770.0);
        assert_eq!(eps.snap_value(775.0001), 780.0);
        let lam = spec(0.9, 0.99, 0.01);
        assert_eq!(lam.snap_index(0.905), 0);
        assert_eq!(spec(0.0, 10.0, 1.0).snap_fractional_index(2.5), 2);
    }

    #[test]
    fn grid_index_examples() {
        assert_eq!(spec(5.0, 50.0, 1.0).grid_index(5.0), Ok(0));
        assert_eq!(spec(50.0, 1500.0, 10.0).grid_index(1500.0), Ok(145));
        assert_eq!(spec(0.9, 0.99, 0.01).grid_index(0.95), Ok(5));
        assert!(matches!(
            spec(50.0, 1500.0, 10.0).grid_index(55.0),
            Err(SpaceError::OffGrid { .. })
        ));
        assert!(spec(50.0, 1500.0, 10.0).grid_index(1510.0).is_err());
    }

    #[test]
    fn snap_rejects_wrong_dimension() {
        let space = ParameterSpace::preset(ReconAlgorithm::AwPcsd);
        assert_eq!(
            space.snap(&[1.0; 8]),
            Err(SpaceError::DimensionMismatch { expected: 6, got: 8 })
        );
    }

    #[test]
    fn invalid_specs() {
        assert!(ParameterSpec::new("a", 0.0, 1.0, 0.0).is_err());
        assert!(ParameterSpec::new("a", 2.0, 1.0, 0.1).is_err());
        assert_eq!(ParameterSpec::new("a", 1.0, 1.0, 0.1).unwrap().count(), 1);
        let a = ParameterSpec::new("a", 0.0, 1.0, 0.1).unwrap();
        assert_eq!(
            ParameterSpace::new(vec![a.clone(), a]),
            Err(SpaceError::DuplicateName("a".into()))
        );
    }

    #[test]
    fn algorithm_names_parse() {
        assert_eq!("ASD-POCS".parse(), Ok(ReconAlgorithm::AsdPocs));
        assert_eq!("asd_pocs".parse(), Ok(ReconAlgorithm::AsdPocs));
        assert_eq!("AwPCSD".parse(), Ok(ReconAlgorithm::AwPcsd));
        assert!("fdk".parse::<ReconAlgorithm>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_preset_spec() -> impl Strategy<Value = ParameterSpec> {
            let specs: Vec<ParameterSpec> = [ReconAlgorithm::AsdPocs, ReconAlgorithm::AwPcsd]
                .into_iter()
                .flat_map(|a| ParameterSpace::preset(a).specs().to_vec())
                .collect();
            proptest::sample::select(specs)
        }

        proptest! {
            #[test]
            fn grid_index_round_trips(spec in any_preset_spec(), frac in 0.0f64..1.0) {
                let k = ((spec.count() - 1) as f64 * frac) as usize;
                prop_assert_eq!(spec.grid_index(spec.value_at(k)), Ok(k));
            }

            #[test]
            fn snap_is_idempotent_and_bounded(raw in proptest::collection::vec(-10.0f64..2000.0, 8)) {
                let space = ParameterSpace::preset(ReconAlgorithm::AsdPocs);
                let once = space.snap(&raw).unwrap();
                let values = once.values(&space);
                prop_assert_eq!(space.snap(&values).unwrap(), once);
                for (spec, v) in space.specs().iter().zip(values) {
                    prop_assert!(v >= spec.min() - 1e-12 && v <= spec.max() + 1e-9);
                }
            }
        }
    }
}
