//! Phantom to sinogram to reconstruction plumbing shared by the command line
//! and the acceptance tests.

use thiserror::Error;

use crate::fitness::{self, FitnessConfig, FitnessReport};
use crate::image::{Image2D, Sinogram};
use crate::optimizer::{EvaluationError, Evaluator};
use crate::param_space::{ParameterSpace, Position, ReconAlgorithm, SpaceError};
use crate::phantoms::{make_phantom, simulate_sinogram, subsample_views, PhantomError, PhantomKind, PhantomSpec};
use crate::recon::{reconstruct, Geometry, Projector, ReconError, ReconParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error("{0}")]
    Invalid(String),
}

/// Everything needed to simulate one tuning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub phantom: PhantomSpec,
    pub n_angles: usize,
    pub n_detectors: usize,
    /// Fraction of views kept after simulation (1 keeps all).
    pub keep_fraction: f64,
    /// Seed for the measurement noise.
    pub noise_seed: u64,
    pub algorithm: ReconAlgorithm,
    /// Values for parameters outside the search space (and `rho`).
    pub base_params: ReconParams,
    pub fitness: FitnessConfig,
}

impl Scenario {
    /// Scenario with full views, default detector count and default
    /// reconstruction and fitness settings.
    pub fn new(phantom: PhantomSpec, n_angles: usize, algorithm: ReconAlgorithm) -> Self {
        let n_detectors = Geometry::default_detectors(phantom.size);
        Self {
            phantom,
            n_angles,
            n_detectors,
            keep_fraction: 1.0,
            noise_seed: 0,
            algorithm,
            base_params: ReconParams::default(),
            fitness: FitnessConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.phantom.size < 16 {
            return invalid(format!("image size must be at least 16, got {}", self.phantom.size));
        }
        if !(self.phantom.intensity > 0.0 && self.phantom.intensity.is_finite()) {
            return invalid(format!("intensity must be positive, got {}", self.phantom.intensity));
        }
        if self.n_angles == 0 {
            return invalid("n_angles must be at least 1".into());
        }
        if self.n_detectors < self.phantom.size {
            return invalid(format!(
                "n_detectors ({}) must be at least the image size ({})",
                self.n_detectors, self.phantom.size
            ));
        }
        if self.algorithm == ReconAlgorithm::Piccs && self.phantom.kind != PhantomKind::DiskWithInsert {
            return invalid("piccs needs phantom.kind = disk_with_insert, whose insert-free version is the prior".into());
        }
        self.phantom.noise.validate()?;
        self.fitness
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Builds the ground truth, the (noisy, possibly view-subsampled)
    /// sinogram and the projector matching it.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        self.validate()?;
        let truth = make_phantom(&self.phantom);
        let full = Geometry::parallel(self.phantom.size, self.n_angles, self.n_detectors);
        let full_projector = Projector::new(full.clone());
        let sino = simulate_sinogram(&truth, &full_projector, self.phantom.noise, self.noise_seed)?;
        let (sinogram, projector) = if self.keep_fraction < 1.0 {
            let (sub, geometry) = subsample_views(&sino, &full, self.keep_fraction)?;
            (sub, Projector::new(geometry))
        } else {
            (sino, full_projector)
        };
        let prior = match self.phantom.kind {
            PhantomKind::DiskWithInsert => Some(make_phantom(&self.phantom.clone().with_insert(false))),
            _ => None,
        };
        Ok(Prepared {
            truth,
            sinogram,
            projector,
            prior,
        })
    }
}

/// Simulated data for one [`Scenario`].
#[derive(Debug, Clone)]
pub struct Prepared {
    pub truth: Image2D,
    pub sinogram: Sinogram,
    pub projector: Projector,
    /// Insert-free ground truth, available for `disk_with_insert`.
    pub prior: Option<Image2D>,
}

impl Prepared {
    pub fn reconstruct(&self, algorithm: ReconAlgorithm, params: &ReconParams) -> Result<Image2D, ReconError> {
        reconstruct(algorithm, &self.sinogram, &self.projector, params, self.prior.as_ref())
    }
}

/// Reconstructs with the parameters at a grid position and scores the
/// result with the no-reference fitness.
pub struct ReconEvaluator<'a> {
    pub space: &'a ParameterSpace,
    pub prepared: &'a Prepared,
    pub algorithm: ReconAlgorithm,
    pub base_params: ReconParams,
    pub fitness: FitnessConfig,
}

impl<'a> ReconEvaluator<'a> {
    pub fn new(space: &'a ParameterSpace, prepared: &'a Prepared, scenario: &Scenario) -> Self {
        Self {
            space,
            prepared,
            algorithm: scenario.algorithm,
            base_params: scenario.base_params,
            fitness: scenario.fitness,
        }
    }

    pub fn params(&self, position: &Position) -> Result<ReconParams, SpaceError> {
        ReconParams::from_position(self.space, position, &self.base_params)
    }

    /// Reconstruction and its fitness report.
    pub fn run(&self, params: &ReconParams) -> Result<(Image2D, FitnessReport), EvaluationError> {
        let image = self.prepared.reconstruct(self.algorithm, params)?;
        let report = fitness::evaluate(std::slice::from_ref(&image), &self.fitness)?;
        Ok((image, report))
    }
}

impl Evaluator for ReconEvaluator<'_> {
    fn evaluate(&self, position: &Position) -> Result<FitnessReport, EvaluationError> {
        let params = self.params(position).map_err(|e| EvaluationError(e.to_string()))?;
        self.run(&params).map(|(_, report)| report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantoms::NoiseModel;

    fn scenario() -> Scenario {
        let phantom = PhantomSpec::new(PhantomKind::SheppLogan, 32, 2.5).with_noise(NoiseModel::Gaussian(0.5));
        Scenario::new(phantom, 20, ReconAlgorithm::AsdPocs)
    }

    #[test]
    fn prepare_is_seeded() {
        let s = scenario();
        let a = s.prepare().unwrap();
        let b = s.prepare().unwrap();
        assert_eq!(a.sinogram, b.sinogram);
        let other = Scenario { noise_seed: 1, ..s }.prepare().unwrap();
        assert_ne!(a.sinogram, other.sinogram);
    }

    #[test]
    fn subsampling_shrinks_geometry() {
        let s = Scenario {
            keep_fraction: 0.2,
            ..scenario()
        };
        let p = s.prepare().unwrap();
        assert_eq!(p.sinogram.n_angles(), 4);
        assert_eq!(p.projector.geometry().n_angles(), 4);
    }

    #[test]
    fn evaluator_scores_grid_points() {
        let s = scenario();
        let p = s.prepare().unwrap();
        let space = ParameterSpace::preset(ReconAlgorithm::AsdPocs);
        let eval = ReconEvaluator::new(&space, &p, &s);
        let pos = Position::from_indices(&space, vec![0; space.dim()]).unwrap();
        let report = eval.evaluate(&pos).unwrap();
        assert!(report.fitness.is_finite() && report.snr > 0.0);
    }

    #[test]
    fn piccs_requires_insert_phantom() {
        let s = Scenario {
            algorithm: ReconAlgorithm::Piccs,
            ..scenario()
        };
        assert!(matches!(s.prepare(), Err(ScenarioError::Invalid(_))));
        let ok = Scenario {
            phantom: PhantomSpec::new(PhantomKind::DiskWithInsert, 32, 1.2),
            ..s
        };
        assert!(ok.prepare().unwrap().prior.is_some());
    }
}
