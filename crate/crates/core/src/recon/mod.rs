//! Iterative 2D reconstruction: the black box the optimizer tunes.
//!
//! All three algorithms alternate a data-consistency stage (one SART sweep
//! with non-negativity) with a block of normalized steepest-descent steps on
//! a total-variation style regularizer:
//!
//! * [`asd_pocs`] descends plain TV and adapts the TV step through
//!   `alpha`, `alpha_red` and `r_max`;
//! * [`awpcsd`] descends the edge-weighted TV and ties the TV step to the
//!   size of the SART update;
//! * [`piccs`] descends `rho * TV(x - prior) + (1 - rho) * TV(x)`.

mod projector;
mod tv;

pub use projector::{back_project, forward_project, Geometry, Projector};
pub use tv::{awtv_gradient, awtv_norm, tv_gradient, tv_norm, TV_SMOOTHING};

use thiserror::Error;

use crate::image::{diff_norm, dot, norm2, Image2D, Sinogram};
use crate::param_space::{ParameterSpace, Position, ReconAlgorithm, SpaceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconError {
    #[error("reconstruction diverged: non-finite values after outer iteration {0}")]
    NonFinite(usize),
    #[error("invalid reconstruction parameter: {0}")]
    InvalidParams(String),
    #[error("prior image is {got}x{got}, geometry expects {expected}x{expected}")]
    PriorShape { expected: usize, got: usize },
}

/// Every tunable reconstruction hyperparameter, plus the fixed PICCS prior
/// weight `rho`. Each algorithm reads only its own subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconParams {
    pub max_iter: usize,
    pub tv_iter: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub alpha_red: f64,
    pub lambda: f64,
    pub lambda_red: f64,
    pub r_max: f64,
    pub delta: f64,
    pub rho: f64,
}

impl Default for ReconParams {
    fn default() -> Self {
        Self {
            max_iter: 20,
            tv_iter: 20,
            epsilon: 200.0,
            alpha: 0.002,
            alpha_red: 0.95,
            lambda: 0.95,
            lambda_red: 0.99,
            r_max: 0.95,
            delta: 0.6,
            rho: 0.5,
        }
    }
}

impl ReconParams {
    /// Names of the fields each algorithm consumes, in preset order.
    pub fn names_for(algorithm: ReconAlgorithm) -> &'static [&'static str] {
        match algorithm {
            ReconAlgorithm::AsdPocs | ReconAlgorithm::Piccs => &[
                "max_iter",
                "tv_iter",
                "epsilon",
                "alpha",
                "alpha_red",
                "lambda",
                "lambda_red",
                "r_max",
            ],
            ReconAlgorithm::AwPcsd => &["max_iter", "tv_iter", "epsilon", "lambda", "lambda_red", "delta"],
        }
    }

    /// Sets one field by name. Iteration counts are rounded to integers.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), SpaceError> {
        let count = || value.round().max(0.0) as usize;
        match name {
            "max_iter" => self.max_iter = count(),
            "tv_iter" => self.tv_iter = count(),
            "epsilon" => self.epsilon = value,
            "alpha" => self.alpha = value,
            "alpha_red" => self.alpha_red = value,
            "lambda" => self.lambda = value,
            "lambda_red" => self.lambda_red = value,
            "r_max" => self.r_max = value,
            "delta" => self.delta = value,
            "rho" => self.rho = value,
            _ => return Err(SpaceError::UnknownParameter(name.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "max_iter" => self.max_iter as f64,
            "tv_iter" => self.tv_iter as f64,
            "epsilon" => self.epsilon,
            "alpha" => self.alpha,
            "alpha_red" => self.alpha_red,
            "lambda" => self.lambda,
            "lambda_red" => self.lambda_red,
            "r_max" => self.r_max,
            "delta" => self.delta,
            "rho" => self.rho,
            _ => return None,
        })
    }

    /// `base` with every dimension of `position` written over it.
    pub fn from_position(space: &ParameterSpace, position: &Position, base: &ReconParams) -> Result<Self, SpaceError> {
        let mut params = *base;
        for (spec, value) in space.specs().iter().zip(position.values(space)) {
            params.set(spec.name(), value)?;
        }
        Ok(params)
    }

    fn validate(&self) -> Result<(), ReconError> {
        let bad = |msg: &str| Err(ReconError::InvalidParams(msg.to_string()));
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be non-negative");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        Ok(())
    }
}

fn clip_negative(img: &mut Image2D) {
    for v in img.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `steps` normalized steepest-descent steps of length `step` along
/// `-direction(x)`. Stops early on a vanishing or non-finite direction.
fn descend(x: &mut Image2D, steps: usize, step: f64, direction: &dyn Fn(&Image2D) -> Image2D) {
    if step == 0.0 {
        return;
    }
    for _ in 0..steps {
        let g = direction(x);
        let gn = norm2(g.data());
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let scale = step / gn;
        for (xi, gi) in x.data_mut().iter_mut().zip(g.data()) {
            *xi -= scale * gi;
        }
    }
}

/// Diagnostics of one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterStep {
    /// Data residual `||Ax - b||` right after the SART sweep.
    pub residual: f64,
    /// Size of the SART update.
    pub data_change: f64,
    /// Size of the regularizer block's update.
    pub tv_change: f64,
    /// TV step scale used in this iteration.
    pub alpha: f64,
}

/// The ASD-POCS outer loop with a pluggable regularizer gradient.
fn asd_pocs_loop(
    sino: &Sinogram,
    projector: &Projector,
    params: &ReconParams,
    init: Option<&Image2D>,
    direction: &dyn Fn(&Image2D) -> Image2D,
) -> Result<(Image2D, Vec<OuterStep>), ReconError> {
    params.validate()?;
    let n = projector.geometry().image_size();
    let mut x = init.cloned().unwrap_or_else(|| Image2D::zeros(n, n));
    let mut lambda = params.lambda;
    let mut alpha = params.alpha;
    let mut trace = Vec::with_capacity(params.max_iter);

    for iter in 0..params.max_iter {
        let before = x.clone();
        projector.sart_sweep(&mut x, sino, lambda);
        lambda *= params.lambda_red;

        let dp = diff_norm(x.data(), before.data());
        let dd = projector.residual_norm(&x, sino);

        let after_sart = x.clone();
        descend(&mut x, params.tv_iter, alpha * dp, direction);
        let dg = diff_norm(x.data(), after_sart.data());

        if !x.is_finite() || !dd.is_finite() {
            return Err(ReconError::NonFinite(iter));
        }
        trace.push(OuterStep {
            residual: dd,
            data_change: dp,
            tv_change: dg,
            alpha,
        });
        if dg > params.r_max * dp && dd > params.epsilon {
            alpha *= params.alpha_red;
        }
        if dd <= params.epsilon && dg <= params.r_max * dp {
            break;
        }
    }
    clip_negative(&mut x);
    Ok((x, trace))
}

/// ASD-POCS: SART data steps interleaved with TV steepest descent, stopping
/// once the data residual is within `epsilon` and the TV change no longer
/// outweighs the data change by more than `r_max`.
pub fn asd_pocs(sino: &Sinogram, projector: &Projector, params: &ReconParams) -> Result<Image2D, ReconError> {
    asd_pocs_loop(sino, projector, params, None, &tv_gradient).map(|(x, _)| x)
}

/// [`asd_pocs`] together with the per-iteration diagnostics.
pub fn asd_pocs_traced(
    sino: &Sinogram,
    projector: &Projector,
    params: &ReconParams,
) -> Result<(Image2D, Vec<OuterStep>), ReconError> {
    asd_pocs_loop(sino, projector, params, None, &tv_gradient)
}

/// [`asd_pocs`] started from `init` instead of a zero image.
pub fn asd_pocs_from(
    sino: &Sinogram,
    projector: &Projector,
    params: &ReconParams,
    init: &Image2D,
) -> Result<Image2D, ReconError> {
    asd_pocs_loop(sino, projector, params, Some(init), &tv_gradient).map(|(x, _)| x)
}

/// Adaptive-weighted projection-controlled steepest descent.
///
/// The TV block of each outer iteration moves the image by at most the size
/// of that iteration's SART update (`tv_iter` steps of `scale * dp / tv_iter`).
/// `scale` starts at one and halves whenever the TV block pushes the data
/// residual above `epsilon` and above its post-SART value. The loop stops
/// once the residual is within `epsilon` and the TV and data updates point
/// in nearly opposite directions (cosine below -0.99).
pub fn awpcsd(sino: &Sinogram, projector: &Projector, params: &ReconParams) -> Result<Image2D, ReconError> {
    params.validate()?;
    let n = projector.geometry().image_size();
    let mut x = Image2D::zeros(n, n);
    let mut lambda = params.lambda;
    let mut scale = 1.0;
    let delta = params.delta;
    let direction = |img: &Image2D| awtv_gradient(img, delta);

    for iter in 0..params.max_iter {
        let before = x.clone();
        projector.sart_sweep(&mut x, sino, lambda);
        lambda *= params.lambda_red;

        let dp_vec: Vec<f64> = x.data().iter().zip(before.data()).map(|(a, b)| a - b).collect();
        let dp = norm2(&dp_vec);
        let dd = projector.residual_norm(&x, sino);

        let after_sart = x.clone();
        if params.tv_iter > 0 {
            descend(&mut x, params.tv_iter, scale * dp / params.tv_iter as f64, &direction);
        }
        let dg_vec: Vec<f64> = x.data().iter().zip(after_sart.data()).map(|(a, b)| a - b).collect();
        let dg = norm2(&dg_vec);

        if !x.is_finite() || !dd.is_finite() {
            return Err(ReconError::NonFinite(iter));
        }
        let dd_tv = projector.residual_norm(&x, sino);
        if dd_tv > params.epsilon && dd_tv > dd {
            scale *= 0.5;
        }
        let cosine = if dp > 0.0 && dg > 0.0 { dot(&dg_vec, &dp_vec) / (dg * dp) } else { 0.0 };
        if dd <= params.epsilon && cosine < -0.99 {
            break;
        }
    }
    clip_negative(&mut x);
    Ok(x)
}

fn check_prior(projector: &Projector, prior: &Image2D) -> Result<(), ReconError> {
    let n = projector.geometry().image_size();
    if prior.shape() != (n, n) {
        return Err(ReconError::PriorShape {
            expected: n,
            got: prior.rows(),
        });
    }
    Ok(())
}

/// Gradient of `rho * TV(x - prior) + (1 - rho) * TV(x)`.
pub fn piccs_gradient(x: &Image2D, prior: &Image2D, rho: f64) -> Image2D {
    let diff = Image2D::from_vec(
        x.rows(),
        x.cols(),
        x.data().iter().zip(prior.data()).map(|(a, b)| a - b).collect(),
    );
    let g_prior = tv_gradient(&diff);
    let mut g = tv_gradient(x);
    for (gi, pi) in g.data_mut().iter_mut().zip(g_prior.data()) {
        *gi = rho * pi + (1.0 - rho) * *gi;
    }
    g
}

/// Prior image constrained compressed sensing, solved with the ASD-POCS loop
/// and the PICCS regularizer. `params.rho` weights the prior term.
pub fn piccs(
    sino: &Sinogram,
    projector: &Projector,
    prior: &Image2D,
    params: &ReconParams,
) -> Result<Image2D, ReconError> {
    check_prior(projector, prior)?;
    let rho = params.rho;
    asd_pocs_loop(sino, projector, params, None, &|x| piccs_gradient(x, prior, rho)).map(|(x, _)| x)
}

/// [`piccs`] started from `init` instead of a zero image.
pub fn piccs_from(
    sino: &Sinogram,
    projector: &Projector,
    prior: &Image2D,
    params: &ReconParams,
    init: &Image2D,
) -> Result<Image2D, ReconError> {
    check_prior(projector, prior)?;
    let rho = params.rho;
    asd_pocs_loop(sino, projector, params, Some(init), &|x| piccs_gradient(x, prior, rho)).map(|(x, _)| x)
}

/// Dispatches to the algorithm's reconstruction. PICCS requires `prior`.
pub fn reconstruct(
    algorithm: ReconAlgorithm,
    sino: &Sinogram,
    projector: &Projector,
    params: &ReconParams,
    prior: Option<&Image2D>,
) -> Result<Image2D, ReconError> {
    match algorithm {
        ReconAlgorithm::AsdPocs => asd_pocs(sino, projector, params),
        ReconAlgorithm::AwPcsd => awpcsd(sino, projector, params),
        ReconAlgorithm::Piccs => {
            let prior = prior.ok_or_else(|| ReconError::InvalidParams("PICCS needs a prior image".into()))?;
            piccs(sino, projector, prior, params)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantoms::{make_phantom, PhantomKind, PhantomSpec};

    fn setup(n: usize, views: usize) -> (Projector, Image2D, Sinogram) {
        let truth = make_phantom(&PhantomSpec::new(PhantomKind::SheppLogan, n, 1.0));
        let projector = Projector::new(Geometry::parallel(n, views, Geometry::default_detectors(n)));
        let sino = projector.forward(&truth);
        (projector, truth, sino)
    }

    fn grid_min() -> ReconParams {
        ReconParams {
            max_iter: 5,
            tv_iter: 5,
            epsilon: 50.0,
            alpha: 0.0001,
            alpha_red: 0.9,
            lambda: 0.9,
            lambda_red: 0.9,
            r_max: 0.9,
            delta: 0.005,
            rho: 0.5,
        }
    }

    #[test]
    fn sart_residual_decreases_on_consistent_data() {
        let (projector, _, sino) = setup(32, 32);
        let mut x = Image2D::zeros(32, 32);
        let mut last = projector.residual_norm(&x, &sino);
        for sweep in 0..20 {
            projector.sart_sweep(&mut x, &sino, 0.95);
            let r = projector.residual_norm(&x, &sino);
            assert!(r <= last * (1.0 + 1e-12), "sweep {sweep}: {r} > {last}");
            last = r;
        }
    }

    #[test]
    fn asd_pocs_beats_zero_image() {
        let (projector, _, sino) = setup(32, 32);
        let params = ReconParams {
            epsilon: 0.0,
            ..grid_min()
        };
        let x = asd_pocs(&sino, &projector, &params).unwrap();
        assert!(projector.residual_norm(&x, &sino) < sino.norm());
        assert!(x.min() >= 0.0);
    }

    #[test]
    fn grid_min_params_are_total() {
        let (projector, truth, sino) = setup(32, 16);
        for out in [
            asd_pocs(&sino, &projector, &grid_min()).unwrap(),
            awpcsd(&sino, &projector, &grid_min()).unwrap(),
            piccs(&sino, &projector, &truth, &grid_min()).unwrap(),
        ] {
            assert!(out.is_finite());
            assert!(out.min() >= 0.0);
        }
    }

    #[test]
    fn small_tv_steps_reduce_tv() {
        let (projector, _, sino) = setup(32, 32);
        let mut x = Image2D::zeros(32, 32);
        for _ in 0..3 {
            projector.sart_sweep(&mut x, &sino, 0.95);
        }
        let before = x.clone();
        projector.sart_sweep(&mut x, &sino, 0.95);
        let dp = diff_norm(x.data(), before.data());
        let step = 0.0001 * dp;
        for _ in 0..20 {
            let tv_before = tv_norm(&x);
            descend(&mut x, 1, step, &tv_gradient);
            assert!(tv_norm(&x) < tv_before);
        }
    }

    #[test]
    fn generous_epsilon_stops_after_one_iteration() {
        let (projector, _, sino) = setup(32, 32);
        let generous = ReconParams {
            epsilon: 1e9,
            r_max: 0.99,
            alpha: 0.0001,
            ..ReconParams::default()
        };
        let single = ReconParams {
            max_iter: 1,
            ..generous
        };
        let a = asd_pocs(&sino, &projector, &generous).unwrap();
        let b = asd_pocs(&sino, &projector, &single).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generous_epsilon_residual_not_worse_than_first_sweep() {
        let (projector, _, sino) = setup(32, 32);
        let mut first = Image2D::zeros(32, 32);
        projector.sart_sweep(&mut first, &sino, 0.95);
        let first_res = projector.residual_norm(&first, &sino);
        let params = ReconParams {
            epsilon: 1500.0,
            lambda: 0.95,
            ..ReconParams::default()
        };
        let (_, trace) = asd_pocs_traced(&sino, &projector, &params).unwrap();
        assert!(trace.last().unwrap().residual <= first_res);
        assert_eq!(trace[0].residual, first_res);
    }

    #[test]
    fn awpcsd_with_wide_delta_tracks_asd_pocs() {
        // A tolerance below the reachable residual keeps both loops running
        // for all max_iter iterations; their stopping rules differ.
        let (projector, truth, sino) = setup(32, 32);
        let shared = ReconParams {
            max_iter: 20,
            tv_iter: 10,
            epsilon: 0.5,
            delta: 2.0,
            ..ReconParams::default()
        };
        let a = asd_pocs(&sino, &projector, &shared).unwrap();
        let w = awpcsd(&sino, &projector, &shared).unwrap();
        let rms = crate::eval::rms_error(&w, &a).unwrap();
        let scale = crate::eval::rms_error(&truth, &Image2D::zeros(32, 32)).unwrap();
        assert!(rms <= 0.05 * scale, "rms {rms} vs scale {scale}");
    }

    #[test]
    fn algorithms_are_deterministic() {
        let (projector, truth, sino) = setup(24, 12);
        let p = ReconParams::default();
        assert_eq!(awpcsd(&sino, &projector, &p), awpcsd(&sino, &projector, &p));
        assert_eq!(asd_pocs(&sino, &projector, &p), asd_pocs(&sino, &projector, &p));
        assert_eq!(
            piccs(&sino, &projector, &truth, &p),
            piccs(&sino, &projector, &truth, &p)
        );
    }

    #[test]
    fn piccs_without_prior_weight_is_asd_pocs() {
        let (projector, truth, sino) = setup(24, 12);
        let params = ReconParams {
            rho: 0.0,
            epsilon: 0.0,
            alpha: 0.05,
            ..ReconParams::default()
        };
        let prior = truth.map(|v| 0.5 * v + 0.1);
        assert_eq!(
            piccs(&sino, &projector, &prior, &params).unwrap(),
            asd_pocs(&sino, &projector, &params).unwrap()
        );
    }

    #[test]
    fn consistent_prior_is_fixed_point() {
        let (projector, truth, sino) = setup(24, 12);
        let params = ReconParams {
            rho: 1.0,
            ..ReconParams::default()
        };
        let out = piccs_from(&sino, &projector, &truth, &params, &truth).unwrap();
        assert_eq!(out, truth);
    }

    #[test]
    fn rejects_bad_params() {
        let (projector, truth, sino) = setup(16, 4);
        let bad = ReconParams {
            lambda: 0.0,
            ..ReconParams::default()
        };
        assert!(matches!(
            asd_pocs(&sino, &projector, &bad),
            Err(ReconError::InvalidParams(_))
        ));
        assert!(piccs(&sino, &projector, &Image2D::zeros(8, 8), &ReconParams::default()).is_err());
        assert!(reconstruct(ReconAlgorithm::Piccs, &sino, &projector, &ReconParams::default(), None).is_err());
        let _ = truth;
    }

    #[test]
    fn params_by_name() {
        let mut p = ReconParams::default();
        p.set("max_iter", 12.0000001).unwrap();
        p.set("delta", 0.25).unwrap();
        assert_eq!(p.max_iter, 12);
        assert_eq!(p.get("delta"), Some(0.25));
        assert!(p.set("gamma", 1.0).is_err());
        let space = ParameterSpace::preset(ReconAlgorithm::AsdPocs);
        let pos = space.snap(&[49.0, 24.0, 698.0, 0.0032, 0.969, 0.998, 0.927, 0.974]).unwrap();
        let q = ReconParams::from_position(&space, &pos, &ReconParams::default()).unwrap();
        assert_eq!((q.max_iter, q.tv_iter), (49, 24));
        assert_eq!(q.epsilon, 700.0);
        assert!((q.lambda - 0.99).abs() < 1e-12);
        assert_eq!(ReconParams::names_for(ReconAlgorithm::AwPcsd).len(), 6);
    }
}
