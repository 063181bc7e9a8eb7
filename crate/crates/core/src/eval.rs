//! Post-hoc diagnostics: correlation between series and PSNR against a
//! ground truth.

use thiserror::Error;

use crate::image::Image2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: a series is constant")]
    ConstantSeries,
    #[error("non-finite value in series")]
    NonFinite,
    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("data range must be positive")]
    InvalidRange,
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantSeries);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Peak signal-to-noise ratio in decibels; `+inf` when the images are equal.
pub fn psnr(image: &Image2D, reference: &Image2D, data_range: f64) -> Result<f64, EvalError> {
    if image.shape() != reference.shape() {
        return Err(EvalError::ShapeMismatch(image.shape(), reference.shape()));
    }
    if !(data_range > 0.0) {
        return Err(EvalError::InvalidRange);
    }
    let mse = image
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / image.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

/// Root-mean-square difference between two images of equal shape.
pub fn rms_error(image: &Image2D, reference: &Image2D) -> Result<f64, EvalError> {
    if image.shape() != reference.shape() {
        return Err(EvalError::ShapeMismatch(image.shape(), reference.shape()));
    }
    let sq: f64 = image
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq / image.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        // Deviations (-1, 0, 1) and (-7/3, -1/3, 8/3): 5 / sqrt(2 * 114/9).
        let expected = 5.0 / (2.0f64 * 114.0 / 9.0).sqrt();
        let r = pearson(&x, &[2.0, 4.0, 7.0]).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.993399).abs() < 1e-6);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(EvalError::ConstantSeries));
        assert_eq!(pearson(&[1.0], &[1.0]), Err(EvalError::TooShort(1)));
        assert_eq!(pearson(&[1.0, 2.0], &[1.0]), Err(EvalError::LengthMismatch(2, 1)));
    }

    #[test]
    fn psnr_examples() {
        let a = Image2D::filled(4, 4, 0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let range = 2.0;
        assert!(psnr(&Image2D::filled(4, 4, range), &Image2D::zeros(4, 4), range)
            .unwrap()
            .abs()
            < 1e-12);
        // MSE = range^2 / 100 when every pixel is off by range / 10.
        let off = Image2D::filled(4, 4, range / 10.0);
        assert!((psnr(&off, &Image2D::zeros(4, 4), range).unwrap() - 20.0).abs() < 1e-12);
        assert!(psnr(&a, &Image2D::zeros(3, 4), 1.0).is_err());
    }

    #[test]
    fn psnr_falls_with_noise_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let reference = Image2D::from_fn(32, 32, |_, _| rng.random::<f64>());
        let mut last = f64::INFINITY;
        for sigma in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let normal = Normal::new(0.0, sigma).unwrap();
            let noisy = reference.map(|v| v + normal.sample(&mut rng));
            let p = psnr(&noisy, &reference, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn symmetric_and_affine_invariant(
                pairs in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
                a in 0.01f64..50.0,
                c in -100.0f64..100.0,
            ) {
                let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                prop_assume!(pearson(&x, &y).is_ok());
                let r = pearson(&x, &y).unwrap();
                prop_assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
                let mapped: Vec<f64> = x.iter().map(|v| a * v + c).collect();
                prop_assert!((pearson(&mapped, &y).unwrap() - r).abs() < 1e-10);
                prop_assert!((-1.0..=1.0).contains(&r));
            }
        }
    }
}
