//! Smoothed total variation and its edge-adaptive weighted variant.
//!
//! Both functionals use forward differences with a zero difference across
//! the last row and column. The square root is smoothed with
//! [`TV_SMOOTHING`] and offset so that a flat image has exactly zero TV.

use crate::image::Image2D;

/// Smoothing constant inside the square root.
pub const TV_SMOOTHING: f64 = 1e-8;

#[inline]
fn forward_diffs(img: &Image2D, r: usize, c: usize) -> (f64, f64) {
    let (rows, cols) = img.shape();
    let v = img.get(r, c);
    let dx = if c + 1 < cols { img.get(r, c + 1) - v } else { 0.0 };
    let dy = if r + 1 < rows { img.get(r + 1, c) - v } else { 0.0 };
    (dx, dy)
}

/// Isotropic TV: `sum sqrt(dx^2 + dy^2 + mu) - sqrt(mu)`.
pub fn tv_norm(img: &Image2D) -> f64 {
    let floor = TV_SMOOTHING.sqrt();
    let mut total = 0.0;
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            let (dx, dy) = forward_diffs(img, r, c);
            total += (dx * dx + dy * dy + TV_SMOOTHING).sqrt() - floor;
        }
    }
    total
}

/// Scatters the partial derivatives of one per-pixel term into `grad`, given
/// the derivative of that term with respect to its two differences.
#[inline]
fn scatter(grad: &mut Image2D, r: usize, c: usize, d_dx: f64, d_dy: f64) {
    let (rows, cols) = grad.shape();
    let g = grad.data_mut();
    g[r * cols + c] -= d_dx + d_dy;
    if c + 1 < cols {
        g[r * cols + c + 1] += d_dx;
    }
    if r + 1 < rows {
        g[(r + 1) * cols + c] += d_dy;
    }
}

/// Gradient of [`tv_norm`].
pub fn tv_gradient(img: &Image2D) -> Image2D {
    let mut grad = Image2D::zeros(img.rows(), img.cols());
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            let (dx, dy) = forward_diffs(img, r, c);
            let phi = (dx * dx + dy * dy + TV_SMOOTHING).sqrt();
            scatter(&mut grad, r, c, dx / phi, dy / phi);
        }
    }
    grad
}

/// `d^2 * exp(-(d / delta)^2)` and its derivative in `d`.
#[inline]
fn weighted_square(d: f64, delta: f64) -> (f64, f64) {
    let ratio = d / delta;
    let w = (-ratio * ratio).exp();
    (d * d * w, 2.0 * d * w * (1.0 - ratio * ratio))
}

/// Adaptive-weighted TV: each squared difference is damped by
/// `exp(-(d / delta)^2)`, so large (edge) differences contribute less.
pub fn awtv_norm(img: &Image2D, delta: f64) -> f64 {
    let floor = TV_SMOOTHING.sqrt();
    let mut total = 0.0;
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            let (dx, dy) = forward_diffs(img, r, c);
            let (gx, _) = weighted_square(dx, delta);
            let (gy, _) = weighted_square(dy, delta);
            total += (gx + gy + TV_SMOOTHING).sqrt() - floor;
        }
    }
    total
}

/// Gradient of [`awtv_norm`], differentiating through the weights.
pub fn awtv_gradient(img: &Image2D, delta: f64) -> Image2D {
    let mut grad = Image2D::zeros(img.rows(), img.cols());
    for r in 0..img.rows() {
        for c in 0..img.cols() {
            let (dx, dy) = forward_diffs(img, r, c);
            let (gx, dgx) = weighted_square(dx, delta);
            let (gy, dgy) = weighted_square(dy, delta);
            let phi = (gx + gy + TV_SMOOTHING).sqrt();
            scatter(&mut grad, r, c, dgx / (2.0 * phi), dgy / (2.0 * phi));
        }
    }
    grad
}


#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> Image2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image2D::from_fn(8, 8, |_, _| rng.random::<f64>())
    }

    #[test]
    fn flat_image_has_no_variation() {
        let flat = Image2D::filled(8, 8, 3.0);
        assert_eq!(tv_norm(&flat), 0.0);
        assert!(tv_gradient(&flat).data().iter().all(|&g| g.abs() < 1e-6));
        assert!(awtv_gradient(&flat, 0.3).data().iter().all(|&g| g.abs() < 1e-6));
    }

    #[test]
    fn step_edge_tv_counts_rows() {
        let (n, h) = (10, 2.5);
        let img = Image2D::from_fn(n, n, |_, c| if c < 4 { 0.0 } else { h });
        assert!((tv_norm(&img) - n as f64 * h).abs() < 1e-3);
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let img = random_image(seed);
            let fd = finite_difference(&img, tv_norm, 1e-6);
            assert!(relative_error(&tv_gradient(&img), &fd) < 1e-4);
        }
    }

    #[test]
    fn awtv_gradient_matches_finite_differences() {
        for (seed, delta) in [(10, 0.05), (11, 0.3), (12, 1.0), (13, 2.0)] {
            let img = random_image(seed);
            let fd = finite_difference(&img, |x| awtv_norm(x, delta), 1e-6);
            assert!(relative_error(&awtv_gradient(&img, delta), &fd) < 1e-4, "delta {delta}");
        }
    }

    #[test]
    fn awtv_reduces_to_tv_for_huge_delta() {
        let img = random_image(20);
        let a = awtv_gradient(&img, 1e7);
        let t = tv_gradient(&img);
        for (x, y) in a.data().iter().zip(t.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}
