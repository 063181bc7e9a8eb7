//! Parallel-beam projector.
//!
//! Each ray is marched in half-pixel steps across the image; at every sample
//! the image is read with bilinear interpolation and the result is weighted by
//! the step length. The resulting per-ray pixel weights are stored in a sparse
//! row-compressed matrix, so the back projector is the exact transpose of the
//! forward projector.

use crate::image::{Image2D, Sinogram};

/// Ray-marching step, in pixels.
const MARCH_STEP: f64 = 0.5;

/// 2D parallel-beam acquisition geometry. Pixels and detector bins are both
/// one length unit wide; the image and the detector are centered on the
/// rotation axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    n: usize,
    n_detectors: usize,
    angles: Vec<f64>,
}

impl Geometry {
    /// `n_angles` views equally spaced over `[0, pi)`.
    pub fn parallel(n: usize, n_angles: usize, n_detectors: usize) -> Self {
        let angles = (0..n_angles)
            .map(|i| std::f64::consts::PI * i as f64 / n_angles as f64)
            .collect();
        Self::with_angles(n, n_detectors, angles)
    }

    /// Detector count that covers the full image diagonal.
    pub fn default_detectors(n: usize) -> usize {
        (n as f64 * std::f64::consts::SQRT_2).ceil() as usize
    }

    pub fn with_angles(n: usize, n_detectors: usize, angles: Vec<f64>) -> Self {
        assert!(n >= 2, "image must be at least 2x2");
        assert!(!angles.is_empty(), "geometry needs at least one view");
        assert!(n_detectors >= 1, "geometry needs at least one detector");
        Self {
            n,
            n_detectors,
            angles,
        }
    }

    pub fn image_size(&self) -> usize {
        self.n
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_detectors(&self) -> usize {
        self.n_detectors
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_rays(&self) -> usize {
        self.angles.len() * self.n_detectors
    }
}

/// Precomputed system matrix for a [`Geometry`], plus the per-view
/// normalizers SART needs.
#[derive(Debug, Clone)]
pub struct Projector {
    geometry: Geometry,
    ray_ptr: Vec<usize>,
    pixel: Vec<u32>,
    weight: Vec<f64>,
    inv_row_sum: Vec<f64>,
    /// `n_angles` blocks of `n * n` inverse column sums.
    inv_col_sum: Vec<f64>,
}

impl Projector {
    pub fn new(geometry: Geometry) -> Self {
        let n = geometry.n;
        let npix = n * n;
        let half = (n as f64 - 1.0) / 2.0;
        let det_half = (geometry.n_detectors as f64 - 1.0) / 2.0;
        let reach = 0.5 * n as f64 * std::f64::consts::SQRT_2 + 1.0;
        let n_samples = (2.0 * reach / MARCH_STEP).ceil() as usize;

        let mut ray_ptr = Vec::with_capacity(geometry.n_rays() + 1);
        ray_ptr.push(0);
        let mut pixel = Vec::new();
        let mut weight = Vec::new();
        let mut scratch = vec![0.0f64; npix];
        let mut touched: Vec<u32> = Vec::new();

        for &theta in &geometry.angles {
            let (sin_t, cos_t) = theta.sin_cos();
            for k in 0..geometry.n_detectors {
                let t = k as f64 - det_half;
                for m in 0..n_samples {
                    let s = -reach + (m as f64 + 0.5) * MARCH_STEP;
                    let x = t * cos_t - s * sin_t;
                    let y = t * sin_t + s * cos_t;
                    // Fractional (row, col) with pixel centers on integers.
                    let fc = x + half;
                    let fr = half - y;
                    if fc <= -1.0 || fr <= -1.0 || fc >= n as f64 || fr >= n as f64 {
                        continue;
                    }
                    let c0 = fc.floor();
                    let r0 = fr.floor();
                    let wx = fc - c0;
                    let wy = fr - r0;
                    let corners = [
                        (r0, c0, (1.0 - wy) * (1.0 - wx)),
                        (r0, c0 + 1.0, (1.0 - wy) * wx),
                        (r0 + 1.0, c0, wy * (1.0 - wx)),
                        (r0 + 1.0, c0 + 1.0, wy * wx),
                    ];
                    for (r, c, w) in corners {
                        if w == 0.0 || r < 0.0 || c < 0.0 || r >= n as f64 || c >= n as f64 {
                            continue;
                        }
                        let idx = r as usize * n + c as usize;
                        if scratch[idx] == 0.0 {
                            touched.push(idx as u32);
                        }
                        scratch[idx] += w * MARCH_STEP;
                    }
                }
                touched.sort_unstable();
                for &idx in &touched {
                    let w = scratch[idx as usize];
                    scratch[idx as usize] = 0.0;
                    if w > 0.0 {
                        pixel.push(idx);
                        weight.push(w);
                    }
                }
                touched.clear();
                ray_ptr.push(pixel.len());
            }
        }

        let n_rays = geometry.n_rays();
        let mut inv_row_sum = vec![0.0; n_rays];
        let mut inv_col_sum = vec![0.0; geometry.n_angles() * npix];
        for ray in 0..n_rays {
            let range = ray_ptr[ray]..ray_ptr[ray + 1];
            let row_sum: f64 = weight[range.clone()].iter().sum();
            inv_row_sum[ray] = if row_sum > 0.0 { 1.0 / row_sum } else { 0.0 };
            let block = ray / geometry.n_detectors * npix;
            for (p, w) in pixel[range.clone()].iter().zip(&weight[range]) {
                inv_col_sum[block + *p as usize] += w;
            }
        }
        for v in inv_col_sum.iter_mut() {
            *v = if *v > 0.0 { 1.0 / *v } else { 0.0 };
        }

        Self {
            geometry,
            ray_ptr,
            pixel,
            weight,
            inv_row_sum,
            inv_col_sum,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    /// Number of stored matrix entries.
    pub fn nnz(&self) -> usize {
        self.weight.len()
    }

    #[inline]
    fn ray_dot(&self, ray: usize, x: &[f64]) -> f64 {
        let range = self.ray_ptr[ray]..self.ray_ptr[ray + 1];
        self.pixel[range.clone()]
            .iter()
            .zip(&self.weight[range])
            .map(|(&p, &w)| w * x[p as usize])
            .sum()
    }

    #[inline]
    fn ray_scatter(&self, ray: usize, value: f64, x: &mut [f64]) {
        let range = self.ray_ptr[ray]..self.ray_ptr[ray + 1];
        for (&p, &w) in self.pixel[range.clone()].iter().zip(&self.weight[range]) {
            x[p as usize] += w * value;
        }
    }

    fn check_image(&self, image: &Image2D) {
        let n = self.geometry.n;
        assert_eq!(image.shape(), (n, n), "image does not match projector geometry");
    }

    fn check_sinogram(&self, sino: &Sinogram) {
        assert_eq!(
            (sino.n_angles(), sino.n_detectors()),
            (self.geometry.n_angles(), self.geometry.n_detectors),
            "sinogram does not match projector geometry"
        );
    }

    /// `A x`: line integrals of `image` along every ray.
    pub fn forward(&self, image: &Image2D) -> Sinogram {
        self.check_image(image);
        let x = image.data();
        let data = (0..self.geometry.n_rays()).map(|ray| self.ray_dot(ray, x)).collect();
        Sinogram::from_vec(self.geometry.n_angles(), self.geometry.n_detectors, data)
    }

    /// `A^T y`, the exact adjoint of [`forward`](Self::forward).
    pub fn back(&self, sino: &Sinogram) -> Image2D {
        self.check_sinogram(sino);
        let n = self.geometry.n;
        let mut out = Image2D::zeros(n, n);
        let x = out.data_mut();
        for (ray, &y) in sino.data().iter().enumerate() {
            if y != 0.0 {
                self.ray_scatter(ray, y, x);
            }
        }
        out
    }

    /// `||A x - b||_2`.
    pub fn residual_norm(&self, image: &Image2D, sino: &Sinogram) -> f64 {
        self.check_image(image);
        self.check_sinogram(sino);
        let x = image.data();
        sino.data()
            .iter()
            .enumerate()
            .map(|(ray, &b)| {
                let r = self.ray_dot(ray, x) - b;
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }

    /// One SART pass over all views in order, followed by clipping negative
    /// pixels to zero. Rays or pixels with a zero normalizer receive no update.
    pub fn sart_sweep(&self, image: &mut Image2D, sino: &Sinogram, lambda: f64) {
        self.check_image(image);
        self.check_sinogram(sino);
        let nd = self.geometry.n_detectors;
        let npix = image.len();
        let mut correction = vec![0.0; npix];
        let mut normalized = vec![0.0; nd];
        for angle in 0..self.geometry.n_angles() {
            let x = image.data_mut();
            let mut any = false;
            for (k, (slot, &b)) in normalized.iter_mut().zip(sino.view(angle)).enumerate() {
                let ray = angle * nd + k;
                *slot = (b - self.ray_dot(ray, x)) * self.inv_row_sum[ray];
                any |= *slot != 0.0;
            }
            if !any {
                continue;
            }
            correction.iter_mut().for_each(|v| *v = 0.0);
            for (k, &r) in normalized.iter().enumerate() {
                if r != 0.0 {
                    self.ray_scatter(angle * nd + k, r, &mut correction);
                }
            }
            let inv_col = &self.inv_col_sum[angle * npix..(angle + 1) * npix];
            for ((xi, ci), vi) in x.iter_mut().zip(&correction).zip(inv_col) {
                *xi += lambda * ci * vi;
            }
        }
        for v in image.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Convenience wrapper building a one-off [`Projector`].
pub fn forward_project(image: &Image2D, geometry: &Geometry) -> Sinogram {
    Projector::new(geometry.clone()).forward(image)
}

/// Convenience wrapper building a one-off [`Projector`].
pub fn back_project(sino: &Sinogram, geometry: &Geometry) -> Image2D {
    Projector::new(geometry.clone()).back(sino)
}
