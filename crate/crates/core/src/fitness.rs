//! No-reference image quality objectives.
//!
//! The tuning objective combines a noise term (mean over standard deviation,
//! averaged over slices) with a sharpness term (the fraction of Fourier power
//! beyond a radial cutoff). Both are folded into a single minimization score
//!
//! ```text
//! fitness = eta / snr + xi * (1 - hfer)
//! ```
//!
//! and also kept as the two-component objective vector `(1/snr, 1 - hfer)`
//! used for Pareto selection.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::image::Image2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitnessError {
    #[error("degenerate image: {0}")]
    Degenerate(String),
    #[error("empty volume")]
    EmptyVolume,
    #[error("slice is {rows}x{cols}, need at least {min}x{min}")]
    SliceTooSmall { rows: usize, cols: usize, min: usize },
    #[error("invalid fitness configuration: {0}")]
    InvalidConfig(String),
}

/// Weights of the two fitness terms and the spectral cutoff ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessConfig {
    pub eta: f64,
    pub xi: f64,
    pub gamma: f64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            xi: 4.0,
            gamma: 0.25,
        }
    }
}

impl FitnessConfig {
    pub fn new(eta: f64, xi: f64, gamma: f64) -> Result<Self, FitnessError> {
        let cfg = Self { eta, xi, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FitnessError> {
        if !(self.eta >= 0.0 && self.xi >= 0.0) {
            return Err(FitnessError::InvalidConfig("eta and xi must be non-negative".into()));
        }
        if self.eta + self.xi <= 0.0 {
            return Err(FitnessError::InvalidConfig("eta + xi must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(FitnessError::InvalidConfig("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Scalar fitness from the objective vector.
    pub fn combine(&self, objectives: ObjectiveVector) -> f64 {
        self.eta * objectives.inv_snr + self.xi * objectives.hfer_deficit
    }
}

/// The per-objective view of a fitness evaluation; both components are
/// minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveVector {
    pub inv_snr: f64,
    pub hfer_deficit: f64,
}

impl ObjectiveVector {
    pub fn as_array(&self) -> [f64; 2] {
        [self.inv_snr, self.hfer_deficit]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessReport {
    pub snr: f64,
    pub hfer: f64,
    pub laplacian_var: Option<f64>,
    pub fitness: f64,
    pub objectives: ObjectiveVector,
}

fn check_volume(volume: &[Image2D], min_side: usize) -> Result<(), FitnessError> {
    if volume.is_empty() {
        return Err(FitnessError::EmptyVolume);
    }
    for s in volume {
        if s.rows() < min_side || s.cols() < min_side {
            return Err(FitnessError::SliceTooSmall {
                rows: s.rows(),
                cols: s.cols(),
                min: min_side,
            });
        }
    }
    Ok(())
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean over population standard deviation, averaged over slices.
pub fn snr(volume: &[Image2D]) -> Result<f64, FitnessError> {
    if volume.is_empty() {
        return Err(FitnessError::EmptyVolume);
    }
    let mut total = 0.0;
    for (k, slice) in volume.iter().enumerate() {
        if slice.len() < 2 {
            return Err(FitnessError::SliceTooSmall {
                rows: slice.rows(),
                cols: slice.cols(),
                min: 2,
            });
        }
        let (mean, std) = mean_and_std(slice.data());
        if std == 0.0 || !std.is_finite() {
            return Err(FitnessError::Degenerate(format!("slice {k} has zero standard deviation")));
        }
        total += mean / std;
    }
    Ok(total / volume.len() as f64)
}

/// Squared magnitude of the unnormalized 2D DFT with the zero frequency moved
/// to `(rows / 2, cols / 2)`.
pub fn power_spectrum(slice: &Image2D) -> Image2D {
    let (rows, cols) = slice.shape();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = slice.data().iter().map(|&v| Complex::new(v, 0.0)).collect();

    let row_fft = planner.plan_fft_forward(cols);
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(rows);
    let mut column = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = buf[r * cols + c];
        }
        col_fft.process(&mut column);
        for r in 0..rows {
            buf[r * cols + c] = column[r];
        }
    }

    let mut out = Image2D::zeros(rows, cols);
    for r in 0..rows {
        let sr = (r + rows / 2) % rows;
        for c in 0..cols {
            let sc = (c + cols / 2) % cols;
            out.set(sr, sc, buf[r * cols + c].norm_sqr());
        }
    }
    out
}

/// Radial frequency of a bin of a centered spectrum.
#[inline]
pub fn radial_frequency(rows: usize, cols: usize, r: usize, c: usize) -> f64 {
    let u = r as f64 - (rows / 2) as f64;
    let v = c as f64 - (cols / 2) as f64;
    (u * u + v * v).sqrt()
}

/// Largest radial frequency on a centered `rows x cols` grid.
pub fn max_radial_frequency(rows: usize, cols: usize) -> f64 {
    radial_frequency(rows, cols, 0, 0)
}

fn slice_hfer(slice: &Image2D, gamma: f64) -> Result<f64, FitnessError> {
    let spectrum = power_spectrum(slice);
    let (rows, cols) = spectrum.shape();
    let cutoff = gamma * max_radial_frequency(rows, cols);
    let mut total = 0.0;
    let mut high = 0.0;
    for r in 0..rows {
        for c in 0..cols {
            let p = spectrum.get(r, c);
            total += p;
            if radial_frequency(rows, cols, r, c) > cutoff {
                high += p;
            }
        }
    }
    if total == 0.0 || !total.is_finite() {
        return Err(FitnessError::Degenerate("spectrum has no energy".into()));
    }
    Ok((high / total).clamp(0.0, 1.0))
}

/// High-frequency energy ratio: the share of spectral power strictly beyond
/// `gamma * Q_max`, averaged over slices.
pub fn hfer(volume: &[Image2D], gamma: f64) -> Result<f64, FitnessError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(FitnessError::InvalidConfig("gamma must lie in (0, 1)".into()));
    }
    check_volume(volume, 2)?;
    let mut sum = 0.0;
    for slice in volume {
        sum += slice_hfer(slice, gamma)?;
    }
    Ok(sum / volume.len() as f64)
}

/// Variance of the 4-neighbour Laplacian response over all interior pixels.
pub fn laplacian_variance(volume: &[Image2D]) -> Result<f64, FitnessError> {
    check_volume(volume, 3)?;
    let mut responses = Vec::new();
    for s in volume {
        for r in 1..s.rows() - 1 {
            for c in 1..s.cols() - 1 {
                responses.push(s.get(r - 1, c) + s.get(r + 1, c) + s.get(r, c - 1) + s.get(r, c + 1) - 4.0 * s.get(r, c));
            }
        }
    }
    Ok(mean_and_std(&responses).1.powi(2))
}

/// All metrics and the combined score for one reconstructed volume. Lower
/// fitness is better.
pub fn evaluate(volume: &[Image2D], config: &FitnessConfig) -> Result<FitnessReport, FitnessError> {
    config.validate()?;
    let snr = snr(volume)?;
    let hfer = hfer(volume, config.gamma)?;
    let laplacian_var = if volume.iter().all(|s| s.rows() >= 3 && s.cols() >= 3) {
        Some(laplacian_variance(volume)?)
    } else {
        None
    };
    let objectives = ObjectiveVector {
        inv_snr: 1.0 / snr,
        hfer_deficit: 1.0 - hfer,
    };
    Ok(FitnessReport {
        snr,
        hfer,
        laplacian_var,
        fitness: config.combine(objectives),
        objectives,
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Direct O(n^4) DFT, independent of the FFT path.
    use super::*;

    pub fn brute_power_spectrum(slice: &Image2D) -> Image2D {
        let (rows, cols) = slice.shape();
        let mut out = Image2D::zeros(rows, cols);
        for u in 0..rows {
            for v in 0..cols {
                let (mut re, mut im) = (0.0, 0.0);
                for r in 0..rows {
                    for c in 0..cols {
                        let phase = -2.0
                            * std::f64::consts::PI
                            * ((u * r) as f64 / rows as f64 + (v * c) as f64 / cols as f64);
                        re += slice.get(r, c) * phase.cos();
                        im += slice.get(r, c) * phase.sin();
                    }
                }
                // Centered frequency coordinates of bin (u, v).
                let fu = if u < rows - rows / 2 { u as i64 } else { u as i64 - rows as i64 };
                let fv = if v < cols - cols / 2 { v as i64 } else { v as i64 - cols as i64 };
                let sr = (fu + (rows / 2) as i64) as usize;
                let sc = (fv + (cols / 2) as i64) as usize;
                out.set(sr, sc, re * re + im * im);
            }
        }
        out
    }

    pub fn brute_hfer(slice: &Image2D, gamma: f64) -> f64 {
        let p = brute_power_spectrum(slice);
        let (rows, cols) = p.shape();
        let half_r = (rows / 2) as f64;
        let half_c = (cols / 2) as f64;
        let qmax = (half_r * half_r + half_c * half_c).sqrt();
        let mut total = 0.0;
        let mut high = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let u = r as f64 - half_r;
                let v = c as f64 - half_c;
                total += p.get(r, c);
                if (u * u + v * v).sqrt() > gamma * qmax {
                    high += p.get(r, c);
                }
            }
        }
        high / total
    }
}
