//! Synthetic ground truths and simulated acquisitions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

use crate::image::{Image2D, Sinogram};
use crate::recon::{Geometry, Projector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhantomError {
    #[error("unknown phantom kind `{0}`")]
    UnknownKind(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("keep fraction must lie in (0, 1], got {0}")]
    InvalidKeepFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhantomKind {
    SheppLogan,
    Beads,
    LinePairs,
    DiskWithInsert,
}

impl PhantomKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhantomKind::SheppLogan => "shepp_logan",
            PhantomKind::Beads => "beads",
            PhantomKind::LinePairs => "line_pairs",
            PhantomKind::DiskWithInsert => "disk_with_insert",
        }
    }

    /// Intensity that puts the noiseless sinogram norm near 1000 for a
    /// 64-pixel phantom seen from 30 angles, the regime the epsilon grid is
    /// laid out for.
    pub fn default_intensity(self) -> f64 {
        match self {
            PhantomKind::SheppLogan => 2.5,
            PhantomKind::Beads => 1.0,
            PhantomKind::LinePairs => 1.6,
            PhantomKind::DiskWithInsert => 1.2,
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhantomKind {
    type Err = PhantomError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "shepp_logan" => Ok(PhantomKind::SheppLogan),
            "beads" => Ok(PhantomKind::Beads),
            "line_pairs" => Ok(PhantomKind::LinePairs),
            "disk_with_insert" => Ok(PhantomKind::DiskWithInsert),
            _ => Err(PhantomError::UnknownKind(s.to_string())),
        }
    }
}

/// Measurement noise applied to simulated line integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// Additive zero-mean Gaussian with this standard deviation.
    Gaussian(f64),
    /// Photon counting with this many incident counts per ray.
    Poisson(f64),
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), PhantomError> {
        match *self {
            NoiseModel::Gaussian(s) if !(s >= 0.0 && s.is_finite()) => {
                Err(PhantomError::InvalidNoise(format!("sigma must be finite and >= 0, got {s}")))
            }
            NoiseModel::Poisson(i0) if !(i0 > 0.0 && i0.is_finite()) => {
                Err(PhantomError::InvalidNoise(format!("incident counts must be positive, got {i0}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub size: usize,
    pub intensity: f64,
    pub noise: NoiseModel,
    /// Seed for randomized layouts (beads).
    pub seed: u64,
    /// Whether `disk_with_insert` carries its high-intensity insert.
    pub insert: bool,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, size: usize, intensity: f64) -> Self {
        Self {
            kind,
            size,
            intensity,
            noise: NoiseModel::None,
            seed: 0,
            insert: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_insert(mut self, insert: bool) -> Self {
        self.insert = insert;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }
}

/// Normalized coordinates of pixel `(r, c)`: `x` right, `y` up, both in
/// `[-1, 1]` across the image.
fn unit_coords(n: usize, r: usize, c: usize) -> (f64, f64) {
    let half = (n as f64 - 1.0) / 2.0;
    let scale = n as f64 / 2.0;
    ((c as f64 - half) / scale, (half - r as f64) / scale)
}

// (value, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn shepp_logan(n: usize, intensity: f64) -> Image2D {
    Image2D::from_fn(n, n, |r, c| {
        let (x, y) = unit_coords(n, r, c);
        let mut v = 0.0;
        for &(value, a, b, x0, y0, deg) in &SHEPP_LOGAN {
            let (s, co) = deg.to_radians().sin_cos();
            let (dx, dy) = (x - x0, y - y0);
            let u = dx * co + dy * s;
            let w = -dx * s + dy * co;
            if (u / a).powi(2) + (w / b).powi(2) <= 1.0 {
                v += value;
            }
        }
        v.clamp(0.0, 1.0) * intensity
    })
}

/// A plastic tube (thin annulus) packed with non-overlapping glass beads.
fn beads(n: usize, intensity: f64, seed: u64) -> Image2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wall_in, wall_out): (f64, f64) = (0.82, 0.9);
    let bead_r: f64 = 0.09;
    let mut centers: Vec<(f64, f64)> = Vec::new();
    for _ in 0..5000 {
        let x = rng.random_range(-wall_in..wall_in);
        let y = rng.random_range(-wall_in..wall_in);
        if (x * x + y * y).sqrt() + bead_r > wall_in {
            continue;
        }
        if centers
            .iter()
            .all(|&(cx, cy)| ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() >= 2.0 * bead_r)
        {
            centers.push((x, y));
        }
    }
    Image2D::from_fn(n, n, |r, c| {
        let (x, y) = unit_coords(n, r, c);
        let rad = (x * x + y * y).sqrt();
        if (wall_in..=wall_out).contains(&rad) {
            return 0.4 * intensity;
        }
        if centers
            .iter()
            .any(|&(cx, cy)| (x - cx).powi(2) + (y - cy).powi(2) <= bead_r * bead_r)
        {
            intensity
        } else {
            0.0
        }
    })
}

/// Groups of three bars with halving pitch, on a low-intensity disk.
fn line_pairs(n: usize, intensity: f64) -> Image2D {
    let mut img = Image2D::from_fn(n, n, |r, c| {
        let (x, y) = unit_coords(n, r, c);
        if x * x + y * y <= 0.9 * 0.9 {
            0.2 * intensity
        } else {
            0.0
        }
    });
    // Three bars per group at widths 3u, 2u and u, separated by 2u gaps and
    // centred horizontally.
    let unit = (n / 64).max(1);
    let widths = [3 * unit, 2 * unit, unit];
    let total: usize = widths.iter().map(|w| 6 * w).sum::<usize>() + 2 * unit * (widths.len() - 1);
    let top = n * 3 / 8;
    let height = n / 4;
    let mut col = n.saturating_sub(total) / 2;
    for width in widths {
        for _ in 0..3 {
            for c in col..(col + width).min(n) {
                for r in top..top + height {
                    img.set(r, c, intensity);
                }
            }
            col += 2 * width;
        }
        col += 2 * unit;
    }
    img
}

/// Centre and radius (normalized units) of the `disk_with_insert` insert.
const INSERT: (f64, f64, f64) = (0.3, 0.2, 0.07);

fn in_insert(x: f64, y: f64) -> bool {
    let (ix, iy, ir) = INSERT;
    (x - ix).powi(2) + (y - iy).powi(2) <= ir * ir
}

/// A textured disk; with `insert`, a small bright disk replaces the texture
/// inside its footprint.
fn disk_with_insert(n: usize, intensity: f64, insert: bool) -> Image2D {
    const BLOBS: [(f64, f64, f64, f64); 4] = [
        (-0.35, 0.3, 0.18, 0.25),
        (0.1, -0.4, 0.22, -0.2),
        (-0.25, -0.2, 0.1, 0.35),
        (0.4, -0.05, 0.12, 0.15),
    ];
    Image2D::from_fn(n, n, |r, c| {
        let (x, y) = unit_coords(n, r, c);
        if x * x + y * y > 0.8 * 0.8 {
            return 0.0;
        }
        if insert && in_insert(x, y) {
            return 2.0 * intensity;
        }
        let mut v = 0.5;
        for &(bx, by, br, contrast) in &BLOBS {
            if (x - bx).powi(2) + (y - by).powi(2) <= br * br {
                v += 0.5 * contrast;
            }
        }
        v += 0.03 * (9.0 * x).sin() * (7.0 * y).cos();
        v * intensity
    })
}

/// Renders the ground-truth image described by `spec` (noise is ignored).
pub fn make_phantom(spec: &PhantomSpec) -> Image2D {
    let n = spec.size;
    match spec.kind {
        PhantomKind::SheppLogan => shepp_logan(n, spec.intensity),
        PhantomKind::Beads => beads(n, spec.intensity, spec.seed),
        PhantomKind::LinePairs => line_pairs(n, spec.intensity),
        PhantomKind::DiskWithInsert => disk_with_insert(n, spec.intensity, spec.insert),
    }
}

/// Forward projects `phantom` and applies `noise`.
///
/// Poisson noise converts each line integral `p` to an expected count
/// `i0 * exp(-p)`, draws a count (clamped to at least one) and converts back
/// with `-ln(count / i0)`.
pub fn simulate_sinogram(
    phantom: &Image2D,
    projector: &Projector,
    noise: NoiseModel,
    seed: u64,
) -> Result<Sinogram, PhantomError> {
    noise.validate()?;
    let mut sino = projector.forward(phantom);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match noise {
        NoiseModel::None => {}
        NoiseModel::Gaussian(sigma) => {
            let normal = Normal::new(0.0, sigma).map_err(|e| PhantomError::InvalidNoise(e.to_string()))?;
            for v in sino.data_mut() {
                *v += normal.sample(&mut rng);
            }
        }
        NoiseModel::Poisson(i0) => {
            for v in sino.data_mut() {
                let expected = i0 * (-*v).exp();
                let counts = if expected > 0.0 {
                    Poisson::new(expected)
                        .map_err(|e| PhantomError::InvalidNoise(e.to_string()))?
                        .sample(&mut rng)
                } else {
                    0.0
                };
                *v = -(counts.max(1.0) / i0).ln();
            }
        }
    }
    Ok(sino)
}

/// Keeps every `floor(1 / keep_fraction)`-th view starting at view 0.
pub fn subsample_views(
    sino: &Sinogram,
    geometry: &Geometry,
    keep_fraction: f64,
) -> Result<(Sinogram, Geometry), PhantomError> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(PhantomError::InvalidKeepFraction(keep_fraction));
    }
    let stride = ((1.0 / keep_fraction) + 1e-9).floor() as usize;
    let kept: Vec<usize> = (0..sino.n_angles()).step_by(stride.max(1)).collect();
    let nd = sino.n_detectors();
    let mut data = Vec::with_capacity(kept.len() * nd);
    for &a in &kept {
        data.extend_from_slice(sino.view(a));
    }
    let angles = kept.iter().map(|&a| geometry.angles()[a]).collect();
    Ok((
        Sinogram::from_vec(kept.len(), nd, data),
        Geometry::with_angles(geometry.image_size(), geometry.n_detectors(), angles),
    ))
}
