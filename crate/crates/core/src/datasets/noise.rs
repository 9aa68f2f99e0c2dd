//! Training-set corruption: zoom, rotation and multiplicative Gaussian noise.

use super::Dataset;
use crate::numkit::{Matrix, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Fraction of rows to corrupt, selected without replacement.
    pub fraction: f64,
    pub gaussian_sigma: f64,
    pub max_rotation_radians: f64,
    pub zoom_range: (f64, f64),
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            fraction: 0.0,
            gaussian_sigma: 0.1,
            max_rotation_radians: 0.0,
            zoom_range: (1.0, 1.0),
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.zoom_range;
        let ok = (0.0..=1.0).contains(&self.fraction)
            && self.gaussian_sigma >= 0.0
            && self.gaussian_sigma.is_finite()
            && self.max_rotation_radians >= 0.0
            && self.max_rotation_radians.is_finite()
            && lo > 0.0
            && lo <= 1.0
            && hi >= 1.0
            && hi.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid noise spec {self:?}")))
        }
    }

    fn is_geometric(&self) -> bool {
        self.max_rotation_radians > 0.0 || self.zoom_range != (1.0, 1.0)
    }

    /// Number of rows touched for a dataset of `n` rows: `ceil(p * n)`.
    pub fn rows_affected(&self, n: usize) -> usize {
        let raw = self.fraction * n as f64;
        // Guard against 0.1 * 30 = 3.0000000000000004.
        ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

/// Returns a corrupted copy; unselected rows and all labels are untouched.
///
/// For image-shaped rows the selected image is first rotated by an angle
/// uniform in `[-max, max]` and zoomed by a factor uniform in the zoom range
/// (bilinear, edge padding), then multiplied elementwise by `1 + sigma z`.
pub fn apply_noise(ds: &Dataset, spec: &NoiseSpec) -> Result<Dataset> {
    spec.validate()?;
    if spec.is_geometric() && ds.image_shape().is_none() {
        return Err(Error::NotImage);
    }
    let mut rng = Rng::new(spec.seed);
    let picked = rng.sample_indices(ds.len(), spec.rows_affected(ds.len()));
    let mut features = ds.features().clone();
    for row in picked {
        let mut values = features.row(row).to_vec();
        if let Some((h, w)) = ds.image_shape() {
            let angle = rng.uniform(-spec.max_rotation_radians, spec.max_rotation_radians);
            let zoom = rng.uniform(spec.zoom_range.0, spec.zoom_range.1);
            values = rotate_zoom(&values, h, w, angle, zoom);
        }
        for v in &mut values {
            *v *= 1.0 + spec.gaussian_sigma * rng.normal();
        }
        features.row_mut(row).copy_from_slice(&values);
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("noisy features"));
    }
    Ok(ds.with_features(features))
}

/// Rotates about the image center and scales by `zoom` (>1 magnifies).
fn rotate_zoom(pixels: &[f64], h: usize, w: usize, angle: f64, zoom: f64) -> Vec<f64> {
    let img = Matrix::new(h, w, pixels.to_vec()).expect("image shape checked");
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = angle.sin_cos();
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let dy = (i as f64 - cy) / zoom;
            let dx = (j as f64 - cx) / zoom;
            // Inverse map: rotate output coordinates by -angle.
            let sy = cos * dy - sin * dx + cy;
            let sx = sin * dy + cos * dx + cx;
            out.push(bilinear(&img, sy, sx));
        }
    }
    out
}

fn bilinear(img: &Matrix, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (img.rows() - 1) as f64);
    let x = x.clamp(0.0, (img.cols() - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(img.rows() - 1);
    let x1 = (x0 + 1).min(img.cols() - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = img.get(y0, x0) * (1.0 - fx) + img.get(y0, x1) * fx;
    let bottom = img.get(y1, x0) * (1.0 - fx) + img.get(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}
