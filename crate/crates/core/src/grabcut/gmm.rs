//! Full-covariance Gaussian mixtures over RGB colours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];
type Mat3 = [[f64; 3]; 3];

/// Default amount added to every covariance diagonal.
pub const VARIANCE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub weight: f64,
    pub mean: Rgb,
    pub cov: Mat3,
    pub inv_cov: Mat3,
    pub log_det: f64,
}

impl Gaussian {
    fn new(weight: f64, mean: Rgb, cov: Mat3) -> Self {
        let det = det3(&cov);
        Self {
            weight,
            mean,
            cov,
            inv_cov: inverse3(&cov, det),
            log_det: det.ln(),
        }
    }

    /// `−ln w + ½ ln|Σ| + ½ (z−μ)ᵀ Σ⁻¹ (z−μ)`; infinite for empty components.
    #[inline]
    pub fn cost(&self, z: &Rgb) -> f64 {
        if self.weight <= 0.0 {
            return f64::INFINITY;
        }
        let d = [z[0] - self.mean[0], z[1] - self.mean[1], z[2] - self.mean[2]];
        let m = &self.inv_cov;
        let mahal = d[0] * (m[0][0] * d[0] + m[0][1] * d[1] + m[0][2] * d[2])
            + d[1] * (m[1][0] * d[0] + m[1][1] * d[1] + m[1][2] * d[2])
            + d[2] * (m[2][0] * d[0] + m[2][1] * d[1] + m[2][2] * d[2]);
        -self.weight.ln() + 0.5 * self.log_det + 0.5 * mahal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<Gaussian>,
}

impl GaussianMixture {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Cheapest component for `z` and its cost. Ties go to the lower index.
    #[inline]
    pub fn best_component(&self, z: &Rgb) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (k, g) in self.components.iter().enumerate() {
            let c = g.cost(z);
            if c < best.1 {
                best = (k, c);
            }
        }
        best
    }
}

/// Maximum-likelihood fit of each component to its assigned pixels, with
/// `floor` added to the covariance diagonal. Components without members
/// get weight zero.
pub fn fit_gmm(pixels: &[Rgb], assignments: &[usize], k: usize, floor: f64) -> Result<GaussianMixture> {
    if pixels.is_empty() {
        return Err(Error::arg("cannot fit a mixture to zero pixels"));
    }
    if k == 0 {
        return Err(Error::arg("mixture needs at least one component"));
    }
    if pixels.len() != assignments.len() {
        return Err(Error::arg(format!(
            "{} pixels but {} assignments",
            pixels.len(),
            assignments.len()
        )));
    }
    if let Some(&bad) = assignments.iter().find(|&&a| a >= k) {
        return Err(Error::arg(format!("component index {bad} out of range for K = {k}")));
    }

    let mut counts = vec![0usize; k];
    let mut sums = vec![[0.0; 3]; k];
    for (z, &a) in pixels.iter().zip(assignments) {
        counts[a] += 1;
        for c in 0..3 {
            sums[a][c] += z[c];
        }
    }
    let means: Vec<Rgb> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            let n = n.max(1) as f64;
            [s[0] / n, s[1] / n, s[2] / n]
        })
        .collect();

    // centred second moments, numerically safer than raw sums
    let mut scatter = vec![[[0.0; 3]; 3]; k];
    for (z, &a) in pixels.iter().zip(assignments) {
        let m = &means[a];
        let d = [z[0] - m[0], z[1] - m[1], z[2] - m[2]];
        let s = &mut scatter[a];
        for r in 0..3 {
            for c in r..3 {
                s[r][c] += d[r] * d[c];
            }
        }
    }

    let total = pixels.len() as f64;
    let components = (0..k)
        .map(|j| {
            let n = counts[j];
            let mut cov = [[0.0; 3]; 3];
            if n > 0 {
                for r in 0..3 {
                    for c in r..3 {
                        cov[r][c] = scatter[j][r][c] / n as f64;
                        cov[c][r] = cov[r][c];
                    }
                }
            }
            for (d, row) in cov.iter_mut().enumerate() {
                row[d] += floor;
            }
            Gaussian::new(n as f64 / total, means[j], cov)
        })
        .collect();
    Ok(GaussianMixture { components })
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inverse3(m: &Mat3, det: f64) -> Mat3 {
    let inv_det = 1.0 / det;
    [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ]
}
