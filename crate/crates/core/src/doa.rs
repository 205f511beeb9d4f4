//! MUSIC direction finding on a subarray and RMSE over trials.

use crate::error::{invalid, Result};
use crate::exec::{self, Execution};
use crate::geometry::Position;
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::signal::{steering_at, wrap_degrees, CovarianceMatrix, SourceDirection};

/// Search grid in degrees; every (θ, φ) pair is a candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    theta: Vec<f64>,
    phi: Vec<f64>,
}

fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

impl AngularGrid {
    pub fn new(theta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || phi.is_empty() {
            return invalid("angular grid axes must be nonempty");
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&theta) || !increasing(&phi) {
            return invalid("angular grid axes must be strictly increasing");
        }
        if theta.iter().any(|t| !(0.0..=180.0).contains(t)) || phi.iter().any(|p| !(0.0..360.0).contains(p)) {
            return invalid("angular grid values must satisfy θ ∈ [0, 180], φ ∈ [0, 360)");
        }
        Ok(Self { theta, phi })
    }

    /// Azimuth scan over [0, 359] at fixed elevation.
    pub fn azimuth(theta_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0) {
            return invalid("grid step must be positive");
        }
        Self::new(vec![theta_deg], linspace_step(0.0, 359.0, step_deg))
    }

    /// Default 1-D grid: θ = 90°, 0.1° azimuth step.
    pub fn azimuth_default() -> Self {
        Self::azimuth(90.0, 0.1).expect("valid default grid")
    }

    /// Joint grid over θ ∈ [theta_lo, theta_hi] and φ ∈ [0, 359].
    pub fn joint(theta_lo: f64, theta_hi: f64, theta_step: f64, phi_step: f64) -> Result<Self> {
        if !(theta_step > 0.0 && phi_step > 0.0) || theta_hi < theta_lo {
            return invalid("invalid joint grid bounds");
        }
        Self::new(linspace_step(theta_lo, theta_hi, theta_step), linspace_step(0.0, 359.0, phi_step))
    }

    /// Default 2-D grid: 1° in azimuth, 0.5° in elevation over [80, 90].
    pub fn joint_default() -> Self {
        Self::joint(80.0, 90.0, 0.5, 1.0).expect("valid default grid")
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.theta.len() * self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid node `i` in θ-major order.
    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.theta[i / self.phi.len()], self.phi[i % self.phi.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoaEstimate {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub spectrum_peak: f64,
}

/// Noise-subspace basis: eigenvectors of the `K - num_sources` smallest
/// eigenvalues, as columns.
pub fn noise_subspace(r: &CMatrix, num_sources: usize) -> Result<CMatrix> {
    let k = r.nrows();
    if num_sources == 0 || k <= num_sources {
        return invalid(format!("MUSIC needs more than {num_sources} sensors and at least one source, got {k}"));
    }
    let eig = hermitian_eigen(r);
    Ok(eig.vectors.columns(0, k - num_sources).into_owned())
}

/// ‖E_nᴴ a(Θ)‖², the MUSIC denominator.
pub fn noise_projection(positions: &[Position], en: &CMatrix, dir: &SourceDirection) -> f64 {
    let a = steering_at(positions, dir);
    en.column_iter().map(|v| v.dotc(&a).norm_sqr()).sum()
}

const GRID_CHUNK: usize = 256;

/// MUSIC pseudospectrum on every grid node, θ-major.
pub fn pseudospectrum(
    positions: &[Position],
    r_sub: &CovarianceMatrix,
    grid: &AngularGrid,
    num_sources: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    if r_sub.dim() != positions.len() {
        return invalid("covariance dimension does not match the subarray");
    }
    let en = noise_subspace(r_sub.data(), num_sources)?;
    let chunks = grid.len().div_ceil(GRID_CHUNK);
    let parts = exec::map_range(exec, chunks, |c| {
        let hi = ((c + 1) * GRID_CHUNK).min(grid.len());
        (c * GRID_CHUNK..hi)
            .map(|i| {
                let (theta, phi) = grid.point(i);
                let dir = SourceDirection::new(theta, phi).expect("grid values are validated");
                1.0 / noise_projection(positions, &en, &dir)
            })
            .collect::<Vec<f64>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Grid peak of the MUSIC pseudospectrum; the lowest grid index wins ties.
pub fn music_estimate(
    positions: &[Position],
    r_sub: &CovarianceMatrix,
    grid: &AngularGrid,
    num_sources: usize,
) -> Result<DoaEstimate> {
    music_estimate_with(positions, r_sub, grid, num_sources, Execution::Sequential)
}

pub fn music_estimate_with(
    positions: &[Position],
    r_sub: &CovarianceMatrix,
    grid: &AngularGrid,
    num_sources: usize,
    exec: Execution,
) -> Result<DoaEstimate> {
    let p = pseudospectrum(positions, r_sub, grid, num_sources, exec)?;
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    let (theta_deg, phi_deg) = grid.point(best);
    Ok(DoaEstimate { theta_deg, phi_deg, spectrum_peak: p[best] })
}

/// Azimuth difference wrapped into (−180, 180].
pub fn azimuth_error(estimate: f64, truth: f64) -> f64 {
    let d = wrap_degrees(estimate - truth);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Root mean square of raw errors.
pub fn rms(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return invalid("RMSE over an empty list");
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Azimuth RMSE of estimates against one true angle, with wrapping.
pub fn rmse(estimates: &[f64], truth: f64) -> Result<f64> {
    rms(&estimates.iter().map(|&e| azimuth_error(e, truth)).collect::<Vec<_>>())
}

/// Azimuth RMSE over paired estimates and truths.
pub fn rmse_paired(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return invalid("estimates and truths differ in length");
    }
    rms(&estimates.iter().zip(truths).map(|(&e, &t)| azimuth_error(e, t)).collect::<Vec<_>>())
}

/// Joint RMSE: root of the mean of all squared elevation and wrapped azimuth
/// errors.
pub fn rmse_joint(estimates: &[(f64, f64)], truths: &[(f64, f64)]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return invalid("estimates and truths differ in length");
    }
    let errs: Vec<f64> = estimates.iter().zip(truths).flat_map(|(e, t)| [e.0 - t.0, azimuth_error(e.1, t.1)]).collect();
    rms(&errs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_uca;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[30.0, 30.0], 30.0).unwrap(), 0.0);
        assert!((rmse(&[32.0], 30.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((rmse(&[359.0], 1.0).unwrap() - 2.0).abs() < 1e-9);
        assert!((rmse(&[1.0], 359.0).unwrap() - 2.0).abs() < 1e-9);
        assert!(rmse(&[], 0.0).is_err());
        assert!((rmse_joint(&[(85.0, 10.0)], &[(84.0, 11.0)]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(azimuth_error(180.0, 0.0), 180.0);
    }

    #[test]
    fn grid_shapes() {
        let g = AngularGrid::azimuth_default();
        assert_eq!(g.len(), 3591);
        assert!((g.phi()[3590] - 359.0).abs() < 1e-9);
        let j = AngularGrid::joint_default();
        assert_eq!(j.theta().len(), 21);
        assert_eq!(j.phi().len(), 360);
        assert!(AngularGrid::new(vec![1.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn noiseless_peak_on_nearest_node() {
        let arr = build_uca(8, 0.5).unwrap();
        let dir = SourceDirection::azimuth(123.44);
        let r = CovarianceMatrix::asymptotic(&arr, &dir, 1.0, 1e-6, None).unwrap();
        let est = music_estimate(arr.positions(), &r, &AngularGrid::azimuth_default(), 1).unwrap();
        assert!((est.phi_deg - 123.4).abs() < 1e-9);
        assert!(music_estimate(&arr.positions()[..1], &r.submatrix(&[0]), &AngularGrid::azimuth_default(), 1).is_err());
    }
}
