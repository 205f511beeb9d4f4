//! Narrowband single-source signal model: steering vectors and their angular
//! derivatives, mutual coupling, snapshot simulation and sample covariances.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Position, SensorArray};
use crate::linalg::{hermitian_defect, principal_submatrix, CMatrix, CVector, C64};
use crate::rng;

/// Source bearing in degrees: elevation `theta` in [0, 180] measured from +z,
/// azimuth `phi` in [0, 360).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceDirection {
    theta_deg: f64,
    phi_deg: f64,
}

impl SourceDirection {
    pub fn new(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        if !theta_deg.is_finite() || !phi_deg.is_finite() {
            return invalid("direction angles must be finite");
        }
        if !(0.0..=180.0).contains(&theta_deg) {
            return invalid(format!("elevation {theta_deg} outside [0, 180]"));
        }
        Ok(Self { theta_deg, phi_deg: wrap_degrees(phi_deg) })
    }

    /// In-plane source (θ = 90°).
    pub fn azimuth(phi_deg: f64) -> Self {
        Self::new(90.0, phi_deg).expect("finite azimuth")
    }

    pub fn theta_deg(&self) -> f64 {
        self.theta_deg
    }

    pub fn phi_deg(&self) -> f64 {
        self.phi_deg
    }

    /// Unit propagation vector r(Θ).
    pub fn unit_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta_deg.to_radians().sin_cos();
        let (sp, cp) = self.phi_deg.to_radians().sin_cos();
        [cp * st, sp * st, ct]
    }

    /// ∂r/∂θ and ∂r/∂φ, per radian.
    pub fn unit_vector_partials(&self) -> ([f64; 3], [f64; 3]) {
        let (st, ct) = self.theta_deg.to_radians().sin_cos();
        let (sp, cp) = self.phi_deg.to_radians().sin_cos();
        ([cp * ct, sp * ct, -st], [-sp * st, cp * st, 0.0])
    }
}

pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

fn dot(p: &Position, r: &[f64; 3]) -> f64 {
    p[0] * r[0] + p[1] * r[1] + p[2] * r[2]
}

/// a_m = exp(−j 2π pₘᵀ r(Θ)) for the given sensor positions.
pub fn steering_at(positions: &[Position], dir: &SourceDirection) -> CVector {
    let r = dir.unit_vector();
    CVector::from_iterator(positions.len(), positions.iter().map(|p| C64::from_polar(1.0, -2.0 * PI * dot(p, &r))))
}

pub fn steering_vector(array: &SensorArray, dir: &SourceDirection) -> CVector {
    steering_at(array.positions(), dir)
}

/// Analytic (∂a/∂θ, ∂a/∂φ) per radian at the given positions.
pub fn derivatives_at(positions: &[Position], dir: &SourceDirection) -> (CVector, CVector) {
    let a = steering_at(positions, dir);
    let (dr_theta, dr_phi) = dir.unit_vector_partials();
    let minus_j2pi = C64::new(0.0, -2.0 * PI);
    let d_theta = CVector::from_iterator(
        positions.len(),
        positions.iter().zip(a.iter()).map(|(p, am)| minus_j2pi * dot(p, &dr_theta) * am),
    );
    let d_phi = CVector::from_iterator(
        positions.len(),
        positions.iter().zip(a.iter()).map(|(p, am)| minus_j2pi * dot(p, &dr_phi) * am),
    );
    (d_theta, d_phi)
}

pub fn steering_derivatives(array: &SensorArray, dir: &SourceDirection) -> (CVector, CVector) {
    derivatives_at(array.positions(), dir)
}

/// Toeplitz mutual-coupling model with `L = M/2 + 1` coefficients.
///
/// `c₁ = 1` and `c_l = γ · 0.6 (1 − (l−2)/(L−1)) e^{jφ_l}` for `l ≥ 2`, with
/// the phases drawn once per model from `phase_seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct MutualCouplingModel {
    coefficients: Vec<C64>,
    gamma: f64,
    phase_seed: u64,
}

impl MutualCouplingModel {
    pub fn new(m: usize, gamma: f64, phase_seed: u64) -> Result<Self> {
        if !m.is_multiple_of(2) || m < 2 {
            return Err(Error::UnsupportedConfiguration(format!(
                "mutual coupling needs an even sensor count, got {m}"
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return invalid(format!("coupling strength gamma={gamma} outside [0, 1]"));
        }
        let l_count = m / 2 + 1;
        let mut rng = rng::rng_from_seed(phase_seed);
        let mut coefficients = Vec::with_capacity(l_count);
        coefficients.push(C64::new(1.0, 0.0));
        for l in 2..=l_count {
            let phase = rng.random_range(-PI..=PI);
            let magnitude = 0.6 * (1.0 - (l - 2) as f64 / (l_count - 1) as f64);
            coefficients.push(C64::from_polar(gamma * magnitude, phase));
        }
        Ok(Self { coefficients, gamma, phase_seed })
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn phase_seed(&self) -> u64 {
        self.phase_seed
    }

    /// Hermitian Toeplitz matrix with first row `[c₁ … c_L c_{L−1} … c₂]` and
    /// conjugated first column.
    pub fn matrix(&self) -> CMatrix {
        let c = &self.coefficients;
        let l_count = c.len();
        let m = 2 * (l_count - 1);
        let mut row: Vec<C64> = c.clone();
        row.extend(c[1..l_count - 1].iter().rev());
        debug_assert_eq!(row.len(), m);
        CMatrix::from_fn(m, m, |i, j| if j >= i { row[j - i] } else { row[i - j].conj() })
    }
}

pub fn coupling_matrix(m: usize, gamma: f64, phase_seed: u64) -> Result<CMatrix> {
    Ok(MutualCouplingModel::new(m, gamma, phase_seed)?.matrix())
}

/// M×T matrix of array outputs; column `i` is y(tᵢ).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: CMatrix,
}

impl SnapshotMatrix {
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.ncols() == 0 {
            return invalid("a snapshot matrix needs at least one snapshot");
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return invalid("snapshot entries must be finite");
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn sensor_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn snapshot_count(&self) -> usize {
        self.data.ncols()
    }

    /// Rows at `indices`: the outputs of a subarray.
    pub fn rows(&self, indices: &[usize]) -> SnapshotMatrix {
        let t = self.data.ncols();
        SnapshotMatrix { data: CMatrix::from_fn(indices.len(), t, |r, c| self.data[(indices[r], c)]) }
    }
}

fn complex_normal(rng: &mut rng::Rng, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

fn check_coupling(m: usize, coupling: Option<&CMatrix>) -> Result<()> {
    match coupling {
        Some(c) if c.nrows() != m || c.ncols() != m => {
            invalid(format!("coupling matrix is {}x{}, array has {m} sensors", c.nrows(), c.ncols()))
        }
        _ => Ok(()),
    }
}

fn effective_steering(array: &SensorArray, dir: &SourceDirection, coupling: Option<&CMatrix>) -> CVector {
    let a = steering_vector(array, dir);
    match coupling {
        Some(c) => c * a,
        None => a,
    }
}

/// y(tᵢ) = C a(Θ) s(tᵢ) + n(tᵢ) with s ~ CN(0, σ_s²) and n ~ CN(0, σ_n² I).
pub fn simulate_snapshots(
    array: &SensorArray,
    dir: &SourceDirection,
    t: usize,
    sigma_s2: f64,
    sigma_n2: f64,
    coupling: Option<&CMatrix>,
    seed: u64,
) -> Result<SnapshotMatrix> {
    if t == 0 {
        return invalid("snapshot count must be at least 1");
    }
    if !(sigma_s2 >= 0.0) || !(sigma_n2 >= 0.0) {
        return invalid("signal and noise powers must be non-negative");
    }
    check_coupling(array.len(), coupling)?;
    let mut rng = rng::rng_from_seed(seed);
    let signal: Vec<C64> = (0..t).map(|_| complex_normal(&mut rng, sigma_s2)).collect();
    Ok(build_snapshots(array, dir, &signal, sigma_n2, coupling, &mut rng))
}

/// Same model with a caller-supplied waveform `s(tᵢ)`; `T = signal.len()`.
pub fn simulate_snapshots_with_signal(
    array: &SensorArray,
    dir: &SourceDirection,
    signal: &[C64],
    sigma_n2: f64,
    coupling: Option<&CMatrix>,
    seed: u64,
) -> Result<SnapshotMatrix> {
    if signal.is_empty() {
        return invalid("snapshot count must be at least 1");
    }
    if !(sigma_n2 >= 0.0) {
        return invalid("noise power must be non-negative");
    }
    check_coupling(array.len(), coupling)?;
    let mut rng = rng::rng_from_seed(seed);
    Ok(build_snapshots(array, dir, signal, sigma_n2, coupling, &mut rng))
}

fn build_snapshots(
    array: &SensorArray,
    dir: &SourceDirection,
    signal: &[C64],
    sigma_n2: f64,
    coupling: Option<&CMatrix>,
    rng: &mut rng::Rng,
) -> SnapshotMatrix {
    let ca = effective_steering(array, dir, coupling);
    let m = array.len();
    let mut data = CMatrix::zeros(m, signal.len());
    for (col, s) in signal.iter().enumerate() {
        for row in 0..m {
            let noise = if sigma_n2 > 0.0 { complex_normal(rng, sigma_n2) } else { C64::new(0.0, 0.0) };
            data[(row, col)] = ca[row] * s + noise;
        }
    }
    SnapshotMatrix { data }
}

/// Noise power giving `snr_db = 10 log₁₀(σ_s² / σ_n²)`.
pub fn noise_power_for_snr(snr_db: f64, sigma_s2: f64) -> f64 {
    sigma_s2 / 10f64.powf(snr_db / 10.0)
}

/// Hermitian positive semidefinite M×M covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    data: CMatrix,
}

impl CovarianceMatrix {
    /// Accepts a matrix that is Hermitian to within 1e-12 (relative to its
    /// largest entry) and stores its exactly Hermitian part.
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return invalid("covariance must be square and non-empty");
        }
        let scale = m.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if hermitian_defect(&m) > 1e-12 * scale {
            return invalid("covariance is not Hermitian");
        }
        Ok(Self { data: hermitize(&m) })
    }

    /// σ_s² (Ca)(Ca)ᴴ + σ_n² I: the limit of the sample covariance as T → ∞.
    pub fn asymptotic(
        array: &SensorArray,
        dir: &SourceDirection,
        sigma_s2: f64,
        sigma_n2: f64,
        coupling: Option<&CMatrix>,
    ) -> Result<Self> {
        check_coupling(array.len(), coupling)?;
        let ca = effective_steering(array, dir, coupling);
        let mut r = &ca * ca.adjoint() * C64::new(sigma_s2, 0.0);
        for i in 0..r.nrows() {
            r[(i, i)] += sigma_n2;
        }
        Ok(Self { data: hermitize(&r) })
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn submatrix(&self, indices: &[usize]) -> CovarianceMatrix {
        CovarianceMatrix { data: principal_submatrix(&self.data, indices) }
    }

    pub fn scaled(&self, factor: f64) -> CovarianceMatrix {
        CovarianceMatrix { data: &self.data * C64::new(factor, 0.0) }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)].re).sum()
    }
}

fn hermitize(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in i + 1..n {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
    }
    out
}

/// (1/T) Y Yᴴ, exactly Hermitian by construction.
pub fn sample_covariance(snapshots: &SnapshotMatrix) -> CovarianceMatrix {
    let y = snapshots.data();
    let (m, t) = (y.nrows(), y.ncols());
    let inv_t = 1.0 / t as f64;
    let mut r = CMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut acc = C64::new(0.0, 0.0);
            for c in 0..t {
                acc += y[(i, c)] * y[(j, c)].conj();
            }
            acc *= inv_t;
            if i == j {
                r[(i, i)] = C64::new(acc.re, 0.0);
            } else {
                r[(i, j)] = acc;
                r[(j, i)] = acc.conj();
            }
        }
    }
    CovarianceMatrix { data: r }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_uca, build_ura, ArrayKind, SensorArray};
    use crate::linalg::{hermitian_eigen, max_abs_diff};

    fn single(p: Position) -> SensorArray {
        SensorArray::new(vec![p, [9.0, 9.0, 9.0]], ArrayKind::Custom).unwrap()
    }

    #[test]
    fn steering_simple_cases() {
        let a = steering_vector(&single([0.0, 0.0, 0.0]), &SourceDirection::new(33.0, 71.0).unwrap());
        assert_eq!(a[0], C64::new(1.0, 0.0));
        let a = steering_vector(&single([0.5, 0.0, 0.0]), &SourceDirection::azimuth(0.0));
        assert!((a[0] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_matches_scalar_reevaluation() {
        let ura = build_ura(4, 4, 0.5).unwrap();
        let dir = SourceDirection::azimuth(30.0);
        let a = steering_vector(&ura, &dir);
        let (t, p) = (90f64.to_radians(), 30f64.to_radians());
        for (m, pos) in ura.positions().iter().enumerate() {
            let phase = -2.0 * PI * (pos[0] * p.cos() * t.sin() + pos[1] * p.sin() * t.sin() + pos[2] * t.cos());
            let expect = C64::new(phase.cos(), phase.sin());
            assert!((a[m] - expect).norm() < 1e-12);
            assert!((a[m].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_special_cases() {
        let (dt, dp) = steering_derivatives(&single([0.0, 0.0, 0.0]), &SourceDirection::new(40.0, 10.0).unwrap());
        assert_eq!(dt[0], C64::new(0.0, 0.0));
        assert_eq!(dp[0], C64::new(0.0, 0.0));
        let (_, dp) = steering_derivatives(&single([0.0, 0.0, 0.7]), &SourceDirection::azimuth(123.0));
        assert_eq!(dp[0].norm(), 0.0);
    }

    #[test]
    fn coupling_coefficients_follow_law() {
        let model = MutualCouplingModel::new(16, 1.0, 4).unwrap();
        let c = model.coefficients();
        assert_eq!(c.len(), 9);
        assert_eq!(c[0], C64::new(1.0, 0.0));
        assert!((c[1].norm() - 0.6).abs() < 1e-12);
        assert!((c[8].norm() - 0.075).abs() < 1e-12);
        for w in c[1..].windows(2) {
            assert!(w[0].norm() >= w[1].norm());
        }
        let m = model.matrix();
        assert_eq!(m, m.adjoint());
        assert_eq!(m[(0, 1)], c[1]);
        assert_eq!(m[(0, 8)], c[8]);
        assert_eq!(m[(0, 15)], c[1]);
        assert!(MutualCouplingModel::new(15, 1.0, 0).is_err());
        assert!(MutualCouplingModel::new(16, 1.5, 0).is_err());
    }

    #[test]
    fn weak_coupling_tends_to_identity() {
        let m = coupling_matrix(8, 1e-9, 1).unwrap();
        assert!(max_abs_diff(&m, &CMatrix::identity(8, 8)) < 1e-9);
        let m = coupling_matrix(8, 0.0, 1).unwrap();
        assert_eq!(m, CMatrix::identity(8, 8));
    }

    #[test]
    fn noiseless_unit_signal_is_coupled_steering() {
        let uca = build_uca(8, 0.5).unwrap();
        let dir = SourceDirection::azimuth(47.0);
        let c = coupling_matrix(8, 0.5, 2).unwrap();
        let y = simulate_snapshots_with_signal(&uca, &dir, &[C64::new(1.0, 0.0)], 0.0, Some(&c), 0).unwrap();
        let expect = &c * steering_vector(&uca, &dir);
        for m in 0..8 {
            assert!((y.data()[(m, 0)] - expect[m]).norm() < 1e-12);
        }
    }

    #[test]
    fn snapshots_are_seeded() {
        let uca = build_uca(6, 0.5).unwrap();
        let dir = SourceDirection::azimuth(10.0);
        let a = simulate_snapshots(&uca, &dir, 5, 1.0, 0.1, None, 9).unwrap();
        let b = simulate_snapshots(&uca, &dir, 5, 1.0, 0.1, None, 9).unwrap();
        assert_eq!(a, b);
        assert!(simulate_snapshots(&uca, &dir, 0, 1.0, 0.1, None, 9).is_err());
        let bad = CMatrix::identity(3, 3);
        assert!(simulate_snapshots(&uca, &dir, 5, 1.0, 0.1, Some(&bad), 9).is_err());
    }

    #[test]
    fn snr_convention() {
        assert!((noise_power_for_snr(20.0, 1.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn covariance_basis_and_naive_sum() {
        let mut y = CMatrix::zeros(3, 1);
        y[(0, 0)] = C64::new(1.0, 0.0);
        let r = sample_covariance(&SnapshotMatrix::new(y).unwrap());
        assert_eq!(r.data()[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(r.data().iter().filter(|z| z.norm() != 0.0).count(), 1);

        let uca = build_uca(4, 0.5).unwrap();
        let snaps = simulate_snapshots(&uca, &SourceDirection::azimuth(80.0), 8, 1.0, 0.5, None, 3).unwrap();
        let r = sample_covariance(&snaps);
        let mut naive = CMatrix::zeros(4, 4);
        for c in 0..8 {
            let col = snaps.data().column(c).into_owned();
            naive += &col * col.adjoint();
        }
        naive /= C64::new(8.0, 0.0);
        assert!(max_abs_diff(&naive, r.data()) < 1e-12);
        assert_eq!(hermitian_defect(r.data()), 0.0);
        let e = hermitian_eigen(r.data());
        assert!(e.values[0] >= -1e-10 * r.trace());
    }

    #[test]
    fn covariance_rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = C64::new(0.0, 1.0);
        assert!(CovarianceMatrix::from_matrix(m).is_err());
    }
}
