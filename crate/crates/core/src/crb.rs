//! Single-source Cramér–Rao bounds for subarrays, exhaustive subset
//! enumeration and the reduced best-subarray class set.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::SensorArray;
use crate::linalg::{hermitian_eigen, CMatrix, CVector, C64};
use crate::rng;
use crate::signal::{
    derivatives_at, noise_power_for_snr, sample_covariance, simulate_snapshots, steering_at, CovarianceMatrix,
    SnapshotMatrix, SourceDirection,
};

/// Relative κ difference below which two subsets count as CRB-equal.
pub const CRB_TIE_TOLERANCE: f64 = 1e-9;

const RAD2_TO_DEG2: f64 = (180.0 / PI) * (180.0 / PI);

/// A sorted set of K distinct sensor indices into a parent array.
///
/// `class_id` is the lexicographic rank among all K-subsets when produced by
/// enumeration, and the label index once placed in a [`BestSubarraySet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubarrayClass {
    indices: Vec<usize>,
    class_id: usize,
}

impl SubarrayClass {
    pub fn new(indices: Vec<usize>, sensor_count: usize, class_id: usize) -> Result<Self> {
        if indices.is_empty() {
            return invalid("a subarray needs at least one sensor");
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return invalid(format!("subarray indices {indices:?} are not strictly increasing"));
        }
        if *indices.last().unwrap() >= sensor_count {
            return invalid(format!("subarray indices {indices:?} exceed array of {sensor_count} sensors"));
        }
        Ok(Self { indices, class_id })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn with_class_id(mut self, class_id: usize) -> Self {
        self.class_id = class_id;
        self
    }
}

impl fmt::Display for SubarrayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(" "))
    }
}

/// Which projected-derivative products enter the bearing bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrbForm {
    /// ȧ(θ)ᴴ P ȧ(θ) and ȧ(φ)ᴴ P ȧ(φ): the usual single-source bound.
    #[default]
    SelfTerms,
    /// ȧ(θ)ᴴ P ȧ(φ) and ȧ(φ)ᴴ P ȧ(θ), the mixed-derivative products.
    CrossTerms,
}

impl FromStr for CrbForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self" => Ok(CrbForm::SelfTerms),
            "cross" => Ok(CrbForm::CrossTerms),
            other => invalid(format!("unknown CRB form '{other}' (expected self|cross)")),
        }
    }
}

impl fmt::Display for CrbForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CrbForm::SelfTerms => "self",
            CrbForm::CrossTerms => "cross",
        })
    }
}

/// Angles treated as unknown when scoring a subarray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BearingParams {
    /// Elevation known (1-D azimuth search); κ(θ) is reported as 0.
    #[default]
    Azimuth,
    /// Joint elevation/azimuth.
    Joint,
}

/// Covariance used for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceMode {
    /// Sample covariance of the simulated snapshots.
    #[default]
    Sampled,
    /// σ_s² a aᴴ + σ_n² I at the true direction.
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbConfig {
    pub form: CrbForm,
    pub params: BearingParams,
    pub covariance: CovarianceMode,
    pub sigma_s2: f64,
    /// Map a sampled-covariance winner onto the lexicographically smallest
    /// subset that is CRB-equal to it under the asymptotic covariance.
    pub collapse_ties: bool,
}

impl Default for CrbConfig {
    fn default() -> Self {
        Self {
            form: CrbForm::SelfTerms,
            params: BearingParams::Azimuth,
            covariance: CovarianceMode::Sampled,
            sigma_s2: 1.0,
            collapse_ties: true,
        }
    }
}

/// Bearing bounds in squared degrees plus the projected-derivative products.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbComponents {
    pub kappa_theta: f64,
    pub kappa_phi: f64,
    pub kappa_abs: f64,
    pub pi_theta: C64,
    pub pi_phi: C64,
}

/// (1/√2) · (κθ² + κφ²)^{1/2}.
pub fn absolute_crb(kappa_theta: f64, kappa_phi: f64) -> f64 {
    std::f64::consts::FRAC_1_SQRT_2 * (kappa_theta * kappa_theta + kappa_phi * kappa_phi).sqrt()
}

/// Computes `σ_s⁴ aᴴ R⁻¹ a`, regularizing `R` when it is ill-conditioned.
fn signal_gain(a: &CVector, r: &CMatrix, sigma_s2: f64) -> Result<f64> {
    let k = r.nrows();
    let mut eig = hermitian_eigen(r);
    let (lo, hi) = (eig.values[0], eig.values[k - 1]);
    if lo <= 0.0 || hi / lo > 1e12 {
        let trace: f64 = (0..k).map(|i| r[(i, i)].re).sum();
        let mut reg = r.clone();
        let load = 1e-10 * trace / k as f64;
        for i in 0..k {
            reg[(i, i)] += load;
        }
        eig = hermitian_eigen(&reg);
        if !(eig.values[0] > 0.0) {
            return Err(Error::NumericalDegeneracy("subarray covariance is singular".into()));
        }
    }
    let mut quad = 0.0;
    for (i, &lambda) in eig.values.iter().enumerate() {
        let proj: C64 = eig.vectors.column(i).iter().zip(a.iter()).map(|(v, x)| v.conj() * x).sum();
        quad += proj.norm_sqr() / lambda;
    }
    Ok(sigma_s2 * sigma_s2 * quad)
}

/// uᴴ [I − a aᴴ / K] v.
fn projected_product(u: &CVector, v: &CVector, a: &CVector) -> C64 {
    let k = a.len() as f64;
    let uv = u.dotc(v);
    let au = a.dotc(u);
    let av = a.dotc(v);
    uv - au.conj() * av / k
}

/// Bearing bounds for the sensors `subset` of `array` from the K×K covariance
/// `r_sub` built from `t` snapshots.
pub fn crb_pair(
    array: &SensorArray,
    subset: &SubarrayClass,
    dir: &SourceDirection,
    r_sub: &CovarianceMatrix,
    sigma_n2: f64,
    t: usize,
    cfg: &CrbConfig,
) -> Result<CrbComponents> {
    crb_from_covariance(&array.subset_positions(subset.indices()), dir, r_sub.data(), sigma_n2, t, cfg)
}

pub(crate) fn crb_from_covariance(
    positions: &[[f64; 3]],
    dir: &SourceDirection,
    r_sub: &CMatrix,
    sigma_n2: f64,
    t: usize,
    cfg: &CrbConfig,
) -> Result<CrbComponents> {
    let k = positions.len();
    if k < 2 {
        return Err(Error::InsufficientSubarray(k));
    }
    if r_sub.nrows() != k || r_sub.ncols() != k {
        return invalid(format!("covariance is {}x{}, subarray has {k} sensors", r_sub.nrows(), r_sub.ncols()));
    }
    if t == 0 || !(sigma_n2 > 0.0) {
        return invalid("CRB needs t ≥ 1 and a positive noise power");
    }
    let a = steering_at(positions, dir);
    let (d_theta, d_phi) = derivatives_at(positions, dir);
    let (pi_theta, pi_phi) = match cfg.form {
        CrbForm::SelfTerms => (projected_product(&d_theta, &d_theta, &a), projected_product(&d_phi, &d_phi, &a)),
        CrbForm::CrossTerms => (projected_product(&d_theta, &d_phi, &a), projected_product(&d_phi, &d_theta, &a)),
    };
    let gain = signal_gain(&a, r_sub, cfg.sigma_s2)?;
    let bound = |pi: C64| -> Result<f64> {
        let denom = 2.0 * t as f64 * (pi * gain).re;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::NumericalDegeneracy(format!("non-positive Fisher information {denom:e}")));
        }
        Ok(sigma_n2 / denom * RAD2_TO_DEG2)
    };
    let kappa_phi = bound(pi_phi)?;
    let kappa_theta = match cfg.params {
        BearingParams::Azimuth => 0.0,
        BearingParams::Joint => bound(pi_theta)?,
    };
    Ok(CrbComponents { kappa_theta, kappa_phi, kappa_abs: absolute_crb(kappa_theta, kappa_phi), pi_theta, pi_phi })
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Lexicographic K-subsets of `0..m`.
#[derive(Debug, Clone)]
pub struct Subsets {
    m: usize,
    current: Option<Vec<usize>>,
    rank: usize,
}

impl Iterator for Subsets {
    type Item = SubarrayClass;

    fn next(&mut self) -> Option<SubarrayClass> {
        let cur = self.current.take()?;
        let out = SubarrayClass { indices: cur.clone(), class_id: self.rank };
        self.rank += 1;
        let k = cur.len();
        let mut next = cur;
        let mut i = k;
        while i > 0 {
            i -= 1;
            if next[i] < self.m - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                return Some(out);
            }
        }
        Some(out)
    }
}

pub fn enumerate_subarrays(m: usize, k: usize) -> Result<Subsets> {
    if k == 0 || k > m {
        return invalid(format!("cannot choose {k} of {m} sensors"));
    }
    Ok(Subsets { m, current: Some((0..k).collect()), rank: 0 })
}

/// Scores every K-subset of an array and picks the CRB-minimizing one.
#[derive(Debug, Clone)]
pub struct Labeler {
    array: SensorArray,
    k: usize,
    cfg: CrbConfig,
    subsets: Vec<SubarrayClass>,
    exec: Execution,
}

impl Labeler {
    pub fn new(array: SensorArray, k: usize, cfg: CrbConfig) -> Result<Self> {
        if k < 2 {
            return Err(Error::InsufficientSubarray(k));
        }
        let subsets = enumerate_subarrays(array.len(), k)?.collect();
        Ok(Self { array, k, cfg, subsets, exec: Execution::Sequential })
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn array(&self) -> &SensorArray {
        &self.array
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn config(&self) -> &CrbConfig {
        &self.cfg
    }

    pub fn candidates(&self) -> &[SubarrayClass] {
        &self.subsets
    }

    /// κ_abs of every candidate (None where degenerate), in enumeration order.
    pub fn score_all(&self, dir: &SourceDirection, r_full: &CMatrix, t: usize, sigma_n2: f64) -> Vec<Option<f64>> {
        let positions = self.array.positions();
        exec::map_slice(self.exec, &self.subsets, |s| {
            let pos: Vec<[f64; 3]> = s.indices.iter().map(|&i| positions[i]).collect();
            let r = crate::linalg::principal_submatrix(r_full, &s.indices);
            crb_from_covariance(&pos, dir, &r, sigma_n2, t, &self.cfg).ok().map(|c| c.kappa_abs)
        })
    }

    fn argmin(scores: &[Option<f64>]) -> Option<usize> {
        let best = scores.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return None;
        }
        scores.iter().position(|s| matches!(s, Some(v) if *v <= best * (1.0 + CRB_TIE_TOLERANCE)))
    }

    /// Labels a realization given the full-array covariance it produced.
    pub fn label_covariance(
        &self,
        dir: &SourceDirection,
        r_full: &CovarianceMatrix,
        t: usize,
        sigma_n2: f64,
    ) -> Result<SubarrayClass> {
        if r_full.dim() != self.array.len() {
            return invalid("covariance dimension does not match the array");
        }
        let asymptotic = || CovarianceMatrix::asymptotic(&self.array, dir, self.cfg.sigma_s2, sigma_n2, None);
        let r = match self.cfg.covariance {
            CovarianceMode::Sampled => r_full.clone(),
            CovarianceMode::Asymptotic => asymptotic()?,
        };
        let scores = self.score_all(dir, r.data(), t, sigma_n2);
        let winner = Self::argmin(&scores)
            .ok_or_else(|| Error::LabelingFailed(format!("all {} candidates are degenerate", self.subsets.len())))?;
        if self.cfg.covariance == CovarianceMode::Sampled && self.cfg.collapse_ties {
            let reference = self.score_all(dir, asymptotic()?.data(), t, sigma_n2);
            if let Some(target) = reference[winner] {
                let canonical = reference
                    .iter()
                    .position(|s| matches!(s, Some(v) if (v - target).abs() <= CRB_TIE_TOLERANCE * target))
                    .unwrap_or(winner);
                return Ok(self.subsets[canonical].clone());
            }
        }
        Ok(self.subsets[winner].clone())
    }

    pub fn label(&self, dir: &SourceDirection, snapshots: &SnapshotMatrix, sigma_n2: f64) -> Result<SubarrayClass> {
        if snapshots.sensor_count() != self.array.len() {
            return invalid("snapshots do not come from the full array");
        }
        self.label_covariance(dir, &sample_covariance(snapshots), snapshots.snapshot_count(), sigma_n2)
    }
}

/// CRB-optimal K-subset for one realization; ties go to the lexicographically
/// smallest index set.
pub fn label_best_subarray(
    array: &SensorArray,
    dir: &SourceDirection,
    snapshots: &SnapshotMatrix,
    k: usize,
    sigma_n2: f64,
    cfg: &CrbConfig,
) -> Result<SubarrayClass> {
    Labeler::new(array.clone(), k, *cfg)?.label(dir, snapshots, sigma_n2)
}

/// The reduced label set: distinct CRB winners, sorted lexicographically,
/// with `class_id` equal to position.
#[derive(Debug, Clone, PartialEq)]
pub struct BestSubarraySet {
    classes: Vec<SubarrayClass>,
    sensor_count: usize,
    total_candidates: u64,
    tolerance: f64,
}

impl BestSubarraySet {
    /// Builds the set from (possibly repeated) winning index sets.
    pub fn from_winners<I>(sensor_count: usize, k: usize, winners: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<usize>>,
    {
        let distinct: BTreeSet<Vec<usize>> = winners.into_iter().collect();
        let mut classes = Vec::with_capacity(distinct.len());
        for (id, idx) in distinct.into_iter().enumerate() {
            if idx.len() != k {
                return invalid(format!("class {idx:?} does not have {k} sensors"));
            }
            classes.push(SubarrayClass::new(idx, sensor_count, id)?);
        }
        Ok(Self { classes, sensor_count, total_candidates: binomial(sensor_count, k), tolerance: CRB_TIE_TOLERANCE })
    }

    pub fn classes(&self) -> &[SubarrayClass] {
        &self.classes
    }

    pub fn reduced_count(&self) -> usize {
        self.classes.len()
    }

    pub fn total_candidates(&self) -> u64 {
        self.total_candidates
    }

    pub fn sensor_count(&self) -> usize {
        self.sensor_count
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn subset_size(&self) -> usize {
        self.classes.first().map_or(0, SubarrayClass::len)
    }

    pub fn index_of(&self, indices: &[usize]) -> Option<usize> {
        self.classes.binary_search_by(|c| c.indices.as_slice().cmp(indices)).ok()
    }

    pub fn class(&self, label: usize) -> &SubarrayClass {
        &self.classes[label]
    }

    /// `class_id: i₁ i₂ … i_K`, one line per class.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.classes {
            let idx: Vec<String> = c.indices.iter().map(|i| i.to_string()).collect();
            out.push_str(&format!("{}: {}\n", c.class_id, idx.join(" ")));
        }
        out
    }

    pub fn from_text(text: &str, sensor_count: usize) -> Result<Self> {
        let mut winners = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, rest) =
                line.split_once(':').ok_or_else(|| Error::Format(format!("line {}: missing ':'", n + 1)))?;
            let id: usize = id.trim().parse().map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            if id != winners.len() {
                return Err(Error::Format(format!("line {}: class ids must be consecutive from 0", n + 1)));
            }
            let idx: Vec<usize> = rest
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            winners.push(idx);
        }
        let k = winners.first().map_or(0, Vec::len);
        let set = Self::from_winners(sensor_count, k, winners.clone())?;
        if set.classes.iter().map(|c| c.indices.clone()).collect::<Vec<_>>() != winners {
            return Err(Error::Format("class map is not sorted and distinct".into()));
        }
        Ok(set)
    }
}

/// Settings for [`reduce_classes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReduceConfig {
    pub crb: CrbConfig,
    /// Noise realizations per direction; 0 labels once with the asymptotic
    /// covariance.
    pub realizations: usize,
    pub snapshots: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self { crb: CrbConfig::default(), realizations: 0, snapshots: 100, snr_db: 20.0, seed: 0 }
    }
}

/// Labels every grid direction and keeps the distinct winners.
pub fn reduce_classes(
    array: &SensorArray,
    k: usize,
    grid: &[SourceDirection],
    cfg: &ReduceConfig,
    exec: Execution,
) -> Result<BestSubarraySet> {
    if grid.is_empty() {
        return invalid("direction grid is empty");
    }
    let mut crb = cfg.crb;
    if cfg.realizations == 0 {
        crb.covariance = CovarianceMode::Asymptotic;
    }
    let labeler = Labeler::new(array.clone(), k, crb)?;
    let sigma_n2 = noise_power_for_snr(cfg.snr_db, crb.sigma_s2);
    let reps = cfg.realizations.max(1);
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|p| (0..reps).map(move |l| (p, l))).collect();
    let results = exec::map_slice(exec, &jobs, |&(p, l)| {
        let dir = &grid[p];
        if cfg.realizations == 0 {
            let r = CovarianceMatrix::asymptotic(array, dir, crb.sigma_s2, sigma_n2, None)?;
            labeler.label_covariance(dir, &r, cfg.snapshots, sigma_n2)
        } else {
            let seed = rng::derive_seed(cfg.seed, &[p as u64, l as u64]);
            let y = simulate_snapshots(array, dir, cfg.snapshots, crb.sigma_s2, sigma_n2, None, seed)?;
            labeler.label(dir, &y, sigma_n2)
        }
    });
    let failures = results.iter().filter(|r| r.is_err()).count();
    if failures * 10 > results.len() {
        let first = results.into_iter().find_map(|r| r.err()).unwrap();
        return Err(Error::LabelingFailed(format!("{failures} grid points failed; first: {first}")));
    }
    if failures > 0 {
        log::warn!("{failures} of {} grid labelings failed and were skipped", results.len());
    }
    let set = BestSubarraySet::from_winners(array.len(), k, results.into_iter().flatten().map(|c| c.indices))?;
    if set.reduced_count() > array.len() {
        log::warn!("reduced class count {} exceeds M={}", set.reduced_count(), array.len());
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_uca;

    #[test]
    fn absolute_crb_arithmetic() {
        assert!((absolute_crb(2.5, 2.5) - 2.5).abs() < 1e-15);
        assert!((absolute_crb(3.0, 0.0) - 3.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((absolute_crb(3.0, 4.0) - 3.5355339059327378).abs() < 1e-12);
        assert_eq!(absolute_crb(3.0, 4.0), absolute_crb(4.0, 3.0));
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_subarrays(16, 3).unwrap().count(), 560);
        assert_eq!(enumerate_subarrays(16, 8).unwrap().count(), 12870);
        assert_eq!(enumerate_subarrays(5, 5).unwrap().count(), 1);
        assert!(enumerate_subarrays(3, 4).is_err());
        for (k, c) in [(3, 560), (4, 1820), (5, 4368), (6, 8008), (7, 11440), (8, 12870)] {
            assert_eq!(binomial(16, k), c);
        }
        let all: Vec<_> = enumerate_subarrays(4, 2).unwrap().map(|s| s.indices().to_vec()).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        let ranks: Vec<_> = enumerate_subarrays(4, 2).unwrap().map(|s| s.class_id()).collect();
        assert_eq!(ranks, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn subarray_class_validation() {
        assert!(SubarrayClass::new(vec![0, 2, 5], 6, 0).is_ok());
        assert!(SubarrayClass::new(vec![2, 2], 6, 0).is_err());
        assert!(SubarrayClass::new(vec![3, 1], 6, 0).is_err());
        assert!(SubarrayClass::new(vec![0, 6], 6, 0).is_err());
    }

    #[test]
    fn kappa_scales_inversely_with_snapshots() {
        let uca = build_uca(8, 0.5).unwrap();
        let dir = SourceDirection::new(60.0, 20.0).unwrap();
        let s = SubarrayClass::new(vec![0, 2, 5], 8, 0).unwrap();
        let r = CovarianceMatrix::asymptotic(&uca, &dir, 1.0, 0.1, None).unwrap().submatrix(s.indices());
        let cfg = CrbConfig { params: BearingParams::Joint, ..Default::default() };
        let a = crb_pair(&uca, &s, &dir, &r, 0.1, 10, &cfg).unwrap();
        let b = crb_pair(&uca, &s, &dir, &r, 0.1, 20, &cfg).unwrap();
        assert!((a.kappa_theta / b.kappa_theta - 2.0).abs() < 1e-12);
        assert!((a.kappa_phi / b.kappa_phi - 2.0).abs() < 1e-12);
        assert!(a.kappa_theta > 0.0 && a.kappa_phi > 0.0);
    }

    #[test]
    fn single_sensor_is_insufficient() {
        let uca = build_uca(8, 0.5).unwrap();
        let dir = SourceDirection::azimuth(0.0);
        let s = SubarrayClass::new(vec![3], 8, 0).unwrap();
        let r = CovarianceMatrix::asymptotic(&uca, &dir, 1.0, 0.1, None).unwrap().submatrix(&[3]);
        assert!(matches!(
            crb_pair(&uca, &s, &dir, &r, 0.1, 10, &CrbConfig::default()),
            Err(Error::InsufficientSubarray(1))
        ));
    }

    #[test]
    fn full_array_is_only_candidate() {
        let uca = build_uca(5, 0.5).unwrap();
        let dir = SourceDirection::azimuth(33.0);
        let y = simulate_snapshots(&uca, &dir, 20, 1.0, 0.1, None, 1).unwrap();
        let c = label_best_subarray(&uca, &dir, &y, 5, 0.1, &CrbConfig::default()).unwrap();
        assert_eq!(c.indices(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_direction_grid_has_one_class() {
        let uca = build_uca(8, 0.5).unwrap();
        let set =
            reduce_classes(&uca, 3, &[SourceDirection::azimuth(40.0)], &ReduceConfig::default(), Execution::Sequential)
                .unwrap();
        assert_eq!(set.reduced_count(), 1);
        assert_eq!(set.total_candidates(), 56);
    }

    #[test]
    fn class_map_text_round_trip() {
        let set = BestSubarraySet::from_winners(8, 3, vec![vec![1, 4, 6], vec![0, 3, 5], vec![1, 4, 6]]).unwrap();
        assert_eq!(set.reduced_count(), 2);
        assert_eq!(set.to_text(), "0: 0 3 5\n1: 1 4 6\n");
        assert_eq!(BestSubarraySet::from_text(&set.to_text(), 8).unwrap(), set);
        assert_eq!(set.index_of(&[1, 4, 6]), Some(1));
        assert!(BestSubarraySet::from_text("1: 0 1 2\n", 8).is_err());
        assert!(BestSubarraySet::from_text("0 1 2\n", 8).is_err());
    }
}
