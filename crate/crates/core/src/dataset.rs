//! Labeled training data: full-array covariance tensors paired with the index
//! of the CRB-best subarray, plus the binary on-disk format.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::crb::{BestSubarraySet, CrbConfig, Labeler};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::geometry::{perturb_positions, SensorArray};
use crate::linalg::CMatrix;
use crate::rng;
use crate::signal::{
    noise_power_for_snr, sample_covariance, simulate_snapshots, CovarianceMatrix, MutualCouplingModel, SourceDirection,
};

pub const DATASET_MAGIC: &[u8; 4] = b"SALD";
pub const DATASET_VERSION: u16 = 1;
pub const CHANNELS: usize = 3;

/// Re, Im and phase of `r`, channel-major then row-major, as `3·M·M` values.
pub fn build_input_tensor(r: &CovarianceMatrix) -> Vec<f32> {
    let m = r.dim();
    let data = r.data();
    let mut out = vec![0f32; CHANNELS * m * m];
    for i in 0..m {
        for j in 0..m {
            let z = data[(i, j)];
            let mut phase = z.im.atan2(z.re);
            if phase <= -PI {
                phase = PI;
            }
            out[i * m + j] = z.re as f32;
            out[m * m + i * m + j] = z.im as f32;
            out[2 * m * m + i * m + j] = phase as f32;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    /// `3·M·M` values, channel-major.
    pub input: Vec<f32>,
    /// Index into the dataset's class map.
    pub label: u32,
    pub theta_deg: f32,
    pub phi_deg: f32,
    pub snr_db: f32,
    pub realization: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

/// How source directions are laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirectionPlan {
    /// `count` azimuths equally spaced over [0°, 359°] at fixed elevation.
    Azimuth { count: usize, theta_deg: f64 },
    /// Elevation cells (midpoints of `theta_count` equal cells spanning
    /// [theta_lo, theta_hi]) crossed with `phi_count` azimuths over [0°, 359°].
    Grid { theta_count: usize, phi_count: usize, theta_lo: f64, theta_hi: f64 },
    /// `count` directions drawn uniformly from the given sectors.
    Random { count: usize, theta_lo: f64, theta_hi: f64, seed: u64 },
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl DirectionPlan {
    pub fn directions(&self) -> Result<Vec<SourceDirection>> {
        match *self {
            DirectionPlan::Azimuth { count, theta_deg } => {
                linspace(0.0, 359.0, count).into_iter().map(|phi| SourceDirection::new(theta_deg, phi)).collect()
            }
            DirectionPlan::Grid { theta_count, phi_count, theta_lo, theta_hi } => {
                let step = (theta_hi - theta_lo) / theta_count as f64;
                let mut out = Vec::with_capacity(theta_count * phi_count);
                for i in 0..theta_count {
                    let theta = theta_lo + step * (i as f64 + 0.5);
                    for phi in linspace(0.0, 359.0, phi_count) {
                        out.push(SourceDirection::new(theta, phi)?);
                    }
                }
                Ok(out)
            }
            DirectionPlan::Random { count, theta_lo, theta_hi, seed } => {
                let mut rng = rng::rng_from_seed(seed);
                (0..count)
                    .map(|_| {
                        let theta = if theta_hi > theta_lo { rng.random_range(theta_lo..theta_hi) } else { theta_lo };
                        SourceDirection::new(theta, rng.random_range(0.0..359.0))
                    })
                    .collect()
            }
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            DirectionPlan::Azimuth { count, .. } | DirectionPlan::Random { count, .. } => count,
            DirectionPlan::Grid { theta_count, phi_count, .. } => theta_count * phi_count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Parameters of one training-data generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub k: usize,
    pub plan: DirectionPlan,
    /// Noise realizations per direction (L).
    pub realizations: usize,
    /// Snapshots per realization (T).
    pub snapshots: usize,
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub crb: CrbConfig,
    /// Redraw a Gaussian position perturbation of this standard deviation
    /// for every sample.
    pub perturb_sigma: Option<f64>,
    /// Mutual coupling applied to the array outputs.
    pub coupling: Option<MutualCouplingModel>,
}

impl GenerationConfig {
    pub fn new(
        k: usize,
        plan: DirectionPlan,
        realizations: usize,
        snapshots: usize,
        snr_db: Vec<f64>,
        seed: u64,
    ) -> Self {
        Self {
            k,
            plan,
            realizations,
            snapshots,
            snr_db,
            seed,
            crb: CrbConfig::default(),
            perturb_sigma: None,
            coupling: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    sensor_count: usize,
    samples: Vec<TrainingSample>,
    class_map: BestSubarraySet,
    /// Winning index set of each sample.
    winners: Vec<Vec<usize>>,
    split: Vec<Split>,
}

impl Dataset {
    pub fn new(sensor_count: usize, samples: Vec<TrainingSample>, class_map: BestSubarraySet) -> Result<Self> {
        let per = CHANNELS * sensor_count * sensor_count;
        let mut winners = Vec::with_capacity(samples.len());
        for s in &samples {
            if s.input.len() != per {
                return invalid(format!("sample tensor has {} values, expected {per}", s.input.len()));
            }
            if s.label as usize >= class_map.reduced_count() {
                return invalid(format!("label {} outside class map of {}", s.label, class_map.reduced_count()));
            }
            winners.push(class_map.class(s.label as usize).indices().to_vec());
        }
        let split = vec![Split::Train; samples.len()];
        Ok(Self { sensor_count, samples, class_map, winners, split })
    }

    pub fn sensor_count(&self) -> usize {
        self.sensor_count
    }

    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    pub fn class_map(&self) -> &BestSubarraySet {
        &self.class_map
    }

    pub fn split_tags(&self) -> &[Split] {
        &self.split
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn indices_of(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    /// Winning subset of sample `i`.
    pub fn winner(&self, i: usize) -> &[usize] {
        &self.winners[i]
    }

    /// Labels of every sample expressed in another class map; `None` where
    /// the winning subset is absent from it.
    pub fn labels_in(&self, map: &BestSubarraySet) -> Vec<Option<usize>> {
        self.winners.iter().map(|w| map.index_of(w)).collect()
    }

    /// Random partition into train and validation, stratified by label.
    ///
    /// The train count is `round(fraction · N)`; per class it stays within one
    /// sample of `fraction · n_c`. Falls back to an unstratified split when a
    /// class has fewer than two samples.
    pub fn split(&mut self, train_fraction: f64, seed: u64) -> Result<()> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return invalid(format!("train fraction {train_fraction} must lie strictly between 0 and 1"));
        }
        let n = self.len();
        let target = (train_fraction * n as f64).round() as usize;
        let classes = self.class_map.reduced_count();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label as usize].push(i);
        }
        let mut rng = rng::rng_for(seed, &[0x5911]);
        self.split = vec![Split::Validation; n];
        if by_class.iter().any(|c| c.len() == 1) {
            log::warn!("a class has fewer than 2 samples; using an unstratified split");
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            for &i in &all[..target] {
                self.split[i] = Split::Train;
            }
            return Ok(());
        }
        let quotas: Vec<f64> = by_class.iter().map(|c| train_fraction * c.len() as f64).collect();
        let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut remaining = target.saturating_sub(take.iter().sum());
        let mut order: Vec<usize> = (0..classes).collect();
        order.sort_by(|&a, &b| {
            (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b))
        });
        for &c in order.iter().cycle().take(classes * 2) {
            if remaining == 0 {
                break;
            }
            if take[c] < by_class[c].len() && (take[c] as f64) < quotas[c] + 1.0 - 1e-9 {
                take[c] += 1;
                remaining -= 1;
            }
        }
        for (c, members) in by_class.iter_mut().enumerate() {
            members.shuffle(&mut rng);
            for &i in &members[..take[c]] {
                self.split[i] = Split::Train;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let to_u16 = |v: usize, what: &str| {
            u16::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u16")))
        };
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&to_u16(self.sensor_count, "sensor count")?.to_le_bytes())?;
        w.write_all(&(CHANNELS as u16).to_le_bytes())?;
        w.write_all(&(self.samples.len() as u32).to_le_bytes())?;
        w.write_all(&(self.class_map.reduced_count() as u32).to_le_bytes())?;
        for class in self.class_map.classes() {
            w.write_all(&to_u16(class.len(), "subset size")?.to_le_bytes())?;
            for &i in class.indices() {
                w.write_all(&to_u16(i, "sensor index")?.to_le_bytes())?;
            }
        }
        for s in &self.samples {
            for v in &s.input {
                w.write_all(&v.to_le_bytes())?;
            }
            w.write_all(&s.label.to_le_bytes())?;
            w.write_all(&s.theta_deg.to_le_bytes())?;
            w.write_all(&s.phi_deg.to_le_bytes())?;
            w.write_all(&s.snr_db.to_le_bytes())?;
            w.write_all(&s.realization.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format(format!("bad dataset magic {magic:?}")));
        }
        let version = read_u16(r)?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let m = read_u16(r)? as usize;
        let channels = read_u16(r)? as usize;
        if channels != CHANNELS {
            return Err(Error::Format(format!("expected {CHANNELS} channels, found {channels}")));
        }
        let count = read_u32(r)? as usize;
        let class_count = read_u32(r)? as usize;
        let mut winners = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let k = read_u16(r)? as usize;
            let idx = (0..k).map(|_| read_u16(r).map(usize::from)).collect::<Result<Vec<_>>>()?;
            winners.push(idx);
        }
        let k = winners.first().map_or(0, Vec::len);
        let class_map = BestSubarraySet::from_winners(m, k, winners.clone())?;
        if class_map.reduced_count() != class_count {
            return Err(Error::Format("class map contains duplicates".into()));
        }
        if class_map.classes().iter().zip(&winners).any(|(c, w)| c.indices() != w.as_slice()) {
            return Err(Error::Format("class map is not in lexicographic order".into()));
        }
        let per = CHANNELS * m * m;
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let input = (0..per).map(|_| read_f32(r)).collect::<Result<Vec<_>>>()?;
            samples.push(TrainingSample {
                input,
                label: read_u32(r)?,
                theta_deg: read_f32(r)?,
                phi_deg: read_f32(r)?,
                snr_db: read_f32(r)?,
                realization: read_u32(r)?,
            });
        }
        Dataset::new(m, samples, class_map).map_err(|e| Error::Format(e.to_string()))
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    Ok(f32::from_bits(read_u32(r)?))
}

pub fn split_dataset(mut d: Dataset, train_fraction: f64, seed: u64) -> Result<Dataset> {
    d.split(train_fraction, seed)?;
    Ok(d)
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    d.save(path)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load(path)
}

/// One generated realization before labels are assigned.
struct Realized {
    input: Vec<f32>,
    winner: Vec<usize>,
    dir: SourceDirection,
    snr_db: f64,
    realization: usize,
}

/// Runs the full generation loop: simulate T snapshots per (direction,
/// realization, SNR), label with the CRB-best subarray and keep the
/// full-array covariance tensor as input.
///
/// Samples are ordered by direction, then realization, then SNR.
pub fn generate_training_data(array: &SensorArray, cfg: &GenerationConfig, exec: Execution) -> Result<Dataset> {
    let directions = cfg.plan.directions()?;
    if directions.is_empty() || cfg.realizations == 0 || cfg.snr_db.is_empty() {
        return invalid("generation needs at least one direction, realization and SNR");
    }
    if cfg.snapshots == 0 {
        return invalid("snapshot count must be at least 1");
    }
    crate::geometry::warn_if_underdetermined(array, cfg.k);
    let coupling: Option<CMatrix> = cfg.coupling.as_ref().map(MutualCouplingModel::matrix);
    let shared = Labeler::new(array.clone(), cfg.k, cfg.crb)?;
    let (n_l, n_s) = (cfg.realizations, cfg.snr_db.len());
    let total = directions.len() * n_l * n_s;

    let realized = exec::map_range(exec, total, |job| -> Result<Realized> {
        let (p, rest) = (job / (n_l * n_s), job % (n_l * n_s));
        let (l, s) = (rest / n_s, rest % n_s);
        let dir = directions[p];
        let snr = cfg.snr_db[s];
        let sigma_n2 = noise_power_for_snr(snr, cfg.crb.sigma_s2);
        let coords = [p as u64, l as u64, s as u64];
        let local;
        let (geom, labeler) = match cfg.perturb_sigma {
            Some(sigma) => {
                let g = perturb_positions(
                    array,
                    sigma,
                    rng::derive_seed(cfg.seed, &[p as u64, l as u64, s as u64, 0xbe27]),
                )?;
                local = Labeler::new(g.clone(), cfg.k, cfg.crb)?;
                (g, &local)
            }
            None => (array.clone(), &shared),
        };
        let y = simulate_snapshots(
            &geom,
            &dir,
            cfg.snapshots,
            cfg.crb.sigma_s2,
            sigma_n2,
            coupling.as_ref(),
            rng::derive_seed(cfg.seed, &coords),
        )?;
        let r = sample_covariance(&y);
        let winner = labeler.label_covariance(&dir, &r, cfg.snapshots, sigma_n2)?;
        Ok(Realized {
            input: build_input_tensor(&r),
            winner: winner.indices().to_vec(),
            dir,
            snr_db: snr,
            realization: l,
        })
    });
    let realized = realized.into_iter().collect::<Result<Vec<_>>>()?;
    let class_map = BestSubarraySet::from_winners(array.len(), cfg.k, realized.iter().map(|r| r.winner.clone()))?;
    if class_map.reduced_count() == 0 {
        return Err(Error::LabelingFailed("no classes were observed".into()));
    }
    let samples = realized
        .into_iter()
        .map(|r| TrainingSample {
            label: class_map.index_of(&r.winner).expect("winner is in map") as u32,
            input: r.input,
            theta_deg: r.dir.theta_deg() as f32,
            phi_deg: r.dir.phi_deg() as f32,
            snr_db: r.snr_db as f32,
            realization: r.realization as u32,
        })
        .collect();
    Dataset::new(array.len(), samples, class_map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_uca;
    use crate::linalg::C64;

    fn tiny(seed: u64) -> Dataset {
        let uca = build_uca(6, 0.5).unwrap();
        let cfg = GenerationConfig::new(
            3,
            DirectionPlan::Azimuth { count: 4, theta_deg: 90.0 },
            3,
            20,
            vec![15.0, 25.0],
            seed,
        );
        generate_training_data(&uca, &cfg, Execution::Parallel).unwrap()
    }

    #[test]
    fn identity_tensor() {
        let r = CovarianceMatrix::from_matrix(CMatrix::identity(3, 3)).unwrap();
        let x = build_input_tensor(&r);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(x[i * 3 + j], if i == j { 1.0 } else { 0.0 });
                assert_eq!(x[9 + i * 3 + j], 0.0);
                assert_eq!(x[18 + i * 3 + j], 0.0);
            }
        }
    }

    #[test]
    fn two_by_two_read_off() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(1.0, 0.0)],
        );
        let x = build_input_tensor(&CovarianceMatrix::from_matrix(m).unwrap());
        assert_eq!(&x[4..8], &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(x[8 + 1], std::f32::consts::FRAC_PI_2);
    }

    #[test]
    fn generation_counts_and_determinism() {
        let a = tiny(5);
        assert_eq!(a.len(), 4 * 3 * 2);
        let b = tiny(5);
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_to(&mut ba).unwrap();
        b.write_to(&mut bb).unwrap();
        assert_eq!(ba, bb);
        // direction-major, then realization, then SNR
        assert_eq!(a.samples()[1].snr_db, 25.0);
        assert_eq!(a.samples()[2].realization, 1);
        assert_eq!(a.samples()[6].phi_deg, a.samples()[7].phi_deg);
    }

    #[test]
    fn one_sample_one_class() {
        let uca = build_uca(6, 0.5).unwrap();
        let cfg = GenerationConfig::new(3, DirectionPlan::Azimuth { count: 1, theta_deg: 90.0 }, 1, 20, vec![20.0], 1);
        let d = generate_training_data(&uca, &cfg, Execution::Sequential).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.class_map().reduced_count(), 1);
    }

    #[test]
    fn save_load_round_trip_and_corruption() {
        let d = tiny(2);
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        let back = Dataset::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.samples(), d.samples());
        assert_eq!(back.class_map(), d.class_map());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Dataset::read_from(&mut bad.as_slice()), Err(Error::Format(_))));

        let record = 3 * 36 * 4 + 20;
        let truncated = &bytes[..bytes.len() - record];
        assert!(matches!(Dataset::read_from(&mut &truncated[..]), Err(Error::Io(_))));
    }

    #[test]
    fn split_tiny_and_bad_fraction() {
        let mut d = tiny(3);
        assert!(d.split(1.0, 0).is_err());
        assert!(d.split(0.0, 0).is_err());
        d.split(0.5, 1).unwrap();
        assert_eq!(d.indices_of(Split::Train).len(), 12);

        let uca = build_uca(6, 0.5).unwrap();
        let cfg = GenerationConfig::new(3, DirectionPlan::Azimuth { count: 2, theta_deg: 90.0 }, 1, 20, vec![20.0], 1);
        let mut two = generate_training_data(&uca, &cfg, Execution::Sequential).unwrap();
        two.split(0.5, 9).unwrap();
        assert_eq!(two.indices_of(Split::Train).len(), 1);
        assert_eq!(two.indices_of(Split::Validation).len(), 1);
    }

    #[test]
    fn direction_plans() {
        let az = DirectionPlan::Azimuth { count: 36, theta_deg: 90.0 }.directions().unwrap();
        assert_eq!(az[0].phi_deg(), 0.0);
        assert!((az[35].phi_deg() - 359.0).abs() < 1e-12);
        let grid =
            DirectionPlan::Grid { theta_count: 2, phi_count: 3, theta_lo: 80.0, theta_hi: 90.0 }.directions().unwrap();
        assert_eq!(grid.len(), 6);
        assert_eq!(grid[0].theta_deg(), 82.5);
        assert_eq!(grid[5].theta_deg(), 87.5);
        let rnd = DirectionPlan::Random { count: 50, theta_lo: 90.0, theta_hi: 90.0, seed: 1 }.directions().unwrap();
        assert!(rnd.iter().all(|d| d.theta_deg() == 90.0 && d.phi_deg() < 359.0));
    }
}
