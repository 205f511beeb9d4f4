//! Building blocks shared by the scenarios: domain data, network training,
//! held-out selection accuracy and Monte Carlo DoA comparisons.

use rand::Rng as _;

use super::config::{ExperimentConfig, GreedyDirection};
use crate::crb::{BearingParams, BestSubarraySet, CrbConfig, Labeler};
use crate::dataset::{build_input_tensor, generate_training_data, Dataset, DirectionPlan, GenerationConfig, Split};
use crate::doa::{azimuth_error, music_estimate, AngularGrid};
use crate::error::{invalid, Result};
use crate::exec::{self, Execution};
use crate::geometry::{perturb_positions, SensorArray};
use crate::linalg::CMatrix;
use crate::nn::{
    argmax, build_selector_cnn, forward, make_transfer_model, train, CnnSettings, Mode, NetworkModel, TrainConfig,
    TrainReport,
};
use crate::rng;
use crate::selection::{select_greedy, select_random};
use crate::signal::{
    noise_power_for_snr, sample_covariance, simulate_snapshots, CovarianceMatrix, MutualCouplingModel, SourceDirection,
};

/// Flavour of a source/target pairing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Azimuth-only, source and target geometries from the config.
    Standard,
    /// Azimuth-only, source is the nominal target geometry and the target is
    /// a randomly perturbed copy.
    Perturbed,
    /// Joint elevation/azimuth with per-domain subarray sizes.
    TwoD,
}

impl Variant {
    fn joint(self) -> bool {
        self == Variant::TwoD
    }
}

pub fn crb_config(cfg: &ExperimentConfig, variant: Variant) -> CrbConfig {
    CrbConfig {
        form: cfg.crb_form,
        params: if variant.joint() { BearingParams::Joint } else { BearingParams::Azimuth },
        ..CrbConfig::default()
    }
}

pub fn cnn_settings(cfg: &ExperimentConfig) -> CnnSettings {
    CnnSettings {
        conv_filters: cfg.conv_filters,
        fc_units: cfg.fc_units,
        dropout: cfg.dropout as f32,
        standardize: cfg.standardize,
    }
}

pub fn train_config(cfg: &ExperimentConfig, seed: u64, exec: Execution) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        max_epochs: cfg.max_epochs,
        seed,
        exec,
        ..TrainConfig::default()
    }
}

fn snapshots(cfg: &ExperimentConfig, variant: Variant) -> usize {
    if variant.joint() {
        cfg.snapshots_2d
    } else {
        cfg.snapshots
    }
}

/// Generated data for one domain together with how it was produced.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub array: SensorArray,
    pub k: usize,
    pub crb: CrbConfig,
    pub dataset: Dataset,
}

/// Source-domain training data with `p_source` directions.
pub fn source_domain(
    cfg: &ExperimentConfig,
    variant: Variant,
    p_source: usize,
    seed: u64,
    exec: Execution,
) -> Result<DomainData> {
    let array = match variant {
        Variant::Perturbed => cfg.target.build(cfg.spacing)?,
        _ => cfg.source.build(cfg.spacing)?,
    };
    let (k, plan) = if variant.joint() {
        (
            cfg.k_source_2d,
            DirectionPlan::Grid {
                theta_count: cfg.p_theta_source,
                phi_count: cfg.p_phi_source,
                theta_lo: cfg.theta_lo,
                theta_hi: cfg.theta_hi,
            },
        )
    } else {
        (cfg.k_source, DirectionPlan::Azimuth { count: p_source, theta_deg: 90.0 })
    };
    let crb = crb_config(cfg, variant);
    let mut gen = GenerationConfig::new(
        k,
        plan,
        cfg.l_source,
        snapshots(cfg, variant),
        cfg.train_snr.clone(),
        rng::derive_seed(seed, &[1]),
    );
    gen.crb = crb;
    let mut dataset = generate_training_data(&array, &gen, exec)?;
    dataset.split(cfg.train_fraction, rng::derive_seed(seed, &[3]))?;
    Ok(DomainData { array, k, crb, dataset })
}

/// Small target-domain training set. For the perturbed variant every sample
/// sees a fresh perturbation of the nominal geometry.
pub fn target_domain(cfg: &ExperimentConfig, variant: Variant, seed: u64, exec: Execution) -> Result<DomainData> {
    let array = cfg.target.build(cfg.spacing)?;
    let (k, plan) = if variant.joint() {
        (
            cfg.k_target_2d,
            DirectionPlan::Grid {
                theta_count: cfg.p_theta_target,
                phi_count: cfg.p_phi_target,
                theta_lo: cfg.theta_lo,
                theta_hi: cfg.theta_hi,
            },
        )
    } else {
        (cfg.k_target, DirectionPlan::Azimuth { count: cfg.p_target, theta_deg: 90.0 })
    };
    let crb = crb_config(cfg, variant);
    let mut gen = GenerationConfig::new(
        k,
        plan,
        cfg.l_target,
        snapshots(cfg, variant),
        cfg.train_snr.clone(),
        rng::derive_seed(seed, &[2]),
    );
    gen.crb = crb;
    if variant == Variant::Perturbed {
        gen.perturb_sigma = Some(cfg.perturb_sigma);
    }
    let mut dataset = generate_training_data(&array, &gen, exec)?;
    dataset.split(cfg.train_fraction, rng::derive_seed(seed, &[4]))?;
    Ok(DomainData { array, k, crb, dataset })
}

/// The single fixed perturbation used for target test data.
pub fn test_geometry(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<SensorArray> {
    let nominal = cfg.target.build(cfg.spacing)?;
    match variant {
        Variant::Perturbed => perturb_positions(&nominal, cfg.perturb_sigma, rng::derive_seed(seed, &[77])),
        _ => Ok(nominal),
    }
}

/// A trained selector network and the classes its outputs stand for. A
/// single-class map needs no network.
#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub model: Option<NetworkModel>,
    pub class_map: BestSubarraySet,
    pub report: Option<TrainReport>,
}

impl TrainedNet {
    /// Chosen subset for a full-array covariance.
    pub fn select(&self, r: &CovarianceMatrix) -> Result<Vec<usize>> {
        let label = match &self.model {
            Some(m) => argmax(&forward(m, &build_input_tensor(r), Mode::Infer)?),
            None => 0,
        };
        Ok(self.class_map.class(label).indices().to_vec())
    }

    pub fn validation_accuracy(&self) -> f64 {
        self.report.as_ref().map_or(1.0, |r| r.best_val_accuracy)
    }
}

/// Starting point for [`train_network`].
#[derive(Debug, Clone, Copy)]
pub enum Init<'a> {
    Fresh,
    /// Frozen-convolution copy of a trained source network.
    Transfer(&'a NetworkModel),
}

pub fn train_network(
    data: &Dataset,
    init: Init<'_>,
    cfg: &ExperimentConfig,
    seed: u64,
    exec: Execution,
) -> Result<TrainedNet> {
    let classes = data.class_map().reduced_count();
    let class_map = data.class_map().clone();
    if classes < 2 {
        return Ok(TrainedNet { model: None, class_map, report: None });
    }
    let mut model = match init {
        Init::Fresh => {
            build_selector_cnn(data.sensor_count(), classes, &cnn_settings(cfg), rng::derive_seed(seed, &[5]))?
        }
        Init::Transfer(src) => {
            if src.input_shape().h != data.sensor_count() {
                return invalid("source and target arrays differ in sensor count; the network input cannot be reused");
            }
            make_transfer_model(src, classes, rng::derive_seed(seed, &[6]))?
        }
    };
    let pick = |which| -> Vec<(&[f32], usize)> {
        data.indices_of(which)
            .iter()
            .map(|&i| (data.samples()[i].input.as_slice(), data.samples()[i].label as usize))
            .collect()
    };
    let report = train(
        &mut model,
        &pick(Split::Train),
        &pick(Split::Validation),
        &train_config(cfg, rng::derive_seed(seed, &[8]), exec),
    )?;
    log::info!(
        "trained {} classes: best accuracy {:.3} after {} epochs ({:?})",
        classes,
        report.best_val_accuracy,
        report.epochs.len(),
        report.stop_reason
    );
    Ok(TrainedNet { model: Some(model), class_map, report: Some(report) })
}

/// Networks of one transfer experiment.
#[derive(Debug, Clone)]
pub struct TransferSet {
    pub variant: Variant,
    pub seed: u64,
    pub source: TrainedNet,
    pub target: TrainedNet,
    pub transfer: TrainedNet,
    pub source_array: SensorArray,
    pub target_array: SensorArray,
}

/// Trains the source network, the target-only network and the transferred
/// network for one seed.
pub fn prepare_transfer(
    cfg: &ExperimentConfig,
    variant: Variant,
    p_source: usize,
    seed: u64,
    exec: Execution,
) -> Result<TransferSet> {
    let src = source_domain(cfg, variant, p_source, rng::derive_seed(seed, &[10]), exec)?;
    let tgt = target_domain(cfg, variant, rng::derive_seed(seed, &[11]), exec)?;
    let source = train_network(&src.dataset, Init::Fresh, cfg, rng::derive_seed(seed, &[12]), exec)?;
    transfer_from(cfg, variant, source, src.array, &tgt, seed, exec)
}

/// Completes a [`TransferSet`] from an already trained source network.
pub fn transfer_from(
    cfg: &ExperimentConfig,
    variant: Variant,
    source: TrainedNet,
    source_array: SensorArray,
    tgt: &DomainData,
    seed: u64,
    exec: Execution,
) -> Result<TransferSet> {
    let Some(src_model) = source.model.as_ref() else {
        return invalid("source data produced a single class; there is no network to transfer");
    };
    let target = train_network(&tgt.dataset, Init::Fresh, cfg, rng::derive_seed(seed, &[13]), exec)?;
    let transfer = train_network(&tgt.dataset, Init::Transfer(src_model), cfg, rng::derive_seed(seed, &[14]), exec)?;
    Ok(TransferSet { variant, seed, source, target, transfer, source_array, target_array: tgt.array.clone() })
}

/// Fresh target-geometry samples at random directions, for measuring how
/// often a network names the CRB-best subset.
pub fn held_out_target(cfg: &ExperimentConfig, variant: Variant, seed: u64, exec: Execution) -> Result<Dataset> {
    let array = test_geometry(cfg, variant, seed)?;
    let (k, theta_lo, theta_hi) =
        if variant.joint() { (cfg.k_target_2d, cfg.theta_lo, cfg.theta_hi) } else { (cfg.k_target, 90.0, 90.0) };
    let plan =
        DirectionPlan::Random { count: cfg.accuracy_samples, theta_lo, theta_hi, seed: rng::derive_seed(seed, &[20]) };
    let mut gen = GenerationConfig::new(
        k,
        plan,
        1,
        snapshots(cfg, variant),
        cfg.train_snr.clone(),
        rng::derive_seed(seed, &[21]),
    );
    gen.crb = crb_config(cfg, variant);
    generate_training_data(&array, &gen, exec)
}

/// Percentage of samples whose CRB-best subset the network picks.
pub fn held_out_accuracy(net: &TrainedNet, test: &Dataset, exec: Execution) -> Result<f64> {
    if test.is_empty() {
        return invalid("empty test set");
    }
    let idx: Vec<usize> = (0..test.len()).collect();
    let hits = exec::map_slice(exec, &idx, |&i| -> Result<usize> {
        let picked = match &net.model {
            Some(m) => net.class_map.class(argmax(&forward(m, &test.samples()[i].input, Mode::Infer)?)).indices(),
            None => net.class_map.class(0).indices(),
        };
        Ok(usize::from(picked == test.winner(i)))
    });
    let hits: usize = hits.into_iter().sum::<Result<usize>>()?;
    Ok(100.0 * hits as f64 / test.len() as f64)
}

/// A subarray selector taking part in a DoA comparison.
#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    /// CRB-optimal subset at the true direction.
    Best,
    Cnn(&'a TrainedNet),
    Greedy,
    Random,
    Full,
}

/// Everything a Monte Carlo DoA comparison needs besides the methods.
#[derive(Debug, Clone)]
pub struct DoaSetup {
    /// Geometry that generates the data.
    pub true_array: SensorArray,
    /// Geometry the estimators assume.
    pub nominal: SensorArray,
    pub k: usize,
    pub crb: CrbConfig,
    pub snapshots: usize,
    pub joint: bool,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub grid: AngularGrid,
    pub coupling: Option<CMatrix>,
    pub greedy_direction: GreedyDirection,
}

impl DoaSetup {
    pub fn for_target(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<Self> {
        let joint = variant.joint();
        Ok(Self {
            true_array: test_geometry(cfg, variant, seed)?,
            nominal: cfg.target.build(cfg.spacing)?,
            k: if joint { cfg.k_target_2d } else { cfg.k_target },
            crb: crb_config(cfg, variant),
            snapshots: snapshots(cfg, variant),
            joint,
            theta_lo: cfg.theta_lo,
            theta_hi: cfg.theta_hi,
            grid: if joint {
                AngularGrid::joint(cfg.theta_lo, cfg.theta_hi, 0.5, 1.0)?
            } else {
                AngularGrid::azimuth_default()
            },
            coupling: None,
            greedy_direction: cfg.greedy_direction,
        })
    }

    pub fn with_coupling(mut self, gamma: f64, phase_seed: u64) -> Result<Self> {
        self.coupling = Some(MutualCouplingModel::new(self.true_array.len(), gamma, phase_seed)?.matrix());
        Ok(self)
    }
}

/// RMSE (degrees) and its standard error for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRmse {
    pub series: String,
    pub rmse: f64,
    pub stderr: f64,
}

fn summarize(series: &str, sq: &[f64]) -> MethodRmse {
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = if sq.len() > 1 { sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let rmse = mean.sqrt();
    let stderr = if rmse > 0.0 { (var / n).sqrt() / (2.0 * rmse) } else { 0.0 };
    MethodRmse { series: series.to_string(), rmse, stderr }
}

/// Runs `trials` seeded trials at one SNR. Every method sees the same
/// snapshots in a trial; MUSIC runs on each chosen subarray.
pub fn doa_comparison(
    setup: &DoaSetup,
    methods: &[(&str, Method<'_>)],
    snr_db: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<MethodRmse>> {
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    let sigma_s2 = setup.crb.sigma_s2;
    let sigma_n2 = noise_power_for_snr(snr_db, sigma_s2);
    let labeler = Labeler::new(setup.true_array.clone(), setup.k, setup.crb)?;
    let m = setup.nominal.len();
    let positions = setup.nominal.positions();
    let per_trial = exec::map_range(exec, trials, |j| -> Result<Vec<f64>> {
        let mut r = rng::rng_for(seed, &[j as u64, 0]);
        let theta = if setup.joint { r.random_range(setup.theta_lo..setup.theta_hi) } else { 90.0 };
        let dir = SourceDirection::new(theta, r.random_range(0.0..359.0))?;
        let y = simulate_snapshots(
            &setup.true_array,
            &dir,
            setup.snapshots,
            sigma_s2,
            sigma_n2,
            setup.coupling.as_ref(),
            rng::derive_seed(seed, &[j as u64, 1]),
        )?;
        let cov = sample_covariance(&y);
        let estimate = |subset: &[usize]| -> Result<SourceDirection> {
            let pos: Vec<_> = subset.iter().map(|&i| positions[i]).collect();
            let e = music_estimate(&pos, &cov.submatrix(subset), &setup.grid, 1)?;
            SourceDirection::new(e.theta_deg, e.phi_deg)
        };
        let all: Vec<usize> = (0..m).collect();
        let full = estimate(&all)?;
        let mut sq = Vec::with_capacity(methods.len());
        for (_, method) in methods {
            let est = match method {
                Method::Full => full,
                Method::Best => estimate(labeler.label_covariance(&dir, &cov, setup.snapshots, sigma_n2)?.indices())?,
                Method::Cnn(net) => estimate(&net.select(&cov)?)?,
                Method::Random => {
                    estimate(select_random(m, setup.k, rng::derive_seed(seed, &[j as u64, 2]))?.subset.indices())?
                }
                Method::Greedy => {
                    let at = match setup.greedy_direction {
                        GreedyDirection::Music => full,
                        GreedyDirection::True => dir,
                    };
                    let g = select_greedy(&setup.nominal, setup.k, &at, &cov, sigma_n2, setup.snapshots, &setup.crb)?;
                    estimate(g.subset.indices())?
                }
            };
            let e_phi = azimuth_error(est.phi_deg(), dir.phi_deg());
            sq.push(if setup.joint {
                let e_theta = est.theta_deg() - dir.theta_deg();
                (e_theta * e_theta + e_phi * e_phi) / 2.0
            } else {
                e_phi * e_phi
            });
        }
        Ok(sq)
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(i, (name, _))| summarize(name, &per_trial.iter().map(|t| t[i]).collect::<Vec<_>>()))
        .collect())
}

/// Standard method list for a transfer comparison on the target array.
pub fn transfer_methods(set: &TransferSet) -> Vec<(&'static str, Method<'_>)> {
    vec![
        ("Best", Method::Best),
        ("CNN_TR", Method::Cnn(&set.transfer)),
        ("CNN_T", Method::Cnn(&set.target)),
        ("GAS", Method::Greedy),
        ("RAS", Method::Random),
        ("Full", Method::Full),
    ]
}
