//! Experiment orchestration: configs, scenario runners and CSV results.

mod config;
mod experiment;
mod report;

use std::time::Instant;

pub use config::{ExperimentConfig, GeometrySpec, GreedyDirection, Scenario};
pub use experiment::{
    cnn_settings, crb_config, doa_comparison, held_out_accuracy, held_out_target, prepare_transfer, source_domain,
    target_domain, test_geometry, train_config, train_network, transfer_from, transfer_methods, DoaSetup, DomainData,
    Init, Method, MethodRmse, TrainedNet, TransferSet, Variant,
};
pub use report::{version_string, ExperimentResult, ResultRow};

use crate::error::Result;
use crate::exec::Execution;
use crate::rng;

fn finish(
    cfg: &ExperimentConfig,
    scenario: Scenario,
    x_label: &str,
    metric: &str,
    rows: Vec<ResultRow>,
    start: Instant,
) -> ExperimentResult {
    ExperimentResult {
        scenario: scenario.name().to_string(),
        x_label: x_label.to_string(),
        metric: metric.to_string(),
        rows,
        config_hash: cfg.hash(),
        version: version_string(),
        wall_time: start.elapsed(),
    }
}

fn push(rows: &mut Vec<ResultRow>, x: f64, results: Vec<MethodRmse>) {
    rows.extend(results.into_iter().map(|m| ResultRow { x, series: m.series, value: m.rmse, stderr: m.stderr }));
}

/// Trial seed for a test SNR, shared across methods and scenarios.
fn trial_seed(cfg: &ExperimentConfig, snr_db: f64) -> u64 {
    rng::derive_seed(cfg.seed, &[0xd0a, snr_db.to_bits()])
}

/// Source-domain selection: RMSE vs SNR for the source network, the
/// CRB-best subarray, random subarrays and the full array.
pub fn run_source_domain(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    let start = Instant::now();
    let src = source_domain(cfg, Variant::Standard, cfg.p_source, cfg.seed, exec)?;
    let net = train_network(&src.dataset, Init::Fresh, cfg, rng::derive_seed(cfg.seed, &[12]), exec)?;
    let setup = DoaSetup {
        true_array: src.array.clone(),
        nominal: src.array.clone(),
        k: src.k,
        ..DoaSetup::for_target(cfg, Variant::Standard, cfg.seed)?
    };
    let methods =
        [("CNN_S", Method::Cnn(&net)), ("Best", Method::Best), ("RAS", Method::Random), ("Full", Method::Full)];
    let mut rows = Vec::new();
    for &snr in &cfg.test_snr {
        push(&mut rows, snr, doa_comparison(&setup, &methods, snr, cfg.trials, trial_seed(cfg, snr), exec)?);
    }
    Ok(finish(cfg, Scenario::SourceDoa, "snr_db", "rmse_deg", rows, start))
}

fn binomial_stderr(percent: f64, n: usize) -> f64 {
    let p = percent / 100.0;
    100.0 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Selection accuracy on held-out target data vs the number of source
/// directions, for the source, target-only and transferred networks.
pub fn run_tl_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    let start = Instant::now();
    let ratio = (cfg.p_source * cfg.l_source) as f64 / (cfg.p_target * cfg.l_target) as f64;
    if ratio < 10.0 {
        log::warn!("source/target data ratio {ratio:.1} is below 10");
    }
    let tgt = target_domain(cfg, Variant::Standard, rng::derive_seed(cfg.seed, &[11]), exec)?;
    let test = held_out_target(cfg, Variant::Standard, cfg.seed, exec)?;
    let target = train_network(&tgt.dataset, Init::Fresh, cfg, rng::derive_seed(cfg.seed, &[13]), exec)?;
    let acc_t = held_out_accuracy(&target, &test, exec)?;
    let n = test.len();
    let mut rows = Vec::new();
    for &ps in &cfg.ps_sweep {
        let src = source_domain(cfg, Variant::Standard, ps, rng::derive_seed(cfg.seed, &[10, ps as u64]), exec)?;
        let source = train_network(&src.dataset, Init::Fresh, cfg, rng::derive_seed(cfg.seed, &[12, ps as u64]), exec)?;
        let x = ps as f64;
        if src.array.len() == tgt.array.len() {
            let acc_s = held_out_accuracy(&source, &test, exec)?;
            rows.push(ResultRow { x, series: "CNN_S".into(), value: acc_s, stderr: binomial_stderr(acc_s, n) });
        }
        rows.push(ResultRow { x, series: "CNN_T".into(), value: acc_t, stderr: binomial_stderr(acc_t, n) });
        let transfer = match source.model.as_ref() {
            Some(m) => {
                train_network(&tgt.dataset, Init::Transfer(m), cfg, rng::derive_seed(cfg.seed, &[14, ps as u64]), exec)?
            }
            None => {
                log::warn!("P_S={ps}: source data has a single class, skipping the transferred network");
                continue;
            }
        };
        let acc_tr = held_out_accuracy(&transfer, &test, exec)?;
        rows.push(ResultRow { x, series: "CNN_TR".into(), value: acc_tr, stderr: binomial_stderr(acc_tr, n) });
    }
    Ok(finish(cfg, Scenario::TlAccuracySweep, "p_source", "accuracy_percent", rows, start))
}

fn transfer_doa(
    cfg: &ExperimentConfig,
    variant: Variant,
    scenario: Scenario,
    exec: Execution,
) -> Result<ExperimentResult> {
    let start = Instant::now();
    let set = prepare_transfer(cfg, variant, cfg.p_source, cfg.seed, exec)?;
    let setup = DoaSetup::for_target(cfg, variant, cfg.seed)?;
    let methods = transfer_methods(&set);
    let mut rows = Vec::new();
    for &snr in &cfg.test_snr {
        push(&mut rows, snr, doa_comparison(&setup, &methods, snr, cfg.trials, trial_seed(cfg, snr), exec)?);
    }
    Ok(finish(cfg, scenario, "snr_db", "rmse_deg", rows, start))
}

/// Target-geometry RMSE vs SNR for every selector after transfer.
pub fn run_tl_doa(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    transfer_doa(cfg, Variant::Standard, Scenario::TlDoa, exec)
}

/// Transfer from a nominal geometry to a perturbed copy of it.
pub fn run_perturbed_tl(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    transfer_doa(cfg, Variant::Perturbed, Scenario::PerturbedTl, exec)
}

/// Joint elevation/azimuth RMSE vs SNR.
pub fn run_two_d(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    transfer_doa(cfg, Variant::TwoD, Scenario::TwoD, exec)
}

/// Coupling phases used by every coupling run of a config.
pub fn coupling_phase_seed(cfg: &ExperimentConfig) -> u64 {
    rng::derive_seed(cfg.seed, &[0xc0])
}

/// RMSE vs coupling strength, with coupling applied to target test data
/// only. All strengths reuse the same trial seeds.
pub fn run_coupling_sweep(cfg: &ExperimentConfig, exec: Execution) -> Result<ExperimentResult> {
    let start = Instant::now();
    let set = prepare_transfer(cfg, Variant::Standard, cfg.p_source, cfg.seed, exec)?;
    let methods = transfer_methods(&set);
    let mut rows = Vec::new();
    for &gamma in &cfg.gamma {
        let setup =
            DoaSetup::for_target(cfg, Variant::Standard, cfg.seed)?.with_coupling(gamma, coupling_phase_seed(cfg))?;
        push(
            &mut rows,
            gamma,
            doa_comparison(&setup, &methods, cfg.coupling_snr, cfg.trials, trial_seed(cfg, cfg.coupling_snr), exec)?,
        );
    }
    Ok(finish(cfg, Scenario::CouplingSweep, "gamma", "rmse_deg", rows, start))
}

pub fn run_scenario(cfg: &ExperimentConfig, scenario: Scenario, exec: Execution) -> Result<ExperimentResult> {
    match scenario {
        Scenario::SourceDoa => run_source_domain(cfg, exec),
        Scenario::TlAccuracySweep => run_tl_sweep(cfg, exec),
        Scenario::TlDoa => run_tl_doa(cfg, exec),
        Scenario::PerturbedTl => run_perturbed_tl(cfg, exec),
        Scenario::CouplingSweep => run_coupling_sweep(cfg, exec),
        Scenario::TwoD => run_two_d(cfg, exec),
    }
}
