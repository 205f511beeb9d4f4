use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arraysel::crb::{BestSubarraySet, CrbForm};
use arraysel::dataset::Dataset;
use arraysel::harness::{
    self, doa_comparison, held_out_accuracy, ExperimentConfig, ExperimentResult, Init, Method, ResultRow, Scenario,
    TrainedNet, Variant,
};
use arraysel::nn::{load_model, save_model};
use arraysel::{rng, Execution};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "arraysel", version, about = "CRB-driven sparse subarray selection with a transferable CNN")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value settings applied on top of the scale preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Scale::Desk)]
    scale: Scale,
    /// Which CRB products score a subarray.
    #[arg(long, global = true)]
    crb_form: Option<CrbForm>,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Domain {
    Source,
    Target,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Perturbed,
    TwoD,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Standard => Variant::Standard,
            VariantArg::Perturbed => Variant::Perturbed,
            VariantArg::TwoD => Variant::TwoD,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Sweep {
    Snr,
    Coupling,
    Tl,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset for the source or target geometry.
    GenData {
        #[arg(long, value_enum)]
        domain: Domain,
        #[arg(long, value_enum, default_value_t = VariantArg::Standard)]
        variant: VariantArg,
    },
    /// Train a network from scratch on a source dataset.
    TrainSource {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a network from scratch on a target dataset.
    TrainTarget {
        #[arg(long)]
        data: PathBuf,
    },
    /// Freeze a source network's convolutions and fine-tune it on target data.
    Transfer {
        #[arg(long)]
        source_model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Selection accuracy of a trained network on a dataset.
    EvalSelection {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// DoA RMSE vs SNR on the target geometry for a trained network and the baselines.
    EvalDoa {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = VariantArg::Standard)]
        variant: VariantArg,
    },
    /// Run a parameter sweep.
    Sweep {
        #[arg(value_enum)]
        kind: Sweep,
    },
    /// Run one scenario end to end, or all of them.
    Reproduce {
        /// source-doa, tl-sweep, tl-doa, perturbed-tl, coupling, two-d or all.
        scenario: String,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let base = match common.scale {
        Scale::Desk => ExperimentConfig::desk(),
        Scale::Full => ExperimentConfig::full(),
    };
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p, base).with_context(|| format!("reading {}", p.display()))?,
        None => base,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(f) = common.crb_form {
        cfg.crb_form = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn classes_path(model: &Path) -> PathBuf {
    model.with_extension("classes")
}

/// Writes `<out>/<name>.sann` (when a network exists) and `<name>.classes`.
fn save_net(net: &TrainedNet, out: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let model_path = out.join(format!("{name}.sann"));
    fs::write(classes_path(&model_path), net.class_map.to_text())?;
    match &net.model {
        Some(m) => save_model(m, &model_path)?,
        None => {
            if model_path.exists() {
                fs::remove_file(&model_path)?;
            }
        }
    }
    if let Some(r) = &net.report {
        println!(
            "{name}: best validation accuracy {:.2}% after {} epochs",
            100.0 * r.best_val_accuracy,
            r.epochs.len()
        );
    }
    println!("wrote {}", model_path.display());
    Ok(model_path)
}

fn load_net(model_path: &Path, sensor_count: usize) -> Result<TrainedNet> {
    let classes = fs::read_to_string(classes_path(model_path))
        .with_context(|| format!("reading class map next to {}", model_path.display()))?;
    let class_map = BestSubarraySet::from_text(&classes, sensor_count)?;
    let model = if model_path.exists() { Some(load_model(model_path)?) } else { None };
    if let Some(m) = &model {
        if m.classes() != class_map.reduced_count() {
            bail!("network has {} outputs but the class map lists {}", m.classes(), class_map.reduced_count());
        }
    }
    Ok(TrainedNet { model, class_map, report: None })
}

fn write_result(result: &ExperimentResult, out: &Path) -> Result<()> {
    let path = result.write(out)?;
    print!("{}", result.to_csv()?);
    println!("wrote {} ({:.1} s)", path.display(), result.wall_time.as_secs_f64());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli.common)?;
    let exec = if cli.common.sequential { Execution::Sequential } else { Execution::Parallel };
    let out = &cli.common.out;
    match cli.command {
        Command::GenData { domain, variant } => {
            let v = variant.into();
            let (data, name) = match domain {
                Domain::Source => (harness::source_domain(&cfg, v, cfg.p_source, cfg.seed, exec)?, "source"),
                Domain::Target => (harness::target_domain(&cfg, v, cfg.seed, exec)?, "target"),
            };
            fs::create_dir_all(out)?;
            let path = out.join(format!("{name}.sald"));
            data.dataset.save(&path)?;
            println!(
                "wrote {} ({} samples, {} classes of {} candidates)",
                path.display(),
                data.dataset.len(),
                data.dataset.class_map().reduced_count(),
                data.dataset.class_map().total_candidates()
            );
        }
        Command::TrainSource { data } => {
            let ds = Dataset::load(&data)?;
            let net = harness::train_network(&ds, Init::Fresh, &cfg, rng::derive_seed(cfg.seed, &[12]), exec)?;
            save_net(&net, out, "source")?;
        }
        Command::TrainTarget { data } => {
            let ds = Dataset::load(&data)?;
            let net = harness::train_network(&ds, Init::Fresh, &cfg, rng::derive_seed(cfg.seed, &[13]), exec)?;
            save_net(&net, out, "target")?;
        }
        Command::Transfer { source_model, data } => {
            let ds = Dataset::load(&data)?;
            let src = load_model(&source_model)?;
            let net = harness::train_network(&ds, Init::Transfer(&src), &cfg, rng::derive_seed(cfg.seed, &[14]), exec)?;
            save_net(&net, out, "transfer")?;
        }
        Command::EvalSelection { model, data } => {
            let ds = Dataset::load(&data)?;
            let net = load_net(&model, ds.sensor_count())?;
            let acc = held_out_accuracy(&net, &ds, exec)?;
            let result = ExperimentResult {
                scenario: "eval-selection".into(),
                x_label: "samples".into(),
                metric: "accuracy_percent".into(),
                rows: vec![ResultRow {
                    x: ds.len() as f64,
                    series: "CNN".into(),
                    value: acc,
                    stderr: 100.0 * ((acc / 100.0) * (1.0 - acc / 100.0) / ds.len() as f64).sqrt(),
                }],
                config_hash: cfg.hash(),
                version: harness::version_string(),
                wall_time: std::time::Duration::ZERO,
            };
            write_result(&result, out)?;
        }
        Command::EvalDoa { model, variant } => {
            let start = std::time::Instant::now();
            let v: Variant = variant.into();
            let setup = harness::DoaSetup::for_target(&cfg, v, cfg.seed)?;
            let net = load_net(&model, setup.nominal.len())?;
            let methods = [
                ("CNN", Method::Cnn(&net)),
                ("Best", Method::Best),
                ("GAS", Method::Greedy),
                ("RAS", Method::Random),
                ("Full", Method::Full),
            ];
            let mut rows = Vec::new();
            for &snr in &cfg.test_snr {
                let seed = rng::derive_seed(cfg.seed, &[0xd0a, snr.to_bits()]);
                for m in doa_comparison(&setup, &methods, snr, cfg.trials, seed, exec)? {
                    rows.push(ResultRow { x: snr, series: m.series, value: m.rmse, stderr: m.stderr });
                }
            }
            let result = ExperimentResult {
                scenario: "eval-doa".into(),
                x_label: "snr_db".into(),
                metric: "rmse_deg".into(),
                rows,
                config_hash: cfg.hash(),
                version: harness::version_string(),
                wall_time: start.elapsed(),
            };
            write_result(&result, out)?;
        }
        Command::Sweep { kind } => {
            let scenario = match kind {
                Sweep::Snr => Scenario::TlDoa,
                Sweep::Coupling => Scenario::CouplingSweep,
                Sweep::Tl => Scenario::TlAccuracySweep,
            };
            write_result(&harness::run_scenario(&cfg, scenario, exec)?, out)?;
        }
        Command::Reproduce { scenario } => {
            let list: Vec<Scenario> = if scenario == "all" { Scenario::ALL.to_vec() } else { vec![scenario.parse()?] };
            for s in list {
                write_result(&harness::run_scenario(&cfg, s, exec)?, out)?;
            }
        }
    }
    Ok(())
}
