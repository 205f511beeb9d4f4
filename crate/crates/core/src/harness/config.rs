//! Flat `key = value` experiment settings with desk and full-size presets.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::crb::CrbForm;
use crate::error::{invalid, Error, Result};
use crate::geometry::{build_uca, build_ura, SensorArray};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    SourceDoa,
    TlAccuracySweep,
    TlDoa,
    PerturbedTl,
    CouplingSweep,
    TwoD,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::SourceDoa,
        Scenario::TlAccuracySweep,
        Scenario::TlDoa,
        Scenario::PerturbedTl,
        Scenario::CouplingSweep,
        Scenario::TwoD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SourceDoa => "source-doa",
            Scenario::TlAccuracySweep => "tl-sweep",
            Scenario::TlDoa => "tl-doa",
            Scenario::PerturbedTl => "perturbed-tl",
            Scenario::CouplingSweep => "coupling",
            Scenario::TwoD => "two-d",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario '{s}'")))
    }
}

/// Where an array comes from: `ura:RxC`, `uca:M` or `file:PATH`.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    Ura { rows: usize, cols: usize },
    Uca { m: usize },
    File(PathBuf),
}

impl GeometrySpec {
    pub fn build(&self, spacing: f64) -> Result<SensorArray> {
        match self {
            GeometrySpec::Ura { rows, cols } => build_ura(*rows, *cols, spacing),
            GeometrySpec::Uca { m } => build_uca(*m, spacing),
            GeometrySpec::File(p) => SensorArray::load(p),
        }
    }
}

impl fmt::Display for GeometrySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometrySpec::Ura { rows, cols } => write!(f, "ura:{rows}x{cols}"),
            GeometrySpec::Uca { m } => write!(f, "uca:{m}"),
            GeometrySpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for GeometrySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad geometry '{s}' (expected ura:RxC, uca:M or file:PATH)"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "ura" => {
                let (r, c) = rest.split_once('x').ok_or_else(bad)?;
                Ok(GeometrySpec::Ura { rows: r.parse().map_err(|_| bad())?, cols: c.parse().map_err(|_| bad())? })
            }
            "uca" => Ok(GeometrySpec::Uca { m: rest.parse().map_err(|_| bad())? }),
            "file" => Ok(GeometrySpec::File(Path::new(rest).to_path_buf())),
            _ => Err(bad()),
        }
    }
}

/// Which direction the greedy baseline scores subsets at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyDirection {
    /// Full-array MUSIC estimate from the same snapshots.
    Music,
    /// The true source direction.
    True,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: GeometrySpec,
    pub target: GeometrySpec,
    pub spacing: f64,
    pub k_source: usize,
    pub k_target: usize,
    pub p_source: usize,
    pub l_source: usize,
    pub p_target: usize,
    pub l_target: usize,
    pub snapshots: usize,
    pub train_snr: Vec<f64>,
    pub test_snr: Vec<f64>,
    pub gamma: Vec<f64>,
    pub coupling_snr: f64,
    pub trials: usize,
    pub accuracy_samples: usize,
    pub ps_sweep: Vec<usize>,
    pub perturb_sigma: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub p_theta_source: usize,
    pub p_phi_source: usize,
    pub p_theta_target: usize,
    pub p_phi_target: usize,
    pub k_source_2d: usize,
    pub k_target_2d: usize,
    pub snapshots_2d: usize,
    pub seed: u64,
    pub crb_form: CrbForm,
    pub conv_filters: usize,
    pub fc_units: usize,
    pub dropout: f64,
    pub standardize: bool,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub train_fraction: f64,
    pub greedy_direction: GreedyDirection,
}

impl ExperimentConfig {
    /// Small arrays and networks that run on a single CPU core in minutes.
    pub fn desk() -> Self {
        Self {
            source: GeometrySpec::Ura { rows: 2, cols: 4 },
            target: GeometrySpec::Uca { m: 8 },
            spacing: 0.5,
            k_source: 3,
            k_target: 3,
            p_source: 36,
            l_source: 50,
            p_target: 10,
            l_target: 10,
            snapshots: 100,
            train_snr: vec![20.0],
            test_snr: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            gamma: vec![0.01, 0.25, 0.5, 0.75, 1.0],
            coupling_snr: 10.0,
            trials: 100,
            accuracy_samples: 200,
            ps_sweep: vec![9, 18, 36],
            perturb_sigma: 0.25,
            theta_lo: 80.0,
            theta_hi: 90.0,
            p_theta_source: 3,
            p_phi_source: 12,
            p_theta_target: 2,
            p_phi_target: 6,
            k_source_2d: 3,
            k_target_2d: 4,
            snapshots_2d: 10,
            seed: 1,
            crb_form: CrbForm::SelfTerms,
            conv_filters: 32,
            fc_units: 128,
            dropout: 0.5,
            standardize: false,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 512,
            max_epochs: 100,
            patience: 3,
            train_fraction: 0.8,
            greedy_direction: GreedyDirection::Music,
        }
    }

    /// The full-size settings (16-sensor arrays, 256 filters, 1024 units).
    pub fn full() -> Self {
        Self {
            source: GeometrySpec::Ura { rows: 4, cols: 4 },
            target: GeometrySpec::Uca { m: 16 },
            k_source: 6,
            k_target: 6,
            p_source: 100,
            l_source: 100,
            train_snr: vec![15.0],
            ps_sweep: vec![5, 10, 20, 40, 80, 100, 120, 150],
            accuracy_samples: 1000,
            p_theta_source: 11,
            p_phi_source: 100,
            p_theta_target: 6,
            p_phi_target: 10,
            k_source_2d: 6,
            k_target_2d: 8,
            conv_filters: 256,
            fc_units: 1024,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            _ => invalid(format!("unknown scale '{name}' (expected desk or full)")),
        }
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(mut self, text: &str) -> Result<Self> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::InvalidArgument(format!("line {}: {e}", n + 1)))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn load(path: &Path, base: Self) -> Result<Self> {
        base.apply_text(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::InvalidArgument(format!("{key}: cannot parse '{v}'")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => invalid(format!("{key}: expected true or false, got '{v}'")),
            }
        }
        match key {
            "source" => self.source = value.parse()?,
            "target" => self.target = value.parse()?,
            "spacing" => self.spacing = num(key, value)?,
            "k_source" => self.k_source = num(key, value)?,
            "k_target" => self.k_target = num(key, value)?,
            "p_source" => self.p_source = num(key, value)?,
            "l_source" => self.l_source = num(key, value)?,
            "p_target" => self.p_target = num(key, value)?,
            "l_target" => self.l_target = num(key, value)?,
            "snapshots" => self.snapshots = num(key, value)?,
            "train_snr" => self.train_snr = list(key, value)?,
            "test_snr" => self.test_snr = list(key, value)?,
            "gamma" => self.gamma = list(key, value)?,
            "coupling_snr" => self.coupling_snr = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "accuracy_samples" => self.accuracy_samples = num(key, value)?,
            "ps_sweep" => self.ps_sweep = list(key, value)?,
            "perturb_sigma" => self.perturb_sigma = num(key, value)?,
            "theta_lo" => self.theta_lo = num(key, value)?,
            "theta_hi" => self.theta_hi = num(key, value)?,
            "p_theta_source" => self.p_theta_source = num(key, value)?,
            "p_phi_source" => self.p_phi_source = num(key, value)?,
            "p_theta_target" => self.p_theta_target = num(key, value)?,
            "p_phi_target" => self.p_phi_target = num(key, value)?,
            "k_source_2d" => self.k_source_2d = num(key, value)?,
            "k_target_2d" => self.k_target_2d = num(key, value)?,
            "snapshots_2d" => self.snapshots_2d = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "crb_form" => self.crb_form = value.parse()?,
            "conv_filters" => self.conv_filters = num(key, value)?,
            "fc_units" => self.fc_units = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "standardize" => self.standardize = flag(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "train_fraction" => self.train_fraction = num(key, value)?,
            "greedy_direction" => {
                self.greedy_direction = match value {
                    "music" => GreedyDirection::Music,
                    "true" => GreedyDirection::True,
                    _ => return invalid(format!("greedy_direction: expected music or true, got '{value}'")),
                }
            }
            _ => return invalid(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k_source", self.k_source),
            ("k_target", self.k_target),
            ("p_source", self.p_source),
            ("l_source", self.l_source),
            ("p_target", self.p_target),
            ("l_target", self.l_target),
            ("snapshots", self.snapshots),
            ("trials", self.trials),
            ("accuracy_samples", self.accuracy_samples),
            ("p_theta_source", self.p_theta_source),
            ("p_phi_source", self.p_phi_source),
            ("p_theta_target", self.p_theta_target),
            ("p_phi_target", self.p_phi_target),
            ("k_source_2d", self.k_source_2d),
            ("k_target_2d", self.k_target_2d),
            ("snapshots_2d", self.snapshots_2d),
            ("conv_filters", self.conv_filters),
            ("fc_units", self.fc_units),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return invalid(format!("{name} must be at least 1"));
        }
        let increasing = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[1] > w[0]);
        if self.train_snr.is_empty() || !increasing(&self.test_snr) {
            return invalid("train_snr must be nonempty and test_snr strictly increasing");
        }
        if !increasing(&self.gamma) || self.gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return invalid("gamma must be strictly increasing within [0, 1]");
        }
        if self.ps_sweep.is_empty() || self.ps_sweep.contains(&0) || !self.ps_sweep.windows(2).all(|w| w[1] > w[0]) {
            return invalid("ps_sweep must be a strictly increasing list of positive counts");
        }
        if !(self.theta_lo < self.theta_hi) || self.theta_lo < 0.0 || self.theta_hi > 180.0 {
            return invalid("elevation sector must satisfy 0 ≤ theta_lo < theta_hi ≤ 180");
        }
        if !(self.spacing > 0.0) || self.perturb_sigma < 0.0 {
            return invalid("spacing must be positive and perturb_sigma nonnegative");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid("dropout must lie in [0, 1) and train_fraction in (0, 1)");
        }
        Ok(())
    }

    /// Canonical text form: every key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        fn join<T: fmt::Display>(v: &[T]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("source", self.source.to_string());
        kv("target", self.target.to_string());
        kv("spacing", self.spacing.to_string());
        kv("k_source", self.k_source.to_string());
        kv("k_target", self.k_target.to_string());
        kv("p_source", self.p_source.to_string());
        kv("l_source", self.l_source.to_string());
        kv("p_target", self.p_target.to_string());
        kv("l_target", self.l_target.to_string());
        kv("snapshots", self.snapshots.to_string());
        kv("train_snr", join(&self.train_snr));
        kv("test_snr", join(&self.test_snr));
        kv("gamma", join(&self.gamma));
        kv("coupling_snr", self.coupling_snr.to_string());
        kv("trials", self.trials.to_string());
        kv("accuracy_samples", self.accuracy_samples.to_string());
        kv("ps_sweep", join(&self.ps_sweep));
        kv("perturb_sigma", self.perturb_sigma.to_string());
        kv("theta_lo", self.theta_lo.to_string());
        kv("theta_hi", self.theta_hi.to_string());
        kv("p_theta_source", self.p_theta_source.to_string());
        kv("p_phi_source", self.p_phi_source.to_string());
        kv("p_theta_target", self.p_theta_target.to_string());
        kv("p_phi_target", self.p_phi_target.to_string());
        kv("k_source_2d", self.k_source_2d.to_string());
        kv("k_target_2d", self.k_target_2d.to_string());
        kv("snapshots_2d", self.snapshots_2d.to_string());
        kv("seed", self.seed.to_string());
        kv("crb_form", self.crb_form.to_string());
        kv("conv_filters", self.conv_filters.to_string());
        kv("fc_units", self.fc_units.to_string());
        kv("dropout", self.dropout.to_string());
        kv("standardize", self.standardize.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("momentum", self.momentum.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("patience", self.patience.to_string());
        kv("train_fraction", self.train_fraction.to_string());
        kv(
            "greedy_direction",
            match self.greedy_direction {
                GreedyDirection::Music => "music".into(),
                GreedyDirection::True => "true".into(),
            },
        );
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
