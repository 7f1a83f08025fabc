//! Experiment configuration: TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use dikernel::data_io::BlobConfig;
use dikernel::objectives::DEFAULT_RHO;
use dikernel::training::{
    AdamConfig, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_LR, DEFAULT_LR_DECAY,
};
use dikernel::{DIConfig, KernelConfig, KernelFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Synthetic,
    Libsvm,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Nystrom,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Di,
    Ls,
    Ce,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Di => "di",
            Objective::Ls => "ls",
            Objective::Ce => "ce",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub classes: usize,
    pub samples: usize,
    pub separation: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 10,
            classes: 4,
            samples: 4000,
            separation: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub format: DataFormat,
    pub train: Option<PathBuf>,
    /// Held-out file; without it the last `test_fraction` of the samples is held out.
    pub test: Option<PathBuf>,
    pub test_fraction: f64,
    pub label_column: usize,
    pub has_header: bool,
    /// Min-max scaling fitted on the training split.
    pub scale: bool,
    pub synthetic: SyntheticConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            format: DataFormat::Synthetic,
            train: None,
            test: None,
            test_fraction: 0.25,
            label_column: 0,
            has_header: false,
            scale: true,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub kind: MapKind,
    /// `n` representative points or `J` frequencies.
    pub size: usize,
    pub kernel: String,
    pub gamma: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig {
            kind: MapKind::Nystrom,
            size: 32,
            kernel: "gaussian".into(),
            gamma: 1.0,
        }
    }
}

impl MapConfig {
    pub fn kernel(&self) -> Result<KernelConfig> {
        let family: KernelFamily = self.kernel.parse()?;
        Ok(match family {
            KernelFamily::Gaussian => KernelConfig::gaussian(self.gamma)?,
            KernelFamily::Linear => KernelConfig::linear(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub saturation_rel_tol: f64,
    pub max_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            batch_size: DEFAULT_BATCH_SIZE,
            lr0: DEFAULT_LR,
            lr_decay: DEFAULT_LR_DECAY,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            saturation_rel_tol: t.saturation_rel_tol,
            max_epochs: t.max_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub objective: Objective,
    pub rho: f64,
    pub output_dir: Option<PathBuf>,
    pub data: DataConfig,
    pub map: MapConfig,
    pub train: TrainSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            objective: Objective::Di,
            rho: DEFAULT_RHO,
            output_dir: None,
            data: DataConfig::default(),
            map: MapConfig::default(),
            train: TrainSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            lr0: t.lr0,
            lr_decay: t.lr_decay,
            adam: AdamConfig {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.eps,
            },
            saturation_rel_tol: t.saturation_rel_tol,
            max_epochs: t.max_epochs,
            seed: self.seed,
        }
    }

    pub fn di_config(&self) -> Result<DIConfig> {
        Ok(DIConfig::new(self.rho)?)
    }

    pub fn blob_config(&self) -> BlobConfig {
        let s = &self.data.synthetic;
        BlobConfig {
            dim: s.dim,
            classes: s.classes,
            samples: s.samples,
            separation: s.separation,
            seed: self.seed,
        }
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        if self.map.size == 0 {
            bail!("map size must be positive");
        }
        self.map.kernel()?;
        self.di_config()?;
        self.train_config().validate()?;
        if self.map.kind == MapKind::Fourier && self.map.kernel()?.family != KernelFamily::Gaussian
        {
            bail!("random Fourier features need the gaussian kernel");
        }
        let d = &self.data;
        if d.format == DataFormat::Synthetic {
            let s = &d.synthetic;
            if s.dim == 0 || s.classes == 0 || s.samples == 0 {
                bail!("synthetic dim, classes and samples must be positive");
            }
        } else {
            let Some(train) = &d.train else {
                bail!("data.train is required for {:?} data", d.format);
            };
            for path in std::iter::once(train).chain(d.test.as_ref()) {
                if !path.exists() {
                    bail!("data file {} does not exist", path.display());
                }
            }
        }
        if d.test.is_none() && !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            bail!("test_fraction must be in (0, 1), got {}", d.test_fraction);
        }
        Ok(())
    }
}

/// Flags that override config-file values.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML experiment config
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory for run records
    #[arg(long, env = "DIKERNEL_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub objective: Option<Objective>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    #[arg(long)]
    pub train_data: Option<PathBuf>,
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub map: Option<MapKind>,
    /// Number of representative points or random features
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = &self.$flag {
                    cfg.$($field).+ = v.clone().into();
                }
            };
        }
        set!(out => output_dir);
        set!(seed => seed);
        set!(objective => objective);
        set!(rho => rho);
        set!(format => data.format);
        set!(train_data => data.train);
        set!(test_data => data.test);
        set!(map => map.kind);
        set!(size => map.size);
        set!(kernel => map.kernel);
        set!(gamma => map.gamma);
        set!(batch_size => train.batch_size);
        set!(lr => train.lr0);
        set!(max_epochs => train.max_epochs);
        if self.train_data.is_some()
            && self.format.is_none()
            && cfg.data.format == DataFormat::Synthetic
        {
            cfg.data.format = DataFormat::Libsvm;
        }
        Ok(cfg)
    }
}
