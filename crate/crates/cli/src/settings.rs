//! Layered configuration: built-in defaults, then a `key = value` file,
//! then command-line flags.

use std::fs;
use std::path::Path;

use sss_denoise::bench::{parse_key_values, parse_methods, Method, TableFormat};
use sss_denoise::filters::FilterSpec;
use sss_denoise::noise::NoiseKind;
use sss_denoise::self2self::{LossMode, PredictConfig, TrainConfig};
use sss_denoise::{Error, Result};

pub const DEFAULT_LOG_EVERY: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub train: TrainConfig,
    pub predict: PredictConfig,
    /// Seed for synthetic noise and artifact names.
    pub seed: u64,
    pub noise: Option<NoiseKind>,
    pub filter: Option<FilterSpec>,
    pub methods: Option<Vec<Method>>,
    pub format: TableFormat,
    pub log_every: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            train: TrainConfig::default(),
            predict: PredictConfig::default(),
            seed: 0,
            noise: None,
            filter: None,
            methods: None,
            format: TableFormat::Text,
            log_every: DEFAULT_LOG_EVERY,
        }
    }
}

/// Flags that override the config file. `None` leaves the value alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub iters: Option<usize>,
    pub keep_prob: Option<f64>,
    pub dropout: Option<f64>,
    pub lr: Option<f64>,
    pub ensemble: Option<usize>,
    pub seed: Option<u64>,
    pub literal_loss: bool,
    pub noise: Option<NoiseKind>,
    pub filter: Option<FilterSpec>,
    pub methods: Option<Vec<Method>>,
    pub format: Option<TableFormat>,
    pub log_every: Option<usize>,
}

impl Settings {
    pub fn resolve(config: Option<&Path>, flags: &Overrides) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = config {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            for (k, v) in parse_key_values(&text)? {
                s.set(&k, &v)?;
            }
        }
        s.apply(flags);
        s.train.validate()?;
        s.predict.validate()?;
        if s.log_every == 0 {
            return Err(Error::InvalidParameter(
                "log_every must be at least 1".into(),
            ));
        }
        Ok(s)
    }

    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.predict.seed = seed;
    }

    /// Applies one config entry. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |reason: &str| Error::Parse {
            what: "config value",
            input: format!("{key} = {value}"),
            reason: reason.into(),
        };
        match key {
            "seed" => self.set_seed(value.parse().map_err(|_| bad("not an integer"))?),
            "noise_seed" => self.seed = value.parse().map_err(|_| bad("not an integer"))?,
            "noise" => self.noise = Some(value.parse()?),
            "filter" => self.filter = Some(value.parse()?),
            "methods" => self.methods = Some(parse_methods(value)?),
            "format" => self.format = value.parse()?,
            "log_every" => self.log_every = value.parse().map_err(|_| bad("not an integer"))?,
            _ => {
                if !self.train.set(key, value)? && !self.predict.set(key, value)? {
                    return Err(bad("unknown key"));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, f: &Overrides) {
        if let Some(seed) = f.seed {
            self.set_seed(seed);
        }
        if let Some(v) = f.iters {
            self.train.iterations = v;
        }
        if let Some(v) = f.keep_prob {
            self.train.keep_prob = v;
        }
        if let Some(v) = f.dropout {
            self.train.dropout_rate = v;
        }
        if let Some(v) = f.lr {
            self.train.lr = v;
        }
        if let Some(v) = f.ensemble {
            self.predict.ensemble = v;
        }
        if f.literal_loss {
            self.train.loss_mode = LossMode::Literal;
        }
        if let Some(v) = f.noise {
            self.noise = Some(v);
        }
        if let Some(v) = f.filter {
            self.filter = Some(v);
        }
        if let Some(v) = &f.methods {
            self.methods = Some(v.clone());
        }
        if let Some(v) = f.format {
            self.format = v;
        }
        if let Some(v) = f.log_every {
            self.log_every = v;
        }
    }
}
