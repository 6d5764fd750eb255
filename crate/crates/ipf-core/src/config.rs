//! Model construction from plain-text `key = value` configuration.
//!
//! Supported keys:
//!
//! ```text
//! drift   = double_well | zero | custom_polynomial
//! coeffs  = c0,c1,c2,...        # for custom_polynomial: f(x) = sum c_k x^k
//! wide_well_force = true|false  # double_well only: force -10x(x^2-1), wells
//!                               # at +-1, instead of -10x(x^2-0.5)
//! obs     = linear | cubic
//! sigma   = 0.1                 # diffusion parameter
//! s       = 0.025               # observation noise variance
//! delta   = 0.01                # time step
//! m       = 1                   # state dimension (componentwise models)
//! obs_stride = 1
//! diffusion_is_variance_rate = true|false
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::Error;
use crate::model::{ObservationModel, SdeModel};

/// Parsed model configuration with defaults for every field.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub drift: String,
    pub coeffs: Vec<f64>,
    pub wide_well_force: bool,
    pub obs: String,
    pub sigma: f64,
    pub s: f64,
    pub delta: f64,
    pub m: usize,
    pub obs_stride: usize,
    pub diffusion_is_variance_rate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            drift: "double_well".into(),
            coeffs: Vec::new(),
            wide_well_force: false,
            obs: "linear".into(),
            sigma: 0.1,
            s: 0.025,
            delta: 0.01,
            m: 1,
            obs_stride: 1,
            diffusion_is_variance_rate: true,
        }
    }
}

/// Split `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, Error> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected key = value",
                lineno + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

impl ModelConfig {
    pub fn from_text(text: &str) -> Result<Self, Error> {
        let kv = parse_kv(text)?;
        Self::from_map(&kv)
    }

    pub fn from_map(kv: &BTreeMap<String, String>) -> Result<Self, Error> {
        let mut cfg = ModelConfig::default();
        for (k, v) in kv {
            match k.as_str() {
                "drift" => cfg.drift = v.clone(),
                "coeffs" => {
                    cfg.coeffs = v
                        .split(',')
                        .map(|p| p.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| Error::Config(format!("coeffs: {e}")))?;
                }
                "wide_well_force" => cfg.wide_well_force = parse_bool(k, v)?,
                "obs" => cfg.obs = v.clone(),
                "sigma" => cfg.sigma = parse_f64(k, v)?,
                "s" => cfg.s = parse_f64(k, v)?,
                "delta" => cfg.delta = parse_f64(k, v)?,
                "m" => {
                    cfg.m = v.parse().map_err(|e| Error::Config(format!("m: {e}")))?;
                }
                "obs_stride" => {
                    cfg.obs_stride = v
                        .parse()
                        .map_err(|e| Error::Config(format!("obs_stride: {e}")))?;
                }
                "diffusion_is_variance_rate" => cfg.diffusion_is_variance_rate = parse_bool(k, v)?,
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        if cfg.delta <= 0.0 {
            return Err(Error::Config("delta must be positive".into()));
        }
        if cfg.m < 1 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        Ok(cfg)
    }

    /// Build the SDE model (drift applied componentwise, constant diagonal
    /// diffusion).
    pub fn build_model(&self) -> Result<SdeModel, Error> {
        let drift: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match self.drift.as_str() {
            "zero" => Arc::new(|_| 0.0),
            "double_well" => {
                if self.wide_well_force {
                    Arc::new(|x: f64| -10.0 * x * (x * x - 1.0))
                } else {
                    // gradient of 2.5 (x^2 - 0.5)^2
                    Arc::new(|x: f64| -10.0 * x * (x * x - 0.5))
                }
            }
            "custom_polynomial" => {
                let coeffs = self.coeffs.clone();
                if coeffs.is_empty() {
                    return Err(Error::Config("custom_polynomial needs coeffs".into()));
                }
                Arc::new(move |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c))
            }
            other => return Err(Error::Config(format!("unknown drift '{other}'"))),
        };
        let sigma = self.sigma;
        Ok(SdeModel::new(
            self.m,
            self.delta,
            Arc::new(move |x: &[f64], _t| x.iter().map(|&xi| drift(xi)).collect()),
            Arc::new(move |x: &[f64], _t| vec![sigma; x.len()]),
            self.diffusion_is_variance_rate,
        ))
    }

    pub fn build_observation(&self) -> Result<ObservationModel, Error> {
        use crate::model::ComponentFn;
        let (h, dh, linear): (ComponentFn, ComponentFn, bool) = match self.obs.as_str() {
            "linear" => (Arc::new(|_j, x| x), Arc::new(|_j, _x| 1.0), true),
            "cubic" => (
                Arc::new(|_j, x: f64| x * x * x),
                Arc::new(|_j, x: f64| 3.0 * x * x),
                false,
            ),
            other => return Err(Error::Config(format!("unknown obs '{other}'"))),
        };
        Ok(ObservationModel::new(
            self.m,
            h,
            dh,
            vec![self.s; self.m],
            self.obs_stride,
            linear,
        ))
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64, Error> {
    v.parse().map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, Error> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "{key}: expected bool, got '{other}'"
        ))),
    }
}
