//! Flat `key = value` study configuration.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::estimators::Estimator;
use crate::functional::parse_expression;
use crate::model::{builtin_dim, builtin_model, CustomModel, SharedModel};
use crate::param::{Bandwidths, OneStepOptions};
use crate::simulation::{ErrorLaw, EstimatorSpec, Missingness, SimulationConfig, ThetaSource};

pub const KEYS: &[&str] = &[
    "model",
    "theta",
    "n",
    "reps",
    "seed",
    "errors",
    "missing",
    "h",
    "estimators",
    "theta_source",
    "alpha",
    "dim",
    "truth",
    "custom_r",
    "custom_grad",
    "score_a_factor",
    "score_b_exponent",
    "grid_c",
];

/// Raw entries with the line each came from.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key `{key}`"),
                });
            }
            if entries.insert(key.clone(), (line, value.trim().to_string())).is_some() {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(RawConfig { entries })
    }

    /// Sets or replaces a value, as done by command line overrides.
    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), (0, value));
    }

    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn required(&self, key: &str) -> Result<(usize, &str)> {
        self.get(key).ok_or_else(|| Error::Config {
            line: 0,
            msg: format!("missing required key `{key}`"),
        })
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| Error::Config {
                line,
                msg: format!("bad value `{v}` for `{key}`"),
            }),
        }
    }

    pub fn resolve(&self) -> Result<SimulationConfig> {
        let at = |line: usize| {
            move |e: Error| Error::Config {
                line,
                msg: e.to_string(),
            }
        };

        let (tline, theta_src) = self.required("theta")?;
        let theta = parse_list(theta_src).map_err(at(tline))?;
        let (mline, model_name) = self.required("model")?;
        let model: SharedModel = if model_name == "custom" {
            let dim = self.parsed("dim", 1usize)?;
            let (rline, r) = self.required("custom_r")?;
            let (gline, g) = self.required("custom_grad")?;
            let partials: Vec<&str> = g.split(';').map(str::trim).collect();
            let m = CustomModel::new(dim, r, &partials).map_err(at(rline.max(gline)))?;
            Arc::new(m)
        } else {
            let dim = match self.get("dim") {
                Some(_) => self.parsed("dim", 1usize)?,
                None => builtin_dim(model_name, theta.len()).map_err(at(mline))?,
            };
            builtin_model(model_name, dim).map_err(at(mline))?
        };
        let (hline, h_src) = self.required("h")?;
        let h = parse_expression(h_src, model.dim()).map_err(at(hline))?;

        let theta_source = self.parsed("theta_source", ThetaSource::Ols)?;
        let estimators = match self.get("estimators") {
            None => vec![EstimatorSpec::new(Estimator::FiWeighted, theta_source)],
            Some((line, list)) => parse_estimators(list, theta_source).map_err(at(line))?,
        };
        let (nline, n_src) = self.required("n")?;
        let n = n_src.parse::<usize>().map_err(|_| Error::Config {
            line: nline,
            msg: format!("bad value `{n_src}` for `n`"),
        })?;
        let truth = match self.get("truth") {
            None => None,
            Some((line, v)) => Some(v.parse::<f64>().map_err(|_| Error::Config {
                line,
                msg: format!("bad value `{v}` for `truth`"),
            })?),
        };
        let defaults = Bandwidths::default();
        let one_step = OneStepOptions {
            grid: self.parsed("grid_c", 1.0)?,
            bandwidths: Bandwidths {
                a_factor: self.parsed("score_a_factor", defaults.a_factor)?,
                b_exponent: self.parsed("score_b_exponent", defaults.b_exponent)?,
                ..defaults
            },
            ..OneStepOptions::default()
        };
        let cfg = SimulationConfig {
            model_name: model_name.to_string(),
            model,
            theta,
            errors: self.parsed("errors", ErrorLaw::Normal { sd: 1.0 })?,
            missing: self.parsed("missing", Missingness::Logistic)?,
            h,
            estimators,
            theta_source,
            n,
            reps: self.parsed("reps", 2000usize)?,
            seed: self.parsed("seed", 1u64)?,
            alpha: self.parsed("alpha", 0.05)?,
            truth,
            one_step,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    RawConfig::parse(text)?.resolve()
}

/// Comma separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let v = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidData(format!("bad number `{t}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(v)
}

/// `method` or `method@source`, comma separated.
pub fn parse_estimators(list: &str, default_source: ThetaSource) -> Result<Vec<EstimatorSpec>> {
    list.split(',')
        .map(|item| {
            let item = item.trim();
            let (method, source) = match item.split_once('@') {
                Some((m, s)) => (m, s.parse()?),
                None => (item, default_source),
            };
            Ok(EstimatorSpec::new(method.parse()?, source))
        })
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// The fully resolved configuration as `key = value` pairs, defaults included.
pub fn echo(cfg: &SimulationConfig) -> Vec<(&'static str, String)> {
    let mut out = vec![("model", cfg.model_name.clone()), ("dim", cfg.dim().to_string())];
    out.push(("theta", join(&cfg.theta)));
    out.push(("n", cfg.n.to_string()));
    out.push(("reps", cfg.reps.to_string()));
    out.push(("seed", cfg.seed.to_string()));
    out.push(("errors", cfg.errors.to_string()));
    out.push(("missing", cfg.missing.to_string()));
    out.push(("h", cfg.h.source().to_string()));
    let est: Vec<String> = cfg.estimators.iter().map(EstimatorSpec::label).collect();
    out.push(("estimators", est.join(",")));
    out.push(("theta_source", cfg.theta_source.to_string()));
    out.push(("alpha", cfg.alpha.to_string()));
    out.push((
        "truth",
        cfg.truth.map_or_else(|| "computed".to_string(), |t| t.to_string()),
    ));
    out.push(("score_a_factor", cfg.one_step.bandwidths.a_factor.to_string()));
    out.push(("score_b_exponent", cfg.one_step.bandwidths.b_exponent.to_string()));
    out.push(("grid_c", cfg.one_step.grid.to_string()));
    out
}
