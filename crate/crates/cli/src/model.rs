//! The `--model` flag grammar.
//!
//! ```text
//! cmd:<shell command>                     child process over stdin/stdout
//! http:<url>                              HTTP POST /predict
//! synth:linear:<b0>,<b1>,...              f(x) = b0 + sum_j b_j x_j
//! synth:pwl:d=<d>,cells=<k>,seed=<s>[,continuous]
//!                                         random grid model on [0, 1]^d
//! synth:file:<path>                       ground truth written by `synth emit`
//! ```

use std::path::PathBuf;

use gleams_core::blackbox::Model;
use gleams_core::{
    make_random_pwl, HttpAdapter, LinearFunction, PiecewiseLinearGroundTruth, StdioAdapter,
};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Command(String),
    Http(String),
    Synthetic(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthSpec {
    Linear(Vec<f64>),
    Pwl {
        d: usize,
        cells: usize,
        seed: u64,
        continuous: bool,
    },
    File(PathBuf),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl ModelSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        if let Some(cmd) = spec.strip_prefix("cmd:") {
            if cmd.trim().is_empty() {
                return Err(usage("cmd: model needs a command"));
            }
            Ok(ModelSpec::Command(cmd.to_string()))
        } else if let Some(url) = spec.strip_prefix("http:") {
            let url = if url.starts_with("//") {
                format!("http:{url}")
            } else {
                url.to_string()
            };
            Ok(ModelSpec::Http(url))
        } else if let Some(rest) = spec.strip_prefix("synth:") {
            SynthSpec::parse(rest).map(ModelSpec::Synthetic)
        } else {
            Err(usage(format!(
                "unknown model {spec:?}; expected cmd:<command>, http:<url> or synth:<spec>"
            )))
        }
    }

    /// Starts or constructs the model. External adapters are handshaken here.
    pub fn open(&self) -> Result<Box<dyn Model>, CliError> {
        Ok(match self {
            ModelSpec::Command(cmd) => Box::new(StdioAdapter::spawn(cmd)?),
            ModelSpec::Http(url) => Box::new(HttpAdapter::connect(url)?),
            ModelSpec::Synthetic(s) => s.open()?,
        })
    }
}

impl SynthSpec {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        if let Some(coeffs) = spec.strip_prefix("linear:") {
            let beta = parse_floats(coeffs)?;
            if beta.len() < 2 {
                return Err(usage(
                    "synth:linear needs an intercept and at least one slope",
                ));
            }
            Ok(SynthSpec::Linear(beta))
        } else if let Some(params) = spec.strip_prefix("pwl:") {
            let (mut d, mut cells, mut seed, mut continuous) = (None, None, 0u64, false);
            for part in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (key, value) = part.split_once('=').unwrap_or((part, ""));
                let bad = || usage(format!("bad synth:pwl parameter {part:?}"));
                match key {
                    "d" => d = Some(value.parse().map_err(|_| bad())?),
                    "cells" => cells = Some(value.parse().map_err(|_| bad())?),
                    "seed" => seed = value.parse().map_err(|_| bad())?,
                    "continuous" if value.is_empty() || value == "true" => continuous = true,
                    "continuous" if value == "false" => continuous = false,
                    _ => return Err(bad()),
                }
            }
            Ok(SynthSpec::Pwl {
                d: d.ok_or_else(|| usage("synth:pwl needs d=<dimension>"))?,
                cells: cells.ok_or_else(|| usage("synth:pwl needs cells=<count>"))?,
                seed,
                continuous,
            })
        } else if let Some(path) = spec.strip_prefix("file:") {
            Ok(SynthSpec::File(PathBuf::from(path)))
        } else {
            Err(usage(format!(
                "unknown synthetic model {spec:?}; expected linear:, pwl: or file:"
            )))
        }
    }

    pub fn open(&self) -> Result<Box<dyn Model>, CliError> {
        Ok(match self {
            SynthSpec::Linear(beta) => Box::new(LinearFunction::new(beta.clone())),
            _ => Box::new(
                self.ground_truth()?
                    .expect("grid models have a ground truth"),
            ),
        })
    }

    /// The grid model behind `pwl:` and `file:` specs.
    pub fn ground_truth(&self) -> Result<Option<PiecewiseLinearGroundTruth>, CliError> {
        match self {
            SynthSpec::Linear(_) => Ok(None),
            SynthSpec::Pwl {
                d,
                cells,
                seed,
                continuous,
            } => make_random_pwl(*d, *cells, *seed, *continuous)
                .map(Some)
                .map_err(|e| usage(e.to_string())),
            SynthSpec::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map(Some).map_err(|e| {
                    CliError::Schema(format!("invalid ground truth {}: {e}", path.display()))
                })
            }
        }
    }
}

/// Comma-separated decimals.
pub fn parse_floats(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| usage(format!("{s:?} is not a finite number")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        assert_eq!(
            ModelSpec::parse("cmd:python -m adapter").unwrap(),
            ModelSpec::Command("python -m adapter".into())
        );
        assert_eq!(
            ModelSpec::parse("http://localhost:9000").unwrap(),
            ModelSpec::Http("http://localhost:9000".into())
        );
        assert_eq!(
            ModelSpec::parse("http:http://h/predict").unwrap(),
            ModelSpec::Http("http://h/predict".into())
        );
        assert_eq!(
            ModelSpec::parse("synth:linear:1, 2,-3").unwrap(),
            ModelSpec::Synthetic(SynthSpec::Linear(vec![1.0, 2.0, -3.0]))
        );
        assert_eq!(
            ModelSpec::parse("synth:pwl:d=2,cells=4,seed=7,continuous").unwrap(),
            ModelSpec::Synthetic(SynthSpec::Pwl {
                d: 2,
                cells: 4,
                seed: 7,
                continuous: true
            })
        );
    }

    #[test]
    fn rejects_malformed_specs() {
        for bad in [
            "python",
            "cmd:",
            "synth:linear:1",
            "synth:pwl:cells=4",
            "synth:pwl:d=x,cells=2",
            "synth:foo",
        ] {
            assert!(
                matches!(ModelSpec::parse(bad), Err(CliError::Usage(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn synthetic_models_open_without_io() {
        let m = ModelSpec::parse("synth:pwl:d=3,cells=8,seed=1")
            .unwrap()
            .open()
            .unwrap();
        assert_eq!(m.dim(), Some(3));
        let m = ModelSpec::parse("synth:linear:1,2")
            .unwrap()
            .open()
            .unwrap();
        assert_eq!(m.predict(&[vec![0.5]]).unwrap(), vec![2.0]);
    }
}
