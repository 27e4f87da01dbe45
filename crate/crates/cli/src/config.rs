use std::path::Path;

use boxwalk::model::{validate_params, EnclosureGeometry, MovementParams, RawParams};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Values that may come from a JSON config file. Flags win over the file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub p: Option<f64>,
    pub s: Option<f64>,
    pub v: Option<f64>,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    pub delta: Option<f64>,
    pub walkers: Option<u64>,
    pub seed: Option<u64>,
    pub t_max: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Distance from the back wall to the goal wall
    #[arg(long)]
    pub a: Option<f64>,
    /// Width between the side walls [default: a]
    #[arg(long)]
    pub b: Option<f64>,
    /// Start abscissa [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<f64>,
    /// Start ordinate, measured from the centre line [default: 0]
    #[arg(long, allow_hyphen_values = true)]
    pub y0: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct MovementArgs {
    /// Fraction of active time spent in directed movement
    #[arg(long)]
    pub p: Option<f64>,
    /// Fraction of time spent resting [default: 0]
    #[arg(long)]
    pub s: Option<f64>,
    /// Directed speed
    #[arg(long)]
    pub v: Option<f64>,
    /// Diffusion coefficient of the random component
    #[arg(long = "D", alias = "d")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolvedGeometry {
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
}

fn required(name: &'static str, flag: Option<f64>, file: Option<f64>) -> Result<f64, CliError> {
    flag.or(file).ok_or_else(|| CliError::input(format!("missing --{name} (flag or config file)")))
}

impl GeometryArgs {
    pub fn resolve(&self, cfg: &ConfigFile) -> Result<(EnclosureGeometry, ResolvedGeometry), CliError> {
        let a = required("a", self.a, cfg.a)?;
        let r = ResolvedGeometry {
            a,
            b: self.b.or(cfg.b).unwrap_or(a),
            x0: self.x0.or(cfg.x0).unwrap_or(0.0),
            y0: self.y0.or(cfg.y0).unwrap_or(0.0),
        };
        Ok((EnclosureGeometry::new(r.a, r.b, r.x0, r.y0)?, r))
    }
}

impl MovementArgs {
    pub fn resolve(&self, cfg: &ConfigFile) -> Result<(MovementParams, RawParams), CliError> {
        let raw = RawParams {
            p: required("p", self.p, cfg.p)?,
            s: self.s.or(cfg.s).unwrap_or(0.0),
            v: required("v", self.v, cfg.v)?,
            d: required("D", self.d, cfg.d)?,
        };
        Ok((validate_params(raw)?, raw))
    }
}

pub fn echo_geometry(meta: &mut Vec<(String, String)>, g: &ResolvedGeometry) {
    for (k, v) in [("a", g.a), ("b", g.b), ("x0", g.x0), ("y0", g.y0)] {
        meta.push((k.into(), crate::output::fmt_f64(v)));
    }
}

pub fn echo_params(meta: &mut Vec<(String, String)>, r: &RawParams) {
    for (k, v) in [("p", r.p), ("s", r.s), ("v", r.v), ("D", r.d)] {
        meta.push((k.into(), crate::output::fmt_f64(v)));
    }
}
