use std::path::Path;

use boxwalk::model::{validate_params, RawParams, Species, SpeciesEnsemble};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    #[serde(rename = "N")]
    n: u64,
    p: f64,
    #[serde(default)]
    s: f64,
    v: f64,
    #[serde(rename = "D")]
    d: f64,
}

/// Reads a JSON array of `{name, N, p, s, v, D}` objects.
pub fn load(path: &Path) -> Result<SpeciesEnsemble, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::input(format!("{}: {}", path.display(), e.message)))
}

pub fn parse(text: &str) -> Result<SpeciesEnsemble, CliError> {
    let entries: Vec<Entry> = serde_json::from_str(text).map_err(|e| CliError::input(format!("species file: {e}")))?;
    let mut out = Vec::with_capacity(entries.len());
    for (i, e) in entries.into_iter().enumerate() {
        let raw = RawParams { p: e.p, s: e.s, v: e.v, d: e.d };
        let params = validate_params(raw).map_err(|err| CliError::input(format!("species[{i}] ({}): {err}", e.name)))?;
        out.push(Species { name: e.name, params, population: e.n });
    }
    Ok(SpeciesEnsemble::new(out)?)
}
