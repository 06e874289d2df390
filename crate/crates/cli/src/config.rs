//! Run configuration: a JSON document holding the model and, optionally,
//! grid/solver settings, θ lists, output directory and seed. A document
//! without a `model` key is read as a bare model.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use putbound::american::{GridSpec, SolverSpec};
use putbound::asymptotics::RateConfig;
use putbound::auxiliary::AuxGrid;
use putbound::checks::CheckConfig;
use putbound::levy_model::ModelConfig;
use putbound::Error;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub aux: AuxSection,
    #[serde(default)]
    pub rates: RateConfig,
    #[serde(default)]
    pub check: CheckConfig,
    /// θ list for `rates`; regime defaults apply when absent.
    #[serde(default)]
    pub thetas: Option<Vec<f64>>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxSection {
    /// Defaults to the λ and β of the model's limit point.
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub grid: AuxGrid,
}

impl RunConfig {
    pub fn from_model(model: ModelConfig) -> Self {
        Self {
            model,
            grid: GridSpec::default(),
            solver: SolverSpec::default(),
            aux: AuxSection::default(),
            rates: RateConfig::default(),
            check: CheckConfig::default(),
            thetas: None,
            out: None,
            seed: 0,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, Error> {
        let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config {
            path: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        if doc.get("model").is_some() {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })
        } else {
            ModelConfig::from_json_str(text).map(Self::from_model)
        }
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"{"r":0.05,"delta":0.02,"sigma":0.2,"K":100,"T":0.5,"atoms":[{"y":0.2231435513142098,"w":0.2}]}"#;

    #[test]
    fn bare_model_and_full_config() {
        let bare = RunConfig::from_json_str(MODEL).unwrap();
        assert_eq!(bare.model.strike, 100.0);
        let full = format!(r#"{{"model":{MODEL},"grid":{{"nx":1000}},"seed":7}}"#);
        let c = RunConfig::from_json_str(&full).unwrap();
        assert_eq!((c.grid.nx, c.grid.nt, c.seed), (1000, GridSpec::default().nt, 7));
    }

    #[test]
    fn errors_carry_field_path() {
        let bad = format!(r#"{{"model":{MODEL},"grid":{{"nx":"many"}}}}"#);
        match RunConfig::from_json_str(&bad).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "grid.nx"),
            e => panic!("{e}"),
        }
        match RunConfig::from_json_str("{\"r\": 0.05,\n \"sigma\": }").unwrap_err() {
            Error::Config { path, .. } => assert!(path.starts_with("line 2"), "{path}"),
            e => panic!("{e}"),
        }
    }
}
