//! Per-command settings files (`--config`). Every field is optional; flags win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use zonal::study::{DesignConfig, DesignPreset};
use zonal::{Error, ModelSpec, Result, Seed, Window};

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => read_json(p),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))
}

pub fn window_from(v: &[f64]) -> Result<Window> {
    Window::new([v[0], v[1]], [v[2], v[3]])
}

/// `auto`, `quadrants`, or a path to a JSON design.
pub fn design_from(arg: &str) -> Result<DesignConfig> {
    match arg {
        "auto" => Ok(DesignConfig::Preset(DesignPreset::Auto)),
        "quadrants" => Ok(DesignConfig::Preset(DesignPreset::Quadrants)),
        path => read_json(Path::new(path)),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSettings {
    pub model: Option<ModelSpec>,
    pub window: Option<Window>,
    pub seed: Option<Seed>,
    pub budget: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSettings {
    pub window: Option<Window>,
    pub design: Option<DesignConfig>,
    pub h: Option<f64>,
    pub rho: Option<f64>,
    pub nodes: Option<usize>,
    pub alpha: Option<f64>,
    pub posthoc: Option<bool>,
    pub drop_frequency: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSettings {
    pub window: Option<Window>,
    pub design: Option<DesignConfig>,
    pub h: Option<f64>,
    pub rho: Option<f64>,
    pub nodes: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<Seed>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KhatSettings {
    pub window: Option<Window>,
    pub rmax: Option<f64>,
    pub nr: Option<usize>,
    pub radii: Option<Vec<f64>>,
    pub nsim: Option<usize>,
    pub seed: Option<Seed>,
}
