//! Run configuration (JSON).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayes::PriorBox;
use crate::calibrate::{Bounds, FitOptions};
use crate::error::{Error, Result};
use crate::fem::MaterialParams;
use crate::geometry::{GeometryConfig, SpecimenGeometry};
use crate::poisson::{CacheMap, SpecimenCache, DEFAULT_CENSOR, DEFAULT_DELTA_GRID};

/// Where a specimen's geometry comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecimenSource {
    /// `specimen1`, `specimen2` or `specimen3`.
    Preset(String),
    Inline(GeometryConfig),
    /// JSON geometry file, relative to the config file.
    Path(PathBuf),
    /// Uniform strip of the given width and half-length, sheet thickness.
    Rectangle { width_in: f64, half_length_in: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    pub n_iter: usize,
    pub seed: u64,
    pub burn_in_fraction: f64,
    /// Stride over retained samples for survival bands.
    pub thin: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings {
            n_iter: 20_000,
            seed: 1,
            burn_in_fraction: 0.2,
            thin: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Specimen id (as used in datasets) to geometry.
    pub specimens: BTreeMap<String, SpecimenSource>,
    pub material: MaterialParams,
    pub mesh_level: usize,
    pub delta_grid: Vec<f64>,
    pub fit: FitOptions,
    pub bounds: Bounds,
    pub prior: PriorBox,
    pub mcmc: McmcSettings,
    pub censor_cycles: f64,
    pub output_dir: PathBuf,
    /// Directory relative paths resolve against; set when loading.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let specimens = [("s1", "specimen1"), ("s2", "specimen2"), ("s3", "specimen3")]
            .into_iter()
            .map(|(id, p)| (id.to_string(), SpecimenSource::Preset(p.to_string())))
            .collect();
        RunConfig {
            specimens,
            material: MaterialParams::default(),
            mesh_level: 2,
            delta_grid: DEFAULT_DELTA_GRID.to_vec(),
            fit: FitOptions::default(),
            bounds: Bounds::default(),
            prior: PriorBox::default(),
            mcmc: McmcSettings::default(),
            censor_cycles: DEFAULT_CENSOR,
            output_dir: PathBuf::from("out"),
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        self.bounds.validate()?;
        self.prior.validate()?;
        if self.specimens.is_empty() {
            return Err(Error::Config("no specimens configured".into()));
        }
        if self.delta_grid.is_empty() || self.delta_grid.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(Error::Config("delta_grid must be a non-empty list of non-negative lengths".into()));
        }
        if self.fit.starts == 0 || self.fit.max_evals == 0 || !(self.fit.ftol > 0.0 && self.fit.xtol > 0.0) {
            return Err(Error::Config("fit settings must be positive".into()));
        }
        if self.mcmc.n_iter == 0 || !(self.mcmc.burn_in_fraction >= 0.0 && self.mcmc.burn_in_fraction < 1.0) {
            return Err(Error::Config("mcmc.n_iter must be positive and burn_in_fraction in [0, 1)".into()));
        }
        if !(self.censor_cycles > 0.0 && self.censor_cycles.is_finite()) {
            return Err(Error::Config("censor_cycles must be positive".into()));
        }
        for (id, src) in &self.specimens {
            if let SpecimenSource::Path(p) = src {
                let full = self.resolve(p);
                if !full.exists() {
                    return Err(Error::Config(format!(
                        "geometry file for '{id}' not found: {}",
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn geometry(&self, id: &str) -> Result<SpecimenGeometry> {
        let src = self
            .specimens
            .get(id)
            .ok_or_else(|| Error::Config(format!("unknown specimen id '{id}'")))?;
        match src {
            SpecimenSource::Preset(name) => SpecimenGeometry::preset(name)
                .ok_or_else(|| Error::Config(format!("unknown geometry preset '{name}'"))),
            SpecimenSource::Inline(g) => SpecimenGeometry::from_config(g),
            SpecimenSource::Path(p) => {
                let g: GeometryConfig = crate::io::read_json(&self.resolve(p))?;
                SpecimenGeometry::from_config(&g)
            }
            SpecimenSource::Rectangle {
                width_in,
                half_length_in,
            } => SpecimenGeometry::rectangle(*width_in, *half_length_in, crate::geometry::SHEET_THICKNESS_IN),
        }
    }

    pub fn geometries(&self) -> Result<BTreeMap<String, SpecimenGeometry>> {
        self.specimens
            .keys()
            .map(|id| Ok((id.clone(), self.geometry(id)?)))
            .collect()
    }

    /// Caches for the given ids at the configured level and grid.
    pub fn caches_for<'a>(&self, ids: impl IntoIterator<Item = &'a str>, level: usize) -> Result<CacheMap> {
        let mut out = CacheMap::new();
        for id in ids {
            if out.contains_key(id) {
                continue;
            }
            let g = self.geometry(id)?;
            out.insert(id.to_string(), SpecimenCache::build(&g, &self.material, level, &self.delta_grid)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"mesh_level": 1, "specimens": {"a": {"rectangle": {"width_in": 1.0, "half_length_in": 2.0}}}}"#)
                .unwrap();
        assert_eq!(cfg.mesh_level, 1);
        assert_eq!(cfg.delta_grid, DEFAULT_DELTA_GRID.to_vec());
        cfg.validate().unwrap();
        assert_eq!(cfg.geometry("a").unwrap().w_max, 1.0);
    }

    #[test]
    fn missing_geometry_file_is_reported() {
        let mut cfg = RunConfig::default();
        cfg.specimens.insert("x".into(), SpecimenSource::Path("nope.json".into()));
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("nope.json"));
    }
}
