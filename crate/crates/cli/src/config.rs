//! Run configuration: one TOML file plus `key=value` overrides.
//!
//! Every physical quantity carries its unit in the key name.

use std::path::{Path, PathBuf};

use pnc_core::elastics::EigenOptions;
use pnc_core::geometry::{CellParam, Resolution, UnitCellParams};
use pnc_core::material::Material;
use pnc_core::spectrum::{
    CellGeometry, DosOptions, PipelineConfig, DEFAULT_BAND_K_POINTS, DEFAULT_BROADENING_GHZ, DEFAULT_DOS_K_POINTS,
    DEFAULT_F_MAX_GHZ, DEFAULT_N_BANDS,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "PNC_OUTPUT_DIR";

/// Output directory used when neither the config nor the environment names one.
pub const FALLBACK_OUTPUT_DIR: &str = "pnc-output";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Elliptical block joined to its neighbours by filleted tethers.
    UnitCell,
    /// Uniform rectangular beam of width `beam_width_nm` and thickness `d_nm`.
    Nanobeam,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub structure: Structure,
    pub w_nm: f64,
    pub h_nm: f64,
    pub a_nm: f64,
    pub t_nm: f64,
    pub r_nm: f64,
    pub d_nm: f64,
    pub beam_width_nm: f64,

    pub C11_GPa: f64,
    pub C12_GPa: f64,
    pub C44_GPa: f64,
    pub rho_kgm3: f64,
    /// Rotation of the crystal axes about the beam normal.
    pub orientation_deg: f64,

    /// Hexahedra along x, y, z.
    pub resolution: [usize; 3],
    /// Number of uniformly spaced k samples on [0, 1].
    pub k_points: usize,
    /// Explicit reduced wavevectors; replaces `k_points` when present.
    pub k_path: Option<Vec<f64>>,
    pub n_bands: usize,
    pub f_max_GHz: f64,

    pub dos_k_points: usize,
    pub dos_broadening_GHz: f64,
    pub dos_grid_points: usize,
    pub dos_strict: bool,

    pub sweep_param: CellParam,
    pub sweep_values_nm: Vec<f64>,

    pub output_dir: Option<PathBuf>,
    pub run_id: Option<String>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = UnitCellParams::MEASURED;
        let m = Material::diamond();
        let res = Resolution::default();
        RunConfig {
            structure: Structure::UnitCell,
            w_nm: p.w,
            h_nm: p.h,
            a_nm: p.a,
            t_nm: p.t,
            r_nm: p.r,
            d_nm: p.d,
            beam_width_nm: 90.0,
            C11_GPa: m.c11_gpa,
            C12_GPa: m.c12_gpa,
            C44_GPa: m.c44_gpa,
            rho_kgm3: m.density,
            orientation_deg: 0.0,
            resolution: [res.nx, res.ny, res.nz],
            k_points: DEFAULT_BAND_K_POINTS,
            k_path: None,
            n_bands: DEFAULT_N_BANDS,
            f_max_GHz: DEFAULT_F_MAX_GHZ,
            dos_k_points: DEFAULT_DOS_K_POINTS,
            dos_broadening_GHz: DEFAULT_BROADENING_GHZ,
            dos_grid_points: 2001,
            dos_strict: false,
            sweep_param: CellParam::T,
            sweep_values_nm: vec![p.t - 3.0, p.t, p.t + 3.0],
            output_dir: None,
            run_id: None,
            seed: 1,
        }
    }
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides on top and validates.
    /// Override values are read as TOML literals, falling back to a string.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> CliResult<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))?;
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override '{o}' is not of the form key=value")))?;
            let key = key.trim();
            let value = match toml::from_str::<toml::Table>(&format!("v = {}", value.trim())) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(value.trim().to_string()),
            };
            table.insert(key.to_string(), value);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => {
                std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?
            }
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    /// TOML text of a validated config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn cell_params(&self) -> UnitCellParams {
        UnitCellParams { w: self.w_nm, h: self.h_nm, a: self.a_nm, t: self.t_nm, r: self.r_nm, d: self.d_nm }
    }

    pub fn geometry(&self) -> CellGeometry {
        match self.structure {
            Structure::UnitCell => CellGeometry::UnitCell(self.cell_params()),
            Structure::Nanobeam => {
                CellGeometry::Nanobeam { width: self.beam_width_nm, thickness: self.d_nm, period: self.a_nm }
            }
        }
    }

    pub fn material(&self) -> Material {
        let m = Material {
            c11_gpa: self.C11_GPa,
            c12_gpa: self.C12_GPa,
            c44_gpa: self.C44_GPa,
            density: self.rho_kgm3,
            ..Material::diamond()
        };
        if self.orientation_deg == 0.0 {
            m
        } else {
            m.rotated_about_z(self.orientation_deg.to_radians())
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let [nx, ny, nz] = self.resolution;
        PipelineConfig {
            geometry: self.geometry(),
            material: self.material(),
            resolution: Resolution::new(nx, ny, nz),
            n_k: self.k_points,
            n_bands: self.n_bands,
            f_max: self.f_max_GHz,
            eigen: EigenOptions::default(),
        }
    }

    pub fn k_samples(&self) -> Vec<f64> {
        match &self.k_path {
            Some(k) => k.clone(),
            None => pnc_core::elastics::uniform_k_path(self.k_points),
        }
    }

    pub fn dos_options(&self) -> DosOptions {
        DosOptions { broadening_ghz: self.dos_broadening_GHz, strict: self.dos_strict }
    }

    /// Output root: config, then the environment, then a fixed fallback.
    pub fn output_root(&self) -> PathBuf {
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => PathBuf::from(FALLBACK_OUTPUT_DIR),
        }
    }

    /// Checks every precondition the pipeline stages would check, so that a
    /// bad config fails before any computation.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let core = |e: pnc_core::Error| CliError::Config(e.to_string());
        let [nx, ny, nz] = self.resolution;
        self.geometry().mesh(Resolution::new(nx, ny, nz)).and_then(|m| m.validate()).map_err(core)?;
        self.material().validate().map_err(core)?;
        if self.orientation_deg.is_nan() {
            return bad("orientation_deg must be a number".into());
        }
        if self.k_points == 0 {
            return bad("k_points must be at least 1".into());
        }
        if let Some(k) = &self.k_path {
            if k.is_empty() {
                return bad("k_path must not be empty".into());
            }
            if k.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad("k_path values must lie within [0, 1]".into());
            }
            if k.windows(2).any(|w| w[1] < w[0]) {
                return bad("k_path must be ascending".into());
            }
        }
        if self.n_bands == 0 {
            return bad("n_bands must be at least 1".into());
        }
        if !(self.f_max_GHz > 0.0 && self.f_max_GHz.is_finite()) {
            return bad(format!("f_max_GHz must be positive, got {}", self.f_max_GHz));
        }
        if self.dos_k_points == 0 {
            return bad("dos_k_points must be at least 1".into());
        }
        if !(self.dos_broadening_GHz > 0.0 && self.dos_broadening_GHz.is_finite()) {
            return bad(format!("dos_broadening_GHz must be positive, got {}", self.dos_broadening_GHz));
        }
        if self.dos_grid_points < 2 {
            return bad("dos_grid_points must be at least 2".into());
        }
        if self.sweep_values_nm.is_empty() {
            return bad("sweep_values_nm must not be empty".into());
        }
        if self.structure == Structure::UnitCell {
            for &v in &self.sweep_values_nm {
                self.cell_params().with(self.sweep_param, v).validate().map_err(core)?;
            }
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must not exceed {}", i64::MAX));
        }
        if let Some(id) = &self.run_id {
            if id.is_empty()
                || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
                || id.starts_with('.')
            {
                return bad(format!("run_id '{id}' may only contain letters, digits, '-', '_' and '.'"));
            }
        }
        Ok(())
    }
}
