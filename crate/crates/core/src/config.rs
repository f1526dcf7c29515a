//! Run configuration: a single TOML file fully determines a run.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default.

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, ScanGeometry, ScanMode, Vec2};
use crate::inr::TrainConfig;
use crate::phantom::{dental_phantom, two_disk_phantom, DentalPhantom, PhantomSpec, Shape};
use crate::physics::{
    builtin_material, builtin_spectrum_100kvp, load_spectrum, make_bichromatic, make_uniform,
    Material, Spectrum,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
    pub grid: GridSection,
    pub scene: SceneSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub methods: MethodsSection,
    #[serde(default)]
    pub mbhc: MbhcSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub starvation: StarvationSection,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub pixel_mm: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub kind: String,
    #[serde(default = "default_n_teeth")]
    pub n_teeth: usize,
    #[serde(default = "default_crowns")]
    pub crown_indices: Vec<usize>,
    /// Disk radius (mm) for disk and two_disk scenes.
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// two_disk center separation; defaults to the band placement.
    #[serde(default)]
    pub separation: Option<f64>,
    #[serde(default = "default_scene_material")]
    pub material: String,
}

fn default_n_teeth() -> usize {
    14
}
fn default_crowns() -> Vec<usize> {
    vec![3, 5, 10]
}
fn default_radius() -> f64 {
    5.0
}
fn default_scene_material() -> String {
    "titanium".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_n_views")]
    pub n_views: usize,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
    /// Detector pitch; defaults to spanning the grid diagonal plus a
    /// 4-bin margin.
    #[serde(default)]
    pub bin_spacing: Option<f64>,
    /// View angle range; defaults to [0, pi) parallel, [0, 2 pi) fan.
    #[serde(default)]
    pub angular_range: Option<[f64; 2]>,
    #[serde(default = "default_sad")]
    pub source_axis_distance: f64,
    #[serde(default)]
    pub detector_u_offset: f64,
}

fn default_mode() -> String {
    "parallel".into()
}
fn default_n_views() -> usize {
    360
}
fn default_n_bins() -> usize {
    600
}
fn default_sad() -> f64 {
    500.0
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            n_views: default_n_views(),
            n_bins: default_n_bins(),
            bin_spacing: None,
            angular_range: None,
            source_axis_distance: default_sad(),
            detector_u_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    #[serde(default = "default_spectrum_kind")]
    pub kind: String,
    #[serde(default)]
    pub path: Option<String>,
    /// Monochromatic line (kind = "mono").
    #[serde(default = "default_e0")]
    pub energy: f64,
    /// Bichromatic lines (kind = "bichromatic").
    #[serde(default = "default_bichromatic_e1")]
    pub e1: f64,
    #[serde(default = "default_bichromatic_e2")]
    pub e2: f64,
    #[serde(default = "default_half")]
    pub w1: f64,
    /// Uniform band (kind = "uniform").
    #[serde(default = "default_e0")]
    pub e0: f64,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_n_lines")]
    pub n_lines: usize,
}

fn default_spectrum_kind() -> String {
    "builtin-100kvp".into()
}
fn default_e0() -> f64 {
    70.0
}
fn default_bichromatic_e1() -> f64 {
    64.0
}
fn default_bichromatic_e2() -> f64 {
    80.0
}
fn default_half() -> f64 {
    0.5
}
fn default_half_width() -> f64 {
    10.0
}
fn default_n_lines() -> usize {
    2001
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            kind: default_spectrum_kind(),
            path: None,
            energy: default_e0(),
            e1: default_bichromatic_e1(),
            e2: default_bichromatic_e2(),
            w1: default_half(),
            e0: default_e0(),
            half_width: default_half_width(),
            n_lines: default_n_lines(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_photons")]
    pub photons_per_ray: f64,
    #[serde(default = "default_electronic_sd")]
    pub electronic_sd: f64,
}

fn default_photons() -> f64 {
    1e5
}
fn default_electronic_sd() -> f64 {
    10.0
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            enabled: false,
            photons_per_ray: default_photons(),
            electronic_sd: default_electronic_sd(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodsSection {
    #[serde(default = "default_methods")]
    pub run: Vec<String>,
}

fn default_methods() -> Vec<String> {
    vec!["fbp".into(), "mbhc".into(), "inr".into()]
}

impl Default for MethodsSection {
    fn default() -> Self {
        Self {
            run: default_methods(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbhcSection {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Segmentation threshold (mm^-1); picked from the image histogram
    /// when absent.
    #[serde(default)]
    pub threshold: Option<f64>,
}

fn default_kappa() -> f64 {
    3.0
}

impl Default for MbhcSection {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_lambda_tilde")]
    pub lambda_tilde: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_spr")]
    pub samples_per_ray: usize,
    #[serde(default = "default_rpb")]
    pub rays_per_batch: usize,
    #[serde(default = "default_stop_loss")]
    pub stop_loss: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub jitter: bool,
    #[serde(default = "default_w0")]
    pub w0: f64,
    /// Scalar type of the fit: "f64" (default) or "f32".
    #[serde(default = "default_precision")]
    pub precision: String,
}

fn default_precision() -> String {
    "f64".into()
}

fn default_lr() -> f64 {
    5e-4
}
fn default_lambda_tilde() -> f64 {
    3.0
}
fn default_epsilon() -> f64 {
    1e-6
}
fn default_spr() -> usize {
    256
}
fn default_rpb() -> usize {
    2048
}
fn default_stop_loss() -> f64 {
    5e-3
}
fn default_max_steps() -> usize {
    20_000
}
fn default_w0() -> f64 {
    30.0
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            lambda_tilde: default_lambda_tilde(),
            epsilon: default_epsilon(),
            samples_per_ray: default_spr(),
            rays_per_batch: default_rpb(),
            stop_loss: default_stop_loss(),
            max_steps: default_max_steps(),
            jitter: false,
            w0: default_w0(),
            precision: default_precision(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarvationSection {
    #[serde(default = "default_scene_material")]
    pub metal_material: String,
    /// Rays with more metal chord than this (mm) are excluded from S_t.
    #[serde(default)]
    pub chord_threshold_mm: f64,
    /// Value painted into composed crowns; defaults to the metal's
    /// attenuation at the reference energy.
    #[serde(default)]
    pub metal_value: Option<f64>,
}

impl Default for StarvationSection {
    fn default() -> Self {
        Self {
            metal_material: default_scene_material(),
            chord_threshold_mm: 0.0,
            metal_value: None,
        }
    }
}

/// Built scene: the phantom plus optional dental layout metadata.
pub struct Scene {
    pub phantom: PhantomSpec<f64>,
    pub dental: Option<DentalPhantom<f64>>,
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.scene.kind.as_str() {
            "dental" | "two_disk" | "disk" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown scene kind '{other}' (dental, two_disk, disk)"
                )))
            }
        }
        match self.geometry.mode.as_str() {
            "parallel" | "fan" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown geometry mode '{other}' (parallel, fan)"
                )))
            }
        }
        match self.train.precision.as_str() {
            "f32" | "f64" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown train precision '{other}' (f32, f64)"
                )))
            }
        }
        self.build_train_config().validate()?;
        Ok(())
    }

    pub fn build_grid(&self) -> Result<GridSpec<f64>> {
        GridSpec::new(
            self.grid.nx,
            self.grid.ny,
            self.grid.pixel_mm,
            Vec2::new(self.grid.center[0], self.grid.center[1]),
        )
    }

    pub fn build_scene(&self, grid: &GridSpec<f64>) -> Result<Scene> {
        match self.scene.kind.as_str() {
            "dental" => {
                let d = dental_phantom(self.scene.n_teeth, &self.scene.crown_indices, grid)?;
                Ok(Scene {
                    phantom: d.spec.clone(),
                    dental: Some(d),
                })
            }
            "two_disk" => {
                let material = Arc::new(self.scene_material()?);
                let sep = self.scene.separation.unwrap_or_else(|| {
                    crate::phantom::two_disk_band_separation(self.scene.radius)
                });
                Ok(Scene {
                    phantom: two_disk_phantom(self.scene.radius, sep, material)?,
                    dental: None,
                })
            }
            "disk" => {
                let material = Arc::new(self.scene_material()?);
                let mut phantom = PhantomSpec::new();
                phantom.push(
                    Shape::Disk {
                        center: grid.center,
                        radius: self.scene.radius,
                    },
                    material,
                );
                Ok(Scene {
                    phantom,
                    dental: None,
                })
            }
            _ => unreachable!("validated"),
        }
    }

    pub fn scene_material(&self) -> Result<Material<f64>> {
        builtin_material(&self.scene.material)
    }

    pub fn build_geometry(&self, grid: &GridSpec<f64>) -> Result<ScanGeometry<f64>> {
        let g = &self.geometry;
        let mode = if g.mode == "fan" {
            ScanMode::Fan
        } else {
            ScanMode::Parallel
        };
        let spacing = match g.bin_spacing {
            Some(s) => s,
            None => {
                if g.n_bins <= 4 {
                    return Err(Error::Config("n_bins must exceed 4".into()));
                }
                2.0 * grid.circumradius() / (g.n_bins - 4) as f64
            }
        };
        let range = match g.angular_range {
            Some([a, b]) => (a, b),
            None => match mode {
                ScanMode::Parallel => (0.0, std::f64::consts::PI),
                ScanMode::Fan => (0.0, 2.0 * std::f64::consts::PI),
            },
        };
        if mode == ScanMode::Fan && g.source_axis_distance <= grid.circumradius() {
            return Err(Error::Config(
                "source_axis_distance must exceed the grid circumradius".into(),
            ));
        }
        ScanGeometry::new(
            mode,
            g.n_views,
            range,
            g.n_bins,
            spacing,
            g.source_axis_distance,
            g.detector_u_offset,
        )
    }

    pub fn build_spectrum(&self) -> Result<Spectrum<f64>> {
        let s = &self.spectrum;
        match s.kind.as_str() {
            "builtin-100kvp" => builtin_spectrum_100kvp(),
            "file" => {
                let path = s
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("spectrum kind 'file' needs a path".into()))?;
                load_spectrum(path)
            }
            "mono" => Spectrum::new(vec![s.energy], vec![1.0]),
            "bichromatic" => make_bichromatic(s.e1, s.e2, s.w1),
            "uniform" => make_uniform(s.e0, s.half_width, s.n_lines),
            other => Err(Error::Config(format!(
                "unknown spectrum kind '{other}' (builtin-100kvp, file, mono, bichromatic, uniform)"
            ))),
        }
    }

    pub fn build_train_config(&self) -> TrainConfig<f64> {
        self.build_train_config_as::<f64>()
    }

    pub fn build_train_config_as<T: crate::Real>(&self) -> TrainConfig<T> {
        let t = &self.train;
        TrainConfig {
            learning_rate: T::c(t.learning_rate),
            lambda_tilde: T::c(t.lambda_tilde),
            epsilon: T::c(t.epsilon),
            samples_per_ray: t.samples_per_ray,
            rays_per_batch: t.rays_per_batch,
            stop_loss: T::c(t.stop_loss),
            max_steps: t.max_steps,
            seed: self.seed,
            jitter: t.jitter,
            w0: T::c(t.w0),
        }
    }

    /// Serialized form with all defaults resolved, for `config.lock`.
    pub fn to_lock_string(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
nx = 64
ny = 64
pixel_mm = 0.5

[scene]
kind = "disk"
radius = 10.0
material = "water"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 1);
        assert_eq!(cfg.geometry.n_views, 360);
        assert_eq!(cfg.methods.run, vec!["fbp", "mbhc", "inr"]);
        let grid = cfg.build_grid().unwrap();
        let geom = cfg.build_geometry(&grid).unwrap();
        assert_eq!(geom.n_bins, 600);
        // detector covers the diagonal plus margin
        assert!(geom.support_radius() > grid.circumradius());
        let scene = cfg.build_scene(&grid).unwrap();
        assert_eq!(scene.phantom.primitives.len(), 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\n[extra]\nfoo = 1\n");
        assert!(matches!(RunConfig::from_str(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace("radius = 10.0", "radius = 10.0\ntypo_key = 3");
        assert!(matches!(RunConfig::from_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn bad_scene_kind_rejected() {
        let text = MINIMAL.replace("\"disk\"", "\"cube\"");
        assert!(matches!(RunConfig::from_str(&text), Err(Error::Config(_))));
    }

    #[test]
    fn spectra_build() {
        let mut cfg = RunConfig::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.build_spectrum().unwrap().max_energy(), 100.0);
        cfg.spectrum.kind = "mono".into();
        cfg.spectrum.energy = 60.0;
        let s = cfg.build_spectrum().unwrap();
        assert_eq!(s.len(), 1);
        cfg.spectrum.kind = "bichromatic".into();
        assert_eq!(cfg.build_spectrum().unwrap().len(), 2);
        cfg.spectrum.kind = "uniform".into();
        assert_eq!(cfg.build_spectrum().unwrap().len(), 2001);
    }

    #[test]
    fn lock_round_trips() {
        let cfg = RunConfig::from_str(MINIMAL).unwrap();
        let lock = cfg.to_lock_string();
        let back = RunConfig::from_str(&lock).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.train.max_steps, cfg.train.max_steps);
    }
}
