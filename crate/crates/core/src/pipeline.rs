//! Experiment pipelines: simulate, reconstruct with each method, compare
//! against the rasterized ground truth, and export everything.

use crate::config::{RunConfig, Scene};
use crate::error::{Error, Result};
use crate::fbp::{consistency_residual, fbp, moment0};
use crate::geometry::{GridSpec, ScanGeometry};
use crate::inr::{self, train, MlpParams};
use crate::io;
use crate::mbhc::{auto_threshold, mbhc_reconstruct, segment_metal};
use crate::metrics::{mae, mse, MethodMetrics, MetricsReport};
use crate::phantom::{rasterize_pair, DentalPhantom, Image};
use crate::physics::{builtin_material, Spectrum, DEFAULT_SLOPE_DE};
use crate::projector::{apply_noise, project_poly, rays_through_mask, RayMask, Sinogram};
use ndarray::Array2;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// CLI-level options layered over the config file.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub deterministic: bool,
}

impl PipelineOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed: None,
            deterministic: false,
        }
    }
}

/// Config with CLI overrides applied.
pub fn resolve_config(cfg: &RunConfig, opts: &PipelineOptions) -> RunConfig {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if opts.deterministic {
        cfg.deterministic = true;
    }
    cfg
}

/// Everything produced by the simulation stage.
pub struct Simulated {
    pub cfg: RunConfig,
    pub grid: GridSpec<f64>,
    pub geometry: ScanGeometry<f64>,
    pub spectrum: Spectrum<f64>,
    /// Reference energy: the spectrum mean.
    pub e0: f64,
    pub scene: Scene,
    pub truth_mu: Image<f64>,
    pub truth_sigma: Image<f64>,
    /// Air pixels: both reference fields exactly zero.
    pub background: Array2<bool>,
    /// Noiseless polychromatic sinogram.
    pub clean: Sinogram<f64>,
    /// Measured sinogram (noise applied when enabled).
    pub sino: Sinogram<f64>,
}

/// Build the scene and project it.
pub fn simulate(cfg: &RunConfig) -> Result<Simulated> {
    let grid = cfg.build_grid()?;
    let geometry = cfg.build_geometry(&grid)?;
    let spectrum = cfg.build_spectrum()?;
    let e0 = spectrum.mean_energy();
    let scene = cfg.build_scene(&grid)?;
    let (truth_mu, truth_sigma) = rasterize_pair(&scene.phantom, &grid, e0, DEFAULT_SLOPE_DE)?;
    let mut background = Array2::from_elem(truth_mu.values.dim(), false);
    for ((b, m), s) in background
        .iter_mut()
        .zip(truth_mu.values.iter())
        .zip(truth_sigma.values.iter())
    {
        *b = *m == 0.0 && *s == 0.0;
    }
    let clean = project_poly(&scene.phantom, &geometry, &spectrum)?;
    let sino = if cfg.noise.enabled {
        apply_noise(
            &clean,
            cfg.noise.photons_per_ray,
            cfg.noise.electronic_sd,
            cfg.seed,
        )
    } else {
        clean.clone()
    };
    Ok(Simulated {
        cfg: cfg.clone(),
        grid,
        geometry,
        spectrum,
        e0,
        scene,
        truth_mu,
        truth_sigma,
        background,
        clean,
        sino,
    })
}

fn mu_window(sim: &Simulated) -> (f64, f64) {
    let vmax = sim
        .truth_mu
        .values
        .iter()
        .fold(0.0_f64, |m, v| m.max(*v));
    (0.0, if vmax > 0.0 { 1.05 * vmax } else { 0.1 })
}

fn export_image_pair(dir: &Path, name: &str, image: &Image<f64>, window: (f64, f64)) -> Result<()> {
    io::write_image_csv(dir.join(format!("{name}.csv")), image)?;
    io::write_image_pgm(dir.join(format!("{name}.pgm")), image, window)?;
    Ok(())
}

fn background_hash(background: &Array2<bool>) -> String {
    let bytes: Vec<u8> = background.iter().map(|b| *b as u8).collect();
    io::sha256_hex(&bytes)
}

/// Write the simulation products under `out/sinogram` and `out/truth`.
pub fn write_simulation(sim: &Simulated, out: &Path) -> Result<()> {
    io::write_sinogram(out.join("sinogram/poly.sino"), &sim.sino)?;
    io::write_sinogram_csv(out.join("sinogram/poly.csv"), &sim.sino)?;
    if sim.cfg.noise.enabled {
        io::write_sinogram(out.join("sinogram/clean.sino"), &sim.clean)?;
    }
    let window = mu_window(sim);
    let truth_dir = out.join("truth");
    export_image_pair(&truth_dir, "mu0", &sim.truth_mu, window)?;
    let smax = sim
        .truth_sigma
        .values
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    export_image_pair(
        &truth_dir,
        "sigma0",
        &sim.truth_sigma,
        (-smax.max(1e-9), smax.max(1e-9)),
    )?;
    let mut bg = Image::zeros(sim.grid, crate::phantom::ImageKind::Mask);
    for (v, b) in bg.values.iter_mut().zip(sim.background.iter()) {
        *v = *b as u8 as f64;
    }
    export_image_pair(&truth_dir, "background", &bg, (0.0, 1.0))?;
    Ok(())
}

/// MBHC segmentation threshold: configured value or histogram pick.
pub fn mbhc_threshold(sim: &Simulated, base: &Image<f64>) -> Result<f64> {
    if let Some(t) = sim.cfg.mbhc.threshold {
        return Ok(t);
    }
    let bone = builtin_material::<f64>("bone")?;
    Ok(auto_threshold(base, bone.attenuation_at(sim.e0)?))
}

/// Reconstruct with one method, writing artifacts under
/// `out/recon/<method>`.
pub fn reconstruct_method(sim: &Simulated, method: &str, out: &Path) -> Result<Image<f64>> {
    let dir = out.join("recon").join(method);
    let window = mu_window(sim);
    match method {
        "fbp" => {
            let img = fbp(&sim.sino, &sim.grid);
            export_image_pair(&dir, "mu", &img, window)?;
            Ok(img)
        }
        "mbhc" => {
            let base = fbp(&sim.sino, &sim.grid);
            let threshold = mbhc_threshold(sim, &base)?;
            let img = mbhc_reconstruct(&sim.sino, &sim.grid, threshold, sim.cfg.mbhc.kappa);
            export_image_pair(&dir, "mu", &img, window)?;
            Ok(img)
        }
        "inr" => {
            let mask = RayMask::full(sim.geometry.clone());
            let fit = fit_network(sim, &mask)?;
            export_image_pair(&dir, "mu", &fit.mu, window)?;
            let smax = fit.sigma.values.iter().fold(1e-9_f64, |m, v| m.max(*v));
            export_image_pair(&dir, "sigma_tilde", &fit.sigma, (0.0, smax))?;
            io::write_loss_csv(dir.join("loss.csv"), &fit.losses)?;
            io::write_checkpoint(dir.join("net.ckpt"), &fit.params, fit.steps as u64)?;
            Ok(fit.mu)
        }
        other => Err(Error::Config(format!(
            "unknown method '{other}' (fbp, mbhc, inr)"
        ))),
    }
}

/// One network fit, reported in f64 regardless of the training scalar.
pub struct FitOutcome {
    pub mu: Image<f64>,
    pub sigma: Image<f64>,
    pub losses: Vec<f64>,
    pub params: MlpParams<f64>,
    pub steps: usize,
}

/// Train on the masked rays in the precision selected by the config.
pub fn fit_network(sim: &Simulated, mask: &RayMask<f64>) -> Result<FitOutcome> {
    if sim.cfg.train.precision == "f32" {
        let cfg = sim.cfg.build_train_config_as::<f32>();
        let sino = sim.sino.cast::<f32>();
        let mask32 = mask.cast::<f32>();
        let grid = sim.grid.cast::<f32>();
        let state = train(&sino, &mask32, &grid, &cfg)?;
        let (mu, sigma) = inr::render(&state.params, &grid);
        Ok(FitOutcome {
            mu: mu.cast(),
            sigma: sigma.cast(),
            losses: state.loss_history.iter().map(|l| *l as f64).collect(),
            params: state.params.cast(),
            steps: state.step,
        })
    } else {
        let cfg = sim.cfg.build_train_config();
        let state = train(&sim.sino, mask, &sim.grid, &cfg)?;
        let (mu, sigma) = inr::render(&state.params, &sim.grid);
        Ok(FitOutcome {
            mu,
            sigma,
            losses: state.loss_history.clone(),
            params: state.params,
            steps: state.step,
        })
    }
}

/// Full experiment: simulate, reconstruct with every configured method,
/// and report background errors against the rasterized truth.
pub fn run_pipeline(cfg: &RunConfig, opts: &PipelineOptions) -> Result<MetricsReport> {
    let cfg = resolve_config(cfg, opts);
    let out = opts.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    let sim = simulate(&cfg)?;
    write_simulation(&sim, &out)?;

    let mut entries = Vec::new();
    for method in &cfg.methods.run {
        let t0 = Instant::now();
        let img = reconstruct_method(&sim, method, &out)?;
        let runtime = t0.elapsed().as_secs_f64();
        entries.push(MethodMetrics {
            method: method.clone(),
            background_mae: mae(&img, &sim.truth_mu, &sim.background)?,
            background_mse: mse(&img, &sim.truth_mu, &sim.background)?,
            runtime_seconds: runtime,
        });
    }
    let report = MetricsReport {
        entries,
        background_mask_sha256: background_hash(&sim.background),
        hide_runtimes: cfg.deterministic,
    };
    std::fs::write(out.join("metrics.csv"), report.to_csv())?;
    std::fs::write(out.join("config.lock"), cfg.to_lock_string())?;
    Ok(report)
}

/// Range-space analysis products under `out/analysis`.
pub fn run_analyze(cfg: &RunConfig, opts: &PipelineOptions) -> Result<()> {
    let cfg = resolve_config(cfg, opts);
    let out = opts.out_dir.clone();
    let sim = simulate(&cfg)?;
    write_simulation(&sim, &out)?;
    let dir = out.join("analysis");
    std::fs::create_dir_all(&dir)?;

    let m = moment0(&sim.sino);
    let mut s = String::from("view,angle_rad,moment0\n");
    for (v, val) in m.iter().enumerate() {
        use std::fmt::Write;
        writeln!(s, "{v},{},{val}", sim.geometry.view_angle(v)).unwrap();
    }
    std::fs::write(dir.join("moment0.csv"), s)?;

    let dec = consistency_residual(&sim.sino, &sim.grid)?;
    io::write_sinogram(dir.join("p_range.sino"), &dec.p_range)?;
    io::write_sinogram(dir.join("p_perp.sino"), &dec.p_perp)?;
    io::write_sinogram_csv(dir.join("p_perp.csv"), &dec.p_perp)?;
    let art = crate::fbp::artifact_from_mismatch(&dec.p_perp, &sim.grid);
    let amax = art.values.iter().fold(1e-12_f64, |m, v| m.max(v.abs()));
    export_image_pair(&dir, "residual_artifact", &art, (-amax, amax))?;

    let ratio = dec.p_perp.l2_norm() / sim.sino.l2_norm();
    std::fs::write(
        dir.join("summary.txt"),
        format!(
            "perp_over_total_l2 = {ratio}\nmoment0_spread = {}\n",
            moment0_spread(&m)
        ),
    )?;
    Ok(())
}

/// Relative max-min spread of the per-view moments.
pub fn moment0_spread(m: &[f64]) -> f64 {
    let max = m.iter().cloned().fold(f64::MIN, f64::max);
    let min = m.iter().cloned().fold(f64::MAX, f64::min);
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        (max - min) / mean.abs()
    }
}

/// Photon-starvation comparison.
#[derive(Debug, Clone)]
pub struct StarvationReport {
    /// Non-metal MAE of the network trained on all rays.
    pub full_mae: f64,
    /// Non-metal MAE of the network trained on S_t, crowns composed back.
    pub starved_mae: f64,
    /// Mean absolute error inside each tooth (None for crowned teeth).
    pub per_tooth: Vec<Option<f64>>,
    pub max_error_tooth: Option<usize>,
    pub crown_adjacent_teeth: Vec<usize>,
    pub excluded_rays: usize,
    pub total_rays: usize,
}

/// Mean absolute error inside each tooth disk of a dental phantom;
/// crowned teeth are skipped.
pub fn per_tooth_errors(
    recon: &Image<f64>,
    truth: &Image<f64>,
    dental: &DentalPhantom<f64>,
) -> Vec<Option<f64>> {
    let grid = &recon.grid;
    dental
        .tooth_centers
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if dental.crown_indices.contains(&i) {
                return None;
            }
            let mut acc = 0.0;
            let mut n = 0usize;
            for iy in 0..grid.ny {
                for ix in 0..grid.nx {
                    let p = grid.pixel_center(ix, iy);
                    if p.sub(*c).norm() <= dental.tooth_radius {
                        acc += (recon.values[[iy, ix]] - truth.values[[iy, ix]]).abs();
                        n += 1;
                    }
                }
            }
            Some(acc / n.max(1) as f64)
        })
        .collect()
}

/// Train once on all rays and once on the metal-avoiding subset S_t,
/// compose segmented crowns into the starved result, and compare
/// non-metal errors.
pub fn run_starvation(cfg: &RunConfig, opts: &PipelineOptions) -> Result<StarvationReport> {
    let cfg = resolve_config(cfg, opts);
    let out = opts.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    let sim = simulate(&cfg)?;
    write_simulation(&sim, &out)?;

    let metal_name = &cfg.starvation.metal_material;
    let metal_subset = sim.scene.phantom.subset_by_material(metal_name);
    if metal_subset.is_empty() {
        return Err(Error::Config(format!(
            "starvation needs a scene containing '{metal_name}'"
        )));
    }
    let window = mu_window(&sim);

    let full_mask = RayMask::full(sim.geometry.clone());
    let st_mask = rays_through_mask(
        &metal_subset,
        &sim.geometry,
        cfg.starvation.chord_threshold_mm,
    );
    let total_rays = full_mask.count_included();
    let excluded_rays = total_rays - st_mask.count_included();

    let full_fit = fit_network(&sim, &full_mask)?;
    let full_mu = full_fit.mu;
    let full_dir = out.join("recon/inr_full");
    export_image_pair(&full_dir, "mu", &full_mu, window)?;
    io::write_loss_csv(full_dir.join("loss.csv"), &full_fit.losses)?;

    let st_fit = fit_network(&sim, &st_mask)?;
    let st_mu = st_fit.mu;

    // crowns segmented from the FBP image, painted back into the result
    let base = fbp(&sim.sino, &sim.grid);
    let threshold = mbhc_threshold(&sim, &base)?;
    let crown_mask = segment_metal(&base, threshold);
    let metal = builtin_material::<f64>(metal_name)?;
    let metal_value = match cfg.starvation.metal_value {
        Some(v) => v,
        None => metal.attenuation_at(sim.e0)?,
    };
    let st_composed = inr::compose_with_metal(&st_mu, &crown_mask, metal_value)?;
    let st_dir = out.join("recon/inr_starved");
    export_image_pair(&st_dir, "mu", &st_mu, window)?;
    export_image_pair(&st_dir, "mu_composed", &st_composed, window)?;
    io::write_loss_csv(st_dir.join("loss.csv"), &st_fit.losses)?;

    // non-metal region: everything outside the true metal support
    let truth_metal = crate::phantom::rasterize_mask(&metal_subset, &sim.grid);
    let mut non_metal = Array2::from_elem(sim.background.dim(), true);
    for (b, m) in non_metal.iter_mut().zip(truth_metal.values.iter()) {
        *b = *m == 0.0;
    }
    let full_mae = mae(&full_mu, &sim.truth_mu, &non_metal)?;
    let starved_mae = mae(&st_composed, &sim.truth_mu, &non_metal)?;

    let (per_tooth, max_error_tooth, crown_adjacent) = match &sim.scene.dental {
        Some(d) => {
            let errs = per_tooth_errors(&st_composed, &sim.truth_mu, d);
            let argmax = errs
                .iter()
                .enumerate()
                .filter_map(|(i, e)| e.map(|e| (i, e)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .map(|(i, _)| i);
            (errs, argmax, d.crown_adjacent_teeth())
        }
        None => (Vec::new(), None, Vec::new()),
    };

    let report = StarvationReport {
        full_mae,
        starved_mae,
        per_tooth,
        max_error_tooth,
        crown_adjacent_teeth: crown_adjacent,
        excluded_rays,
        total_rays,
    };

    let mut s = String::from("quantity,value\n");
    {
        use std::fmt::Write;
        writeln!(s, "full_nonmetal_mae,{}", report.full_mae).unwrap();
        writeln!(s, "starved_nonmetal_mae,{}", report.starved_mae).unwrap();
        writeln!(s, "excluded_rays,{}", report.excluded_rays).unwrap();
        writeln!(s, "total_rays,{}", report.total_rays).unwrap();
        if let Some(t) = report.max_error_tooth {
            writeln!(s, "max_error_tooth,{t}").unwrap();
        }
    }
    std::fs::write(out.join("starvation.csv"), s)?;
    if !report.per_tooth.is_empty() {
        let mut s = String::from("tooth,is_crown,is_crown_adjacent,starved_mae\n");
        for (i, e) in report.per_tooth.iter().enumerate() {
            use std::fmt::Write;
            writeln!(
                s,
                "{i},{},{},{}",
                e.is_none(),
                report.crown_adjacent_teeth.contains(&i),
                e.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
            )
            .unwrap();
        }
        std::fs::write(out.join("teeth.csv"), s)?;
    }
    std::fs::write(out.join("config.lock"), cfg.to_lock_string())?;
    Ok(report)
}

/// Stand-alone reconstruction from an existing simulated sinogram.
pub fn run_method_from_files(cfg: &RunConfig, opts: &PipelineOptions, method: &str) -> Result<()> {
    let cfg = resolve_config(cfg, opts);
    let out = opts.out_dir.clone();
    let sino_path = out.join("sinogram/poly.sino");
    if !sino_path.exists() {
        return Err(Error::Config(format!(
            "no sinogram at {} (run simulate or pipeline first)",
            sino_path.display()
        )));
    }
    let sino = io::read_sinogram(sino_path)?;
    let mut sim = simulate(&cfg)?;
    if sino.geometry != sim.geometry {
        return Err(Error::Config(
            "stored sinogram geometry differs from the config".into(),
        ));
    }
    sim.sino = sino;
    reconstruct_method(&sim, method, &out)?;
    Ok(())
}

/// Simulation stage of the CLI.
pub fn run_simulate(cfg: &RunConfig, opts: &PipelineOptions) -> Result<()> {
    let cfg = resolve_config(cfg, opts);
    let sim = simulate(&cfg)?;
    std::fs::create_dir_all(&opts.out_dir)?;
    write_simulation(&sim, &opts.out_dir)?;
    std::fs::write(opts.out_dir.join("config.lock"), cfg.to_lock_string())?;
    Ok(())
}
