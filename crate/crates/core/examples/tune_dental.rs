use polytomo::config::RunConfig;
use polytomo::fbp::fbp;
use polytomo::mbhc::{auto_threshold, mbhc_reconstruct};
use polytomo::metrics::mae;
use polytomo::physics::builtin_material;
use polytomo::pipeline::{fit_network, simulate};
use polytomo::projector::RayMask;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let batch: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1024);
    let spr: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(128);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(5e-4);
    let text = format!(
        r#"
seed = 7
[grid]
nx = 128
ny = 128
pixel_mm = 0.4
[scene]
kind = "dental"
[geometry]
n_views = 180
n_bins = 256
[noise]
enabled = true
[train]
precision = "f32"
samples_per_ray = {spr}
rays_per_batch = {batch}
max_steps = {steps}
learning_rate = {lr}
jitter = true
stop_loss = 4e-3
"#
    );
    let cfg = RunConfig::from_str(&text).unwrap();
    let sim = simulate(&cfg).unwrap();

    let t0 = Instant::now();
    let base = fbp(&sim.sino, &sim.grid);
    let fbp_mae = mae(&base, &sim.truth_mu, &sim.background).unwrap();
    println!("fbp: mae={fbp_mae:.6} ({:.1}s)", t0.elapsed().as_secs_f64());

    let bone = builtin_material::<f64>("bone").unwrap();
    let floor = bone.attenuation_at(sim.e0).unwrap();
    let auto = auto_threshold(&base, floor);
    println!("auto threshold = {auto:.4} (bone floor {floor:.4})");
    for kappa in [0.25, 0.5, 1.0, 2.0, 3.0, 5.0] {
        let img = mbhc_reconstruct(&sim.sino, &sim.grid, auto, kappa);
        let m = mae(&img, &sim.truth_mu, &sim.background).unwrap();
        println!("mbhc kappa={kappa}: mae={m:.6}");
    }

    let t0 = Instant::now();
    let mask = RayMask::full(sim.geometry.clone());
    let fit = fit_network(&sim, &mask).unwrap();
    let inr_mae = mae(&fit.mu, &sim.truth_mu, &sim.background).unwrap();
    let n = fit.losses.len();
    let tail = &fit.losses[n.saturating_sub(50)..];
    println!(
        "inr steps={} batch={batch} spr={spr} lr={lr}: mae={inr_mae:.6} last-loss={:.5} ({:.1}s)",
        n,
        tail.iter().sum::<f64>() / tail.len() as f64,
        t0.elapsed().as_secs_f64()
    );
    println!("ratio inr/fbp = {:.3}", inr_mae / fbp_mae);
}
