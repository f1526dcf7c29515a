use polytomo::config::RunConfig;
use polytomo::inr::{grad_batch, init_siren, TrainConfig};
use polytomo::pipeline::simulate;
use polytomo::projector::RayMask;
use std::time::Instant;

fn main() {
    let text = r#"
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
"#;
    let cfg = RunConfig::from_str(text).unwrap();
    let t0 = Instant::now();
    let sim = simulate(&cfg).unwrap();
    println!("simulate: {:.2}s", t0.elapsed().as_secs_f64());
    let mask = RayMask::full(sim.geometry.clone());
    let rays = mask.included_rays();
    let params = init_siren::<f64>(7, 30.0);
    for (rpb, spr) in [(1024usize, 128usize), (2048, 256), (512, 128)] {
        let tc = TrainConfig {
            samples_per_ray: spr,
            rays_per_batch: rpb,
            jitter: true,
            ..TrainConfig::default()
        };
        let batch: Vec<(usize, usize)> = rays
            .iter()
            .filter(|(_, b)| *b > 60 && *b < 200)
            .take(rpb)
            .cloned()
            .collect();
        let t0 = Instant::now();
        let n_iter = 3;
        for _ in 0..n_iter {
            let (l, g) = grad_batch(&params, &sim.sino, &mask, &batch, &sim.grid, &tc).unwrap();
            std::hint::black_box((l, g));
        }
        let dt = t0.elapsed().as_secs_f64() / n_iter as f64;
        let flops = rpb as f64 * spr as f64 * 220e3;
        println!(
            "batch {rpb}x{spr}: {:.3}s/batch  ({:.1} GFLOP/s)",
            dt,
            flops / dt / 1e9
        );
    }
}
