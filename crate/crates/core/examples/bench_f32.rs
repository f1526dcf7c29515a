use polytomo::inr::{forward_cached, backward, init_siren, MlpGrad};
use ndarray::Array2;
use std::time::Instant;

fn bench<T: polytomo::Real>(name: &str) {
    let params = init_siren::<T>(7, T::c(30.0));
    let n = 8192;
    let mut flat = Vec::with_capacity(n * 2);
    for i in 0..(n * 2) {
        flat.push(T::c((i as f64 * 0.001).sin()));
    }
    let pts = Array2::from_shape_vec((n, 2), flat).unwrap();
    let mut grad = MlpGrad::zeros_like(&params);
    let t0 = Instant::now();
    let iters = 8;
    for _ in 0..iters {
        let (out, cache) = forward_cached(&params, &pts);
        backward(&params, &cache, &out, &mut grad);
    }
    let dt = t0.elapsed().as_secs_f64() / iters as f64;
    let flops = n as f64 * 220e3;
    println!("{name}: {:.3}s for {n} pts ({:.1} GFLOP/s single-thread)", dt, flops / dt / 1e9);
}

fn main() {
    bench::<f64>("f64");
    bench::<f32>("f32");
}
