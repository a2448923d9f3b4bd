use ndarray::Array2;
use std::time::Instant;

fn bench(m: usize, k: usize, n: usize, iters: usize) {
    let a = Array2::<f32>::from_elem((m, k), 1.001);
    let b = Array2::<f32>::from_elem((k, n), 0.999);
    let t0 = Instant::now();
    let mut acc = 0.0f32;
    for _ in 0..iters {
        let c = a.dot(&b);
        acc += c[[0, 0]];
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * (m * k * n * iters) as f64;
    println!("{}x{}x{} x{}: {:.3}s  {:.2} GFLOPS  (acc={})", m, k, n, iters, dt, flops / dt / 1e9, acc);
}

fn main() {
    bench(64, 64, 64, 20000);
    bench(16, 128, 128, 50000);
    bench(64, 192, 64, 20000);
    bench(256, 27, 16, 20000);
    bench(512, 128, 128, 2000);
}
