use ndarray::Array2;
use std::time::Instant;

#[test]
#[ignore]
fn matmul_throughput() {
    for n in [64usize, 128, 256, 512] {
        let a = Array2::<f64>::from_elem((n, n), 1.01);
        let b = Array2::<f64>::from_elem((n, n), 0.99);
        let reps = (1usize << 28) / (n * n * n) + 1;
        let t = Instant::now();
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += a.dot(&b)[[0, 0]];
        }
        let dt = t.elapsed().as_secs_f64();
        let gflops = (2.0 * (n * n * n * reps) as f64) / dt / 1e9;
        println!("n={n} reps={reps} {gflops:.2} GFLOP/s (acc {acc:.1})");
    }
}
