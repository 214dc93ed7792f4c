use heavymean::centrality::*;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Instant;

fn main() {
    let mut rng = StdRng::seed_from_u64(2024);
    let t0 = Instant::now();
    // A2-style: 100 random matrices k<=8 d<=5
    let mut worst_lo = f64::INFINITY;
    let mut worst_hi = -f64::INFINITY;
    for _ in 0..100 {
        let k = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=5);
        let a = DMatrix::from_fn(k, d, |_, _| rng.gen_range(-2.0..2.0));
        let exact = norm21_exact(&a).unwrap();
        let sdp = norm21_sdp(&a, 1e-8).unwrap();
        worst_lo = worst_lo.min(sdp - (exact - 1e-5));
        worst_hi = worst_hi.max(sdp - (nesterov_constant() * exact + 1e-5));
    }
    println!("norm21 sandwich: min slack lower {worst_lo:.2e}, max over upper {worst_hi:.2e}, elapsed {:?}", t0.elapsed());

    // A3-style: 100 random centrality instances d<=2 k<=8
    let t1 = Instant::now();
    let mut worst = f64::INFINITY;
    for trial in 0..100 {
        let k = rng.gen_range(1..=8);
        let d = rng.gen_range(1..=2);
        let z: Vec<DVector<f64>> = (0..k)
            .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0)))
            .collect();
        let x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let r = rng.gen_range(0.1..2.0);
        let inst = CentralityInstance::new(z, x, r).unwrap();
        let oracle = centrality_oracle_exact(&inst).unwrap();
        match solve_centrality_sdp(&inst, 1e-8) {
            Ok(v) => {
                worst = worst.min(v.value - (oracle - 2e-6));
                if v.value < oracle - 2e-6 {
                    println!("VIOLATION trial {trial}: sdp {} oracle {}", v.value, oracle);
                }
            }
            Err(e) => println!("solver error trial {trial}: {e}"),
        }
    }
    println!("centrality dominance: min slack {worst:.2e}, elapsed {:?}", t1.elapsed());
}
