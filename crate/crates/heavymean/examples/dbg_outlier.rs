use heavymean::centrality::*;
use nalgebra::DVector;

fn main() {
    let z: Vec<_> = (0..4).map(|i| DVector::from_vec(vec![i as f64 * 0.1])).collect();
    let mut inst = CentralityInstance::new(z, DVector::from_vec(vec![0.0]), 0.5).unwrap();
    inst.z[2] = DVector::from_vec(vec![1e6]);
    let (problem, _) = build_centrality_sdp(&inst).unwrap();
    match problem.solve(1e-8) {
        Ok(sol) => println!(
            "status {:?} obj {} gap {:e} rp {:e} rd {:e} iters {} perturb {:?}",
            sol.status, sol.objective, sol.duality_gap, sol.primal_residual, sol.dual_residual, sol.iterations, sol.perturbation
        ),
        Err(e) => println!("error: {e}"),
    }
}
