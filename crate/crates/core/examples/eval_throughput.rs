//! Time one full loss-and-gradient evaluation of the desk-scale problem for a
//! few chunk sizes.

use std::time::Instant;

use arcpinn::config::RunConfig;
use arcpinn::mlp::init_params;
use arcpinn::sampling::build_collocation_set;
use arcpinn::train::TrainingProblem;

fn run<S: arcpinn::Real>(chunk: usize) {
    let cfg = RunConfig::desk_scale();
    let set = build_collocation_set(&cfg).unwrap();
    let problem = TrainingProblem::<S>::new(&cfg, &set, chunk).unwrap();
    let params = init_params::<S>(0, &cfg.network.topology(), cfg.network.init_gain);
    let _ = problem.evaluate(&params).unwrap();
    let start = Instant::now();
    for _ in 0..5 {
        let _ = problem.evaluate(&params).unwrap();
    }
    println!("{} chunk {chunk}: {:.3} s/eval", S::NAME, start.elapsed().as_secs_f64() / 5.0);
}

fn main() {
    for chunk in [64, 128, 256, 512] {
        run::<f32>(chunk);
    }
    run::<f64>(256);
}
