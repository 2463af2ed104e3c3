use lrtc_core::metrics;
use lrtc_core::solver::{run, Model, SolverConfig};
use lrtc_core::tensor::{synth_lowrank, ObservationMask};

fn main() {
    let dims = vec![32, 32, 16];
    let ranks = vec![4, 4, 4];
    for sr in [0.05, 0.10] {
        for seed in 0..2u64 {
            let truth = synth_lowrank(&dims, &ranks, 600 + seed, true).unwrap();
            let mask = ObservationMask::random(dims.clone(), sr, 700 + seed).unwrap();
            let f = truth.project(&mask).unwrap();
            let base = metrics::psnr(&truth, &f).unwrap().1;
            for model in [Model::One, Model::Two] {
                for max_outer in [500usize, 3000] {
                    let mut cfg = SolverConfig::new(model, ranks.clone());
                    cfg.max_outer = max_outer;
                    let out = run(&f, &mask, &cfg).unwrap();
                    let p = metrics::psnr(&truth, &out.tensor).unwrap().1;
                    let last = out.trace.last().unwrap();
                    println!(
                        "sr {:.2} seed {} model {:?} cap {:5}: iters {:4} rel {:.2e} psnr {:6.2} (base {:5.2})",
                        sr, seed, model, max_outer, last.iter, last.rel_change, p, base
                    );
                }
            }
        }
    }
}
