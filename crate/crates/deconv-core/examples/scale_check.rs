use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    for seed in [808u64, 909] {
        let case = if seed == 808 { NoiseCase::WellSpecified } else { NoiseCase::MisSpecified };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = generate_truth_config(3, &mut rng).unwrap();
        let sc = SimScenario::new(200, 3, case, truth, seed).unwrap();
        let (data, sidecar) = simulate(&sc).unwrap();
        let d = 3;
        let mut wmax = vec![0.0f64; d];
        for s in &data.subjects {
            for w in &s.replicates {
                for l in 0..d { wmax[l] = wmax[l].max(w[l]); }
            }
        }
        let scales: Vec<f64> = wmax.iter().map(|&m| 20.0 / m).collect();
        let mut xmax = vec![0.0f64; d];
        for x in sidecar.x_vectors() {
            for l in 0..d { xmax[l] = xmax[l].max(x[l] * scales[l]); }
        }
        println!("seed {seed}: w_max {wmax:?} scales {scales:?} x_fit_max {xmax:?}");
    }
}
