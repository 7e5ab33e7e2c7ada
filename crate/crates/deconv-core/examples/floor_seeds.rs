use deconv_core::data::{ReplicateDataset, Subject};
use deconv_core::evaluate;
use deconv_core::sampler::{fit_naive, SamplerConfig};
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    for seed in [11u64, 22, 33, 44, 55, 66, 77] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = generate_truth_config(3, &mut rng).unwrap();
        let sc = SimScenario::new(200, 3, NoiseCase::WellSpecified, truth, seed).unwrap();
        let (_data, sidecar) = simulate(&sc).unwrap();
        let xs = sidecar.x_vectors();
        let subjects: Vec<Subject> = xs.iter().enumerate()
            .map(|(i, x)| Subject { id: (i + 1).to_string(), replicates: vec![x.clone(); 3] })
            .collect();
        let exact = ReplicateDataset { d: 3, subjects };
        let config = SamplerConfig { n_iter: 2000, burn_in: 1000, thin: 5, seed, ..SamplerConfig::default() };
        let fit = fit_naive(&exact, &config).unwrap();
        let truth = &sidecar.scenario.truth;
        let g: Vec<f64> = (0..=240).map(|i| 6.0 * i as f64 / 240.0).collect();
        let mut ises = [0.0; 3];
        for l in 0..3 {
            let f0: Vec<f64> = g.iter().map(|&x| truth.marginal(l).unwrap().pdf(x)).collect();
            let e = evaluate::estimate_marginal_density(&fit, l, &g).unwrap().mean;
            ises[l] = evaluate::ise_marginal(&f0, &e, &g).unwrap();
        }
        println!("seed {seed}: floors {:.3e} {:.3e} {:.3e}", ises[0], ises[1], ises[2]);
    }
}
