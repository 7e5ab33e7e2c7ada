use deconv_core::sampler::{run_chain, SamplerConfig};
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth = generate_truth_config(3, &mut rng).unwrap();
    let sc = SimScenario::new(200, 3, NoiseCase::WellSpecified, truth, 808).unwrap();
    let (data, _) = simulate(&sc).unwrap();
    let config = SamplerConfig { n_iter: 2000, burn_in: 1000, thin: 5, seed: 81, ..SamplerConfig::default() };
    let draws = run_chain(&data, &config).unwrap();
    println!("iter  acc_k0 acc_k1 acc_k2   lam0     lam1     lam2    acc_x scale_x  acc_s  eps_s    acc_at eps_at");
    for r in &draws.diagnostics {
        println!(
            "{:5} {:6.2} {:6.2} {:6.2} {:8.4} {:8.4} {:8.4} {:6.2} {:7.4} {:6.2} {:9.2e} {:6.2} {:8.4}",
            r.iter, r.accept_beta_kappa[0], r.accept_beta_kappa[1], r.accept_beta_kappa[2],
            r.lambda_kappa[0], r.lambda_kappa[1], r.lambda_kappa[2], r.accept_x, r.scale_x,
            r.accept_beta_s, r.eps_beta_s, r.accept_atoms, r.eps_atoms
        );
    }
}
