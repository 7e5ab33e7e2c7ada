use deconv_core::sampler::{run_chain, Chain, SamplerConfig};
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let truth = generate_truth_config(2, &mut rng).unwrap();
    let sc = SimScenario::new(4, 3, NoiseCase::WellSpecified, truth, 606).unwrap();
    let (data, _) = simulate(&sc).unwrap();
    let base = SamplerConfig {
        n_iter: 24_000,
        burn_in: 4_000,
        thin: 2,
        angle_grid_size: 15,
        disable_likelihood: true,
        seed: 61,
        ..SamplerConfig::default()
    };
    let probe = Chain::new(&data, &base).unwrap();
    let h = &probe.params.hyper;
    println!("mu_kappa[0] = {:?}", h.mu_kappa[0]);
    println!("mu_kappa[1] = {:?}", h.mu_kappa[1]);
    println!("sigma2_kappa = {:?}", h.sigma2_kappa);
    println!("mu_s = {:?}  sigma2_s = {}", h.mu_s, h.sigma2_s);
    let sd_s = h.sigma2_s.sqrt();
    let sd_kappa = h.sigma2_kappa.iter().fold(f64::MAX, |a, &v| a.min(v.sqrt()));
    let config = SamplerConfig {
        hmc_step_beta_s: 0.05 * sd_s,
        hmc_step_atoms: 0.1,
        mh_scale_beta_kappa: 0.5 * sd_kappa,
        ..base
    };
    let draws = run_chain(&data, &config).unwrap();
    for r in draws.diagnostics.iter().step_by(20) {
        println!("iter {}: acc_kappa {:?} lambda {:?}", r.iter, r.accept_beta_kappa, r.lambda_kappa);
    }
    let last = draws.params.last().unwrap();
    println!("final beta_kappa[1] = {:?}", last.hetero.beta_kappa[1]);
}
