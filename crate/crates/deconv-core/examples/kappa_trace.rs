use deconv_core::sampler::{Chain, SamplerConfig};
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth = generate_truth_config(3, &mut rng).unwrap();
    let sc = SimScenario::new(200, 3, NoiseCase::WellSpecified, truth, 808).unwrap();
    let (data, _) = simulate(&sc).unwrap();
    let config = SamplerConfig { n_iter: 6000, burn_in: 3000, thin: 5, seed: 81, ..SamplerConfig::default() };
    let mut chain = Chain::new(&data, &config).unwrap();
    println!("init hyper sigma2_kappa {:?}", chain.params.hyper.sigma2_kappa);
    let kap = |c: &Chain, l: usize, x: f64| c.params.hetero.kappa(l, x);
    println!("iter  k0(4) k0(8) k0(12) | k1(4) k1(8) k1(12) | k2(4) k2(8) k2(12) | s2(3)");
    for it in 0..6000 {
        chain.step().unwrap();
        if (it + 1) % 500 == 0 {
            print!("{:5}", it + 1);
            for l in 0..3 {
                print!(" | {:7.1} {:7.1} {:7.1}", kap(&chain, l, 4.0), kap(&chain, l, 8.0), kap(&chain, l, 12.0));
            }
            println!(" | {:9.5}", chain.params.hetero.s2(3.0));
        }
    }
}
