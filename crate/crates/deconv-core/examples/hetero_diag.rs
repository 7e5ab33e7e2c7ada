use deconv_core::sampler::{run_chain, Chain, SamplerConfig};
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth = generate_truth_config(3, &mut rng).unwrap();
    let sc = SimScenario::new(200, 3, NoiseCase::WellSpecified, truth, 808).unwrap();
    let (data, _sidecar) = simulate(&sc).unwrap();
    let config = SamplerConfig { n_iter: 2000, burn_in: 1000, thin: 5, seed: 81, ..SamplerConfig::default() };

    // Initial state.
    let chain = Chain::new(&data, &config).unwrap();
    let init = serde_json::to_value(&chain).unwrap();
    let scales: Vec<f64> = serde_json::from_value(init["scales"].clone()).unwrap_or_default();
    println!("scales {scales:?}");

    let fit = run_chain(&data, &config).unwrap();
    // Posterior-mean kappa_l and s2 on a grid of fit-scale x.
    let nkeep = fit.params.len();
    for l in 0..3 {
        println!("kappa_{l}: (x_fit, post-mean kappa, target 60*scale/x)");
        for xf in [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0] {
            let mut k = 0.0;
            for p in &fit.params { k += p.hetero.kappa(l, xf); }
            k /= nkeep as f64;
            let tgt = 60.0 * fit.scales[l] / xf;
            println!("  {xf:5.1} {k:10.3} {tgt:10.3}");
        }
    }
    println!("s2: (t=|x|/d, post-mean s2, target (t*d/150*scale_eff)^2 ~ rough)");
    for t in [1.0, 2.0, 3.0, 4.0, 5.0, 6.0] {
        let mut v = 0.0;
        for p in &fit.params { v += p.hetero.s2(t); }
        v /= nkeep as f64;
        // raw: s = |x_raw|/150; |x_raw| ~ |x_fit|/scale_mean; t = |x_fit|/3
        let sm: f64 = fit.scales.iter().sum::<f64>() / 3.0;
        let tgt = (t * 3.0 / sm / 150.0).powi(2);
        println!("  {t:4.1} {v:12.6} {tgt:12.6}");
    }
}
