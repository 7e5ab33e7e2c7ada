use deconv_core::evaluate;
use deconv_core::sampler::{fit_naive, run_chain, SamplerConfig};
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth = generate_truth_config(3, &mut rng).unwrap();
    println!("truth: {truth:#?}");
    let sc = SimScenario::new(200, 3, NoiseCase::WellSpecified, truth, 808).unwrap();
    let (data, sidecar) = simulate(&sc).unwrap();
    let config = SamplerConfig { n_iter: 2000, burn_in: 1000, thin: 5, seed: 81, ..SamplerConfig::default() };
    let fit = run_chain(&data, &config).unwrap();
    let naive = fit_naive(&data, &config).unwrap();

    // latent recovery: posterior mean x vs subject mean vs truth
    let xt = sidecar.x_vectors();
    let n = xt.len();
    let mut err_fit = 0.0;
    let mut err_naive = 0.0;
    for i in 0..n {
        let mut pm = nalgebra::DVector::zeros(3);
        for l in &fit.latent {
            pm += nalgebra::DVector::from_fn(3, |k, _| l.x[i][k] / fit.scales[k]);
        }
        pm /= fit.latent.len() as f64;
        err_fit += (&pm - &xt[i]).norm();
        err_naive += (data.subjects[i].mean() - &xt[i]).norm();
    }
    println!("mean latent err: fit {:.4}  subject-mean {:.4}", err_fit / n as f64, err_naive / n as f64);

    // log-post trace: early/late
    let t = &fit.log_post_trace;
    println!("logpost: first {:.2} @200 {:.2} @1000 {:.2} @1500 {:.2} last {:.2}",
        t[0], t[199], t[999], t[1499], t[t.len()-1]);

    // marginal densities on grid vs truth, fit and naive
    let truth = &sidecar.scenario.truth;
    let grid: Vec<f64> = (0..=60).map(|i| 6.0 * i as f64 / 60.0).collect();
    for l in 0..3 {
        let f0: Vec<f64> = grid.iter().map(|&x| truth.marginal(l).unwrap().pdf(x)).collect();
        let ef = evaluate::estimate_marginal_density(&fit, l, &grid).unwrap().mean;
        let en = evaluate::estimate_marginal_density(&naive, l, &grid).unwrap().mean;
        println!("marginal {l}: ise_fit {:.4e} ise_naive {:.4e}",
            evaluate::ise_marginal(&f0, &ef, &grid).unwrap(),
            evaluate::ise_marginal(&f0, &en, &grid).unwrap());
        for (j, &x) in grid.iter().enumerate().step_by(6) {
            println!("  x={x:4.1} f0={:8.4} fit={:8.4} naive={:8.4}", f0[j], ef[j], en[j]);
        }
    }
    // hetero params: truth vs posterior mean of beta (just print last draw)
    let last = fit.params.last().unwrap();
    println!("beta_s last: {:?}", last.hetero.beta_s);
}
