use deconv_core::evaluate;
use deconv_core::sampler::{fit_naive, run_chain, SamplerConfig};
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_iter: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(10000);
    let burn: usize = n_iter / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth = generate_truth_config(3, &mut rng).unwrap();
    let sc = SimScenario::new(200, 3, NoiseCase::WellSpecified, truth, 808).unwrap();
    let (data, sidecar) = simulate(&sc).unwrap();
    let config = SamplerConfig { n_iter, burn_in: burn, thin: 5, seed: 81, ..SamplerConfig::default() };
    let fit = run_chain(&data, &config).unwrap();
    let naive = fit_naive(&data, &config).unwrap();

    let xt = sidecar.x_vectors();
    let n = xt.len();
    let (mut ef, mut en) = (0.0, 0.0);
    for i in 0..n {
        let mut pm = nalgebra::DVector::zeros(3);
        for l in &fit.latent {
            pm += nalgebra::DVector::from_fn(3, |k, _| l.x[i][k] / fit.scales[k]);
        }
        pm /= fit.latent.len() as f64;
        ef += (&pm - &xt[i]).norm();
        en += (data.subjects[i].mean() - &xt[i]).norm();
    }
    println!("n_iter={n_iter}: latent err fit {:.4} subj-mean {:.4}", ef / n as f64, en / n as f64);
    let t = &fit.log_post_trace;
    println!("logpost @burn {:.2} last {:.2}", t[burn - 1], t[t.len() - 1]);

    let truth = &sidecar.scenario.truth;
    let grid: Vec<f64> = (0..=240).map(|i| 6.0 * i as f64 / 240.0).collect();
    for l in 0..3 {
        let f0: Vec<f64> = grid.iter().map(|&x| truth.marginal(l).unwrap().pdf(x)).collect();
        let e = evaluate::estimate_marginal_density(&fit, l, &grid).unwrap().mean;
        let nv = evaluate::estimate_marginal_density(&naive, l, &grid).unwrap().mean;
        println!("marginal {l}: ise_fit {:.4e} ise_naive {:.4e}",
            evaluate::ise_marginal(&f0, &e, &grid).unwrap(),
            evaluate::ise_marginal(&f0, &nv, &grid).unwrap());
    }
    // joint
    let pts = sidecar.x_vectors();
    let f0: Vec<f64> = pts.iter().map(|p| truth.log_density(p).unwrap().exp()).collect();
    let est = evaluate::estimate_density(&fit, &pts, false).unwrap().mean;
    let estn = evaluate::estimate_density(&naive, &pts, false).unwrap().mean;
    println!("joint ise fit {:.4e} naive {:.4e}",
        evaluate::ise_joint(&f0, &est, &f0).unwrap(),
        evaluate::ise_joint(&f0, &estn, &f0).unwrap());
}
