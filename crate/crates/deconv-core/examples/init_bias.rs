//! Ratio of the init recipe's pointwise kappa targets to the true kappa.
use deconv_core::dist::vmf::vmf_mle;
use deconv_core::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let truth = generate_truth_config(3, &mut rng).unwrap();
    let sc = SimScenario::new(2000, 3, NoiseCase::WellSpecified, truth, 808).unwrap();
    let (data, sidecar) = simulate(&sc).unwrap();
    let xs = sidecar.x_vectors();
    let mut ratios = Vec::new();
    for (i, subject) in data.subjects.iter().enumerate() {
        let dirs: Vec<_> = subject.replicates.iter().map(|w| w / w.norm()).collect();
        let (mu, c) = vmf_mle(&dirs).unwrap();
        let xt = &xs[i] / xs[i].norm();
        for l in 0..3 {
            if mu[l] > 0.0 && xt[l] > 0.05 {
                let target = c * mu[l] / xt[l];
                let true_k = 60.0 / xs[i][l];
                ratios.push(target / true_k);
            }
        }
    }
    ratios.sort_by(f64::total_cmp);
    let n = ratios.len();
    println!("n={n} ratio target/true: p25 {:.3} median {:.3} p75 {:.3} mean {:.3}",
        ratios[n / 4], ratios[n / 2], ratios[3 * n / 4],
        ratios.iter().sum::<f64>() / n as f64);
}
