//! Scoring fitted models: posterior density estimates, integrated squared
//! errors, harmonic-mean Bayes factors, and the dimension-scaling study.
//!
//! Density estimates are posterior means of per-draw densities. Draws are
//! produced on rescaled data (`w_fit = scales ∘ w_raw`), so a density in
//! original units is `f_orig(p) = f_fit(scales ∘ p) · ∏_ℓ scales_ℓ`; all
//! functions here take and return original-unit quantities.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::copula::CorrelationCache;
use crate::data::ReplicateDataset;
use crate::error::{Error, Result};
use crate::sampler::{run_chain, PosteriorDraws, SamplerConfig};
use crate::simulate::{generate_truth_config, simulate, NoiseCase, SimScenario};

/// Posterior summary of the latent density at a fixed set of points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// Evaluation points (original units); one inner vector per point.
    pub points: Vec<Vec<f64>>,
    /// Posterior-mean density at each point.
    pub mean: Vec<f64>,
    /// Per-draw densities, `per_draw[draw][point]`, if retained.
    pub per_draw: Option<Vec<Vec<f64>>>,
}

/// Posterior-mean joint density at `points` (original units).
///
/// Points outside a draw's support score density 0 under that draw.
pub fn estimate_density(
    draws: &PosteriorDraws,
    points: &[DVector<f64>],
    keep_per_draw: bool,
) -> Result<DensityEstimate> {
    if draws.params.is_empty() {
        return Err(Error::validation("estimate_density: no retained draws"));
    }
    if points.is_empty() {
        return Err(Error::validation("estimate_density: no evaluation points"));
    }
    let d = draws.scales.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::domain("estimate_density: point dimension mismatch"));
    }
    let scale_prod: f64 = draws.scales.iter().product();
    let mut mean = vec![0.0; points.len()];
    let mut per_draw = Vec::new();
    for params in &draws.params {
        let model = params.density_model()?;
        let cache = CorrelationCache::from_angles(&model.angles)?;
        let mut row = Vec::with_capacity(points.len());
        for (j, p) in points.iter().enumerate() {
            let x_fit = DVector::from_fn(d, |l, _| p[l] * draws.scales[l]);
            let ld = model.log_density_with_cache(&cache, &x_fit)?;
            let val = if ld.is_finite() {
                ld.exp() * scale_prod
            } else {
                0.0
            };
            mean[j] += val;
            if keep_per_draw {
                row.push(val);
            }
        }
        if keep_per_draw {
            per_draw.push(row);
        }
    }
    let n = draws.params.len() as f64;
    for v in &mut mean {
        *v /= n;
    }
    Ok(DensityEstimate {
        points: points.iter().map(|p| p.as_slice().to_vec()).collect(),
        mean,
        per_draw: if keep_per_draw { Some(per_draw) } else { None },
    })
}

/// Posterior-mean marginal density of dimension `l` on `grid` (original
/// units).
pub fn estimate_marginal_density(
    draws: &PosteriorDraws,
    l: usize,
    grid: &[f64],
) -> Result<DensityEstimate> {
    if draws.params.is_empty() {
        return Err(Error::validation("estimate_marginal_density: no draws"));
    }
    if l >= draws.scales.len() {
        return Err(Error::domain("estimate_marginal_density: dimension out of range"));
    }
    let scale = draws.scales[l];
    let mut mean = vec![0.0; grid.len()];
    for params in &draws.params {
        let model = params.density_model()?;
        let marg = model.marginal(l)?;
        for (j, &t) in grid.iter().enumerate() {
            let lp = marg.logpdf(t * scale);
            if lp.is_finite() {
                mean[j] += lp.exp() * scale;
            }
        }
    }
    let n = draws.params.len() as f64;
    for v in &mut mean {
        *v /= n;
    }
    Ok(DensityEstimate {
        points: grid.iter().map(|&t| vec![t]).collect(),
        mean,
        per_draw: None,
    })
}

/// Monte Carlo integrated squared error over sample points `x_m ~ p₀`:
/// `Σ_m {f(x_m) − f̂(x_m)}² / p₀(x_m) / M`.
pub fn ise_joint(true_vals: &[f64], est_vals: &[f64], p0_vals: &[f64]) -> Result<f64> {
    let m = true_vals.len();
    if m == 0 || est_vals.len() != m || p0_vals.len() != m {
        return Err(Error::domain("ise_joint: input vectors must be aligned and nonempty"));
    }
    if p0_vals.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::domain("ise_joint: p0 values must be positive"));
    }
    let sum: f64 = true_vals
        .iter()
        .zip(est_vals)
        .zip(p0_vals)
        .map(|((&f, &fh), &p0)| (f - fh) * (f - fh) / p0)
        .sum();
    Ok(sum / m as f64)
}

/// Riemann integrated squared error on a sorted grid:
/// `Σ_{i≥1} {f(x_i) − f̂(x_i)}² (x_i − x_{i−1})`.
pub fn ise_marginal(true_vals: &[f64], est_vals: &[f64], grid: &[f64]) -> Result<f64> {
    let n = grid.len();
    if n < 2 || true_vals.len() != n || est_vals.len() != n {
        return Err(Error::domain("ise_marginal: need an aligned grid of length >= 2"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("ise_marginal: grid must be strictly increasing"));
    }
    let mut sum = 0.0;
    for i in 1..n {
        let delta = grid[i] - grid[i - 1];
        let diff = true_vals[i] - est_vals[i];
        sum += diff * diff * delta;
    }
    Ok(sum)
}

/// Median of a list of ISEs — the cross-replication summary.
pub fn mise(ises: &[f64]) -> Result<f64> {
    if ises.is_empty() {
        return Err(Error::domain("mise: empty input"));
    }
    let mut v = ises.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Harmonic-mean log marginal likelihood from posterior log-likelihood
/// draws, with a delta-method Monte Carlo standard error:
/// `log m̂ = −log mean(exp(−ℓ))`, computed with max-shift stabilization.
pub fn harmonic_log_ml(loglik_draws: &[f64]) -> Result<(f64, f64)> {
    const MIN_DRAWS: usize = 100;
    if loglik_draws.len() < MIN_DRAWS {
        return Err(Error::domain(format!(
            "harmonic_log_ml: need at least {MIN_DRAWS} draws, got {}",
            loglik_draws.len()
        )));
    }
    if loglik_draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("harmonic_log_ml: non-finite log-likelihood draw"));
    }
    let n = loglik_draws.len() as f64;
    // u_i = exp(−ℓ_i − shift) with shift = max(−ℓ) keeps the sum in range.
    let shift = loglik_draws.iter().map(|&v| -v).fold(f64::NEG_INFINITY, f64::max);
    let u: Vec<f64> = loglik_draws.iter().map(|&v| (-v - shift).exp()).collect();
    let mean_u = u.iter().sum::<f64>() / n;
    let var_u = u.iter().map(|&x| (x - mean_u) * (x - mean_u)).sum::<f64>() / (n - 1.0);
    let log_ml = -(shift + mean_u.ln());
    let se = (var_u / n).sqrt() / mean_u;
    Ok((log_ml, se))
}

/// Bayes factor `B = m̂_A / m̂_B` via the harmonic-mean identity.
pub fn bayes_factor_harmonic(loglik_a: &[f64], loglik_b: &[f64]) -> Result<f64> {
    let (la, _) = harmonic_log_ml(loglik_a)?;
    let (lb, _) = harmonic_log_ml(loglik_b)?;
    Ok((la - lb).exp())
}

/// Least-squares slope of `log t` on `log d`, with a 95% normal-theory
/// confidence interval on the slope.
pub fn log_log_slope(d_list: &[usize], seconds: &[f64]) -> Result<(f64, (f64, f64))> {
    let n = d_list.len();
    if n < 3 || seconds.len() != n {
        return Err(Error::domain("log_log_slope: need at least 3 aligned points"));
    }
    if seconds.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::domain("log_log_slope: timings must be positive"));
    }
    let xs: Vec<f64> = d_list.iter().map(|&d| (d as f64).ln()).collect();
    let ys: Vec<f64> = seconds.iter().map(|&t| t.ln()).collect();
    let xbar = xs.iter().sum::<f64>() / n as f64;
    let ybar = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let se = if n > 2 {
        (rss / (n as f64 - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, (slope - 1.96 * se, slope + 1.96 * se)))
}

/// Result of the dimension-scaling study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingResult {
    pub d_list: Vec<usize>,
    pub seconds: Vec<f64>,
    pub slope: f64,
    pub slope_ci: (f64, f64),
}

/// Time full fits at each dimension in `d_list` on freshly simulated
/// well-specified data (`n` subjects, `m` replicates, `iters` iterations)
/// and regress log runtime on log dimension.
pub fn runtime_scaling(
    d_list: &[usize],
    n: usize,
    m: usize,
    iters: usize,
    seed: u64,
) -> Result<ScalingResult> {
    if d_list.len() < 3 {
        return Err(Error::domain("runtime_scaling: need at least 3 dimensions"));
    }
    let mut seconds = Vec::with_capacity(d_list.len());
    for (k, &d) in d_list.iter().enumerate() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
            seed.wrapping_add(k as u64),
        );
        let truth = generate_truth_config(d, &mut rng)?;
        let scenario = SimScenario::new(n, m, NoiseCase::WellSpecified, truth, seed)?;
        let (data, _) = simulate(&scenario)?;
        let config = SamplerConfig {
            n_iter: iters,
            burn_in: iters / 2,
            thin: 1,
            seed,
            ..SamplerConfig::default()
        };
        let start = std::time::Instant::now();
        let _ = run_chain(&data, &config)?;
        seconds.push(start.elapsed().as_secs_f64());
    }
    let (slope, slope_ci) = log_log_slope(d_list, &seconds)?;
    Ok(ScalingResult {
        d_list: d_list.to_vec(),
        seconds,
        slope,
        slope_ci,
    })
}

/// Per-draw measurement log-likelihoods of a dataset, for Bayes factors.
///
/// Each retained draw contributes `log p(data | hetero, x)` summed over
/// subjects and replicates; draws whose state falls outside the
/// approximation regime are rejected as non-finite by
/// [`bayes_factor_harmonic`].
pub fn loglik_per_draw(draws: &PosteriorDraws, data: &ReplicateDataset) -> Result<Vec<f64>> {
    if draws.params.len() != draws.latent.len() {
        return Err(Error::domain("loglik_per_draw: params/latent length mismatch"));
    }
    let scaled = data.scaled(&draws.scales);
    draws
        .params
        .iter()
        .zip(&draws.latent)
        .map(|(p, l)| crate::likelihood::measurement_loglik(&p.hetero, &l.x, &scaled))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{CorrelationAngles, JointDensityModel};
    use crate::likelihood::{HeteroFuncs, Hyper, LatentState, ModelParams};
    use crate::spline::CubicBasis;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dummy_params(atoms_mu: Vec<f64>, weights: Vec<Vec<f64>>) -> ModelParams {
        let d = weights.len();
        let k = atoms_mu.len();
        let basis = CubicBasis::new(0.0, 10.0, 10).unwrap();
        let nb = basis.len();
        let hetero = HeteroFuncs::new(
            vec![vec![30.0; nb]; d],
            vec![0.001; nb],
            basis,
        )
        .unwrap();
        ModelParams {
            hetero,
            atoms_mu,
            atoms_sigma2: vec![0.5; k],
            weights,
            angles: CorrelationAngles::identity(d),
            hyper: Hyper {
                mu_s: vec![0.001; nb],
                sigma2_s: 1.0,
                mu_kappa: vec![vec![30.0; nb]; d],
                sigma2_kappa: vec![1.0; d],
                mu0: 5.0,
                sigma2_0: 4.0,
                a0: 1.0,
                b0: 1.0,
                alpha: 1.0,
                a_s: 1.0,
                b_s: 1.0,
                a_kappa: 1.0,
                b_kappa: 1.0,
            },
            a_bound: 0.0,
            b_bound: 10.0,
        }
    }

    fn draws_with(params: Vec<ModelParams>, scales: Vec<f64>) -> PosteriorDraws {
        let n_draws = params.len();
        PosteriorDraws {
            params,
            latent: vec![
                LatentState {
                    x: vec![],
                    labels: vec![],
                };
                n_draws
            ],
            log_post_trace: vec![],
            diagnostics: vec![],
            tuned_eps_atoms: 0.0,
            tuned_eps_beta_s: 0.0,
            tuned_scale_x: 0.0,
            tuned_lambda_kappa: vec![],
            scales,
            config: SamplerConfig::default(),
        }
    }

    #[test]
    fn single_draw_density_is_exact() {
        let p = dummy_params(vec![3.0, 6.0], vec![vec![0.5, 0.5], vec![0.25, 0.75]]);
        let model = p.density_model().unwrap();
        let scales = vec![2.0, 0.5];
        let draws = draws_with(vec![p.clone()], scales.clone());
        let pts: Vec<DVector<f64>> = vec![
            DVector::from_vec(vec![1.5, 8.0]),
            DVector::from_vec(vec![2.5, 4.0]),
        ];
        let est = estimate_density(&draws, &pts, true).unwrap();
        for (j, pt) in pts.iter().enumerate() {
            let x_fit = DVector::from_vec(vec![pt[0] * scales[0], pt[1] * scales[1]]);
            let expect = model.log_density(&x_fit).unwrap().exp() * scales[0] * scales[1];
            assert!((est.mean[j] - expect).abs() <= 1e-14 * expect.max(1.0));
        }
        // Two identical draws give the same estimate.
        let draws2 = draws_with(vec![p.clone(), p], scales);
        let est2 = estimate_density(&draws2, &pts, false).unwrap();
        for j in 0..pts.len() {
            assert!((est2.mean[j] - est.mean[j]).abs() < 1e-15);
        }
        assert_eq!(est.per_draw.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn empty_draws_rejected() {
        let draws = draws_with(vec![], vec![1.0, 1.0]);
        let pts = vec![DVector::from_vec(vec![1.0, 1.0])];
        assert!(estimate_density(&draws, &pts, false).is_err());
    }

    #[test]
    fn marginal_estimate_integrates_to_one() {
        // Two distinct draws, a non-unit scale, 200-point grid, trapezoid.
        let p1 = dummy_params(vec![3.0, 6.0], vec![vec![0.5, 0.5], vec![0.25, 0.75]]);
        let p2 = dummy_params(vec![2.0, 7.0], vec![vec![0.8, 0.2], vec![0.5, 0.5]]);
        let scales = vec![2.5, 1.0];
        let draws = draws_with(vec![p1, p2], scales.clone());
        // Original-unit support of dimension 0 is [0, 10/2.5].
        let hi = 10.0 / scales[0];
        let grid: Vec<f64> = (0..200).map(|i| hi * i as f64 / 199.0).collect();
        let est = estimate_marginal_density(&draws, 0, &grid).unwrap();
        let mut integral = 0.0;
        for i in 1..grid.len() {
            integral += 0.5 * (est.mean[i] + est.mean[i - 1]) * (grid[i] - grid[i - 1]);
        }
        assert!((integral - 1.0).abs() < 0.02, "integral = {integral}");
        assert!(est.mean.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn ise_joint_closed_forms() {
        let f = vec![1.0, 2.0, 3.0];
        assert_eq!(ise_joint(&f, &f, &vec![1.0; 3]).unwrap(), 0.0);
        // Constant offset δ with constant p₀ = c gives δ²/c.
        let fh: Vec<f64> = f.iter().map(|v| v + 0.5).collect();
        let got = ise_joint(&f, &fh, &vec![2.0; 3]).unwrap();
        assert!((got - 0.25 / 2.0).abs() < 1e-15);
        assert!(ise_joint(&f, &fh, &[1.0, 0.0, 1.0]).is_err());
        assert!(ise_joint(&f, &fh[..2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn ise_joint_matches_tensor_quadrature() {
        // Smooth fixture: two 3-d densities; MC ISE with p₀ = f against a
        // tensor-grid quadrature of ∫(f − f̂)².
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = crate::simulate::generate_truth_config(3, &mut rng).unwrap();
        let mut other = truth.clone();
        other.atoms_mu = vec![2.3, 3.2, 4.8];
        let other = JointDensityModel::new(
            other.atoms_mu,
            other.atoms_sigma2,
            other.weights,
            other.a_bound,
            other.b_bound,
            other.angles,
        )
        .unwrap();

        let cache_t = CorrelationCache::from_angles(&truth.angles).unwrap();
        let cache_o = CorrelationCache::from_angles(&other.angles).unwrap();

        // Quadrature on a 40³ midpoint grid over [0,6]³.
        let g = 40usize;
        let step = 6.0 / g as f64;
        let mut quad = 0.0;
        for i in 0..g {
            for j in 0..g {
                for k in 0..g {
                    let x = DVector::from_vec(vec![
                        (i as f64 + 0.5) * step,
                        (j as f64 + 0.5) * step,
                        (k as f64 + 0.5) * step,
                    ]);
                    let ft = truth.log_density_with_cache(&cache_t, &x).unwrap().exp();
                    let fo = other.log_density_with_cache(&cache_o, &x).unwrap().exp();
                    quad += (ft - fo) * (ft - fo) * step * step * step;
                }
            }
        }

        // Monte Carlo: x_m ~ truth, p₀ = truth density.
        let m = 10_000;
        let (mut fv, mut ov, mut pv) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..m {
            let x = truth.sample(&cache_t, &mut rng).unwrap();
            let ft = truth.log_density_with_cache(&cache_t, &x).unwrap().exp();
            let fo = other.log_density_with_cache(&cache_o, &x).unwrap().exp();
            fv.push(ft);
            ov.push(fo);
            pv.push(ft);
        }
        let mc = ise_joint(&fv, &ov, &pv).unwrap();
        assert!(
            (mc - quad).abs() / quad < 0.10,
            "MC ISE {mc} vs quadrature {quad}"
        );
    }

    #[test]
    fn ise_marginal_closed_forms() {
        let grid: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let f: Vec<f64> = grid.iter().map(|&t| t * t).collect();
        assert_eq!(ise_marginal(&f, &f, &grid).unwrap(), 0.0);
        // f − f̂ = t on [0,1]: right-endpoint Riemann sum of ∫t²dt = 1/3.
        let fh: Vec<f64> = grid.iter().zip(&f).map(|(&t, &v)| v - t).collect();
        let got = ise_marginal(&f, &fh, &grid).unwrap();
        let exact = 1.0 / 3.0;
        assert!((got - exact).abs() < 0.01, "got {got}");
        // Refinement converges.
        let grid2: Vec<f64> = (0..1001).map(|i| i as f64 / 1000.0).collect();
        let f2: Vec<f64> = grid2.iter().map(|&t| t * t).collect();
        let fh2: Vec<f64> = grid2.iter().zip(&f2).map(|(&t, &v)| v - t).collect();
        let got2 = ise_marginal(&f2, &fh2, &grid2).unwrap();
        assert!((got2 - exact).abs() < 0.001, "refined {got2}");
        assert!((got2 - exact).abs() < (got - exact).abs());
        // Unsorted grid rejected.
        assert!(ise_marginal(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn mise_is_median() {
        assert_eq!(mise(&[3.0, 1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(mise(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
        assert!(mise(&[]).is_err());
    }

    #[test]
    fn bayes_factor_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a: Vec<f64> = (0..500)
            .map(|_| -50.0 + rand::Rng::random::<f64>(&mut rng))
            .collect();
        // Identical sets: B = 1.
        assert!((bayes_factor_harmonic(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        // Uniform +log 2: B = 2.
        let b: Vec<f64> = a.iter().map(|v| v + std::f64::consts::LN_2).collect();
        assert!((bayes_factor_harmonic(&b, &a).unwrap() - 2.0).abs() < 1e-10);
        // Invariance under a common constant shift.
        let a_shift: Vec<f64> = a.iter().map(|v| v + 123.0).collect();
        let b_shift: Vec<f64> = b.iter().map(|v| v + 123.0).collect();
        let b1 = bayes_factor_harmonic(&b, &a).unwrap();
        let b2 = bayes_factor_harmonic(&b_shift, &a_shift).unwrap();
        assert!((b1 - b2).abs() < 1e-10);
        // Inverse product identity.
        let c: Vec<f64> = a.iter().map(|v| v - 0.37 * (v - v.floor())).collect();
        let fwd = bayes_factor_harmonic(&a, &c).unwrap();
        let rev = bayes_factor_harmonic(&c, &a).unwrap();
        assert!((fwd * rev - 1.0).abs() < 1e-10);
        // Guards.
        assert!(bayes_factor_harmonic(&a[..50], &a).is_err());
        let mut bad = a.clone();
        bad[0] = f64::NAN;
        assert!(bayes_factor_harmonic(&bad, &a).is_err());
        // MC-SE is positive for non-degenerate draws.
        let (_, se) = harmonic_log_ml(&a).unwrap();
        assert!(se > 0.0);
    }

    #[test]
    fn slope_closed_forms() {
        let d = [3usize, 5, 10];
        // Constant time → slope 0.
        let (s0, _) = log_log_slope(&d, &[2.0, 2.0, 2.0]).unwrap();
        assert!(s0.abs() < 1e-12);
        // t = d² → slope 2, zero-width CI.
        let t: Vec<f64> = d.iter().map(|&x| (x * x) as f64).collect();
        let (s2, ci) = log_log_slope(&d, &t).unwrap();
        assert!((s2 - 2.0).abs() < 1e-12);
        assert!((ci.1 - ci.0).abs() < 1e-9);
        assert!(log_log_slope(&d[..2], &t[..2]).is_err());
        assert!(log_log_slope(&d, &[1.0, -1.0, 1.0]).is_err());
    }
}
