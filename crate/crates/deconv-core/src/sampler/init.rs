//! Chain initialization.
//!
//! The data are rescaled per dimension so the largest entry is 20, the
//! latent vectors start at (clipped) subject sample means on
//! `[A,B] = [0,20]`, per-subject von Mises–Fisher MLEs give
//! pointwise concentration targets that are fit by non-negative least
//! squares to initialize `β_κ,ℓ`, the per-subject variances of
//! `log(‖w‖/‖x‖)` likewise initialize `β_s`, the mixture atoms come from a
//! 1-D k-means over the pooled initial latents followed by conjugate warm
//! sweeps, and the copula starts at `R = I`.
//!
//! Prior hyperparameters are set from these same estimates: prior means at
//! the initial values, prior SDs at twice their spread.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::copula::CorrelationAngles;
use crate::data::ReplicateDataset;
use crate::error::{Error, Result};
use crate::likelihood::{HeteroFuncs, Hyper, LatentState, ModelParams};
use crate::spline::CubicBasis;

use super::SamplerConfig;

/// Fitting support for the latent vectors after rescaling.
pub const FIT_A: f64 = 0.0;
pub const FIT_B: f64 = 20.0;
/// Target maximum of the rescaled data per dimension.
pub const RESCALE_MAX: f64 = 20.0;
/// Latent initial values are clipped this far inside the support so the
/// copula scores stay finite.
const X_CLIP_MARGIN: f64 = 0.05;
/// Cap on per-subject vMF concentration MLEs (m_i is small, so the MLE
/// blows up whenever the replicates are nearly aligned).
const VMF_CONC_CAP: f64 = 1e4;
/// NNLS convergence tolerance on the dual vector.
const NNLS_TOL: f64 = 1e-10;
/// Lloyd iterations and restarts for the 1-D k-means.
const KMEANS_RESTARTS: usize = 20;
const KMEANS_ITERS: usize = 100;
/// Conjugate warm-start sweeps for the mixture block.
const WARM_SWEEPS: usize = 500;

/// Per-dimension scale factors mapping the raw data onto the fitting scale
/// (`w_fit = scale ∘ w_raw`), and the rescaled dataset.
pub struct PreparedData {
    pub data: ReplicateDataset,
    pub scales: Vec<f64>,
}

/// Rescale every dimension so its maximum absolute value is [`RESCALE_MAX`].
pub fn prepare(data: &ReplicateDataset) -> Result<PreparedData> {
    let maxes = data.column_max_abs();
    if maxes.iter().any(|&m| m <= 0.0) {
        return Err(Error::validation(
            "cannot rescale a dimension whose entries are all zero",
        ));
    }
    let scales: Vec<f64> = maxes.iter().map(|&m| RESCALE_MAX / m).collect();
    Ok(PreparedData {
        data: data.scaled(&scales),
        scales,
    })
}

/// Non-negative least squares `min ‖Ax − b‖²  s.t. x ≥ 0` by the
/// Lawson–Hanson active-set method.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let at = a.transpose();
    let mut w = &at * (b - a * &x);
    for _outer in 0..(3 * n + 30) {
        // Most negative-gradient coordinate among the active (zero) set.
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if !passive[j] && w[j] > NNLS_TOL {
                if best.map_or(true, |(_, v)| w[j] > v) {
                    best = Some((j, w[j]));
                }
            }
        }
        let Some((j_in, _)) = best else { break };
        passive[j_in] = true;

        loop {
            // Unconstrained LS on the passive set.
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let ap = a.select_columns(idx.iter());
            let sol = ap
                .clone()
                .svd(true, true)
                .solve(b, 1e-12)
                .expect("SVD solve");
            if sol.iter().all(|&v| v > NNLS_TOL) {
                x.fill(0.0);
                for (pos, &j) in idx.iter().enumerate() {
                    x[j] = sol[pos];
                }
                break;
            }
            // Step toward sol until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            for (pos, &j) in idx.iter().enumerate() {
                if sol[pos] <= NNLS_TOL {
                    let denom = x[j] - sol[pos];
                    if denom > 0.0 {
                        alpha = alpha.min(x[j] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (pos, &j) in idx.iter().enumerate() {
                x[j] += alpha * (sol[pos] - x[j]);
                if x[j] <= NNLS_TOL {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
        }
        w = &at * (b - a * &x);
    }
    x
}

/// 1-D k-means (Lloyd), `KMEANS_RESTARTS` restarts, best inertia kept; ties
/// broken by the earlier restart. Returns (sorted centers, assignments).
pub fn kmeans_1d<R: Rng>(
    values: &[f64],
    k: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<usize>) {
    assert!(k >= 1 && !values.is_empty());
    let mut best_centers = vec![0.0; k];
    let mut best_assign = vec![0usize; values.len()];
    let mut best_inertia = f64::INFINITY;
    for _ in 0..KMEANS_RESTARTS {
        let mut centers: Vec<f64> = (0..k)
            .map(|_| values[rng.random_range(0..values.len())])
            .collect();
        let mut assign = vec![0usize; values.len()];
        for _ in 0..KMEANS_ITERS {
            let mut changed = false;
            for (i, &v) in values.iter().enumerate() {
                let mut arg = 0;
                let mut best = f64::INFINITY;
                for (c, &ctr) in centers.iter().enumerate() {
                    let dist = (v - ctr) * (v - ctr);
                    if dist < best {
                        best = dist;
                        arg = c;
                    }
                }
                if assign[i] != arg {
                    assign[i] = arg;
                    changed = true;
                }
            }
            let mut sums = vec![0.0; k];
            let mut counts = vec![0usize; k];
            for (i, &v) in values.iter().enumerate() {
                sums[assign[i]] += v;
                counts[assign[i]] += 1;
            }
            for c in 0..k {
                if counts[c] > 0 {
                    centers[c] = sums[c] / counts[c] as f64;
                } else {
                    // Re-seed empty clusters at a random point.
                    centers[c] = values[rng.random_range(0..values.len())];
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = values
            .iter()
            .zip(&assign)
            .map(|(&v, &c)| (v - centers[c]) * (v - centers[c]))
            .sum();
        if inertia < best_inertia {
            best_inertia = inertia;
            best_centers = centers;
            best_assign = assign;
        }
    }
    // Sort centers ascending and remap assignments.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| best_centers[a].total_cmp(&best_centers[b]));
    let mut rank = vec![0usize; k];
    for (pos, &c) in order.iter().enumerate() {
        rank[c] = pos;
    }
    let centers = order.iter().map(|&c| best_centers[c]).collect();
    let assign = best_assign.into_iter().map(|c| rank[c]).collect();
    (centers, assign)
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Initial state from rescaled data: moment-based warm start.
pub fn initialize<R: Rng>(
    data: &ReplicateDataset,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<(ModelParams, LatentState)> {
    data.validate()?;
    let d = data.d;
    let n = data.n_subjects();
    let k_mix = config.num_components;
    let basis = CubicBasis::new(FIT_A, FIT_B, config.num_intervals)?;
    let k_basis = basis.len();

    // --- Latent starting values: clipped subject means. ---
    let x: Vec<DVector<f64>> = data
        .subjects
        .iter()
        .map(|s| {
            let m = s.mean();
            DVector::from_fn(d, |l, _| {
                m[l].clamp(FIT_A + X_CLIP_MARGIN, FIT_B - X_CLIP_MARGIN)
            })
        })
        .collect();

    // --- β_κ,ℓ from per-subject vMF MLEs. ---
    // κ_ℓ,i target = f̂_ℓ,i / x̃_ℓ,i with f̂_i = ĉ_i·μ̂_i from the MLE on the
    // normalized replicates.
    let mut kappa_targets = vec![Vec::with_capacity(n); d];
    for (i, subject) in data.subjects.iter().enumerate() {
        let dirs: Vec<DVector<f64>> = subject
            .replicates
            .iter()
            .filter(|w| w.norm() > 0.0)
            .map(|w| w / w.norm())
            .collect();
        let (mean_dir, conc) = crate::dist::vmf::vmf_mle(&dirs)?;
        let conc = conc.min(VMF_CONC_CAP);
        // Debias the raw vMF concentration before converting it to a κ
        // target. Two separate inflations act on the raw MLE:
        //   * structural: the replicate direction Qx̃ has transverse
        //     precision ≈ κ_a + κ_b (paired concentrations), so the fitted
        //     isotropic concentration estimates ~2κ, not κ;
        //   * small-sample: with m replicates the resultant-length MLE
        //     overshoots by ≈ m/(m−1).
        // Together: multiply by (m−1)/(2m) (≈ 1/3 at m = 3; empirically the
        // median raw target/truth ratio on model-generated data is ≈ 3.4).
        let m_i = dirs.len() as f64;
        let debias = (m_i - 1.0) / (2.0 * m_i);
        let conc = conc * debias;
        let x_tilde = &x[i] / x[i].norm();
        for l in 0..d {
            // f̂_ℓ = ĉ·μ̂_ℓ; fall back to ĉ·x̃_ℓ when the MLE direction has a
            // nonpositive component (noise at tiny m).
            let f_hat = if mean_dir[l] > 0.0 {
                conc * mean_dir[l]
            } else {
                conc * x_tilde[l].max(1e-3)
            };
            kappa_targets[l].push((f_hat / x_tilde[l].max(1e-6)).max(0.0));
        }
    }
    let design_kappa = |l: usize| {
        DMatrix::from_fn(n, k_basis, |i, k| basis.eval(x[i][l]).values[k])
    };
    let mut beta_kappa = Vec::with_capacity(d);
    for l in 0..d {
        let b = DVector::from_vec(kappa_targets[l].clone());
        beta_kappa.push(nnls(&design_kappa(l), &b).iter().copied().collect::<Vec<f64>>());
    }

    // --- β_s from per-subject log-norm-ratio variances. ---
    let mut s2_targets = Vec::with_capacity(n);
    let mut design_s = DMatrix::zeros(n, k_basis);
    for (i, subject) in data.subjects.iter().enumerate() {
        let ratios: Vec<f64> = subject
            .replicates
            .iter()
            .map(|w| (w.norm() / x[i].norm()).ln())
            .collect();
        let v = sample_std(&ratios).powi(2);
        s2_targets.push(v);
        let row = basis.eval(x[i].norm() / d as f64).values;
        for k in 0..k_basis {
            design_s[(i, k)] = row[k];
        }
    }
    let beta_s: Vec<f64> = nnls(&design_s, &DVector::from_vec(s2_targets))
        .iter()
        .copied()
        .collect();

    // --- Mixture atoms by 1-D k-means over the pooled latents. ---
    let pooled: Vec<f64> = x.iter().flat_map(|xi| xi.iter().copied()).collect();
    let (centers, assign) = kmeans_1d(&pooled, k_mix, rng);
    let mut atoms_mu = centers;
    let mut atoms_sigma2 = vec![0.0; k_mix];
    let mut counts = vec![0usize; k_mix];
    for (&v, &c) in pooled.iter().zip(&assign) {
        atoms_sigma2[c] += (v - atoms_mu[c]) * (v - atoms_mu[c]);
        counts[c] += 1;
    }
    for c in 0..k_mix {
        atoms_sigma2[c] = if counts[c] > 1 {
            (atoms_sigma2[c] / counts[c] as f64).max(1e-2)
        } else {
            0.25
        };
        if counts[c] == 0 {
            atoms_mu[c] = 0.5 * (FIT_A + FIT_B);
        }
    }

    // Labels per (dimension, subject) from the pooled assignment (pooled is
    // laid out subject-major: index i*d + l).
    let mut labels = vec![vec![0usize; n]; d];
    for i in 0..n {
        for l in 0..d {
            labels[l][i] = assign[i * d + l];
        }
    }
    // Weights from per-dimension cluster shares (floored so no component
    // starts at exactly zero).
    let mut weights = vec![vec![0.0; k_mix]; d];
    for l in 0..d {
        for i in 0..n {
            weights[l][labels[l][i]] += 1.0;
        }
        let floor = 1.0 / (10.0 * k_mix as f64);
        let mut total = 0.0;
        for v in weights[l].iter_mut() {
            *v = (*v / n as f64).max(floor);
            total += *v;
        }
        for v in weights[l].iter_mut() {
            *v /= total;
        }
    }

    // --- Hyperparameters from the initial estimates. ---
    let spread = |vals: &[f64], floor: f64| {
        let s = 2.0 * sample_std(vals);
        (s * s).max(floor)
    };
    let hyper = Hyper {
        mu_s: beta_s.clone(),
        sigma2_s: spread(&beta_s, 1e-4),
        mu_kappa: beta_kappa.clone(),
        sigma2_kappa: beta_kappa.iter().map(|row| spread(row, 1.0)).collect(),
        mu0: atoms_mu.iter().sum::<f64>() / k_mix as f64,
        sigma2_0: spread(&atoms_mu, 0.25),
        a0: 1.0,
        b0: 1.0,
        alpha: config.alpha,
        a_s: 0.1,
        b_s: 0.1,
        a_kappa: 0.1,
        b_kappa: 0.1,
    };

    let hetero = HeteroFuncs::new(beta_kappa, beta_s, basis)?;
    let mut params = ModelParams {
        hetero,
        atoms_mu,
        atoms_sigma2,
        weights,
        angles: CorrelationAngles::identity(d),
        hyper,
        a_bound: FIT_A,
        b_bound: FIT_B,
    };
    let mut latent = LatentState { x, labels };

    // --- Conjugate warm sweeps for the mixture block (x fixed). ---
    for _ in 0..WARM_SWEEPS {
        super::update_labels(&mut latent, &params, rng);
        super::update_weights(&mut params, &latent, rng)?;
        super::warm_update_atoms(&mut params, &latent, rng);
    }

    Ok((params, latent))
}
