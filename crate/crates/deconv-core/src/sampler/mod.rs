//! The full posterior sampler.
//!
//! One iteration cycles, in order:
//! 1. mixture block under the pseudo-likelihood (labels and weights by
//!    conjugate Gibbs, atoms by HMC on `(μ_k, log σ_k²)`),
//! 2. latent vectors `x_i` by componentwise truncated-normal random-walk
//!    Metropolis–Hastings against the exact likelihood,
//! 3. copula angles on their discretized grids (neighbor-or-stay walk),
//! 4. `β_s` by HMC, `β_κ,ℓ` by adaptive random-walk MH (Haario scaling of
//!    the empirical covariance, adaptation during burn-in only).
//!
//! Step sizes and proposal scales self-tune toward the target acceptance
//! windows (HMC 0.6–0.9, MH 0.4–0.5) in batches during burn-in and are
//! frozen afterwards. All randomness flows from one seeded ChaCha stream,
//! so equal seeds give bit-identical output. The whole chain state
//! (including the RNG) serializes for checkpoint/resume.

pub mod hmc;
pub mod init;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::copula::CorrelationCache;
use crate::data::ReplicateDataset;
use crate::dist::{dirichlet_sample, TruncatedNormal};
use crate::error::{Error, Result};
use crate::likelihood::{
    measurement_loglik, AtomsObjective, BetaSObjective, LatentState, ModelParams,
    SubjectGeometry,
};

pub use hmc::hmc_update;
pub use init::{initialize, kmeans_1d, nnls, prepare, PreparedData, FIT_A, FIT_B};

/// Iterations per tuning batch during burn-in.
const TUNE_INTERVAL: usize = 25;
/// Iterations per diagnostics record.
const DIAG_INTERVAL: usize = 100;
/// Haario scaling constant 2.38²/dim applied to the empirical covariance.
const HAARIO_SCALE: f64 = 2.38 * 2.38;
/// Diagonal jitter added to adaptive proposal covariances.
const ADAPT_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Shared truncated-normal atoms per marginal mixture.
    pub num_components: usize,
    /// B-spline intervals on the fitting support (10 → 13 basis functions).
    pub num_intervals: usize,
    pub hmc_leapfrog_steps: usize,
    /// Initial HMC step sizes (tuned during burn-in).
    pub hmc_step_atoms: f64,
    pub hmc_step_beta_s: f64,
    /// Initial random-walk scales (tuned during burn-in).
    pub mh_scale_x: f64,
    pub mh_scale_beta_kappa: f64,
    pub angle_grid_size: usize,
    pub hmc_accept_window: (f64, f64),
    pub mh_accept_window: (f64, f64),
    /// Total Dirichlet mass; each component gets `alpha / K`.
    pub alpha: f64,
    pub seed: u64,
    /// Drop the measurement term everywhere: the chain then samples the
    /// joint prior (used by prior-recovery validation).
    pub disable_likelihood: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iter: 5000,
            burn_in: 3000,
            thin: 5,
            num_components: 10,
            num_intervals: 10,
            hmc_leapfrog_steps: 30,
            hmc_step_atoms: 0.01,
            hmc_step_beta_s: 2e-5,
            mh_scale_x: 0.5,
            mh_scale_beta_kappa: 0.1,
            angle_grid_size: 41,
            hmc_accept_window: (0.6, 0.9),
            mh_accept_window: (0.4, 0.5),
            alpha: 1.0,
            seed: 0,
            disable_likelihood: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::validation("burn_in must be < n_iter"));
        }
        if self.thin == 0 {
            return Err(Error::validation("thin must be ≥ 1"));
        }
        if self.angle_grid_size < 3 || self.angle_grid_size % 2 == 0 {
            return Err(Error::validation("angle_grid_size must be odd and ≥ 3"));
        }
        if self.num_components == 0 || self.num_intervals == 0 {
            return Err(Error::validation("num_components and num_intervals must be ≥ 1"));
        }
        if self.hmc_leapfrog_steps == 0 {
            return Err(Error::validation("hmc_leapfrog_steps must be ≥ 1"));
        }
        Ok(())
    }

    /// Retained draw count.
    pub fn num_draws(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Counter {
    pub proposals: u64,
    pub accepts: u64,
}

impl Counter {
    fn add(&mut self, accepted: bool) {
        self.proposals += 1;
        if accepted {
            self.accepts += 1;
        }
    }

    fn add_many(&mut self, proposals: u64, accepts: u64) {
        self.proposals += proposals;
        self.accepts += accepts;
    }

    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.proposals as f64
        }
    }

    fn reset(&mut self) {
        *self = Counter::default();
    }
}

/// One diagnostics record (emitted every [`DIAG_INTERVAL`] iterations):
/// acceptance rates over the window plus the current tuned scales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagRecord {
    /// Iteration index at the end of the window (1-based count).
    pub iter: usize,
    pub accept_atoms: f64,
    pub accept_beta_s: f64,
    pub accept_beta_kappa: Vec<f64>,
    pub accept_x: f64,
    pub accept_angles: f64,
    pub eps_atoms: f64,
    pub eps_beta_s: f64,
    pub scale_x: f64,
    pub lambda_kappa: Vec<f64>,
    pub log_post: f64,
}

/// Retained posterior sample plus chain metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub params: Vec<ModelParams>,
    pub latent: Vec<LatentState>,
    /// Joint log posterior per iteration (full length `n_iter`).
    pub log_post_trace: Vec<f64>,
    pub diagnostics: Vec<DiagRecord>,
    pub tuned_eps_atoms: f64,
    pub tuned_eps_beta_s: f64,
    pub tuned_scale_x: f64,
    pub tuned_lambda_kappa: Vec<f64>,
    /// Per-dimension factors mapping raw data to the fitting scale
    /// (`w_fit = scales ∘ w_raw`); density estimates must be transformed
    /// back through these.
    pub scales: Vec<f64>,
    pub config: SamplerConfig,
}

// ---------------------------------------------------------------------------
// Block updates (free functions so they are testable in isolation).
// ---------------------------------------------------------------------------

/// Mixture labels from their exact multinomial full conditionals.
pub fn update_labels<R: Rng>(
    latent: &mut LatentState,
    params: &ModelParams,
    rng: &mut R,
) {
    let k_mix = params.num_components();
    let mut logp = vec![0.0; k_mix];
    for l in 0..params.dim() {
        for i in 0..latent.x.len() {
            let x = latent.x[i][l];
            for k in 0..k_mix {
                let tn = TruncatedNormal {
                    mu: params.atoms_mu[k],
                    sigma2: params.atoms_sigma2[k],
                    a: params.a_bound,
                    b: params.b_bound,
                };
                logp[k] = params.weights[l][k].max(1e-300).ln() + tn.logpdf(x);
            }
            let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for p in logp.iter_mut() {
                *p = (*p - max).exp();
                total += *p;
            }
            let u = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = k_mix - 1;
            for (k, p) in logp.iter().enumerate() {
                cum += p;
                if u < cum {
                    pick = k;
                    break;
                }
            }
            latent.labels[l][i] = pick;
        }
    }
}

/// Mixture weights from the conjugate Dirichlet posterior
/// `Dir(α/K + n_ℓ(1), …, α/K + n_ℓ(K))` per dimension.
pub fn update_weights<R: Rng>(
    params: &mut ModelParams,
    latent: &LatentState,
    rng: &mut R,
) -> Result<()> {
    let k_mix = params.num_components();
    let per_comp = params.hyper.alpha / k_mix as f64;
    for l in 0..params.dim() {
        let mut conc = vec![per_comp; k_mix];
        for &lab in &latent.labels[l] {
            conc[lab] += 1.0;
        }
        params.weights[l] = dirichlet_sample(&conc, rng)?;
    }
    Ok(())
}

/// Cheap componentwise random-walk pass over the atoms, used for the
/// initialization warm sweeps (the main chain uses HMC instead).
pub(crate) fn warm_update_atoms<R: Rng>(
    params: &mut ModelParams,
    latent: &LatentState,
    rng: &mut R,
) {
    let obj = AtomsObjective::build(params, latent);
    let k_mix = params.num_components();
    let mut q: Vec<f64> = params
        .atoms_mu
        .iter()
        .copied()
        .chain(params.atoms_sigma2.iter().map(|s| s.ln()))
        .collect();
    let mut cur = obj.value(&q);
    for j in 0..2 * k_mix {
        let sd = if j < k_mix { 0.1 } else { 0.2 };
        let old = q[j];
        q[j] += sd * rng.sample::<f64, _>(StandardNormal);
        let cand = obj.value(&q);
        if cand.is_finite() && (cur - cand >= 0.0 || rng.random::<f64>() < (cur - cand).exp()) {
            cur = cand;
        } else {
            q[j] = old;
        }
    }
    params.atoms_mu.copy_from_slice(&q[..k_mix]);
    for (s, t) in params.atoms_sigma2.iter_mut().zip(&q[k_mix..]) {
        *s = t.exp();
    }
}

/// HMC update of all atoms `(μ_k, log σ_k²)` jointly.
pub fn update_atoms<R: Rng>(
    params: &mut ModelParams,
    latent: &LatentState,
    eps: f64,
    l_steps: usize,
    rng: &mut R,
) -> bool {
    let obj = AtomsObjective::build(params, latent);
    let k_mix = params.num_components();
    let mut q: Vec<f64> = params
        .atoms_mu
        .iter()
        .copied()
        .chain(params.atoms_sigma2.iter().map(|s| s.ln()))
        .collect();
    let accepted = hmc_update(
        &mut q,
        eps,
        l_steps,
        rng,
        &|q| obj.value(q),
        &|q, out| obj.grad(q, out),
    );
    if accepted {
        params.atoms_mu.copy_from_slice(&q[..k_mix]);
        for (s, t) in params.atoms_sigma2.iter_mut().zip(&q[k_mix..]) {
            *s = t.exp();
        }
    }
    accepted
}

/// HMC update of `β_s` (truncated-normal prior enforced by rejection).
pub fn update_beta_s<R: Rng>(
    params: &mut ModelParams,
    latent: &LatentState,
    data: &ReplicateDataset,
    eps: f64,
    l_steps: usize,
    likelihood_enabled: bool,
    rng: &mut R,
) -> Result<bool> {
    let obj = if likelihood_enabled {
        BetaSObjective::build(params, latent, data)?
    } else {
        BetaSObjective::prior_only(params.hyper.mu_s.clone(), params.hyper.sigma2_s)
    };
    let mut q = params.hetero.beta_s.clone();
    let accepted = hmc_update(
        &mut q,
        eps,
        l_steps,
        rng,
        &|q| obj.value(q),
        &|q, out| obj.grad(q, out),
    );
    if accepted {
        params.hetero.beta_s = q;
    }
    Ok(accepted)
}

/// Adaptive-MH state for one `β_κ,ℓ` row: Welford moments of past draws and
/// the current (lower-triangular) proposal factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptKappa {
    pub count: u64,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
    /// Extra log-scale multiplier tuned toward the MH window.
    pub lambda: f64,
    prop_chol: DMatrix<f64>,
}

impl AdaptKappa {
    fn new(dim: usize, initial_sd: f64) -> Self {
        AdaptKappa {
            count: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
            // Chosen so the first covariance refresh keeps the mean diagonal
            // proposal variance at `initial_sd²` (continuity of step size).
            lambda: initial_sd * initial_sd * dim as f64 / HAARIO_SCALE,
            prop_chol: DMatrix::identity(dim, dim) * initial_sd,
        }
    }

    fn record(&mut self, beta: &[f64]) {
        let x = DVector::from_row_slice(beta);
        self.count += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &x - &self.mean;
        self.m2 += delta * delta2.transpose();
    }

    /// Drop the accumulated moments (used once, early in burn-in, so the
    /// near-immobile first draws do not poison the covariance estimate).
    fn reset_moments(&mut self) {
        self.count = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }

    /// Apply a change of `lambda` to the current proposal factor without
    /// re-reading the empirical covariance (keeps the shape fixed while the
    /// scalar is still being tuned).
    fn rescale(&mut self, ratio: f64) {
        if ratio.is_finite() && ratio > 0.0 {
            self.prop_chol *= ratio.sqrt();
        }
    }

    /// Rebuild the proposal factor from the empirical covariance; falls back
    /// to its diagonal when the Cholesky fails.
    fn refresh(&mut self) {
        let dim = self.mean.len();
        if self.count < (dim + 2) as u64 {
            return;
        }
        let cov = &self.m2 / (self.count - 1) as f64;
        // Use the empirical covariance for proposal SHAPE only (normalized to
        // unit mean diagonal); `lambda` carries the entire step size. This
        // decouples the scalar acceptance tuner from growth of the covariance
        // estimate, which otherwise changes the effective step underneath it.
        let mean_diag = (cov.diagonal().sum() / dim as f64).max(ADAPT_JITTER);
        let scale = self.lambda * HAARIO_SCALE / dim as f64;
        let mut prop = cov * (scale / mean_diag);
        for j in 0..dim {
            prop[(j, j)] += scale * ADAPT_JITTER + ADAPT_JITTER;
        }
        match prop.clone().cholesky() {
            Some(ch) => self.prop_chol = ch.l(),
            None => {
                let mut diag = DMatrix::zeros(dim, dim);
                for j in 0..dim {
                    diag[(j, j)] = prop[(j, j)].max(ADAPT_JITTER).sqrt();
                }
                self.prop_chol = diag;
            }
        }
    }
}

/// One adaptive-MH update of `β_κ,ℓ` for a single dimension `l`.
pub fn update_beta_kappa_row<R: Rng>(
    params: &mut ModelParams,
    latent: &LatentState,
    data: &ReplicateDataset,
    l: usize,
    adapt: &AdaptKappa,
    likelihood_enabled: bool,
    rng: &mut R,
) -> Result<bool> {
    let dim = params.hetero.beta_kappa[l].len();
    let target = |params: &ModelParams| -> Result<f64> {
        let beta = &params.hetero.beta_kappa[l];
        let mu = &params.hyper.mu_kappa[l];
        if beta.iter().any(|&b| b < 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut t = 0.0;
        for (b, m) in beta.iter().zip(mu) {
            t -= (b - m) * (b - m) / (2.0 * params.hyper.sigma2_kappa[l]);
        }
        if likelihood_enabled {
            t += measurement_loglik(&params.hetero, &latent.x, data)?;
        }
        Ok(t)
    };
    let cur = target(params)?;
    if !cur.is_finite() {
        return Err(Error::regime("update_beta_kappa: current state has -inf target"));
    }
    let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let step = &adapt.prop_chol * z;
    let old = params.hetero.beta_kappa[l].clone();
    for (b, s) in params.hetero.beta_kappa[l].iter_mut().zip(step.iter()) {
        *b += s;
    }
    let cand = target(params)?;
    let accept = cand - cur;
    if accept >= 0.0 || rng.random::<f64>() < accept.exp() {
        Ok(true)
    } else {
        params.hetero.beta_kappa[l] = old;
        Ok(false)
    }
}

/// Componentwise truncated-normal random-walk MH over every subject's `x_i`,
/// with the proposal-asymmetry (Hastings) correction. Returns
/// (proposals, accepts).
pub fn update_x<R: Rng>(
    params: &ModelParams,
    latent: &mut LatentState,
    data: &ReplicateDataset,
    scale: f64,
    likelihood_enabled: bool,
    rng: &mut R,
) -> Result<(u64, u64)> {
    let model = params.density_model()?;
    let cache = CorrelationCache::from_angles(&params.angles)?;
    let d = params.dim();
    let mut proposals = 0u64;
    let mut accepts = 0u64;

    let target = |x: &DVector<f64>, subject: usize| -> Result<f64> {
        let mut t = model.log_density_with_cache(&cache, x)?;
        if !t.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        if likelihood_enabled {
            match SubjectGeometry::build(&params.hetero, x)? {
                Some(geom) => {
                    for w in &data.subjects[subject].replicates {
                        t += geom.replicate_loglik(x, w)?;
                    }
                }
                None => return Ok(f64::NEG_INFINITY),
            }
        }
        Ok(t)
    };

    for i in 0..latent.x.len() {
        let mut cur = target(&latent.x[i], i)?;
        for l in 0..d {
            let old = latent.x[i][l];
            let fwd = TruncatedNormal {
                mu: old,
                sigma2: scale * scale,
                a: params.a_bound,
                b: params.b_bound,
            };
            let new = fwd.sample(rng);
            let rev = TruncatedNormal {
                mu: new,
                sigma2: scale * scale,
                a: params.a_bound,
                b: params.b_bound,
            };
            latent.x[i][l] = new;
            let cand = target(&latent.x[i], i)?;
            let log_accept = cand - cur + rev.logpdf(old) - fwd.logpdf(new);
            proposals += 1;
            if log_accept >= 0.0 || rng.random::<f64>() < log_accept.exp() {
                cur = cand;
                accepts += 1;
            } else {
                latent.x[i][l] = old;
            }
        }
    }
    Ok((proposals, accepts))
}

/// Log of the angle target `a(ζ)` for the current scores: the MVN likelihood
/// of the n score vectors under correlation `R`.
fn angles_log_target(r: &DMatrix<f64>, scores: &[DVector<f64>]) -> f64 {
    match r.clone().cholesky() {
        Some(chol) => {
            let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
            let mut quad = 0.0;
            for y in scores {
                quad += y.dot(&chol.solve(y));
            }
            -0.5 * scores.len() as f64 * logdet - 0.5 * quad
        }
        None => f64::NEG_INFINITY,
    }
}

/// One neighbor-or-stay move on a grid of `m` points for a single angle.
/// `log_a(idx)` evaluates the log target at grid index `idx`. Out-of-range
/// neighbors are treated as "stay" so the proposal stays symmetric.
/// Returns (new index, accepted-a-move).
pub fn grid_walk_step<R: Rng, F: FnMut(usize) -> f64>(
    idx: usize,
    m: usize,
    cur_log_a: f64,
    mut log_a: F,
    rng: &mut R,
) -> (usize, bool, f64) {
    let delta: i64 = rng.random_range(0..3) - 1;
    let cand = idx as i64 + delta;
    if delta == 0 || cand < 0 || cand >= m as i64 {
        return (idx, false, cur_log_a);
    }
    let cand = cand as usize;
    let cand_log_a = log_a(cand);
    let log_accept = cand_log_a - cur_log_a;
    if log_accept >= 0.0 || rng.random::<f64>() < log_accept.exp() {
        (cand, true, cand_log_a)
    } else {
        (idx, false, cur_log_a)
    }
}

/// Grid-walk update of every copula angle against the `a(ζ)` target evaluated
/// with the y-scores of the current latents. Returns (proposals, accepts).
pub fn update_angles<R: Rng>(
    params: &mut ModelParams,
    latent: &LatentState,
    grid_size: usize,
    rng: &mut R,
) -> Result<(u64, u64)> {
    let model = params.density_model()?;
    let mut scores = Vec::with_capacity(latent.x.len());
    for x in &latent.x {
        scores.push(model.scores(x)?);
    }
    let pairs = params.angles.index_pairs();
    let mut proposals = 0u64;
    let mut accepts = 0u64;
    let mut cur_log_a = angles_log_target(&params.angles.correlation(), &scores);
    for (m, s) in pairs {
        let hi = crate::copula::CorrelationAngles::support_hi(m, s);
        let step = hi / (grid_size - 1) as f64;
        let idx = (params.angles.get(m, s) / step).round() as usize;
        let (new_idx, moved, new_log_a) = grid_walk_step(
            idx,
            grid_size,
            cur_log_a,
            |cand| {
                let mut trial = params.angles.clone();
                trial.set(m, s, cand as f64 * step);
                angles_log_target(&trial.correlation(), &scores)
            },
            rng,
        );
        proposals += 1;
        if moved {
            params.angles.set(m, s, new_idx as f64 * step);
            cur_log_a = new_log_a;
            accepts += 1;
        }
    }
    Ok((proposals, accepts))
}

// ---------------------------------------------------------------------------
// Chain driver.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tuning {
    eps_atoms: f64,
    eps_beta_s: f64,
    scale_x: f64,
    kappa: Vec<AdaptKappa>,
    batch: usize,
    bat_atoms: Counter,
    bat_beta_s: Counter,
    bat_x: Counter,
    bat_kappa: Vec<Counter>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct WindowCounters {
    atoms: Counter,
    beta_s: Counter,
    beta_kappa: Vec<Counter>,
    x: Counter,
    angles: Counter,
}

/// A running MCMC chain; serializable for checkpoint/resume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    pub config: SamplerConfig,
    /// Rescaled data on the fitting support.
    pub data: ReplicateDataset,
    pub scales: Vec<f64>,
    pub params: ModelParams,
    pub latent: LatentState,
    rng: ChaCha8Rng,
    pub iter: usize,
    /// Naive-baseline mode: x frozen at initial values, measurement model
    /// and β blocks skipped (pure copula-mixture density fit to the means).
    pub naive: bool,
    tuning: Tuning,
    window: WindowCounters,
    draws_params: Vec<ModelParams>,
    draws_latent: Vec<LatentState>,
    log_post_trace: Vec<f64>,
    diagnostics: Vec<DiagRecord>,
}

impl Chain {
    pub fn new(raw_data: &ReplicateDataset, config: &SamplerConfig) -> Result<Self> {
        Self::build(raw_data, config, false)
    }

    /// Naive baseline: fit the same copula-mixture model to subject sample
    /// means treated as exact (no measurement model).
    pub fn new_naive(raw_data: &ReplicateDataset, config: &SamplerConfig) -> Result<Self> {
        Self::build(raw_data, config, true)
    }

    fn build(raw_data: &ReplicateDataset, config: &SamplerConfig, naive: bool) -> Result<Self> {
        config.validate()?;
        let prepared = prepare(raw_data)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (params, latent) = initialize(&prepared.data, config, &mut rng)?;
        let d = prepared.data.d;
        let k_basis = params.hetero.basis.len();
        let tuning = Tuning {
            eps_atoms: config.hmc_step_atoms,
            eps_beta_s: config.hmc_step_beta_s,
            scale_x: config.mh_scale_x,
            kappa: (0..d)
                .map(|_| {
                    // Start at the configured absolute scale: the β_κ full
                    // conditional is far tighter than the data-derived prior,
                    // and a prior-sized first proposal wastes most of the
                    // burn-in on halving the step back down. The doubling
                    // branch of the tuner recovers quickly when the target
                    // really is prior-wide (likelihood disabled).
                    AdaptKappa::new(k_basis, config.mh_scale_beta_kappa)
                })
                .collect(),
            batch: 0,
            bat_atoms: Counter::default(),
            bat_beta_s: Counter::default(),
            bat_x: Counter::default(),
            bat_kappa: vec![Counter::default(); d],
        };
        let window = WindowCounters {
            beta_kappa: vec![Counter::default(); d],
            ..Default::default()
        };
        let chain = Chain {
            config: config.clone(),
            data: prepared.data,
            scales: prepared.scales,
            params,
            latent,
            rng,
            iter: 0,
            naive,
            tuning,
            window,
            draws_params: Vec::new(),
            draws_latent: Vec::new(),
            log_post_trace: Vec::new(),
            diagnostics: Vec::new(),
        };
        let lp = chain.log_posterior()?;
        if !lp.is_finite() {
            return Err(Error::validation(format!(
                "initial joint log posterior is {lp}; the starting state is outside the \
                 model's support (e.g. zero replicate variability gives s² = 0)"
            )));
        }
        Ok(chain)
    }

    /// Joint log posterior of the current state, respecting the chain mode.
    pub fn log_posterior(&self) -> Result<f64> {
        let mut total = 0.0;
        if !self.naive && !self.config.disable_likelihood {
            total += measurement_loglik(&self.params.hetero, &self.latent.x, &self.data)?;
            if !total.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
        }
        let model = self.params.density_model()?;
        let cache = CorrelationCache::from_angles(&self.params.angles)?;
        for x in &self.latent.x {
            total += model.log_density_with_cache(&cache, x)?;
        }
        // Coefficient and atom priors (constants dropped).
        let h = &self.params.hyper;
        for (b, m) in self.params.hetero.beta_s.iter().zip(&h.mu_s) {
            total -= (b - m) * (b - m) / (2.0 * h.sigma2_s);
        }
        for l in 0..self.params.dim() {
            for (b, m) in self.params.hetero.beta_kappa[l].iter().zip(&h.mu_kappa[l]) {
                total -= (b - m) * (b - m) / (2.0 * h.sigma2_kappa[l]);
            }
        }
        for k in 0..self.params.num_components() {
            total -= (self.params.atoms_mu[k] - h.mu0).powi(2) / (2.0 * h.sigma2_0);
            total += -(h.a0 + 1.0) * self.params.atoms_sigma2[k].ln()
                - h.b0 / self.params.atoms_sigma2[k];
        }
        Ok(if total.is_finite() {
            total
        } else {
            f64::NEG_INFINITY
        })
    }

    pub fn is_done(&self) -> bool {
        self.iter >= self.config.n_iter
    }

    /// Run one full iteration of the update cycle.
    pub fn step(&mut self) -> Result<()> {
        let cfg = self.config.clone();
        let adapting = self.iter < cfg.burn_in;
        let likelihood = !cfg.disable_likelihood && !self.naive;

        // 1. Mixture block (pseudo-likelihood: copula ignored).
        update_labels(&mut self.latent, &self.params, &mut self.rng);
        update_weights(&mut self.params, &self.latent, &mut self.rng)?;
        let acc = update_atoms(
            &mut self.params,
            &self.latent,
            self.tuning.eps_atoms,
            cfg.hmc_leapfrog_steps,
            &mut self.rng,
        );
        self.tuning.bat_atoms.add(acc);
        self.window.atoms.add(acc);

        // 2. Latent vectors (skipped in naive mode: x is the data there).
        if !self.naive {
            let (p, a) = update_x(
                &self.params,
                &mut self.latent,
                &self.data,
                self.tuning.scale_x,
                likelihood,
                &mut self.rng,
            )?;
            self.tuning.bat_x.add_many(p, a);
            self.window.x.add_many(p, a);
        }

        // 3. Copula angles.
        let (p, a) = update_angles(
            &mut self.params,
            &self.latent,
            cfg.angle_grid_size,
            &mut self.rng,
        )?;
        self.window.angles.add_many(p, a);

        // 4. Measurement-model coefficient blocks.
        if !self.naive {
            let acc = update_beta_s(
                &mut self.params,
                &self.latent,
                &self.data,
                self.tuning.eps_beta_s,
                cfg.hmc_leapfrog_steps,
                likelihood,
                &mut self.rng,
            )?;
            self.tuning.bat_beta_s.add(acc);
            self.window.beta_s.add(acc);
            for l in 0..self.params.dim() {
                let acc = update_beta_kappa_row(
                    &mut self.params,
                    &self.latent,
                    &self.data,
                    l,
                    &self.tuning.kappa[l],
                    likelihood,
                    &mut self.rng,
                )?;
                self.tuning.bat_kappa[l].add(acc);
                self.window.beta_kappa[l].add(acc);
                if adapting {
                    let beta = self.params.hetero.beta_kappa[l].clone();
                    self.tuning.kappa[l].record(&beta);
                }
            }
        }

        self.log_post_trace.push(self.log_posterior()?);

        // Tuning at batch boundaries, during burn-in only.
        if adapting && (self.iter + 1) % TUNE_INTERVAL == 0 {
            self.tune();
        }
        // Diagnostics window.
        if (self.iter + 1) % DIAG_INTERVAL == 0 {
            self.flush_diagnostics();
        }
        // Retention.
        if self.iter >= cfg.burn_in && (self.iter - cfg.burn_in) % cfg.thin == 0 {
            self.draws_params.push(self.params.clone());
            self.draws_latent.push(self.latent.clone());
        }
        self.iter += 1;
        Ok(())
    }

    fn tune(&mut self) {
        let batch = self.tuning.batch as f64;
        // HMC acceptance responds steeply to the step size, so its controller
        // stays gentle; the random-walk scales tolerate (and need, within a
        // short burn-in) a much stronger early correction. Both decay toward
        // a Robbins-Monro-style late regime.
        let hmc_gain = 0.6 / (1.0 + batch / 15.0);
        let mh_gain = 2.0 / (1.0 + batch / 30.0);
        let hmc_target = 0.5 * (self.config.hmc_accept_window.0 + self.config.hmc_accept_window.1);
        let mh_target = 0.5 * (self.config.mh_accept_window.0 + self.config.mh_accept_window.1);

        let nudge = |scale: &mut f64, rate: f64, target: f64, gain: f64| {
            if !rate.is_nan() {
                // Fast escape from saturated rates, gentle otherwise.
                if rate < 0.05 {
                    *scale *= 0.5;
                } else if rate > 0.95 {
                    *scale *= 2.0;
                } else {
                    *scale *= (gain * (rate - target)).exp();
                }
                *scale = scale.clamp(1e-10, 1e3);
            }
        };
        nudge(&mut self.tuning.eps_atoms, self.tuning.bat_atoms.rate(), hmc_target, hmc_gain);
        nudge(&mut self.tuning.eps_beta_s, self.tuning.bat_beta_s.rate(), hmc_target, hmc_gain);
        nudge(&mut self.tuning.scale_x, self.tuning.bat_x.rate(), mh_target, mh_gain);
        // Covariance refreshes stop at 70% of burn-in so the scalar tuner
        // finishes against a fixed proposal shape; otherwise the last refresh
        // can change the effective step under an already-frozen lambda.
        let total_batches = (self.config.burn_in / TUNE_INTERVAL) as f64;
        let cov_phase = (self.tuning.batch as f64) < (0.7 * total_batches).ceil();
        for l in 0..self.tuning.kappa.len() {
            let rate = self.tuning.bat_kappa[l].rate();
            let before = self.tuning.kappa[l].lambda;
            nudge(&mut self.tuning.kappa[l].lambda, rate, mh_target, mh_gain);
            if self.tuning.batch == 2 {
                // The first couple of batches are dominated by scale search
                // with a near-immobile chain; restart the moment estimates.
                self.tuning.kappa[l].reset_moments();
            }
            if cov_phase {
                self.tuning.kappa[l].refresh();
            } else {
                let after = self.tuning.kappa[l].lambda;
                self.tuning.kappa[l].rescale(after / before);
            }
            self.tuning.bat_kappa[l].reset();
        }
        self.tuning.bat_atoms.reset();
        self.tuning.bat_beta_s.reset();
        self.tuning.bat_x.reset();
        self.tuning.batch += 1;
    }

    fn flush_diagnostics(&mut self) {
        let rec = DiagRecord {
            iter: self.iter + 1,
            accept_atoms: self.window.atoms.rate(),
            accept_beta_s: self.window.beta_s.rate(),
            accept_beta_kappa: self.window.beta_kappa.iter().map(|c| c.rate()).collect(),
            accept_x: self.window.x.rate(),
            accept_angles: self.window.angles.rate(),
            eps_atoms: self.tuning.eps_atoms,
            eps_beta_s: self.tuning.eps_beta_s,
            scale_x: self.tuning.scale_x,
            lambda_kappa: self.tuning.kappa.iter().map(|k| k.lambda).collect(),
            log_post: *self.log_post_trace.last().unwrap_or(&f64::NAN),
        };
        self.diagnostics.push(rec);
        self.window = WindowCounters {
            beta_kappa: vec![Counter::default(); self.params.dim()],
            ..Default::default()
        };
    }

    pub fn finish(self) -> PosteriorDraws {
        PosteriorDraws {
            params: self.draws_params,
            latent: self.draws_latent,
            log_post_trace: self.log_post_trace,
            diagnostics: self.diagnostics,
            tuned_eps_atoms: self.tuning.eps_atoms,
            tuned_eps_beta_s: self.tuning.eps_beta_s,
            tuned_scale_x: self.tuning.scale_x,
            tuned_lambda_kappa: self.tuning.kappa.iter().map(|k| k.lambda).collect(),
            scales: self.scales,
            config: self.config,
        }
    }
}

/// Run a full chain to completion.
pub fn run_chain(data: &ReplicateDataset, config: &SamplerConfig) -> Result<PosteriorDraws> {
    let mut chain = Chain::new(data, config)?;
    while !chain.is_done() {
        chain.step()?;
    }
    Ok(chain.finish())
}

/// Fit the naive baseline (subject means treated as exact latents).
pub fn fit_naive(data: &ReplicateDataset, config: &SamplerConfig) -> Result<PosteriorDraws> {
    let mut chain = Chain::new_naive(data, config)?;
    while !chain.is_done() {
        chain.step()?;
    }
    Ok(chain.finish())
}
