//! The measurement model and its posterior.
//!
//! Conditional likelihood of a replicate `w` given the latent `x`
//! (writing `z = C(x)⁻¹w`, `F = diag{κ_l(x_l)}`, `s² = s²(‖x‖₂/d)`,
//! `r* = ‖z‖₂/‖x‖₂`, and `G(z, x)` for the two-reflection rotation):
//!
//! ```text
//!     log f(w|x) = trace{G(z,x) F} − log M(F)
//!                  − log r* − ½ log(2π s²) − {log r* + s²/2}²/(2s²) ,
//! ```
//!
//! where the scaling matrix is `C = {E(Q|x)}⁻¹` (diagonal) and `log M(F)`
//! uses the large-concentration approximation throughout. The Jacobian
//! factor `‖x‖/‖z‖` of the likelihood display is the `−log r*` term.
//!
//! This module also carries:
//! * the joint log posterior (likelihood + copula prior on `x` +
//!   truncated-normal priors on the spline coefficients + normal/inverse-
//!   gamma priors on the mixture atoms),
//! * analytic gradients for the HMC blocks (`β_s`; atom means and log
//!   variances), with sufficient-statistic reductions for the atom block,
//! * the small-rotation moment approximations (`V`, `S`) used as diagnostics.
//!
//! States outside the moment-approximation regime (some `E(Q_ll) ≤ 0` or
//! `s² ≈ 0`) get log-likelihood −∞ so Metropolis steps reject them instead
//! of erroring mid-chain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::copula::{CorrelationAngles, CorrelationCache, JointDensityModel};
use crate::data::ReplicateDataset;
use crate::dist::mvmf::{mvmf_expected_diag, mvmf_log_norm_const, MvMFParams};
use crate::dist::normal::{norm_pdf, LN_SQRT_2PI};
use crate::dist::TruncatedNormal;
use crate::error::{Error, Result};
use crate::rotation::rotation_diagonal;
use crate::spline::CubicBasis;

/// Values of `s²` at or below this floor are treated as a regime violation.
pub const S2_FLOOR: f64 = 1e-12;

/// Heteroscedasticity functions: B-spline expansions of the concentrations
/// `κ_l(·)` and the log-variance `s²(·)`, with nonnegative coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeteroFuncs {
    /// `beta_kappa[l]` are the coefficients of `κ_l`, length `basis.len()`.
    pub beta_kappa: Vec<Vec<f64>>,
    pub beta_s: Vec<f64>,
    pub basis: CubicBasis,
}

impl HeteroFuncs {
    pub fn new(beta_kappa: Vec<Vec<f64>>, beta_s: Vec<f64>, basis: CubicBasis) -> Result<Self> {
        let k = basis.len();
        if beta_s.len() != k || beta_kappa.iter().any(|row| row.len() != k) {
            return Err(Error::domain("HeteroFuncs: coefficient length mismatch"));
        }
        if beta_s.iter().any(|&b| b < 0.0)
            || beta_kappa.iter().flatten().any(|&b| b < 0.0)
        {
            return Err(Error::domain("HeteroFuncs: coefficients must be nonnegative"));
        }
        Ok(HeteroFuncs {
            beta_kappa,
            beta_s,
            basis,
        })
    }

    pub fn dim(&self) -> usize {
        self.beta_kappa.len()
    }

    pub fn kappa(&self, l: usize, x: f64) -> f64 {
        self.basis
            .eval_function(&self.beta_kappa[l], x)
            .expect("validated lengths")
    }

    /// Concentration vector `f = (κ_1(x_1), …, κ_d(x_d))`.
    pub fn f_vector(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.dim()).map(|l| self.kappa(l, x[l])).collect()
    }

    /// `s²(t)` at `t = ‖x‖₂/d`.
    pub fn s2(&self, t: f64) -> f64 {
        self.basis
            .eval_function(&self.beta_s, t)
            .expect("validated lengths")
    }
}

/// Diagonal of the scaling matrix `C = {E(Q|x)}⁻¹`; entries ≥ 1.
pub fn scaling_matrix(hetero: &HeteroFuncs, x: &DVector<f64>) -> Result<Vec<f64>> {
    let f = hetero.f_vector(x);
    let params = MvMFParams::new(f)?;
    let ediag = mvmf_expected_diag(&params)?;
    Ok(ediag.into_iter().map(|e| 1.0 / e).collect())
}

/// Everything `cond_loglik` needs that depends on `x` but not on `w`:
/// reusable across the replicates of one subject.
pub struct SubjectGeometry {
    pub f: Vec<f64>,
    /// `E(Q_ll)`; `C⁻¹ = diag(ediag)`.
    pub ediag: Vec<f64>,
    pub log_m: f64,
    pub s2: f64,
    pub x_norm: f64,
}

impl SubjectGeometry {
    /// Returns `None` when the state violates the approximation regime
    /// (nonpositive concentration or `E(Q_ll) ≤ 0` or `s² ≤` floor).
    pub fn build(hetero: &HeteroFuncs, x: &DVector<f64>) -> Result<Option<Self>> {
        let x_norm = x.norm();
        if x_norm == 0.0 {
            return Err(Error::domain("SubjectGeometry: zero latent vector"));
        }
        let f = hetero.f_vector(x);
        if f.iter().any(|&v| !(v > 0.0)) {
            return Ok(None);
        }
        let params = MvMFParams::new(f.clone())?;
        let ediag = match mvmf_expected_diag(&params) {
            Ok(e) => e,
            Err(Error::RegimeViolation(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let s2 = hetero.s2(x_norm / x.len() as f64);
        if s2 <= S2_FLOOR {
            return Ok(None);
        }
        Ok(Some(SubjectGeometry {
            f,
            ediag,
            log_m: mvmf_log_norm_const(&params),
            s2,
            x_norm,
        }))
    }

    /// `log f(w|x)` for one replicate; −∞ for nonpositive `‖w‖`.
    pub fn replicate_loglik(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
        let d = x.len();
        if w.len() != d {
            return Err(Error::domain("replicate_loglik: dimension mismatch"));
        }
        // z = C⁻¹ w.
        let z = DVector::from_fn(d, |l, _| w[l] * self.ediag[l]);
        let z_norm = z.norm();
        if z_norm == 0.0 {
            return Err(Error::domain("replicate_loglik: zero replicate"));
        }
        let mut diag_g = vec![0.0; d];
        rotation_diagonal(&z, x, &mut diag_g)?;
        let trace: f64 = diag_g
            .iter()
            .zip(&self.f)
            .map(|(g, f)| g * f)
            .sum();
        let log_rstar = (z_norm / self.x_norm).ln();
        let dev = log_rstar + self.s2 / 2.0;
        Ok(trace - self.log_m - log_rstar - LN_SQRT_2PI - 0.5 * self.s2.ln()
            - dev * dev / (2.0 * self.s2))
    }
}

/// `log f(w|x)`; propagates a regime violation as an error.
pub fn cond_loglik(w: &DVector<f64>, x: &DVector<f64>, hetero: &HeteroFuncs) -> Result<f64> {
    match SubjectGeometry::build(hetero, x)? {
        Some(geom) => geom.replicate_loglik(x, w),
        None => Err(Error::regime("cond_loglik: state outside approximation regime")),
    }
}

/// Total measurement log-likelihood `Σ_{i,j} log f(w_{i,j}|x_i)`;
/// −∞ if any subject violates the regime.
pub fn measurement_loglik(
    hetero: &HeteroFuncs,
    x: &[DVector<f64>],
    data: &ReplicateDataset,
) -> Result<f64> {
    let mut total = 0.0;
    for (i, subject) in data.subjects.iter().enumerate() {
        let geom = match SubjectGeometry::build(hetero, &x[i])? {
            Some(g) => g,
            None => return Ok(f64::NEG_INFINITY),
        };
        for w in &subject.replicates {
            total += geom.replicate_loglik(&x[i], w)?;
        }
    }
    Ok(total)
}

/// Prior hyperparameters. The spline-coefficient prior variances
/// `sigma2_s`, `sigma2_kappa` are fixed at initialization (prior SD = 2× the
/// spread of the initial estimates); the Ga(`a_s`,`b_s`)/Ga(`a_kappa`,
/// `b_kappa`) hyperpriors on their precisions are carried for completeness
/// but not sampled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyper {
    pub mu_s: Vec<f64>,
    pub sigma2_s: f64,
    pub mu_kappa: Vec<Vec<f64>>,
    pub sigma2_kappa: Vec<f64>,
    /// Normal prior on atom means.
    pub mu0: f64,
    pub sigma2_0: f64,
    /// Inverse-gamma prior on atom variances.
    pub a0: f64,
    pub b0: f64,
    /// Total Dirichlet concentration over the K mixture components.
    pub alpha: f64,
    pub a_s: f64,
    pub b_s: f64,
    pub a_kappa: f64,
    pub b_kappa: f64,
}

/// All sampled parameters except the latent vectors and labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelParams {
    pub hetero: HeteroFuncs,
    pub atoms_mu: Vec<f64>,
    pub atoms_sigma2: Vec<f64>,
    /// `weights[l][k]`, simplex per dimension.
    pub weights: Vec<Vec<f64>>,
    pub angles: CorrelationAngles,
    pub hyper: Hyper,
    pub a_bound: f64,
    pub b_bound: f64,
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.hetero.dim()
    }

    pub fn num_components(&self) -> usize {
        self.atoms_mu.len()
    }

    pub fn density_model(&self) -> Result<JointDensityModel> {
        JointDensityModel::new(
            self.atoms_mu.clone(),
            self.atoms_sigma2.clone(),
            self.weights.clone(),
            self.a_bound,
            self.b_bound,
            self.angles.clone(),
        )
    }
}

/// Latent state: one vector per subject plus mixture labels per (dimension,
/// subject).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentState {
    pub x: Vec<DVector<f64>>,
    /// `labels[l][i] ∈ 0..K`.
    pub labels: Vec<Vec<usize>>,
}

/// Log of the truncated-normal prior density kernel for a coefficient block
/// (quadratic part only; −∞ off the support). The normalization is constant
/// while the prior variances stay fixed, so it cancels in every ratio.
fn tn_prior_logkernel(beta: &[f64], mu: &[f64], sigma2: f64) -> f64 {
    let mut total = 0.0;
    for (b, m) in beta.iter().zip(mu) {
        if *b < 0.0 {
            return f64::NEG_INFINITY;
        }
        total -= (b - m) * (b - m) / (2.0 * sigma2);
    }
    total
}

/// Joint log posterior (up to constants): measurement likelihood,
/// copula prior on the latent vectors, coefficient priors, atom priors.
/// Regime violations yield −∞ rather than errors.
pub fn joint_log_posterior(
    params: &ModelParams,
    latent: &LatentState,
    data: &ReplicateDataset,
) -> Result<f64> {
    let mut total = measurement_loglik(&params.hetero, &latent.x, data)?;
    if !total.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }

    let model = params.density_model()?;
    let cache = CorrelationCache::from_angles(&params.angles)?;
    for xi in &latent.x {
        total += model.log_density_with_cache(&cache, xi)?;
    }

    total += tn_prior_logkernel(
        &params.hetero.beta_s,
        &params.hyper.mu_s,
        params.hyper.sigma2_s,
    );
    for l in 0..params.dim() {
        total += tn_prior_logkernel(
            &params.hetero.beta_kappa[l],
            &params.hyper.mu_kappa[l],
            params.hyper.sigma2_kappa[l],
        );
    }

    for k in 0..params.num_components() {
        let mu = params.atoms_mu[k];
        let s2 = params.atoms_sigma2[k];
        if !(s2 > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        total -= (mu - params.hyper.mu0).powi(2) / (2.0 * params.hyper.sigma2_0);
        total += -(params.hyper.a0 + 1.0) * s2.ln() - params.hyper.b0 / s2;
    }
    Ok(if total.is_finite() {
        total
    } else {
        f64::NEG_INFINITY
    })
}

// ---------------------------------------------------------------------------
// HMC objective: β_s block.
// ---------------------------------------------------------------------------

/// Negative log posterior of `β_s` given everything else, with its analytic
/// gradient. The only likelihood terms touched by `β_s` are
/// `½ log s²_i + (v_{i,j} + s²_i/2)²/(2 s²_i)` with
/// `v_{i,j} = log(‖C_i⁻¹w_{i,j}‖/‖x_i‖)` fixed, so those residuals are
/// precomputed at construction.
pub struct BetaSObjective {
    /// `B_k(‖x_i‖₂/d)` per subject.
    basis_rows: Vec<Vec<f64>>,
    /// Residuals `v_{i,j}` per subject.
    v: Vec<Vec<f64>>,
    mu: Vec<f64>,
    sigma2: f64,
}

impl BetaSObjective {
    pub fn build(
        params: &ModelParams,
        latent: &LatentState,
        data: &ReplicateDataset,
    ) -> Result<Self> {
        let mut basis_rows = Vec::with_capacity(data.n_subjects());
        let mut v = Vec::with_capacity(data.n_subjects());
        for (i, subject) in data.subjects.iter().enumerate() {
            let x = &latent.x[i];
            let f = params.hetero.f_vector(x);
            let mvmf = MvMFParams::new(f)?;
            let ediag = mvmf_expected_diag(&mvmf)?;
            let x_norm = x.norm();
            let d = x.len();
            basis_rows.push(
                params
                    .hetero
                    .basis
                    .eval(x_norm / d as f64)
                    .values,
            );
            v.push(
                subject
                    .replicates
                    .iter()
                    .map(|w| {
                        let z_norm = DVector::from_fn(d, |l, _| w[l] * ediag[l]).norm();
                        (z_norm / x_norm).ln()
                    })
                    .collect(),
            );
        }
        Ok(BetaSObjective {
            basis_rows,
            v,
            mu: params.hyper.mu_s.clone(),
            sigma2: params.hyper.sigma2_s,
        })
    }

    /// Prior-only objective (likelihood disabled), for prior-recovery tests.
    pub fn prior_only(mu: Vec<f64>, sigma2: f64) -> Self {
        BetaSObjective {
            basis_rows: Vec::new(),
            v: Vec::new(),
            mu,
            sigma2,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Negative log posterior (`+∞` outside the support / regime).
    pub fn value(&self, beta: &[f64]) -> f64 {
        if beta.iter().any(|&b| b < 0.0) {
            return f64::INFINITY;
        }
        let mut total = 0.0;
        for (row, vs) in self.basis_rows.iter().zip(&self.v) {
            let s2: f64 = row.iter().zip(beta).map(|(b, c)| b * c).sum();
            if s2 <= S2_FLOOR {
                return f64::INFINITY;
            }
            for &v in vs {
                let dev = v + s2 / 2.0;
                total += 0.5 * s2.ln() + dev * dev / (2.0 * s2);
            }
        }
        for (b, m) in beta.iter().zip(&self.mu) {
            total += (b - m) * (b - m) / (2.0 * self.sigma2);
        }
        total
    }

    /// Analytic gradient of [`Self::value`]:
    ///
    /// ```text
    ///     ∂L/∂β_k = Σ_i B_k(‖x_i‖/d) Σ_j [ 1/(2s²) + (v+s²/2)/(2s²)
    ///                                       − (v+s²/2)²/(2s⁴) ]
    ///               + (β_k − μ_k)/σ_s² .
    /// ```
    pub fn grad(&self, beta: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        for (row, vs) in self.basis_rows.iter().zip(&self.v) {
            let s2: f64 = row.iter().zip(beta).map(|(b, c)| b * c).sum();
            if s2 <= S2_FLOOR {
                return false;
            }
            let mut dl_ds2 = 0.0;
            for &v in vs {
                let dev = v + s2 / 2.0;
                dl_ds2 += 1.0 / (2.0 * s2) + dev / (2.0 * s2) - dev * dev / (2.0 * s2 * s2);
            }
            for (o, b) in out.iter_mut().zip(row) {
                *o += b * dl_ds2;
            }
        }
        for ((o, b), m) in out.iter_mut().zip(beta).zip(&self.mu) {
            *o += (b - m) / self.sigma2;
        }
        true
    }
}

/// Free-function wrapper matching the operation contract: analytic gradient
/// of the `β_s` negative log-posterior block at the current state.
pub fn grad_beta_s(
    params: &ModelParams,
    latent: &LatentState,
    data: &ReplicateDataset,
) -> Result<Vec<f64>> {
    let obj = BetaSObjective::build(params, latent, data)?;
    let mut out = vec![0.0; obj.dim()];
    if !obj.grad(&params.hetero.beta_s, &mut out) {
        return Err(Error::regime("grad_beta_s: s² at floor"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// HMC objective: mixture atoms (μ_k, log σ_k²).
// ---------------------------------------------------------------------------

/// Sufficient statistics of the observations assigned to one atom.
#[derive(Debug, Clone, Copy, Default)]
pub struct AtomStats {
    pub count: f64,
    pub sum: f64,
    pub sum_sq: f64,
}

/// Negative log full conditional of all atoms `(μ_k, t_k = log σ_k²)` under
/// the pseudo-likelihood (labels fixed, copula ignored), plus its gradient.
///
/// Position layout: `q = (μ_1..μ_K, t_1..t_K)`.
///
/// Working in `t = log σ²` adds the Jacobian `σ²` to the target, so the
/// prior part of the potential is `a₀·t + b₀·e^{−t}` — this is what makes
/// the chain reproduce the inverse-gamma prior on σ² itself.
pub struct AtomsObjective {
    pub stats: Vec<AtomStats>,
    pub a_bound: f64,
    pub b_bound: f64,
    pub mu0: f64,
    pub sigma2_0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl AtomsObjective {
    pub fn build(params: &ModelParams, latent: &LatentState) -> Self {
        let k = params.num_components();
        let mut stats = vec![AtomStats::default(); k];
        for l in 0..params.dim() {
            for (i, &lab) in latent.labels[l].iter().enumerate() {
                let x = latent.x[i][l];
                stats[lab].count += 1.0;
                stats[lab].sum += x;
                stats[lab].sum_sq += x * x;
            }
        }
        AtomsObjective {
            stats,
            a_bound: params.a_bound,
            b_bound: params.b_bound,
            mu0: params.hyper.mu0,
            sigma2_0: params.hyper.sigma2_0,
            a0: params.hyper.a0,
            b0: params.hyper.b0,
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.stats.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.stats.len()
    }

    fn split(q: &[f64]) -> (&[f64], &[f64]) {
        q.split_at(q.len() / 2)
    }

    pub fn value(&self, q: &[f64]) -> f64 {
        let (mu, t) = Self::split(q);
        let mut total = 0.0;
        for k in 0..self.num_atoms() {
            let s2 = t[k].exp();
            if !(s2 > 0.0) || !s2.is_finite() {
                return f64::INFINITY;
            }
            let sigma = s2.sqrt();
            let st = &self.stats[k];
            if st.count > 0.0 {
                let tn = TruncatedNormal {
                    mu: mu[k],
                    sigma2: s2,
                    a: self.a_bound,
                    b: self.b_bound,
                };
                let quad =
                    st.sum_sq - 2.0 * mu[k] * st.sum + st.count * mu[k] * mu[k];
                total += st.count * (sigma.ln() + tn.mass().ln()) + quad / (2.0 * s2);
            }
            total += (mu[k] - self.mu0).powi(2) / (2.0 * self.sigma2_0);
            total += self.a0 * t[k] + self.b0 / s2;
        }
        total
    }

    pub fn grad(&self, q: &[f64], out: &mut [f64]) -> bool {
        let (mu, t) = Self::split(q);
        let k_atoms = self.num_atoms();
        out.fill(0.0);
        for k in 0..k_atoms {
            let s2 = t[k].exp();
            if !(s2 > 0.0) || !s2.is_finite() {
                return false;
            }
            let sigma = s2.sqrt();
            let st = &self.stats[k];
            let mut d_mu = (mu[k] - self.mu0) / self.sigma2_0;
            // d/dσ² of the likelihood part (chain-ruled to t below).
            let mut d_s2 = 0.0;
            if st.count > 0.0 {
                let alpha = (self.a_bound - mu[k]) / sigma;
                let beta = (self.b_bound - mu[k]) / sigma;
                let tn = TruncatedNormal {
                    mu: mu[k],
                    sigma2: s2,
                    a: self.a_bound,
                    b: self.b_bound,
                };
                let mass = tn.mass();
                let phi_a = norm_pdf(alpha);
                let phi_b = norm_pdf(beta);
                // −Σ(x−μ)/σ² = (n μ − Σx)/σ².
                d_mu += (st.count * mu[k] - st.sum) / s2
                    - st.count * (phi_b - phi_a) / (sigma * mass);
                let quad =
                    st.sum_sq - 2.0 * mu[k] * st.sum + st.count * mu[k] * mu[k];
                d_s2 += st.count / (2.0 * s2) - quad / (2.0 * s2 * s2);
                d_s2 -= st.count
                    * (phi_b * (self.b_bound - mu[k]) - phi_a * (self.a_bound - mu[k]))
                    / (2.0 * s2 * sigma * mass);
            }
            // Prior in t-space: d/dt [a₀ t + b₀ e^{−t}] = a₀ − b₀/σ².
            let d_t = d_s2 * s2 + self.a0 - self.b0 / s2;
            out[k] = d_mu;
            out[k_atoms + k] = d_t;
        }
        true
    }
}

/// Gradient of the atom block at the current state, as
/// `(∂/∂μ_k, ∂/∂log σ_k²)` vectors.
pub fn grad_atoms(params: &ModelParams, latent: &LatentState) -> (Vec<f64>, Vec<f64>) {
    let obj = AtomsObjective::build(params, latent);
    let k = obj.num_atoms();
    let mut q = Vec::with_capacity(2 * k);
    q.extend_from_slice(&params.atoms_mu);
    q.extend(params.atoms_sigma2.iter().map(|s| s.ln()));
    let mut out = vec![0.0; 2 * k];
    obj.grad(&q, &mut out);
    (out[..k].to_vec(), out[k..].to_vec())
}

// ---------------------------------------------------------------------------
// Small-rotation moment diagnostics.
// ---------------------------------------------------------------------------

/// Approximate `cov(w|x)` under the small-rotation expansion:
///
/// ```text
///     V_{ll'} = 1/{2(f_l+f_{l'})²}   (l ≠ l'),
///     V_{ll}  = Σ_{k≠l} 1/{2(f_l+f_k)²},
///     S = e^{s²} · C diag(x) V diag(x) C + (e^{s²} − 1) x xᵀ .
/// ```
pub fn cond_cov_diagnostic(
    hetero: &HeteroFuncs,
    x: &DVector<f64>,
    s2: f64,
) -> Result<DMatrix<f64>> {
    cond_cov_from_f(&hetero.f_vector(x), x, s2)
}

/// [`cond_cov_diagnostic`] with the concentration vector supplied directly
/// (used by generators where `f` is known without a spline model).
pub fn cond_cov_from_f(f: &[f64], x: &DVector<f64>, s2: f64) -> Result<DMatrix<f64>> {
    let d = x.len();
    let f = f.to_vec();
    let mvmf = MvMFParams::new(f.clone())?;
    let ediag = mvmf_expected_diag(&mvmf)?;
    let mut v = DMatrix::zeros(d, d);
    for l in 0..d {
        for k in 0..d {
            if k != l {
                let pair = 0.5 / ((f[l] + f[k]) * (f[l] + f[k]));
                v[(l, k)] = pair;
                v[(l, l)] += pair;
            }
        }
    }
    let es2 = s2.exp();
    let mut s = DMatrix::zeros(d, d);
    for l in 0..d {
        for m in 0..d {
            let c_l = 1.0 / ediag[l];
            let c_m = 1.0 / ediag[m];
            s[(l, m)] = es2 * c_l * x[l] * v[(l, m)] * x[m] * c_m + (es2 - 1.0) * x[l] * x[m];
        }
    }
    Ok(s)
}

/// Limiting standardization weights:
/// `h_l = x_l⁻² {E(Q_ll)}² / V_ll`, so that the claimed limit reads
/// `h_l^{1/2}(CQx − x)_l → N(0,1)`.
pub fn limiting_h(f: &[f64], x: &DVector<f64>) -> Result<Vec<f64>> {
    let d = f.len();
    let mvmf = MvMFParams::new(f.to_vec())?;
    let ediag = mvmf_expected_diag(&mvmf)?;
    let mut out = vec![0.0; d];
    for l in 0..d {
        let mut v_ll = 0.0;
        for k in 0..d {
            if k != l {
                v_ll += 0.5 / ((f[l] + f[k]) * (f[l] + f[k]));
            }
        }
        out[l] = ediag[l] * ediag[l] / (x[l] * x[l] * v_ll);
    }
    Ok(out)
}
