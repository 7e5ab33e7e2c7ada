//! Gaussian copula over truncated-normal-mixture marginals.
//!
//! The latent joint density is
//!
//! ```text
//!     f_x(x) = |R|^{−1/2} exp{−½ yᵀ(R⁻¹ − I) y} · Π_l f_{x,l}(x_l),
//!     y_l    = Φ⁻¹(F_{x,l}(x_l)) ,
//! ```
//!
//! with correlation matrix `R` parametrized through the spherical coordinates
//! of its Cholesky factor: `R = VVᵀ` where `V` is lower triangular with
//! unit-norm rows,
//!
//! ```text
//!     V_{1,·} = e₁ᵀ,
//!     V_{m,k} = cos(ζ_{m,k}) Π_{s<k} sin(ζ_{m,s})      (k < m),
//!     V_{m,m} = Π_{s<m} sin(ζ_{m,s}),
//! ```
//!
//! `ζ_{m,s} ∈ [0, π]` for `s < m−1` and `ζ_{m,m−1} ∈ [0, 2π]`. Any angle
//! configuration yields a valid correlation matrix, and every correlation
//! matrix is reachable (the parametrization is 2-to-1 in places through the
//! widened last angle, which is harmless for density estimation).
//!
//! Marginals are truncated-normal mixtures with atoms shared across
//! dimensions and per-dimension weights.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dist::normal::{norm_cdf, norm_quantile, P_CLIP};
use crate::dist::TruncNormMixture;
use crate::error::{Error, Result};

use std::f64::consts::PI;

/// Spherical-Cholesky angles; row `m` (for matrix rows 2..=d) has `m−1` entries.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CorrelationAngles {
    zeta: Vec<Vec<f64>>,
}

impl CorrelationAngles {
    /// Angles from a ragged array: entry `m−2` holds the `m−1` angles of row `m`.
    pub fn new(zeta: Vec<Vec<f64>>) -> Result<Self> {
        for (idx, row) in zeta.iter().enumerate() {
            let m = idx + 2;
            if row.len() != m - 1 {
                return Err(Error::domain(format!(
                    "CorrelationAngles: row {m} must have {} angles, got {}",
                    m - 1,
                    row.len()
                )));
            }
            for (s, &z) in row.iter().enumerate() {
                let hi = if s == m - 2 { 2.0 * PI } else { PI };
                if !(0.0..=hi).contains(&z) {
                    return Err(Error::domain(format!(
                        "CorrelationAngles: ζ_{{{m},{}}} = {z} outside [0, {hi}]",
                        s + 1
                    )));
                }
            }
        }
        Ok(CorrelationAngles { zeta })
    }

    /// All angles at π/2: `R = I`.
    pub fn identity(d: usize) -> Self {
        CorrelationAngles {
            zeta: (2..=d).map(|m| vec![PI / 2.0; m - 1]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.zeta.len() + 1
    }

    pub fn num_angles(&self) -> usize {
        self.zeta.iter().map(|r| r.len()).sum()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.zeta
    }

    /// Angle `ζ_{m,s}` with `m ∈ 2..=d`, `s ∈ 1..m` (1-based indexing).
    pub fn get(&self, m: usize, s: usize) -> f64 {
        self.zeta[m - 2][s - 1]
    }

    pub fn set(&mut self, m: usize, s: usize, value: f64) {
        self.zeta[m - 2][s - 1] = value;
    }

    /// Upper support bound of angle `ζ_{m,s}`.
    pub fn support_hi(m: usize, s: usize) -> f64 {
        if s == m - 1 {
            2.0 * PI
        } else {
            PI
        }
    }

    /// Flat iteration order `(m, s)` used by the angle sampler and draw files.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_angles());
        for m in 2..=self.dim() {
            for s in 1..m {
                out.push((m, s));
            }
        }
        out
    }

    /// Lower-triangular factor `V` with unit-norm rows.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut v = DMatrix::zeros(d, d);
        v[(0, 0)] = 1.0;
        for m in 2..=d {
            let row = &self.zeta[m - 2];
            let mut sin_prod = 1.0;
            for k in 0..m - 1 {
                v[(m - 1, k)] = row[k].cos() * sin_prod;
                sin_prod *= row[k].sin();
            }
            v[(m - 1, m - 1)] = sin_prod;
        }
        v
    }

    /// `R = VVᵀ` (unit diagonal by construction; diagonal set exactly).
    pub fn correlation(&self) -> DMatrix<f64> {
        let v = self.cholesky_factor();
        let mut r = &v * v.transpose();
        for i in 0..r.nrows() {
            r[(i, i)] = 1.0;
        }
        r
    }

    /// Recover angles from a correlation matrix (via its Cholesky factor with
    /// positive diagonal). Inverse of [`Self::correlation`] on the branch
    /// with all sines nonnegative.
    pub fn from_correlation(r: &DMatrix<f64>) -> Result<Self> {
        let d = r.nrows();
        let chol = r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain("from_correlation: matrix not positive definite"))?;
        let l = chol.l();
        let mut zeta = Vec::with_capacity(d.saturating_sub(1));
        for m in 2..=d {
            let mut row = Vec::with_capacity(m - 1);
            let mut sin_prod = 1.0f64;
            for k in 0..m - 1 {
                let c = if sin_prod > 1e-14 {
                    (l[(m - 1, k)] / sin_prod).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                let z = c.acos();
                row.push(z);
                sin_prod *= z.sin();
            }
            zeta.push(row);
        }
        CorrelationAngles::new(zeta)
    }
}

/// Copula + marginals: the full latent density model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointDensityModel {
    /// Shared mixture atoms.
    pub atoms_mu: Vec<f64>,
    pub atoms_sigma2: Vec<f64>,
    /// Per-dimension mixture weights, `weights[l][k]`.
    pub weights: Vec<Vec<f64>>,
    pub a_bound: f64,
    pub b_bound: f64,
    pub angles: CorrelationAngles,
}

/// Precomputed correlation pieces for repeated density evaluation.
#[derive(Debug, Clone)]
pub struct CorrelationCache {
    pub r: DMatrix<f64>,
    pub r_inv: DMatrix<f64>,
    pub half_log_det: f64,
}

impl CorrelationCache {
    /// Build from `R`, adding a diagonal ridge if it is numerically singular.
    pub fn from_correlation(mut r: DMatrix<f64>) -> Result<Self> {
        let d = r.nrows();
        let mut ridge = 0.0;
        for attempt in 0..6 {
            match r.clone().cholesky() {
                Some(chol) => {
                    let half_log_det: f64 =
                        (0..d).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();
                    let r_inv = chol.inverse();
                    return Ok(CorrelationCache {
                        r,
                        r_inv,
                        half_log_det,
                    });
                }
                None => {
                    ridge = if attempt == 0 { 1e-10 } else { ridge * 100.0 };
                    for i in 0..d {
                        r[(i, i)] += ridge;
                    }
                }
            }
        }
        Err(Error::domain("correlation matrix irreparably singular"))
    }

    pub fn from_angles(angles: &CorrelationAngles) -> Result<Self> {
        Self::from_correlation(angles.correlation())
    }
}

impl JointDensityModel {
    pub fn new(
        atoms_mu: Vec<f64>,
        atoms_sigma2: Vec<f64>,
        weights: Vec<Vec<f64>>,
        a_bound: f64,
        b_bound: f64,
        angles: CorrelationAngles,
    ) -> Result<Self> {
        let model = JointDensityModel {
            atoms_mu,
            atoms_sigma2,
            weights,
            a_bound,
            b_bound,
            angles,
        };
        // Marginal construction validates atoms/weights per dimension.
        if model.weights.len() != model.angles.dim() {
            return Err(Error::domain(
                "JointDensityModel: weight rows must match copula dimension",
            ));
        }
        for l in 0..model.dim() {
            model.marginal(l)?;
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn num_components(&self) -> usize {
        self.atoms_mu.len()
    }

    pub fn marginal(&self, l: usize) -> Result<TruncNormMixture> {
        TruncNormMixture::new(
            self.weights[l].clone(),
            self.atoms_mu.clone(),
            self.atoms_sigma2.clone(),
            self.a_bound,
            self.b_bound,
        )
    }

    /// Gaussian scores `y_l = Φ⁻¹(F_{x,l}(x_l))` (cdf values clipped away
    /// from {0,1} before inversion).
    pub fn scores(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::domain("scores: dimension mismatch"));
        }
        let mut y = DVector::zeros(d);
        for l in 0..d {
            let u = self.marginal(l)?.cdf(x[l]);
            y[l] = norm_quantile(u);
        }
        Ok(y)
    }

    /// `log f_x(x)` using a prebuilt [`CorrelationCache`].
    ///
    /// Returns −∞ (not an error) when `x` touches the support boundary: the
    /// cdf hits 0 or 1 there and the score diverges.
    pub fn log_density_with_cache(&self, cache: &CorrelationCache, x: &DVector<f64>) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::domain("log_density: dimension mismatch"));
        }
        let mut marg_sum = 0.0;
        let mut y = DVector::zeros(d);
        for l in 0..d {
            let m = self.marginal(l)?;
            if x[l] <= self.a_bound || x[l] >= self.b_bound {
                return Ok(f64::NEG_INFINITY);
            }
            let lp = m.logpdf(x[l]);
            if !lp.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            marg_sum += lp;
            let u = m.cdf(x[l]).clamp(P_CLIP, 1.0 - P_CLIP);
            y[l] = norm_quantile(u);
        }
        let quad = (cache.r_inv.clone() - DMatrix::identity(d, d) as DMatrix<f64>)
            .quadform_sym(&y);
        Ok(-cache.half_log_det - 0.5 * quad + marg_sum)
    }

    /// `log f_x(x)`, building the correlation cache on the fly.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let cache = CorrelationCache::from_angles(&self.angles)?;
        self.log_density_with_cache(&cache, x)
    }

    /// Draw `x`: Gaussian scores with correlation `R`, pushed through the
    /// marginal quantiles.
    pub fn sample(&self, cache: &CorrelationCache, rng: &mut impl Rng) -> Result<DVector<f64>> {
        let d = self.dim();
        let chol = cache
            .r
            .clone()
            .cholesky()
            .ok_or_else(|| Error::domain("sample: correlation not positive definite"))?;
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = chol.l() * z;
        let mut x = DVector::zeros(d);
        for l in 0..d {
            let u = norm_cdf(y[l]).clamp(P_CLIP, 1.0 - P_CLIP);
            x[l] = self.marginal(l)?.quantile(u)?;
        }
        Ok(x)
    }
}

// `quadform_sym` helper: yᵀ M y for square M.
trait QuadForm {
    fn quadform_sym(&self, y: &DVector<f64>) -> f64;
}

impl QuadForm for DMatrix<f64> {
    fn quadform_sym(&self, y: &DVector<f64>) -> f64 {
        (y.transpose() * self * y)[(0, 0)]
    }
}
