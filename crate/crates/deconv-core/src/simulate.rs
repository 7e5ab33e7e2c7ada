//! Synthetic data generation for the simulation studies.
//!
//! Two data-generating processes over a shared latent density:
//!
//! * **well specified** — replicates follow the rotation measurement model
//!   exactly: `w = r · C · Q · x` with `Q` matrix von Mises–Fisher
//!   (concentrations `κ_ℓ(x_ℓ) = kappa_scale / x_ℓ`), `r` a mean-one
//!   log-normal length factor with `s = ‖x‖₂ / s_scale`, and `C` the
//!   mean-correction matrix, so `E(w|x) = x`.
//! * **mis-specified** — a multiplicative additive-noise model
//!   `w = x + (x / misspec_scale) ∘ ε` with `ε` iid standard normal,
//!   used to probe robustness when the rotation model does not hold.
//!
//! The latent truth is a Gaussian-copula mixture ([`JointDensityModel`]).
//! [`generate_truth_config`] builds the benchmark configuration: for `d = 3`
//! a fixed three-component truncated-normal mixture per dimension with an
//! AR-style correlation (ρ = 0.7); for other `d` the same structure with
//! atom means drawn from Unif(1, 10).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::copula::{CorrelationAngles, CorrelationCache, JointDensityModel};
use crate::data::{ReplicateDataset, Subject, MIN_REPLICATES};
use crate::dist::mvmf::{mvmf_expected_diag, mvmf_sample};
use crate::dist::MvMFParams;
use crate::error::{Error, Result};

/// Default concentration scale: `κ_ℓ(x) = DEFAULT_KAPPA_SCALE / x`.
pub const DEFAULT_KAPPA_SCALE: f64 = 60.0;
/// Default length-noise scale: `s = ‖x‖₂ / DEFAULT_S_SCALE`.
pub const DEFAULT_S_SCALE: f64 = 150.0;
/// Default mis-specified noise scale: `w = x + (x / DEFAULT_MISSPEC_SCALE) ∘ ε`.
pub const DEFAULT_MISSPEC_SCALE: f64 = 4.0;

/// Which measurement process generates the replicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCase {
    WellSpecified,
    MisSpecified,
}

/// Full description of one synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimScenario {
    /// Number of subjects.
    pub n: usize,
    /// Replicates per subject (≥ 3).
    pub m: usize,
    /// Dimension.
    pub d: usize,
    pub case: NoiseCase,
    /// The latent truth density.
    pub truth: JointDensityModel,
    pub kappa_scale: f64,
    pub s_scale: f64,
    pub misspec_scale: f64,
    /// Use log-mean `+s²/2` instead of the mean-one `−s²/2` convention for
    /// the length factor. Off by default; the model being estimated assumes
    /// `E(r) = 1`.
    pub lognormal_positive_mean: bool,
    pub seed: u64,
}

impl SimScenario {
    /// Scenario with default noise scales.
    pub fn new(
        n: usize,
        m: usize,
        case: NoiseCase,
        truth: JointDensityModel,
        seed: u64,
    ) -> Result<Self> {
        let s = SimScenario {
            n,
            m,
            d: truth.dim(),
            case,
            truth,
            kappa_scale: DEFAULT_KAPPA_SCALE,
            s_scale: DEFAULT_S_SCALE,
            misspec_scale: DEFAULT_MISSPEC_SCALE,
            lognormal_positive_mean: false,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::validation("SimScenario: n must be >= 1"));
        }
        if self.m < MIN_REPLICATES {
            return Err(Error::validation(format!(
                "SimScenario: m must be >= {MIN_REPLICATES}"
            )));
        }
        if self.d < 2 {
            return Err(Error::validation("SimScenario: d must be >= 2"));
        }
        if self.truth.dim() != self.d {
            return Err(Error::validation(
                "SimScenario: truth dimension disagrees with d",
            ));
        }
        if !(self.kappa_scale > 0.0) || !(self.s_scale > 0.0) || !(self.misspec_scale > 0.0) {
            return Err(Error::validation("SimScenario: scales must be positive"));
        }
        Ok(())
    }
}

/// AR-style correlation matrix `R_{ij} = ρ^{|i−j|}`.
pub fn ar_correlation(d: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| rho.powi((i as i64 - j as i64).abs() as i32))
}

/// Benchmark latent truth.
///
/// `d = 3` is a fixed configuration: three shared atoms at (2, 3, 5) with
/// common variance 0.75², per-dimension weights
/// (0.75, 0.25, 0) / (0.25, 0.50, 0.25) / (0.75, 0, 0.25), support [0, 6],
/// and correlation `0.7^{|i−j|}`. Equivalently, each dimension is a
/// three-component truncated-normal mixture with component probabilities
/// (0.25, 0.50, 0.25) and means (2,2,3), (2,3,5), (2,2,5).
///
/// For other `d` the correlation keeps the `0.7^{|i−j|}` structure and each
/// dimension gets its own three atoms with means drawn from Unif(1, 10),
/// probabilities (0.25, 0.50, 0.25) in increasing mean order, variance
/// 0.75², support [0, 12].
pub fn generate_truth_config(d: usize, rng: &mut impl Rng) -> Result<JointDensityModel> {
    if d < 2 {
        return Err(Error::domain("generate_truth_config: d must be >= 2"));
    }
    let rho = 0.7;
    let angles = CorrelationAngles::from_correlation(&ar_correlation(d, rho))?;
    if d == 3 {
        let atoms_mu = vec![2.0, 3.0, 5.0];
        let atoms_sigma2 = vec![0.5625; 3];
        let weights = vec![
            vec![0.75, 0.25, 0.0],
            vec![0.25, 0.50, 0.25],
            vec![0.75, 0.0, 0.25],
        ];
        return JointDensityModel::new(atoms_mu, atoms_sigma2, weights, 0.0, 6.0, angles);
    }
    // Each dimension owns three atoms; the shared atom list is the
    // concatenation and other dimensions give them zero weight.
    let mut atoms_mu = Vec::with_capacity(3 * d);
    let mut weights = vec![vec![0.0; 3 * d]; d];
    for l in 0..d {
        let mut mus: Vec<f64> = (0..3).map(|_| rng.random_range(1.0..10.0)).collect();
        mus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, mu) in mus.into_iter().enumerate() {
            atoms_mu.push(mu);
            weights[l][3 * l + k] = [0.25, 0.50, 0.25][k];
        }
    }
    let atoms_sigma2 = vec![0.5625; 3 * d];
    JointDensityModel::new(atoms_mu, atoms_sigma2, weights, 0.0, 12.0, angles)
}

/// Draw the latent matrix: `n` iid vectors from the scenario's truth density.
pub fn generate_latent(scenario: &SimScenario, rng: &mut impl Rng) -> Result<Vec<DVector<f64>>> {
    scenario.validate()?;
    let cache = CorrelationCache::from_angles(&scenario.truth.angles)?;
    (0..scenario.n)
        .map(|_| scenario.truth.sample(&cache, rng))
        .collect()
}

/// Replicates for one subject under the rotation model.
fn wellspec_subject(
    x: &DVector<f64>,
    scenario: &SimScenario,
    rng: &mut impl Rng,
) -> Result<Vec<DVector<f64>>> {
    let d = x.len();
    if x.iter().any(|&v| v <= 0.0) {
        return Err(Error::domain(
            "generate_replicates_wellspec: x entries must be positive (κ = scale/x)",
        ));
    }
    let f: Vec<f64> = x.iter().map(|&v| scenario.kappa_scale / v).collect();
    let params = MvMFParams::new(f)?;
    let ediag = mvmf_expected_diag(&params)?;
    let c: Vec<f64> = ediag.iter().map(|e| 1.0 / e).collect();
    let s = x.norm() / scenario.s_scale;
    let s2 = s * s;
    let log_mean = if scenario.lognormal_positive_mean {
        s2 / 2.0
    } else {
        -s2 / 2.0
    };
    let mut out = Vec::with_capacity(scenario.m);
    for _ in 0..scenario.m {
        let q = mvmf_sample(&params, rng);
        let z: f64 = StandardNormal.sample(rng);
        let r = (log_mean + s * z).exp();
        let qx = &q * x;
        out.push(DVector::from_fn(d, |l, _| r * c[l] * qx[l]));
    }
    Ok(out)
}

/// Replicates for one subject under the additive model.
fn misspec_subject(
    x: &DVector<f64>,
    scenario: &SimScenario,
    rng: &mut impl Rng,
) -> Vec<DVector<f64>> {
    let d = x.len();
    (0..scenario.m)
        .map(|_| {
            DVector::from_fn(d, |l, _| {
                let eps: f64 = StandardNormal.sample(rng);
                x[l] + x[l] / scenario.misspec_scale * eps
            })
        })
        .collect()
}

fn assemble<F>(x_matrix: &[DVector<f64>], scenario: &SimScenario, mut gen: F) -> Result<ReplicateDataset>
where
    F: FnMut(&DVector<f64>, &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>>,
{
    scenario.validate()?;
    let mut subjects = Vec::with_capacity(x_matrix.len());
    for (i, x) in x_matrix.iter().enumerate() {
        if x.len() != scenario.d {
            return Err(Error::domain("replicate generation: x dimension mismatch"));
        }
        // Independent substream per subject, so generation is
        // order-independent and parallelizable without changing output.
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        rng.set_stream(i as u64 + 1);
        subjects.push(Subject {
            id: format!("{}", i + 1),
            replicates: gen(x, &mut rng)?,
        });
    }
    ReplicateDataset::new(scenario.d, subjects)
}

/// Rotation-model replicates for every row of `x_matrix`.
pub fn generate_replicates_wellspec(
    x_matrix: &[DVector<f64>],
    scenario: &SimScenario,
) -> Result<ReplicateDataset> {
    assemble(x_matrix, scenario, |x, rng| wellspec_subject(x, scenario, rng))
}

/// Additive-model replicates for every row of `x_matrix`.
pub fn generate_replicates_misspec(
    x_matrix: &[DVector<f64>],
    scenario: &SimScenario,
) -> Result<ReplicateDataset> {
    assemble(x_matrix, scenario, |x, rng| Ok(misspec_subject(x, scenario, rng)))
}

/// Ground truth saved next to a simulated dataset: the scenario (including
/// the truth density) and the latent matrix, for later evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub scenario: SimScenario,
    /// Latent vectors, one row per subject.
    pub x: Vec<Vec<f64>>,
}

impl TruthSidecar {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }

    pub fn x_vectors(&self) -> Vec<DVector<f64>> {
        self.x
            .iter()
            .map(|row| DVector::from_vec(row.clone()))
            .collect()
    }
}

/// One full simulation: latent draw plus replicates, all determined by
/// `scenario.seed`.
pub fn simulate(scenario: &SimScenario) -> Result<(ReplicateDataset, TruthSidecar)> {
    scenario.validate()?;
    // Stream 0 drives the latent draw; streams 1.. drive the subjects.
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let x = generate_latent(scenario, &mut rng)?;
    let data = match scenario.case {
        NoiseCase::WellSpecified => generate_replicates_wellspec(&x, scenario)?,
        NoiseCase::MisSpecified => generate_replicates_misspec(&x, scenario)?,
    };
    let sidecar = TruthSidecar {
        scenario: scenario.clone(),
        x: x.iter().map(|v| v.as_slice().to_vec()).collect(),
    };
    Ok((data, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::cond_cov_from_f;

    fn d3_scenario(n: usize, m: usize, case: NoiseCase, seed: u64) -> SimScenario {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let truth = generate_truth_config(3, &mut rng).unwrap();
        SimScenario::new(n, m, case, truth, seed).unwrap()
    }

    #[test]
    fn truth_config_d3_matches_fixed_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = generate_truth_config(3, &mut rng).unwrap();
        let r = t.angles.correlation();
        assert!((r[(0, 2)] - 0.49).abs() < 1e-12, "R13 = {}", r[(0, 2)]);
        assert!((r[(0, 1)] - 0.7).abs() < 1e-12);
        assert_eq!(t.atoms_mu, vec![2.0, 3.0, 5.0]);
        // Dimension 2's mixture has means (2,3,5) with probs (0.25,0.5,0.25).
        assert_eq!(t.weights[1], vec![0.25, 0.50, 0.25]);
        assert_eq!(t.weights[0], vec![0.75, 0.25, 0.0]);
        assert_eq!(t.weights[2], vec![0.75, 0.0, 0.25]);
        assert!(t.atoms_sigma2.iter().all(|&s| (s - 0.5625).abs() < 1e-15));
        assert_eq!((t.a_bound, t.b_bound), (0.0, 6.0));
    }

    #[test]
    fn truth_config_general_d_unit_diag_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [2usize, 5, 10] {
            let t = generate_truth_config(d, &mut rng).unwrap();
            let r = t.angles.correlation();
            for i in 0..d {
                assert!((r[(i, i)] - 1.0).abs() < 1e-12);
            }
            assert!(r.clone().cholesky().is_some(), "R not PD for d={d}");
            // Every dimension's weights sum to 1 and sit on its own atoms.
            for l in 0..d {
                let sum: f64 = t.weights[l].iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
            assert!(t.atoms_mu.iter().all(|&m| (1.0..10.0).contains(&m)));
        }
    }

    #[test]
    fn latent_marginal_ks_and_score_correlation() {
        let sc = d3_scenario(5000, 3, NoiseCase::WellSpecified, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = generate_latent(&sc, &mut rng).unwrap();
        assert!(x.iter().all(|v| v.iter().all(|&e| (0.0..=6.0).contains(&e))));

        // KS on dimension 2 against the mixture cdf at alpha = 0.01.
        let marg = sc.truth.marginal(1).unwrap();
        let mut vals: Vec<f64> = x.iter().map(|v| v[1]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len() as f64;
        let mut d_stat = 0.0f64;
        for (i, v) in vals.iter().enumerate() {
            let cdf = marg.cdf(*v);
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            d_stat = d_stat.max((cdf - lo).abs()).max((cdf - hi).abs());
        }
        let crit = 1.628 / n.sqrt();
        assert!(d_stat < crit, "KS D = {d_stat}, crit = {crit}");

        // Pearson correlation of Gaussian scores ≈ R entries within ±0.05.
        let scores: Vec<DVector<f64>> = x.iter().map(|v| sc.truth.scores(v).unwrap()).collect();
        let r = sc.truth.angles.correlation();
        for (a, b) in [(0usize, 1usize), (1, 2), (0, 2)] {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for y in &scores {
                sa += y[a];
                sb += y[b];
                saa += y[a] * y[a];
                sbb += y[b] * y[b];
                sab += y[a] * y[b];
            }
            let corr = (sab / n - sa / n * (sb / n))
                / ((saa / n - (sa / n).powi(2)).sqrt() * (sbb / n - (sb / n).powi(2)).sqrt());
            assert!(
                (corr - r[(a, b)]).abs() < 0.05,
                "score corr({a},{b}) = {corr}, want {}",
                r[(a, b)]
            );
        }
    }

    #[test]
    fn wellspec_conditional_mean_and_length_factor() {
        // One subject, many replicates: the empirical mean must recover x.
        let truth = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            generate_truth_config(3, &mut rng).unwrap()
        };
        let mut sc = SimScenario::new(1, 10_000, NoiseCase::WellSpecified, truth, 42).unwrap();
        sc.m = 10_000;
        let x = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let ds = generate_replicates_wellspec(&[x.clone()], &sc).unwrap();
        let reps = &ds.subjects[0].replicates;
        let nm = reps.len() as f64;
        let mean = ds.subjects[0].mean();
        for l in 0..3 {
            let var: f64 =
                reps.iter().map(|w| (w[l] - mean[l]).powi(2)).sum::<f64>() / (nm - 1.0);
            let se = (var / nm).sqrt();
            assert!(
                (mean[l] - x[l]).abs() < 3.0 * se,
                "dim {l}: mean {} vs x {} (se {se})",
                mean[l],
                x[l]
            );
        }
    }

    #[test]
    fn wellspec_covariance_exceeds_diagonal_only_prediction() {
        // The closed-form covariance diagnostic keeps only the fluctuation of
        // the rotation's diagonal; the off-diagonal rotation entries add
        // O(1/f) variance that the formula omits. Pin the direction and
        // magnitude of that gap so the diagnostic's meaning stays documented:
        // empirical variances must exceed the prediction, and adding the
        // leading off-diagonal second moment Σ_{a≠l} x_a²/(f_l+f_a) must
        // close most of the gap.
        let truth = {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            generate_truth_config(3, &mut rng).unwrap()
        };
        let sc = SimScenario::new(1, 20_000, NoiseCase::WellSpecified, truth, 7).unwrap();
        let x = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let ds = generate_replicates_wellspec(&[x.clone()], &sc).unwrap();
        let reps = &ds.subjects[0].replicates;
        let nm = reps.len() as f64;
        let mean = ds.subjects[0].mean();
        let mut cov = DMatrix::zeros(3, 3);
        for w in reps {
            let dlt = w - &mean;
            cov += &dlt * dlt.transpose();
        }
        cov /= nm - 1.0;

        let f: Vec<f64> = x.iter().map(|&v| sc.kappa_scale / v).collect();
        let s2 = (x.norm() / sc.s_scale).powi(2);
        let pred = cond_cov_from_f(&f, &x, s2).unwrap();

        let params = MvMFParams::new(f.clone()).unwrap();
        let ediag = mvmf_expected_diag(&params).unwrap();
        for l in 0..3 {
            assert!(
                cov[(l, l)] > pred[(l, l)],
                "dim {l}: empirical {} vs predicted {}",
                cov[(l, l)],
                pred[(l, l)]
            );
            let c_l = 1.0 / ediag[l];
            let correction: f64 = (0..3)
                .filter(|&a| a != l)
                .map(|a| x[a] * x[a] / (f[l] + f[a]))
                .sum::<f64>()
                * c_l
                * c_l
                * s2.exp();
            let corrected = pred[(l, l)] + correction;
            assert!(
                (cov[(l, l)] - corrected).abs() / corrected < 0.15,
                "dim {l}: empirical {} vs corrected {}",
                cov[(l, l)],
                corrected
            );
        }
    }

    #[test]
    fn length_factor_mean_one() {
        // Mean-one construction: E(w_l) = x_l already checks E(r) = 1 through
        // the model; verify the flag flips the convention.
        let truth = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            generate_truth_config(3, &mut rng).unwrap()
        };
        let mut sc = SimScenario::new(1, 5000, NoiseCase::WellSpecified, truth, 9).unwrap();
        sc.s_scale = 2.0; // exaggerate the length noise so the shift is visible
        let x = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let base = generate_replicates_wellspec(&[x.clone()], &sc).unwrap();
        sc.lognormal_positive_mean = true;
        let shifted = generate_replicates_wellspec(&[x.clone()], &sc).unwrap();
        let m0 = base.subjects[0].mean().norm();
        let m1 = shifted.subjects[0].mean().norm();
        let s2 = (x.norm() / sc.s_scale).powi(2);
        // log-mean +s²/2 inflates E(r) by e^{s²}.
        let ratio = m1 / m0;
        assert!(
            (ratio - s2.exp()).abs() < 0.05 * s2.exp(),
            "ratio {ratio}, expect {}",
            s2.exp()
        );
    }

    #[test]
    fn misspec_moments_and_independence() {
        let truth = {
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            generate_truth_config(3, &mut rng).unwrap()
        };
        let sc = SimScenario::new(1, 10_000, NoiseCase::MisSpecified, truth, 13).unwrap();
        let x = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let ds = generate_replicates_misspec(&[x.clone()], &sc).unwrap();
        let reps = &ds.subjects[0].replicates;
        let nm = reps.len() as f64;
        let mean = ds.subjects[0].mean();
        for l in 0..3 {
            let sd_true = x[l] / sc.misspec_scale;
            let se = sd_true / nm.sqrt();
            assert!((mean[l] - x[l]).abs() < 3.0 * se, "mean dim {l}");
            let var: f64 =
                reps.iter().map(|w| (w[l] - mean[l]).powi(2)).sum::<f64>() / (nm - 1.0);
            // SE of the sd is about sd/√(2n).
            let sd = var.sqrt();
            assert!(
                (sd - sd_true).abs() < 3.0 * sd_true / (2.0 * nm).sqrt(),
                "sd dim {l}: {sd} vs {sd_true}"
            );
        }
        // Noise coordinates are independent: correlations within 3/√n of 0.
        for (a, b) in [(0usize, 1usize), (1, 2), (0, 2)] {
            let mut sab = 0.0;
            let (mut saa, mut sbb) = (0.0, 0.0);
            for w in reps {
                let da = w[a] - mean[a];
                let db = w[b] - mean[b];
                sab += da * db;
                saa += da * da;
                sbb += db * db;
            }
            let corr = sab / (saa.sqrt() * sbb.sqrt());
            assert!(corr.abs() < 3.0 / nm.sqrt(), "corr({a},{b}) = {corr}");
        }
    }

    #[test]
    fn generator_consistent_with_conditional_likelihood() {
        // Average conditional log-likelihood of generated pairs (w, x) must
        // beat the same data scored at a 10%-inflated x.
        use crate::likelihood::{cond_loglik, HeteroFuncs};
        use crate::spline::CubicBasis;

        let truth = {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            generate_truth_config(3, &mut rng).unwrap()
        };
        let sc = SimScenario::new(60, 5, NoiseCase::WellSpecified, truth, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = generate_latent(&sc, &mut rng).unwrap();
        let ds = generate_replicates_wellspec(&x, &sc).unwrap();

        // Spline fit of κ(t) = 60/t on the latent range, so the likelihood's
        // spline-based concentrations match the generator's.
        let basis = CubicBasis::new(0.5, 6.5, 10).unwrap();
        let grid: Vec<f64> = (0..200).map(|i| 0.5 + 6.0 * i as f64 / 199.0).collect();
        let a = DMatrix::from_fn(grid.len(), basis.len(), |i, j| {
            basis.eval(grid[i]).values[j]
        });
        let target = DVector::from_iterator(grid.len(), grid.iter().map(|t| 60.0 / t));
        let beta = crate::sampler::nnls(&a, &target);
        // s²(t) at t = ‖x‖/d where s = ‖x‖/150 means s²(t) = (3t/150)².
        let s_target = DVector::from_iterator(grid.len(), grid.iter().map(|t| (3.0 * t / 150.0_f64).powi(2)));
        let beta_s = crate::sampler::nnls(&a, &s_target);
        let hetero = HeteroFuncs::new(
            vec![beta.iter().copied().collect(); 3],
            beta_s.iter().copied().collect(),
            basis,
        )
        .unwrap();

        let (mut ll_true, mut ll_pert, mut count) = (0.0, 0.0, 0);
        for (i, subj) in ds.subjects.iter().enumerate() {
            let xp = &x[i] * 1.1;
            for w in &subj.replicates {
                if let (Ok(a), Ok(b)) = (
                    cond_loglik(w, &x[i], &hetero),
                    cond_loglik(w, &xp, &hetero),
                ) {
                    ll_true += a;
                    ll_pert += b;
                    count += 1;
                }
            }
        }
        assert!(count > 200, "too few scorable replicates: {count}");
        assert!(
            ll_true > ll_pert,
            "avg loglik at truth {} not above perturbed {}",
            ll_true / count as f64,
            ll_pert / count as f64
        );
    }

    #[test]
    fn seeded_determinism_and_sidecar_roundtrip() {
        let sc = d3_scenario(20, 4, NoiseCase::WellSpecified, 99);
        let (d1, t1) = simulate(&sc).unwrap();
        let (d2, _) = simulate(&sc).unwrap();
        for (a, b) in d1.subjects.iter().zip(&d2.subjects) {
            assert_eq!(a.id, b.id);
            for (wa, wb) in a.replicates.iter().zip(&b.replicates) {
                assert_eq!(wa, wb, "datasets differ despite equal seeds");
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.json");
        t1.write_json(&path).unwrap();
        let back = TruthSidecar::read_json(&path).unwrap();
        assert_eq!(back.x, t1.x);
        assert_eq!(back.scenario.seed, sc.seed);
        assert_eq!(back.x_vectors()[3], DVector::from_vec(t1.x[3].clone()));
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let truth = {
            let mut rng = ChaCha8Rng::seed_from_u64(10);
            generate_truth_config(3, &mut rng).unwrap()
        };
        assert!(SimScenario::new(0, 3, NoiseCase::WellSpecified, truth.clone(), 1).is_err());
        assert!(SimScenario::new(5, 2, NoiseCase::WellSpecified, truth.clone(), 1).is_err());
        // Zero latent coordinate is a domain error under the rotation model.
        let sc = SimScenario::new(1, 3, NoiseCase::WellSpecified, truth, 1).unwrap();
        let x = DVector::from_vec(vec![0.0, 3.0, 5.0]);
        assert!(matches!(
            generate_replicates_wellspec(&[x], &sc),
            Err(Error::Domain(_))
        ));
    }
}
