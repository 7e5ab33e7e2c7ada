//! Closed-form factorization of one vector as a scaled rotation of another.
//!
//! For nonzero `a`, `b` of equal dimension we want an orthogonal `Q` and a
//! positive scalar `s` with
//!
//! ```text
//!     a = s · Q · b ,      s = ‖a‖₂ / ‖b‖₂ .
//! ```
//!
//! The construction composes two Householder reflections. With
//! `a_i = a + ‖a‖₂ e_i` the reflector
//!
//! ```text
//!     H(a) = I_d − 2 a_i a_iᵀ / ‖a_i‖₂²
//! ```
//!
//! maps `a ↦ −‖a‖₂ e_i`, and `G(a, b) = H(a) H(b)` maps `b`'s direction onto
//! `a`'s. Being the product of two reflections, `G` is a proper rotation
//! (det +1). `G(a, b) = I` exactly when `a/‖a‖ = b/‖b‖`.
//!
//! The same axis index must be used for both reflectors; the default is the
//! first axis, falling back to the next one when either input is nearly
//! anti-parallel to it (in which case `a + ‖a‖e_i` suffers catastrophic
//! cancellation).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which `‖a + ‖a‖e_i‖` counts as degenerate and the
/// reflection axis falls back to the next index.
pub const DEGENERATE_AXIS_TOL: f64 = 1e-14;

/// Orthogonal factor and scale solving `a = s · q · b`.
#[derive(Debug, Clone)]
pub struct RotationFactorization {
    /// Proper rotation matrix (d×d, det +1).
    pub q: DMatrix<f64>,
    /// Norm ratio ‖a‖₂/‖b‖₂ (> 0).
    pub s: f64,
}

/// Householder reflector `H(a) = I − 2 a_i a_iᵀ/‖a_i‖²` with `a_i = a + ‖a‖ e_axis`.
///
/// Maps `a` to `−‖a‖ e_axis`. `axis` is zero-based.
pub fn householder_to_axis(a: &DVector<f64>, axis: usize) -> Result<DMatrix<f64>> {
    let d = a.len();
    if axis >= d {
        return Err(Error::domain(format!("axis {axis} out of range for d={d}")));
    }
    let norm = a.norm();
    if norm == 0.0 {
        return Err(Error::domain("householder_to_axis: zero vector"));
    }
    let mut v = a.clone();
    v[axis] += norm;
    let vnorm2 = v.norm_squared();
    if vnorm2.sqrt() <= DEGENERATE_AXIS_TOL * norm {
        return Err(Error::domain(
            "householder_to_axis: input anti-parallel to reflection axis",
        ));
    }
    let mut h = DMatrix::identity(d, d);
    // H = I − 2 v vᵀ / ‖v‖²  (rank-one update kept explicit: d is small).
    for i in 0..d {
        for j in 0..d {
            h[(i, j)] -= 2.0 * v[i] * v[j] / vnorm2;
        }
    }
    Ok(h)
}

/// Pick the first axis on which neither `a` nor `b` is degenerate.
fn usable_axis(a: &DVector<f64>, b: &DVector<f64>) -> usize {
    let (na, nb) = (a.norm(), b.norm());
    for axis in 0..a.len() {
        let da = {
            let mut v = a.clone();
            v[axis] += na;
            v.norm() > DEGENERATE_AXIS_TOL * na
        };
        let db = {
            let mut v = b.clone();
            v[axis] += nb;
            v.norm() > DEGENERATE_AXIS_TOL * nb
        };
        if da && db {
            return axis;
        }
    }
    // Unreachable for d ≥ 2: a vector cannot be anti-parallel to every axis.
    0
}

/// Factor `a = s·q·b` with `q = H(a)H(b)` and `s = ‖a‖/‖b‖`.
pub fn solve_rotation(a: &DVector<f64>, b: &DVector<f64>) -> Result<RotationFactorization> {
    solve_rotation_with_axis(a, b, None)
}

/// As [`solve_rotation`], with an explicit reflection axis (zero-based) for
/// testing; `None` selects the default axis with the degeneracy fallback.
pub fn solve_rotation_with_axis(
    a: &DVector<f64>,
    b: &DVector<f64>,
    axis: Option<usize>,
) -> Result<RotationFactorization> {
    if a.len() != b.len() {
        return Err(Error::domain(format!(
            "solve_rotation: dimension mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("solve_rotation: zero vector"));
    }
    let axis = axis.unwrap_or_else(|| usable_axis(a, b));
    let ha = householder_to_axis(a, axis)?;
    let hb = householder_to_axis(b, axis)?;
    Ok(RotationFactorization {
        q: ha * hb,
        s: na / nb,
    })
}

/// Diagonal of `G(a, b) = H(a)H(b)` in O(d) without forming the matrices.
///
/// Used by the likelihood hot path, which only needs `trace(G·F)` for
/// diagonal `F`. With `u = a + ‖a‖e_axis`, `v = b + ‖b‖e_axis`:
///
/// ```text
///     G_ll = 1 − 2u_l²/‖u‖² − 2v_l²/‖v‖² + 4(uᵀv) u_l v_l / (‖u‖²‖v‖²).
/// ```
///
/// Agreement with the dense product is asserted in tests.
pub fn rotation_diagonal(a: &DVector<f64>, b: &DVector<f64>, out: &mut [f64]) -> Result<()> {
    let d = a.len();
    if b.len() != d || out.len() != d {
        return Err(Error::domain("rotation_diagonal: dimension mismatch"));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::domain("rotation_diagonal: zero vector"));
    }
    let axis = usable_axis(a, b);
    let mut u2 = 0.0;
    let mut v2 = 0.0;
    let mut uv = 0.0;
    for l in 0..d {
        let u = a[l] + if l == axis { na } else { 0.0 };
        let v = b[l] + if l == axis { nb } else { 0.0 };
        u2 += u * u;
        v2 += v * v;
        uv += u * v;
    }
    for l in 0..d {
        let u = a[l] + if l == axis { na } else { 0.0 };
        let v = b[l] + if l == axis { nb } else { 0.0 };
        out[l] = 1.0 - 2.0 * u * u / u2 - 2.0 * v * v / v2 + 4.0 * uv * u * v / (u2 * v2);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn randvec(rng: &mut impl Rng, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.random::<f64>() * 4.0 - 2.0)
    }

    #[test]
    fn householder_identity_axis() {
        // a = e₁: a_1 = 2e₁, so H = I − 2e₁e₁ᵀ and H·e₁ = −e₁.
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let h = householder_to_axis(&a, 0).unwrap();
        let ha = &h * &a;
        assert!((ha[0] + 1.0).abs() < 1e-15 && ha[1].abs() < 1e-15 && ha[2].abs() < 1e-15);
    }

    #[test]
    fn householder_pythagorean() {
        let a = DVector::from_vec(vec![3.0, 4.0, 0.0]);
        let h = householder_to_axis(&a, 0).unwrap();
        let ha = &h * &a;
        assert!((ha[0] + 5.0).abs() < 1e-12);
        assert!(ha[1].abs() < 1e-12 && ha[2].abs() < 1e-12);
    }

    #[test]
    fn householder_random_maps_to_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = randvec(&mut rng, 5);
            let h = householder_to_axis(&a, 0).unwrap();
            let mut target = DVector::zeros(5);
            target[0] = -a.norm();
            assert!(((&h * &a) - target).norm() <= 1e-12 * a.norm());
            // Involution: H² = I.
            let hh = &h * &h;
            assert!((hh - DMatrix::<f64>::identity(5, 5)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn solve_identity_and_collinear() {
        let a = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let f = solve_rotation(&a, &a).unwrap();
        assert!((&f.q - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
        assert!((f.s - 1.0).abs() < 1e-14);

        let b = a.clone();
        let a2 = 2.0 * &a;
        let f = solve_rotation(&a2, &b).unwrap();
        assert!((&f.q - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
        assert!((f.s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn solve_reconstruction_orthogonality_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &d in &[2usize, 3, 5, 10] {
            for _ in 0..200 {
                let a = randvec(&mut rng, d);
                let b = randvec(&mut rng, d);
                if a.norm() < 1e-3 || b.norm() < 1e-3 {
                    continue;
                }
                let f = solve_rotation(&a, &b).unwrap();
                assert!((&a - f.s * &f.q * &b).norm() <= 1e-10 * a.norm());
                let qtq = f.q.transpose() * &f.q;
                assert!((qtq - DMatrix::<f64>::identity(d, d)).abs().max() <= 1e-12);
                assert!((f.q.determinant() - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let a = randvec(&mut rng, 4);
            let b = randvec(&mut rng, 4);
            let f1 = solve_rotation(&a, &b).unwrap();
            let f2 = solve_rotation(&(3.7 * &a), &(0.2 * &b)).unwrap();
            assert!((&f1.q - &f2.q).abs().max() < 1e-12);
        }
    }

    #[test]
    fn identity_iff_same_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let a = randvec(&mut rng, 3);
            let b = randvec(&mut rng, 3);
            let f = solve_rotation(&a, &b).unwrap();
            let dir_gap = (a.normalize() - b.normalize()).norm();
            let q_gap = (&f.q - DMatrix::<f64>::identity(3, 3)).abs().max();
            if dir_gap < 1e-12 {
                assert!(q_gap < 1e-12);
            } else {
                assert!(q_gap > 1e-12, "q=I for distinct directions (gap {dir_gap})");
            }
        }
    }

    #[test]
    fn antiparallel_fallback() {
        // a = −e₁ is degenerate on axis 0; solver must fall back and still be exact.
        let a = DVector::from_vec(vec![-1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 2.0, 0.0]);
        let f = solve_rotation(&a, &b).unwrap();
        assert!((&a - f.s * &f.q * &b).norm() <= 1e-12);
    }

    #[test]
    fn zero_and_mismatch_errors() {
        let z = DVector::zeros(3);
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(solve_rotation(&z, &a).is_err());
        assert!(solve_rotation(&a, &z).is_err());
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(solve_rotation(&a, &b).is_err());
        assert!(householder_to_axis(&z, 0).is_err());
    }

    #[test]
    fn diagonal_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for &d in &[2usize, 3, 7] {
            for _ in 0..100 {
                let a = randvec(&mut rng, d);
                let b = randvec(&mut rng, d);
                if a.norm() < 1e-3 || b.norm() < 1e-3 {
                    continue;
                }
                let f = solve_rotation(&a, &b).unwrap();
                let mut diag = vec![0.0; d];
                rotation_diagonal(&a, &b, &mut diag).unwrap();
                for l in 0..d {
                    assert!((diag[l] - f.q[(l, l)]).abs() < 1e-12);
                }
            }
        }
    }
}
