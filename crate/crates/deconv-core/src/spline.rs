//! Clamped cubic B-spline basis on `[A, B]` with equidistant interior knots.
//!
//! The variance functions of the measurement model are expanded in this
//! basis:
//!
//! ```text
//!     κ_l(x)  = Σ_k β_{κ,l,k} B_k(x),        s²(t) = Σ_k β_{s,k} B_k(t),
//! ```
//!
//! with nonnegative coefficients so the expansions stay nonnegative.
//!
//! The knot vector repeats each boundary knot four times (clamped ends), so
//! `K_int` equal subintervals of `[A, B]` yield `K_int + 3` basis functions
//! that are nonnegative, sum to one everywhere on `[A, B]`, and are C² at the
//! interior knots. The default `K_int = 10` gives 13 basis functions.
//!
//! Evaluation uses the Cox–de Boor recursion, which handles the repeated
//! boundary knots without special cases. Out-of-range arguments are clamped
//! to the boundary and flagged, because the sampler evaluates `s²(‖x‖₂/d)` at
//! points that can drift past `B` for extreme latent draws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spline degree (cubic).
const DEGREE: usize = 3;

/// Cubic B-spline basis over `[a_bound, b_bound]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubicBasis {
    a_bound: f64,
    b_bound: f64,
    num_intervals: usize,
    /// Full clamped knot vector, length `num_intervals + 7`.
    knots: Vec<f64>,
}

/// Basis values at a point, plus whether the point had to be clamped.
#[derive(Debug, Clone)]
pub struct BasisEval {
    pub values: Vec<f64>,
    pub clamped: bool,
}

impl CubicBasis {
    /// Basis on `[a, b]` with `num_intervals` equal subintervals
    /// (`num_intervals + 3` basis functions).
    pub fn new(a: f64, b: f64, num_intervals: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::domain("CubicBasis: invalid bounds"));
        }
        if num_intervals < 1 {
            return Err(Error::domain("CubicBasis: need at least one interval"));
        }
        let mut knots = Vec::with_capacity(num_intervals + 7);
        for _ in 0..DEGREE {
            knots.push(a);
        }
        let delta = (b - a) / num_intervals as f64;
        for i in 0..=num_intervals {
            knots.push(a + delta * i as f64);
        }
        for _ in 0..DEGREE {
            knots.push(b);
        }
        Ok(CubicBasis {
            a_bound: a,
            b_bound: b,
            num_intervals,
            knots,
        })
    }

    pub fn a_bound(&self) -> f64 {
        self.a_bound
    }

    pub fn b_bound(&self) -> f64 {
        self.b_bound
    }

    pub fn num_intervals(&self) -> usize {
        self.num_intervals
    }

    /// Number of basis functions, `num_intervals + 3`.
    pub fn len(&self) -> usize {
        self.num_intervals + DEGREE
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the knot interval `[t_j, t_{j+1})` containing `x`, restricted
    /// to the non-degenerate span range.
    fn span(&self, x: f64) -> usize {
        // Valid spans are DEGREE .. DEGREE + num_intervals - 1.
        let delta = (self.b_bound - self.a_bound) / self.num_intervals as f64;
        let raw = ((x - self.a_bound) / delta).floor() as isize;
        let clamped = raw.clamp(0, self.num_intervals as isize - 1) as usize;
        clamped + DEGREE
    }

    /// All basis function values at `x` (Cox–de Boor). `x` outside `[A, B]`
    /// is clamped to the boundary and reported via `clamped`.
    pub fn eval(&self, x: f64) -> BasisEval {
        let clamped = x < self.a_bound || x > self.b_bound;
        let x = x.clamp(self.a_bound, self.b_bound);
        let mut values = vec![0.0; self.len()];
        let span = self.span(x);

        // de Boor's algorithm for the DEGREE+1 nonzero functions on the span.
        let t = &self.knots;
        let mut n = [0.0f64; DEGREE + 1];
        let mut left = [0.0f64; DEGREE + 1];
        let mut right = [0.0f64; DEGREE + 1];
        n[0] = 1.0;
        for j in 1..=DEGREE {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for (r, &v) in n.iter().enumerate() {
            values[span - DEGREE + r] = v;
        }
        BasisEval { values, clamped }
    }

    /// `Σ_k coeffs_k B_k(x)`; a convex combination of the active coefficients.
    pub fn eval_function(&self, coeffs: &[f64], x: f64) -> Result<f64> {
        if coeffs.len() != self.len() {
            return Err(Error::domain(format!(
                "eval_function: {} coefficients for a {}-function basis",
                coeffs.len(),
                self.len()
            )));
        }
        let b = self.eval(x);
        Ok(b
            .values
            .iter()
            .zip(coeffs)
            .map(|(bv, c)| bv * c)
            .sum::<f64>())
    }

    /// Interior knot positions `t_2, …` (excluding boundaries).
    pub fn interior_knots(&self) -> impl Iterator<Item = f64> + '_ {
        let delta = (self.b_bound - self.a_bound) / self.num_intervals as f64;
        (1..self.num_intervals).map(move |i| self.a_bound + delta * i as f64)
    }
}
