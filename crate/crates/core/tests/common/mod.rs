//! Oracles shared by the integration suites and the acceptance harness.
#![allow(dead_code)]

use multibubble::configuration::InteractionMatrix;
use nalgebra::{DMatrix, DVector};

pub fn point(coords: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; 7];
    p[..coords.len()].copy_from_slice(coords);
    p
}

/// `|A c| / (|A|_2 |c|)`, the quantity the kernel cutoff is measured in.
pub fn rel_residual(a: &InteractionMatrix, c: &[f64]) -> f64 {
    let v = DVector::from_column_slice(c);
    let smax = a.entries().clone().singular_values().max();
    (a.entries() * &v).norm() / (smax * v.norm())
}

/// Minimum of `rel_residual` over the simplex: a coarse grid plus the exact
/// minimizer on every face. Each face is solved as an unconstrained least
/// squares problem in the affine chart `c = e/m + N y` via SVD, so residuals
/// near machine precision are resolved without squaring the condition number.
pub fn simplex_oracle(a: &InteractionMatrix) -> f64 {
    let j = a.len();
    let mut best = f64::INFINITY;
    let steps = 24usize;
    let mut idx = vec![0usize; j];
    loop {
        let total: usize = idx.iter().sum();
        if total == steps {
            let c: Vec<f64> = idx.iter().map(|&k| k as f64 / steps as f64).collect();
            best = best.min(rel_residual(a, &c));
        }
        let mut k = 0;
        while k < j {
            idx[k] += 1;
            if idx.iter().sum::<usize>() <= steps {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == j {
            break;
        }
    }
    for mask in 1u32..(1 << j) {
        let face: Vec<usize> = (0..j).filter(|&i| mask & (1 << i) != 0).collect();
        let m = face.len();
        let cols = DMatrix::from_fn(j, m, |r, c| a.get(r, face[c]));
        let c0 = DVector::from_element(m, 1.0 / m as f64);
        let sol = if m == 1 {
            c0
        } else {
            // Orthonormal basis of {y : sum y = 0} from the QR of [1 | I].
            let mut basis_src = DMatrix::identity(m, m);
            basis_src.set_column(0, &DVector::from_element(m, 1.0));
            let q = basis_src.qr().q();
            let basis = q.columns(1, m - 1).into_owned();
            let lhs = &cols * &basis;
            let rhs = -(&cols * &c0);
            match lhs.svd(true, true).solve(&rhs, 1e-300) {
                Ok(y) => c0 + basis * y,
                Err(_) => continue,
            }
        };
        if (0..m).all(|k| sol[k] >= 0.0 && sol[k].is_finite()) {
            let mut c = vec![0.0; j];
            for (k, &i) in face.iter().enumerate() {
                c[i] = sol[k];
            }
            best = best.min(rel_residual(a, &c));
        }
    }
    best
}

/// Keeps the ratio of largest to smallest pairwise distance bounded, so that
/// no sub-configuration is numerically decoupled from the rest.
pub fn well_separated(points: &[Vec<f64>]) -> bool {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..points.len() {
        for k in i + 1..points.len() {
            let d: f64 = points[i]
                .iter()
                .zip(&points[k])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    hi <= 6.0 * lo
}

/// `Gamma(k/2)` from the half-integer recursions, independent of the crate.
pub fn gamma_of_half(k: u32) -> f64 {
    let mut g = if k.is_multiple_of(2) {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut x = if k.is_multiple_of(2) { 1.0 } else { 0.5 };
    while x < k as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// `B(a/2, b/2)`.
pub fn beta_half(a: u32, b: u32) -> f64 {
    gamma_of_half(a) * gamma_of_half(b) / gamma_of_half(a + b)
}

/// Closed forms via `u = r^2 / (N(N-2))`, which turns every radial integral
/// into a combination of Beta functions.
pub struct BetaOracle {
    pub w_p: f64,
    pub w_p1: f64,
    pub grad_sq: f64,
    pub lambda_sq: f64,
}

pub fn beta_oracle(n: u32) -> BetaOracle {
    let nf = n as f64;
    let d = (nf - 2.0) / 2.0;
    let a2 = nf * (nf - 2.0);
    let sphere = 2.0 * std::f64::consts::PI.powf(nf / 2.0) / gamma_of_half(n);
    let pre = sphere * a2.powf(nf / 2.0) / 2.0;
    let b00 = beta_half(n, n);
    let b1m1 = beta_half(n + 2, n - 2);
    let b2m2 = beta_half(n + 4, n - 4);
    BetaOracle {
        w_p: pre * beta_half(n, 2),
        w_p1: pre * b00,
        grad_sq: pre * 4.0 * d * d / a2 * b1m1,
        lambda_sq: pre * d * d * (b00 - 2.0 * b1m1 + b2m2),
    }
}
