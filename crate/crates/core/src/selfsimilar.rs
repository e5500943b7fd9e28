//! Self-similar analysis of the non-degenerate regime.
//!
//! With `mu_i = t^(1/(2D-2)) l_i` and a fixed interaction matrix `A`, the
//! formal scale equations become `t dmu/dt = -grad I(mu)` where
//!
//! ```text
//! I(mu) = -(1/2D) sum_ij A_ij mu_i^D mu_j^D - (1/(4D-4)) sum_i mu_i^2
//! ```
//!
//! Critical points of `I` in the open positive orthant are the positive
//! solutions of `(A mu^D)_i + mu_i^(2-D) / (2D-2) = 0` (the ratio set).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::configuration::{interaction_matrix_for, InteractionMatrix};
use crate::constants::UniversalConstants;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

fn a_mu_d(a: &InteractionMatrix, mu: &[f64], d: f64) -> Vec<f64> {
    let p: Vec<f64> = mu.iter().map(|m| m.powf(d)).collect();
    (0..mu.len())
        .map(|i| (0..mu.len()).map(|j| a.get(i, j) * p[j]).sum())
        .collect()
}

pub fn functional_i(a: &InteractionMatrix, d: f64, mu: &[f64]) -> f64 {
    let amd = a_mu_d(a, mu, d);
    let quad: f64 = mu.iter().zip(&amd).map(|(m, x)| m.powf(d) * x).sum();
    let sq: f64 = mu.iter().map(|m| m * m).sum();
    -quad / (2.0 * d) - sq / (4.0 * d - 4.0)
}

/// `d I / d mu_i = -mu_i^(D-1) (A mu^D)_i - mu_i / (2D-2)`.
pub fn gradient(a: &InteractionMatrix, d: f64, mu: &[f64]) -> Vec<f64> {
    let amd = a_mu_d(a, mu, d);
    mu.iter()
        .zip(&amd)
        .map(|(m, x)| -m.powf(d - 1.0) * x - m / (2.0 * d - 2.0))
        .collect()
}

pub fn hessian(a: &InteractionMatrix, d: f64, mu: &[f64]) -> DMatrix<f64> {
    let j = mu.len();
    let amd = a_mu_d(a, mu, d);
    DMatrix::from_fn(j, j, |k, l| {
        let mut h = -d * mu[k].powf(d - 1.0) * a.get(k, l) * mu[l].powf(d - 1.0);
        if k == l {
            h += -(d - 1.0) * mu[k].powf(d - 2.0) * amd[k] - 1.0 / (2.0 * d - 2.0);
        }
        h
    })
}

/// Componentwise `(A mu^D)_i + mu_i^(2-D) / (2D-2)`.
pub fn ratio_set_residual(a: &InteractionMatrix, d: f64, mu: &[f64]) -> Vec<f64> {
    let amd = a_mu_d(a, mu, d);
    mu.iter()
        .zip(&amd)
        .map(|(m, x)| x + m.powf(2.0 - d) / (2.0 * d - 2.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub mu: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    /// Largest componentwise ratio-set residual.
    pub residual: f64,
    pub iterations: usize,
    pub hessian_signature: Signature,
}

fn signature(h: &DMatrix<f64>) -> Signature {
    let e = symmetric_eigen(h);
    let scale = e.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero_tol = 1e-9 * scale;
    Signature {
        positive: e.values.iter().filter(|&&v| v > zero_tol).count(),
        negative: e.values.iter().filter(|&&v| v < -zero_tol).count(),
        zero: e.values.iter().filter(|&&v| v.abs() <= zero_tol).count(),
    }
}

const MAX_NEWTON: usize = 200;

/// Damped Newton in `log mu` on the scaled residual
/// `s_i = 1 + (2D-2) mu_i^(D-2) (A mu^D)_i`, which vanishes exactly on the
/// ratio set. Armijo backtracking on `|s|^2`.
pub fn solve_ratio_set(a: &InteractionMatrix, d: f64, seed: &[f64]) -> Result<CriticalPoint> {
    let j = a.len();
    if seed.len() != j {
        return Err(Error::ShapeMismatch(format!(
            "seed has {} entries for J = {j}",
            seed.len()
        )));
    }
    if seed.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::Validation("seed must be strictly positive".into()));
    }
    let c = 2.0 * d - 2.0;
    let scaled = |u: &[f64]| -> Vec<f64> {
        let mu: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        let amd = a_mu_d(a, &mu, d);
        (0..j)
            .map(|i| 1.0 + c * mu[i].powf(d - 2.0) * amd[i])
            .collect()
    };
    let merit = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>();

    let mut u: Vec<f64> = seed.iter().map(|m| m.ln()).collect();
    let mut s = scaled(&u);
    let mut iterations = 0;
    loop {
        let mu: Vec<f64> = u.iter().map(|v| v.exp()).collect();
        let grad = gradient(a, d, &mu);
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mu_norm = mu.iter().map(|m| m * m).sum::<f64>().sqrt();
        let residual = ratio_set_residual(a, d, &mu)
            .iter()
            .fold(0.0f64, |m, r| m.max(r.abs()));
        let s_max = s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if (grad_norm <= 1e-11 * (1.0 + mu_norm) && residual <= 1e-10) || s_max <= 1e-15 {
            return Ok(CriticalPoint {
                value: functional_i(a, d, &mu),
                hessian_signature: signature(&hessian(a, d, &mu)),
                mu,
                grad_norm,
                residual,
                iterations,
            });
        }
        if iterations >= MAX_NEWTON {
            return Err(Error::NewtonDiverged {
                iterations,
                grad_norm,
            });
        }
        iterations += 1;

        let amd = a_mu_d(a, &mu, d);
        let jac = DMatrix::from_fn(j, j, |i, l| {
            let mut v = c * mu[i].powf(d - 2.0) * a.get(i, l) * d * mu[l].powf(d);
            if i == l {
                v += c * (d - 2.0) * mu[i].powf(d - 2.0) * amd[i];
            }
            v
        });
        let rhs = -DVector::from_column_slice(&s);
        let step = match jac.clone().lu().solve(&rhs) {
            Some(x) if x.iter().all(|v| v.is_finite()) => x,
            _ => jac
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .map_err(|_| Error::NewtonDiverged {
                    iterations,
                    grad_norm,
                })?,
        };
        // Keep a single step within a factor e^2 per component.
        let big = step.amax();
        let step = if big > 2.0 { step * (2.0 / big) } else { step };

        let m0 = merit(&s);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-10 {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let st = scaled(&trial);
            let mt = merit(&st);
            if mt.is_finite() && mt <= (1.0 - 1e-4 * t) * m0 {
                u = trial;
                s = st;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || u.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
            return Err(Error::NewtonDiverged {
                iterations,
                grad_norm,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowCheck {
    pub times: Vec<f64>,
    pub i_values: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub terminal_mu: Vec<f64>,
    /// Largest increase `I(t_{k+1}) - I(t_k)` inside the window.
    pub max_increase: f64,
    /// `|grad I|` at the window start over its value at the end.
    pub grad_reduction: f64,
    /// Terminal `mu` when the gradient decayed by at least 100x.
    pub limit_point: Option<Vec<f64>>,
    /// The reference size `((2D-2) max|A|)^(-1/(2D-2))` of the ratio set.
    pub mu_reference: f64,
}

/// Interaction matrix of the trajectory's terminal centers.
pub fn terminal_interaction(
    consts: &UniversalConstants,
    traj: &Trajectory,
) -> Result<InteractionMatrix> {
    interaction_matrix_for(consts, &traj.signs, &traj.last().centers)
}

/// Follows `mu(t) = t^(1/(2D-2)) l(t)` over the trailing `window_decades`
/// of `traj`, reporting `I(mu)` and `|grad I(mu)|` at each sample.
pub fn renormalized_flow_check(
    traj: &Trajectory,
    a: &InteractionMatrix,
    d: f64,
    window_decades: f64,
) -> Result<FlowCheck> {
    if a.len() != traj.signs.len() {
        return Err(Error::ShapeMismatch(
            "matrix and trajectory sizes differ".into(),
        ));
    }
    let t_end = traj.last().t;
    let t_lo = t_end / 10f64.powf(window_decades);
    let first = traj
        .samples
        .iter()
        .find(|s| s.t > 0.0)
        .map_or(f64::INFINITY, |s| s.t);
    if !(t_end > 0.0) || t_lo < first.max(f64::MIN_POSITIVE) {
        return Err(Error::WindowTooShort {
            requested: window_decades,
            available: if t_end > first {
                (t_end / first).log10()
            } else {
                0.0
            },
        });
    }
    let alpha = 1.0 / (2.0 * d - 2.0);
    let amax = a.entries().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mu_reference = ((2.0 * d - 2.0) * amax).powf(-alpha);

    let mut times = Vec::new();
    let mut i_values = Vec::new();
    let mut grad_norms = Vec::new();
    let mut terminal_mu = Vec::new();
    let mut outside = 0usize;
    for s in traj.samples.iter().filter(|s| s.t >= t_lo * (1.0 - 1e-12)) {
        let f = s.t.powf(alpha);
        let mu: Vec<f64> = s.scales.iter().map(|l| f * l).collect();
        let ratio = mu.iter().cloned().fold(0.0, f64::max) / mu_reference;
        if !(0.1..=10.0).contains(&ratio) {
            outside += 1;
        }
        times.push(s.t);
        i_values.push(functional_i(a, d, &mu));
        grad_norms.push(
            gradient(a, d, &mu)
                .iter()
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt(),
        );
        terminal_mu = mu;
    }
    if times.len() < 2 {
        return Err(Error::WindowTooShort {
            requested: window_decades,
            available: 0.0,
        });
    }
    if 2 * outside > times.len() {
        return Err(Error::RegimeMismatch(format!(
            "{outside} of {} samples have mu_max outside [0.1, 10] x {mu_reference:.3e}",
            times.len()
        )));
    }
    let max_increase = i_values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let g_end = *grad_norms.last().unwrap();
    let grad_reduction = if g_end > 0.0 {
        grad_norms[0] / g_end
    } else {
        f64::INFINITY
    };
    Ok(FlowCheck {
        limit_point: (grad_reduction >= 100.0).then(|| terminal_mu.clone()),
        times,
        i_values,
        grad_norms,
        terminal_mu,
        max_increase,
        grad_reduction,
        mu_reference,
    })
}
