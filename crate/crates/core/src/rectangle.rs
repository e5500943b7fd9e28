//! The minimal degenerate rectangle and its degenerate blow-up rate.
//!
//! Four bubbles with signs `(+,+,-,-)` sit at
//!
//! ```text
//! z1 = ( d/2,  q/2)   z2 = (-d/2,  q/2)
//! z3 = ( d/2, -q/2)   z4 = (-d/2, -q/2)
//! ```
//!
//! with a common scale `l`. The formal system preserves this symmetry and
//! reduces to three equations in `(l, d, q)`:
//!
//! ```text
//! l_t = k0 kInf (d^-2D - q^-2D - (d^2+q^2)^-D) l^(2D-1)
//! d_t = 2 k1 kInf (-d^(-2D-1) + d (d^2+q^2)^(-D-1)) l^2D
//! q_t = 2 k1 kInf ( q^(-2D-1) + q (d^2+q^2)^(-D-1)) l^2D
//! ```
//!
//! At `(d, q) = (1, q0)` the scale bracket vanishes, and the approximate
//! solution `(c_l t^-a, 1 + c_d t^-a, q0 + c_q t^-a)` with `a = 1/(2D-1)`
//! decays at the degenerate rate. Deviations from it, measured in the
//! rescaled coordinates `h`, obey `t h_t = (M + a I) h + ...` with two
//! unstable directions, which the shooting solver removes.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::configuration::{drift_vectors, interaction_matrix_for, root_q0, Configuration};
use crate::constants::{Dimension, UniversalConstants};
use crate::dynamics::{BubbleState, RateFit};
use crate::error::{Error, Result};
use crate::linalg::{spectral_projector, symmetric_eigen};
use crate::ode::{self, OdeOptions, System};

pub const RECTANGLE_SIGNS: [i8; 4] = [1, 1, -1, -1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricState {
    pub t: f64,
    pub lambda: f64,
    pub d: f64,
    pub q: f64,
}

impl SymmetricState {
    pub fn new(t: f64, lambda: f64, d: f64, q: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("d", d), ("q", q)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(SymmetricState { t, lambda, d, q })
    }
}

/// `d^-2D - q^-2D - (d^2+q^2)^-D`, the bracket of the scale equation.
pub fn scale_bracket(half_gap: f64, d: f64, q: f64) -> f64 {
    let dd = half_gap;
    d.powf(-2.0 * dd) - q.powf(-2.0 * dd) - (d * d + q * q).powf(-dd)
}

fn center_brackets(dd: f64, d: f64, q: f64) -> (f64, f64) {
    let s = (d * d + q * q).powf(-dd - 1.0);
    (
        -d.powf(-2.0 * dd - 1.0) + d * s,
        q.powf(-2.0 * dd - 1.0) + q * s,
    )
}

/// `(l_t, d_t, q_t)` of the reduced system.
pub fn symmetric_vector_field(consts: &UniversalConstants, s: &SymmetricState) -> [f64; 3] {
    let dd = consts.d;
    let (bd, bq) = center_brackets(dd, s.d, s.q);
    let l2d = s.lambda.powf(2.0 * dd);
    [
        consts.kappa0
            * consts.kappa_inf
            * scale_bracket(dd, s.d, s.q)
            * s.lambda.powf(2.0 * dd - 1.0),
        2.0 * consts.kappa1 * consts.kappa_inf * bd * l2d,
        2.0 * consts.kappa1 * consts.kappa_inf * bq * l2d,
    ]
}

/// The four centers in `R^n` for spacings `d`, `q`.
pub fn rectangle_points(n: usize, d: f64, q: f64) -> Vec<Vec<f64>> {
    [(0.5, 0.5), (-0.5, 0.5), (0.5, -0.5), (-0.5, -0.5)]
        .iter()
        .map(|&(x, y)| {
            let mut p = vec![0.0; n];
            p[0] = x * d;
            p[1] = y * q;
            p
        })
        .collect()
}

pub fn rectangle_configuration(dim: Dimension, d: f64, q: f64) -> Result<Configuration> {
    Configuration::new(
        dim,
        RECTANGLE_SIGNS.to_vec(),
        rectangle_points(dim.get() as usize, d, q),
    )
}

/// The degenerate rectangle `(d, q) = (1, q0)`.
pub fn degenerate_rectangle(dim: Dimension) -> Result<Configuration> {
    rectangle_configuration(dim, 1.0, root_q0(dim))
}

/// Four-bubble state with equal scales.
pub fn embed(n: usize, s: &SymmetricState) -> BubbleState {
    BubbleState {
        t: s.t,
        scales: vec![s.lambda; 4],
        centers: rectangle_points(n, s.d, s.q),
    }
}

/// Reads `(l, d, q)` back off a four-bubble state in the embedding's layout.
pub fn reduce(state: &BubbleState) -> Result<SymmetricState> {
    if state.len() != 4 || state.centers[0].len() < 2 {
        return Err(Error::ShapeMismatch(
            "expected four bubbles in at least two dimensions".into(),
        ));
    }
    let c = &state.centers;
    SymmetricState::new(
        state.t,
        state.scales[0],
        c[0][0] - c[1][0],
        c[0][1] - c[2][1],
    )
}

/// Constants of the approximate solution
/// `(c_l t^-a, 1 + c_d t^-a, q0 + c_q t^-a)`, `a = 1/(2D-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxSolution {
    pub half_gap: f64,
    pub q0: f64,
    pub exponent: f64,
    pub c_lambda: f64,
    pub c_d: f64,
    pub c_q: f64,
    /// Relative residuals of the three defining relations.
    pub residuals: [f64; 3],
    /// `sqrt(2 k1 / k0)`, the scaling of `h2`, `h3`.
    pub center_unit: f64,
}

impl ApproxSolution {
    pub fn state_at(&self, t: f64) -> SymmetricState {
        let s = t.powf(-self.exponent);
        SymmetricState {
            t,
            lambda: self.c_lambda * s,
            d: 1.0 + self.c_d * s,
            q: self.q0 + self.c_q * s,
        }
    }

    /// `h` with `l = l_ap + t^-a h1`, `d = d_ap + t^-a u h2`,
    /// `q = q_ap + t^-a u h3`, `u = sqrt(2 k1 / k0)`.
    pub fn h_coordinates(&self, s: &SymmetricState) -> [f64; 3] {
        let ap = self.state_at(s.t);
        let g = s.t.powf(self.exponent);
        [
            (s.lambda - ap.lambda) * g,
            (s.d - ap.d) * g / self.center_unit,
            (s.q - ap.q) * g / self.center_unit,
        ]
    }

    pub fn from_h(&self, t: f64, h: [f64; 3]) -> Result<SymmetricState> {
        let ap = self.state_at(t);
        let s = t.powf(-self.exponent);
        SymmetricState::new(
            t,
            ap.lambda + s * h[0],
            ap.d + s * self.center_unit * h[1],
            ap.q + s * self.center_unit * h[2],
        )
    }
}

/// `(alpha, beta)` with `alpha = -1 + (1+q0^2)^(-D-1)` and
/// `beta = q0^(-2D-1) + q0 (1+q0^2)^(-D-1)`.
fn alpha_beta(dd: f64, q0: f64) -> (f64, f64) {
    let s = (1.0 + q0 * q0).powf(-dd - 1.0);
    (-1.0 + s, q0.powf(-2.0 * dd - 1.0) + q0 * s)
}

/// Gradient of the scale bracket at `(1, q0)`: the coefficients of
/// `(d - 1)` and `(q - q0)` in its Taylor expansion.
pub fn taylor_coefficients(half_gap: f64, q0: f64) -> [f64; 2] {
    let (alpha, beta) = alpha_beta(half_gap, q0);
    [2.0 * half_gap * alpha, 2.0 * half_gap * beta]
}

pub fn approx_solution_constants(consts: &UniversalConstants) -> ApproxSolution {
    let dd = consts.d;
    let q0 = root_q0(consts.dim);
    let (alpha, beta) = alpha_beta(dd, q0);
    let (k0, k1, ki) = (consts.kappa0, consts.kappa1, consts.kappa_inf);
    let m = 2.0 * dd - 1.0;
    // Eliminating c_d and c_q leaves c_l^(4D-2) = 1 / (4D m^2 k0 k1 kInf^2 (alpha^2 + beta^2)).
    let c_lambda = (4.0 * dd * m * m * k0 * k1 * ki * ki * (alpha * alpha + beta * beta))
        .powf(-1.0 / (4.0 * dd - 2.0));
    let l2d = c_lambda.powf(2.0 * dd);
    let c_d = -m * 2.0 * k1 * ki * alpha * l2d;
    let c_q = -m * 2.0 * k1 * ki * beta * l2d;

    let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
    let residuals = [
        rel(
            -c_lambda / m,
            2.0 * dd * k0 * ki * (alpha * c_d + beta * c_q) * c_lambda.powf(2.0 * dd - 1.0),
        ),
        rel(-c_d / m, 2.0 * k1 * ki * alpha * l2d),
        rel(-c_q / m, 2.0 * k1 * ki * beta * l2d),
    ];
    ApproxSolution {
        half_gap: dd,
        q0,
        exponent: 1.0 / m,
        c_lambda,
        c_d,
        c_q,
        residuals,
        center_unit: (2.0 * k1 / k0).sqrt(),
    }
}

/// The linearization around the approximate solution and its spectral split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationM {
    pub m: [[f64; 3]; 3],
    /// Eigenvalues of `M`, ascending.
    pub eigenvalues: [f64; 3],
    /// Eigenvalues of `M + a I`, ascending.
    pub shifted_eigenvalues: [f64; 3],
    /// Projector onto the eigenvalue `-1` of `M + a I`.
    pub stable_projector: [[f64; 3]; 3],
    /// Projector onto the eigenvalues `a`, `2a` of `M + a I`.
    pub unstable_projector: [[f64; 3]; 3],
    /// Orthonormal basis of the unstable subspace.
    pub unstable_basis: [[f64; 3]; 2],
}

fn to_array(m: &DMatrix<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

pub fn linearization_matrix(consts: &UniversalConstants) -> LinearizationM {
    linearization_for(consts.d, root_q0(consts.dim))
}

fn linearization_for(dd: f64, q0: f64) -> LinearizationM {
    let a = 1.0 / (2.0 * dd - 1.0);
    let w = (2.0 * dd).sqrt() * a / (1.0 + q0 * q0).sqrt();
    let m = DMatrix::from_row_slice(3, 3, &[-1.0, -w * q0, w, -w * q0, 0.0, 0.0, w, 0.0, 0.0]);
    let eig = symmetric_eigen(&m);
    // Stable eigenvalue of M is -2D a; everything above it is unstable.
    let split = -0.5 * (1.0 + a);
    let stable = spectral_projector(&eig, |v| v < split);
    let unstable = spectral_projector(&eig, |v| v >= split);
    let cols: Vec<usize> = (0..3).filter(|&k| eig.values[k] >= split).collect();
    let mut unstable_basis = [[0.0; 3]; 2];
    for (b, &k) in unstable_basis.iter_mut().zip(&cols) {
        for (i, v) in b.iter_mut().enumerate() {
            *v = eig.vectors[(i, k)];
        }
    }
    LinearizationM {
        m: to_array(&m),
        eigenvalues: [eig.values[0], eig.values[1], eig.values[2]],
        shifted_eigenvalues: [eig.values[0] + a, eig.values[1] + a, eig.values[2] + a],
        stable_projector: to_array(&stable),
        unstable_projector: to_array(&unstable),
        unstable_basis,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleDrift {
    pub vectors: Vec<Vec<f64>>,
    pub sum_norm_sq: f64,
}

/// Drift vectors of the degenerate rectangle with `c = (1,1,1,1)/2`.
pub fn drift_vectors_rectangle(consts: &UniversalConstants) -> Result<RectangleDrift> {
    let points = rectangle_points(consts.dim.get() as usize, 1.0, root_q0(consts.dim));
    let a = interaction_matrix_for(consts, &RECTANGLE_SIGNS, &points)?;
    let vectors = drift_vectors(&points, &a, &[0.5; 4]);
    let sum_norm_sq = vectors.iter().flatten().map(|x| x * x).sum();
    Ok(RectangleDrift {
        vectors,
        sum_norm_sq,
    })
}

/// General degenerate-rate prefactor
/// `((k0/k1) sum c^(2/D) / ((2D-1)^2 4D sum|v|^2))^(1/(4D-2)) c_i^(1/D)`
/// evaluated for the rectangle, where every `c_i = 1/2`.
pub fn degenerate_rate_prefactor(consts: &UniversalConstants) -> Result<f64> {
    let dd = consts.d;
    let drift = drift_vectors_rectangle(consts)?;
    let c: f64 = 0.5;
    let sum_c = 4.0 * c.powf(2.0 / dd);
    let m = 2.0 * dd - 1.0;
    let base = (consts.kappa0 / consts.kappa1) * sum_c / (m * m * 4.0 * dd * drift.sum_norm_sq);
    Ok(base.powf(1.0 / (4.0 * dd - 2.0)) * c.powf(1.0 / dd))
}

/// The reduced system in `(log l, d, q)`, optionally run backward in time.
struct ReducedSystem {
    consts: UniversalConstants,
    direction: f64,
}

impl System for ReducedSystem {
    fn dim(&self) -> usize {
        3
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (d, q) = (y[1], y[2]);
        if !(d > 0.0 && q > 0.0) {
            return Err(Error::CollisionSingularity {
                i: 0,
                j: if d > 0.0 { 2 } else { 1 },
                distance: d.min(q),
            });
        }
        let dd = self.consts.d;
        let ki = self.consts.kappa_inf;
        let (bd, bq) = center_brackets(dd, d, q);
        let l2d = (2.0 * dd * y[0]).exp();
        let l2d2 = ((2.0 * dd - 2.0) * y[0]).exp();
        dy[0] = self.direction * self.consts.kappa0 * ki * scale_bracket(dd, d, q) * l2d2;
        dy[1] = self.direction * 2.0 * self.consts.kappa1 * ki * bd * l2d;
        dy[2] = self.direction * 2.0 * self.consts.kappa1 * ki * bq * l2d;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectangleSample {
    pub t: f64,
    pub lambda: f64,
    pub d: f64,
    pub q: f64,
    pub h: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RectangleStop {
    HorizonReached,
    TubeExit,
    Collision,
    ScaleVanish,
    ScaleBlowup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectangleTrajectory {
    /// Samples in increasing time.
    pub samples: Vec<RectangleSample>,
    /// `4 l^2 + (2 k0 / k1)(d^2 + q^2)` per sample, the reduced conserved quantity.
    pub quadratic: Vec<f64>,
    pub stop: RectangleStop,
    pub stop_time: f64,
}

impl RectangleTrajectory {
    pub fn quadratic_drift(&self) -> f64 {
        let q0 = self.quadratic[0];
        self.quadratic
            .iter()
            .fold(0.0f64, |m, q| m.max((q - q0).abs() / q0.abs()))
    }

    pub fn max_h(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(norm3(&s.h)))
    }

    /// Power-law fit of `l` over the trailing `decades`.
    pub fn lambda_fit(&self, decades: f64) -> Result<RateFit> {
        let times: Vec<f64> = self.samples.iter().map(|s| s.t).collect();
        let values: Vec<f64> = self.samples.iter().map(|s| s.lambda).collect();
        crate::dynamics::fit_series(&times, &values, decades)
    }

    /// The four-bubble trajectory this reduced path represents.
    pub fn embedded(&self, consts: &UniversalConstants) -> crate::dynamics::Trajectory {
        let n = consts.dim.get() as usize;
        let samples: Vec<BubbleState> = self
            .samples
            .iter()
            .map(|s| {
                embed(
                    n,
                    &SymmetricState {
                        t: s.t,
                        lambda: s.lambda,
                        d: s.d,
                        q: s.q,
                    },
                )
            })
            .collect();
        let ledger = samples
            .iter()
            .map(|s| crate::dynamics::conserved_quantities(consts, &s.scales, &s.centers))
            .collect();
        let last = samples.last().map_or(0.0, |s| s.t);
        let kind = match self.stop {
            RectangleStop::HorizonReached | RectangleStop::TubeExit => {
                crate::dynamics::EventKind::HorizonReached
            }
            RectangleStop::Collision => crate::dynamics::EventKind::Collision,
            RectangleStop::ScaleVanish => crate::dynamics::EventKind::ScaleVanish,
            RectangleStop::ScaleBlowup => crate::dynamics::EventKind::ScaleBlowup,
        };
        crate::dynamics::Trajectory {
            dim: consts.dim,
            signs: RECTANGLE_SIGNS.to_vec(),
            samples,
            events: vec![crate::dynamics::Event {
                time: self.stop_time,
                kind,
                bubbles: vec![],
                value: last,
            }],
            ledger,
        }
    }
}

fn norm3(h: &[f64; 3]) -> f64 {
    (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricOptions {
    pub rtol: f64,
    pub atol: f64,
    pub per_decade: usize,
    /// Stop once `|h|` exceeds this bound.
    pub tube: Option<f64>,
    pub collision_floor: f64,
    pub lambda_floor: f64,
    pub lambda_ceil: f64,
}

impl Default for SymmetricOptions {
    fn default() -> Self {
        SymmetricOptions {
            rtol: 1e-12,
            atol: 1e-15,
            per_decade: 40,
            tube: None,
            collision_floor: 1e-3,
            lambda_floor: 1e-30,
            lambda_ceil: 1e3,
        }
    }
}

fn quadratic(consts: &UniversalConstants, l: f64, d: f64, q: f64) -> f64 {
    4.0 * l * l + consts.center_weight() * (d * d + q * q)
}

/// Integrates the reduced system from `initial` to `horizon`
/// (`horizon < initial.t` runs backward), sampling geometrically.
pub fn integrate_symmetric(
    consts: &UniversalConstants,
    ap: &ApproxSolution,
    initial: &SymmetricState,
    horizon: f64,
    opts: &SymmetricOptions,
) -> Result<RectangleTrajectory> {
    let t0 = initial.t;
    if !(t0 > 0.0 && horizon > 0.0) || horizon == t0 {
        return Err(Error::Validation(
            "times must be positive and distinct".into(),
        ));
    }
    let forward = horizon > t0;
    let span = (horizon - t0).abs();
    let (lo, hi) = if forward {
        (t0, horizon)
    } else {
        (horizon, t0)
    };
    let n_marks = (((hi / lo).log10() * opts.per_decade as f64).ceil() as usize).max(1) + 1;
    let marks = ode::log_spaced(lo, hi, n_marks);
    // The ODE runs in s = |t - t0| so backward runs reuse the forward solver.
    let to_t = |s: f64| if forward { t0 + s } else { t0 - s };
    let checkpoints: Vec<f64> = marks.iter().map(|&t| (t - t0).abs()).collect();

    let sys = ReducedSystem {
        consts: *consts,
        direction: if forward { 1.0 } else { -1.0 },
    };
    let y0 = [initial.lambda.ln(), initial.d, initial.q];
    let (ln_floor, ln_ceil) = (opts.lambda_floor.ln(), opts.lambda_ceil.ln());
    let floor = opts.collision_floor;
    let tube = opts.tube.unwrap_or(f64::INFINITY);
    let events = |s: f64, y: &[f64], g: &mut [f64]| {
        g[0] = y[0] - ln_floor;
        g[1] = ln_ceil - y[0];
        g[2] = y[1].min(y[2]) - floor;
        let st = SymmetricState {
            t: to_t(s),
            lambda: y[0].exp(),
            d: y[1],
            q: y[2],
        };
        g[3] = tube - norm3(&ap.h_coordinates(&st));
    };
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        record_steps: false,
        ..OdeOptions::default()
    };
    let sol = ode::solve(&sys, 0.0, &y0, span, &checkpoints, 4, events, &ode_opts)?;

    let mut samples: Vec<RectangleSample> = sol
        .times
        .iter()
        .zip(&sol.states)
        .map(|(&s, y)| {
            let st = SymmetricState {
                t: to_t(s),
                lambda: y[0].exp(),
                d: y[1],
                q: y[2],
            };
            RectangleSample {
                t: st.t,
                lambda: st.lambda,
                d: st.d,
                q: st.q,
                h: ap.h_coordinates(&st),
            }
        })
        .collect();
    if !forward {
        samples.reverse();
    }
    let quadratic = samples
        .iter()
        .map(|s| quadratic(consts, s.lambda, s.d, s.q))
        .collect();
    let (stop, stop_time) = match sol.event {
        None => (RectangleStop::HorizonReached, horizon),
        Some(hit) => (
            match hit.index {
                0 => RectangleStop::ScaleVanish,
                1 => RectangleStop::ScaleBlowup,
                2 => RectangleStop::Collision,
                _ => RectangleStop::TubeExit,
            },
            to_t(hit.t),
        ),
    };
    Ok(RectangleTrajectory {
        samples,
        quadratic,
        stop,
        stop_time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingReport {
    pub t0: f64,
    pub horizon: f64,
    /// Coefficients of `h(t0)` along the unstable basis.
    pub coefficients: [f64; 2],
    pub initial_h: [f64; 3],
    /// `|P_u h|` at the horizon.
    pub terminal_unstable: f64,
    pub newton_iterations: usize,
    pub trajectory: RectangleTrajectory,
    pub fit: RateFit,
    pub expected_exponent: f64,
    pub c_lambda: f64,
    pub formula_prefactor: f64,
    pub max_h: f64,
    pub tube_bound: f64,
}

const SHOOT_NEWTON_MAX: usize = 30;
const FIT_DECADES: f64 = 2.0;

struct Shooter<'a> {
    consts: &'a UniversalConstants,
    ap: ApproxSolution,
    lin: LinearizationM,
    t0: f64,
    horizon: f64,
}

impl Shooter<'_> {
    fn initial_h(&self, p: [f64; 2]) -> [f64; 3] {
        let b = &self.lin.unstable_basis;
        [0, 1, 2].map(|i| p[0] * b[0][i] + p[1] * b[1][i])
    }

    fn run(&self, p: [f64; 2], tube: Option<f64>) -> Result<RectangleTrajectory> {
        let init = self.ap.from_h(self.t0, self.initial_h(p))?;
        let opts = SymmetricOptions {
            tube,
            ..SymmetricOptions::default()
        };
        integrate_symmetric(self.consts, &self.ap, &init, self.horizon, &opts)
    }

    fn unstable_coords(&self, h: &[f64; 3]) -> Vector2<f64> {
        let b = &self.lin.unstable_basis;
        let dot = |v: &[f64; 3]| v[0] * h[0] + v[1] * h[1] + v[2] * h[2];
        Vector2::new(dot(&b[0]), dot(&b[1]))
    }

    fn objective(&self, p: [f64; 2]) -> Option<Vector2<f64>> {
        let traj = self.run(p, None).ok()?;
        let last = traj.samples.last()?;
        (traj.stop == RectangleStop::HorizonReached).then(|| self.unstable_coords(&last.h))
    }

    fn report(&self, p: [f64; 2], iterations: usize) -> Result<ShootingReport> {
        let h0 = self.initial_h(p);
        let tube_bound = 10.0 * norm3(&h0) + 0.01;
        let trajectory = self.run(p, Some(tube_bound))?;
        let expected_exponent = -self.ap.exponent;
        if trajectory.stop != RectangleStop::HorizonReached {
            return Err(Error::ShootingFailed {
                reason: format!(
                    "trajectory left the tube |h| <= {tube_bound:.3e} ({:?}) from coefficients ({:.6e}, {:.6e})",
                    trajectory.stop, p[0], p[1]
                ),
                exit_time: Some(trajectory.stop_time),
            });
        }
        let fit = trajectory.lambda_fit(FIT_DECADES)?;
        let last = trajectory.samples.last().expect("nonempty");
        let max_h = trajectory.max_h();
        if (fit.exponent / expected_exponent - 1.0).abs() > 0.02 {
            return Err(Error::ShootingFailed {
                reason: format!(
                    "fitted exponent {:.6} is not within 2% of {expected_exponent:.6}",
                    fit.exponent
                ),
                exit_time: None,
            });
        }
        Ok(ShootingReport {
            t0: self.t0,
            horizon: self.horizon,
            coefficients: p,
            initial_h: h0,
            terminal_unstable: self.unstable_coords(&last.h).norm(),
            newton_iterations: iterations,
            fit,
            expected_exponent,
            c_lambda: self.ap.c_lambda,
            formula_prefactor: degenerate_rate_prefactor(self.consts)?,
            max_h,
            tube_bound,
            trajectory,
        })
    }
}

fn shooter(consts: &UniversalConstants, t0: f64, horizon: f64) -> Result<Shooter<'_>> {
    if !(t0 >= 1e3) {
        return Err(Error::Validation("t0 must be at least 1e3".into()));
    }
    if !(horizon > 100.0 * t0) {
        return Err(Error::Validation(
            "horizon must exceed t0 by at least two decades".into(),
        ));
    }
    Ok(Shooter {
        consts,
        ap: approx_solution_constants(consts),
        lin: linearization_matrix(consts),
        t0,
        horizon,
    })
}

/// Chooses the unstable coefficients of `h(t0)` so that the unstable part of
/// `h` vanishes at the horizon (Newton with a finite-difference Jacobian,
/// iterates confined to `|p| <= search_radius`), then verifies the tube
/// bound and the degenerate rate on the resulting trajectory.
pub fn shoot_degenerate(
    consts: &UniversalConstants,
    t0: f64,
    horizon: f64,
    search_radius: f64,
) -> Result<ShootingReport> {
    if !(search_radius > 0.0 && search_radius <= 0.1) {
        return Err(Error::Validation(
            "search radius must lie in (0, 0.1]".into(),
        ));
    }
    let sh = shooter(consts, t0, horizon)?;
    let fail = |reason: String| Error::ShootingFailed {
        reason,
        exit_time: None,
    };
    let mut p = [0.0, 0.0];
    let mut f = sh
        .objective(p)
        .ok_or_else(|| fail("the zero seed does not reach the horizon".into()))?;
    let mut iterations = 0;
    while f.norm() > 1e-10 && iterations < SHOOT_NEWTON_MAX {
        iterations += 1;
        let eps = 1e-7;
        let mut jac = Matrix2::zeros();
        for k in 0..2 {
            let mut pk = p;
            pk[k] += eps;
            let fk = sh.objective(pk).ok_or_else(|| {
                fail(format!(
                    "perturbed trial {k} failed at iteration {iterations}"
                ))
            })?;
            jac.set_column(k, &((fk - f) / eps));
        }
        let step = jac
            .lu()
            .solve(&(-f))
            .ok_or_else(|| fail("singular shooting Jacobian".into()))?;
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-6 {
            let trial = [p[0] + t * step[0], p[1] + t * step[1]];
            if Vector2::new(trial[0], trial[1]).norm() <= search_radius {
                if let Some(ft) = sh.objective(trial) {
                    if ft.norm() < f.norm() {
                        p = trial;
                        f = ft;
                        improved = true;
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    sh.report(p, iterations).map_err(|e| match e {
        Error::ShootingFailed { reason, exit_time } => Error::ShootingFailed {
            reason: format!(
                "{reason}; best |P_u h(T)| = {:.3e} after {iterations} iterations",
                f.norm()
            ),
            exit_time,
        },
        other => other,
    })
}

/// Runs a single unoptimized trial from the given unstable coefficients.
pub fn shoot_from_coefficients(
    consts: &UniversalConstants,
    t0: f64,
    horizon: f64,
    coefficients: [f64; 2],
) -> Result<ShootingReport> {
    shooter(consts, t0, horizon)?.report(coefficients, 0)
}

/// Verification mode: starts on the approximate solution at `horizon` and
/// integrates backward to `t0`, where the unstable modes decay.
pub fn backward_verification(
    consts: &UniversalConstants,
    t0: f64,
    horizon: f64,
) -> Result<RectangleTrajectory> {
    let ap = approx_solution_constants(consts);
    integrate_symmetric(
        consts,
        &ap,
        &ap.state_at(horizon),
        t0,
        &SymmetricOptions::default(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    /// Largest relative difference in `l`, `d`, `q` between the two runs.
    pub max_rel_diff: f64,
    /// Largest relative spread among the four scales of the full run.
    pub max_scale_asymmetry: f64,
    pub decades: f64,
    pub samples: usize,
}

/// Integrates the same symmetric initial data with the full four-bubble
/// system and the reduced system and compares them on common checkpoints.
pub fn reduction_fidelity(
    consts: &UniversalConstants,
    initial: &SymmetricState,
    horizon: f64,
) -> Result<FidelityReport> {
    let ap = approx_solution_constants(consts);
    let opts = SymmetricOptions::default();
    let reduced = integrate_symmetric(consts, &ap, initial, horizon, &opts)?;
    let n = consts.dim.get() as usize;
    let checkpoints: Vec<f64> = reduced.samples.iter().map(|s| s.t).collect();
    let full_opts = crate::dynamics::IntegrateOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        lambda_floor: opts.lambda_floor,
        lambda_ceil: opts.lambda_ceil,
        collision_floor: opts.collision_floor,
        checkpoints,
        record_steps: false,
    };
    let full = crate::dynamics::integrate(
        consts,
        &RECTANGLE_SIGNS,
        &embed(n, initial),
        horizon,
        &full_opts,
    )?;
    if full.samples.len() != reduced.samples.len() {
        return Err(Error::ShapeMismatch(format!(
            "full run has {} samples, reduced run {}",
            full.samples.len(),
            reduced.samples.len()
        )));
    }
    let mut max_rel_diff = 0.0f64;
    let mut max_scale_asymmetry = 0.0f64;
    for (f, r) in full.samples.iter().zip(&reduced.samples) {
        let s = reduce(f)?;
        for (a, b) in [(s.lambda, r.lambda), (s.d, r.d), (s.q, r.q)] {
            max_rel_diff = max_rel_diff.max((a - b).abs() / b.abs());
        }
        let lmax = f.scales.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lmin = f.scales.iter().cloned().fold(f64::INFINITY, f64::min);
        max_scale_asymmetry = max_scale_asymmetry.max((lmax - lmin) / lmax);
    }
    Ok(FidelityReport {
        max_rel_diff,
        max_scale_asymmetry,
        decades: (horizon / initial.t).log10(),
        samples: reduced.samples.len(),
    })
}
