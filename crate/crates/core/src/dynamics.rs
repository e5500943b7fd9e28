//! The formal scale/center ODE system of interacting bubbles.
//!
//! For signs `s_i`, scales `l_i > 0` and centers `z_i` in `R^N`:
//!
//! ```text
//! dl_i/dt = (1/l_i) k0 kInf  sum_{j != i} s_i s_j l_i^D l_j^D / |z_j - z_i|^(N-2)
//! dz_i/dt =       k1 kInf  sum_{j != i} s_i s_j l_i^D l_j^D (z_j - z_i) / |z_j - z_i|^N
//! ```
//!
//! This is the reduced system with every PDE-level error term dropped. It
//! conserves `sum z_i` and `sum l_i^2 + (2 k0 / k1) sum |z_i|^2`. The
//! integrator works in `(log l, z)` so scales stay positive.

use serde::{Deserialize, Serialize};

use crate::configuration::min_pair_distance;
use crate::constants::{universal_constants, Dimension, UniversalConstants};
use crate::error::{Error, Result};
use crate::ode::{self, OdeOptions, System};

/// Distance below which the vector field refuses to evaluate.
pub const COLLISION_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleState {
    pub t: f64,
    pub scales: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
}

impl BubbleState {
    pub fn new(t: f64, scales: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if scales.len() != centers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} scales but {} centers",
                scales.len(),
                centers.len()
            )));
        }
        if scales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Validation(
                "scales must be positive and finite".into(),
            ));
        }
        let n = centers.first().map_or(0, |c| c.len());
        if centers.iter().any(|c| c.len() != n) {
            return Err(Error::ShapeMismatch("centers differ in dimension".into()));
        }
        Ok(BubbleState { t, scales, centers })
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Collision,
    ScaleVanish,
    ScaleBlowup,
    HorizonReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Bubbles involved (one index for scale events, a pair for collisions).
    pub bubbles: Vec<usize>,
    /// The monitored quantity at the event (scale or distance).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservedSample {
    pub center_sum: Vec<f64>,
    pub quadratic: f64,
}

pub fn conserved_quantities(
    consts: &UniversalConstants,
    scales: &[f64],
    centers: &[Vec<f64>],
) -> ConservedSample {
    let n = centers.first().map_or(0, |c| c.len());
    let mut center_sum = vec![0.0; n];
    let mut zsq = 0.0;
    for c in centers {
        for (s, x) in center_sum.iter_mut().zip(c) {
            *s += x;
            zsq += x * x;
        }
    }
    let lsq: f64 = scales.iter().map(|l| l * l).sum();
    ConservedSample {
        center_sum,
        quadratic: lsq + consts.center_weight() * zsq,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dim: Dimension,
    pub signs: Vec<i8>,
    pub samples: Vec<BubbleState>,
    pub events: Vec<Event>,
    pub ledger: Vec<ConservedSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationDrift {
    /// `max_k |sum z(t_k) - sum z(0)|`.
    pub center_sum: f64,
    /// `1 + |z(0)|`, the scale the center-sum drift is measured against.
    pub center_scale: f64,
    /// `max_k |Q(t_k) - Q(0)| / |Q(0)|` for the quadratic quantity `Q`.
    pub quadratic_rel: f64,
}

impl ConservationDrift {
    pub fn within(&self, tol: f64) -> bool {
        self.center_sum <= tol * self.center_scale && self.quadratic_rel <= tol
    }
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn scale_series(&self, component: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.scales[component]).collect()
    }

    pub fn last(&self) -> &BubbleState {
        self.samples.last().expect("trajectory is never empty")
    }

    /// The terminal event, if any.
    pub fn stop_event(&self) -> Option<&Event> {
        self.events.last()
    }

    pub fn conservation_drift(&self) -> ConservationDrift {
        let first = &self.ledger[0];
        let z0: f64 = self.samples[0]
            .centers
            .iter()
            .flatten()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        let mut cs = 0.0f64;
        let mut q = 0.0f64;
        for s in &self.ledger {
            let d: f64 = s
                .center_sum
                .iter()
                .zip(&first.center_sum)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            cs = cs.max(d);
            q = q.max((s.quadratic - first.quadratic).abs() / first.quadratic.abs());
        }
        ConservationDrift {
            center_sum: cs,
            center_scale: 1.0 + z0,
            quadratic_rel: q,
        }
    }
}

/// The right-hand side in the original variables.
pub fn vector_field(
    consts: &UniversalConstants,
    signs: &[i8],
    state: &BubbleState,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let sys = FormalSystem::new(
        *consts,
        signs.to_vec(),
        state.centers.first().map_or(0, |c| c.len()),
    );
    let y = pack(&state.scales, &state.centers);
    let mut dy = vec![0.0; y.len()];
    sys.rhs(state.t, &y, &mut dy)?;
    let j = signs.len();
    let dl = (0..j).map(|i| dy[i] * state.scales[i]).collect();
    let n = sys.n;
    let dz = (0..j)
        .map(|i| dy[j + i * n..j + (i + 1) * n].to_vec())
        .collect();
    Ok((dl, dz))
}

fn pack(scales: &[f64], centers: &[Vec<f64>]) -> Vec<f64> {
    let mut y: Vec<f64> = scales.iter().map(|l| l.ln()).collect();
    for c in centers {
        y.extend_from_slice(c);
    }
    y
}

fn unpack(y: &[f64], j: usize, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let scales = y[..j].iter().map(|v| v.exp()).collect();
    let centers = (0..j)
        .map(|i| y[j + i * n..j + (i + 1) * n].to_vec())
        .collect();
    (scales, centers)
}

/// The formal system in the variables `(log l_1..l_J, z_1, .., z_J)`.
pub struct FormalSystem {
    consts: UniversalConstants,
    signs: Vec<i8>,
    n: usize,
}

impl FormalSystem {
    pub fn new(consts: UniversalConstants, signs: Vec<i8>, n: usize) -> Self {
        FormalSystem { consts, signs, n }
    }
}

impl System for FormalSystem {
    fn dim(&self) -> usize {
        self.signs.len() * (1 + self.n)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let j = self.signs.len();
        let n = self.n;
        let d = self.consts.d;
        let k_scale = self.consts.kappa0 * self.consts.kappa_inf;
        let k_center = self.consts.kappa1 * self.consts.kappa_inf;
        // Pairwise contributions are collected per component and summed in a
        // fixed order, so symmetric states get bitwise symmetric derivatives.
        // Symmetry-breaking modes can be violently unstable; roundoff must
        // not seed them.
        dy.iter_mut().for_each(|v| *v = 0.0);
        let m = j.saturating_sub(1);
        let mut terms = vec![0.0; self.dim() * m];
        let slot = |owner: usize, other: usize| if other < owner { other } else { other - 1 };
        for a in 0..j {
            for b in a + 1..j {
                let za = &y[j + a * n..j + (a + 1) * n];
                let zb = &y[j + b * n..j + (b + 1) * n];
                let r2: f64 = za.iter().zip(zb).map(|(p, q)| (p - q) * (p - q)).sum();
                if r2.sqrt() < COLLISION_GUARD {
                    return Err(Error::CollisionSingularity {
                        i: a,
                        j: b,
                        distance: r2.sqrt(),
                    });
                }
                let s = (self.signs[a] * self.signs[b]) as f64;
                // s l_a^D l_b^D / r^(2D)
                let w = s * (d * (y[a] + y[b]) - d * r2.ln()).exp();
                terms[a * m + slot(a, b)] = k_scale * w * (-2.0 * y[a]).exp();
                terms[b * m + slot(b, a)] = k_scale * w * (-2.0 * y[b]).exp();
                let wc = k_center * w / r2;
                for k in 0..n {
                    terms[(j + a * n + k) * m + slot(a, b)] = wc * (zb[k] - za[k]);
                    terms[(j + b * n + k) * m + slot(b, a)] = wc * (za[k] - zb[k]);
                }
            }
        }
        for (out, chunk) in dy.iter_mut().zip(terms.chunks_mut(m.max(1))) {
            chunk.sort_unstable_by(|p, q| p.abs().total_cmp(&q.abs()).then(p.total_cmp(q)));
            *out = chunk.iter().sum();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub lambda_floor: f64,
    pub lambda_ceil: f64,
    pub collision_floor: f64,
    /// Extra output times; samples are always taken at these exactly.
    pub checkpoints: Vec<f64>,
    /// Also keep every accepted step as a sample.
    pub record_steps: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: 1e-10,
            atol: 1e-14,
            lambda_floor: 1e-8,
            lambda_ceil: 1e8,
            collision_floor: 1e-2,
            checkpoints: vec![],
            record_steps: true,
        }
    }
}

impl IntegrateOptions {
    /// Geometric checkpoints from `t_start` to `t_end`, `per_decade` per decade.
    pub fn with_log_checkpoints(mut self, t_start: f64, t_end: f64, per_decade: usize) -> Self {
        let decades = (t_end / t_start).log10();
        let n = ((decades * per_decade as f64).ceil() as usize).max(1) + 1;
        self.checkpoints = ode::log_spaced(t_start, t_end, n);
        self.record_steps = false;
        self
    }
}

/// Integrates the formal system from `initial` up to `horizon` or the first
/// event. The conserved-quantity ledger has one entry per sample.
pub fn integrate(
    consts: &UniversalConstants,
    signs: &[i8],
    initial: &BubbleState,
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let j = signs.len();
    if j != initial.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} signs for {} bubbles",
            j,
            initial.len()
        )));
    }
    if !(horizon > initial.t) {
        return Err(Error::Validation(
            "horizon must exceed the initial time".into(),
        ));
    }
    let n = initial.centers.first().map_or(0, |c| c.len());
    if min_pair_distance(&initial.centers) < COLLISION_GUARD {
        return Err(Error::Validation(
            "initial centers must be pairwise distinct".into(),
        ));
    }
    let sys = FormalSystem::new(*consts, signs.to_vec(), n);
    let y0 = pack(&initial.scales, &initial.centers);
    let ln_floor = opts.lambda_floor.ln();
    let ln_ceil = opts.lambda_ceil.ln();
    let collision_floor = opts.collision_floor;
    let events = |_t: f64, y: &[f64], g: &mut [f64]| {
        let lmin = y[..j].iter().cloned().fold(f64::INFINITY, f64::min);
        let lmax = y[..j].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (_, centers) = unpack(y, j, n);
        g[0] = lmin - ln_floor;
        g[1] = min_pair_distance(&centers) - collision_floor;
        g[2] = ln_ceil - lmax;
    };
    let ode_opts = OdeOptions {
        rtol: opts.rtol,
        atol: opts.atol,
        record_steps: opts.record_steps,
        ..OdeOptions::default()
    };
    let sol = ode::solve(
        &sys,
        initial.t,
        &y0,
        horizon,
        &opts.checkpoints,
        3,
        events,
        &ode_opts,
    )?;

    let mut samples = Vec::with_capacity(sol.times.len());
    let mut ledger = Vec::with_capacity(sol.times.len());
    for (t, y) in sol.times.iter().zip(&sol.states) {
        let (scales, centers) = unpack(y, j, n);
        ledger.push(conserved_quantities(consts, &scales, &centers));
        samples.push(BubbleState {
            t: *t,
            scales,
            centers,
        });
    }
    let last = samples.last().expect("at least the initial sample");
    let event = match sol.event {
        None => Event {
            time: last.t,
            kind: EventKind::HorizonReached,
            bubbles: vec![],
            value: last.t,
        },
        Some(hit) => {
            let argmin = |v: &[f64]| {
                (0..v.len())
                    .min_by(|&a, &b| v[a].total_cmp(&v[b]))
                    .unwrap_or(0)
            };
            let argmax = |v: &[f64]| {
                (0..v.len())
                    .max_by(|&a, &b| v[a].total_cmp(&v[b]))
                    .unwrap_or(0)
            };
            match hit.index {
                0 => {
                    let i = argmin(&last.scales);
                    Event {
                        time: hit.t,
                        kind: EventKind::ScaleVanish,
                        bubbles: vec![i],
                        value: last.scales[i],
                    }
                }
                1 => {
                    let mut best = (0, 0, f64::INFINITY);
                    for a in 0..j {
                        for b in a + 1..j {
                            let r =
                                crate::configuration::distance(&last.centers[a], &last.centers[b]);
                            if r < best.2 {
                                best = (a, b, r);
                            }
                        }
                    }
                    Event {
                        time: hit.t,
                        kind: EventKind::Collision,
                        bubbles: vec![best.0, best.1],
                        value: best.2,
                    }
                }
                _ => {
                    let i = argmax(&last.scales);
                    Event {
                        time: hit.t,
                        kind: EventKind::ScaleBlowup,
                        bubbles: vec![i],
                        value: last.scales[i],
                    }
                }
            }
        }
    };
    let dim = consts.dim;
    Ok(Trajectory {
        dim,
        signs: signs.to_vec(),
        samples,
        events: vec![event],
        ledger,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub window: [f64; 2],
    pub points: usize,
}

/// Least-squares line through `(log t, log y)` for `t` in `[t_lo, t_hi]`.
pub fn fit_power_law(times: &[f64], values: &[f64], t_lo: f64, t_hi: f64) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| {
            **t >= t_lo * (1.0 - 1e-12) && **t <= t_hi * (1.0 + 1e-12) && **t > 0.0 && **v > 0.0
        })
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Some(RateFit {
        exponent: slope,
        prefactor: intercept.exp(),
        residual: (rss / m).sqrt(),
        window: [t_lo, t_hi],
        points: pts.len(),
    })
}

/// Fits `l_component ~ prefactor * t^exponent` over the trailing
/// `window_decades` decades of the trajectory (all past `t = 1`).
pub fn fit_rate(traj: &Trajectory, component: usize, window_decades: f64) -> Result<RateFit> {
    if component >= traj.signs.len() {
        return Err(Error::Validation(format!(
            "component {component} out of range"
        )));
    }
    let times = traj.times();
    let values = traj.scale_series(component);
    fit_series(&times, &values, window_decades)
}

/// Power-law fit over the trailing `window_decades` of a sampled series.
pub fn fit_series(times: &[f64], values: &[f64], window_decades: f64) -> Result<RateFit> {
    let t_hi = *times.last().unwrap_or(&0.0);
    let t_first = times
        .iter()
        .copied()
        .find(|&t| t > 0.0)
        .unwrap_or(f64::INFINITY)
        .max(1.0);
    let available = if t_hi > t_first {
        (t_hi / t_first).log10()
    } else {
        0.0
    };
    if !(window_decades > 0.0) || available + 1e-12 < window_decades {
        return Err(Error::WindowTooShort {
            requested: window_decades,
            available,
        });
    }
    let t_lo = t_hi / 10f64.powf(window_decades);
    fit_power_law(times, values, t_lo, t_hi).ok_or(Error::WindowTooShort {
        requested: window_decades,
        available,
    })
}

fn axis_centers(n: usize, xs: &[f64]) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            let mut p = vec![0.0; n];
            p[0] = x;
            p
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleReport {
    pub trajectory: Trajectory,
    pub fit: RateFit,
    pub expected_exponent: f64,
    pub drift: ConservationDrift,
}

/// Opposite-sign pair with equal scales `lambda0` at distance `separation`.
pub fn dipole_scenario(
    dim: Dimension,
    lambda0: f64,
    separation: f64,
    horizon: f64,
) -> Result<DipoleReport> {
    let consts = universal_constants(dim)?;
    let n = dim.get() as usize;
    let initial = BubbleState::new(
        0.0,
        vec![lambda0, lambda0],
        axis_centers(n, &[-0.5 * separation, 0.5 * separation]),
    )?;
    let opts = IntegrateOptions::default().with_log_checkpoints(1e-2, horizon, 20);
    let trajectory = integrate(&consts, &[1, -1], &initial, horizon, &opts)?;
    let fit = fit_rate(&trajectory, 0, 2.0)?;
    Ok(DipoleReport {
        drift: trajectory.conservation_drift(),
        trajectory,
        fit,
        expected_exponent: -1.0 / (dim.as_f64() - 4.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerReport {
    pub trajectory: Trajectory,
    pub small_fit: RateFit,
    pub expected_exponent: f64,
    pub big_initial: f64,
    pub big_final: f64,
    /// Far-field prediction of the small-scale prefactor from the final big scale.
    pub predicted_prefactor: f64,
    /// Whether the pair had opposite signs (the only case with a tower rate).
    pub opposite_signs: bool,
    pub drift: ConservationDrift,
}

/// Far-field tower prefactor `((N-6)/2 k0 kInf l*^D / sep^(N-2))^(-2/(N-6))`.
pub fn tower_prefactor(consts: &UniversalConstants, big_limit: f64, separation: f64) -> f64 {
    let n = consts.dim.as_f64();
    let k = 0.5 * (n - 6.0) * consts.kappa0 * consts.kappa_inf * big_limit.powf(consts.d)
        / separation.powf(n - 2.0);
    k.powf(-2.0 / (n - 6.0))
}

/// Big bubble of scale `lambda_big0` and small bubble `lambda_small0` at
/// distance `separation`. Signs are opposite unless `same_signs`.
pub fn bubble_tower_scenario(
    dim: Dimension,
    lambda_big0: f64,
    lambda_small0: f64,
    separation: f64,
    horizon: f64,
    same_signs: bool,
) -> Result<TowerReport> {
    let consts = universal_constants(dim)?;
    let n = dim.get() as usize;
    let signs: [i8; 2] = if same_signs { [1, 1] } else { [1, -1] };
    let initial = BubbleState::new(
        0.0,
        vec![lambda_big0, lambda_small0],
        axis_centers(n, &[-0.5 * separation, 0.5 * separation]),
    )?;
    let mut opts = IntegrateOptions::default().with_log_checkpoints(1e-2, horizon, 20);
    // The small scale decays like t^(-2/(N-6)); keep it well above underflow.
    opts.lambda_floor = 1e-30;
    opts.lambda_ceil = 10.0 * lambda_big0.max(1.0);
    if same_signs {
        // Same-sign centers attract and merge in finite time, with
        // |z1 - z2|^(N+2) closing linearly; stop while that is resolvable.
        opts.collision_floor = 0.1 * separation;
    }
    let trajectory = integrate(&consts, &signs, &initial, horizon, &opts)?;
    let last = trajectory.last();
    let big_final = last.scales[0];
    let sep_final = crate::configuration::distance(&last.centers[0], &last.centers[1]);
    let small_fit = if same_signs {
        // No decay to fit; report the trailing trend if one exists.
        fit_rate(&trajectory, 1, 2.0).unwrap_or(RateFit {
            exponent: f64::NAN,
            prefactor: f64::NAN,
            residual: f64::NAN,
            window: [f64::NAN, f64::NAN],
            points: 0,
        })
    } else {
        fit_rate(&trajectory, 1, 2.0)?
    };
    Ok(TowerReport {
        drift: trajectory.conservation_drift(),
        small_fit,
        expected_exponent: -2.0 / (dim.as_f64() - 6.0),
        big_initial: lambda_big0,
        big_final,
        predicted_prefactor: tower_prefactor(&consts, big_final, sep_final),
        opposite_signs: !same_signs,
        trajectory,
    })
}
