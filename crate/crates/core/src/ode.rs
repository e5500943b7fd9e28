//! Dormand–Prince 5(4) with adaptive steps, exact checkpoints and
//! terminal events.
//!
//! Events are scalar functions `g_k(t, y)` that start positive; the first
//! step after which some `g_k <= 0` is bisected by re-stepping from the
//! accepted start point with a shorter step, and integration stops there.

use crate::error::{Error, Result};

pub trait System {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub max_steps: usize,
    /// Record every accepted step, not only checkpoints.
    pub record_steps: bool,
    /// Relative time resolution of event localization.
    pub event_rel_tol: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-14,
            h0: None,
            max_steps: 2_000_000,
            record_steps: true,
            event_rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit {
    pub index: usize,
    pub t: f64,
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub event: Option<EventHit>,
    pub accepted: usize,
    pub rejected: usize,
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }
}

/// One Dormand–Prince step from `(t, y)` with `k[0] = f(t, y)` already
/// filled. Writes the 5th-order result to `y_new`, leaves `f(t+h, y_new)`
/// in `k[6]` and returns the scaled error norm.
fn dp_step<S: System>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    y_new: &mut [f64],
    rtol: f64,
    atol: f64,
) -> Result<f64> {
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, [$($a:expr => $ki:expr),*]) => {{
            for i in 0..n {
                ws.tmp[i] = y[i] + h * (0.0 $(+ $a * ws.k[$ki][i])*);
            }
            sys.rhs(t + $c * h, &ws.tmp, &mut ws.k[$dst])?;
        }};
    }
    stage!(1, C2, [A21 => 0]);
    stage!(2, C3, [A31 => 0, A32 => 1]);
    stage!(3, C4, [A41 => 0, A42 => 1, A43 => 2]);
    stage!(4, C5, [A51 => 0, A52 => 1, A53 => 2, A54 => 3]);
    stage!(5, 1.0, [A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4]);
    for i in 0..n {
        y_new[i] = y[i]
            + h * (B1 * ws.k[0][i]
                + B3 * ws.k[2][i]
                + B4 * ws.k[3][i]
                + B5 * ws.k[4][i]
                + B6 * ws.k[5][i]);
    }
    sys.rhs(t + h, y_new, &mut ws.k[6])?;
    let mut acc = 0.0;
    for i in 0..n {
        let e = h
            * (E1 * ws.k[0][i]
                + E3 * ws.k[2][i]
                + E4 * ws.k[3][i]
                + E5 * ws.k[4][i]
                + E6 * ws.k[5][i]
                + E7 * ws.k[6][i]);
        let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
        acc += (e / sc).powi(2);
    }
    Ok((acc / n.max(1) as f64).sqrt())
}

fn initial_step<S: System>(
    sys: &S,
    t: f64,
    y: &[f64],
    f0: &[f64],
    opts: &OdeOptions,
) -> Result<f64> {
    let n = y.len();
    let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let norm = |v: &[f64]| {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1))
}

/// Integrates from `t0` to `t_end` (> `t0`), hitting every checkpoint in
/// `(t0, t_end]` exactly. `events` fills one value per event function.
pub fn solve<S, E>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    checkpoints: &[f64],
    n_events: usize,
    events: E,
    opts: &OdeOptions,
) -> Result<OdeSolution>
where
    S: System,
    E: Fn(f64, &[f64], &mut [f64]),
{
    let n = sys.dim();
    assert_eq!(y0.len(), n);
    let mut marks: Vec<f64> = checkpoints
        .iter()
        .copied()
        .filter(|&c| c > t0 && c < t_end)
        .collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    marks.push(t_end);

    let mut ws = Workspace::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    sys.rhs(t, &y, &mut ws.k[0])?;
    let mut h = match opts.h0 {
        Some(h) => h,
        None => initial_step(sys, t, &y, &ws.k[0].clone(), opts)?,
    };
    let mut g_old = vec![0.0; n_events];
    let mut g_new = vec![0.0; n_events];
    events(t, &y, &mut g_old);

    let mut sol = OdeSolution {
        times: vec![t],
        states: vec![y.clone()],
        event: None,
        accepted: 0,
        rejected: 0,
    };
    let mut y_new = vec![0.0; n];
    let mut mark = 0;

    while mark < marks.len() {
        if sol.accepted + sol.rejected >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let target = marks[mark];
        let h_min = (4.0 * f64::EPSILON * t.abs()).max(1e-300);
        let clamped = t + h >= target;
        let h_try = if clamped { target - t } else { h };
        if h_try < h_min && !clamped {
            return Err(Error::StepSizeUnderflow { t, h: h_try });
        }
        let err = match dp_step(sys, t, &y, h_try, &mut ws, &mut y_new, opts.rtol, opts.atol) {
            Ok(e) if e.is_finite() && y_new.iter().all(|v| v.is_finite()) => e,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                if h_try * 0.25 < h_min {
                    return Err(e);
                }
                f64::INFINITY
            }
        };
        if err > 1.0 {
            sol.rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.25
            };
            h = h_try * factor;
            if h < h_min {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            continue;
        }

        let t_new = if clamped { target } else { t + h_try };
        events(t_new, &y_new, &mut g_new);
        if let Some(k) = (0..n_events).find(|&k| g_old[k] > 0.0 && g_new[k] <= 0.0) {
            let hit = locate_event(sys, t, &y, h_try, &mut ws, n_events, &events, opts, k)?;
            sol.times.push(hit.0);
            sol.states.push(hit.1);
            sol.event = Some(EventHit {
                index: hit.2,
                t: hit.0,
            });
            sol.accepted += 1;
            return Ok(sol);
        }

        sol.accepted += 1;
        t = t_new;
        std::mem::swap(&mut y, &mut y_new);
        let fsal = std::mem::take(&mut ws.k[6]);
        ws.k[6] = std::mem::replace(&mut ws.k[0], fsal);
        std::mem::swap(&mut g_old, &mut g_new);

        let grow = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if clamped {
            h = h.max(h_try * grow);
            mark += 1;
            sol.times.push(t);
            sol.states.push(y.clone());
        } else {
            h = h_try * grow;
            if opts.record_steps {
                sol.times.push(t);
                sol.states.push(y.clone());
            }
        }
    }
    Ok(sol)
}

/// Bisects the step fraction at which the first event function reaches 0.
/// `ws.k[0]` must hold `f(t, y)`; it is restored on return.
#[allow(clippy::too_many_arguments)]
fn locate_event<S, E>(
    sys: &S,
    t: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    n_events: usize,
    events: &E,
    opts: &OdeOptions,
    first: usize,
) -> Result<(f64, Vec<f64>, usize)>
where
    S: System,
    E: Fn(f64, &[f64], &mut [f64]),
{
    let k0 = ws.k[0].clone();
    let mut g0 = vec![0.0; n_events];
    events(t, y, &mut g0);
    let mut g = vec![0.0; n_events];
    let mut y_trial = vec![0.0; y.len()];
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut hi_state = None;
    let mut hi_index = first;
    let res = (opts.event_rel_tol * (t + h).abs().max(1.0)) / h;
    while hi - lo > res {
        let mid = 0.5 * (lo + hi);
        ws.k[0].copy_from_slice(&k0);
        dp_step(sys, t, y, mid * h, ws, &mut y_trial, opts.rtol, opts.atol)?;
        events(t + mid * h, &y_trial, &mut g);
        match (0..n_events).find(|&k| g0[k] > 0.0 && g[k] <= 0.0) {
            Some(k) => {
                hi = mid;
                hi_index = k;
                hi_state = Some(y_trial.clone());
            }
            None => lo = mid,
        }
    }
    let state = match hi_state {
        Some(s) => s,
        None => {
            ws.k[0].copy_from_slice(&k0);
            dp_step(sys, t, y, hi * h, ws, &mut y_trial, opts.rtol, opts.atol)?;
            y_trial.clone()
        }
    };
    ws.k[0].copy_from_slice(&k0);
    Ok((t + hi * h, state, hi_index))
}

/// `n` points geometrically spaced on `[a, b]`, both included.
pub fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(a > 0.0 && b > a && n >= 2);
    let (la, lb) = (a.ln(), b.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = a;
    v[n - 1] = b;
    v
}
