//! Sign/point configurations, their interaction matrices and the
//! degeneracy taxonomy.
//!
//! A configuration is *degenerate* when its interaction matrix has a
//! nonzero kernel element in the closed nonnegative orthant. Verdicts:
//!
//! * `TotallyNonDegenerate`: no sub-configuration of size >= 2 is degenerate.
//! * `NonDegenerate`: the full configuration is not, some proper one is.
//! * `MinimallyDegenerate`: degenerate, every proper sub-configuration is not.
//! * `DeeplyDegenerate`: degenerate with a degenerate proper sub-configuration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::constants::{Dimension, UniversalConstants};
use crate::error::{Error, Result};
use crate::linalg::{kernel_split, rank_of};
use crate::simplex::{self, LpOutcome};

/// Largest `J` for which subset and permutation enumeration is allowed.
pub const MAX_ENUMERATED: usize = 12;

/// Default relative singular-value cutoff.
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfiguration")]
pub struct Configuration {
    dim: Dimension,
    signs: Vec<i8>,
    points: Vec<Vec<f64>>,
}

/// Unvalidated on-disk form: `{"dim": N, "signs": [..], "points": [[..], ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfiguration {
    pub dim: i64,
    pub signs: Vec<i64>,
    pub points: Vec<Vec<f64>>,
}

impl TryFrom<RawConfiguration> for Configuration {
    type Error = Error;

    /// Validation failures all surface as `Validation` with a message naming
    /// the violated invariant.
    fn try_from(raw: RawConfiguration) -> Result<Self> {
        let dim = u32::try_from(raw.dim)
            .ok()
            .and_then(|n| Dimension::new(n).ok())
            .ok_or_else(|| Error::Validation("N ≥ 7 required".into()))?;
        if let Some(s) = raw.signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::Validation(format!(
                "signs must be +1 or -1, got {s}"
            )));
        }
        let signs = raw.signs.iter().map(|&s| s as i8).collect();
        Configuration::new(dim, signs, raw.points).map_err(|e| match e {
            Error::DuplicatePoints(..) => Error::Validation("points must be distinct".into()),
            Error::ShapeMismatch(m) => Error::Validation(m),
            other => other,
        })
    }
}

impl From<&Configuration> for RawConfiguration {
    fn from(c: &Configuration) -> Self {
        RawConfiguration {
            dim: c.dim.get() as i64,
            signs: c.signs.iter().map(|&s| s as i64).collect(),
            points: c.points.clone(),
        }
    }
}

impl Configuration {
    /// Validates and builds a configuration. Each point must have exactly
    /// `N` finite coordinates; signs must be `+1` or `-1`.
    pub fn new(dim: Dimension, signs: Vec<i8>, points: Vec<Vec<f64>>) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::Validation("at least one bubble required".into()));
        }
        if signs.len() != points.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} signs but {} points",
                signs.len(),
                points.len()
            )));
        }
        if let Some(s) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::Validation(format!(
                "signs must be +1 or -1, got {s}"
            )));
        }
        let n = dim.get() as usize;
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "point {i} has {} coordinates, expected {n}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if distance(&points[i], &points[j]) <= 0.0 {
                    return Err(Error::DuplicatePoints(i, j));
                }
            }
        }
        Ok(Configuration { dim, signs, points })
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// The sub-configuration on `indices` (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Configuration::new(
            self.dim,
            indices.iter().map(|&i| self.signs[i]).collect(),
            indices.iter().map(|&i| self.points[i].clone()).collect(),
        )
    }

    pub fn min_pair_distance(&self) -> f64 {
        min_pair_distance(&self.points)
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn min_pair_distance(points: &[Vec<f64>]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            m = m.min(distance(&points[i], &points[j]));
        }
    }
    m
}

/// Symmetric `J x J` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix(DMatrix<f64>);

impl InteractionMatrix {
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::ShapeMismatch(
                "interaction matrix must be square".into(),
            ));
        }
        Ok(InteractionMatrix(m))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    pub fn principal_submatrix(&self, indices: &[usize]) -> InteractionMatrix {
        let k = indices.len();
        InteractionMatrix(DMatrix::from_fn(k, k, |a, b| {
            self.0[(indices[a], indices[b])]
        }))
    }
}

/// `A[z]_ij = 1_{i != j} kappa0 kappaInf s_i s_j / |z_i - z_j|^(N-2)`
/// for arbitrary (possibly moving) centers.
pub fn interaction_matrix_for(
    consts: &UniversalConstants,
    signs: &[i8],
    points: &[Vec<f64>],
) -> Result<InteractionMatrix> {
    let j = signs.len();
    let k = consts.kappa0 * consts.kappa_inf;
    let two_d = 2.0 * consts.d;
    let mut m = DMatrix::zeros(j, j);
    for a in 0..j {
        for b in a + 1..j {
            let r = distance(&points[a], &points[b]);
            if r <= 0.0 {
                return Err(Error::DuplicatePoints(a, b));
            }
            let v = k * (signs[a] * signs[b]) as f64 / r.powf(two_d);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(InteractionMatrix(m))
}

pub fn interaction_matrix(
    cfg: &Configuration,
    consts: &UniversalConstants,
) -> Result<InteractionMatrix> {
    interaction_matrix_for(consts, &cfg.signs, &cfg.points)
}

/// A nonnegative kernel element normalized to unit sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelWitness {
    pub c: Vec<f64>,
    /// `|A c| / (sigma_max |c|)`.
    pub residual: f64,
    /// Residual within a factor 10 below the tolerance.
    pub marginal: bool,
}

// Components this small relative to the largest are treated as zero when
// inspecting the sign pattern of a one-dimensional kernel.
const SIGN_ZERO: f64 = 1e-10;
const LP_TOL: f64 = 1e-10;

fn kernel_constraints(range: &[DVector<f64>], j: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rows: Vec<Vec<f64>> = range.iter().map(|u| u.iter().copied().collect()).collect();
    let mut rhs = vec![0.0; rows.len()];
    rows.push(vec![1.0; j]);
    rhs.push(1.0);
    (rows, rhs)
}

fn witness_from(a: &DMatrix<f64>, c: Vec<f64>, tol: f64, sigma_max: f64) -> KernelWitness {
    let v = DVector::from_column_slice(&c);
    let residual = (a * &v).norm() / (sigma_max.max(f64::MIN_POSITIVE) * v.norm());
    KernelWitness {
        marginal: residual >= tol / 10.0 && residual <= tol,
        residual,
        c,
    }
}

/// Searches for `c >= 0`, `sum c = 1`, `A c = 0` (numerically: `c` in the
/// kernel cut at `tol * sigma_max`). `None` means nondegenerate.
pub fn nonnegative_kernel_witness(
    a: &InteractionMatrix,
    tol: f64,
) -> Result<Option<KernelWitness>> {
    let j = a.len();
    if j == 0 {
        return Ok(None);
    }
    let split = kernel_split(a.entries(), tol)?;
    let smax = split.singular_values[0];
    match split.kernel.len() {
        0 => Ok(None),
        1 => {
            let v = &split.kernel[0];
            let vmax = v.amax();
            let pos = v.iter().any(|&x| x > SIGN_ZERO * vmax);
            let neg = v.iter().any(|&x| x < -SIGN_ZERO * vmax);
            if pos && neg {
                return Ok(None);
            }
            let sign = if neg { -1.0 } else { 1.0 };
            let mut c: Vec<f64> = v.iter().map(|&x| (sign * x).max(0.0)).collect();
            let s: f64 = c.iter().sum();
            c.iter_mut().for_each(|x| *x /= s);
            Ok(Some(witness_from(a.entries(), c, tol, smax)))
        }
        _ => {
            let (rows, rhs) = kernel_constraints(&split.range, j);
            Ok(simplex::find_feasible(&rows, &rhs, LP_TOL)
                .map(|c| witness_from(a.entries(), c, tol, smax)))
        }
    }
}

/// Vertices of the nonnegative kernel polytope obtained by maximizing each
/// coordinate in turn, reduced to a linearly independent set. Their count
/// is the number of independent nonnegative kernel elements found.
pub fn nonnegative_kernel_generators(a: &InteractionMatrix, tol: f64) -> Result<Vec<Vec<f64>>> {
    let j = a.len();
    let split = kernel_split(a.entries(), tol)?;
    if split.kernel.is_empty() {
        return Ok(vec![]);
    }
    let (rows, rhs) = kernel_constraints(&split.range, j);
    let mut found: Vec<DVector<f64>> = Vec::new();
    for i in 0..j {
        let mut cost = vec![0.0; j];
        cost[i] = -1.0;
        if let LpOutcome::Optimal { x, value } = simplex::solve(&rows, &rhs, &cost, LP_TOL) {
            if -value > 1e-9 {
                let v = DVector::from_vec(x);
                let mut trial = found.clone();
                trial.push(v.clone());
                if rank_of(&trial, 1e-8) == trial.len() {
                    found.push(v);
                }
            }
        }
    }
    Ok(found
        .into_iter()
        .map(|v| v.iter().copied().collect())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    TotallyNonDegenerate,
    NonDegenerate,
    MinimallyDegenerate,
    DeeplyDegenerate,
}

impl Verdict {
    pub fn is_degenerate(self) -> bool {
        matches!(
            self,
            Verdict::MinimallyDegenerate | Verdict::DeeplyDegenerate
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetVerdict {
    pub indices: Vec<usize>,
    pub degenerate: bool,
    pub marginal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub verdict: Verdict,
    pub tol: f64,
    pub kernel_basis: Vec<Vec<f64>>,
    /// Nonnegative kernel element with unit sum, when degenerate.
    pub witness: Option<KernelWitness>,
    /// Number of linearly independent nonnegative kernel elements found.
    pub nonnegative_kernel_rank: usize,
    /// Unit-norm positive kernel vector, when minimally degenerate.
    pub positive_kernel: Option<Vec<f64>>,
    pub drift_vectors: Option<Vec<Vec<f64>>>,
    pub drift_norm_sq: Option<f64>,
    /// The drift vectors vanish to roundoff (a state with no known example).
    pub drift_vanishes: Option<bool>,
    pub marginal: bool,
    pub sub_reports: Vec<SubsetVerdict>,
}

/// `v_i = sum_j A_ij c_i c_j (z_j - z_i) / |z_i - z_j|^2`.
pub fn drift_vectors(points: &[Vec<f64>], a: &InteractionMatrix, c: &[f64]) -> Vec<Vec<f64>> {
    let j = points.len();
    let n = points.first().map_or(0, |p| p.len());
    let mut out = vec![vec![0.0; n]; j];
    for i in 0..j {
        for k in 0..j {
            if k == i {
                continue;
            }
            let r2: f64 = points[i]
                .iter()
                .zip(&points[k])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let w = a.get(i, k) * c[i] * c[k] / r2;
            for (o, (zk, zi)) in out[i].iter_mut().zip(points[k].iter().zip(&points[i])) {
                *o += w * (zk - zi);
            }
        }
    }
    out
}

fn drift_scale(points: &[Vec<f64>], a: &InteractionMatrix, c: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..points.len() {
        for k in 0..points.len() {
            if k != i {
                s += a.get(i, k).abs() * c[i] * c[k] / distance(&points[i], &points[k]);
            }
        }
    }
    s
}

fn mask_indices(mask: u32, j: usize) -> Vec<usize> {
    (0..j).filter(|&i| mask & (1 << i) != 0).collect()
}

/// Full degeneracy classification over all sub-configurations of size >= 2.
pub fn classify(
    cfg: &Configuration,
    consts: &UniversalConstants,
    tol: f64,
) -> Result<DegeneracyReport> {
    let j = cfg.len();
    if j < 2 {
        return Err(Error::Validation(
            "classification needs at least two bubbles".into(),
        ));
    }
    if j > MAX_ENUMERATED {
        return Err(Error::TooManyBubbles(j));
    }
    let a = interaction_matrix(cfg, consts)?;
    let full_mask: u32 = (1u32 << j) - 1;

    let mut sub_reports = Vec::new();
    let mut proper_degenerate = false;
    let mut full_witness = None;
    for mask in 1..=full_mask {
        if mask.count_ones() < 2 {
            continue;
        }
        let idx = mask_indices(mask, j);
        let sub = a.principal_submatrix(&idx);
        let w = nonnegative_kernel_witness(&sub, tol)?;
        let degenerate = w.is_some();
        if mask == full_mask {
            full_witness = w.clone();
        } else if degenerate {
            proper_degenerate = true;
        }
        sub_reports.push(SubsetVerdict {
            indices: idx,
            degenerate,
            marginal: w.is_some_and(|w| w.marginal),
        });
    }

    let verdict = match (full_witness.is_some(), proper_degenerate) {
        (false, false) => Verdict::TotallyNonDegenerate,
        (false, true) => Verdict::NonDegenerate,
        (true, false) => Verdict::MinimallyDegenerate,
        (true, true) => Verdict::DeeplyDegenerate,
    };

    let split = kernel_split(a.entries(), tol)?;
    let kernel_basis: Vec<Vec<f64>> = split
        .kernel
        .iter()
        .map(|v| v.iter().copied().collect())
        .collect();
    let nonnegative_kernel_rank = if verdict.is_degenerate() {
        nonnegative_kernel_generators(&a, tol)?.len().max(1)
    } else {
        0
    };

    let (mut positive_kernel, mut drift, mut drift_norm_sq, mut drift_vanishes) =
        (None, None, None, None);
    if verdict == Verdict::MinimallyDegenerate {
        let w = full_witness
            .as_ref()
            .expect("degenerate verdict has a witness");
        let norm = w.c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c: Vec<f64> = w.c.iter().map(|x| x / norm).collect();
        let v = drift_vectors(cfg.points(), &a, &c);
        let nsq: f64 = v.iter().flatten().map(|x| x * x).sum();
        let scale = drift_scale(cfg.points(), &a, &c);
        drift_vanishes = Some(nsq.sqrt() <= 1e-10 * scale);
        drift_norm_sq = Some(nsq);
        drift = Some(v);
        positive_kernel = Some(c);
    }

    Ok(DegeneracyReport {
        verdict,
        tol,
        kernel_basis,
        marginal: full_witness.as_ref().is_some_and(|w| w.marginal),
        witness: full_witness,
        nonnegative_kernel_rank,
        positive_kernel,
        drift_vectors: drift,
        drift_norm_sq,
        drift_vanishes,
        sub_reports,
    })
}

/// The aspect ratio `q0 > 1` with `q0^(-2D) + (1 + q0^2)^(-D) = 1`.
pub fn root_q0(dim: Dimension) -> f64 {
    let d = dim.half_gap();
    let g = |q: f64| q.powf(-2.0 * d) + (1.0 + q * q).powf(-d) - 1.0;
    // g is strictly decreasing on (1, inf), positive at 1 and negative at 10.
    let (mut lo, mut hi) = (1.0f64, 10.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// A degenerate four-point configuration from the one-parameter family
/// through the lozenge, with its kernel vector `(1, 1, c3, c4)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LozengeMember {
    pub config: Configuration,
    pub d3: f64,
    pub d4: f64,
    pub kernel: [f64; 4],
    /// `F(d3, d4)` at the returned root.
    pub residual: f64,
}

fn lozenge_f(d: f64, d3: f64, s: f64) -> f64 {
    let d4 = d3 - s;
    let log_g = 4f64.ln() + 2.0 * d * s.ln() - d * (d3 * d3 + 1.0).ln() - d * (d4 * d4 + 1.0).ln();
    2f64.powf(-2.0 * d) - log_g.exp()
}

fn axis_point(n: usize, entries: &[(usize, f64)]) -> Vec<f64> {
    let mut p = vec![0.0; n];
    for &(k, v) in entries {
        p[k] = v;
    }
    p
}

/// Solves `F(d3, d4) = 0` for the largest root `d4 < d3` and returns the
/// configuration `(-1,0), (1,0), (0,d3), (0,d4)` with signs `(+,+,-,-)`.
pub fn lozenge_family(dim: Dimension, d3: f64) -> Result<LozengeMember> {
    let d = dim.half_gap();
    let s_max = 1e6 * (1.0 + d3.abs());
    // Scan s = d3 - d4 geometrically for the first sign change.
    let mut lo = 1e-6;
    let mut bracket = None;
    while lo < s_max {
        let hi = (lo * 1.05).min(s_max);
        if lozenge_f(d, d3, lo) > 0.0 && lozenge_f(d, d3, hi) <= 0.0 {
            bracket = Some((lo, hi));
            break;
        }
        lo = hi;
    }
    let Some((mut a, mut b)) = bracket else {
        return Err(Error::RootNotBracketed {
            lo: d3 - s_max,
            hi: d3,
        });
    };
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if lozenge_f(d, d3, m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let s = if lozenge_f(d, d3, a).abs() <= lozenge_f(d, d3, b).abs() {
        a
    } else {
        b
    };
    let d4 = d3 - s;
    let c3 = 2.0 * (2.0 * d * s.ln() - d * (d4 * d4 + 1.0).ln()).exp();
    let c4 = 2.0 * (2.0 * d * s.ln() - d * (d3 * d3 + 1.0).ln()).exp();
    let n = dim.get() as usize;
    let config = Configuration::new(
        dim,
        vec![1, 1, -1, -1],
        vec![
            axis_point(n, &[(0, -1.0)]),
            axis_point(n, &[(0, 1.0)]),
            axis_point(n, &[(1, d3)]),
            axis_point(n, &[(1, d4)]),
        ],
    )?;
    Ok(LozengeMember {
        config,
        d3,
        d4,
        kernel: [1.0, 1.0, c3, c4],
        residual: lozenge_f(d, d3, s),
    })
}

/// `L` unit-width rectangles of aspect `q0`, the `k`-th one spanning the
/// first and `(k+1)`-th coordinate axes; `4L` bubbles in total.
pub fn multi_kernel_family(dim: Dimension, l: usize) -> Result<Configuration> {
    let n = dim.get() as usize;
    if l == 0 || l > n - 1 {
        return Err(Error::LOutOfRange { l, max: n - 1 });
    }
    let h = 0.5 * root_q0(dim);
    let mut signs = Vec::with_capacity(4 * l);
    let mut points = Vec::with_capacity(4 * l);
    for k in 1..=l {
        for (x, y, s) in [(0.5, h, 1), (-0.5, h, 1), (0.5, -h, -1), (-0.5, -h, -1)] {
            signs.push(s);
            points.push(axis_point(n, &[(0, x), (k, y)]));
        }
    }
    Configuration::new(dim, signs, points)
}

/// Signs, scales and centers of a pure multi-bubble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTuple {
    pub signs: Vec<i8>,
    pub scales: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
}

impl ParameterTuple {
    pub fn new(signs: Vec<i8>, scales: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if signs.len() != scales.len() || signs.len() != centers.len() {
            return Err(Error::ShapeMismatch(
                "signs, scales and centers differ in length".into(),
            ));
        }
        if scales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Validation(
                "scales must be positive and finite".into(),
            ));
        }
        Ok(ParameterTuple {
            signs,
            scales,
            centers,
        })
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDistance {
    pub distance: f64,
    /// Bubble `i` of the first tuple is matched with `permutation[i]` of the second.
    pub permutation: Vec<usize>,
}

fn pair_cost(a: &ParameterTuple, i: usize, b: &ParameterTuple, k: usize) -> f64 {
    let ds = (a.signs[i] - b.signs[k]).abs() as f64;
    let dl = (a.scales[i] / b.scales[k]).ln().abs();
    let dz = distance(&a.centers[i], &b.centers[k]);
    (ds + dl + dz / a.scales[i] + dz / b.scales[k]).min(1.0)
}

/// Bottleneck matching distance between two tuples; returns the
/// lexicographically first minimizing permutation.
pub fn parameter_distance(a: &ParameterTuple, b: &ParameterTuple) -> Result<ParameterDistance> {
    let j = a.len();
    if b.len() != j {
        return Err(Error::ShapeMismatch(format!(
            "J = {} vs J = {}",
            j,
            b.len()
        )));
    }
    if a.centers
        .iter()
        .chain(&b.centers)
        .any(|c| c.len() != a.centers.first().map_or(0, |x| x.len()))
    {
        return Err(Error::ShapeMismatch("centers differ in dimension".into()));
    }
    if j > MAX_ENUMERATED {
        return Err(Error::TooManyBubbles(j));
    }
    if j == 0 {
        return Ok(ParameterDistance {
            distance: 0.0,
            permutation: vec![],
        });
    }
    let cost: Vec<Vec<f64>> = (0..j)
        .map(|i| (0..j).map(|k| pair_cost(a, i, b, k)).collect())
        .collect();

    struct Search<'a> {
        cost: &'a [Vec<f64>],
        used: Vec<bool>,
        current: Vec<usize>,
        best: f64,
        best_perm: Vec<usize>,
    }

    impl Search<'_> {
        fn lower_bound(&self, row: usize) -> f64 {
            let mut lb = 0.0f64;
            for r in row..self.cost.len() {
                let m = (0..self.cost.len())
                    .filter(|&k| !self.used[k])
                    .map(|k| self.cost[r][k])
                    .fold(f64::INFINITY, f64::min);
                lb = lb.max(m);
            }
            lb
        }

        fn run(&mut self, row: usize, partial: f64) {
            let j = self.cost.len();
            if row == j {
                if partial < self.best {
                    self.best = partial;
                    self.best_perm = self.current.clone();
                }
                return;
            }
            for k in 0..j {
                if self.used[k] {
                    continue;
                }
                let p = partial.max(self.cost[row][k]);
                if p >= self.best {
                    continue;
                }
                self.used[k] = true;
                self.current.push(k);
                if self.lower_bound(row + 1).max(p) < self.best {
                    self.run(row + 1, p);
                }
                self.current.pop();
                self.used[k] = false;
            }
        }
    }

    let mut search = Search {
        cost: &cost,
        used: vec![false; j],
        current: Vec::with_capacity(j),
        best: f64::INFINITY,
        best_perm: (0..j).collect(),
    };
    search.run(0, 0.0);
    Ok(ParameterDistance {
        distance: search.best,
        permutation: search.best_perm,
    })
}

/// `min over nonempty I of |A_I lambda_I^D| / |lambda_I^D| + sum_{i not in I} lambda_i / lambda_max`.
pub fn distance_from_degeneracy(
    cfg: &Configuration,
    consts: &UniversalConstants,
    scales: &[f64],
) -> Result<f64> {
    let j = cfg.len();
    if scales.len() != j {
        return Err(Error::ShapeMismatch(format!(
            "{} scales for {} bubbles",
            scales.len(),
            j
        )));
    }
    if scales.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Validation("scales must be positive".into()));
    }
    if j > MAX_ENUMERATED {
        return Err(Error::TooManyBubbles(j));
    }
    let a = interaction_matrix(cfg, consts)?;
    let lmax = scales.iter().cloned().fold(0.0, f64::max);
    let pow: Vec<f64> = scales.iter().map(|l| l.powf(consts.d)).collect();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << j) {
        let idx = mask_indices(mask, j);
        let mut num = 0.0;
        let mut den = 0.0;
        for &r in &idx {
            let row: f64 = idx.iter().map(|&c| a.get(r, c) * pow[c]).sum();
            num += row * row;
            den += pow[r] * pow[r];
        }
        let outside: f64 = (0..j)
            .filter(|i| mask & (1 << i) == 0)
            .map(|i| scales[i] / lmax)
            .sum();
        best = best.min(num.sqrt() / den.sqrt() + outside);
    }
    Ok(best)
}
