//! Dense two-phase simplex for small standard-form programs
//! `min c.x  s.t.  A x = b, x >= 0`.
//!
//! Pivoting uses Bland's rule, which cannot cycle. Sizes here are tiny
//! (a dozen variables), so a full tableau is the simplest correct choice.

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Infeasible { phase_one_value: f64 },
    Unbounded,
    Optimal { x: Vec<f64>, value: f64 },
}

struct Tableau {
    rows: Vec<Vec<f64>>, // m rows, each with `cols + 1` entries (last is rhs)
    basis: Vec<usize>,
    cols: usize,
}

const PIVOT_TOL: f64 = 1e-12;

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Reduced costs of `cost` (length `cols`) relative to the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut red = cost.to_vec();
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = cost[bi];
            if cb != 0.0 {
                for (j, r) in red.iter_mut().enumerate() {
                    *r -= cb * self.rows[i][j];
                }
            }
        }
        red
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(i, &bi)| cost[bi] * self.rhs(i))
            .sum()
    }

    /// Runs Bland-rule iterations; `allowed` masks enterable columns.
    /// Returns false if the program is unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], tol: f64) -> bool {
        let max_iter = 50 * (self.cols + self.rows.len()) + 100;
        for _ in 0..max_iter {
            let red = self.reduced_costs(cost);
            let entering =
                (0..self.cols).find(|&j| allowed[j] && red[j] < -tol && !self.basis.contains(&j));
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-15
                                || (ratio <= lr + 1e-15 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, c);
        }
        true
    }
}

/// Solves `min c.x` subject to `A x = b`, `x >= 0`.
///
/// `tol` is the feasibility threshold on the phase-one objective (sum of
/// artificial variables) and the optimality threshold on reduced costs.
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64], tol: f64) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    assert_eq!(b.len(), m);
    assert!(a.iter().all(|row| row.len() == n));

    let cols = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; cols + 1];
        for j in 0..n {
            row[j] = sign * a[i][j];
        }
        row[n + i] = 1.0;
        row[cols] = sign * b[i];
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (n..n + m).collect(),
        cols,
    };

    let mut phase_one_cost = vec![0.0; cols];
    for v in phase_one_cost.iter_mut().skip(n) {
        *v = 1.0;
    }
    let all = vec![true; cols];
    t.optimize(&phase_one_cost, &all, tol * 1e-3);
    let infeasibility = t.objective(&phase_one_cost);
    if infeasibility > tol {
        return LpOutcome::Infeasible {
            phase_one_value: infeasibility,
        };
    }

    // Drive remaining artificials out of the basis; rows with no usable
    // pivot are redundant and keep their (zero) artificial.
    for r in 0..m {
        if t.basis[r] >= n {
            if let Some(c) = (0..n).find(|&j| t.rows[r][j].abs() > 1e-9) {
                t.pivot(r, c);
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let mut allowed = vec![true; cols];
    for v in allowed.iter_mut().skip(n) {
        *v = false;
    }
    if !t.optimize(&cost, &allowed, tol * 1e-3) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bi) in t.basis.iter().enumerate() {
        if bi < n {
            x[bi] = t.rhs(i).max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, value }
}

/// Phase one only: some `x >= 0` with `A x = b`, if one exists.
pub fn find_feasible(a: &[Vec<f64>], b: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = a.first().map_or(0, |r| r.len());
    match solve(a, b, &vec![0.0; n], tol) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}
