//! Dense two-phase primal simplex for `max c·x  s.t.  A·x ≤ b, x ≥ 0`.
//!
//! Rows with negative right-hand sides get artificial variables and a
//! phase-1 feasibility solve; the all-slack basis starts phase 2 directly
//! otherwise. Pivoting uses Dantzig's rule and falls back to Bland's rule
//! after `10·(m+n)` iterations to guarantee termination. Tableaus are dense
//! — instances here are small.

use crate::scalar::Real;

const PIVOT_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LpError {
    #[error("LP is infeasible")]
    Infeasible,
    #[error("LP is unbounded")]
    Unbounded,
    #[error("simplex exceeded the iteration safety cap")]
    IterationCap,
}

/// One `coeffs·x ≤ rhs` constraint, sparse.
#[derive(Debug, Clone)]
pub struct LpRow<F: Real> {
    pub coeffs: Vec<(usize, F)>,
    pub rhs: F,
}

#[derive(Debug, Clone)]
pub struct LpSolution<F: Real> {
    pub objective: F,
    /// Structural variable values.
    pub x: Vec<F>,
}

struct Tableau {
    rows: usize,
    cols: usize, // total columns incl. rhs
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Gauss-Jordan pivot on (row, col).
    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let pivot_val = self.at(row, col);
        debug_assert!(pivot_val.abs() > PIVOT_EPS);
        let inv = 1.0 / pivot_val;
        for c in 0..cols {
            self.data[row * cols + c] *= inv;
        }
        self.set(row, col, 1.0);
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.at(r, col);
            if factor == 0.0 {
                continue;
            }
            let (head, tail) = self.data.split_at_mut(r.max(row) * cols);
            let (pivot_row, other_row) = if r > row {
                (&head[row * cols..row * cols + cols], &mut tail[..cols])
            } else {
                (&tail[..cols], &mut head[r * cols..r * cols + cols])
            };
            for c in 0..cols {
                other_row[c] -= factor * pivot_row[c];
            }
            self.set(r, col, 0.0);
        }
    }
}

/// Solve `max c·x` over `rows` and `x ≥ 0`.
pub fn solve_lp<F: Real>(objective: &[F], rows: &[LpRow<F>]) -> Result<LpSolution<F>, LpError> {
    let n = objective.len();
    let m = rows.len();

    // columns: structural | slack | artificial | rhs. Artificials are added
    // for rows whose rhs is negative (after sign flip).
    let mut needs_artificial = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if row.rhs.to_f64().unwrap() < 0.0 {
            needs_artificial.push(r);
        }
    }
    let k = needs_artificial.len();
    let cols = n + m + k + 1;
    // one extra row for the objective; during phase 1 a second cost row
    let mut t = Tableau {
        rows: m + 1,
        cols,
        data: vec![0.0; (m + 1) * cols],
        basis: vec![0; m],
    };

    let mut artificial_of_row = vec![usize::MAX; m];
    for (a_idx, &r) in needs_artificial.iter().enumerate() {
        artificial_of_row[r] = n + m + a_idx;
    }

    for (r, row) in rows.iter().enumerate() {
        let flip = if row.rhs.to_f64().unwrap() < 0.0 { -1.0 } else { 1.0 };
        for &(var, coeff) in &row.coeffs {
            debug_assert!(var < n, "coefficient on unknown variable {var}");
            let prev = t.at(r, var);
            t.set(r, var, prev + flip * coeff.to_f64().unwrap());
        }
        t.set(r, n + r, flip); // slack
        t.set(r, cols - 1, flip * row.rhs.to_f64().unwrap());
        if artificial_of_row[r] != usize::MAX {
            t.set(r, artificial_of_row[r], 1.0);
            t.basis[r] = artificial_of_row[r];
        } else {
            t.basis[r] = n + r;
        }
    }

    // phase 1: maximize −Σ artificials. The cost row stores negated
    // objective coefficients, i.e. +1 on artificial columns; subtracting
    // each artificial basis row expresses it in nonbasic variables.
    if k > 0 {
        for &r in &needs_artificial {
            t.set(m, artificial_of_row[r], 1.0);
        }
        for &r in &needs_artificial {
            for c in 0..cols {
                let v = t.at(m, c) - t.at(r, c);
                t.set(m, c, v);
            }
        }
        run_simplex(&mut t, n + m)?;
        // stored rhs = −(minimal artificial sum)
        if t.at(m, cols - 1) < -1e-7 {
            return Err(LpError::Infeasible);
        }
        // drive any artificial still in the basis out (degenerate at zero)
        for r in 0..m {
            if t.basis[r] >= n + m {
                let mut pivot_col = None;
                for c in 0..n + m {
                    if t.at(r, c).abs() > PIVOT_EPS {
                        pivot_col = Some(c);
                        break;
                    }
                }
                if let Some(c) = pivot_col {
                    t.pivot(r, c);
                    t.basis[r] = c;
                }
                // a fully-zero row is redundant; the artificial stays basic
                // at zero and never re-enters because its column is ignored
            }
        }
        // reset the cost row for phase 2
        for c in 0..cols {
            t.set(m, c, 0.0);
        }
    }

    // phase 2 cost row: reduced costs of max c·x (stored negated so the
    // objective cell ends up at +optimum)
    for (var, &cv) in objective.iter().enumerate() {
        t.set(m, var, -cv.to_f64().unwrap());
    }
    // express in terms of the current basis
    for r in 0..m {
        let bv = t.basis[r];
        let factor = t.at(m, bv);
        if factor != 0.0 {
            for c in 0..cols {
                let v = t.at(m, c) - factor * t.at(r, c);
                t.set(m, c, v);
            }
        }
    }
    run_simplex(&mut t, n + m)?;

    let mut x = vec![F::zero(); n];
    for r in 0..m {
        if t.basis[r] < n {
            x[t.basis[r]] = F::from_f64_lit(t.at(r, cols - 1));
        }
    }
    Ok(LpSolution {
        objective: F::from_f64_lit(t.at(m, cols - 1)),
        x,
    })
}

/// Run primal simplex on the prepared tableau, allowing entering columns
/// `0..allowed_cols`.
fn run_simplex(t: &mut Tableau, allowed_cols: usize) -> Result<(), LpError> {
    let m = t.rows - 1;
    let obj_row = m;
    let rhs_col = t.cols - 1;
    let bland_after = 10 * (m + allowed_cols);
    let hard_cap = 50 * (m + allowed_cols) + 10_000;

    for iter in 0..hard_cap {
        let bland = iter >= bland_after;
        // entering column: positive reduced cost means the (negated) cost
        // row can still decrease
        let mut entering = None;
        if bland {
            for c in 0..allowed_cols {
                if t.at(obj_row, c) < -PIVOT_EPS {
                    entering = Some(c);
                    break;
                }
            }
        } else {
            let mut best = -PIVOT_EPS;
            for c in 0..allowed_cols {
                let rc = t.at(obj_row, c);
                if rc < best {
                    best = rc;
                    entering = Some(c);
                }
            }
        }
        let Some(col) = entering else {
            return Ok(()); // optimal
        };

        // ratio test; ties by smaller basis variable index keeps Bland's
        // rule anti-cycling guarantee
        let mut leaving: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = t.at(r, col);
            if a > PIVOT_EPS {
                let ratio = t.at(r, rhs_col) / a;
                match leaving {
                    None => leaving = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - PIVOT_EPS
                            || (ratio < lratio + PIVOT_EPS && t.basis[r] < t.basis[lr])
                        {
                            leaving = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((row, _)) = leaving else {
            return Err(LpError::Unbounded);
        };
        t.pivot(row, col);
        t.basis[row] = col;
        if iter % 1000 == 999 && std::env::var_os("REBALANCE_LP_DEBUG").is_some() {
            eprintln!(
                "[lp] {} pivots, obj {:.4}, bland {}",
                iter + 1,
                t.at(obj_row, rhs_col),
                bland
            );
        }
    }
    Err(LpError::IterationCap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row(coeffs: &[(usize, f64)], rhs: f64) -> LpRow<f64> {
        LpRow {
            coeffs: coeffs.to_vec(),
            rhs,
        }
    }

    #[test]
    fn textbook_two_variable_lp() {
        // max 3x + 5y s.t. x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), obj 36
        let sol = solve_lp(
            &[3.0, 5.0],
            &[
                row(&[(0, 1.0)], 4.0),
                row(&[(1, 2.0)], 12.0),
                row(&[(0, 3.0), (1, 2.0)], 18.0),
            ],
        )
        .unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-9);
        assert!((sol.x[0] - 2.0).abs() < 1e-9);
        assert!((sol.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn unbounded_is_detected() {
        // max x with only y constrained
        let err = solve_lp(&[1.0, 0.0], &[row(&[(1, 1.0)], 5.0)]).unwrap_err();
        assert_eq!(err, LpError::Unbounded);
    }

    #[test]
    fn negative_rhs_forces_phase_one() {
        // max x s.t. x ≤ 10, −x ≤ −3 (i.e. x ≥ 3) → 10
        let sol = solve_lp(&[1.0], &[row(&[(0, 1.0)], 10.0), row(&[(0, -1.0)], -3.0)]).unwrap();
        assert!((sol.objective - 10.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_bounds_are_detected() {
        // x ≤ 2 and x ≥ 5
        let err = solve_lp(&[1.0], &[row(&[(0, 1.0)], 2.0), row(&[(0, -1.0)], -5.0)]).unwrap_err();
        assert_eq!(err, LpError::Infeasible);
    }

    #[test]
    fn degenerate_lp_terminates() {
        // multiple redundant constraints through the origin
        let sol = solve_lp(
            &[1.0, 1.0],
            &[
                row(&[(0, 1.0), (1, 1.0)], 1.0),
                row(&[(0, 1.0), (1, 1.0)], 1.0),
                row(&[(0, 2.0), (1, 2.0)], 2.0),
                row(&[(0, 1.0)], 0.0),
            ],
        )
        .unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    /// Random LPs with a known optimum built from complementary slackness:
    /// pick x* ≥ 0 and y* ≥ 0 with matching supports, set
    /// b = A·x* + slack (slack zero where y* > 0) and
    /// c = Aᵀ·y* − excess (excess zero where x* > 0); then
    /// c·x* = y*ᵀ·A·x* = b·y* certifies optimality by weak duality.
    #[test]
    fn random_lps_match_dual_certificates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..60 {
            let n = rng.gen_range(2..7);
            let m = rng.gen_range(2..7);
            let a: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..n).map(|_| rng.gen_range(0.0..3.0)).collect())
                .collect();
            let x_star: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        rng.gen_range(0.0..4.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let y_star: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        rng.gen_range(0.1..2.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let b: Vec<f64> = (0..m)
                .map(|r| {
                    let ax: f64 = (0..n).map(|j| a[r][j] * x_star[j]).sum();
                    let slack = if y_star[r] > 0.0 { 0.0 } else { rng.gen_range(0.0..2.0) };
                    ax + slack
                })
                .collect();
            let c: Vec<f64> = (0..n)
                .map(|j| {
                    let aty: f64 = (0..m).map(|r| a[r][j] * y_star[r]).sum();
                    let excess = if x_star[j] > 0.0 { 0.0 } else { rng.gen_range(0.0..1.0) };
                    aty - excess
                })
                .collect();
            let certified: f64 = c.iter().zip(&x_star).map(|(c, x)| c * x).sum();

            let rows: Vec<LpRow<f64>> = (0..m)
                .map(|r| LpRow {
                    coeffs: (0..n).map(|j| (j, a[r][j])).collect(),
                    rhs: b[r],
                })
                .collect();
            let sol = solve_lp(&c, &rows).unwrap();
            assert!(
                (sol.objective - certified).abs() < 1e-8,
                "trial {trial}: simplex {} vs certificate {certified}",
                sol.objective
            );
        }
    }
}
