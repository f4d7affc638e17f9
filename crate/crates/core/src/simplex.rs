//! Self-contained phase-1 simplex for equality-form feasibility problems.
//!
//! Answers "does some x >= 0 satisfy A x = b" by minimizing the sum of
//! artificial variables on a dense tableau with Bland's anti-cycling rule.
//! When the optimum is positive the problem is infeasible and the simplex
//! multipliers give a Farkas certificate: a vector y with yᵀA <= 0
//! componentwise and yᵀb > 0. Downstream code turns that certificate into a
//! separating functional, so it is verified here before being returned.
//!
//! Storage is dense (rows x (columns + rows + 1) doubles), which is fine for
//! the vertex-enumeration problems this crate builds but grows quickly;
//! oversized tableaus are refused rather than thrashing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reduced costs above this threshold count as non-negative.
const REDUCED_COST_TOL: f64 = 1e-10;
/// Minimum pivot magnitude accepted in the ratio test.
const PIVOT_TOL: f64 = 1e-11;
/// Certificate slack allowed on the componentwise yᵀA <= 0 check.
pub const CERTIFICATE_TOL: f64 = 1e-9;
/// Hard cap on tableau memory.
const MAX_TABLEAU_BYTES: usize = 2 << 30;

#[derive(Clone, Debug)]
pub enum FeasibilityOutcome {
    /// A basic feasible solution of `A x = b`, `x >= 0`.
    Feasible { x: Vec<f64> },
    /// Farkas certificate: `yᵀA <= 0` componentwise (up to
    /// [`CERTIFICATE_TOL`]) while `gap = yᵀb > 0`.
    Infeasible { y: Vec<f64>, gap: f64 },
}

/// Phase-1 feasibility threshold, scaled with the right-hand side.
pub fn feasibility_tolerance(b: &DVector<f64>) -> f64 {
    1e-9 * (1.0 + b.iter().map(|v| v.abs()).sum::<f64>())
}

pub fn solve_equality_feasibility(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<FeasibilityOutcome> {
    let m = a.nrows();
    let n = a.ncols();
    if b.len() != m {
        return Err(Error::Structural(format!(
            "right-hand side has {} entries for {m} constraint rows",
            b.len()
        )));
    }
    if m == 0 {
        return Ok(FeasibilityOutcome::Feasible { x: vec![0.0; n] });
    }
    let cols = n + m + 1;
    let bytes = m
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Resource("tableau size overflows".into()))?;
    if bytes > MAX_TABLEAU_BYTES {
        return Err(Error::Resource(format!(
            "dense tableau would need {bytes} bytes ({m} rows, {cols} columns); \
             the cap is {MAX_TABLEAU_BYTES}"
        )));
    }

    // Tableau layout: [A | I | b] with rows flipped so b >= 0; the artificial
    // block doubles as the certificate bookkeeping.
    let mut flip = vec![1.0f64; m];
    let mut t = vec![0.0f64; m * cols];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        flip[i] = s;
        for j in 0..n {
            t[i * cols + j] = s * a[(i, j)];
        }
        t[i * cols + n + i] = 1.0;
        t[i * cols + n + m] = s * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Reduced-cost row for the phase-1 objective (all-ones on artificials);
    // its last entry tracks -objective.
    let mut r = vec![0.0f64; cols];
    for (j, rj) in r.iter_mut().enumerate() {
        let mut s = if (n..n + m).contains(&j) { 1.0 } else { 0.0 };
        for i in 0..m {
            s -= t[i * cols + j];
        }
        *rj = s;
    }

    let max_iters = 50_000 + 100 * m;
    let mut optimal = false;
    for _ in 0..max_iters {
        // Bland's rule: lowest-index improving column.
        let Some(enter) = (0..n + m).find(|&j| r[j] < -REDUCED_COST_TOL) else {
            optimal = true;
            break;
        };
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let piv = t[i * cols + enter];
            if piv > PIVOT_TOL {
                best_ratio = best_ratio.min(t[i * cols + n + m] / piv);
            }
        }
        if best_ratio.is_infinite() {
            return Err(Error::Numerical(
                "phase-1 simplex found an unbounded direction; the objective is bounded below, \
                 so the tableau has degenerated"
                    .into(),
            ));
        }
        // Tie-break the leaving row on the lowest basis index (Bland again).
        let ratio_slack = 1e-9 * (1.0 + best_ratio.abs());
        let mut leave: Option<usize> = None;
        for i in 0..m {
            let piv = t[i * cols + enter];
            if piv > PIVOT_TOL && t[i * cols + n + m] / piv <= best_ratio + ratio_slack {
                if leave.is_none_or(|l| basis[i] < basis[l]) {
                    leave = Some(i);
                }
            }
        }
        let li = leave.expect("ratio test found a finite minimum");
        pivot(&mut t, &mut r, &mut basis, m, cols, li, enter);
    }
    if !optimal {
        return Err(Error::Numerical(format!(
            "phase-1 simplex did not converge within {max_iters} pivots"
        )));
    }

    let objective = -r[cols - 1];
    let feas_tol = feasibility_tolerance(b);
    if objective <= feas_tol {
        let mut x = vec![0.0f64; n];
        for (i, &bj) in basis.iter().enumerate() {
            if bj < n {
                x[bj] = t[i * cols + n + m].max(0.0);
            }
        }
        return Ok(FeasibilityOutcome::Feasible { x });
    }

    // The multiplier on row i is 1 - (reduced cost of artificial i), mapped
    // back through the row flips.
    let mut y = vec![0.0f64; m];
    for i in 0..m {
        y[i] = flip[i] * (1.0 - r[n + i]);
    }
    let gap: f64 = (0..m).map(|i| y[i] * b[i]).sum();
    let mut worst = f64::NEG_INFINITY;
    for j in 0..n {
        let v: f64 = (0..m).map(|i| y[i] * a[(i, j)]).sum();
        worst = worst.max(v);
    }
    if worst > CERTIFICATE_TOL || gap <= feas_tol {
        return Err(Error::Numerical(format!(
            "Farkas certificate failed verification: max yᵀA = {worst:.3e}, yᵀb = {gap:.3e}"
        )));
    }
    Ok(FeasibilityOutcome::Infeasible { y, gap })
}

fn pivot(
    t: &mut [f64],
    r: &mut [f64],
    basis: &mut [usize],
    m: usize,
    cols: usize,
    li: usize,
    enter: usize,
) {
    let inv = 1.0 / t[li * cols + enter];
    for j in 0..cols {
        t[li * cols + j] *= inv;
    }
    t[li * cols + enter] = 1.0;
    for i in 0..m {
        if i == li {
            continue;
        }
        let f = t[i * cols + enter];
        if f != 0.0 {
            for j in 0..cols {
                t[i * cols + j] -= f * t[li * cols + j];
            }
            t[i * cols + enter] = 0.0;
        }
    }
    let f = r[enter];
    if f != 0.0 {
        for j in 0..cols {
            r[j] -= f * t[li * cols + j];
        }
        r[enter] = 0.0;
    }
    basis[li] = enter;
}
