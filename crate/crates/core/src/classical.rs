//! Membership in the classical (local deterministic) polytope.
//!
//! The polytope is the convex hull of the 4^N behaviors generated by local
//! deterministic strategies. Membership of a behavior is decided by a
//! feasibility LP over the vertex weights; infeasibility turns the Farkas
//! certificate into a separating Bell functional, normalized so that every
//! vertex evaluates to a non-negative number and the queried behavior to a
//! strictly negative one.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scenario::{
    bell_value, deterministic_behavior, Behavior, BellFunctional, DeterministicStrategy, Scenario,
};
use crate::simplex::{solve_equality_feasibility, FeasibilityOutcome};

/// Vertex enumeration and the LP grow as 4^N; larger scenarios are refused.
pub const MAX_LP_PARTIES: usize = 8;
/// Vertex weights at or below this are dropped from certificates.
pub const WEIGHT_CUTOFF: f64 = 1e-12;
/// Max-norm tolerance on reconstructing a member from its weights.
pub const RECONSTRUCTION_TOL: f64 = 1e-8;
/// A separating functional must push the query at least this far below zero.
pub const SEPARATION_TOL: f64 = 1e-9;
/// Vertices may dip this far below zero under a returned functional.
pub const VERTEX_FLOOR: f64 = -1e-12;

fn check_party_guard(s: &Scenario) -> Result<()> {
    if s.n_parties() > MAX_LP_PARTIES {
        return Err(Error::Resource(format!(
            "classical membership for {} parties needs 4^{} vertices; the guard is {MAX_LP_PARTIES} parties",
            s.n_parties(),
            s.n_parties()
        )));
    }
    Ok(())
}

pub fn vertex_count(s: &Scenario) -> usize {
    1usize << (2 * s.n_parties())
}

/// All local deterministic strategies in index order.
pub fn enumerate_vertices(s: &Scenario) -> Result<Vec<DeterministicStrategy>> {
    check_party_guard(s)?;
    Ok((0..vertex_count(s)).map(|i| DeterministicStrategy::from_index(s, i)).collect())
}

#[derive(Clone, Debug)]
pub enum MembershipCertificate {
    /// The behavior is a convex combination of the listed vertices.
    Member {
        /// Sparse `(vertex index, weight)` pairs, weights above
        /// [`WEIGHT_CUTOFF`], in index order.
        weights: Vec<(usize, f64)>,
        /// Max-norm distance between the weighted vertex sum and the query.
        reconstruction_residual: f64,
    },
    /// A functional separating the behavior from the polytope: every vertex
    /// evaluates >= [`VERTEX_FLOOR`], the query to `value` < 0.
    NonMember { functional: BellFunctional, value: f64 },
}

/// Decide membership of a behavior in the classical polytope.
pub fn is_classical(behavior: &Behavior) -> Result<MembershipCertificate> {
    behavior.ensure_valid()?;
    let s = *behavior.scenario();
    check_party_guard(&s)?;

    let nv = vertex_count(&s);
    let rows = s.table_len() + 1;
    let mut a = DMatrix::<f64>::zeros(rows, nv);
    for vi in 0..nv {
        let strat = DeterministicStrategy::from_index(&s, vi);
        for x in 0..s.vector_count() {
            a[(s.flat(x, strat.response(&s, x)), vi)] = 1.0;
        }
        a[(rows - 1, vi)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(rows);
    for (i, p) in behavior.table().iter().enumerate() {
        b[i] = *p;
    }
    b[rows - 1] = 1.0;

    match solve_equality_feasibility(&a, &b)? {
        FeasibilityOutcome::Feasible { x } => {
            let weights: Vec<(usize, f64)> =
                x.iter().cloned().enumerate().filter(|(_, w)| *w > WEIGHT_CUTOFF).collect();
            let mut sum = vec![0.0f64; s.table_len()];
            for &(vi, w) in &weights {
                let strat = DeterministicStrategy::from_index(&s, vi);
                for xx in 0..s.vector_count() {
                    sum[s.flat(xx, strat.response(&s, xx))] += w;
                }
            }
            let residual = sum
                .iter()
                .zip(behavior.table().iter())
                .map(|(l, r)| (l - r).abs())
                .fold(0.0, f64::max);
            if residual > RECONSTRUCTION_TOL {
                return Err(Error::Numerical(format!(
                    "membership weights reconstruct the behavior only to {residual:.3e} \
                     (tolerance {RECONSTRUCTION_TOL:.0e})"
                )));
            }
            Ok(MembershipCertificate::Member { weights, reconstruction_residual: residual })
        }
        FeasibilityOutcome::Infeasible { y, gap } => {
            // y = (u, t) with u over table rows and t on the convexity row:
            // yᵀA <= 0 says every vertex satisfies sum_x u[x, a(x)] + t <= 0,
            // while u·p + t > 0. Negating gives a functional that is
            // non-negative on vertices and negative on the query; dividing by
            // the gap normalizes the query value to -1 before cleanup.
            let t = y[rows - 1];
            let coeffs: Vec<f64> = y[..s.table_len()]
                .iter()
                .map(|u| -(u + t / s.vector_count() as f64) / gap)
                .collect();
            let mut functional = BellFunctional::new(s, coeffs)?;

            let mut min_vertex = f64::INFINITY;
            for vi in 0..nv {
                let strat = DeterministicStrategy::from_index(&s, vi);
                min_vertex = min_vertex.min(functional.value_on_strategy(&strat));
            }
            if min_vertex < 0.0 {
                // Shift the floor to exactly zero; the query sits near -1 and
                // the certificate slack is tiny, so separation survives.
                functional = functional.shift_uniform(-min_vertex);
            }
            let value = bell_value(&functional, behavior)?;
            if value >= -SEPARATION_TOL {
                return Err(Error::Numerical(format!(
                    "separating functional lost its margin after normalization: query value {value:.3e}"
                )));
            }
            Ok(MembershipCertificate::NonMember { functional, value })
        }
    }
}

/// Minimum of a functional over all deterministic strategies.
#[derive(Clone, Debug)]
pub struct ClassicalBound {
    pub value: f64,
    /// First strategy (in index order) attaining the minimum.
    pub optimizer: DeterministicStrategy,
}

pub fn classical_bound(functional: &BellFunctional) -> Result<ClassicalBound> {
    let s = *functional.scenario();
    check_party_guard(&s)?;
    let mut best = f64::INFINITY;
    let mut best_idx = 0usize;
    for vi in 0..vertex_count(&s) {
        let strat = DeterministicStrategy::from_index(&s, vi);
        let v = functional.value_on_strategy(&strat);
        if v < best {
            best = v;
            best_idx = vi;
        }
    }
    Ok(ClassicalBound { value: best, optimizer: DeterministicStrategy::from_index(&s, best_idx) })
}

/// Check a certificate against the behavior it was issued for. Used by
/// tests and the command line's verbose mode.
pub fn verify_certificate(behavior: &Behavior, cert: &MembershipCertificate) -> Result<()> {
    let s = *behavior.scenario();
    match cert {
        MembershipCertificate::Member { weights, .. } => {
            let parts: Vec<(f64, Behavior)> = weights
                .iter()
                .map(|&(vi, w)| {
                    deterministic_behavior(&s, &DeterministicStrategy::from_index(&s, vi))
                        .map(|b| (w, b))
                })
                .collect::<Result<_>>()?;
            let refs: Vec<(f64, &Behavior)> = parts.iter().map(|(w, b)| (*w, b)).collect();
            let mixed = Behavior::mix(&refs)?;
            let residual = mixed.max_abs_diff(behavior);
            if residual > RECONSTRUCTION_TOL {
                return Err(Error::Internal(format!(
                    "member certificate reconstructs to residual {residual:.3e}"
                )));
            }
            Ok(())
        }
        MembershipCertificate::NonMember { functional, value } => {
            for vi in 0..vertex_count(&s) {
                let strat = DeterministicStrategy::from_index(&s, vi);
                let v = functional.value_on_strategy(&strat);
                if v < VERTEX_FLOOR {
                    return Err(Error::Internal(format!(
                        "separating functional dips to {v:.3e} on vertex {vi}"
                    )));
                }
            }
            let got = bell_value(functional, behavior)?;
            if got >= -SEPARATION_TOL || (got - value).abs() > 1e-9 {
                return Err(Error::Internal(format!(
                    "separating functional evaluates to {got:.3e} on the query, certificate said {value:.3e}"
                )));
            }
            Ok(())
        }
    }
}
