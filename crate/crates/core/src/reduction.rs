//! Stripping shared range directions out of projective strategies.
//!
//! For a projective strategy, a unit vector lying in the ranges of one
//! effect per setting at some party makes that party's response along the
//! vector deterministic: conditioned on it, the party always answers with
//! the fixed outcome pair and the rest of the state is untouched. The
//! behavior therefore splits as
//!
//! `P = pi * (deterministic at the party) x (rest) + (1 - pi) * P_reduced`
//!
//! where `pi` is the state's weight on the vector and `P_reduced` comes
//! from the same strategy restricted to the orthogonal complement.
//! Repeating until no shared directions remain yields a strategy in which
//! every local space has even dimension and all effects have half rank;
//! [`check_rank_balance`] verifies exactly that, and the block
//! compression in [`crate::blocks`] requires it.

use crate::error::{Error, Result};
use crate::linalg::{
    apply_local, contract_party, eigh, fix_phase, hermitize, identity, normalize,
    orthonormal_complement, outer, CMat, CVec,
};
use crate::quantum::{born_behavior, check_projective, LocalMeasurement, QuantumStrategy};
use crate::scenario::{Behavior, Scenario};

/// A cross-setting singular value at least `1 - this` counts as a shared
/// direction.
pub const OVERLAP_THRESHOLD: f64 = 1e-8;
/// Witness residual `‖A v - v‖` required for both effects of the pair.
pub const WITNESS_TOL: f64 = 1e-7;
/// Steps with weight at or below this skip their factor behavior.
pub const FACTOR_CUTOFF: f64 = 1e-12;
/// `1 - pi` at or below this ends the reduction as fully factorized.
pub const DEGENERATE_EPS: f64 = 1e-12;

/// Shared-direction data for one outcome pair `(a under setting 1,
/// a' under setting 2)` at one party.
#[derive(Clone, Debug)]
pub struct OverlapInfo {
    /// Outcome labels (1 or 2) under settings 1 and 2.
    pub outcomes: (u8, u8),
    /// Number of cross-setting singular values at one.
    pub dimension: usize,
    /// Largest singular value of `A(a'|2) A(a|1)` restricted to the ranges.
    pub top_singular: f64,
    /// A unit vector in both ranges, present when `dimension > 0`.
    pub witness: Option<CVec>,
}

#[derive(Clone, Debug)]
pub struct PartyOverlaps {
    pub party: usize,
    /// The four pairs in the fixed order (1,1), (1,2), (2,1), (2,2).
    pub pairs: [OverlapInfo; 4],
}

#[derive(Clone, Debug)]
pub struct RangeOverlapReport {
    pub parties: Vec<PartyOverlaps>,
}

impl RangeOverlapReport {
    pub fn total_dimension(&self) -> usize {
        self.parties.iter().flat_map(|p| p.pairs.iter()).map(|o| o.dimension).sum()
    }

    /// First shared direction in scan order: parties ascending, pairs in
    /// the fixed order. This is the direction the stripping loop removes.
    pub fn first_shared(&self) -> Option<(usize, usize)> {
        for p in &self.parties {
            for (k, o) in p.pairs.iter().enumerate() {
                if o.dimension > 0 {
                    return Some((p.party, k));
                }
            }
        }
        None
    }
}

/// Dimensions and witnesses of shared range directions across the two
/// settings of every party. Requires projective effects.
pub fn range_overlaps(strategy: &QuantumStrategy) -> Result<RangeOverlapReport> {
    strategy.quick_check()?;
    let proj = check_projective(strategy);
    if !proj.all_projective() {
        return Err(Error::Precondition(format!(
            "effects are not all projective (max residual {:.3e}); decompose into projective \
             branches first",
            proj.max_residual()
        )));
    }
    let mut parties = Vec::with_capacity(strategy.n_parties());
    for n in 0..strategy.n_parties() {
        let m = strategy.measurement(n);
        let pairs = core::array::from_fn(|k| {
            let (a, a2) = (k >> 1, k & 1);
            overlap_of_pair(m, a, a2)
        });
        let pairs = transpose_results(pairs)?;
        parties.push(PartyOverlaps { party: n, pairs });
    }
    Ok(RangeOverlapReport { parties })
}

fn transpose_results(arr: [Result<OverlapInfo>; 4]) -> Result<[OverlapInfo; 4]> {
    let mut out = Vec::with_capacity(4);
    for r in arr {
        out.push(r?);
    }
    Ok(out.try_into().expect("four entries"))
}

fn overlap_of_pair(m: &LocalMeasurement, a: usize, a2: usize) -> Result<OverlapInfo> {
    let p = m.effect(0, a);
    let q = m.effect(1, a2);
    // Eigenvalues of Q P Q are squared singular values of the range
    // overlap; eigenvectors near one are shared directions.
    let g = q * p * q;
    let (vals, vecs) = eigh(&g);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let threshold = (1.0 - OVERLAP_THRESHOLD) * (1.0 - OVERLAP_THRESHOLD);
    let dimension = vals.iter().filter(|&&v| v >= threshold).count();
    let witness = if dimension > 0 {
        let mut v = CVec::from_column_slice(vecs.column(vals.len() - 1).as_slice());
        // Alternating projections sharpen the eigenvector into the
        // intersection of the two ranges.
        for _ in 0..4 {
            v = normalize(&(p * &v));
            v = normalize(&(q * &v));
        }
        let rp = (p * &v - &v).norm();
        let rq = (q * &v - &v).norm();
        if rp > WITNESS_TOL || rq > WITNESS_TOL {
            return Err(Error::Numerical(format!(
                "shared direction for outcomes ({}, {}) did not converge: residuals {rp:.3e} and {rq:.3e}",
                a + 1,
                a2 + 1
            )));
        }
        Some(fix_phase(&v))
    } else {
        None
    };
    Ok(OverlapInfo {
        outcomes: (a as u8 + 1, a2 as u8 + 1),
        dimension,
        top_singular: top,
        witness,
    })
}

/// One stripped direction.
#[derive(Clone, Debug)]
pub struct ReductionStep {
    pub party: usize,
    /// Outcome labels the party gives deterministically along the removed
    /// vector, under settings 1 and 2.
    pub outcomes: (u8, u8),
    /// The removed unit vector, embedded back into the party's original
    /// space.
    pub removed_vector: CVec,
    /// Weight `pi` of the vector in the state current at this step.
    pub weight: f64,
    /// `pi` times the product of earlier `1 - pi` factors; absolute weights
    /// of all steps plus the residual weight sum to one.
    pub absolute_weight: f64,
    /// Behavior of the factorized term; skipped below [`FACTOR_CUTOFF`].
    pub factor_behavior: Option<Behavior>,
}

/// Result of stripping all shared directions.
#[derive(Clone, Debug)]
pub struct Reduction {
    /// The overlap-free remainder; `None` when a step had weight one and
    /// nothing was left.
    pub reduced: Option<QuantumStrategy>,
    pub steps: Vec<ReductionStep>,
    /// Mass of `reduced` in the convex split, `prod_j (1 - pi_j)`.
    pub residual_weight: f64,
    /// Per-party isometries from the final reduced space back into the
    /// original one.
    pub embeddings: Vec<CMat>,
}

impl Reduction {
    /// Rebuild the input behavior from the factor terms and the reduced
    /// strategy. `None` if a factor behavior was skipped by the cutoff.
    pub fn reconstructed_behavior(&self) -> Result<Option<Behavior>> {
        let mut parts: Vec<(f64, Behavior)> = Vec::new();
        for s in &self.steps {
            match (&s.factor_behavior, s.absolute_weight > FACTOR_CUTOFF) {
                (Some(b), _) => parts.push((s.absolute_weight, b.clone())),
                (None, false) => return Ok(None),
                (None, true) => {
                    return Err(Error::Internal(
                        "step above the cutoff lacks its factor behavior".into(),
                    ))
                }
            }
        }
        if let Some(r) = &self.reduced {
            parts.push((self.residual_weight, born_behavior(r)?));
        }
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        let refs: Vec<(f64, &Behavior)> = parts.iter().map(|(w, b)| (*w / total, b)).collect();
        Ok(Some(Behavior::mix(&refs)?))
    }
}

/// Strip shared range directions until none remain.
///
/// Scan order is deterministic: lowest party first, pairs in the order
/// (1,1), (1,2), (2,1), (2,2), one direction per iteration with overlaps
/// recomputed after each removal.
pub fn strip_shared_vectors(strategy: &QuantumStrategy) -> Result<Reduction> {
    strategy.quick_check()?;
    let n = strategy.n_parties();
    let mut current = strategy.clone();
    let mut steps: Vec<ReductionStep> = Vec::new();
    let mut residual = 1.0f64;
    let mut embeddings: Vec<CMat> = strategy.dims().iter().map(|&d| identity(d)).collect();

    let max_steps: usize = strategy.dims().iter().sum::<usize>() + 1;
    for _ in 0..max_steps {
        let report = range_overlaps(&current)?;
        let Some((party, pair_idx)) = report.first_shared() else {
            return Ok(Reduction { reduced: Some(current), steps, residual_weight: residual, embeddings });
        };
        let info = &report.parties[party].pairs[pair_idx];
        let v = info.witness.as_ref().expect("nonzero overlap carries a witness");
        let assignment = (pair_idx >> 1, pair_idx & 1);

        let pi = {
            let vv = outer(v);
            let (contracted, _) = contract_party(current.state(), current.dims(), party, &vv);
            let tr: f64 = (0..contracted.nrows()).map(|i| contracted[(i, i)].re).sum();
            tr.clamp(0.0, 1.0)
        };

        let factor_behavior = if pi > FACTOR_CUTOFF {
            Some(factor_term(&current, party, v, assignment, pi)?)
        } else {
            None
        };
        let absolute_weight = residual * pi;
        let removed_vector = fix_phase(&(&embeddings[party] * v));

        if 1.0 - pi <= DEGENERATE_EPS {
            // The whole remaining mass factorizes; nothing is left to reduce.
            steps.push(ReductionStep {
                party,
                outcomes: info.outcomes,
                removed_vector,
                weight: pi,
                absolute_weight,
                factor_behavior,
            });
            return Ok(Reduction {
                reduced: None,
                steps,
                residual_weight: residual * (1.0 - pi),
                embeddings,
            });
        }

        let w = orthonormal_complement(v);
        let wd = w.adjoint();
        let (shrunk, _) = apply_local(current.state(), current.dims(), party, &wd);
        let mut new_state = hermitize(&shrunk).map(|z| z / (1.0 - pi));
        let tr: f64 = (0..new_state.nrows()).map(|i| new_state[(i, i)].re).sum();
        new_state = new_state.map(|z| z / tr);
        let mut measurements: Vec<LocalMeasurement> = Vec::with_capacity(n);
        for p in 0..n {
            if p == party {
                let restrict = |x: usize, a: usize| &wd * current.measurement(p).effect(x, a) * &w;
                measurements.push(LocalMeasurement::new([
                    [restrict(0, 0), restrict(0, 1)],
                    [restrict(1, 0), restrict(1, 1)],
                ])?);
            } else {
                measurements.push(current.measurement(p).clone());
            }
        }
        embeddings[party] = &embeddings[party] * &w;
        current = QuantumStrategy::unchecked(new_state, measurements);
        residual *= 1.0 - pi;
        steps.push(ReductionStep {
            party,
            outcomes: info.outcomes,
            removed_vector,
            weight: pi,
            absolute_weight,
            factor_behavior,
        });
    }
    Err(Error::Internal(format!(
        "stripping did not terminate within {max_steps} removals"
    )))
}

/// Behavior of one factorized term: the party answers its fixed outcomes,
/// the other parties measure the state conditioned on the removed vector.
fn factor_term(
    strategy: &QuantumStrategy,
    party: usize,
    v: &CVec,
    assignment: (usize, usize),
    pi: f64,
) -> Result<Behavior> {
    let n = strategy.n_parties();
    let s = Scenario::new(n)?;
    let assigned = [assignment.0, assignment.1];
    if n == 1 {
        return Ok(Behavior::from_fn(s, |x, a| if a == assigned[x] { 1.0 } else { 0.0 }));
    }
    let (contracted, rest_dims) = contract_party(strategy.state(), strategy.dims(), party, &outer(v));
    let mut rest_state = hermitize(&contracted).map(|z| z / pi);
    let tr: f64 = (0..rest_state.nrows()).map(|i| rest_state[(i, i)].re).sum();
    rest_state = rest_state.map(|z| z / tr);
    let rest_meas: Vec<LocalMeasurement> = (0..n)
        .filter(|&p| p != party)
        .map(|p| strategy.measurement(p).clone())
        .collect();
    debug_assert_eq!(rest_dims.len(), rest_meas.len());
    let rest = born_behavior(&QuantumStrategy::unchecked(rest_state, rest_meas))?;
    let shift = n - 1 - party;
    let drop_bit = |idx: usize| (idx >> (shift + 1) << shift) | (idx & ((1 << shift) - 1));
    Ok(Behavior::from_fn(s, |x, a| {
        if s.bit(a, party) != assigned[s.bit(x, party)] {
            0.0
        } else {
            rest.prob(drop_bit(x), drop_bit(a))
        }
    }))
}

/// Per-party effect ranks of a projective, overlap-free strategy.
#[derive(Clone, Debug)]
pub struct PartyRanks {
    pub party: usize,
    pub dim: usize,
    /// `ranks[setting][outcome]`.
    pub ranks: [[usize; 2]; 2],
    /// Even dimension with every rank equal to half of it.
    pub balanced: bool,
}

#[derive(Clone, Debug)]
pub struct RankBalanceReport {
    pub parties: Vec<PartyRanks>,
}

impl RankBalanceReport {
    pub fn all_balanced(&self) -> bool {
        self.parties.iter().all(|p| p.balanced)
    }
}

/// Verify the rank structure stripping is guaranteed to produce: even local
/// dimensions and all effects of rank `dim / 2`. Requires a projective
/// strategy with no remaining shared directions.
pub fn check_rank_balance(strategy: &QuantumStrategy) -> Result<RankBalanceReport> {
    let report = range_overlaps(strategy)?;
    if let Some((party, k)) = report.first_shared() {
        let o = &report.parties[party].pairs[k];
        return Err(Error::Precondition(format!(
            "party {} still shares a direction for outcomes ({}, {}); strip shared vectors first",
            party + 1,
            o.outcomes.0,
            o.outcomes.1
        )));
    }
    let mut parties = Vec::with_capacity(strategy.n_parties());
    for n in 0..strategy.n_parties() {
        let m = strategy.measurement(n);
        let dim = m.dim();
        let mut ranks = [[0usize; 2]; 2];
        for x in 0..2 {
            for a in 0..2 {
                ranks[x][a] = eigh(m.effect(x, a)).0.iter().filter(|&&v| v > 0.5).count();
            }
        }
        let balanced = dim % 2 == 0 && ranks.iter().flatten().all(|&r| r == dim / 2);
        parties.push(PartyRanks { party: n, dim, ranks, balanced });
    }
    Ok(RankBalanceReport { parties })
}
