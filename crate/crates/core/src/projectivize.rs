//! Decomposing dichotomic POVMs into mixtures of projective pairs.
//!
//! Any effect pair `(A, 1-A)` equals a convex combination of projector
//! pairs: eigendirections of `A` with eigenvalue 0 or 1 are assigned
//! deterministically, and every strictly fractional eigenvalue branches in
//! two, contributing its eigenvalue (or one minus it) to the branch weight.
//! Applied per party and setting, this turns any strategy into a mixture of
//! projective strategies with the same behavior, at the price of a branch
//! count exponential in the number of fractional eigenvalues.

use crate::error::{Error, Result};
use crate::linalg::{eigh, outer, CMat, CVec};
use crate::quantum::{born_behavior, LocalMeasurement, QuantumStrategy, HERMITICITY_TOL};
use crate::scenario::Behavior;

/// Eigenvalues may stick out of `[0, 1]` by this much and are clamped.
pub const EIGENVALUE_CLAMP: f64 = 1e-10;
/// Branches at or below this weight are dropped and the rest renormalized.
pub const BRANCH_CUTOFF: f64 = 1e-12;
/// Guard on the number of branches, per pair and per strategy.
pub const MAX_BRANCHES: usize = 4096;

/// One projective alternative for a single setting.
#[derive(Clone, Debug)]
pub struct ProjectiveBranch {
    pub weight: f64,
    /// Projector pair summing to the identity.
    pub effects: [CMat; 2],
}

/// Convex decomposition of one dichotomic pair into projective pairs.
#[derive(Clone, Debug)]
pub struct ProjectiveMixture {
    pub branches: Vec<ProjectiveBranch>,
}

impl ProjectiveMixture {
    /// Weighted sum of the first effects; reconstructs the input effect.
    pub fn first_effect(&self) -> CMat {
        let d = self.branches[0].effects[0].nrows();
        let mut out = CMat::zeros(d, d);
        for b in &self.branches {
            out += &b.effects[0] * crate::linalg::cr(b.weight);
        }
        out
    }
}

/// Decompose the dichotomic pair with first effect `a1`. The second effect
/// is implied as the complement; a full pair check happens against it.
pub fn projectivize_pair(a1: &CMat) -> Result<ProjectiveMixture> {
    let d = a1.nrows();
    crate::linalg::require_square(a1, d, "effect")?;
    let h = crate::linalg::hermiticity_residual(a1);
    if h > HERMITICITY_TOL {
        return Err(Error::Validation(format!(
            "effect is not Hermitian (residual {h:.3e})"
        )));
    }
    let (raw_vals, vecs) = eigh(a1);
    let mut vals = Vec::with_capacity(d);
    for (i, &v) in raw_vals.iter().enumerate() {
        if v < -EIGENVALUE_CLAMP || v > 1.0 + EIGENVALUE_CLAMP {
            return Err(Error::Validation(format!(
                "effect eigenvalue {i} is {v}, outside [0, 1] beyond the clamp of {EIGENVALUE_CLAMP:.0e}"
            )));
        }
        vals.push(v.clamp(0.0, 1.0));
    }

    let fractional: Vec<usize> =
        (0..d).filter(|&i| vals[i] > 0.0 && vals[i] < 1.0).collect();
    let branch_count = 1usize
        .checked_shl(fractional.len() as u32)
        .filter(|&c| c <= MAX_BRANCHES)
        .ok_or_else(|| {
            Error::Resource(format!(
                "{} fractional eigenvalues produce more than {MAX_BRANCHES} projective branches",
                fractional.len()
            ))
        })?;

    // Projector common to all branches: eigendirections pinned at one.
    let mut pinned = CMat::zeros(d, d);
    for i in 0..d {
        if vals[i] == 1.0 {
            let col = CVec::from_column_slice(vecs.column(i).as_slice());
            pinned += outer(&col);
        }
    }

    let mut branches = Vec::with_capacity(branch_count);
    for mask in 0..branch_count {
        let mut weight = 1.0f64;
        let mut p = pinned.clone();
        for (bit, &i) in fractional.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                weight *= vals[i];
                let col = CVec::from_column_slice(vecs.column(i).as_slice());
                p += outer(&col);
            } else {
                weight *= 1.0 - vals[i];
            }
        }
        if weight > BRANCH_CUTOFF {
            let q = crate::linalg::identity(d) - &p;
            branches.push(ProjectiveBranch { weight, effects: [p, q] });
        }
    }
    let total: f64 = branches.iter().map(|b| b.weight).sum();
    for b in &mut branches {
        b.weight /= total;
    }
    Ok(ProjectiveMixture { branches })
}

/// One projective strategy with its weight in the mixture.
#[derive(Clone, Debug)]
pub struct StrategyBranch {
    pub weight: f64,
    pub strategy: QuantumStrategy,
}

/// Convex mixture of projective strategies equivalent to the input.
#[derive(Clone, Debug)]
pub struct StrategyMixture {
    pub branches: Vec<StrategyBranch>,
}

impl StrategyMixture {
    /// Behavior of the mixture; coincides with the input strategy's.
    pub fn behavior(&self) -> Result<Behavior> {
        let parts: Vec<(f64, Behavior)> = self
            .branches
            .iter()
            .map(|b| born_behavior(&b.strategy).map(|bb| (b.weight, bb)))
            .collect::<Result<_>>()?;
        let refs: Vec<(f64, &Behavior)> = parts.iter().map(|(w, b)| (*w, b)).collect();
        Behavior::mix(&refs)
    }
}

/// Projectivize every pair of every party and take the product mixture.
///
/// Branch enumeration is ordered with party 0's setting 1 as the slowest
/// index, matching the per-pair branch order. Weights below
/// [`BRANCH_CUTOFF`] are dropped and the remainder renormalized.
pub fn projectivize_strategy(strategy: &QuantumStrategy) -> Result<StrategyMixture> {
    strategy.quick_check()?;
    let n = strategy.n_parties();

    // Per (party, setting) mixtures, parties outer.
    let mut pair_mixtures: Vec<ProjectiveMixture> = Vec::with_capacity(2 * n);
    let mut total: usize = 1;
    for p in 0..n {
        for x in 0..2 {
            let m = projectivize_pair(strategy.measurement(p).effect(x, 0)).map_err(|e| match e {
                Error::Validation(msg) => {
                    Error::Validation(format!("party {}, setting {}: {msg}", p + 1, x + 1))
                }
                other => other,
            })?;
            total = total.checked_mul(m.branches.len()).filter(|&t| t <= MAX_BRANCHES).ok_or_else(
                || {
                    Error::Resource(format!(
                        "projectivization needs more than {MAX_BRANCHES} product branches"
                    ))
                },
            )?;
            pair_mixtures.push(m);
        }
    }

    let mut branches = Vec::with_capacity(total);
    let mut choice = vec![0usize; 2 * n];
    for mut idx in 0..total {
        for slot in (0..2 * n).rev() {
            let len = pair_mixtures[slot].branches.len();
            choice[slot] = idx % len;
            idx /= len;
        }
        let mut weight = 1.0f64;
        let mut measurements = Vec::with_capacity(n);
        for p in 0..n {
            let mut effects: Vec<[CMat; 2]> = Vec::with_capacity(2);
            for x in 0..2 {
                let b = &pair_mixtures[2 * p + x].branches[choice[2 * p + x]];
                weight *= b.weight;
                effects.push(b.effects.clone());
            }
            let second = effects.pop().expect("two settings");
            let first = effects.pop().expect("two settings");
            measurements.push(LocalMeasurement::new([first, second])?);
        }
        if weight > BRANCH_CUTOFF {
            branches.push(StrategyBranch {
                weight,
                strategy: QuantumStrategy::unchecked(strategy.state().clone(), measurements),
            });
        }
    }
    let sum: f64 = branches.iter().map(|b| b.weight).sum();
    for b in &mut branches {
        b.weight /= sum;
    }
    Ok(StrategyMixture { branches })
}
