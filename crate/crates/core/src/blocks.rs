//! Two-dimensional invariant blocks, qubit compression, and local
//! filtering.
//!
//! At a party whose projective effects share no range directions and all
//! have half rank, both setting observables leave a common family of
//! two-dimensional subspaces invariant. On each such block the
//! measurement acts as a qubit pair of rank-1 projectors separated by one
//! principal angle. Decomposing every party this way rewrites any
//! behavior as a convex mixture of N-qubit behaviors, one per choice of
//! block at each party; picking the most violating term and projecting
//! the state onto its blocks is a local filter that never weakens the
//! violation.

use crate::error::{Error, Result};
use crate::linalg::{
    apply_local, cr, eigh, expectation, fix_phase, hermitize, identity, max_abs, normalize, outer,
    CMat, CVec,
};
use crate::quantum::{born_behavior, LocalMeasurement, QuantumStrategy};
use crate::reduction::{check_rank_balance, strip_shared_vectors, FACTOR_CUTOFF};
use crate::scenario::{bell_value, BellFunctional};

/// Cross-setting eigenvalues this close to 0 or 1 mean a residual shared
/// direction; the block construction refuses them.
pub const ANGLE_MARGIN: f64 = 1e-8;
/// Components with weight at or below this drop their qubit state.
pub const WEIGHT_CUTOFF: f64 = 1e-12;
/// Block projectors must resolve the local identity to this accuracy.
pub const BLOCK_SUM_TOL: f64 = 1e-8;
/// Component weights must sum to one within this.
pub const WEIGHT_SUM_TOL: f64 = 1e-8;
/// The weighted block behaviors must reproduce the input to this accuracy.
pub const RECONSTRUCTION_TOL: f64 = 1e-7;
/// Slack allowed on the filtered-value-not-worse guarantee.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// One invariant two-dimensional subspace of a party.
#[derive(Clone, Debug)]
pub struct JordanBlock {
    /// d x 2 isometry whose columns span the block. The first column lies
    /// in the ranges of both first effects; the second is its in-block
    /// complement, phased so the cross-setting matrix element is real
    /// positive.
    pub frame: CMat,
    /// Rank-2 projector onto the block in the party's full space.
    pub projector: CMat,
    /// `effects[setting][outcome]`, 2x2 in the frame basis.
    pub qubit_effects: [[CMat; 2]; 2],
    /// Eigenvalue of the cross-setting operator on the block, `cos^2` of
    /// the angle.
    pub eigenvalue: f64,
    /// Principal angle between the two first-effect directions, in
    /// `(0, pi/2)`.
    pub angle: f64,
}

impl JordanBlock {
    /// The block's qubit observables as a standalone measurement.
    pub fn qubit_measurement(&self) -> Result<LocalMeasurement> {
        LocalMeasurement::new([
            [self.qubit_effects[0][0].clone(), self.qubit_effects[0][1].clone()],
            [self.qubit_effects[1][0].clone(), self.qubit_effects[1][1].clone()],
        ])
    }
}

/// All blocks of one party, ordered by ascending eigenvalue.
#[derive(Clone, Debug)]
pub struct PartyBlocks {
    pub party: usize,
    pub dim: usize,
    pub blocks: Vec<JordanBlock>,
}

impl PartyBlocks {
    pub fn count(&self) -> usize {
        self.blocks.len()
    }
}

/// Split one party's measurement into its invariant blocks.
///
/// Requires projective effects of rank `dim / 2` under both settings with
/// no shared range directions. The block count is exactly `dim / 2`.
pub fn party_jordan_blocks(m: &LocalMeasurement) -> Result<PartyBlocks> {
    m.quick_check("measurement")?;
    let d = m.dim();
    let res = m.projectivity_residuals();
    let worst = res.iter().flatten().fold(0.0f64, |acc, &r| acc.max(r));
    if worst > 1e-8 {
        return Err(Error::Precondition(format!(
            "effects are not projective (max residual {worst:.3e})"
        )));
    }
    if d % 2 != 0 {
        return Err(Error::Precondition(format!(
            "local dimension {d} is odd; a shared range direction necessarily remains, strip it \
             first"
        )));
    }
    let r = d / 2;
    let p = m.effect(0, 0);
    let q = m.effect(1, 0);
    for (label, e) in [("setting 1", p), ("setting 2", q)] {
        let rank = eigh(e).0.iter().filter(|&&v| v > 0.5).count();
        if rank != r {
            return Err(Error::Precondition(format!(
                "first effect of {label} has rank {rank}, expected {r}; rebalance by stripping \
                 shared directions"
            )));
        }
    }

    // Orthonormal basis of the first-setting range.
    let (pvals, pvecs) = eigh(p);
    let mut u = CMat::zeros(d, r);
    let mut col = 0usize;
    for (i, &v) in pvals.iter().enumerate() {
        if v > 0.5 {
            u.set_column(col, &fix_phase(&CVec::from_column_slice(pvecs.column(i).as_slice())));
            col += 1;
        }
    }
    // The cross-setting operator restricted to that range; its spectrum
    // fixes the principal angles and its eigenvectors seed the blocks.
    let g = u.adjoint() * q * &u;
    let (gvals, gvecs) = eigh(&hermitize(&g));

    let mut blocks = Vec::with_capacity(r);
    for k in 0..r {
        let lam = gvals[k];
        if lam < ANGLE_MARGIN || lam > 1.0 - ANGLE_MARGIN {
            return Err(Error::Precondition(format!(
                "cross-setting eigenvalue {lam:.3e} is within {ANGLE_MARGIN:.0e} of 0 or 1; a \
                 shared range direction survived, re-run the reduction with a tighter threshold"
            )));
        }
        let v = fix_phase(&(&u * CVec::from_column_slice(gvecs.column(k).as_slice())));
        // Component of the second-setting image orthogonal to v; this is
        // where the other two effect ranges meet the block.
        let qv = q * &v;
        let vperp = normalize(&(&qv - &v * cr(lam)));
        let mut frame = CMat::zeros(d, 2);
        frame.set_column(0, &v);
        frame.set_column(1, &vperp);
        let projector = outer(&v) + outer(&vperp);
        let fad = frame.adjoint();
        let restrict = |x: usize, a: usize| hermitize(&(&fad * m.effect(x, a) * &frame));
        let qubit_effects = [[restrict(0, 0), restrict(0, 1)], [restrict(1, 0), restrict(1, 1)]];
        blocks.push(JordanBlock {
            frame,
            projector,
            qubit_effects,
            eigenvalue: lam,
            angle: lam.sqrt().acos(),
        });
    }

    let sum: CMat = blocks.iter().fold(CMat::zeros(d, d), |acc, b| acc + &b.projector);
    let gap = max_abs(&(sum - identity(d)));
    if gap > BLOCK_SUM_TOL {
        return Err(Error::Numerical(format!(
            "block projectors miss the identity by {gap:.3e}"
        )));
    }
    Ok(PartyBlocks { party: 0, dim: d, blocks })
}

/// One term of the block mixture.
#[derive(Clone, Debug)]
pub struct BlockComponent {
    /// Chosen block at each party (0-based).
    pub indices: Vec<usize>,
    pub weight: f64,
    /// State conditioned on the blocks, in the 2^N frame basis; absent
    /// when the weight is at or below [`WEIGHT_CUTOFF`].
    pub qubit_state: Option<CMat>,
}

/// A behavior rewritten as a mixture of N-qubit behaviors.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    pub party_blocks: Vec<PartyBlocks>,
    /// All block-index combinations in lexicographic order, party 0 most
    /// significant.
    pub components: Vec<BlockComponent>,
    /// Largest entrywise gap between the weighted mixture and the input
    /// behavior.
    pub reconstruction_residual: f64,
}

impl BlockDecomposition {
    /// The qubit strategy realizing one component; `None` when its weight
    /// fell below the cutoff.
    pub fn component_strategy(&self, component: usize) -> Result<Option<QuantumStrategy>> {
        let comp = self.components.get(component).ok_or_else(|| {
            Error::Internal(format!("component index {component} out of range"))
        })?;
        let Some(state) = &comp.qubit_state else { return Ok(None) };
        let measurements: Result<Vec<LocalMeasurement>> = comp
            .indices
            .iter()
            .enumerate()
            .map(|(n, &k)| self.party_blocks[n].blocks[k].qubit_measurement())
            .collect();
        Ok(Some(QuantumStrategy::unchecked(state.clone(), measurements?)))
    }

    pub fn retained(&self) -> impl Iterator<Item = (usize, &BlockComponent)> {
        self.components.iter().enumerate().filter(|(_, c)| c.qubit_state.is_some())
    }
}

/// Decompose a strategy into its block mixture.
///
/// The input must be projective with balanced ranks and no shared range
/// directions at any party; compose with the projectivization and
/// stripping passes first otherwise.
pub fn compress(s: &QuantumStrategy) -> Result<BlockDecomposition> {
    let balance = check_rank_balance(s)?;
    if !balance.all_balanced() {
        let bad = balance.parties.iter().find(|p| !p.balanced).expect("unbalanced party");
        return Err(Error::Precondition(format!(
            "party {} has dimension {} with ranks {:?}; blocks need even dimension and half \
             ranks",
            bad.party + 1,
            bad.dim,
            bad.ranks
        )));
    }
    let n = s.n_parties();
    let mut party_blocks = Vec::with_capacity(n);
    for party in 0..n {
        let mut pb = party_jordan_blocks(s.measurement(party))?;
        pb.party = party;
        party_blocks.push(pb);
    }
    let radices: Vec<usize> = party_blocks.iter().map(|pb| pb.count()).collect();
    let total: usize = radices.iter().product();

    let mut components = Vec::with_capacity(total);
    let mut weight_sum = 0.0f64;
    for flat in 0..total {
        let indices = unflatten(flat, &radices);
        let ops: Vec<&CMat> =
            indices.iter().enumerate().map(|(p, &k)| &party_blocks[p].blocks[k].projector).collect();
        let weight = expectation(s.state(), s.dims(), &ops).re.max(0.0);
        weight_sum += weight;
        let qubit_state = if weight > WEIGHT_CUTOFF {
            let mut cur = s.state().clone();
            let mut cur_dims = s.dims().to_vec();
            for (p, &k) in indices.iter().enumerate() {
                let fad = party_blocks[p].blocks[k].frame.adjoint();
                let (next, next_dims) = apply_local(&cur, &cur_dims, p, &fad);
                cur = next;
                cur_dims = next_dims;
            }
            let state = hermitize(&cur.map(|z| z / cr(weight)));
            let tr: f64 = (0..state.nrows()).map(|i| state[(i, i)].re).sum();
            if (tr - 1.0).abs() > 1e-8 {
                return Err(Error::Numerical(format!(
                    "component {indices:?} state trace {tr} is off unity"
                )));
            }
            let min_eig = eigh(&state).0.first().copied().unwrap_or(0.0);
            if min_eig < -1e-8 {
                return Err(Error::Numerical(format!(
                    "component {indices:?} state has eigenvalue {min_eig:.3e}"
                )));
            }
            Some(state)
        } else {
            None
        };
        components.push(BlockComponent { indices, weight, qubit_state });
    }
    if (weight_sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::Numerical(format!(
            "block weights sum to {weight_sum}, expected 1"
        )));
    }
    if components.iter().all(|c| c.qubit_state.is_none()) {
        return Err(Error::Internal(
            "every block weight fell below the cutoff, impossible for a unit-trace state".into(),
        ));
    }

    let mut decomposition =
        BlockDecomposition { party_blocks, components, reconstruction_residual: 0.0 };
    let target = born_behavior(s)?;
    let mut mixture = vec![0.0f64; target.table().len()];
    for (i, comp) in decomposition.retained() {
        let strat = decomposition
            .component_strategy(i)?
            .expect("retained component has a strategy");
        let b = born_behavior(&strat)?;
        for (acc, &p) in mixture.iter_mut().zip(b.table()) {
            *acc += comp.weight * p;
        }
    }
    let residual = mixture
        .iter()
        .zip(target.table())
        .map(|(m, t)| (m - t).abs())
        .fold(0.0f64, f64::max);
    if residual > RECONSTRUCTION_TOL {
        return Err(Error::Numerical(format!(
            "block mixture misses the input behavior by {residual:.3e}"
        )));
    }
    decomposition.reconstruction_residual = residual;
    Ok(decomposition)
}

fn unflatten(mut flat: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; radices.len()];
    for (slot, &r) in radices.iter().enumerate().rev() {
        out[slot] = flat % r;
        flat /= r;
    }
    out
}

/// A local filter that concentrates the violation of one functional.
#[derive(Clone, Debug)]
pub struct SloccFilter {
    /// Rank-2 projector per party, in the original local spaces.
    pub projectors: Vec<CMat>,
    /// Block picked at each party (0-based).
    pub selected: Vec<usize>,
    /// Probability that the filter succeeds on the input state.
    pub success_probability: f64,
    /// The post-filter N-qubit state in the block frames.
    pub filtered_state: CMat,
    /// The qubit strategy realizing the filtered behavior.
    pub filtered_strategy: QuantumStrategy,
    pub original_value: f64,
    pub filtered_value: f64,
}

/// Pick the block component most violating `f` and return the local
/// projections onto it.
///
/// The input must violate `f` (negative value) and must reduce to
/// balanced form with negligible factorized mass; inputs whose stripped
/// terms carry real weight need the mixture-level accounting of the full
/// pipeline.
pub fn slocc_filter(s: &QuantumStrategy, f: &BellFunctional) -> Result<SloccFilter> {
    if f.scenario().n_parties() != s.n_parties() {
        return Err(Error::Structural(format!(
            "functional is for {} parties, strategy has {}",
            f.scenario().n_parties(),
            s.n_parties()
        )));
    }
    let original = born_behavior(s)?;
    let original_value = bell_value(f, &original)?;
    if original_value >= 0.0 {
        return Err(Error::Precondition(format!(
            "strategy does not violate the functional (value {original_value:.6})"
        )));
    }

    let reduction = strip_shared_vectors(s)?;
    let heavy = reduction.steps.iter().find(|st| st.absolute_weight > FACTOR_CUTOFF);
    if let Some(st) = heavy {
        return Err(Error::Precondition(format!(
            "stripping factors out weight {:.3e} at party {}; run the full pipeline, which \
             accounts for factorized terms",
            st.absolute_weight,
            st.party + 1
        )));
    }
    let reduced = reduction.reduced.as_ref().ok_or_else(|| {
        Error::Internal("stripping removed everything yet no step carried weight".into())
    })?;

    let decomposition = compress(reduced)?;
    let mut best: Option<(usize, f64)> = None;
    let mut table = String::new();
    for (i, comp) in decomposition.retained() {
        let strat = decomposition.component_strategy(i)?.expect("retained");
        let value = bell_value(f, &born_behavior(&strat)?)?;
        table.push_str(&format!(
            "  blocks {:?}: weight {:.6}, value {:+.6}\n",
            comp.indices, comp.weight, value
        ));
        if best.map_or(true, |(_, bv)| value < bv) {
            best = Some((i, value));
        }
    }
    let (best_idx, filtered_value) = best.expect("compress retains at least one component");
    if filtered_value > original_value + MONOTONE_SLACK {
        return Err(Error::Internal(format!(
            "no block component reaches the mixture value {original_value:+.6}, which convexity \
             forbids; component table:\n{table}"
        )));
    }

    let comp = &decomposition.components[best_idx];
    let projectors: Vec<CMat> = comp
        .indices
        .iter()
        .enumerate()
        .map(|(p, &k)| {
            let e = &decomposition.party_blocks[p].blocks[k].projector;
            let w = &reduction.embeddings[p];
            w * e * w.adjoint()
        })
        .collect();
    let filtered_strategy =
        decomposition.component_strategy(best_idx)?.expect("retained component");
    Ok(SloccFilter {
        projectors,
        selected: comp.indices.clone(),
        success_probability: reduction.residual_weight * comp.weight,
        filtered_state: comp.qubit_state.clone().expect("retained component"),
        filtered_strategy,
        original_value,
        filtered_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, pure_density, random_pure_state, random_unitary};
    use crate::quantum::testfixtures::{optimal_chsh_strategy, spin_settings};
    use crate::scenario::chsh;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::PI;

    fn basis_vec(d: usize, i: usize) -> CVec {
        let mut v = CVec::zeros(d);
        v[i] = cr(1.0);
        v
    }

    /// Rank-2 first effects in dimension 4 whose blocks are
    /// span{e1,e3} and span{e2,e4} with prescribed angles.
    fn two_angle_measurement(t1: f64, t2: f64) -> LocalMeasurement {
        let d = 4;
        let a11 = outer(&basis_vec(d, 0)) + outer(&basis_vec(d, 1));
        let b1 = CVec::from_column_slice(&[cr(t1.cos()), cr(0.0), cr(t1.sin()), cr(0.0)]);
        let b2 = CVec::from_column_slice(&[cr(0.0), cr(t2.cos()), cr(0.0), cr(t2.sin())]);
        let a12 = outer(&b1) + outer(&b2);
        LocalMeasurement::from_first_effects(a11, a12).unwrap()
    }

    #[test]
    fn qubit_measurement_is_one_block() {
        let theta = PI / 4.0;
        let a11 = outer(&basis_vec(2, 0));
        let rotated = CVec::from_column_slice(&[cr(theta.cos()), cr(theta.sin())]);
        let a12 = outer(&rotated);
        let m = LocalMeasurement::from_first_effects(a11, a12).unwrap();
        let pb = party_jordan_blocks(&m).unwrap();
        assert_eq!(pb.count(), 1);
        let b = &pb.blocks[0];
        assert_relative_eq!(b.angle, theta, epsilon = 1e-12);
        assert!(max_abs(&(&b.projector - identity(2))) < 1e-12);
        // In dimension 2 the qubit effects are the inputs re-expressed in
        // the block frame.
        for x in 0..2 {
            for a in 0..2 {
                let back = &b.frame * &b.qubit_effects[x][a] * b.frame.adjoint();
                assert!(max_abs(&(back - m.effect(x, a))) < 1e-12);
            }
        }
    }

    #[test]
    fn two_angle_construction_matches_dense_oracle() {
        let (t1, t2) = (PI / 5.0, PI / 7.0);
        let m = two_angle_measurement(t1, t2);
        let pb = party_jordan_blocks(&m).unwrap();
        assert_eq!(pb.count(), 2);
        // Ascending eigenvalue order puts the larger angle first.
        assert_relative_eq!(pb.blocks[0].angle, t1, epsilon = 1e-10);
        assert_relative_eq!(pb.blocks[1].angle, t2, epsilon = 1e-10);
        assert_relative_eq!(pb.blocks[0].eigenvalue, t1.cos().powi(2), epsilon = 1e-10);
        assert_relative_eq!(pb.blocks[1].eigenvalue, t2.cos().powi(2), epsilon = 1e-10);

        // Independent check: nonzero spectrum of the unrestricted product
        // P Q P computed densely.
        let p = m.effect(0, 0);
        let q = m.effect(1, 0);
        let dense = eigh(&(p * q * p)).0;
        let mut top: Vec<f64> = dense.iter().rev().take(2).copied().collect();
        top.sort_by(f64::total_cmp);
        assert_relative_eq!(top[0], t1.cos().powi(2), epsilon = 1e-10);
        assert_relative_eq!(top[1], t2.cos().powi(2), epsilon = 1e-10);

        // Block subspaces are the expected coordinate planes.
        let e13 = outer(&basis_vec(4, 0)) + outer(&basis_vec(4, 2));
        let e24 = outer(&basis_vec(4, 1)) + outer(&basis_vec(4, 3));
        assert!(max_abs(&(&pb.blocks[0].projector - e13)) < 1e-9);
        assert!(max_abs(&(&pb.blocks[1].projector - e24)) < 1e-9);

        // In-frame effects take the canonical one-angle form.
        for b in &pb.blocks {
            let lam = b.eigenvalue;
            let cross = (lam * (1.0 - lam)).sqrt();
            let expect_a12 = CMat::from_row_slice(2, 2, &[cr(lam), cr(cross), cr(cross), cr(1.0 - lam)]);
            assert!(max_abs(&(&b.qubit_effects[0][0] - CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(0.0)]))) < 1e-9);
            assert!(max_abs(&(&b.qubit_effects[1][0] - expect_a12)) < 1e-9);
            let meas = b.qubit_measurement().unwrap();
            let res = meas.projectivity_residuals();
            assert!(res.iter().flatten().all(|&r| r < 1e-9));
        }
    }

    #[test]
    fn each_block_meets_all_four_ranges_once() {
        let m = two_angle_measurement(PI / 5.0, PI / 7.0);
        let pb = party_jordan_blocks(&m).unwrap();
        for b in &pb.blocks {
            for x in 0..2 {
                for a in 0..2 {
                    // Rank of the effect restricted to the block.
                    let sub = b.frame.adjoint() * m.effect(x, a) * &b.frame;
                    let rank = eigh(&hermitize(&sub)).0.iter().filter(|&&v| v > 1e-8).count();
                    assert_eq!(rank, 1, "setting {x} outcome {a}");
                }
            }
        }
        // Orthogonality and completeness across blocks.
        let prod = &pb.blocks[0].projector * &pb.blocks[1].projector;
        assert!(max_abs(&prod) < 1e-9);
        let sum = &pb.blocks[0].projector + &pb.blocks[1].projector;
        assert!(max_abs(&(sum - identity(4))) < 1e-9);
    }

    #[test]
    fn near_degenerate_angles_are_refused() {
        let m = two_angle_measurement(1e-5, PI / 7.0);
        assert!(matches!(party_jordan_blocks(&m), Err(Error::Precondition(_))));
        let m = two_angle_measurement(PI / 2.0 - 1e-5, PI / 7.0);
        assert!(matches!(party_jordan_blocks(&m), Err(Error::Precondition(_))));
    }

    #[test]
    fn odd_dimension_and_rank_imbalance_are_refused() {
        let a11 = outer(&basis_vec(3, 0));
        let v = normalize(&CVec::from_column_slice(&[cr(0.6), cr(0.8), cr(0.0)]));
        let a12 = outer(&v);
        let m = LocalMeasurement::from_first_effects(a11, a12).unwrap();
        assert!(matches!(party_jordan_blocks(&m), Err(Error::Precondition(_))));

        let a11 = outer(&basis_vec(4, 0)) + outer(&basis_vec(4, 1));
        let w = normalize(&CVec::from_column_slice(&[cr(0.6), cr(0.0), cr(0.8), cr(0.0)]));
        let a12 = outer(&w);
        let m = LocalMeasurement::from_first_effects(a11, a12).unwrap();
        assert!(matches!(party_jordan_blocks(&m), Err(Error::Precondition(_))));
    }

    #[test]
    fn degenerate_spectrum_reconstructs_under_any_eigenbasis() {
        // Equal angles make the cross-setting spectrum degenerate, so the
        // eigenbasis inside it is arbitrary. Conjugating state and
        // measurement by a unitary that mixes the degenerate blocks leaves
        // the behavior fixed but moves the frames; both decompositions
        // must reconstruct the same behavior.
        let t = PI / 5.0;
        let m = two_angle_measurement(t, t);
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let state = pure_density(&random_pure_state(4, &mut rng));
        let s1 = QuantumStrategy::new(state.clone(), vec![m.clone()]).unwrap();

        // Mix e1<->e2 and e3<->e4 by the same rotation; this commutes with
        // neither effect individually unless the angles match, which here
        // they do.
        let phi: f64 = 0.77;
        let mut umat = CMat::zeros(4, 4);
        for (i, j) in [(0, 1), (2, 3)] {
            umat[(i, i)] = cr(phi.cos());
            umat[(i, j)] = cr(-phi.sin());
            umat[(j, i)] = cr(phi.sin());
            umat[(j, j)] = cr(phi.cos());
        }
        let conj = |e: &CMat| &umat * e * umat.adjoint();
        let m2 = LocalMeasurement::new([
            [conj(m.effect(0, 0)), conj(m.effect(0, 1))],
            [conj(m.effect(1, 0)), conj(m.effect(1, 1))],
        ])
        .unwrap();
        let s2 = QuantumStrategy::new(conj(&state), vec![m2]).unwrap();

        let b1 = born_behavior(&s1).unwrap();
        let b2 = born_behavior(&s2).unwrap();
        assert!(b1.max_abs_diff(&b2) < 1e-10, "conjugation must preserve the behavior");

        let d1 = compress(&s1).unwrap();
        let d2 = compress(&s2).unwrap();
        for d in [&d1, &d2] {
            assert!(d.reconstruction_residual < 1e-8);
            for b in &d.party_blocks[0].blocks {
                assert_relative_eq!(b.angle, t, epsilon = 1e-8);
            }
        }
        // The frames genuinely differ between the two runs.
        let f1 = &d1.party_blocks[0].blocks[0].frame;
        let f2 = &d2.party_blocks[0].blocks[0].frame;
        let overlap = (f1.adjoint() * f2).norm();
        assert!(overlap < 2.0 - 1e-3, "expected distinct frames, overlap {overlap}");
    }

    #[test]
    fn qubit_strategy_compresses_to_one_component() {
        let s = optimal_chsh_strategy();
        let d = compress(&s).unwrap();
        assert_eq!(d.components.len(), 1);
        assert_relative_eq!(d.components[0].weight, 1.0, epsilon = 1e-10);
        assert!(d.reconstruction_residual < 1e-12);
        let strat = d.component_strategy(0).unwrap().unwrap();
        let b = born_behavior(&strat).unwrap();
        assert!(b.max_abs_diff(&born_behavior(&s).unwrap()) < 1e-10);
    }

    #[test]
    fn product_state_in_one_block_drops_the_other() {
        let m0 = two_angle_measurement(PI / 5.0, PI / 7.0);
        let m1 = spin_settings(0.3, 1.2);
        // Party 0 state vector inside the first block, span{e1,e3}.
        let alpha: f64 = 0.4;
        let v0 = CVec::from_column_slice(&[
            cr(alpha.cos()),
            cr(0.0),
            cr(alpha.sin()),
            cr(0.0),
        ]);
        let v1 = normalize(&CVec::from_column_slice(&[cr(0.8), c(0.0, 0.6)]));
        let joint = v0.kronecker(&v1);
        let s = QuantumStrategy::new(pure_density(&joint), vec![m0, m1]).unwrap();
        let d = compress(&s).unwrap();
        assert_eq!(d.components.len(), 2);
        assert_relative_eq!(d.components[0].weight, 1.0, epsilon = 1e-10);
        assert!(d.components[1].weight < 1e-12);
        assert!(d.components[1].qubit_state.is_none());
        assert!(d.component_strategy(1).unwrap().is_none());
        assert!(d.reconstruction_residual < 1e-9);
    }

    /// Two parties of dimension 4, each in balanced block form, with a
    /// random pure state. Built by conjugating canonical two-angle
    /// measurements with seeded local unitaries.
    fn random_balanced_pair(seed: u64) -> QuantumStrategy {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut measurements = Vec::new();
        for _ in 0..2 {
            let t1 = 0.25 + 1.0 * rng.random::<f64>();
            let t2 = 0.25 + 1.0 * rng.random::<f64>();
            let base = two_angle_measurement(t1, t2);
            let u = random_unitary(4, &mut rng);
            let conj = |e: &CMat| &u * e * u.adjoint();
            measurements.push(
                LocalMeasurement::new([
                    [conj(base.effect(0, 0)), conj(base.effect(0, 1))],
                    [conj(base.effect(1, 0)), conj(base.effect(1, 1))],
                ])
                .unwrap(),
            );
        }
        let state = pure_density(&random_pure_state(16, &mut rng));
        QuantumStrategy::new(state, measurements).unwrap()
    }

    #[test]
    fn random_pair_weights_partition_unity() {
        let s = random_balanced_pair(91);
        let d = compress(&s).unwrap();
        assert_eq!(d.components.len(), 4);
        let total: f64 = d.components.iter().map(|comp| comp.weight).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-8);
        assert!(d.reconstruction_residual < 1e-7);
        for comp in &d.components {
            assert!(comp.weight > -1e-12);
        }
    }

    #[test]
    fn weights_are_invariant_under_local_frame_changes() {
        let s = random_balanced_pair(17);
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        let u0 = random_unitary(4, &mut rng);
        let u1 = random_unitary(4, &mut rng);
        let conj = |e: &CMat, u: &CMat| u * e * u.adjoint();
        let rotate = |m: &LocalMeasurement, u: &CMat| {
            LocalMeasurement::new([
                [conj(m.effect(0, 0), u), conj(m.effect(0, 1), u)],
                [conj(m.effect(1, 0), u), conj(m.effect(1, 1), u)],
            ])
            .unwrap()
        };
        let big = u0.kronecker(&u1);
        let s2 = QuantumStrategy::new(
            &big * s.state() * big.adjoint(),
            vec![rotate(s.measurement(0), &u0), rotate(s.measurement(1), &u1)],
        )
        .unwrap();
        let d1 = compress(&s).unwrap();
        let d2 = compress(&s2).unwrap();
        let mut w1: Vec<f64> = d1.components.iter().map(|c| c.weight).collect();
        let mut w2: Vec<f64> = d2.components.iter().map(|c| c.weight).collect();
        w1.sort_by(f64::total_cmp);
        w2.sort_by(f64::total_cmp);
        for (a, b) in w1.iter().zip(&w2) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn filter_on_qubits_is_the_identity() {
        let s = optimal_chsh_strategy();
        let f = chsh();
        let out = slocc_filter(&s, &f).unwrap();
        assert_eq!(out.selected, vec![0, 0]);
        assert_relative_eq!(out.success_probability, 1.0, epsilon = 1e-9);
        assert_relative_eq!(out.filtered_value, out.original_value, epsilon = 1e-9);
        for x in &out.projectors {
            assert!(max_abs(&(x - identity(2))) < 1e-9);
        }
    }

    /// Embed a qubit strategy into larger local spaces. Leftover
    /// directions are attached to fixed outcomes under both settings so
    /// stripping removes them with zero weight.
    fn embed_strategy(base: &QuantumStrategy, dims: &[usize], seed: u64) -> QuantumStrategy {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let n = base.n_parties();
        let mut isometries = Vec::with_capacity(n);
        for (p, &d) in dims.iter().enumerate() {
            assert!(d >= base.dims()[p]);
            isometries.push(crate::linalg::random_isometry(d, base.dims()[p], &mut rng));
        }
        let mut measurements = Vec::with_capacity(n);
        for p in 0..n {
            let v = &isometries[p];
            let d = dims[p];
            let leftover = identity(d) - v * v.adjoint();
            let (lvals, lvecs) = eigh(&leftover);
            let mut effects: [[CMat; 2]; 2] = core::array::from_fn(|x| {
                core::array::from_fn(|a| {
                    v * base.measurement(p).effect(x, a) * v.adjoint()
                })
            });
            for (i, &lv) in lvals.iter().enumerate() {
                if lv > 0.5 {
                    let dir = outer(&CVec::from_column_slice(lvecs.column(i).as_slice()));
                    let a1 = rng.random_range(0..2usize);
                    let a2 = rng.random_range(0..2usize);
                    effects[0][a1] += &dir;
                    effects[1][a2] += &dir;
                }
            }
            let [[e00, e01], [e10, e11]] = effects;
            measurements.push(LocalMeasurement::new([[e00, e01], [e10, e11]]).unwrap());
        }
        let mut big = isometries[0].clone();
        for v in &isometries[1..] {
            big = big.kronecker(v);
        }
        let state = &big * base.state() * big.adjoint();
        QuantumStrategy::new(state, measurements).unwrap()
    }

    #[test]
    fn embedded_singlet_filters_back_to_qubits() {
        let base = optimal_chsh_strategy();
        let f = chsh();
        let s = embed_strategy(&base, &[3, 3], 5);
        let out = slocc_filter(&s, &f).unwrap();
        assert_relative_eq!(out.filtered_value, out.original_value, epsilon = 1e-8);
        assert!(out.filtered_value <= out.original_value + MONOTONE_SLACK);
        for x in &out.projectors {
            assert_eq!(x.nrows(), 3);
            let rank = eigh(x).0.iter().filter(|&&v| v > 0.5).count();
            assert_eq!(rank, 2);
        }
        // The filtered state reproduces the local-projection expression:
        // project the input state onto the selected blocks, renormalize,
        // and compare in the original space.
        let xall = out.projectors[0].kronecker(&out.projectors[1]);
        let projected = &xall * s.state() * xall.adjoint();
        let tr: f64 = (0..projected.nrows()).map(|i| projected[(i, i)].re).sum();
        assert_relative_eq!(tr, out.success_probability, epsilon = 1e-9);
        // Move the filtered qubit state back through the frames.
        let red = strip_shared_vectors(&s).unwrap();
        let dec = compress(red.reduced.as_ref().unwrap()).unwrap();
        let mut back = out.filtered_state.clone();
        let mut cur_dims = vec![2usize; 2];
        for p in 0..2 {
            let frame = &dec.party_blocks[p].blocks[out.selected[p]].frame;
            let lift = &red.embeddings[p] * frame;
            let (next, next_dims) = apply_local(&back, &cur_dims, p, &lift);
            back = next;
            cur_dims = next_dims;
        }
        assert!(max_abs(&(back - projected.map(|z| z / cr(tr)))) < 1e-8);
    }

    #[test]
    fn filter_picks_the_most_violating_block() {
        // Block-diagonal strategy: block (1,1) carries the CHSH-optimal
        // qubit strategy, block (2,2) a weaker one; the filter must select
        // the optimal block and report its value.
        let strong = optimal_chsh_strategy();
        let weak = {
            // Setting separations differ from the optimal strategy's pi/2
            // at both parties, so the combined measurement has a
            // non-degenerate block spectrum; the violation survives but
            // is weaker.
            let phi = PI / 2.0 + 0.5;
            let m0 = spin_settings(0.0, phi);
            let m1 = spin_settings(PI + phi / 2.0 + 0.2, (phi + PI) / 2.0 - 0.2);
            let state = pure_density(&crate::quantum::testfixtures::singlet());
            QuantumStrategy::new(state, vec![m0, m1]).unwrap()
        };
        let f = chsh();
        let vs = bell_value(&f, &born_behavior(&strong).unwrap()).unwrap();
        let vw = bell_value(&f, &born_behavior(&weak).unwrap()).unwrap();
        assert!(vs < vw && vw < 0.0, "need two distinct violations, got {vs} and {vw}");

        let weight = (0.5f64, 0.5f64);
        let mk_meas = |p: usize| {
            let block_effect = |src: &QuantumStrategy, x: usize, a: usize, slot: usize| {
                let e = src.measurement(p).effect(x, a);
                let mut out = CMat::zeros(4, 4);
                for i in 0..2 {
                    for j in 0..2 {
                        out[(slot + 2 * i, slot + 2 * j)] = e[(i, j)];
                    }
                }
                out
            };
            let eff = |x: usize, a: usize| {
                block_effect(&strong, x, a, 0) + block_effect(&weak, x, a, 1)
            };
            LocalMeasurement::new([[eff(0, 0), eff(0, 1)], [eff(1, 0), eff(1, 1)]]).unwrap()
        };
        // States are pure within each block pair; mix them with the given
        // weights. Lift |i>|j> to the block-(1,1) or block-(2,2) planes.
        let lift_state = |src: &QuantumStrategy, slot: usize| {
            let mut out = CMat::zeros(16, 16);
            for r in 0..4 {
                for c_ in 0..4 {
                    let (r0, r1) = (r / 2, r % 2);
                    let (c0, c1) = (c_ / 2, c_ % 2);
                    let big_r = (slot + 2 * r0) * 4 + (slot + 2 * r1);
                    let big_c = (slot + 2 * c0) * 4 + (slot + 2 * c1);
                    out[(big_r, big_c)] = src.state()[(r, c_)];
                }
            }
            out
        };
        let state = lift_state(&strong, 0).map(|z| z * cr(weight.0))
            + lift_state(&weak, 1).map(|z| z * cr(weight.1));
        let s = QuantumStrategy::new(state, vec![mk_meas(0), mk_meas(1)]).unwrap();

        let out = slocc_filter(&s, &f).unwrap();
        // Blocks sort by ascending eigenvalue; the optimal strategy's
        // pi/2 separations put its planes second at both parties.
        assert_eq!(out.selected, vec![1, 1]);
        assert_relative_eq!(out.filtered_value, vs, epsilon = 1e-8);
        assert_relative_eq!(out.original_value, 0.5 * vs + 0.5 * vw, epsilon = 1e-8);
        assert_relative_eq!(out.success_probability, 0.5, epsilon = 1e-9);
        assert!(out.filtered_value <= out.original_value + MONOTONE_SLACK);
    }

    #[test]
    fn non_violating_input_is_refused() {
        let f = chsh();
        let m0 = spin_settings(0.0, PI / 2.0);
        let m1 = spin_settings(0.0, PI / 2.0);
        let state = identity(4).map(|z| z / cr(4.0));
        let s = QuantumStrategy::new(state, vec![m0, m1]).unwrap();
        assert!(matches!(slocc_filter(&s, &f), Err(Error::Precondition(_))));
    }
}
