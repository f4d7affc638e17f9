//! Quantum measurement strategies and their behaviors.
//!
//! A strategy is a shared density matrix on a tensor product of local spaces
//! plus, for every party, a dichotomic POVM per setting. Evaluating the Born
//! rule turns a strategy into a [`Behavior`]. Effects and state live as
//! dense complex matrices; the total dimension is capped so dense linear
//! algebra stays sensible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    self, cr, expectation, hermiticity_residual, identity, max_abs, random_isometry,
    random_pure_state, random_unitary, CMat, CVec,
};
use crate::scenario::{Behavior, Scenario};

/// Effects and states must be Hermitian to this residual.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Eigenvalues may undershoot zero by this much.
pub const PSD_TOL: f64 = 1e-9;
/// The two effects of a setting must sum to the identity within this.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// State trace tolerance.
pub const TRACE_TOL: f64 = 1e-9;
/// `‖A² - A‖` below this counts as projective.
pub const PROJECTIVE_TOL: f64 = 1e-8;
/// Guard on the product of local dimensions.
pub const MAX_TOTAL_DIM: usize = 1024;

/// Two dichotomic POVMs on one local space, indexed `[setting][outcome]`
/// with 0-based indices (setting 0 is the label-1 observable).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalMeasurement {
    dim: usize,
    effects: [[CMat; 2]; 2],
}

impl LocalMeasurement {
    pub fn new(effects: [[CMat; 2]; 2]) -> Result<Self> {
        let dim = effects[0][0].nrows();
        if dim == 0 {
            return Err(Error::Structural("measurement on a zero-dimensional space".into()));
        }
        for (x, pair) in effects.iter().enumerate() {
            for (a, e) in pair.iter().enumerate() {
                linalg::require_square(e, dim, &format!("effect (outcome {}, setting {})", a + 1, x + 1))?;
            }
        }
        Ok(LocalMeasurement { dim, effects })
    }

    /// Build both settings from their first effects; the second outcomes
    /// are the complements.
    pub fn from_first_effects(a1: CMat, a2: CMat) -> Result<Self> {
        let d = a1.nrows();
        let c1 = identity(d) - &a1;
        let c2 = identity(d) - &a2;
        LocalMeasurement::new([[a1, c1], [a2, c2]])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn effect(&self, setting: usize, outcome: usize) -> &CMat {
        &self.effects[setting][outcome]
    }

    /// Hermiticity and completeness; cheap enough for hot paths.
    pub(crate) fn quick_check(&self, who: &str) -> Result<()> {
        for x in 0..2 {
            for a in 0..2 {
                let h = hermiticity_residual(&self.effects[x][a]);
                if h > HERMITICITY_TOL {
                    return Err(Error::Validation(format!(
                        "{who}: effect (outcome {}, setting {}) is not Hermitian (residual {h:.3e})",
                        a + 1,
                        x + 1
                    )));
                }
            }
            let sum = &self.effects[x][0] + &self.effects[x][1] - identity(self.dim);
            let r = max_abs(&sum);
            if r > COMPLETENESS_TOL {
                return Err(Error::Validation(format!(
                    "{who}: effects of setting {} sum to the identity only within {r:.3e}",
                    x + 1
                )));
            }
        }
        Ok(())
    }

    /// Full POVM validation including positivity.
    pub fn validate(&self, who: &str) -> Result<()> {
        self.quick_check(who)?;
        for x in 0..2 {
            for a in 0..2 {
                let min = linalg::min_eigenvalue(&self.effects[x][a]);
                if min < -PSD_TOL {
                    return Err(Error::Validation(format!(
                        "{who}: effect (outcome {}, setting {}) has eigenvalue {min:.3e} below -{PSD_TOL:.0e}",
                        a + 1,
                        x + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest `‖A² - A‖` over the four effects.
    pub fn projectivity_residuals(&self) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for x in 0..2 {
            for a in 0..2 {
                let e = &self.effects[x][a];
                out[x][a] = max_abs(&(e * e - e));
            }
        }
        out
    }
}

/// A state plus one [`LocalMeasurement`] per party.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumStrategy {
    dims: Vec<usize>,
    state: CMat,
    measurements: Vec<LocalMeasurement>,
}

impl QuantumStrategy {
    pub fn new(state: CMat, measurements: Vec<LocalMeasurement>) -> Result<Self> {
        if measurements.is_empty() {
            return Err(Error::Structural("a strategy needs at least one party".into()));
        }
        Scenario::new(measurements.len())?;
        let dims: Vec<usize> = measurements.iter().map(|m| m.dim()).collect();
        let total = linalg::dim_product(&dims);
        if total > MAX_TOTAL_DIM {
            return Err(Error::Resource(format!(
                "total dimension {total} exceeds the guard of {MAX_TOTAL_DIM} (local dimensions {dims:?})"
            )));
        }
        linalg::require_square(&state, total, "state")?;
        Ok(QuantumStrategy { dims, state, measurements })
    }

    pub fn from_pure(state: &CVec, measurements: Vec<LocalMeasurement>) -> Result<Self> {
        QuantumStrategy::new(linalg::pure_density(state), measurements)
    }

    /// Assemble without shape checks; callers guarantee consistency.
    pub(crate) fn unchecked(state: CMat, measurements: Vec<LocalMeasurement>) -> Self {
        let dims = measurements.iter().map(|m| m.dim()).collect();
        QuantumStrategy { dims, state, measurements }
    }

    pub fn n_parties(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        linalg::dim_product(&self.dims)
    }

    pub fn state(&self) -> &CMat {
        &self.state
    }

    pub fn measurement(&self, party: usize) -> &LocalMeasurement {
        &self.measurements[party]
    }

    pub fn measurements(&self) -> &[LocalMeasurement] {
        &self.measurements
    }

    /// Hermiticity, trace and completeness checks; skips the spectra.
    pub(crate) fn quick_check(&self) -> Result<()> {
        let h = hermiticity_residual(&self.state);
        if h > HERMITICITY_TOL {
            return Err(Error::Validation(format!(
                "state is not Hermitian (residual {h:.3e})"
            )));
        }
        let tr = self.state.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Validation(format!("state trace is {tr}, expected 1")));
        }
        for (n, m) in self.measurements.iter().enumerate() {
            m.quick_check(&format!("party {}", n + 1))?;
        }
        Ok(())
    }

    /// Full validation: Hermitian PSD unit-trace state and valid POVMs.
    pub fn validate(&self) -> Result<()> {
        self.quick_check()?;
        let min = linalg::min_eigenvalue(&self.state);
        if min < -PSD_TOL {
            return Err(Error::Validation(format!(
                "state has eigenvalue {min:.3e} below -{PSD_TOL:.0e}"
            )));
        }
        for (n, m) in self.measurements.iter().enumerate() {
            m.validate(&format!("party {}", n + 1))?;
        }
        Ok(())
    }
}

/// Per-effect projectivity residuals for a whole strategy.
#[derive(Clone, Debug)]
pub struct ProjectivityReport {
    /// `residuals[party][setting][outcome] = ‖A² - A‖`.
    pub residuals: Vec<[[f64; 2]; 2]>,
}

impl ProjectivityReport {
    pub fn is_projective(&self, party: usize, setting: usize, outcome: usize) -> bool {
        self.residuals[party][setting][outcome] <= PROJECTIVE_TOL
    }

    pub fn all_projective(&self) -> bool {
        self.max_residual() <= PROJECTIVE_TOL
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .flat_map(|p| p.iter().flat_map(|s| s.iter()))
            .fold(0.0, |acc, &r| acc.max(r))
    }
}

pub fn check_projective(strategy: &QuantumStrategy) -> ProjectivityReport {
    ProjectivityReport {
        residuals: strategy.measurements.iter().map(|m| m.projectivity_residuals()).collect(),
    }
}

/// Evaluate the Born rule into a behavior table.
///
/// Structural problems and non-Hermitian or incomplete inputs error
/// immediately; a state that is not positive shows up as out-of-range
/// probabilities and is reported through the output validation. Callers
/// wanting a full spectral check run [`QuantumStrategy::validate`] first.
pub fn born_behavior(strategy: &QuantumStrategy) -> Result<Behavior> {
    strategy.quick_check()?;
    let s = Scenario::new(strategy.n_parties())?;
    let n = strategy.n_parties();
    let b = Behavior::from_fn(s, |x, a| {
        let ops: Vec<&CMat> =
            (0..n).map(|p| strategy.measurement(p).effect(s.bit(x, p), s.bit(a, p))).collect();
        expectation(&strategy.state, &strategy.dims, &ops).re
    });
    b.ensure_valid().map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("Born-rule output invalid: {msg}")),
        other => other,
    })?;
    Ok(b)
}

/// Random projector of the given rank, Haar-conjugated.
pub fn random_projector<R: Rng>(d: usize, rank: usize, rng: &mut R) -> CMat {
    assert!(rank <= d);
    if rank == 0 {
        return CMat::zeros(d, d);
    }
    let v = random_isometry(d, rank, rng);
    &v * v.adjoint()
}

/// First effect of a random dichotomic POVM: `U diag(u_i) U†` with uniform
/// eigenvalues in `[0, 1]`; the complement is the other effect.
pub fn random_povm_effect<R: Rng>(d: usize, rng: &mut R) -> CMat {
    let u = random_unitary(d, rng);
    let mut diag = CMat::zeros(d, d);
    for i in 0..d {
        diag[(i, i)] = cr(rng.random());
    }
    &u * diag * u.adjoint()
}

/// Seeded random strategy. Sampling order is fixed (state first, then per
/// party the two first effects), so equal seeds give identical strategies.
///
/// With `projective` the first effect of each setting is a random projector
/// of uniformly drawn rank `1..dim` (always rank 1 on qubits); otherwise it
/// is a random POVM effect. With `pure` the state is a Haar random pure
/// state, otherwise a normalized Ginibre density matrix.
pub fn random_strategy(dims: &[usize], pure: bool, projective: bool, seed: u64) -> Result<QuantumStrategy> {
    if dims.is_empty() {
        return Err(Error::Structural("no local dimensions given".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0) {
        return Err(Error::Structural(format!("local dimension {d} is not positive")));
    }
    let total = linalg::dim_product(dims);
    if total > MAX_TOTAL_DIM {
        return Err(Error::Resource(format!(
            "total dimension {total} exceeds the guard of {MAX_TOTAL_DIM}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let state = if pure {
        linalg::pure_density(&random_pure_state(total, &mut rng))
    } else {
        let g = CMat::from_fn(total, total, |_, _| {
            crate::linalg::c(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)
        });
        let m = &g * g.adjoint();
        let tr = m.trace();
        m.map(|z| z / tr)
    };
    let mut measurements = Vec::with_capacity(dims.len());
    for &d in dims {
        let mut firsts = Vec::with_capacity(2);
        for _ in 0..2 {
            let eff = if projective {
                let rank = if d == 1 { 1 } else { rng.random_range(1..d) };
                random_projector(d, rank, &mut rng)
            } else {
                random_povm_effect(d, &mut rng)
            };
            firsts.push(eff);
        }
        let a2 = firsts.pop().expect("two effects were pushed");
        let a1 = firsts.pop().expect("two effects were pushed");
        measurements.push(LocalMeasurement::from_first_effects(a1, a2)?);
    }
    QuantumStrategy::new(state, measurements)
}


#[cfg(test)]
mod tests {
    use super::testfixtures::*;
    use super::*;
    use crate::linalg::outer;
    use crate::scenario::{bell_value, chsh, correlators, Scenario};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    #[test]
    fn all_first_outcome_projectors_give_a_deterministic_behavior() {
        let e1 = CVec::from_column_slice(&[cr(1.0), cr(0.0)]);
        let p = outer(&e1);
        let m = LocalMeasurement::from_first_effects(p.clone(), p.clone()).unwrap();
        let strat = QuantumStrategy::from_pure(&e1, vec![m]).unwrap();
        let b = born_behavior(&strat).unwrap();
        for x in 0..2 {
            assert_relative_eq!(b.prob(x, 0), 1.0, epsilon = 1e-12);
            assert_relative_eq!(b.prob(x, 1), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn maximally_mixed_state_gives_trace_ratios() {
        let s = random_strategy(&[2, 3], true, true, 99).unwrap();
        let total = s.total_dim();
        let mixed = QuantumStrategy::new(
            identity(total).map(|z| z / cr(total as f64)),
            s.measurements().to_vec(),
        )
        .unwrap();
        let b = born_behavior(&mixed).unwrap();
        let sc = Scenario::new(2).unwrap();
        for x in 0..4 {
            for a in 0..4 {
                let want: f64 = (0..2)
                    .map(|p| {
                        mixed.measurement(p).effect(sc.bit(x, p), sc.bit(a, p)).trace().re
                            / mixed.dims()[p] as f64
                    })
                    .product();
                assert_relative_eq!(b.prob(x, a), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn singlet_correlators_are_cosines() {
        let strat = optimal_chsh_strategy();
        strat.validate().unwrap();
        let b = born_behavior(&strat).unwrap();
        let c = correlators(&b).unwrap();
        for v in &c.values()[..3] {
            assert_relative_eq!(*v, FRAC_1_SQRT_2, epsilon = 1e-12);
        }
        assert_relative_eq!(c.values()[3], -FRAC_1_SQRT_2, epsilon = 1e-12);
        let v = bell_value(&chsh(), &b).unwrap();
        assert_relative_eq!(v, 2.0 - 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn born_rule_is_invariant_under_local_unitaries() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let s = random_strategy(&[2, 3], false, false, 17).unwrap();
        let b = born_behavior(&s).unwrap();
        let us: Vec<CMat> = s.dims().iter().map(|&d| random_unitary(d, &mut rng)).collect();
        let refs: Vec<&CMat> = us.iter().collect();
        let big = linalg::kron_all(&refs);
        let rotated_state = &big * s.state() * big.adjoint();
        let rotated_meas: Vec<LocalMeasurement> = (0..2)
            .map(|p| {
                let u = &us[p];
                LocalMeasurement::new([
                    [
                        u * s.measurement(p).effect(0, 0) * u.adjoint(),
                        u * s.measurement(p).effect(0, 1) * u.adjoint(),
                    ],
                    [
                        u * s.measurement(p).effect(1, 0) * u.adjoint(),
                        u * s.measurement(p).effect(1, 1) * u.adjoint(),
                    ],
                ])
                .unwrap()
            })
            .collect();
        let rotated = QuantumStrategy::new(rotated_state, rotated_meas).unwrap();
        let b2 = born_behavior(&rotated).unwrap();
        assert!(b.max_abs_diff(&b2) < 1e-10);
    }

    #[test]
    fn random_strategies_are_valid_and_reproducible() {
        for (pure, projective) in [(true, true), (true, false), (false, true), (false, false)] {
            let s1 = random_strategy(&[2, 4], pure, projective, 42).unwrap();
            s1.validate().unwrap();
            born_behavior(&s1).unwrap().ensure_valid().unwrap();
            let s2 = random_strategy(&[2, 4], pure, projective, 42).unwrap();
            assert_eq!(s1, s2);
            let s3 = random_strategy(&[2, 4], pure, projective, 43).unwrap();
            assert!(s1 != s3);
            let report = check_projective(&s1);
            assert_eq!(report.all_projective(), projective);
        }
    }

    #[test]
    fn projectivity_report_flags_the_povm_effects() {
        let povm = random_povm_effect(3, &mut rand_chacha::ChaCha12Rng::seed_from_u64(8));
        let proj = random_projector(3, 1, &mut rand_chacha::ChaCha12Rng::seed_from_u64(9));
        let m = LocalMeasurement::from_first_effects(povm, proj).unwrap();
        let strat =
            QuantumStrategy::new(identity(3).map(|z| z / cr(3.0)), vec![m]).unwrap();
        let report = check_projective(&strat);
        assert!(!report.is_projective(0, 0, 0));
        assert!(!report.is_projective(0, 0, 1));
        assert!(report.is_projective(0, 1, 0));
        assert!(report.is_projective(0, 1, 1));
        assert!(!report.all_projective());
    }

    #[test]
    fn validation_rejects_broken_strategies() {
        // Non-normalized state.
        let m = spin_settings(0.0, PI / 2.0);
        let bad_state = identity(2);
        let s = QuantumStrategy::new(bad_state, vec![m.clone()]).unwrap();
        assert!(matches!(s.validate(), Err(Error::Validation(_))));
        assert!(born_behavior(&s).is_err());

        // Effects that do not complete to the identity.
        let p = outer(&CVec::from_column_slice(&[cr(1.0), cr(0.0)]));
        let bad_m = LocalMeasurement::new([[p.clone(), p.clone()], [p.clone(), identity(2) - &p]])
            .unwrap();
        let s2 = QuantumStrategy::new(identity(2).map(|z| z / cr(2.0)), vec![bad_m]).unwrap();
        assert!(matches!(s2.validate(), Err(Error::Validation(_))));

        // Oversized total dimension.
        let err = random_strategy(&[64, 64], true, true, 1).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn negative_state_is_caught_through_output_validation() {
        let m = spin_settings(0.0, PI / 2.0);
        let e0 = CVec::from_column_slice(&[cr(1.0), cr(0.0)]);
        let e1 = CVec::from_column_slice(&[cr(0.0), cr(1.0)]);
        // Trace one, Hermitian, but with a negative direction.
        let state = outer(&e0) * cr(1.5) + outer(&e1) * cr(-0.5);
        let s = QuantumStrategy::new(state, vec![m]).unwrap();
        let err = born_behavior(&s).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }
}
