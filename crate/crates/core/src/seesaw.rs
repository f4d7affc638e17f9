//! Alternating local optimization of Bell violation.
//!
//! For a fixed functional the value of a quantum strategy is linear in
//! the state and in each party's effects separately, so each can be
//! minimized exactly with the others held fixed: the state moves to a
//! minimum eigenvector of the Bell operator, a party's effects to
//! spectral projectors of effective operators. Alternating these steps
//! descends monotonically to a local optimum; random restarts make the
//! search practical. Found values are lower bounds on the best violation,
//! checked against analytic constants where those are known.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::{
    dim_product, effective_operator, eigh, fix_phase, pure_density, CMat, CVec,
};
use crate::quantum::{born_behavior, random_projector, LocalMeasurement, QuantumStrategy};
use crate::scenario::{bell_value, BellFunctional};

/// Largest joint dimension the dense Bell operator is built for.
pub const MAX_OPERATOR_DIM: usize = 1024;
/// Spectral gaps below this count as degenerate; the update then keeps
/// the previous effects instead of picking an arbitrary eigenbasis.
pub const DEGENERACY_TOL: f64 = 1e-12;
/// Seed used when the caller does not supply one.
pub const DEFAULT_SEED: u64 = 7;

#[derive(Clone, Debug)]
pub struct SeesawConfig {
    pub restarts: usize,
    pub max_rounds: usize,
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for SeesawConfig {
    fn default() -> Self {
        SeesawConfig { restarts: 20, max_rounds: 200, convergence_tol: 1e-10, seed: DEFAULT_SEED }
    }
}

impl SeesawConfig {
    fn validate(&self) -> Result<()> {
        if self.restarts < 1 || self.max_rounds < 1 {
            return Err(Error::Structural(
                "see-saw needs at least one restart and one round".into(),
            ));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Structural(format!(
                "convergence tolerance must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SeesawResult {
    pub best_value: f64,
    pub best_strategy: QuantumStrategy,
    pub per_restart_values: Vec<f64>,
    /// Rounds spent per restart; hitting `max_rounds` means that restart
    /// did not converge to `convergence_tol`.
    pub rounds_used: Vec<usize>,
}

/// The operator whose state expectation is the functional's value:
/// `B = sum_{x,a} beta(a|x) A_1(a_1|x_1) x ... x A_N(a_N|x_N)`.
pub fn bell_operator(f: &BellFunctional, measurements: &[LocalMeasurement]) -> Result<CMat> {
    let s = f.scenario();
    if measurements.len() != s.n_parties() {
        return Err(Error::Structural(format!(
            "functional is for {} parties, got {} measurements",
            s.n_parties(),
            measurements.len()
        )));
    }
    let dims: Vec<usize> = measurements.iter().map(|m| m.dim()).collect();
    let total = dim_product(&dims);
    if total > MAX_OPERATOR_DIM {
        return Err(Error::Resource(format!(
            "joint dimension {total} exceeds the dense operator limit {MAX_OPERATOR_DIM}"
        )));
    }
    let mut b = CMat::zeros(total, total);
    for x in 0..s.vector_count() {
        for a in 0..s.vector_count() {
            let beta = f.coefficient(x, a);
            if beta == 0.0 {
                continue;
            }
            let mut term = measurements[0].effect(s.bit(x, 0), s.bit(a, 0)).clone();
            for (n, m) in measurements.iter().enumerate().skip(1) {
                term = term.kronecker(m.effect(s.bit(x, n), s.bit(a, n)));
            }
            b += term.map(|z| z * beta);
        }
    }
    Ok(b)
}

/// Best state for fixed measurements: a minimum-eigenvalue eigenvector of
/// the Bell operator, returned as a pure density matrix with its value.
pub fn state_step(f: &BellFunctional, measurements: &[LocalMeasurement]) -> Result<(CMat, f64)> {
    let b = bell_operator(f, measurements)?;
    let (vals, vecs) = eigh(&b);
    let ground = fix_phase(&CVec::from_column_slice(vecs.column(0).as_slice()));
    Ok((pure_density(&ground), vals[0]))
}

/// Best effects for one party with the state and all other parties fixed.
///
/// For each setting the two effects enter the value only through
/// `tr[D A(1|setting)]` plus a constant, with `D` an effective Hermitian
/// operator; the minimizer is the projector onto the negative eigenspace.
/// On qubits the effect is forced to rank 1 to stay in the target form,
/// and whenever the candidate does not strictly improve on the previous
/// effects (degenerate spectra in particular) the previous ones are kept.
pub fn measurement_step(
    f: &BellFunctional,
    state: &CMat,
    measurements: &[LocalMeasurement],
    party: usize,
) -> Result<LocalMeasurement> {
    let s = f.scenario();
    if measurements.len() != s.n_parties() {
        return Err(Error::Structural(format!(
            "functional is for {} parties, got {} measurements",
            s.n_parties(),
            measurements.len()
        )));
    }
    if party >= measurements.len() {
        return Err(Error::Structural(format!("party {party} out of range")));
    }
    let dims: Vec<usize> = measurements.iter().map(|m| m.dim()).collect();
    let d = dims[party];
    let mut new_effects: Vec<[CMat; 2]> = Vec::with_capacity(2);
    for setting in 0..2 {
        // Effective operators M_a with contribution tr[M_1 A(1)] + tr[M_2 A(2)].
        let mut m_ops = [CMat::zeros(d, d), CMat::zeros(d, d)];
        for x in 0..s.vector_count() {
            if s.bit(x, party) != setting {
                continue;
            }
            for a in 0..s.vector_count() {
                let beta = f.coefficient(x, a);
                if beta == 0.0 {
                    continue;
                }
                let ops: Vec<&CMat> = (0..dims.len())
                    .map(|n| measurements[n].effect(s.bit(x, n), s.bit(a, n)))
                    .collect();
                let eff = effective_operator(state, &dims, party, &ops);
                m_ops[s.bit(a, party)] += eff.map(|z| z * beta);
            }
        }
        // tr[M_2] is constant; minimize tr[(M_1 - M_2) A] over effects A.
        let diff = &m_ops[0] - &m_ops[1];
        let (vals, vecs) = eigh(&diff.map(|z| (z + z.conj()) * 0.5));
        let candidate: CMat = if d == 2 {
            // Rank-1 projector onto the smaller eigenvalue.
            let v = CVec::from_column_slice(vecs.column(0).as_slice());
            &v * v.adjoint()
        } else {
            let mut p = CMat::zeros(d, d);
            for (i, &lam) in vals.iter().enumerate() {
                if lam < 0.0 {
                    let v = CVec::from_column_slice(vecs.column(i).as_slice());
                    p += &v * v.adjoint();
                }
            }
            p
        };
        let previous = measurements[party].effect(setting, 0);
        let score = |a: &CMat| (diff.clone() * a).diagonal().iter().map(|z| z.re).sum::<f64>();
        let chosen = if score(&candidate) < score(previous) - DEGENERACY_TOL {
            candidate
        } else {
            previous.clone()
        };
        let complement = crate::linalg::identity(d) - &chosen;
        new_effects.push([chosen, complement]);
    }
    let s2 = new_effects.pop().expect("two settings");
    let s1 = new_effects.pop().expect("two settings");
    LocalMeasurement::new([s1, s2])
}

/// `tr[state B]` for the given measurements, without materializing the
/// behavior.
pub fn strategy_value(
    f: &BellFunctional,
    state: &CMat,
    measurements: &[LocalMeasurement],
) -> Result<f64> {
    let b = bell_operator(f, measurements)?;
    Ok((state * b).diagonal().iter().map(|z| z.re).sum())
}

/// Run the alternating optimization from `cfg.restarts` random projective
/// starts on the given local dimensions. Deterministic for a fixed
/// config.
pub fn seesaw(f: &BellFunctional, dims: &[usize], cfg: &SeesawConfig) -> Result<SeesawResult> {
    cfg.validate()?;
    let n = f.scenario().n_parties();
    if dims.len() != n {
        return Err(Error::Structural(format!(
            "functional is for {n} parties, got {} dimensions",
            dims.len()
        )));
    }
    if let Some(&d) = dims.iter().find(|&&d| d < 2) {
        return Err(Error::Structural(format!("local dimension {d} is too small")));
    }

    let mut per_restart_values = Vec::with_capacity(cfg.restarts);
    let mut rounds_used = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(f64, CMat, Vec<LocalMeasurement>)> = None;
    for restart in 0..cfg.restarts {
        // Independent stream per restart so results do not depend on how
        // restarts are scheduled.
        let mut rng =
            ChaCha12Rng::seed_from_u64(cfg.seed ^ (restart as u64).wrapping_mul(0x9E3779B97F4A7C15));
        let mut measurements: Vec<LocalMeasurement> = dims
            .iter()
            .map(|&d| {
                let rank = |rng: &mut ChaCha12Rng| {
                    if d == 2 {
                        1
                    } else {
                        rng.random_range(1..d)
                    }
                };
                LocalMeasurement::from_first_effects(
                    random_projector(d, rank(&mut rng), &mut rng),
                    random_projector(d, rank(&mut rng), &mut rng),
                )
            })
            .collect::<Result<_>>()?;

        let (mut state, mut value) = state_step(f, &measurements)?;
        let mut rounds = cfg.max_rounds;
        for round in 0..cfg.max_rounds {
            for party in 0..n {
                measurements[party] = measurement_step(f, &state, &measurements, party)?;
            }
            let (next_state, next_value) = state_step(f, &measurements)?;
            state = next_state;
            let improved = value - next_value;
            value = next_value;
            if improved < cfg.convergence_tol {
                rounds = round + 1;
                break;
            }
        }
        per_restart_values.push(value);
        rounds_used.push(rounds);
        if best.as_ref().map_or(true, |(bv, _, _)| value < *bv) {
            best = Some((value, state, measurements));
        }
    }
    let (best_value, state, measurements) = best.expect("at least one restart ran");
    let best_strategy = QuantumStrategy::new(state, measurements)?;
    let direct = bell_value(f, &born_behavior(&best_strategy)?)?;
    if (direct - best_value).abs() > 1e-8 {
        return Err(Error::Internal(format!(
            "optimizer value {best_value} disagrees with the behavior value {direct}"
        )));
    }
    Ok(SeesawResult { best_value, best_strategy, per_restart_values, rounds_used })
}
