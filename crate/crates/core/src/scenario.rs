//! Core bookkeeping for the N-party scenario with two settings and two
//! outcomes per site: behaviors, full correlators, and Bell functionals.
//!
//! Conventions used throughout the crate:
//!
//! * Settings and outcomes carry the labels 1 and 2. The spin value of an
//!   outcome is `s(a) = (-1)^a`, so outcome 1 maps to -1 and outcome 2 to +1.
//! * A settings or outcomes vector `v = (v_1, …, v_N)` is linearized with
//!   party 1 most significant: `index(v) = sum_n (v_n - 1) * 2^(N-n)`.
//! * Behavior and functional tables are stored flat at
//!   `index(x) * 2^N + index(a)`.
//! * Bell functionals are kept in the homogeneous normal form in which every
//!   classical behavior evaluates to a non-negative number, so a negative
//!   value certifies a violation. [`BellFunctional::from_upper_bound`]
//!   converts the familiar "correlator expression bounded by beta" shape
//!   into this form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities may undershoot 0 or overshoot 1 by this much.
pub const PROB_RANGE_TOL: f64 = 1e-12;
/// Per-setting normalization tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Correlators may leave [-1, 1] by this much.
pub const CORRELATOR_TOL: f64 = 1e-9;

/// Table sizes grow as 16^N; this guard keeps allocations sane.
pub const MAX_PARTIES: usize = 12;

/// Number of parties plus the derived index arithmetic. Settings and
/// outcomes per site are fixed at two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    n_parties: usize,
}

impl Scenario {
    pub fn new(n_parties: usize) -> Result<Self> {
        if n_parties == 0 {
            return Err(Error::Structural("scenario requires at least one party".into()));
        }
        if n_parties > MAX_PARTIES {
            return Err(Error::Resource(format!(
                "scenario with {n_parties} parties exceeds the guard of {MAX_PARTIES}"
            )));
        }
        Ok(Scenario { n_parties })
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    /// Number of distinct settings vectors; outcomes vectors have the same count.
    pub fn vector_count(&self) -> usize {
        1 << self.n_parties
    }

    /// Length of a flat behavior or functional table.
    pub fn table_len(&self) -> usize {
        self.vector_count() * self.vector_count()
    }

    /// Component of a linearized vector at `party` (0-based), as a bit:
    /// 0 stands for label 1 and 1 for label 2.
    pub fn bit(&self, index: usize, party: usize) -> usize {
        (index >> (self.n_parties - 1 - party)) & 1
    }

    pub fn flat(&self, x_index: usize, a_index: usize) -> usize {
        x_index * self.vector_count() + a_index
    }

    /// Linearize a vector of labels in {1, 2}.
    pub fn pack_labels(&self, labels: &[u8]) -> Result<usize> {
        if labels.len() != self.n_parties {
            return Err(Error::Structural(format!(
                "expected {} labels, got {}",
                self.n_parties,
                labels.len()
            )));
        }
        let mut idx = 0usize;
        for &l in labels {
            if l != 1 && l != 2 {
                return Err(Error::Structural(format!("label {l} is not 1 or 2")));
            }
            idx = idx * 2 + (l as usize - 1);
        }
        Ok(idx)
    }

    pub fn unpack_labels(&self, index: usize) -> Vec<u8> {
        (0..self.n_parties).map(|p| self.bit(index, p) as u8 + 1).collect()
    }

    /// Parity sign `prod_n s(a_n) = (-1)^(sum_n a_n)` of an outcomes vector.
    pub fn outcome_sign(&self, a_index: usize) -> f64 {
        let ones = self.n_parties as u32 + (a_index as u32).count_ones();
        if ones % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// One local deterministic assignment: an outcome label for each setting of
/// each party. These are the vertices of the classical polytope.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeterministicStrategy {
    /// `outcomes[party][setting]` with 0-based indices holding labels 1 or 2.
    pub outcomes: Vec<[u8; 2]>,
}

impl DeterministicStrategy {
    pub fn new(outcomes: Vec<[u8; 2]>) -> Result<Self> {
        for (p, pair) in outcomes.iter().enumerate() {
            for &o in pair {
                if o != 1 && o != 2 {
                    return Err(Error::Structural(format!(
                        "party {p}: outcome label {o} is not 1 or 2"
                    )));
                }
            }
        }
        Ok(DeterministicStrategy { outcomes })
    }

    /// Enumeration index: party 0 most significant, each party contributing
    /// a base-4 digit `(o_1 - 1) * 2 + (o_2 - 1)`.
    pub fn index(&self) -> usize {
        self.outcomes
            .iter()
            .fold(0, |acc, o| acc * 4 + (o[0] as usize - 1) * 2 + (o[1] as usize - 1))
    }

    pub fn from_index(scenario: &Scenario, mut index: usize) -> Self {
        let n = scenario.n_parties();
        let mut outcomes = vec![[1u8, 1u8]; n];
        for p in (0..n).rev() {
            let digit = index % 4;
            index /= 4;
            outcomes[p] = [(digit / 2) as u8 + 1, (digit % 2) as u8 + 1];
        }
        DeterministicStrategy { outcomes }
    }

    /// Outcome index produced under a given settings index.
    pub fn response(&self, scenario: &Scenario, x_index: usize) -> usize {
        let mut a = 0usize;
        for p in 0..scenario.n_parties() {
            let x = scenario.bit(x_index, p);
            a = a * 2 + (self.outcomes[p][x] as usize - 1);
        }
        a
    }
}

/// A conditional probability table `P(a|x)` over all settings and outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    table: Vec<f64>,
}

/// One finding of [`Behavior::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ValidationIssue {
    ProbabilityOutOfRange {
        settings: Vec<u8>,
        outcomes: Vec<u8>,
        value: f64,
        /// Distance past the allowed range.
        excess: f64,
    },
    NotNormalized {
        settings: Vec<u8>,
        sum: f64,
        residual: f64,
    },
    NotFinite {
        settings: Vec<u8>,
        outcomes: Vec<u8>,
        value: f64,
    },
}

/// Everything [`Behavior::validate`] found, or nothing if the table is a
/// valid behavior.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let mut lines: Vec<String> = Vec::new();
            for issue in self.issues.iter().take(4) {
                lines.push(match issue {
                    ValidationIssue::ProbabilityOutOfRange { settings, outcomes, value, excess } => {
                        format!(
                            "P({outcomes:?}|{settings:?}) = {value} leaves [0,1] by {excess:.3e}"
                        )
                    }
                    ValidationIssue::NotNormalized { settings, sum, residual } => {
                        format!("sum over outcomes at x = {settings:?} is {sum} (residual {residual:.3e})")
                    }
                    ValidationIssue::NotFinite { settings, outcomes, value } => {
                        format!("P({outcomes:?}|{settings:?}) = {value} is not finite")
                    }
                });
            }
            if self.issues.len() > 4 {
                lines.push(format!("… and {} more", self.issues.len() - 4));
            }
            Err(Error::Validation(format!("behavior invalid: {}", lines.join("; "))))
        }
    }
}

impl Behavior {
    /// Wrap a flat table; only the length is checked here, see
    /// [`Behavior::validate`] for the probabilistic invariants.
    pub fn new(scenario: Scenario, table: Vec<f64>) -> Result<Self> {
        if table.len() != scenario.table_len() {
            return Err(Error::Structural(format!(
                "behavior table for {} parties must have {} entries, got {}",
                scenario.n_parties(),
                scenario.table_len(),
                table.len()
            )));
        }
        Ok(Behavior { scenario, table })
    }

    pub fn from_fn(scenario: Scenario, f: impl Fn(usize, usize) -> f64) -> Self {
        let v = scenario.vector_count();
        let mut table = vec![0.0; scenario.table_len()];
        for x in 0..v {
            for a in 0..v {
                table[scenario.flat(x, a)] = f(x, a);
            }
        }
        Behavior { scenario, table }
    }

    pub fn uniform(scenario: Scenario) -> Self {
        let p = 1.0 / scenario.vector_count() as f64;
        Behavior { table: vec![p; scenario.table_len()], scenario }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn prob(&self, x_index: usize, a_index: usize) -> f64 {
        self.table[self.scenario.flat(x_index, a_index)]
    }

    /// Check range and normalization within the documented tolerances.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let v = self.scenario.vector_count();
        for x in 0..v {
            let mut sum = 0.0;
            for a in 0..v {
                let p = self.prob(x, a);
                if !p.is_finite() {
                    issues.push(ValidationIssue::NotFinite {
                        settings: self.scenario.unpack_labels(x),
                        outcomes: self.scenario.unpack_labels(a),
                        value: p,
                    });
                    continue;
                }
                let excess = (-p).max(p - 1.0);
                if excess > PROB_RANGE_TOL {
                    issues.push(ValidationIssue::ProbabilityOutOfRange {
                        settings: self.scenario.unpack_labels(x),
                        outcomes: self.scenario.unpack_labels(a),
                        value: p,
                        excess,
                    });
                }
                sum += p;
            }
            let residual = (sum - 1.0).abs();
            if !sum.is_finite() || residual > NORMALIZATION_TOL {
                issues.push(ValidationIssue::NotNormalized {
                    settings: self.scenario.unpack_labels(x),
                    sum,
                    residual,
                });
            }
        }
        ValidationReport { issues }
    }

    pub fn ensure_valid(&self) -> Result<()> {
        self.validate().into_result()
    }

    /// Convex combination. Weights must be non-negative and sum to one
    /// within the normalization tolerance.
    pub fn mix(parts: &[(f64, &Behavior)]) -> Result<Behavior> {
        let scenario = *parts
            .first()
            .ok_or_else(|| Error::Structural("cannot mix an empty list of behaviors".into()))?
            .1
            .scenario();
        let mut wsum = 0.0;
        let mut table = vec![0.0; scenario.table_len()];
        for (w, b) in parts {
            if *b.scenario() != scenario {
                return Err(Error::Structural("mixing behaviors over different scenarios".into()));
            }
            if *w < -PROB_RANGE_TOL {
                return Err(Error::Structural(format!("negative mixing weight {w}")));
            }
            wsum += w;
            for (t, s) in table.iter_mut().zip(b.table.iter()) {
                *t += w * s;
            }
        }
        if (wsum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Structural(format!("mixing weights sum to {wsum}, expected 1")));
        }
        Behavior::new(scenario, table)
    }

    pub fn max_abs_diff(&self, other: &Behavior) -> f64 {
        self.table
            .iter()
            .zip(other.table.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The behavior of one deterministic strategy: a 0/1 table.
pub fn deterministic_behavior(scenario: &Scenario, strategy: &DeterministicStrategy) -> Result<Behavior> {
    if strategy.outcomes.len() != scenario.n_parties() {
        return Err(Error::Structural(format!(
            "strategy covers {} parties, scenario has {}",
            strategy.outcomes.len(),
            scenario.n_parties()
        )));
    }
    Ok(Behavior::from_fn(*scenario, |x, a| {
        if strategy.response(scenario, x) == a {
            1.0
        } else {
            0.0
        }
    }))
}

/// Full correlators `C(x) = sum_a prod_n s(a_n) P(a|x)`, one per settings
/// vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FullCorrelation {
    scenario: Scenario,
    values: Vec<f64>,
}

impl FullCorrelation {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x_index: usize) -> f64 {
        self.values[x_index]
    }
}

/// Correlators of a behavior. The behavior is validated first; the output is
/// then automatically inside `[-1, 1]` up to tolerance.
pub fn correlators(behavior: &Behavior) -> Result<FullCorrelation> {
    behavior.ensure_valid()?;
    let s = *behavior.scenario();
    let v = s.vector_count();
    let mut values = vec![0.0; v];
    for (x, value) in values.iter_mut().enumerate() {
        *value = (0..v).map(|a| s.outcome_sign(a) * behavior.prob(x, a)).sum();
        if value.abs() > 1.0 + CORRELATOR_TOL {
            return Err(Error::Internal(format!(
                "correlator at x = {:?} is {value}, outside [-1, 1]",
                s.unpack_labels(x)
            )));
        }
    }
    Ok(FullCorrelation { scenario: s, values })
}

/// A linear functional on behaviors, stored as a coefficient per table
/// entry. By convention functionals are normalized so that deterministic
/// (and hence all classical) behaviors evaluate to a non-negative number.
#[derive(Clone, Debug, PartialEq)]
pub struct BellFunctional {
    scenario: Scenario,
    coefficients: Vec<f64>,
}

impl BellFunctional {
    pub fn new(scenario: Scenario, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != scenario.table_len() {
            return Err(Error::Structural(format!(
                "functional for {} parties must have {} coefficients, got {}",
                scenario.n_parties(),
                scenario.table_len(),
                coefficients.len()
            )));
        }
        if let Some(bad) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(Error::Structural(format!("functional coefficient {bad} is not finite")));
        }
        Ok(BellFunctional { scenario, coefficients })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, x_index: usize, a_index: usize) -> f64 {
        self.coefficients[self.scenario.flat(x_index, a_index)]
    }

    /// Functional acting on correlators only: `sum_x w(x) C(x)` expanded to
    /// the probability table.
    pub fn from_correlator_weights(scenario: Scenario, weights: &[f64]) -> Result<Self> {
        if weights.len() != scenario.vector_count() {
            return Err(Error::Structural(format!(
                "expected {} correlator weights, got {}",
                scenario.vector_count(),
                weights.len()
            )));
        }
        let f = BellFunctional::new(
            scenario,
            (0..scenario.table_len())
                .map(|i| {
                    let x = i / scenario.vector_count();
                    let a = i % scenario.vector_count();
                    weights[x] * scenario.outcome_sign(a)
                })
                .collect(),
        )?;
        Ok(f)
    }

    /// Convert "`sum_x w(x) C(x) <= bound` for classical behaviors" into the
    /// homogeneous non-negative form: the result evaluates to
    /// `bound - sum_x w(x) C(x)` on every behavior.
    pub fn from_upper_bound(scenario: Scenario, weights: &[f64], bound: f64) -> Result<Self> {
        let raw = BellFunctional::from_correlator_weights(scenario, weights)?;
        let shift = bound / scenario.vector_count() as f64;
        BellFunctional::new(
            scenario,
            raw.coefficients.iter().map(|c| shift - c).collect(),
        )
    }

    /// Add `c / 2^N` to every coefficient, shifting all values by `c` while
    /// preserving differences. Used to renormalize separating functionals.
    pub fn shift_uniform(&self, c: f64) -> Self {
        let delta = c / self.scenario.vector_count() as f64;
        BellFunctional {
            scenario: self.scenario,
            coefficients: self.coefficients.iter().map(|v| v + delta).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        BellFunctional {
            scenario: self.scenario,
            coefficients: self.coefficients.iter().map(|v| v * s).collect(),
        }
    }

    /// Value on a deterministic strategy without materializing its behavior.
    pub fn value_on_strategy(&self, strategy: &DeterministicStrategy) -> f64 {
        let s = self.scenario;
        (0..s.vector_count()).map(|x| self.coefficient(x, strategy.response(&s, x))).sum()
    }
}

/// Evaluate a functional on a behavior. The behavior is validated; scenario
/// mismatch is a structural error.
pub fn bell_value(functional: &BellFunctional, behavior: &Behavior) -> Result<f64> {
    if functional.scenario() != behavior.scenario() {
        return Err(Error::Structural(format!(
            "functional is over {} parties, behavior over {}",
            functional.scenario().n_parties(),
            behavior.scenario().n_parties()
        )));
    }
    behavior.ensure_valid()?;
    Ok(functional
        .coefficients
        .iter()
        .zip(behavior.table().iter())
        .map(|(c, p)| c * p)
        .sum())
}


#[cfg(test)]
pub(crate) use tests::{chsh, pr_box};
