//! JSON file formats for every type that crosses the CLI boundary.
//!
//! One serde DTO per document kind, with conversions to and from the
//! domain types that run full validation on the way in. Matrices are
//! row-major lists of `[re, im]` pairs; settings, outcomes, parties,
//! vertex and block indices are 1-based in files, matching the label
//! convention used everywhere else. Rendering is deterministic, so equal
//! values produce byte-identical documents and documents can be hashed.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocks::{BlockDecomposition, SloccFilter};
use crate::classical::MembershipCertificate;
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, CVec};
use crate::projectivize::StrategyMixture;
use crate::quantum::{LocalMeasurement, QuantumStrategy};
use crate::reduction::Reduction;
use crate::scenario::{Behavior, BellFunctional, Scenario};
use crate::seesaw::SeesawResult;

/// Parse a JSON document, reporting parse failures with line, column and
/// byte offset, and `what` naming the expected document kind.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let offset = byte_offset(text, e.line(), e.column());
        Error::Validation(format!(
            "malformed {what} JSON at line {}, column {} (byte offset {offset}): {e}",
            e.line(),
            e.column()
        ))
    })
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut remaining = line - 1;
    let mut offset = 0usize;
    for (i, b) in text.bytes().enumerate() {
        if remaining == 0 {
            return i + column.saturating_sub(1);
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

/// Render with a trailing newline; field order is fixed by the DTOs, so
/// the output is deterministic.
pub fn render_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// SHA-256 of a behavior's canonical rendering, hex encoded. Stable
/// across runs for equal tables.
pub fn behavior_digest(b: &Behavior) -> String {
    let doc = serde_json::to_string(&BehaviorDto::from(b)).expect("behavior serializes");
    hex::encode(Sha256::digest(doc.as_bytes()))
}

fn mat_to_rows(m: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            out.push([z.re, z.im]);
        }
    }
    out
}

fn mat_from_rows(rows: usize, cols: usize, data: &[[f64; 2]], what: &str) -> Result<CMat> {
    if data.len() != rows * cols {
        return Err(Error::Validation(format!(
            "{what}: expected {rows}x{cols} = {} entries, got {}",
            rows * cols,
            data.len()
        )));
    }
    if let Some(bad) = data.iter().flatten().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("{what}: entry {bad} is not finite")));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| {
        let [re, im] = data[i * cols + j];
        c(re, im)
    }))
}

fn vec_to_rows(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

// ---------------------------------------------------------------------------
// Behaviors and functionals

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorDto {
    pub n_parties: usize,
    /// Flattened as settings-index times `2^N` plus outcome-index.
    pub probabilities: Vec<f64>,
}

impl From<&Behavior> for BehaviorDto {
    fn from(b: &Behavior) -> Self {
        BehaviorDto {
            n_parties: b.scenario().n_parties(),
            probabilities: b.table().to_vec(),
        }
    }
}

impl BehaviorDto {
    pub fn into_behavior(self) -> Result<Behavior> {
        let s = Scenario::new(self.n_parties)?;
        Behavior::new(s, self.probabilities)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalDto {
    pub n_parties: usize,
    pub coefficients: Vec<f64>,
}

impl From<&BellFunctional> for FunctionalDto {
    fn from(f: &BellFunctional) -> Self {
        FunctionalDto {
            n_parties: f.scenario().n_parties(),
            coefficients: f.coefficients().to_vec(),
        }
    }
}

impl FunctionalDto {
    pub fn into_functional(self) -> Result<BellFunctional> {
        let s = Scenario::new(self.n_parties)?;
        BellFunctional::new(s, self.coefficients)
    }
}

// ---------------------------------------------------------------------------
// Strategies

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyDto {
    pub dims: Vec<usize>,
    /// Joint-space density matrix, row-major.
    pub state: Vec<[f64; 2]>,
    /// `measurements[party][setting][outcome]`, each a square matrix on
    /// that party's space.
    pub measurements: Vec<[[Vec<[f64; 2]>; 2]; 2]>,
}

impl From<&QuantumStrategy> for StrategyDto {
    fn from(s: &QuantumStrategy) -> Self {
        StrategyDto {
            dims: s.dims().to_vec(),
            state: mat_to_rows(s.state()),
            measurements: (0..s.n_parties())
                .map(|n| {
                    let m = s.measurement(n);
                    core::array::from_fn(|x| core::array::from_fn(|a| mat_to_rows(m.effect(x, a))))
                })
                .collect(),
        }
    }
}

impl StrategyDto {
    /// Rebuild and fully validate the strategy (PSD state, valid POVMs).
    pub fn into_strategy(self) -> Result<QuantumStrategy> {
        if self.measurements.len() != self.dims.len() {
            return Err(Error::Validation(format!(
                "strategy lists {} local dimensions but {} measurements",
                self.dims.len(),
                self.measurements.len()
            )));
        }
        let total: usize = self.dims.iter().product();
        let state = mat_from_rows(total, total, &self.state, "state")?;
        let mut measurements = Vec::with_capacity(self.dims.len());
        for (n, (&d, setting_data)) in self.dims.iter().zip(&self.measurements).enumerate() {
            let eff = |x: usize, a: usize| {
                mat_from_rows(d, d, &setting_data[x][a], &format!(
                    "party {} setting {} outcome {}",
                    n + 1,
                    x + 1,
                    a + 1
                ))
            };
            measurements.push(LocalMeasurement::new([
                [eff(0, 0)?, eff(0, 1)?],
                [eff(1, 0)?, eff(1, 1)?],
            ])?);
        }
        let strategy = QuantumStrategy::new(state, measurements)?;
        strategy.validate()?;
        Ok(strategy)
    }
}

// ---------------------------------------------------------------------------
// Classical membership certificates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CertificateDto {
    /// Convex combination of deterministic strategies reproducing the
    /// behavior; `slack` is the reconstruction residual.
    Member { weights: Vec<VertexWeight>, slack: f64 },
    /// Functional non-negative on every deterministic strategy and
    /// negative on the behavior; `slack` is the separation `-value`.
    NonMember { separating_functional: FunctionalDto, value: f64, slack: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexWeight {
    /// 1-based index into the base-4 vertex enumeration.
    pub vertex: usize,
    pub weight: f64,
}

impl From<&MembershipCertificate> for CertificateDto {
    fn from(cert: &MembershipCertificate) -> Self {
        match cert {
            MembershipCertificate::Member { weights, reconstruction_residual } => {
                CertificateDto::Member {
                    weights: weights
                        .iter()
                        .map(|&(v, w)| VertexWeight { vertex: v + 1, weight: w })
                        .collect(),
                    slack: *reconstruction_residual,
                }
            }
            MembershipCertificate::NonMember { functional, value } => CertificateDto::NonMember {
                separating_functional: functional.into(),
                value: *value,
                slack: -*value,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Projectivization mixtures

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureDto {
    pub weights: Vec<f64>,
    pub strategies: Vec<StrategyDto>,
}

impl From<&StrategyMixture> for MixtureDto {
    fn from(m: &StrategyMixture) -> Self {
        MixtureDto {
            weights: m.branches.iter().map(|b| b.weight).collect(),
            strategies: m.branches.iter().map(|b| (&b.strategy).into()).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Reductions

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionStepDto {
    /// 1-based party index.
    pub party: usize,
    /// Outcome labels under settings 1 and 2 along the removed vector.
    pub outcomes: [u8; 2],
    /// Unit vector in the party's original space.
    pub removed_vector: Vec<[f64; 2]>,
    pub weight: f64,
    pub absolute_weight: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub factor_behavior: Option<BehaviorDto>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionDto {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub reduced: Option<StrategyDto>,
    pub steps: Vec<ReductionStepDto>,
    pub residual_weight: f64,
}

impl From<&Reduction> for ReductionDto {
    fn from(r: &Reduction) -> Self {
        ReductionDto {
            reduced: r.reduced.as_ref().map(StrategyDto::from),
            steps: r
                .steps
                .iter()
                .map(|s| ReductionStepDto {
                    party: s.party + 1,
                    outcomes: [s.outcomes.0, s.outcomes.1],
                    removed_vector: vec_to_rows(&s.removed_vector),
                    weight: s.weight,
                    absolute_weight: s.absolute_weight,
                    factor_behavior: s.factor_behavior.as_ref().map(BehaviorDto::from),
                })
                .collect(),
            residual_weight: r.residual_weight,
        }
    }
}

// ---------------------------------------------------------------------------
// Block decompositions and filters

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockDto {
    /// d x 2 frame, row-major.
    pub frame: Vec<[f64; 2]>,
    pub angle: f64,
    pub eigenvalue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartyBlocksDto {
    /// 1-based party index.
    pub party: usize,
    pub dim: usize,
    pub blocks: Vec<BlockDto>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionDto {
    pub blocks: Vec<PartyBlocksDto>,
    /// Keyed by comma-joined 1-based block indices, e.g. `"1,2"`. Every
    /// combination appears.
    pub weights: BTreeMap<String, f64>,
    /// Same keys, only combinations whose weight cleared the cutoff.
    pub qubit_strategies: BTreeMap<String, StrategyDto>,
    pub reconstruction_residual: f64,
}

pub(crate) fn component_key(indices: &[usize]) -> String {
    indices.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(",")
}

impl From<&BlockDecomposition> for DecompositionDto {
    fn from(d: &BlockDecomposition) -> Self {
        let blocks = d
            .party_blocks
            .iter()
            .map(|pb| PartyBlocksDto {
                party: pb.party + 1,
                dim: pb.dim,
                blocks: pb
                    .blocks
                    .iter()
                    .map(|b| BlockDto {
                        frame: mat_to_rows(&b.frame),
                        angle: b.angle,
                        eigenvalue: b.eigenvalue,
                    })
                    .collect(),
            })
            .collect();
        let mut weights = BTreeMap::new();
        let mut qubit_strategies = BTreeMap::new();
        for (i, comp) in d.components.iter().enumerate() {
            let key = component_key(&comp.indices);
            weights.insert(key.clone(), comp.weight);
            if comp.qubit_state.is_some() {
                let strat = d
                    .component_strategy(i)
                    .expect("index in range")
                    .expect("retained component");
                qubit_strategies.insert(key, (&strat).into());
            }
        }
        DecompositionDto {
            blocks,
            weights,
            qubit_strategies,
            reconstruction_residual: d.reconstruction_residual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDto {
    /// One rank-2 projector per party, in the original local spaces.
    pub projectors: Vec<Vec<[f64; 2]>>,
    /// 1-based block index selected at each party.
    pub selected: Vec<usize>,
    pub success_probability: f64,
    /// Post-filter N-qubit state, row-major.
    pub filtered_state: Vec<[f64; 2]>,
    pub filtered_strategy: StrategyDto,
    pub original_value: f64,
    pub filtered_value: f64,
}

impl From<&SloccFilter> for FilterDto {
    fn from(f: &SloccFilter) -> Self {
        FilterDto {
            projectors: f.projectors.iter().map(mat_to_rows).collect(),
            selected: f.selected.iter().map(|k| k + 1).collect(),
            success_probability: f.success_probability,
            filtered_state: mat_to_rows(&f.filtered_state),
            filtered_strategy: (&f.filtered_strategy).into(),
            original_value: f.original_value,
            filtered_value: f.filtered_value,
        }
    }
}

// ---------------------------------------------------------------------------
// See-saw results

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeesawResultDto {
    pub best_value: f64,
    pub best_strategy: StrategyDto,
    pub per_restart_values: Vec<f64>,
    pub rounds_used: Vec<usize>,
}

impl From<&SeesawResult> for SeesawResultDto {
    fn from(r: &SeesawResult) -> Self {
        SeesawResultDto {
            best_value: r.best_value,
            best_strategy: (&r.best_strategy).into(),
            per_restart_values: r.per_restart_values.clone(),
            rounds_used: r.rounds_used.clone(),
        }
    }
}
