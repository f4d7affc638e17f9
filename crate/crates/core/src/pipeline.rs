//! End-to-end decomposition of a strategy against a Bell functional.
//!
//! [`run_pipeline`] chains the stages the other modules provide:
//! projectivize the measurements, strip locally deterministic directions
//! from every projective branch, compress each overlap-free remainder
//! onto its two-dimensional blocks, and evaluate the functional on every
//! term of the resulting mixture. The report lists each term's weight
//! and value, names the most violating one, and, when that term is a
//! block component, summarizes the local filter that concentrates the
//! violation on it.
//!
//! The report is a view over the stage outputs. Every number in it is
//! copied verbatim from the stage that produced it, so chaining the
//! stages by hand on the same inputs gives identical values.

use serde::{Deserialize, Serialize};

use crate::blocks::{compress, MONOTONE_SLACK};
use crate::classical::{classical_bound, is_classical, MembershipCertificate};
use crate::error::{Error, Result};
use crate::json::{behavior_digest, component_key};
use crate::projectivize::projectivize_strategy;
use crate::quantum::{born_behavior, QuantumStrategy};
use crate::reduction::strip_shared_vectors;
use crate::scenario::{bell_value, BellFunctional};

/// The weighted sum of all retained component behaviors must rebuild the
/// input behavior to this max-entry residual, or the run fails.
pub const RECONSTRUCTION_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    /// Locally deterministic term stripped off during reduction.
    Factor,
    /// Product of two-dimensional blocks found by compression.
    Block,
}

/// One term of the final mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineComponent {
    pub kind: ComponentKind,
    /// 1-based projective branch the term belongs to.
    pub branch: usize,
    /// The stripped party with its outcome labels, or the 1-based block
    /// indices, as text.
    pub label: String,
    /// Share of the overall mixture: branch weight times the term's
    /// weight inside the branch.
    pub weight: f64,
    /// Functional value of the term's behavior.
    pub value: f64,
}

/// Per-branch stage counters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub weight: f64,
    pub reduction_steps: usize,
    /// In-branch mass left after stripping, carried by the blocks.
    pub residual_weight: f64,
    /// Number of blocks per party of the reduced strategy; empty when
    /// stripping consumed the branch entirely.
    pub block_counts: Vec<usize>,
}

/// The filter onto the most violating block component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub branch: usize,
    /// 1-based selected block per party.
    pub blocks: Vec<usize>,
    /// Overall probability of obtaining this component from the input:
    /// branch weight times the in-branch success probability.
    pub success_probability: f64,
    pub filtered_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellValues {
    pub original: f64,
    /// Lowest value among block components; absent when stripping left
    /// no blocks anywhere.
    pub best_block: Option<f64>,
    /// Minimum of the functional over deterministic strategies; absent
    /// when the scenario exceeds the enumeration guard.
    pub classical_bound: Option<f64>,
}

/// Everything an end-to-end run produced, as plain numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_parties: usize,
    pub dims: Vec<usize>,
    /// SHA-256 of the input's behavior in compact JSON form.
    pub behavior_digest: String,
    /// `"member"` or `"non_member"`; `None` when the membership program
    /// exceeds its resource guard.
    pub classical_certificate: Option<String>,
    pub branches: Vec<BranchSummary>,
    /// All retained mixture terms: branches in order, stripped factors
    /// before blocks, blocks in index order.
    pub components: Vec<PipelineComponent>,
    /// Lowest-value component, earliest on ties. When this is a stripped
    /// factor rather than a block, no filter is reported and this field
    /// is the headline result.
    pub most_violating: PipelineComponent,
    /// Max-entry distance between the weighted component behaviors and
    /// the input behavior.
    pub reconstruction_residual: f64,
    pub bell_values: BellValues,
    /// Present when the input violates and the most violating component
    /// is a block.
    pub filter: Option<FilterSummary>,
    /// Always 0 in a written report; failed runs never produce one.
    pub exit_status: i32,
}

impl PipelineReport {
    /// Plain-text rendering for the terminal.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        out.push_str(&format!(
            "input: {} parties, dims [{}], behavior sha256 {}\n",
            self.n_parties,
            dims.join(", "),
            &self.behavior_digest[..12],
        ));
        out.push_str(&format!(
            "classical membership: {}\n",
            self.classical_certificate.as_deref().unwrap_or("skipped (resource guard)")
        ));
        for (i, b) in self.branches.iter().enumerate() {
            let blocks = if b.block_counts.is_empty() {
                "fully factorized".to_string()
            } else {
                let counts: Vec<String> = b.block_counts.iter().map(|c| c.to_string()).collect();
                format!("blocks per party [{}]", counts.join(", "))
            };
            out.push_str(&format!(
                "branch {} (weight {:.6}): {} stripped, residual weight {:.6}, {}\n",
                i + 1,
                b.weight,
                b.reduction_steps,
                b.residual_weight,
                blocks,
            ));
        }
        out.push_str("components:\n");
        for c in &self.components {
            let kind = match c.kind {
                ComponentKind::Factor => "factor",
                ComponentKind::Block => "block",
            };
            out.push_str(&format!(
                "  [{kind}] branch {}, {}: weight {:.6}, value {:+.6}\n",
                c.branch, c.label, c.weight, c.value,
            ));
        }
        out.push_str(&format!(
            "values: original {:+.6}, best block {}, classical bound {}\n",
            self.bell_values.original,
            self.bell_values
                .best_block
                .map_or("none".to_string(), |v| format!("{v:+.6}")),
            self.bell_values
                .classical_bound
                .map_or("skipped".to_string(), |v| format!("{v:+.6}")),
        ));
        let kind = match self.most_violating.kind {
            ComponentKind::Factor => "factor",
            ComponentKind::Block => "block",
        };
        out.push_str(&format!(
            "most violating: {kind} in branch {}, {} (value {:+.6})\n",
            self.most_violating.branch, self.most_violating.label, self.most_violating.value,
        ));
        match &self.filter {
            Some(f) => out.push_str(&format!(
                "filter: branch {}, blocks {}, success probability {:.6}, filtered value {:+.6}\n",
                f.branch,
                f.blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","),
                f.success_probability,
                f.filtered_value,
            )),
            None => out.push_str("filter: none\n"),
        }
        out.push_str(&format!(
            "reconstruction residual: {:.3e}\n",
            self.reconstruction_residual
        ));
        out
    }
}

/// Decompose `strategy` into deterministic factors and block components
/// and evaluate `functional` on every term.
///
/// Stages run in a fixed order. The measurements are projectivized into
/// a mixture of projective branches; each branch is stripped of shared
/// range directions, the overlap-free remainder is compressed onto its
/// blocks, and each retained term is evaluated. The weighted terms must
/// rebuild the input behavior within [`RECONSTRUCTION_TOL`] and their
/// weighted values must match the mixture value, otherwise the run fails
/// instead of returning a misleading report.
pub fn run_pipeline(
    strategy: &QuantumStrategy,
    functional: &BellFunctional,
) -> Result<PipelineReport> {
    strategy.validate()?;
    if functional.scenario().n_parties() != strategy.n_parties() {
        return Err(Error::Structural(format!(
            "functional is for {} parties, strategy has {}",
            functional.scenario().n_parties(),
            strategy.n_parties()
        )));
    }

    let original = born_behavior(strategy)?;
    let original_value = bell_value(functional, &original)?;
    let digest = behavior_digest(&original);

    // Membership and the classical bound are enumeration-limited; a
    // refused size is reported as absent, any other failure is real.
    let classical_certificate = match is_classical(&original) {
        Ok(MembershipCertificate::Member { .. }) => Some("member".to_string()),
        Ok(MembershipCertificate::NonMember { .. }) => Some("non_member".to_string()),
        Err(Error::Resource(_)) => None,
        Err(e) => return Err(e),
    };
    let bound = match classical_bound(functional) {
        Ok(b) => Some(b.value),
        Err(Error::Resource(_)) => None,
        Err(e) => return Err(e),
    };

    let mixture = projectivize_strategy(strategy)?;
    let mut branches = Vec::with_capacity(mixture.branches.len());
    let mut components: Vec<PipelineComponent> = Vec::new();
    let mut accum = vec![0.0f64; original.table().len()];
    // Best block across branches: (component list index, branch, 0-based
    // blocks, overall weight, value).
    let mut best_block: Option<(usize, usize, Vec<usize>, f64, f64)> = None;

    for (bi, branch) in mixture.branches.iter().enumerate() {
        let reduction = strip_shared_vectors(&branch.strategy)?;
        for step in &reduction.steps {
            let Some(behavior) = &step.factor_behavior else { continue };
            let weight = branch.weight * step.absolute_weight;
            let value = bell_value(functional, behavior)?;
            for (acc, p) in accum.iter_mut().zip(behavior.table()) {
                *acc += weight * p;
            }
            components.push(PipelineComponent {
                kind: ComponentKind::Factor,
                branch: bi + 1,
                label: format!(
                    "party {}, outcomes ({}, {})",
                    step.party + 1,
                    step.outcomes.0,
                    step.outcomes.1
                ),
                weight,
                value,
            });
        }

        let mut block_counts = Vec::new();
        if let Some(reduced) = &reduction.reduced {
            let decomposition = compress(reduced)?;
            block_counts = decomposition.party_blocks.iter().map(|pb| pb.count()).collect();
            for (ci, comp) in decomposition.retained() {
                let sub = decomposition.component_strategy(ci)?.expect("retained component");
                let behavior = born_behavior(&sub)?;
                let weight = branch.weight * reduction.residual_weight * comp.weight;
                let value = bell_value(functional, &behavior)?;
                for (acc, p) in accum.iter_mut().zip(behavior.table()) {
                    *acc += weight * p;
                }
                let better = best_block.as_ref().map_or(true, |&(.., bv)| value < bv);
                if better {
                    best_block =
                        Some((components.len(), bi + 1, comp.indices.clone(), weight, value));
                }
                components.push(PipelineComponent {
                    kind: ComponentKind::Block,
                    branch: bi + 1,
                    label: format!("blocks {}", component_key(&comp.indices)),
                    weight,
                    value,
                });
            }
        }
        branches.push(BranchSummary {
            weight: branch.weight,
            reduction_steps: reduction.steps.len(),
            residual_weight: reduction.residual_weight,
            block_counts,
        });
    }

    let reconstruction_residual = accum
        .iter()
        .zip(original.table())
        .map(|(a, p)| (a - p).abs())
        .fold(0.0, f64::max);
    if reconstruction_residual > RECONSTRUCTION_TOL {
        return Err(Error::Numerical(format!(
            "decomposition rebuilds the behavior only to {reconstruction_residual:.3e} \
             (tolerance {RECONSTRUCTION_TOL:.0e})"
        )));
    }

    // The weighted component values and the mixture value differ by at
    // most the functional's 1-norm times the reconstruction residual
    // (plus retention dust), so a larger gap is a bug.
    let weighted: f64 = components.iter().map(|c| c.weight * c.value).sum();
    let scale: f64 = functional.coefficients().iter().map(|c| c.abs()).sum();
    let accounting_slack = scale * (reconstruction_residual + 1e-9) + MONOTONE_SLACK;
    if (weighted - original_value).abs() > accounting_slack {
        return Err(Error::Internal(format!(
            "component values sum to {weighted:+.9} but the mixture evaluates to \
             {original_value:+.9}"
        )));
    }

    if components.is_empty() {
        return Err(Error::Internal(
            "no component of the mixture cleared the retention cutoffs".into(),
        ));
    }
    // Lowest value wins, earliest on ties.
    let mut most_idx = 0usize;
    for (i, c) in components.iter().enumerate().skip(1) {
        if c.value < components[most_idx].value {
            most_idx = i;
        }
    }
    if components[most_idx].value > original_value + accounting_slack {
        return Err(Error::Internal(format!(
            "best component value {:+.9} exceeds the mixture value {original_value:+.9}, \
             which convexity forbids",
            components[most_idx].value
        )));
    }
    let most_violating = components[most_idx].clone();

    let best_block_value = best_block.as_ref().map(|&(.., v)| v);
    let filter = match best_block {
        Some((idx, branch, ref blocks, weight, value))
            if original_value < 0.0 && idx == most_idx =>
        {
            Some(FilterSummary {
                branch,
                blocks: blocks.iter().map(|&k| k + 1).collect(),
                success_probability: weight,
                filtered_value: value,
            })
        }
        _ => None,
    };

    Ok(PipelineReport {
        n_parties: strategy.n_parties(),
        dims: strategy.dims().to_vec(),
        behavior_digest: digest,
        classical_certificate,
        branches,
        components,
        most_violating,
        reconstruction_residual,
        bell_values: BellValues {
            original: original_value,
            best_block: best_block_value,
            classical_bound: bound,
        },
        filter,
        exit_status: 0,
    })
}
