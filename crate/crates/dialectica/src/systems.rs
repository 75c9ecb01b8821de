//! Specifications of dialectical, q-dialectical, and p-dialectical systems,
//! with budget-bounded validation of the definitional side conditions.
//!
//! Revising functions come in certified forms whose orbits are infinite by
//! construction (strictly increasing rules, or rules that feed into a
//! strictly increasing chain); validation still runs a budget-bounded orbit
//! scan, since explicit prefixes can override the certified tail.

use crate::codec::{atom, checked_conj, checked_disj, decode, Code, Formula, CONTRADICTION};
use crate::logic::EvalCtx;
use crate::operators::{OperatorError, OperatorHandle};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SystemsError {
    #[error("rule left the representable code range at input {input}")]
    CodeOverflow { input: Code },
    #[error("explicit chain exhausted at index {index}")]
    ChainExhausted { index: u64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

// ---------------------------------------------------------------------------
// Chains in H(∅)
// ---------------------------------------------------------------------------

/// A strictly increasing computable chain `z_0 < z_1 < ⋯`, used as the
/// acyclic tail of revising functions and as the padding sequence of the
/// transformation constructions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainGen {
    /// `z_i = p_i ∨ ¬p_i`: tautologies, so the chain lies in `H(∅)` for any
    /// operator with connectives. Growth is quadratic in `i`.
    ExcludedMiddle,
    /// `z_0 = start`, `z_{i+1} = z_i ∧ z_i` (Craig-style self-conjunction).
    SelfConj { start: Code },
    /// A finite explicit chain; exhausting it is an error.
    Explicit { values: Vec<Code> },
}

impl ChainGen {
    pub fn value(&self, i: u64) -> Result<Code, SystemsError> {
        match self {
            ChainGen::ExcludedMiddle => {
                let a = atom(i);
                a.checked_mul(5)
                    .and_then(|v| v.checked_add(1))
                    .and_then(|na| checked_disj(a, na))
                    .ok_or(SystemsError::CodeOverflow { input: i })
            }
            ChainGen::SelfConj { start } => {
                let mut v = *start;
                for _ in 0..i {
                    v = checked_conj(v, v).ok_or(SystemsError::CodeOverflow { input: v })?;
                }
                Ok(v)
            }
            ChainGen::Explicit { values } => values
                .get(i as usize)
                .copied()
                .ok_or(SystemsError::ChainExhausted { index: i }),
        }
    }

    /// The index of `code` in the chain, if it is a chain element.
    pub fn position(&self, code: Code) -> Option<u64> {
        match self {
            ChainGen::ExcludedMiddle => match decode(code) {
                Formula::Or(a, b)
                    if a % 5 == 0 && a.checked_mul(5).and_then(|v| v.checked_add(1)) == Some(b) =>
                {
                    Some(a / 5)
                }
                _ => None,
            },
            ChainGen::SelfConj { start } => {
                let mut v = *start;
                let mut i = 0u64;
                loop {
                    if v == code {
                        return Some(i);
                    }
                    if v > code {
                        return None;
                    }
                    v = checked_conj(v, v)?;
                    i += 1;
                }
            }
            ChainGen::Explicit { values } => {
                values.iter().position(|&v| v == code).map(|p| p as u64)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Proposing and revising functions
// ---------------------------------------------------------------------------

/// A total proposing function, intended to be a computable permutation;
/// validation checks injectivity on the explored domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ProposingFunction {
    /// `f_u = u`.
    Identity,
    /// `f_u = p_u` (code `5u`): proposes every atom.
    Atoms,
    /// Explicit finite prefix, then a default rule.
    Prefix { prefix: Vec<Code>, default: Box<ProposingFunction> },
    /// `f_u = inner(u - offset)`: the index shift used when a transform
    /// prepends proposals (inputs below the offset must be covered by an
    /// enclosing prefix).
    Shift { offset: u64, inner: Box<ProposingFunction> },
}

impl ProposingFunction {
    pub fn identity_after(prefix: Vec<Code>) -> Self {
        ProposingFunction::Prefix { prefix, default: Box::new(ProposingFunction::Identity) }
    }

    pub fn value(&self, u: u64) -> Result<Code, SystemsError> {
        match self {
            ProposingFunction::Identity => Ok(u),
            ProposingFunction::Atoms => {
                u.checked_mul(5).ok_or(SystemsError::CodeOverflow { input: u })
            }
            ProposingFunction::Prefix { prefix, default } => match prefix.get(u as usize) {
                Some(&c) => Ok(c),
                None => default.value(u),
            },
            ProposingFunction::Shift { offset, inner } => match u.checked_sub(*offset) {
                Some(v) => inner.value(v),
                None => Err(SystemsError::CodeOverflow { input: u }),
            },
        }
    }
}

/// A total revising function in a certified acyclic form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RevisingFunction {
    /// Follows a strictly increasing chain: `f⁻(z_i) = z_{i+1}`, and
    /// `f⁻(x) = z_0` for `x` outside the chain.
    Chain { chain: ChainGen },
    /// `f⁻(x) = ¬x` (code `5x+1`, strictly increasing).
    Neg,
    /// `f⁻(x) = p_{x+1}`: an atom not occurring in `x`, with a strictly
    /// increasing code.
    NextAtom,
    /// Explicit finite overrides on top of a certified tail.
    Table { prefix: BTreeMap<Code, Code>, fallback: Box<RevisingFunction> },
}

impl RevisingFunction {
    pub fn tautology_chain() -> Self {
        RevisingFunction::Chain { chain: ChainGen::ExcludedMiddle }
    }

    pub fn value(&self, x: Code) -> Result<Code, SystemsError> {
        match self {
            RevisingFunction::Chain { chain } => match chain.position(x) {
                Some(i) => chain.value(i + 1),
                None => chain.value(0),
            },
            RevisingFunction::Neg => {
                x.checked_mul(5).and_then(|v| v.checked_add(1)).ok_or(SystemsError::CodeOverflow { input: x })
            }
            RevisingFunction::NextAtom => x
                .checked_add(1)
                .and_then(|v| v.checked_mul(5))
                .ok_or(SystemsError::CodeOverflow { input: x }),
            RevisingFunction::Table { prefix, fallback } => match prefix.get(&x) {
                Some(&v) => Ok(v),
                None => fallback.value(x),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// System specifications
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    D,
    Q,
    P,
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemKind::D => write!(f, "d"),
            SystemKind::Q => write!(f, "q"),
            SystemKind::P => write!(f, "p"),
        }
    }
}

/// A system specification: the operator, the proposing function `f`, the
/// revising function `f⁻` (absent for dialectical systems), the
/// contradiction `c`, and the counterexample `c⁻` (q only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub operator: OperatorHandle,
    pub f: ProposingFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_minus: Option<RevisingFunction>,
    pub c: Code,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_minus: Option<Code>,
}

impl SystemSpec {
    pub fn new_d(operator: OperatorHandle, f: ProposingFunction, c: Code) -> Self {
        SystemSpec { kind: SystemKind::D, operator, f, f_minus: None, c, c_minus: None }
    }

    pub fn new_p(
        operator: OperatorHandle,
        f: ProposingFunction,
        f_minus: RevisingFunction,
        c: Code,
    ) -> Self {
        SystemSpec { kind: SystemKind::P, operator, f, f_minus: Some(f_minus), c, c_minus: None }
    }

    pub fn new_q(
        operator: OperatorHandle,
        f: ProposingFunction,
        f_minus: RevisingFunction,
        c: Code,
        c_minus: Code,
    ) -> Self {
        SystemSpec {
            kind: SystemKind::Q,
            operator,
            f,
            f_minus: Some(f_minus),
            c,
            c_minus: Some(c_minus),
        }
    }

    /// Convenience: a p-system over the pure propositional calculus with the
    /// canonical contradiction.
    pub fn trivial_p() -> Self {
        SystemSpec::new_p(
            OperatorHandle::entailment(crate::logic::EntailmentOperator::pure()),
            ProposingFunction::Atoms,
            RevisingFunction::tautology_chain(),
            CONTRADICTION,
        )
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    MissingRevisingFunction,
    MissingCounterexample,
    RevisingFunctionOnDialectical,
    /// `f(u1) = f(u2) = value` with `u1 < u2`.
    Injectivity { u1: u64, u2: u64, value: Code },
    /// The orbit of `x` under `f⁻` repeats within the budget.
    Acyclicity { x: Code, orbit_prefix: Vec<Code> },
    /// `c⁻` appears in the image of `f⁻` on the explored domain.
    CounterexampleInRange { x: Code },
    /// A rule failed to produce a value.
    RuleFailure { input: Code, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Invalid,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub violations: Vec<Violation>,
    pub unknowns: Vec<String>,
    /// Stage at which `H(∅) ≠ ∅` was witnessed, if at all.
    pub empty_witness: Option<u64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }
}

/// Budget-bounded validation of the definitional side conditions: f is
/// injective on `[0, budget)`, every `f⁻`-orbit started below the budget is
/// repetition-free within budget steps, `H(∅) ≠ ∅` is witnessed, and for
/// q-systems `c⁻` avoids the explored `f⁻`-image.
pub fn validate(
    spec: &SystemSpec,
    ctx: &mut EvalCtx,
    budget: u64,
) -> Result<ValidationReport, SystemsError> {
    let mut violations = Vec::new();
    let mut unknowns = Vec::new();

    match spec.kind {
        SystemKind::D => {
            if spec.f_minus.is_some() {
                violations.push(Violation::RevisingFunctionOnDialectical);
            }
        }
        SystemKind::P => {
            if spec.f_minus.is_none() {
                violations.push(Violation::MissingRevisingFunction);
            }
        }
        SystemKind::Q => {
            if spec.f_minus.is_none() {
                violations.push(Violation::MissingRevisingFunction);
            }
            if spec.c_minus.is_none() {
                violations.push(Violation::MissingCounterexample);
            }
        }
    }

    // Injectivity of f on [0, budget).
    let mut seen: BTreeMap<Code, u64> = BTreeMap::new();
    for u in 0..budget {
        match spec.f.value(u) {
            Ok(v) => {
                if let Some(&u1) = seen.get(&v) {
                    violations.push(Violation::Injectivity { u1, u2: u, value: v });
                } else {
                    seen.insert(v, u);
                }
            }
            Err(e) => {
                violations.push(Violation::RuleFailure { input: u, reason: e.to_string() });
                break;
            }
        }
    }

    // Orbit scans for f⁻. A rule that leaves the representable range is
    // strictly increasing up to that point, so the scan certifies no
    // repetition on what it saw.
    if let Some(fm) = &spec.f_minus {
        'outer: for x in 0..budget {
            let mut orbit = vec![x];
            let mut orbit_set: BTreeSet<Code> = orbit.iter().copied().collect();
            let mut cur = x;
            for _ in 0..budget {
                match fm.value(cur) {
                    Ok(next) => {
                        if !orbit_set.insert(next) {
                            orbit.push(next);
                            violations.push(Violation::Acyclicity { x, orbit_prefix: orbit });
                            break 'outer;
                        }
                        orbit.push(next);
                        cur = next;
                    }
                    Err(SystemsError::CodeOverflow { .. }) => break,
                    Err(SystemsError::ChainExhausted { .. }) => {
                        unknowns.push(format!(
                            "explicit chain exhausted while scanning the orbit of {x}"
                        ));
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        if let Some(cm) = spec.c_minus {
            for x in 0..budget {
                if let Ok(v) = fm.value(x) {
                    if v == cm {
                        violations.push(Violation::CounterexampleInRange { x });
                        break;
                    }
                }
            }
        }
    }

    // H(∅) ≠ ∅, semi-decided by stages.
    let empty_witness = spec.operator.empty_set_witness(ctx, budget)?;
    if empty_witness.is_none() {
        unknowns.push(format!("H(∅) ≠ ∅ not witnessed within budget {budget}"));
    }

    let verdict = if !violations.is_empty() {
        Verdict::Invalid
    } else if !unknowns.is_empty() {
        Verdict::Unknown
    } else {
        Verdict::Valid
    };
    Ok(ValidationReport { verdict, violations, unknowns, empty_witness })
}

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsistencyVerdict {
    Consistent,
    InconsistentAt(u64),
    UnknownWithinBudget,
}

/// Semi-decide consistency (`c ∉ H(∅)`, and for q also `c⁻ ∉ H(∅)`) by
/// scanning stages up to the budget. When the operator's staging settles
/// within the budget the answer is definitive.
pub fn consistency(
    spec: &SystemSpec,
    ctx: &mut EvalCtx,
    budget: u64,
) -> Result<ConsistencyVerdict, SystemsError> {
    let empty = BTreeSet::new();
    let mut targets = vec![spec.c];
    if spec.kind == SystemKind::Q {
        if let Some(cm) = spec.c_minus {
            targets.push(cm);
        }
    }
    let mut best: Option<u64> = None;
    for &t in &targets {
        if spec.operator.member(ctx, budget, &empty, t)? {
            // Witnessed: binary search the least witnessing stage.
            let (mut lo, mut hi) = (1u64, budget);
            while lo < hi {
                let mid = lo + (hi - lo) / 2;
                if spec.operator.member(ctx, mid, &empty, t)? {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            best = Some(best.map_or(lo, |b: u64| b.min(lo)));
        }
    }
    if let Some(stage) = best {
        return Ok(ConsistencyVerdict::InconsistentAt(stage));
    }
    let max_target = targets.iter().copied().max().unwrap_or(0);
    if spec.operator.settle_stage(max_target) <= budget {
        Ok(ConsistencyVerdict::Consistent)
    } else {
        Ok(ConsistencyVerdict::UnknownWithinBudget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::neg;
    use crate::operators::{Approximation, Axiom};

    #[test]
    fn chain_values_and_positions() {
        let ch = ChainGen::ExcludedMiddle;
        assert_eq!(ch.value(0).unwrap(), 14);
        for i in 0..200 {
            let v = ch.value(i).unwrap();
            assert_eq!(ch.position(v), Some(i));
            assert!(ch.value(i + 1).unwrap() > v, "chain strictly increasing");
        }
        assert_eq!(ch.position(13), None);
    }

    #[test]
    fn revising_rules_are_total_and_increasing() {
        let rules = [RevisingFunction::tautology_chain(), RevisingFunction::Neg, RevisingFunction::NextAtom];
        for rule in &rules {
            let mut cur = 3u64;
            for _ in 0..20 {
                match rule.value(cur) {
                    Ok(next) => {
                        assert_ne!(next, cur);
                        cur = next;
                    }
                    Err(SystemsError::CodeOverflow { .. }) => break,
                    Err(e) => panic!("unexpected {e}"),
                }
            }
        }
        assert_eq!(RevisingFunction::Neg.value(0).unwrap(), neg(0));
        assert_eq!(RevisingFunction::NextAtom.value(7).unwrap(), atom(8));
    }

    #[test]
    fn validate_accepts_a_plain_p_system() {
        let mut spec = SystemSpec::trivial_p();
        spec.f = ProposingFunction::Identity;
        let mut ctx = EvalCtx::new();
        let report = validate(&spec, &mut ctx, 60).unwrap();
        assert!(report.is_valid(), "{report:?}");
        assert!(report.empty_witness.is_some());
    }

    #[test]
    fn validate_flags_injectivity() {
        let mut spec = SystemSpec::trivial_p();
        spec.f = ProposingFunction::identity_after(vec![7, 7]);
        let mut ctx = EvalCtx::new();
        let report = validate(&spec, &mut ctx, 10).unwrap();
        assert_eq!(report.verdict, Verdict::Invalid);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Injectivity { u1: 0, u2: 1, value: 7 })));
    }

    #[test]
    fn validate_flags_fixed_point_revision() {
        let mut spec = SystemSpec::trivial_p();
        let mut prefix = BTreeMap::new();
        prefix.insert(4u64, 4u64);
        spec.f_minus = Some(RevisingFunction::Table {
            prefix,
            fallback: Box::new(RevisingFunction::tautology_chain()),
        });
        let mut ctx = EvalCtx::new();
        let report = validate(&spec, &mut ctx, 10).unwrap();
        assert_eq!(report.verdict, Verdict::Invalid);
        assert!(report.violations.iter().any(
            |v| matches!(v, Violation::Acyclicity { x: 4, orbit_prefix } if orbit_prefix == &vec![4, 4])
        ));
    }

    #[test]
    fn validate_flags_counterexample_in_range() {
        let mut spec = SystemSpec::trivial_p();
        spec.kind = SystemKind::Q;
        spec.c_minus = Some(RevisingFunction::tautology_chain().value(0).unwrap());
        let mut ctx = EvalCtx::new();
        let report = validate(&spec, &mut ctx, 10).unwrap();
        assert_eq!(report.verdict, Verdict::Invalid);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::CounterexampleInRange { .. })));
    }

    #[test]
    fn consistency_verdicts() {
        let mut ctx = EvalCtx::new();
        // Entailment operator, canonical c: consistent (decidable).
        let spec = SystemSpec::trivial_p();
        assert_eq!(consistency(&spec, &mut ctx, 50).unwrap(), ConsistencyVerdict::Consistent);
        // Table with ⟨13, ∅⟩ entering at stage 14.
        let approx = Approximation::from_deltas(vec![(14, vec![Axiom::new(13, [])])]);
        let spec = SystemSpec::new_d(
            OperatorHandle::Table(approx.clone()),
            ProposingFunction::Identity,
            CONTRADICTION,
        );
        assert_eq!(
            consistency(&spec, &mut ctx, 50).unwrap(),
            ConsistencyVerdict::InconsistentAt(14)
        );
        // Same table, budget 5: unknown.
        assert_eq!(
            consistency(&spec, &mut ctx, 5).unwrap(),
            ConsistencyVerdict::UnknownWithinBudget
        );
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = SystemSpec::trivial_p();
        let json = serde_json::to_string(&spec).unwrap();
        let back: SystemSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
