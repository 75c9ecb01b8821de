//! Enumeration operators as staged axiom tables, closure-operator completion,
//! and good approximations.
//!
//! An approximation is a monotone stage-indexed family of finite axiom sets
//! `H_s`; `goodify` normalizes it (axiom codes below the stage, identity
//! axioms) and closes each stage under chaining, so that every stage is
//! itself an algebraic closure operator while the limit operator is
//! untouched.

use crate::codec::Code;
use crate::logic::{EntailmentOperator, EvalCtx, LogicError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error("mentioned universe has {n} codes; closure enumeration is capped at {cap}")]
    UniverseTooLarge { n: usize, cap: usize },
    #[error("approximation stages are not monotone at stage {stage}")]
    NonMonotone { stage: u64 },
}

/// An axiom `⟨x, D⟩`: conclusion `x` from the finite premise set `D`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(Code, Vec<Code>)", into = "(Code, Vec<Code>)")]
pub struct Axiom {
    pub conclusion: Code,
    pub premises: BTreeSet<Code>,
}

impl Axiom {
    pub fn new<I: IntoIterator<Item = Code>>(conclusion: Code, premises: I) -> Self {
        Axiom { conclusion, premises: premises.into_iter().collect() }
    }

    /// Least stage at which this axiom may appear under the normalization
    /// `x, max D < s`.
    pub fn normalized_stage(&self) -> u64 {
        let top = self.premises.iter().next_back().copied().unwrap_or(0).max(self.conclusion);
        top + 1
    }
}

impl From<(Code, Vec<Code>)> for Axiom {
    fn from((conclusion, premises): (Code, Vec<Code>)) -> Self {
        Axiom::new(conclusion, premises)
    }
}

impl From<Axiom> for (Code, Vec<Code>) {
    fn from(a: Axiom) -> Self {
        (a.conclusion, a.premises.into_iter().collect())
    }
}

/// Single-pass enumeration-operator application:
/// `{x : ∃⟨x, D⟩ ∈ table, D ⊆ X}`.
pub fn apply(table: &[Axiom], xs: &BTreeSet<Code>) -> BTreeSet<Code> {
    table
        .iter()
        .filter(|a| a.premises.iter().all(|p| xs.contains(p)))
        .map(|a| a.conclusion)
        .collect()
}

/// A staged finite presentation of an enumeration operator. Stage entries
/// are deltas; the cumulative union is implied, so monotonicity holds by
/// construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approximation {
    pub stages: Vec<TableDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDelta {
    pub s: u64,
    pub axioms: Vec<Axiom>,
}

impl Approximation {
    pub fn from_deltas(mut deltas: Vec<(u64, Vec<Axiom>)>) -> Self {
        deltas.sort_by_key(|d| d.0);
        Approximation {
            stages: deltas.into_iter().map(|(s, axioms)| TableDelta { s, axioms }).collect(),
        }
    }

    /// Build from full per-stage tables, rejecting non-monotone input.
    pub fn from_full_stages(mut full: Vec<(u64, Vec<Axiom>)>) -> Result<Self, OperatorError> {
        full.sort_by_key(|d| d.0);
        let mut seen: BTreeSet<Axiom> = BTreeSet::new();
        let mut deltas = Vec::new();
        for (s, table) in full {
            let set: BTreeSet<Axiom> = table.into_iter().collect();
            if seen.iter().any(|a| !set.contains(a)) {
                return Err(OperatorError::NonMonotone { stage: s });
            }
            let new: Vec<Axiom> = set.iter().filter(|a| !seen.contains(*a)).cloned().collect();
            if !new.is_empty() {
                deltas.push((s, new));
            }
            seen = set;
        }
        Ok(Approximation::from_deltas(deltas))
    }

    /// The cumulative table at stage `s`.
    pub fn table_at(&self, s: u64) -> Vec<Axiom> {
        let mut out = Vec::new();
        for d in &self.stages {
            if d.s <= s {
                out.extend(d.axioms.iter().cloned());
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// The limit table.
    pub fn limit_table(&self) -> Vec<Axiom> {
        self.table_at(u64::MAX)
    }

    pub fn last_delta_stage(&self) -> u64 {
        self.stages.iter().map(|d| d.s).max().unwrap_or(0)
    }

    /// All codes mentioned as conclusions or premises.
    pub fn mentioned(&self) -> BTreeSet<Code> {
        let mut out = BTreeSet::new();
        for d in &self.stages {
            for a in &d.axioms {
                out.insert(a.conclusion);
                out.extend(a.premises.iter().copied());
            }
        }
        out
    }
}

/// Largest mentioned universe for which `closure_omega` enumerates all
/// premise subsets.
pub const CLOSURE_UNIVERSE_CAP: usize = 18;

/// Conclusions derivable from `base` by chaining axioms of `table`.
fn chain_fix(table: &[Axiom], base: &BTreeSet<Code>) -> BTreeSet<Code> {
    let mut derived: BTreeSet<Code> = BTreeSet::new();
    loop {
        let mut grew = false;
        for a in table {
            if !derived.contains(&a.conclusion)
                && a.premises.iter().all(|p| base.contains(p) || derived.contains(p))
            {
                derived.insert(a.conclusion);
                grew = true;
            }
        }
        if !grew {
            return derived;
        }
    }
}

/// The closure `G^ω` of a finite table: a finite table whose single-pass
/// application computes the least fixpoint of chaining `G`'s axioms,
/// restricted to the codes mentioned in `G`.
///
/// Only codes occurring as premises need enumeration: other codes never
/// enable an axiom, so dropping them from candidate premise sets does not
/// change the operator.
pub fn closure_omega(table: &[Axiom]) -> Result<Vec<Axiom>, OperatorError> {
    let mut universe = BTreeSet::new();
    for a in table {
        universe.extend(a.premises.iter().copied());
    }
    let codes: Vec<Code> = universe.into_iter().collect();
    if codes.len() > CLOSURE_UNIVERSE_CAP {
        return Err(OperatorError::UniverseTooLarge { n: codes.len(), cap: CLOSURE_UNIVERSE_CAP });
    }
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << codes.len()) {
        let base: BTreeSet<Code> =
            codes.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &c)| c).collect();
        for x in chain_fix(table, &base) {
            out.push(Axiom { conclusion: x, premises: base.clone() });
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// A goodified approximation: per effective stage, a chained closure of the
/// normalized cumulative table, with identity axioms `⟨i, {i}⟩` for `i < s`
/// kept implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodApproximation {
    /// Cumulative closed tables, sorted by effective stage.
    pub deltas: Vec<TableDelta>,
}

impl GoodApproximation {
    fn closed_table_at(&self, s: u64) -> &[Axiom] {
        let mut best: &[Axiom] = &[];
        for d in &self.deltas {
            if d.s <= s {
                best = &d.axioms;
            }
        }
        best
    }

    /// `Ĥ_s(X)`: closure-table application plus the implicit identities.
    pub fn apply_at(&self, s: u64, xs: &BTreeSet<Code>) -> BTreeSet<Code> {
        let mut out = apply(self.closed_table_at(s), xs);
        out.extend(xs.iter().copied().filter(|&x| x < s));
        out
    }

    pub fn last_delta_stage(&self) -> u64 {
        self.deltas.iter().map(|d| d.s).max().unwrap_or(0)
    }

    pub fn mentioned(&self) -> BTreeSet<Code> {
        let mut out = BTreeSet::new();
        for d in &self.deltas {
            for a in &d.axioms {
                out.insert(a.conclusion);
                out.extend(a.premises.iter().copied());
            }
        }
        out
    }
}

/// Effectively find a good approximation from a staged table: normalize
/// axiom entry stages so that `x, max D < s`, add identity axioms, and close
/// each effective stage under chaining.
///
/// When the limit operator is already an algebraic closure operator (the
/// hypothesis of the construction), the goodified limit coincides with it.
pub fn goodify(approx: &Approximation) -> Result<GoodApproximation, OperatorError> {
    // Effective availability of each axiom.
    let mut timed: Vec<(u64, Axiom)> = Vec::new();
    for d in &approx.stages {
        for a in &d.axioms {
            timed.push((d.s.max(a.normalized_stage()), a.clone()));
        }
    }
    timed.sort();
    let mut stage_points: Vec<u64> = timed.iter().map(|(s, _)| *s).collect();
    stage_points.dedup();
    let mut deltas = Vec::new();
    for &sp in &stage_points {
        let current: Vec<Axiom> =
            timed.iter().filter(|(s, _)| *s <= sp).map(|(_, a)| a.clone()).collect();
        // Identity axioms over the mentioned universe make the closure
        // chains extensive; identities over the rest of [0, s) stay
        // implicit in `apply_at`.
        let mut with_ids = current.clone();
        let mut universe = BTreeSet::new();
        for a in &current {
            universe.insert(a.conclusion);
            universe.extend(a.premises.iter().copied());
        }
        for &u in universe.iter().filter(|&&u| u < sp) {
            with_ids.push(Axiom::new(u, [u]));
        }
        deltas.push(TableDelta { s: sp, axioms: closure_omega(&with_ids)? });
    }
    Ok(GoodApproximation { deltas })
}

/// A counterexample to goodness: which condition failed, where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoodnessCounterexample {
    pub stage: u64,
    pub xs: BTreeSet<Code>,
    pub condition: GoodnessCondition,
    pub witness: Code,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoodnessCondition {
    /// `X ⊄ H_s(X)` although `max X < s`.
    Extensive,
    /// `H_s(H_s(X)) ⊄ H_s(X)`.
    Idempotent,
}

/// Check both goodness conditions for all `s ≤ stage_bound` over the sample
/// sets; returns the first violation found.
pub fn is_good(
    handle: &OperatorHandle,
    ctx: &mut EvalCtx,
    stage_bound: u64,
    samples: &[BTreeSet<Code>],
) -> Result<Option<GoodnessCounterexample>, OperatorError> {
    let bound = handle
        .mentioned_bound()
        .max(samples.iter().flat_map(|x| x.iter().copied()).max().unwrap_or(0) + 1)
        .max(stage_bound);
    for s in 1..=stage_bound {
        for xs in samples {
            let max_x = xs.iter().next_back().copied().unwrap_or(0);
            let hx = handle.apply_bounded(ctx, s, xs, bound)?;
            if max_x < s {
                if let Some(&w) = xs.iter().find(|x| !hx.contains(x)) {
                    return Ok(Some(GoodnessCounterexample {
                        stage: s,
                        xs: xs.clone(),
                        condition: GoodnessCondition::Extensive,
                        witness: w,
                    }));
                }
            }
            let hhx = handle.apply_bounded(ctx, s, &hx, bound)?;
            if let Some(&w) = hhx.iter().find(|y| !hx.contains(y)) {
                return Ok(Some(GoodnessCounterexample {
                    stage: s,
                    xs: xs.clone(),
                    condition: GoodnessCondition::Idempotent,
                    witness: w,
                }));
            }
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// The unified operator handle
// ---------------------------------------------------------------------------

/// A deduction operator as seen by the staged procedures: either an explicit
/// staged table (raw or goodified) or the propositional entailment engine.
/// `Star` is the operator rewrite used by the p-to-q transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorHandle {
    Table(Approximation),
    Good(GoodApproximation),
    Entailment(EntailmentOperator),
    Star { inner: Box<OperatorHandle>, z0: Code },
}

impl OperatorHandle {
    pub fn entailment(op: EntailmentOperator) -> Self {
        OperatorHandle::Entailment(op)
    }

    /// Whether the deduction operator obeys the connective laws (true for
    /// the entailment engine).
    pub fn has_connectives(&self) -> bool {
        matches!(self, OperatorHandle::Entailment(_))
    }

    /// Membership `y ∈ H_s(X)`.
    pub fn member(
        &self,
        ctx: &mut EvalCtx,
        s: u64,
        xs: &BTreeSet<Code>,
        y: Code,
    ) -> Result<bool, OperatorError> {
        match self {
            OperatorHandle::Table(t) => {
                let table = t.table_at(s);
                Ok(table
                    .iter()
                    .any(|a| a.conclusion == y && a.premises.iter().all(|p| xs.contains(p))))
            }
            OperatorHandle::Good(g) => Ok(g.apply_at(s, xs).contains(&y)),
            OperatorHandle::Entailment(op) => {
                let premises: Vec<Code> = xs.iter().copied().collect();
                Ok(op.member(ctx, s, &premises, y)?)
            }
            OperatorHandle::Star { inner, z0 } => {
                if xs.contains(z0) {
                    // The adjoined axioms ⟨x, {z0}⟩ fire for every x below
                    // the stage; kept axioms of the inner operator still
                    // contribute their conclusions.
                    if y < s || (y != *z0 && inner.member(ctx, s, xs, y)?) {
                        return Ok(true);
                    }
                    return Ok(false);
                }
                if y == *z0 {
                    return Ok(false);
                }
                inner.member(ctx, s, xs, y)
            }
        }
    }

    /// The finite set `H_s(X)`, restricted to codes below `bound` for
    /// operators whose stages are not finitely tabled.
    pub fn apply_bounded(
        &self,
        ctx: &mut EvalCtx,
        s: u64,
        xs: &BTreeSet<Code>,
        bound: u64,
    ) -> Result<BTreeSet<Code>, OperatorError> {
        match self {
            OperatorHandle::Table(t) => Ok(apply(&t.table_at(s), xs)),
            OperatorHandle::Good(g) => Ok(g.apply_at(s, xs)),
            OperatorHandle::Entailment(op) => {
                let premises: Vec<Code> = xs.iter().copied().collect();
                Ok(op.apply_bounded(ctx, s, &premises, bound)?)
            }
            OperatorHandle::Star { inner, z0 } => {
                let mut out = inner.apply_bounded(ctx, s, xs, bound)?;
                if xs.contains(z0) {
                    if out.contains(z0) && *z0 >= s {
                        out.remove(z0);
                    }
                    out.extend(0..bound.min(s));
                } else {
                    out.remove(z0);
                }
                Ok(out)
            }
        }
    }

    /// A stage from which membership queries over codes `< max_code` no
    /// longer change, if the staging settles within view.
    pub fn settle_stage(&self, max_code: Code) -> u64 {
        match self {
            OperatorHandle::Table(t) => t.last_delta_stage(),
            OperatorHandle::Good(g) => g.last_delta_stage().max(max_code + 1),
            OperatorHandle::Entailment(op) => {
                op.stream.last_delta_stage().max(max_code + 1)
            }
            OperatorHandle::Star { inner, z0 } => inner.settle_stage(max_code.max(*z0)),
        }
    }

    /// An upper bound for the codes the operator can ever conclude with,
    /// where finitely tabled; used to size bounded applications.
    pub fn mentioned_bound(&self) -> u64 {
        match self {
            OperatorHandle::Table(t) => {
                t.mentioned().iter().next_back().copied().map_or(0, |c| c + 1)
            }
            OperatorHandle::Good(g) => {
                g.mentioned().iter().next_back().copied().map_or(0, |c| c + 1)
            }
            OperatorHandle::Entailment(_) => 0,
            OperatorHandle::Star { inner, z0 } => inner.mentioned_bound().max(z0 + 1),
        }
    }

    /// Semi-decide `H(∅) ≠ ∅`: the least stage `≤ budget` witnessing a
    /// conclusion from no premises.
    pub fn empty_set_witness(
        &self,
        ctx: &mut EvalCtx,
        budget: u64,
    ) -> Result<Option<u64>, OperatorError> {
        let empty = BTreeSet::new();
        // Tautology `p0 -> p0` has code 2, so the entailment operator
        // witnesses at stage 3; tables are scanned at their delta stages.
        let probe_stages: Vec<u64> = match self {
            OperatorHandle::Table(t) => t.stages.iter().map(|d| d.s).collect(),
            OperatorHandle::Good(g) => g.deltas.iter().map(|d| d.s).collect(),
            _ => (1..=budget.min(8)).collect(),
        };
        for s in probe_stages.into_iter().filter(|&s| s <= budget) {
            let set = self.apply_bounded(ctx, s, &empty, s.max(self.mentioned_bound()))?;
            if !set.is_empty() {
                return Ok(Some(s));
            }
        }
        Ok(None)
    }
}
