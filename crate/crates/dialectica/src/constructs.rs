//! Transformations between system classes and the diagonalization that
//! produces a completion escaping a given computable class of
//! limit-computable sets.
//!
//! The transformations consume run evidence (budget-stabilized traces)
//! where the underlying constructions are non-uniform in limit values, and
//! emit ordinary [`SystemSpec`]s plus verification reports comparing the
//! final theses of source and target on a window.
//!
//! The diagonalization realizes the priority construction over a
//! propositional surrogate: the independence function Γ returns a fresh
//! atom, which no consistent set of sentences not mentioning it can derive
//! or refute.

use crate::codec::{atom, conj, fresh_atom, neg, Code, CONTRADICTION};
use crate::engine::{limit_report, run, EngineError, LimitReport, RunOptions, Trace, DEFAULT_LOOP_DEPTH};
use crate::logic::{completion_check, theory_ta, AxiomStream, CeApprox, CompletionReport, EntailmentOperator, EvalCtx};
use crate::operators::{Approximation, Axiom, OperatorHandle};
use crate::systems::{
    validate, ChainGen, ProposingFunction, RevisingFunction, SystemKind, SystemSpec, SystemsError,
    ValidationReport,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("expected a {expected}-dialectical system, got {got}")]
    WrongKind { expected: SystemKind, got: SystemKind },
    #[error("the operator must satisfy the connective laws (entailment-backed)")]
    NeedsConnectives,
    #[error("chain element {code} is not in H(∅)")]
    ChainOutsideTheorems { code: Code },
    #[error("refused: {0}")]
    Refused(String),
    #[error("unknown within budget: {0}")]
    Unknown(String),
    #[error("targets must settle by stage {bound}, but settling runs to {actual}")]
    TargetsSettleTooLate { bound: u64, actual: u64 },
    #[error("requirements still requiring attention at the end of the budget: {0:?}")]
    BudgetExceeded(Vec<u64>),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Systems(#[from] SystemsError),
    #[error(transparent)]
    Operator(#[from] crate::operators::OperatorError),
}

// ---------------------------------------------------------------------------
// Window equivalence of final theses
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowEquivalence {
    pub entries: Vec<EquivalenceEntry>,
    pub equal: bool,
    pub unsettled: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceEntry {
    pub code: Code,
    pub left: Option<bool>,
    pub right: Option<bool>,
}

/// Run both systems and compare candidate final-theses membership on the
/// given codes.
pub fn window_equivalence(
    left: &SystemSpec,
    right: &SystemSpec,
    ctx: &mut EvalCtx,
    budget: u64,
    codes: &[Code],
) -> Result<(WindowEquivalence, Trace, Trace), ConstructError> {
    let opts = RunOptions::new(budget).with_watch(codes.to_vec());
    let lt = run(left, ctx, &opts)?;
    let rt = run(right, ctx, &opts)?;
    let bound = codes.iter().copied().max().map_or(8, |c| c + 1);
    let lr = limit_report(left, ctx, &lt, 8, DEFAULT_LOOP_DEPTH, bound)?;
    let rr = limit_report(right, ctx, &rt, 8, DEFAULT_LOOP_DEPTH, bound)?;
    let mut entries = Vec::new();
    let mut unsettled = 0;
    let mut equal = true;
    for &code in codes {
        let l = lr.candidate(code);
        let r = rr.candidate(code);
        if l.is_none() || r.is_none() {
            unsettled += 1;
            equal = false;
        } else if l != r {
            equal = false;
        }
        entries.push(EquivalenceEntry { code, left: l, right: r });
    }
    Ok((WindowEquivalence { entries, equal, unsettled }, lt, rt))
}

/// Watch codes for a window of slots: the proposals of both systems.
pub fn window_codes(specs: &[&SystemSpec], window: usize) -> Result<Vec<Code>, SystemsError> {
    let mut out = BTreeSet::new();
    for spec in specs {
        for u in 0..window {
            out.insert(spec.f.value(u as u64)?);
        }
    }
    Ok(out.into_iter().collect())
}

// ---------------------------------------------------------------------------
// d → p (every dialectical set is p-dialectical)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DToPReport {
    pub p: SystemSpec,
    pub z0: Code,
    pub equivalence: WindowEquivalence,
    /// Per stabilized slot: the stack correspondence between the two runs
    /// (kept stacks stay singletons, discarded stacks become
    /// `⟨f_u, z_0⟩`).
    pub stack_correspondence: Vec<(usize, bool)>,
}

/// Build the p-system of the d-to-p transformation: `f⁻` follows a strictly
/// increasing computable chain inside `H(∅)`, so a discarded axiom is
/// replaced by a theorem, which never changes what is derivable.
pub fn d_to_p(
    d: &SystemSpec,
    chain: ChainGen,
    ctx: &mut EvalCtx,
    budget: u64,
) -> Result<(SystemSpec, Code), ConstructError> {
    if d.kind != SystemKind::D {
        return Err(ConstructError::WrongKind { expected: SystemKind::D, got: d.kind });
    }
    // Z ⊆ H(∅), checked on a prefix at the final stage of the budget.
    let empty = BTreeSet::new();
    let stage = budget.max(d.operator.settle_stage(chain.value(0)?));
    for i in 0..3 {
        let z = chain.value(i)?;
        let in_h = d.operator.member(ctx, stage.max(z + 1), &empty, z)?;
        if !in_h && d.operator.settle_stage(z) <= stage.max(z + 1) {
            return Err(ConstructError::ChainOutsideTheorems { code: z });
        }
    }
    let z0 = chain.value(0)?;
    let p = SystemSpec::new_p(
        d.operator.clone(),
        d.f.clone(),
        RevisingFunction::Chain { chain },
        d.c,
    );
    Ok((p, z0))
}

/// Run both systems and verify window equality plus the stack
/// correspondence.
pub fn verify_d_to_p(
    d: &SystemSpec,
    p: &SystemSpec,
    z0: Code,
    ctx: &mut EvalCtx,
    budget: u64,
    window: usize,
) -> Result<DToPReport, ConstructError> {
    let codes = window_codes(&[d, p], window)?;
    let (equivalence, dt, pt) = window_equivalence(d, p, ctx, budget, &codes)?;
    let mut stack_correspondence = Vec::new();
    for u in 0..window {
        let settle = budget / 2;
        if dt.r_last_change(u) > settle || pt.r_last_change(u) > settle {
            continue;
        }
        let rd = dt.final_state.stacks.get(u).cloned().unwrap_or_default();
        let rp = pt.final_state.stacks.get(u).cloned().unwrap_or_default();
        let f_u = d.f.value(u as u64)?;
        let ok = if rd == vec![f_u] {
            rp == vec![f_u]
        } else if rd.is_empty() {
            // Slot u was either discarded (then p revises it to z0) or
            // never reached.
            rp.is_empty() || rp == vec![f_u, z0]
        } else {
            true
        };
        stack_correspondence.push((u, ok));
    }
    Ok(DToPReport { p: p.clone(), z0, equivalence, stack_correspondence })
}

// ---------------------------------------------------------------------------
// p → q (every p-dialectical set is q-dialectical)
// ---------------------------------------------------------------------------

/// The staged axiom-table rewrite `H* = (H ∖ {⟨z0, D⟩ : z0 ∉ D}) ∪
/// {⟨x, {z0}⟩ : x ∈ ω}`, materialized for codes below `bound`. The same
/// operator is available lazily as [`OperatorHandle::Star`].
pub fn star_table(approx: &Approximation, z0: Code, bound: u64) -> Approximation {
    let mut deltas: Vec<(u64, Vec<Axiom>)> = Vec::new();
    for d in &approx.stages {
        let kept: Vec<Axiom> = d
            .axioms
            .iter()
            .filter(|a| a.conclusion != z0 || a.premises.contains(&z0))
            .cloned()
            .collect();
        if !kept.is_empty() {
            deltas.push((d.s, kept));
        }
    }
    for x in 0..bound {
        deltas.push((x + 1, vec![Axiom::new(x, [z0])]));
    }
    Approximation::from_deltas(deltas)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PToQOutcome {
    pub q: SystemSpec,
    pub z0: Code,
    pub z1: Code,
    pub u0: usize,
}

/// Build the q-system of the p-to-q transformation from run evidence: the
/// least slot `u0` whose proposal `z0 ≠ c` is rejected, its final stack top
/// `z1`, the rewritten operator `H*`, the shifted proposing function with
/// `f*(0) = z1`, the contradiction `z0`, and the counterexample `c`.
pub fn p_to_q(
    p: &SystemSpec,
    ctx: &mut EvalCtx,
    budget: u64,
    window: usize,
) -> Result<PToQOutcome, ConstructError> {
    if p.kind != SystemKind::P {
        return Err(ConstructError::WrongKind { expected: SystemKind::P, got: p.kind });
    }
    let codes = window_codes(&[p], window)?;
    let opts = RunOptions::new(budget).with_watch(codes.clone());
    let trace = run(p, ctx, &opts)?;
    let report = limit_report(p, ctx, &trace, window, DEFAULT_LOOP_DEPTH, 0)?;
    if !report.loop_warnings.is_empty() {
        return Err(ConstructError::Refused(format!(
            "the claim is trivial when p has loops; looping evidence at slots {:?}",
            report.loop_warnings
        )));
    }
    if codes.iter().all(|&c| c == p.c || report.candidate(c) == Some(true)) {
        return Err(ConstructError::Refused(
            "the claim is trivial when A_p is everything but the contradiction".into(),
        ));
    }
    let mut found = None;
    for u in 0..window {
        let f_u = p.f.value(u as u64)?;
        if f_u == p.c {
            continue;
        }
        match report.candidate(f_u) {
            Some(false) => {
                found = Some((u, f_u));
                break;
            }
            Some(true) => continue,
            None => {
                return Err(ConstructError::Unknown(format!(
                    "membership of f_{u} did not settle within the budget"
                )))
            }
        }
    }
    let (u0, z0) = found.ok_or_else(|| {
        ConstructError::Unknown("no rejected proposal found in the window".into())
    })?;
    let z1 = *trace
        .final_state
        .stacks
        .get(u0)
        .and_then(|st| st.last())
        .ok_or_else(|| ConstructError::Unknown("slot u0 has an empty stack".into()))?;
    let star = match &p.operator {
        OperatorHandle::Table(approx) => OperatorHandle::Table(star_table(
            approx,
            z0,
            budget.max(p.operator.mentioned_bound()),
        )),
        other => OperatorHandle::Star { inner: Box::new(other.clone()), z0 },
    };
    let f_star = ProposingFunction::Prefix {
        prefix: vec![z1],
        default: Box::new(ProposingFunction::Shift {
            offset: 1,
            inner: Box::new(p.f.clone()),
        }),
    };
    let q = SystemSpec::new_q(
        star,
        f_star,
        p.f_minus.clone().expect("p-system has a revising function"),
        z0,
        p.c,
    );
    Ok(PToQOutcome { q, z0, z1, u0 })
}

// ---------------------------------------------------------------------------
// q → d (consistent loopless q with connectives and good approximation)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QToDOutcome {
    pub d: SystemSpec,
    pub t0: u64,
    pub v: usize,
    pub g_prefix: Vec<Code>,
}

/// Build the dialectical system of the q-to-d transformation: after the
/// stage `t0` at which `¬c⁻` has settled into the limit and
/// `c ∈ H_{t0}({c⁻, ¬c⁻})`, the q-procedure behaves dialectically, and the
/// permutation `g` replays the limit values below the stable slot `v`.
pub fn q_to_d(
    q: &SystemSpec,
    ctx: &mut EvalCtx,
    budget: u64,
) -> Result<QToDOutcome, ConstructError> {
    if q.kind != SystemKind::Q {
        return Err(ConstructError::WrongKind { expected: SystemKind::Q, got: q.kind });
    }
    if !q.operator.has_connectives() {
        return Err(ConstructError::NeedsConnectives);
    }
    let cm = q.c_minus.expect("q-system has a counterexample");
    let neg_cm = neg(cm);
    let trace = run(q, ctx, &RunOptions::new(budget))?;
    // The slot proposing ¬c⁻.
    let mut u = None;
    for slot in 0..budget {
        if q.f.value(slot)? == neg_cm {
            u = Some(slot as usize);
            break;
        }
    }
    let u = u.ok_or_else(|| {
        ConstructError::Unknown("¬c⁻ is not proposed within the budget".into())
    })?;
    // Least stage with c ∈ H_s({c⁻, ¬c⁻}).
    let pair: BTreeSet<Code> = [cm, neg_cm].into_iter().collect();
    if !q.operator.member(ctx, budget, &pair, q.c)? {
        return Err(ConstructError::Unknown(
            "c ∈ H({c⁻, ¬c⁻}) not witnessed within the budget".into(),
        ));
    }
    let (mut lo, mut hi) = (1u64, budget);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if q.operator.member(ctx, mid, &pair, q.c)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let t0 = lo.max(neg_cm).max(trace.l_last_change(u + 1));
    if t0 > budget {
        return Err(ConstructError::Unknown(format!(
            "t0 = {t0} lies beyond the budget"
        )));
    }
    // Greatest slot whose L stayed fixed from t0 on.
    let max_slot = trace.final_state.stacks.len();
    let mut v = 0usize;
    for slot in 0..=max_slot {
        if trace.l_last_change(slot) <= t0 {
            v = slot;
        } else {
            break;
        }
    }
    if v <= u {
        return Err(ConstructError::Unknown(format!(
            "stable slot v = {v} does not exceed the ¬c⁻ slot u = {u}"
        )));
    }
    // The permutation g: below v replay limit values, above v keep f,
    // padding collisions from the tautology chain.
    let chain = ChainGen::ExcludedMiddle;
    let g_len = (budget as usize + 1).max(v + 1);
    let mut g_prefix: Vec<Code> = Vec::with_capacity(g_len);
    let mut used: BTreeSet<Code> = BTreeSet::new();
    let pad = |used: &BTreeSet<Code>| -> Result<Code, ConstructError> {
        for i in 0.. {
            let z = chain.value(i)?;
            if !used.contains(&z) {
                return Ok(z);
            }
        }
        unreachable!()
    };
    for v_prime in 0..g_len {
        let value = if v_prime < v {
            let stack = trace.final_state.stacks.get(v_prime).cloned().unwrap_or_default();
            match stack.last() {
                None => q.f.value(v_prime as u64)?,
                Some(&rho) if !used.contains(&rho) => rho,
                Some(_) => pad(&used)?,
            }
        } else {
            let f_v = q.f.value(v_prime as u64)?;
            if !used.contains(&f_v) {
                f_v
            } else {
                pad(&used)?
            }
        };
        used.insert(value);
        g_prefix.push(value);
    }
    let g = ProposingFunction::identity_after(g_prefix.clone());
    let d = SystemSpec::new_d(q.operator.clone(), g, q.c);
    Ok(QToDOutcome { d, t0, v, g_prefix })
}

// ---------------------------------------------------------------------------
// dialectical completion → q (good approximation, c⁻ = c ∧ c)
// ---------------------------------------------------------------------------

/// Build the q-system whose counterexample is `c ∧ c`: under a good (or
/// entailment-backed) staging, any stage deriving `c⁻` also derives `c`, so
/// the counterexample never plays a role and the q-procedure replays the
/// dialectical one.
pub fn d_completion_to_q(d: &SystemSpec) -> Result<SystemSpec, ConstructError> {
    if d.kind != SystemKind::D {
        return Err(ConstructError::WrongKind { expected: SystemKind::D, got: d.kind });
    }
    if !d.operator.has_connectives() {
        return Err(ConstructError::NeedsConnectives);
    }
    let c_minus = conj(d.c, d.c);
    Ok(SystemSpec::new_q(
        d.operator.clone(),
        d.f.clone(),
        RevisingFunction::NextAtom,
        d.c,
        c_minus,
    ))
}

// ---------------------------------------------------------------------------
// p with f⁻ = ¬ versus its dialectical reduct
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegCorrespondenceReport {
    pub equivalence: WindowEquivalence,
    /// Per stabilized slot: (slot, stack shapes match, side condition
    /// `¬f_u ∈ H(L_d(u))` holds where the d-run discarded).
    pub stacks: Vec<(usize, bool, Option<bool>)>,
}

/// Run a p-system whose revising function is negation against the
/// dialectical system with the same operator, proposing function, and
/// contradiction; verify the stack correspondence and window equality.
pub fn p_neg_equals_d_check(
    p: &SystemSpec,
    ctx: &mut EvalCtx,
    budget: u64,
    window: usize,
) -> Result<NegCorrespondenceReport, ConstructError> {
    if p.kind != SystemKind::P {
        return Err(ConstructError::WrongKind { expected: SystemKind::P, got: p.kind });
    }
    if p.f_minus != Some(RevisingFunction::Neg) {
        return Err(ConstructError::Refused("the revising function must be the negation".into()));
    }
    if !p.operator.has_connectives() {
        return Err(ConstructError::NeedsConnectives);
    }
    let d = SystemSpec::new_d(p.operator.clone(), p.f.clone(), p.c);
    let codes = window_codes(&[p], window)?;
    let (equivalence, dt, pt) = window_equivalence(&d, p, ctx, budget, &codes)?;
    let mut stacks = Vec::new();
    for u in 0..window {
        let settle = budget / 2;
        if dt.r_last_change(u) > settle || pt.r_last_change(u) > settle {
            continue;
        }
        let rd = dt.final_state.stacks.get(u).cloned().unwrap_or_default();
        let rp = pt.final_state.stacks.get(u).cloned().unwrap_or_default();
        let f_u = p.f.value(u as u64)?;
        let (shape_ok, side) = if rd == vec![f_u] {
            (rp == vec![f_u], None)
        } else if rd.is_empty() && !rp.is_empty() {
            // Discarded in d: the p-stack holds the proposal and its
            // negation, and the negation is already derivable from L_d(u).
            let shape = rp == vec![f_u, neg(f_u)];
            let l_d = dt.final_state.l_at(u);
            let side = p.operator.member(ctx, dt.final_state.stage, &l_d, neg(f_u))?;
            (shape, Some(side))
        } else {
            (true, None)
        };
        stacks.push((u, shape_ok, side));
    }
    Ok(NegCorrespondenceReport { equivalence, stacks })
}

// ---------------------------------------------------------------------------
// The dialectical system for T_A (m-reduction behaviour)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MReductionReport {
    pub entries: Vec<MReductionEntry>,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MReductionEntry {
    pub i: u64,
    pub in_a: bool,
    pub atom_accepted: Option<bool>,
    /// `i ∈ A ⇒ p_i ∈ A_d` on the window.
    pub holds: bool,
}

/// The dialectical system for the theory `T_A`, proposing every code.
pub fn bernardi_system(a_approx: &CeApprox) -> Result<SystemSpec, ConstructError> {
    let stream = theory_ta(a_approx)
        .map_err(|e| ConstructError::Refused(format!("non-monotone approximation: {e}")))?;
    Ok(SystemSpec::new_d(
        OperatorHandle::entailment(EntailmentOperator::new(stream)),
        ProposingFunction::Identity,
        CONTRADICTION,
    ))
}

/// Check the m-reduction direction `i ∈ A ⇒ p_i ∈ A_d` on a window of
/// indices. Atoms outside `A` are undetermined by `T_A` and are typically
/// still accepted (consistent to add), so only this direction is asserted.
pub fn bernardi_check(
    a_approx: &CeApprox,
    ctx: &mut EvalCtx,
    budget: u64,
    indices: &[u64],
) -> Result<(SystemSpec, MReductionReport), ConstructError> {
    let spec = bernardi_system(a_approx)?;
    let watch: Vec<Code> = indices.iter().map(|&i| atom(i)).collect();
    let opts = RunOptions::new(budget).with_watch(watch.clone());
    let trace = run(&spec, ctx, &opts)?;
    let report = limit_report(&spec, ctx, &trace, 8, DEFAULT_LOOP_DEPTH, watch.iter().max().map_or(8, |c| c + 1))?;
    let limit = a_approx.limit();
    let mut entries = Vec::new();
    for &i in indices {
        let in_a = limit.contains(&i);
        let accepted = report.candidate(atom(i));
        let holds = !in_a || accepted == Some(true);
        entries.push(MReductionEntry { i, in_a, atom_accepted: accepted, holds });
    }
    let holds = entries.iter().all(|e| e.holds);
    Ok((spec, MReductionReport { entries, holds }))
}

// ---------------------------------------------------------------------------
// Diagonalization targets
// ---------------------------------------------------------------------------

/// A stage-indexed 0/1 matrix approximating a limit-computable set: per
/// column `x`, the value from stage `t` on is the last `(t, v)` entry with
/// `t ≤ s`. Columns not listed follow the default pattern (constant 0 when
/// absent).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct DiagTarget {
    pub e: u64,
    #[serde(default)]
    pub default: Vec<(u64, u8)>,
    #[serde(default)]
    pub columns: Vec<TargetColumn>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TargetColumn {
    pub x: Code,
    pub values: Vec<(u64, u8)>,
}

fn pattern_at(pattern: &[(u64, u8)], s: u64) -> bool {
    pattern.iter().rfind(|(t, _)| *t <= s).map(|&(_, v)| v == 1).unwrap_or(false)
}

impl DiagTarget {
    pub fn value_at(&self, x: Code, s: u64) -> bool {
        match self.columns.iter().find(|c| c.x == x) {
            Some(col) => pattern_at(&col.values, s),
            None => pattern_at(&self.default, s),
        }
    }

    pub fn final_value(&self, x: Code) -> bool {
        self.value_at(x, u64::MAX)
    }

    /// The last stage at which any column can still change.
    pub fn settling_stage(&self) -> u64 {
        let d = self.default.iter().map(|&(t, _)| t).max().unwrap_or(0);
        let c = self
            .columns
            .iter()
            .flat_map(|c| c.values.iter().map(|&(t, _)| t))
            .max()
            .unwrap_or(0);
        d.max(c)
    }
}

/// A toy slice of a computable class of limit-computable sets: `n` targets,
/// each with at most `b` mind-changes per column, mixing constant-0,
/// constant-1, and flipping behaviours.
pub fn omega_ce_family(n: u64, b: u64) -> Vec<DiagTarget> {
    let starts = [0u8, 1, 1, 0, 1, 0];
    let flip_counts = [0u64, 0, 1, 3, 2, 1];
    (0..n)
        .map(|e| {
            let idx = (e % 6) as usize;
            let start = starts[idx];
            let flips = flip_counts[idx].min(b);
            let mut pattern = vec![(0u64, start)];
            let mut v = start;
            for k in 0..flips {
                v = 1 - v;
                pattern.push((14 + 8 * k, v));
            }
            DiagTarget { e, default: pattern, columns: Vec::new() }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// The diagonalization construction
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct Requirement {
    /// Current diagonalization witness x_e.
    x: Option<Code>,
    /// Current top of the reserved stack r̂(3e): y_e(k).
    y: Option<Code>,
    r_hat_y: Vec<Code>,
    r_hat_x: Vec<Code>,
    /// The construction's prediction A(x_e).
    a_value: bool,
    actions: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagAxiom {
    pub stage: u64,
    pub code: Code,
    /// The sentence whose entry stage orders this axiom.
    pub leading: Code,
    pub entry_stage: u64,
}

struct Builder<'a> {
    targets: &'a [DiagTarget],
    /// f-slot assignments and the f-range.
    f_slots: BTreeMap<u64, Code>,
    f_range: BTreeSet<Code>,
    /// Explicit f⁻ assignments (the tail falls back on the theorem chain).
    f_minus: BTreeMap<Code, Code>,
    axioms: Vec<DiagAxiom>,
    /// Codes v with ¬v among the axioms.
    dead: BTreeSet<Code>,
    /// Mention set C_s: atoms mentioned so far, plus a fresh-scan pointer.
    mention_atoms: BTreeSet<u64>,
    fresh_ptr: u64,
    mention_codes: BTreeSet<Code>,
    /// Least stage at which a code entered the range of f or f⁻.
    entry_stage: BTreeMap<Code, u64>,
    reqs: Vec<Requirement>,
    /// Even-stage scan pointers: next filler slot index, least unproposed
    /// code, least code without an explicit f⁻ value.
    filler_k: u64,
    propose_scan: Code,
    fminus_scan: Code,
    gamma_fresh_ok: bool,
    stage: u64,
}

const A_CHAIN: ChainGen = ChainGen::ExcludedMiddle;

impl<'a> Builder<'a> {
    fn new(targets: &'a [DiagTarget]) -> Result<Self, ConstructError> {
        let mut b = Builder {
            targets,
            f_slots: BTreeMap::new(),
            f_range: BTreeSet::new(),
            f_minus: BTreeMap::new(),
            axioms: Vec::new(),
            dead: BTreeSet::new(),
            mention_atoms: BTreeSet::new(),
            fresh_ptr: 0,
            mention_codes: BTreeSet::new(),
            entry_stage: BTreeMap::new(),
            reqs: Vec::new(),
            filler_k: 0,
            propose_scan: 0,
            fminus_scan: 0,
            gamma_fresh_ok: true,
            stage: 0,
        };
        // Step 0: the chain a_0 < a_1 < ⋯ in H(∅) lives in the fallback of
        // f⁻; mention the contradiction and the chain base.
        b.mention(CONTRADICTION);
        b.mention(A_CHAIN.value(0)?);
        Ok(b)
    }

    fn mention(&mut self, code: Code) {
        if self.mention_codes.insert(code) {
            self.mention_atoms.extend(crate::codec::atoms_of(code));
            while self.mention_atoms.contains(&self.fresh_ptr) {
                self.fresh_ptr += 1;
            }
        }
    }

    /// Γ(C ∪ extra): a fresh atom, never derivable or refutable from any
    /// consistent set of sentences mentioned so far.
    fn gamma(&mut self, extra: &[Code]) -> Code {
        for &c in extra {
            self.mention(c);
        }
        let out = atom(self.fresh_ptr);
        // The independence precondition: the chosen atom is genuinely
        // fresh with respect to the mention set.
        let check: Vec<Code> = self.mention_codes.iter().copied().collect();
        if fresh_atom(&check) != out {
            self.gamma_fresh_ok = false;
        }
        self.mention(out);
        self.entry_stage.entry(out).or_insert(self.stage);
        out
    }

    fn add_axiom(&mut self, code: Code, leading: Code) {
        let entry = self.entry_stage.get(&leading).copied().unwrap_or(self.stage);
        self.mention(code);
        self.axioms.push(DiagAxiom { stage: self.stage, code, leading, entry_stage: entry });
    }

    fn kill(&mut self, v: Code) {
        if self.dead.insert(v) {
            self.add_axiom(neg(v), v);
        }
    }

    fn assign_slot(&mut self, slot: u64, value: Code) {
        self.f_slots.insert(slot, value);
        self.f_range.insert(value);
        self.entry_stage.entry(value).or_insert(self.stage);
        self.mention(value);
    }

    fn define_f_minus(&mut self, from: Code, to: Code) {
        self.f_minus.insert(from, to);
        self.entry_stage.entry(to).or_insert(self.stage);
        self.mention(from);
        self.mention(to);
    }

    /// Walk the replacement chain from `start` to its first live element,
    /// extending it with a fresh value where it dead-ends. Returns the
    /// elements walked past (all dead) and the live value reached.
    fn walk_to_live(&mut self, start: Code, fresh_extra: &[Code]) -> (Vec<Code>, Code) {
        let mut passed = Vec::new();
        let mut cur = start;
        loop {
            if !self.dead.contains(&cur) {
                return (passed, cur);
            }
            passed.push(cur);
            match self.f_minus.get(&cur) {
                Some(&next) => cur = next,
                None => {
                    let fresh = self.gamma(fresh_extra);
                    self.define_f_minus(cur, fresh);
                    return (passed, fresh);
                }
            }
        }
    }

    fn requires_attention(&self, e: usize, s: u64) -> bool {
        match self.reqs.get(e) {
            None => true,
            Some(req) => match req.x {
                None => true,
                Some(x) => {
                    if (e as u64) < self.targets.len() as u64 {
                        self.targets[e].value_at(x, s) == req.a_value
                    } else {
                        false
                    }
                }
            },
        }
    }

    /// Odd stage: serve the least requirement needing attention.
    fn odd_stage(&mut self, s: u64) -> Result<(), ConstructError> {
        self.stage = s;
        let e = (0..self.reqs.len())
            .find(|&e| self.requires_attention(e, s))
            .unwrap_or(self.reqs.len());
        if e == self.reqs.len() {
            self.reqs.push(Requirement::default());
        }
        let slot_y = 3 * e as u64;
        let slot_x = slot_y + 1;
        if self.reqs[e].x.is_none() {
            // (a1): appoint x_e and y_e. On the first attack the fresh
            // values seed the reserved slots; after a reset the chains
            // continue from the killed tops, so the running stacks reach
            // the new values.
            let x_new = match self.f_slots.get(&slot_x).copied() {
                None => {
                    let x = self.gamma(&[]);
                    self.assign_slot(slot_x, x);
                    x
                }
                Some(first) => self.walk_to_live(first, &[]).1,
            };
            let y_new = match self.f_slots.get(&slot_y).copied() {
                None => {
                    let y = self.gamma(&[x_new]);
                    self.assign_slot(slot_y, y);
                    y
                }
                Some(first) => self.walk_to_live(first, &[x_new]).1,
            };
            if !self.f_minus.contains_key(&x_new) {
                let w = self.gamma(&[x_new, y_new]);
                self.define_f_minus(x_new, w);
            }
            let req = &mut self.reqs[e];
            req.x = Some(x_new);
            req.y = Some(y_new);
            req.r_hat_y = vec![y_new];
            req.r_hat_x = vec![x_new];
            req.a_value = true;
            req.actions += 1;
        } else {
            let x = self.reqs[e].x.unwrap();
            let y = self.reqs[e].y.unwrap();
            let in_v = self.targets[e].value_at(x, s);
            if in_v {
                // (a21): kill x in the presence of y via ¬(y ∧ x); the
                // stack r̂(3e+1) grows to the replacement chain's next
                // live value.
                self.add_axiom(neg(conj(y, x)), y);
                let w = *self.f_minus.get(&x).expect("f⁻(x_e) defined at appointment");
                let (passed, live) = self.walk_to_live(w, &[]);
                let req = &mut self.reqs[e];
                req.r_hat_x.extend(passed.iter().copied());
                if req.r_hat_x.last() != Some(&live) {
                    req.r_hat_x.push(live);
                }
                req.a_value = false;
                req.actions += 1;
            } else {
                // (a22): kill y_e(k) outright, appoint y_e(k+1), and let
                // the procedure restore x_e by re-extending slot 3e+1.
                self.kill(y);
                let y_next = match self.f_minus.get(&y).copied() {
                    Some(next) => {
                        let (_, live) = self.walk_to_live(next, &[]);
                        live
                    }
                    None => {
                        let fresh = self.gamma(&[]);
                        self.define_f_minus(y, fresh);
                        fresh
                    }
                };
                let req = &mut self.reqs[e];
                req.r_hat_y.push(y_next);
                req.y = Some(y_next);
                req.r_hat_x = vec![x];
                req.a_value = true;
                req.actions += 1;
            }
        }
        // Resetting: lower-priority requirements lose their witnesses, and
        // their current stack tops are killed so the running stacks follow.
        for e_prime in (e + 1)..self.reqs.len() {
            if self.reqs[e_prime].x.is_none() {
                continue;
            }
            let top_y = self.reqs[e_prime].r_hat_y.last().copied();
            let top_x = self.reqs[e_prime].r_hat_x.last().copied();
            if let Some(t) = top_y {
                self.kill(t);
            }
            if let Some(t) = top_x {
                self.kill(t);
            }
            let req = &mut self.reqs[e_prime];
            req.x = None;
            req.y = None;
            req.r_hat_y.clear();
            req.r_hat_x.clear();
            req.a_value = false;
        }
        Ok(())
    }

    /// Even stage: care for surjectivity of f and totality of f⁻.
    fn even_stage(&mut self, s: u64) -> Result<(), ConstructError> {
        self.stage = s;
        let slot = 3 * self.filler_k + 2;
        self.filler_k += 1;
        while self.f_range.contains(&self.propose_scan) {
            self.propose_scan += 1;
        }
        let x = self.propose_scan;
        self.assign_slot(slot, x);
        // The filler's replacement chain ends in the theorem chain: that is
        // the fallback of the emitted f⁻, so no explicit entry is needed
        // unless the chain already has explicit links to follow.
        // Totalize f⁻ on the least unhandled code with a fresh value.
        while self.f_minus.contains_key(&self.fminus_scan)
            || A_CHAIN.position(self.fminus_scan).is_some()
        {
            self.fminus_scan += 1;
        }
        let z = self.fminus_scan;
        let fresh = self.gamma(&[]);
        self.define_f_minus(z, fresh);
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetVerdict {
    pub e: u64,
    pub x_e: Code,
    pub a_p: Option<bool>,
    pub v_e: bool,
    pub predicted: bool,
    pub diagonalized: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoEntry {
    pub slot: usize,
    pub expected: Code,
    pub actual: Option<Code>,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagReport {
    pub per_target: Vec<TargetVerdict>,
    pub completion: CompletionReport,
    pub validation: ValidationReport,
    pub rho_entries: Vec<RhoEntry>,
    pub rho_ok: bool,
    pub gamma_fresh_ok: bool,
    /// Entry stages recorded for every axiom's leading sentence.
    pub entry_stage_ok: bool,
    pub actions: Vec<(u64, u64)>,
    pub all_diagonalized: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagOutcome {
    pub spec: SystemSpec,
    #[serde(skip)]
    pub trace: Trace,
    #[serde(skip)]
    pub limit: LimitReport,
    pub report: DiagReport,
}

/// Execute the diagonalization construction against the given targets and
/// run the emitted p-system.
///
/// Odd stages serve requirements (appointment, diagonalizing axioms,
/// resetting); even stages extend f over the filler slots `3k+2` and
/// totalize f⁻. The emitted operator is entailment over the base calculus
/// plus the staged axioms `Ax`.
pub fn diagonalize(
    targets: &[DiagTarget],
    budget: u64,
    ctx: &mut EvalCtx,
) -> Result<DiagOutcome, ConstructError> {
    let settle = targets.iter().map(|t| t.settling_stage()).max().unwrap_or(0);
    if settle > budget / 4 {
        return Err(ConstructError::TargetsSettleTooLate { bound: budget / 4, actual: settle });
    }
    let mut b = Builder::new(targets)?;
    for s in 1..=budget {
        if s % 2 == 1 {
            b.odd_stage(s)?;
        } else {
            b.even_stage(s)?;
        }
    }
    // Requirements for the given targets must have settled.
    let pending: Vec<u64> = (0..targets.len())
        .filter(|&e| b.requires_attention(e, budget + 1))
        .map(|e| e as u64)
        .collect();
    if !pending.is_empty() {
        return Err(ConstructError::BudgetExceeded(pending));
    }

    // Assemble the emitted system.
    let mut deltas: BTreeMap<u64, Vec<Code>> = BTreeMap::new();
    for ax in &b.axioms {
        deltas.entry(ax.stage).or_default().push(ax.code);
    }
    let stream = AxiomStream::from_deltas(deltas.into_iter().collect());
    let mut op = EntailmentOperator::new(stream);
    // The deduction operator of the construction is full entailment over
    // the growing theory; no premise-set cap applies.
    op.premise_cap = None;
    let operator = OperatorHandle::entailment(op);
    let prefix_len = (0..).find(|u| !b.f_slots.contains_key(u)).unwrap_or(0);
    let prefix: Vec<Code> = (0..prefix_len).map(|u| b.f_slots[&u]).collect();
    let f = ProposingFunction::identity_after(prefix);
    let f_minus = RevisingFunction::Table {
        prefix: b.f_minus.clone(),
        fallback: Box::new(RevisingFunction::Chain { chain: A_CHAIN }),
    };
    let spec = SystemSpec {
        kind: SystemKind::P,
        operator,
        f,
        f_minus: Some(f_minus),
        c: CONTRADICTION,
        c_minus: None,
    };

    // Run the emitted system, watching the witnesses and the first atoms.
    let atom_window: Vec<u64> = (0..10).collect();
    let mut watch: Vec<Code> = Vec::new();
    for e in 0..targets.len() {
        if let Some(x) = b.reqs[e].x {
            watch.push(x);
        }
    }
    for &i in &atom_window {
        watch.push(atom(i));
        watch.push(neg(atom(i)));
    }
    watch.sort_unstable();
    watch.dedup();
    let validation = validate(&spec, ctx, budget)?;
    let mut opts = RunOptions::new(budget).with_watch(watch);
    opts.validate_first = false;
    let trace = run(&spec, ctx, &opts)?;
    let bound = atom(10) + 2;
    let limit = limit_report(&spec, ctx, &trace, 12, DEFAULT_LOOP_DEPTH, bound)?;

    // Per-target verdicts.
    let mut per_target = Vec::new();
    for (e, target) in targets.iter().enumerate() {
        let x_e = b.reqs[e].x.expect("settled requirement has a witness");
        let v_e = target.final_value(x_e);
        let a_p = limit.candidate(x_e);
        per_target.push(TargetVerdict {
            e: e as u64,
            x_e,
            a_p,
            v_e,
            predicted: b.reqs[e].a_value,
            diagonalized: a_p == Some(!v_e),
        });
    }
    let all_diagonalized = per_target.iter().all(|t| t.diagonalized);

    // The reserved-slot tops must agree with the construction's intent on
    // every stabilized reserved slot the run reached.
    let settle_bound = budget / 2;
    let mut rho_entries = Vec::new();
    for (e, req) in b.reqs.iter().enumerate() {
        if req.x.is_none() {
            continue;
        }
        for (slot, expected) in [
            (3 * e, req.r_hat_y.last().copied()),
            (3 * e + 1, req.r_hat_x.last().copied()),
        ] {
            let Some(expected) = expected else { continue };
            let reached = slot < trace.final_state.stacks.len()
                && !trace.final_state.stacks[slot].is_empty();
            if !reached || trace.r_last_change(slot) > settle_bound {
                continue;
            }
            let actual = trace.final_state.stacks[slot].last().copied();
            rho_entries.push(RhoEntry { slot, expected, actual, ok: actual == Some(expected) });
        }
    }
    let rho_ok = rho_entries.iter().all(|r| r.ok);

    let completion = completion_check(|c| limit.candidate(c), &atom_window);
    let entry_stage_ok = b
        .axioms
        .iter()
        .all(|ax| b.entry_stage.get(&ax.leading).is_some_and(|&s| s <= ax.stage));
    let actions: Vec<(u64, u64)> =
        b.reqs.iter().enumerate().map(|(e, r)| (e as u64, r.actions)).collect();

    let report = DiagReport {
        per_target,
        completion,
        validation,
        rho_entries,
        rho_ok,
        gamma_fresh_ok: b.gamma_fresh_ok,
        entry_stage_ok,
        actions,
        all_diagonalized,
    };
    Ok(DiagOutcome { spec, trace, limit, report })
}
