//! The decidable propositional deduction operator with connectives.
//!
//! `entails` is semantic consequence decided by truth tables over the atoms
//! occurring in the query, with a configurable atom cap. Larger queries
//! raised internally by the staged procedures go through a backtracking
//! satisfiability core (`solve`) with generalized unit propagation and a
//! model cache, so the staged operator stays usable at trace scale.
//!
//! Entailment is used extensionally: `H(X)` is the set of sentences that
//! follow from `X` together with the stream of added axioms, and the staged
//! view `H_s` bounds codes and premises by the stage.

use crate::codec::{atom, decode, disj, imp, neg, Code, Formula, CONTRADICTION};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Default cap on the number of distinct atoms in a truth-table query.
pub const DEFAULT_ATOM_CAP: usize = 24;

/// Default cap on the size of a premise set `D` in a staged derivation.
pub const DEFAULT_PREMISE_CAP: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("query mentions {atoms} atoms, exceeding the cap of {cap}")]
    AtomBudget { atoms: usize, cap: usize },
    #[error("solver step budget exhausted")]
    SolverBudget,
}

// ---------------------------------------------------------------------------
// Compiled formulas and the satisfiability core
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum CNode {
    Atom(u32),
    Not(u32),
    And(u32, u32),
    Or(u32, u32),
    Imp(u32, u32),
}

/// A compilation arena mapping codes to node trees over dense atom indices.
/// Kept persistent inside [`EvalCtx`] so staged queries share compilations.
#[derive(Default)]
struct Comp {
    nodes: Vec<CNode>,
    atom_ids: BTreeMap<u64, u32>,
    atoms: Vec<u64>,
    memo: BTreeMap<Code, u32>,
}

impl Comp {
    fn atom_id(&mut self, i: u64) -> u32 {
        if let Some(&id) = self.atom_ids.get(&i) {
            return id;
        }
        let id = self.atoms.len() as u32;
        self.atoms.push(i);
        self.atom_ids.insert(i, id);
        id
    }

    fn compile(&mut self, code: Code) -> u32 {
        if let Some(&n) = self.memo.get(&code) {
            return n;
        }
        let node = match decode(code) {
            Formula::Atom(i) => {
                let id = self.atom_id(i);
                CNode::Atom(id)
            }
            Formula::Not(a) => {
                let a = self.compile(a);
                CNode::Not(a)
            }
            Formula::Imp(a, b) => {
                let (a, b) = (self.compile(a), self.compile(b));
                CNode::Imp(a, b)
            }
            Formula::And(a, b) => {
                let (a, b) = (self.compile(a), self.compile(b));
                CNode::And(a, b)
            }
            Formula::Or(a, b) => {
                let (a, b) = (self.compile(a), self.compile(b));
                CNode::Or(a, b)
            }
        };
        let idx = self.nodes.len() as u32;
        self.nodes.push(node);
        self.memo.insert(code, idx);
        idx
    }

    /// Compile the negation of a code without leaving the arena (avoids
    /// code-space arithmetic on large codes).
    fn compile_negated(&mut self, code: Code) -> u32 {
        let inner = self.compile(code);
        let idx = self.nodes.len() as u32;
        self.nodes.push(CNode::Not(inner));
        idx
    }
}

/// Three-valued evaluation: -1 false, 0 unknown, 1 true.
fn eval3(nodes: &[CNode], root: u32, assign: &[i8]) -> i8 {
    match nodes[root as usize] {
        CNode::Atom(a) => assign[a as usize],
        CNode::Not(x) => -eval3(nodes, x, assign),
        CNode::And(x, y) => {
            let vx = eval3(nodes, x, assign);
            if vx == -1 {
                return -1;
            }
            let vy = eval3(nodes, y, assign);
            vx.min(vy)
        }
        CNode::Or(x, y) => {
            let vx = eval3(nodes, x, assign);
            if vx == 1 {
                return 1;
            }
            let vy = eval3(nodes, y, assign);
            vx.max(vy)
        }
        CNode::Imp(x, y) => {
            let vx = eval3(nodes, x, assign);
            if vx == -1 {
                return 1;
            }
            let vy = eval3(nodes, y, assign);
            (-vx).max(vy)
        }
    }
}

fn unassigned_atoms(nodes: &[CNode], root: u32, assign: &[i8], out: &mut Vec<u32>) {
    match nodes[root as usize] {
        CNode::Atom(a) => {
            if assign[a as usize] == 0 && !out.contains(&a) {
                out.push(a);
            }
        }
        CNode::Not(x) => unassigned_atoms(nodes, x, assign, out),
        CNode::And(x, y) | CNode::Or(x, y) | CNode::Imp(x, y) => {
            unassigned_atoms(nodes, x, assign, out);
            unassigned_atoms(nodes, y, assign, out);
        }
    }
}

struct SatProblem<'a> {
    nodes: &'a [CNode],
    roots: &'a [u32],
    steps: u64,
    budget: u64,
}

impl<'a> SatProblem<'a> {
    fn tick(&mut self, n: u64) -> Result<(), LogicError> {
        self.steps += n;
        if self.steps > self.budget {
            return Err(LogicError::SolverBudget);
        }
        Ok(())
    }

    /// Backtracking search; returns a model or None.
    fn search(&mut self, assign: &mut Vec<i8>) -> Result<Option<Vec<i8>>, LogicError> {
        let mut trail: Vec<u32> = Vec::new();
        // Propagation to fixpoint.
        loop {
            self.tick(self.roots.len() as u64)?;
            let mut all_true = true;
            let mut forced: Option<(u32, i8)> = None;
            let mut best_branch: Option<(usize, Vec<u32>)> = None;
            let mut scratch = Vec::new();
            for &r in self.roots {
                match eval3(self.nodes, r, assign) {
                    1 => continue,
                    -1 => {
                        for a in trail.drain(..) {
                            assign[a as usize] = 0;
                        }
                        return Ok(None);
                    }
                    _ => {
                        all_true = false;
                        scratch.clear();
                        unassigned_atoms(self.nodes, r, assign, &mut scratch);
                        if scratch.len() == 1 {
                            let a = scratch[0];
                            assign[a as usize] = 1;
                            let vt = eval3(self.nodes, r, assign);
                            assign[a as usize] = -1;
                            let vf = eval3(self.nodes, r, assign);
                            assign[a as usize] = 0;
                            match (vt == -1, vf == -1) {
                                (true, true) => {
                                    for a in trail.drain(..) {
                                        assign[a as usize] = 0;
                                    }
                                    return Ok(None);
                                }
                                (true, false) => forced = Some((a, -1)),
                                (false, true) => forced = Some((a, 1)),
                                (false, false) => {}
                            }
                            if forced.is_some() {
                                break;
                            }
                        }
                        match &best_branch {
                            Some((len, _)) if *len <= scratch.len() => {}
                            _ => best_branch = Some((scratch.len(), scratch.clone())),
                        }
                    }
                }
            }
            if let Some((a, v)) = forced {
                assign[a as usize] = v;
                trail.push(a);
                continue;
            }
            if all_true {
                // Complete the model deterministically with false.
                let model = assign.iter().map(|&v| if v == 0 { -1 } else { v }).collect();
                for a in trail.drain(..) {
                    assign[a as usize] = 0;
                }
                return Ok(Some(model));
            }
            // Branch.
            let (_, atoms) = best_branch.expect("undetermined formula must have unassigned atoms");
            let a = atoms[0];
            for v in [-1i8, 1i8] {
                assign[a as usize] = v;
                let result = self.search(assign)?;
                assign[a as usize] = 0;
                if let Some(model) = result {
                    for a in trail.drain(..) {
                        assign[a as usize] = 0;
                    }
                    return Ok(Some(model));
                }
            }
            for a in trail.drain(..) {
                assign[a as usize] = 0;
            }
            return Ok(None);
        }
    }
}

/// Mutable evaluation context: a persistent compilation arena plus the
/// solver's model cache.
///
/// Each concurrent run owns its own context; operators themselves stay
/// immutable.
#[derive(Default)]
pub struct EvalCtx {
    comp: Comp,
    /// Last satisfying assignment seen, indexed like `comp.atoms`
    /// (-1 false, 0 unseen, 1 true).
    model_cache: Vec<i8>,
    /// Step budget per satisfiability query.
    pub solver_budget: u64,
}

impl EvalCtx {
    pub fn new() -> Self {
        EvalCtx { comp: Comp::default(), model_cache: Vec::new(), solver_budget: 50_000_000 }
    }

    /// Satisfiability of the compiled roots, with model caching.
    fn sat_roots(&mut self, roots: &[u32]) -> Result<bool, LogicError> {
        let natoms = self.comp.atoms.len();
        // Fast path: try the cached model, completed with false.
        if !self.model_cache.is_empty() {
            let mut assign = vec![-1i8; natoms];
            for (i, slot) in assign.iter_mut().enumerate().take(self.model_cache.len()) {
                if self.model_cache[i] == 1 {
                    *slot = 1;
                }
            }
            if roots.iter().all(|&r| eval3(&self.comp.nodes, r, &assign) == 1) {
                return Ok(true);
            }
        }
        let mut problem = SatProblem {
            nodes: &self.comp.nodes,
            roots,
            steps: 0,
            budget: self.solver_budget.max(1_000),
        };
        let mut assign = vec![0i8; natoms];
        match problem.search(&mut assign)? {
            Some(model) => {
                self.model_cache = model;
                Ok(true)
            }
            None => Ok(false),
        }
    }
}

/// Semantic consequence via the solver (no atom cap): `premises ∪ extras ⊨ x`.
pub(crate) fn entails_unbounded(
    ctx: &mut EvalCtx,
    premises: &[Code],
    x: Code,
    extras: &[Code],
) -> Result<bool, LogicError> {
    let mut roots: Vec<u32> = Vec::with_capacity(premises.len() + extras.len() + 1);
    for &c in premises.iter().chain(extras.iter()) {
        roots.push(ctx.comp.compile(c));
    }
    roots.push(ctx.comp.compile_negated(x));
    Ok(!ctx.sat_roots(&roots)?)
}

// ---------------------------------------------------------------------------
// The public truth-table decision
// ---------------------------------------------------------------------------

/// Decide `premises ∪ extra_axioms ⊨ x` by a truth table over the atoms
/// occurring in the query.
///
/// Errors with [`LogicError::AtomBudget`] if the query mentions more than
/// `atom_cap` distinct atoms.
pub fn entails(
    premises: &[Code],
    x: Code,
    extras: &[Code],
    atom_cap: usize,
) -> Result<bool, LogicError> {
    let mut comp = Comp::default();
    let proots: Vec<u32> = premises.iter().chain(extras.iter()).map(|&c| comp.compile(c)).collect();
    let xroot = comp.compile(x);
    let n = comp.atoms.len();
    if n > atom_cap {
        return Err(LogicError::AtomBudget { atoms: n, cap: atom_cap });
    }
    let mut assign = vec![-1i8; n];
    for mask in 0u64..(1u64 << n) {
        for (i, slot) in assign.iter_mut().enumerate() {
            *slot = if mask >> i & 1 == 1 { 1 } else { -1 };
        }
        let premises_hold = proots.iter().all(|&r| eval3(&comp.nodes, r, &assign) == 1);
        if premises_hold && eval3(&comp.nodes, xroot, &assign) != 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Axiom streams and the staged entailment operator
// ---------------------------------------------------------------------------

/// A stage-indexed c.e. list of added axioms over the implicit base of
/// classical propositional tautologies. Stage entries are deltas; the
/// cumulative union is implied.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomStream {
    pub extras: Vec<StreamDelta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamDelta {
    pub s: u64,
    pub codes: Vec<Code>,
}

impl AxiomStream {
    pub fn empty() -> Self {
        AxiomStream { extras: Vec::new() }
    }

    pub fn from_deltas(mut deltas: Vec<(u64, Vec<Code>)>) -> Self {
        deltas.sort_by_key(|d| d.0);
        AxiomStream {
            extras: deltas.into_iter().map(|(s, codes)| StreamDelta { s, codes }).collect(),
        }
    }

    /// All axioms available at stage `s` (cumulative).
    pub fn at_stage(&self, s: u64) -> Vec<Code> {
        let mut out = Vec::new();
        for d in &self.extras {
            if d.s <= s {
                out.extend_from_slice(&d.codes);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// All axioms of the limit theory.
    pub fn limit(&self) -> Vec<Code> {
        self.at_stage(u64::MAX)
    }

    /// The last stage at which the stream changes.
    pub fn last_delta_stage(&self) -> u64 {
        self.extras.iter().map(|d| d.s).max().unwrap_or(0)
    }
}

/// The staged deduction operator `H_s(X) = {x < s : D ⊆ X∩[0,s), |D| ≤ cap,
/// D ∪ extras_s ⊨ x}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntailmentOperator {
    pub stream: AxiomStream,
    /// Atom cap for truth-table queries issued through [`entails`].
    pub atom_cap: usize,
    /// Cap on the premise-set size of a staged derivation; `None` disables it.
    pub premise_cap: Option<usize>,
}

impl EntailmentOperator {
    pub fn new(stream: AxiomStream) -> Self {
        EntailmentOperator {
            stream,
            atom_cap: DEFAULT_ATOM_CAP,
            premise_cap: Some(DEFAULT_PREMISE_CAP),
        }
    }

    pub fn pure() -> Self {
        Self::new(AxiomStream::empty())
    }

    /// Membership `y ∈ H_s(X)`.
    pub fn member(
        &self,
        ctx: &mut EvalCtx,
        s: u64,
        xs: &[Code],
        y: Code,
    ) -> Result<bool, LogicError> {
        if y >= s {
            return Ok(false);
        }
        let premises: Vec<Code> = xs.iter().copied().filter(|&c| c < s).collect();
        let extras = self.stream.at_stage(s);
        // Identity derivation: D = {y}.
        if premises.contains(&y) {
            return Ok(true);
        }
        if !entails_unbounded(ctx, &premises, y, &extras)? {
            return Ok(false);
        }
        match self.premise_cap {
            Some(cap) if premises.len() > cap => {
                // Entailed by the full admissible set; certify a small
                // premise set by deletion-based core minimization.
                if entails_unbounded(ctx, &[], y, &extras)? {
                    return Ok(true);
                }
                let core = minimize_core(ctx, premises, y, &extras)?;
                Ok(core.len() <= cap)
            }
            _ => Ok(true),
        }
    }

    /// The finite set `H_s(X)` restricted to codes below `bound`.
    pub fn apply_bounded(
        &self,
        ctx: &mut EvalCtx,
        s: u64,
        xs: &[Code],
        bound: u64,
    ) -> Result<BTreeSet<Code>, LogicError> {
        let hi = bound.min(s);
        let mut out = BTreeSet::new();
        for y in 0..hi {
            if self.member(ctx, s, xs, y)? {
                out.insert(y);
            }
        }
        Ok(out)
    }
}

/// Deletion-based minimization of an entailing premise set.
fn minimize_core(
    ctx: &mut EvalCtx,
    mut core: Vec<Code>,
    y: Code,
    extras: &[Code],
) -> Result<Vec<Code>, LogicError> {
    let mut i = 0;
    while i < core.len() {
        let removed = core.remove(i);
        if entails_unbounded(ctx, &core, y, extras)? {
            // Still entailing without it; keep it removed.
        } else {
            core.insert(i, removed);
            i += 1;
        }
    }
    Ok(core)
}

/// Convenience: the staged application from the spec's operator surface.
///
/// Materializes `{x < s : ...}`, so callers should keep `s` modest; the
/// engine itself only issues targeted membership queries.
pub fn stage_apply(
    op: &EntailmentOperator,
    ctx: &mut EvalCtx,
    s: u64,
    xs: &[Code],
) -> Result<BTreeSet<Code>, LogicError> {
    op.apply_bounded(ctx, s, xs, s)
}

// ---------------------------------------------------------------------------
// Connective laws (systems with connectives)
// ---------------------------------------------------------------------------

/// One sampled instance for the connective-laws check.
#[derive(Debug, Clone)]
pub struct LawSample {
    pub xs: Vec<Code>,
    pub x: Code,
    pub y: Code,
    /// Probe targets for the extensional equalities in laws (2) and (4).
    pub probes: Vec<Code>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawViolation {
    pub law: u8,
    pub sample: usize,
    pub detail: String,
}

/// Verify the six laws of a deduction operator with connectives on sampled
/// instances, against the truth-table decision.
pub fn connective_laws_check(
    op: &EntailmentOperator,
    samples: &[LawSample],
) -> Result<Vec<LawViolation>, LogicError> {
    let extras = op.stream.limit();
    let cap = op.atom_cap;
    let mut violations = Vec::new();
    let ent = |premises: &[Code], target: Code| entails(premises, target, &extras, cap);
    for (idx, sm) in samples.iter().enumerate() {
        let c = CONTRADICTION;
        let with = |extra: &[Code]| {
            let mut v = sm.xs.clone();
            v.extend_from_slice(extra);
            v
        };
        // (1) c ∈ H({x, ¬x})
        if !ent(&[sm.x, neg(sm.x)], c)? {
            violations.push(LawViolation { law: 1, sample: idx, detail: format!("c not derived from {{{}, !{}}}", sm.x, sm.x) });
        }
        // (2) H({¬¬x}) = H({x}) on probes
        for &t in &sm.probes {
            let a = ent(&[neg(neg(sm.x))], t)?;
            let b = ent(&[sm.x], t)?;
            if a != b {
                violations.push(LawViolation { law: 2, sample: idx, detail: format!("probe {t}: !!{} vs {}", sm.x, sm.x) });
            }
        }
        // (3) x ∨ ¬x ∈ H(∅)
        if !ent(&[], disj(sm.x, neg(sm.x)))? {
            violations.push(LawViolation { law: 3, sample: idx, detail: format!("excluded middle fails for {}", sm.x) });
        }
        // (4) H(X ∪ {x∨y}) = H(X ∪ {x}) ∩ H(X ∪ {y}) on probes
        for &t in &sm.probes {
            let lhs = ent(&with(&[disj(sm.x, sm.y)]), t)?;
            let rhs = ent(&with(&[sm.x]), t)? && ent(&with(&[sm.y]), t)?;
            if lhs != rhs {
                violations.push(LawViolation { law: 4, sample: idx, detail: format!("probe {t} under X∪{{{}|{}}}", sm.x, sm.y) });
            }
        }
        // (5) c ∈ H(X ∪ {x}) ⇒ ¬x ∈ H(X)
        if ent(&with(&[sm.x]), c)? && !ent(&sm.xs, neg(sm.x))? {
            violations.push(LawViolation { law: 5, sample: idx, detail: format!("refutation of {} not internalized", sm.x) });
        }
        // (6) x ∈ H(X ∪ {y}) ⇔ y → x ∈ H(X)
        let lhs = ent(&with(&[sm.y]), sm.x)?;
        let rhs = ent(&sm.xs, imp(sm.y, sm.x))?;
        if lhs != rhs {
            violations.push(LawViolation { law: 6, sample: idx, detail: format!("deduction theorem fails for {} -> {}", sm.y, sm.x) });
        }
    }
    Ok(violations)
}

// ---------------------------------------------------------------------------
// Completion checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompletionVerdict {
    /// Exactly one of x, ¬x is in the candidate set.
    ExactlyOne,
    Both,
    Neither,
    /// Candidate membership did not stabilize for x or ¬x.
    Unknown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionReport {
    pub entries: Vec<(Code, CompletionVerdict)>,
}

impl CompletionReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|(_, v)| *v == CompletionVerdict::ExactlyOne)
    }

    pub fn witnesses(&self) -> Vec<Code> {
        self.entries
            .iter()
            .filter(|(_, v)| *v != CompletionVerdict::ExactlyOne)
            .map(|(x, _)| *x)
            .collect()
    }
}

/// Check the exactly-one condition over a window of atoms, given candidate
/// membership (`None` meaning the candidate did not stabilize there).
pub fn completion_check<F>(candidate: F, atom_window: &[u64]) -> CompletionReport
where
    F: Fn(Code) -> Option<bool>,
{
    let mut entries = Vec::new();
    for &i in atom_window {
        let x = atom(i);
        let verdict = match (candidate(x), candidate(neg(x))) {
            (Some(true), Some(false)) | (Some(false), Some(true)) => CompletionVerdict::ExactlyOne,
            (Some(true), Some(true)) => CompletionVerdict::Both,
            (Some(false), Some(false)) => CompletionVerdict::Neither,
            _ => CompletionVerdict::Unknown,
        };
        entries.push((x, verdict));
    }
    CompletionReport { entries }
}

// ---------------------------------------------------------------------------
// The theories T_A
// ---------------------------------------------------------------------------

/// A stage-indexed approximation to a c.e. set of naturals, given by full
/// per-stage sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CeApprox {
    pub stages: Vec<(u64, BTreeSet<u64>)>,
}

impl CeApprox {
    pub fn constant(set: BTreeSet<u64>) -> Self {
        CeApprox { stages: vec![(0, set)] }
    }

    /// The limit set (union of all stages).
    pub fn limit(&self) -> BTreeSet<u64> {
        let mut out = BTreeSet::new();
        for (_, s) in &self.stages {
            out.extend(s.iter().copied());
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("approximation is not monotone at stage {stage}: {lost} disappears")]
pub struct NonMonotone {
    pub stage: u64,
    pub lost: u64,
}

/// Build the axiom stream of the theory `T_A`: classical propositional
/// calculus plus the axioms `{p_i : i ∈ A}`, staged along the approximation.
pub fn theory_ta(a_approx: &CeApprox) -> Result<AxiomStream, NonMonotone> {
    let mut stages = a_approx.stages.clone();
    stages.sort_by_key(|(s, _)| *s);
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut deltas = Vec::new();
    for (s, set) in stages {
        if let Some(&lost) = seen.iter().find(|i| !set.contains(i)) {
            return Err(NonMonotone { stage: s, lost });
        }
        let new: Vec<Code> = set.iter().filter(|i| !seen.contains(i)).map(|&i| atom(i)).collect();
        if !new.is_empty() {
            deltas.push((s, new));
        }
        seen = set;
    }
    Ok(AxiomStream::from_deltas(deltas))
}
