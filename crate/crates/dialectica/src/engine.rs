//! The three staged procedures, with full traces and budget-bounded limit
//! reporting.
//!
//! A stage transition inspects `χ_s(k) = H_s(L_s(k+1))` for `k ≤ m(s)` and
//! fires exactly one clause: extension, revision (p and q), discard, or
//! reset (d and q). The contradiction slot is found by binary search over
//! stack-top prefixes, which is sound because `χ_s` is monotone in `k`.
//!
//! One case the formal clause split leaves open is slot `z+1` after a
//! revision at `z`: the marker moves to `z`, so slot `z+1` is semantically
//! dead and the next extension overwrites it; the engine empties it, which
//! keeps the marker invariant checkable.

use crate::codec::Code;
use crate::logic::EvalCtx;
use crate::operators::OperatorError;
use crate::systems::{
    validate, SystemKind, SystemSpec, SystemsError, ValidationReport, Verdict,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("spec failed validation: {0:?}")]
    InvalidSpec(Box<ValidationReport>),
    #[error(transparent)]
    Systems(#[from] SystemsError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("revision fired at empty slot {slot} at stage {stage}")]
    ReviseEmptySlot { slot: usize, stage: u64 },
}

/// Per-stage procedure state: the stacks `r_s(u)` and the marker `m(s)`,
/// the greatest slot with a nonempty stack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureState {
    pub stage: u64,
    pub stacks: Vec<Vec<Code>>,
    pub marker: usize,
}

impl ProcedureState {
    /// Stage 0: `r_0(0) = ⟨f_0⟩`, everything else empty.
    pub fn initial(f0: Code) -> Self {
        ProcedureState { stage: 0, stacks: vec![vec![f0]], marker: 0 }
    }

    /// Nonempty slots up to the marker, with their stack tops, ascending.
    pub fn entries(&self) -> Vec<(usize, Code)> {
        self.stacks
            .iter()
            .enumerate()
            .filter_map(|(u, st)| st.last().map(|&t| (u, t)))
            .collect()
    }

    /// `L_s(u)`: tops of nonempty slots strictly below `u`.
    pub fn l_at(&self, u: usize) -> BTreeSet<Code> {
        self.entries().into_iter().filter(|&(slot, _)| slot < u).map(|(_, t)| t).collect()
    }

    /// Check the marker invariant: `m` is the greatest nonempty slot.
    pub fn marker_invariant_holds(&self) -> bool {
        let greatest = self.entries().last().map(|&(u, _)| u);
        greatest == Some(self.marker)
    }
}

/// Which clause fired on a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "clause", rename_all = "snake_case")]
pub enum Clause {
    /// No contradiction below the marker: propose the next axiom.
    Extend,
    /// Replace the top of slot `z` by its revision (p-clause (2),
    /// q-clause (3)).
    Revise { z: usize },
    /// Empty slot `z` and propose at `z+1` (d/q-clause (2.2)).
    Discard { z: usize },
    /// `c ∈ H_s(∅)`: back to the initial configuration (clause (2.1)).
    Reset,
}

impl Clause {
    pub fn z(&self) -> Option<usize> {
        match self {
            Clause::Extend | Clause::Reset => None,
            Clause::Revise { z } | Clause::Discard { z } => Some(*z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: u64,
    pub clause: Clause,
    pub m: usize,
    /// Least slot whose stack changed on this transition, if any (a reset
    /// from the initial configuration changes nothing).
    pub min_changed: Option<usize>,
}

/// Full per-stage snapshot, recorded on demand for small runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub stage: u64,
    pub m: usize,
    pub stacks: Vec<Vec<Code>>,
    /// The provisional theses `A_s`, materialized up to the snapshot bound.
    pub a: BTreeSet<Code>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub kind: SystemKind,
    pub budget: u64,
    pub events: Vec<StageEvent>,
    pub final_state: ProcedureState,
    /// Last stage at which each slot's stack changed (slot-indexed).
    pub r_last_change: Vec<u64>,
    /// Max stack depth each slot ever reached.
    pub max_depth: Vec<usize>,
    /// Codes whose `A_s` membership was tracked per stage.
    pub watch: Vec<Code>,
    /// Row `s-1` holds membership of each watched code in `A_s`.
    pub watch_rows: Vec<Vec<bool>>,
    pub snapshots: Option<Vec<Snapshot>>,
}

impl Trace {
    /// Last stage at which `L_s(u)` changed: the last transition whose least
    /// changed slot lies below `u`.
    pub fn l_last_change(&self, u: usize) -> u64 {
        self.events
            .iter()
            .filter(|e| e.min_changed.is_some_and(|mc| mc < u))
            .map(|e| e.stage)
            .max()
            .unwrap_or(0)
    }

    pub fn r_last_change(&self, u: usize) -> u64 {
        self.r_last_change.get(u).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub budget: u64,
    /// Codes whose `A_s` membership is recorded at every stage.
    pub watch: Vec<Code>,
    /// Record full snapshots (stacks and a bounded materialization of
    /// `A_s`); intended for small budgets.
    pub record_snapshots: bool,
    /// Code bound for materialized `A_s` in snapshots.
    pub snapshot_bound: u64,
    /// Validate the spec before running.
    pub validate_first: bool,
}

impl RunOptions {
    pub fn new(budget: u64) -> Self {
        RunOptions {
            budget,
            watch: Vec::new(),
            record_snapshots: false,
            snapshot_bound: 256,
            validate_first: true,
        }
    }

    pub fn with_watch(mut self, watch: Vec<Code>) -> Self {
        self.watch = watch;
        self
    }

    pub fn with_snapshots(mut self, bound: u64) -> Self {
        self.record_snapshots = true;
        self.snapshot_bound = bound;
        self
    }
}

/// Least slot `k ≤ m` with `target ∈ χ_s(k)`, or `None`.
fn least_slot_deriving(
    spec: &SystemSpec,
    ctx: &mut EvalCtx,
    state: &ProcedureState,
    entries: &[(usize, Code)],
    target: Code,
) -> Result<Option<usize>, EngineError> {
    let s = state.stage;
    let full: BTreeSet<Code> = entries.iter().map(|&(_, t)| t).collect();
    if !spec.operator.member(ctx, s, &full, target)? {
        return Ok(None);
    }
    if spec.operator.member(ctx, s, &BTreeSet::new(), target)? {
        return Ok(Some(0));
    }
    // Binary search the least prefix of stack tops that derives the target.
    let (mut lo, mut hi) = (1usize, entries.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let prefix: BTreeSet<Code> = entries[..mid].iter().map(|&(_, t)| t).collect();
        if spec.operator.member(ctx, s, &prefix, target)? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(entries[lo - 1].0))
}

/// Decide which clause fires on the transition out of `state`.
pub fn decide_clause(
    spec: &SystemSpec,
    ctx: &mut EvalCtx,
    state: &ProcedureState,
) -> Result<Clause, EngineError> {
    let entries = state.entries();
    match spec.kind {
        SystemKind::P => match least_slot_deriving(spec, ctx, state, &entries, spec.c)? {
            None => Ok(Clause::Extend),
            Some(z) => Ok(Clause::Revise { z }),
        },
        SystemKind::D => match least_slot_deriving(spec, ctx, state, &entries, spec.c)? {
            None => Ok(Clause::Extend),
            Some(z) => {
                if spec.operator.member(ctx, state.stage, &BTreeSet::new(), spec.c)? {
                    Ok(Clause::Reset)
                } else {
                    Ok(Clause::Discard { z })
                }
            }
        },
        SystemKind::Q => {
            let cm = spec.c_minus.expect("validated q-system has a counterexample");
            let zc = least_slot_deriving(spec, ctx, state, &entries, spec.c)?;
            let zcm = least_slot_deriving(spec, ctx, state, &entries, cm)?;
            // Clause (2) fires when c appears at a slot with no strictly
            // earlier counterexample; clause (3) when the counterexample
            // strictly precedes every c.
            match (zc, zcm) {
                (None, None) => Ok(Clause::Extend),
                (Some(zc), zcm) if zcm.is_none_or(|zcm| zc <= zcm) => {
                    if spec.operator.member(ctx, state.stage, &BTreeSet::new(), spec.c)? {
                        Ok(Clause::Reset)
                    } else {
                        Ok(Clause::Discard { z: zc })
                    }
                }
                (_, Some(zcm)) => Ok(Clause::Revise { z: zcm }),
                (Some(_), None) => unreachable!("guard above covers this arm"),
            }
        }
    }
}

/// Apply one transition, producing the successor state and the least slot
/// whose stack changed (if any).
pub fn step_once(
    spec: &SystemSpec,
    ctx: &mut EvalCtx,
    state: &ProcedureState,
) -> Result<(ProcedureState, Clause, Option<usize>), EngineError> {
    let clause = decide_clause(spec, ctx, state)?;
    let mut stacks = state.stacks.clone();
    let marker;
    let min_changed;
    match clause {
        Clause::Extend => {
            let next = state.marker + 1;
            if stacks.len() <= next {
                stacks.resize(next + 1, Vec::new());
            }
            stacks[next] = vec![spec.f.value(next as u64)?];
            marker = next;
            min_changed = Some(next);
        }
        Clause::Revise { z } => {
            let top = *stacks[z]
                .last()
                .ok_or(EngineError::ReviseEmptySlot { slot: z, stage: state.stage })?;
            let fm = spec.f_minus.as_ref().expect("validated p/q-system has a revising function");
            stacks[z].push(fm.value(top)?);
            for st in stacks.iter_mut().skip(z + 1) {
                st.clear();
            }
            marker = z;
            min_changed = Some(z);
        }
        Clause::Discard { z } => {
            stacks[z].clear();
            if stacks.len() <= z + 1 {
                stacks.resize(z + 2, Vec::new());
            }
            stacks[z + 1] = vec![spec.f.value(z as u64 + 1)?];
            for st in stacks.iter_mut().skip(z + 2) {
                st.clear();
            }
            marker = z + 1;
            min_changed = Some(z);
        }
        Clause::Reset => {
            let f0 = spec.f.value(0)?;
            min_changed = state
                .stacks
                .iter()
                .enumerate()
                .find(|(u, st)| {
                    if *u == 0 {
                        st.as_slice() != [f0]
                    } else {
                        !st.is_empty()
                    }
                })
                .map(|(u, _)| u);
            stacks = vec![vec![f0]];
            marker = 0;
        }
    }
    Ok((ProcedureState { stage: state.stage + 1, stacks, marker }, clause, min_changed))
}

/// Run the kind-appropriate procedure for `budget` stages from the standard
/// stage-0 configuration.
pub fn run(spec: &SystemSpec, ctx: &mut EvalCtx, opts: &RunOptions) -> Result<Trace, EngineError> {
    if opts.validate_first {
        let report = validate(spec, ctx, opts.budget.max(1))?;
        if report.verdict == Verdict::Invalid {
            return Err(EngineError::InvalidSpec(Box::new(report)));
        }
    }
    let mut state = ProcedureState::initial(spec.f.value(0)?);
    let mut events = Vec::with_capacity(opts.budget as usize);
    let mut r_last_change: Vec<u64> = vec![0];
    let mut max_depth: Vec<usize> = vec![1];
    let mut watch_rows = Vec::new();
    let mut snapshots = if opts.record_snapshots {
        Some(vec![Snapshot {
            stage: 0,
            m: 0,
            stacks: state.stacks.clone(),
            a: BTreeSet::new(),
        }])
    } else {
        None
    };

    for _ in 0..opts.budget {
        let (next, clause, min_changed) = step_once(spec, ctx, &state)?;
        debug_assert!(next.marker_invariant_holds());
        let stage = next.stage;
        // Change bookkeeping: stamp every slot whose stack differs.
        let slots = state.stacks.len().max(next.stacks.len());
        if r_last_change.len() < slots {
            r_last_change.resize(slots, 0);
            max_depth.resize(slots, 0);
        }
        for u in min_changed.unwrap_or(slots)..slots {
            let before = state.stacks.get(u).map_or(&[] as &[Code], |v| v.as_slice());
            let after = next.stacks.get(u).map_or(&[] as &[Code], |v| v.as_slice());
            if before != after {
                r_last_change[u] = stage;
            }
            max_depth[u] = max_depth[u].max(after.len());
        }
        events.push(StageEvent { stage, clause, m: next.marker, min_changed });

        // A_{s+1} = H_{s+1}(L_{s+1}(m)) when m > 0, else ∅.
        if !opts.watch.is_empty() {
            let row = if next.marker > 0 {
                let l = next.l_at(next.marker);
                let mut row = Vec::with_capacity(opts.watch.len());
                for &w in &opts.watch {
                    row.push(spec.operator.member(ctx, stage, &l, w)?);
                }
                row
            } else {
                vec![false; opts.watch.len()]
            };
            watch_rows.push(row);
        }
        if let Some(snaps) = snapshots.as_mut() {
            let a = if next.marker > 0 {
                let l = next.l_at(next.marker);
                spec.operator.apply_bounded(ctx, stage, &l, opts.snapshot_bound)?
            } else {
                BTreeSet::new()
            };
            snaps.push(Snapshot { stage, m: next.marker, stacks: next.stacks.clone(), a });
        }
        state = next;
    }

    Ok(Trace {
        kind: spec.kind,
        budget: opts.budget,
        events,
        final_state: state,
        r_last_change,
        max_depth,
        watch: opts.watch.clone(),
        watch_rows,
        snapshots,
    })
}

// ---------------------------------------------------------------------------
// Limit reporting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotReport {
    pub slot: usize,
    pub f_value: Code,
    pub r_last_change: u64,
    pub l_last_change: u64,
    pub stabilized: bool,
    pub final_stack: Vec<Code>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HlCandidate {
    /// Greatest slot whose `L` stayed constant over the final half.
    pub u_star: usize,
    /// `H(L(u_star))` at the final stage, bounded.
    pub codes: BTreeSet<Code>,
    pub bound: u64,
    /// Whether the marker returns to `u_star` on the final half, making
    /// the candidate exhaustive (anything outside it is cofinally absent
    /// from `A_s`), not merely a lower bound.
    pub exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimitReport {
    pub window: usize,
    pub budget: u64,
    /// Stages strictly above this bound form the final half.
    pub settle_bound: u64,
    pub slots: Vec<SlotReport>,
    pub all_stabilized: bool,
    /// Candidate membership per watched code, from `A_s` over the final
    /// half: constant-true, constant-false, or unsettled.
    pub a_window: BTreeMap<Code, Option<bool>>,
    pub hl: Option<HlCandidate>,
    /// Slots whose stack depth exceeded the loop threshold.
    pub loop_warnings: Vec<usize>,
}

impl LimitReport {
    /// Candidate final-theses membership for a code, preferring the watched
    /// `A_s` evidence and falling back on the `H(L(u))` route. The latter
    /// is a lower bound on the final theses, so it yields negatives only
    /// when exhaustive.
    pub fn candidate(&self, code: Code) -> Option<bool> {
        if let Some(&v) = self.a_window.get(&code) {
            if v.is_some() {
                return v;
            }
        }
        match &self.hl {
            Some(hl) if code < hl.bound => {
                if hl.codes.contains(&code) {
                    Some(true)
                } else if hl.exhaustive {
                    Some(false)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

/// Default stack-depth threshold above which a slot earns a loop warning.
pub const DEFAULT_LOOP_DEPTH: usize = 32;

/// Extract per-slot stabilization evidence and candidate final theses from
/// a trace. Stabilization is a budget heuristic: a slot counts as stable
/// when its stack did not change over the final half of the run.
pub fn limit_report(
    spec: &SystemSpec,
    ctx: &mut EvalCtx,
    trace: &Trace,
    window: usize,
    loop_depth: usize,
    bound_hint: u64,
) -> Result<LimitReport, EngineError> {
    let budget = trace.budget;
    let settle_bound = budget / 2;
    let reached = trace.final_state.stacks.len();
    let mut slots = Vec::new();
    for u in 0..window {
        let r_lc = trace.r_last_change(u);
        let l_lc = trace.l_last_change(u);
        slots.push(SlotReport {
            slot: u,
            f_value: spec.f.value(u as u64)?,
            r_last_change: r_lc,
            l_last_change: l_lc,
            // A slot the run never reached has no limit evidence at all.
            stabilized: r_lc <= settle_bound && u < reached,
            final_stack: trace.final_state.stacks.get(u).cloned().unwrap_or_default(),
        });
    }
    let all_stabilized = slots.iter().all(|s| s.stabilized);

    // Final-half A_s membership per watched code.
    let mut a_window = BTreeMap::new();
    if !trace.watch.is_empty() && budget > 0 {
        let from = settle_bound as usize; // rows are stage-1-indexed
        for (i, &w) in trace.watch.iter().enumerate() {
            let tail: Vec<bool> =
                trace.watch_rows.iter().skip(from).map(|row| row[i]).collect();
            let verdict = if tail.iter().all(|&b| b) && !tail.is_empty() {
                Some(true)
            } else if tail.iter().all(|&b| !b) {
                Some(false)
            } else {
                None
            };
            a_window.insert(w, verdict);
        }
    }

    // H(L(u*)) candidate for the greatest L-stable slot. The route needs
    // L(u) ⊆ L_s(m(s)) over the tail, so u is also floored by the least
    // marker seen on the final half.
    let max_slot = trace.final_state.stacks.len();
    let m_floor = trace
        .events
        .iter()
        .filter(|e| e.stage > settle_bound)
        .map(|e| e.m)
        .min()
        .unwrap_or(trace.final_state.marker);
    let mut u_star = 0usize;
    for u in 0..=max_slot.min(m_floor) {
        if trace.l_last_change(u) <= settle_bound {
            u_star = u;
        } else {
            break;
        }
    }
    let bound = bound_hint
        .max(spec.operator.mentioned_bound())
        .max(trace.watch.iter().copied().max().map_or(0, |c| c + 1));
    // The candidate is exhaustive when the run ends with the marker at the
    // stable boundary: everything above u_star is cofinally absent.
    let exhaustive = trace.final_state.marker <= u_star;
    let hl = if u_star > 0 {
        let l = trace.final_state.l_at(u_star);
        let codes = spec.operator.apply_bounded(ctx, trace.final_state.stage, &l, bound)?;
        Some(HlCandidate { u_star, codes, bound, exhaustive })
    } else {
        Some(HlCandidate { u_star: 0, codes: BTreeSet::new(), bound, exhaustive })
    };

    let loop_warnings = trace
        .max_depth
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d > loop_depth)
        .map(|(u, _)| u)
        .collect();

    Ok(LimitReport {
        window,
        budget,
        settle_bound,
        slots,
        all_stabilized,
        a_window,
        hl,
        loop_warnings,
    })
}

// ---------------------------------------------------------------------------
// Characterization checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharVerdict {
    Holds,
    Fails,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharEntry {
    pub slot: usize,
    pub f_value: Code,
    pub candidate: Option<bool>,
    /// Whether `c` (for q: `c` or `c⁻`) was witnessed in `H(L(x) ∪ {f_x})`,
    /// when the semi-decision settled.
    pub witnessed: Option<bool>,
    pub verdict: CharVerdict,
}

/// Compare candidate membership of each windowed `f_x` against the
/// membership criterion `f_x ∈ A ⇔ c ∉ H(L(x) ∪ {f_x})` (for q-systems,
/// `{c, c⁻} ∩ H(L(x) ∪ {f_x}) = ∅`).
pub fn characterization_check(
    spec: &SystemSpec,
    ctx: &mut EvalCtx,
    trace: &Trace,
    report: &LimitReport,
) -> Result<Vec<CharEntry>, EngineError> {
    let final_stage = trace.final_state.stage;
    let mut out = Vec::new();
    for slot_report in &report.slots {
        let u = slot_report.slot;
        let f_x = slot_report.f_value;
        if !slot_report.stabilized {
            out.push(CharEntry {
                slot: u,
                f_value: f_x,
                candidate: None,
                witnessed: None,
                verdict: CharVerdict::Unknown,
            });
            continue;
        }
        let mut l = trace.final_state.l_at(u);
        l.insert(f_x);
        let mut targets = vec![spec.c];
        if spec.kind == SystemKind::Q {
            targets.extend(spec.c_minus);
        }
        let mut witnessed = false;
        for &t in &targets {
            if spec.operator.member(ctx, final_stage, &l, t)? {
                witnessed = true;
                break;
            }
        }
        let max_code = targets
            .iter()
            .chain(l.iter())
            .copied()
            .max()
            .unwrap_or(0);
        let settled = witnessed || spec.operator.settle_stage(max_code) <= final_stage;
        let candidate = report.candidate(f_x);
        let witnessed = if settled { Some(witnessed) } else { None };
        let verdict = match (candidate, witnessed) {
            (Some(member), Some(w)) => {
                if member == !w {
                    CharVerdict::Holds
                } else {
                    CharVerdict::Fails
                }
            }
            _ => CharVerdict::Unknown,
        };
        out.push(CharEntry { slot: u, f_value: f_x, candidate, witnessed, verdict });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{atom, CONTRADICTION};
    use crate::logic::EntailmentOperator;
    use crate::operators::{Approximation, Axiom, OperatorHandle};
    use crate::systems::{ProposingFunction, RevisingFunction};

    fn table_handle(deltas: Vec<(u64, Vec<Axiom>)>) -> OperatorHandle {
        OperatorHandle::Table(Approximation::from_deltas(deltas))
    }

    /// A p-system over an explicit table, f = identity, chain revisions.
    fn p_over(deltas: Vec<(u64, Vec<Axiom>)>) -> SystemSpec {
        SystemSpec::new_p(
            table_handle(deltas),
            ProposingFunction::Identity,
            RevisingFunction::tautology_chain(),
            CONTRADICTION,
        )
    }

    #[test]
    fn budget_zero_gives_stage_zero_snapshot_only() {
        let spec = SystemSpec::trivial_p();
        let mut ctx = EvalCtx::new();
        let trace = run(&spec, &mut ctx, &RunOptions::new(0).with_snapshots(16)).unwrap();
        assert!(trace.events.is_empty());
        let snaps = trace.snapshots.unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].stacks, vec![vec![atom(0)]]);
        assert_eq!(trace.final_state.marker, 0);
    }

    #[test]
    fn step_p_extends_without_contradiction() {
        // m=0, r(0)=⟨f_0⟩, c ∉ χ_s(0): extension to m'=1 with r(1)=⟨f_1⟩.
        let spec = p_over(vec![]);
        let mut ctx = EvalCtx::new();
        let state = ProcedureState::initial(0);
        let (next, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Extend);
        assert_eq!(next.marker, 1);
        assert_eq!(next.stacks[1], vec![1]);
    }

    #[test]
    fn step_p_revises_at_least_contradiction_slot() {
        // c derivable from {f_0}: clause (2) at z=0 pushes f⁻(f_0) and
        // empties everything above, leaving m'=0 and A=∅.
        let spec = p_over(vec![(1, vec![Axiom::new(CONTRADICTION, [0])])]);
        let mut ctx = EvalCtx::new();
        let mut state = ProcedureState::initial(0);
        state.stacks.push(vec![1]);
        state.marker = 1;
        state.stage = 20;
        let (next, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Revise { z: 0 });
        assert_eq!(next.marker, 0);
        let revised = RevisingFunction::tautology_chain().value(0).unwrap();
        assert_eq!(next.stacks[0], vec![0, revised]);
        assert!(next.stacks[1].is_empty());
        // m' = 0 means A_{s+1} = ∅.
        assert!(next.l_at(next.marker).is_empty());
    }

    #[test]
    fn step_d_discards_and_proposes_next() {
        // z=2 with c ∉ H_s(∅): slot 2 emptied, slot 3 proposed, m'=3.
        let spec = SystemSpec::new_d(
            table_handle(vec![(1, vec![Axiom::new(CONTRADICTION, [2])])]),
            ProposingFunction::Identity,
            CONTRADICTION,
        );
        let mut ctx = EvalCtx::new();
        let state = ProcedureState {
            stage: 20,
            stacks: vec![vec![0], vec![1], vec![2]],
            marker: 2,
        };
        let (next, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Discard { z: 2 });
        assert_eq!(next.marker, 3);
        assert!(next.stacks[2].is_empty());
        assert_eq!(next.stacks[3], vec![3]);
    }

    #[test]
    fn step_d_resets_on_inconsistent_operator() {
        let spec = SystemSpec::new_d(
            table_handle(vec![(1, vec![Axiom::new(CONTRADICTION, [])])]),
            ProposingFunction::Identity,
            CONTRADICTION,
        );
        let mut ctx = EvalCtx::new();
        let state = ProcedureState {
            stage: 20,
            stacks: vec![vec![0], vec![1], vec![2]],
            marker: 2,
        };
        let (next, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Reset);
        assert_eq!(next.marker, 0);
        assert_eq!(next.stacks, vec![vec![0]]);
    }

    #[test]
    fn step_q_precedence() {
        let c = CONTRADICTION;
        let cm = 1823; // c ∧ c, but any code distinct from c works here
        let q_spec = |deltas| {
            SystemSpec::new_q(
                table_handle(deltas),
                ProposingFunction::Identity,
                RevisingFunction::tautology_chain(),
                c,
                cm,
            )
        };
        let mut ctx = EvalCtx::new();
        let state = ProcedureState {
            stage: 4000,
            stacks: vec![vec![0], vec![1]],
            marker: 1,
        };
        // c ∈ χ(1), c⁻ ∈ χ(0): clause (3) fires at z=0 (revision).
        let spec = q_spec(vec![(
            1,
            vec![Axiom::new(c, [0, 1]), Axiom::new(cm, [0])],
        )]);
        let (next, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Revise { z: 0 });
        assert_eq!(next.marker, 0);
        // c ∈ χ(0) only: clause (2) fires at z=0 (discard).
        let spec = q_spec(vec![(1, vec![Axiom::new(c, [0])])]);
        let (_, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Discard { z: 0 });
        // Neither symbol derived: extension.
        let spec = q_spec(vec![]);
        let (_, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Extend);
        // c and c⁻ at the same slot: clause (2) wins.
        let spec = q_spec(vec![(1, vec![Axiom::new(c, [1]), Axiom::new(cm, [1])])]);
        let (_, clause, _) = step_once(&spec, &mut ctx, &state).unwrap();
        assert_eq!(clause, Clause::Discard { z: 1 });
    }

    #[test]
    fn trivial_p_system_grows_monotonically() {
        let spec = SystemSpec::trivial_p();
        let mut ctx = EvalCtx::new();
        let watch: Vec<Code> = (0..6).map(atom).collect();
        let opts = RunOptions::new(60).with_watch(watch.clone());
        let trace = run(&spec, &mut ctx, &opts).unwrap();
        // No contradiction ever: all extensions.
        assert!(trace.events.iter().all(|e| e.clause == Clause::Extend));
        // A_s grows monotonically on the watched codes.
        for i in 0..watch.len() {
            let col: Vec<bool> = trace.watch_rows.iter().map(|r| r[i]).collect();
            let mut seen_true = false;
            for b in col {
                if seen_true {
                    assert!(b, "A_s lost a member");
                }
                seen_true |= b;
            }
        }
        let report = limit_report(&spec, &mut ctx, &trace, 10, DEFAULT_LOOP_DEPTH, 64).unwrap();
        assert!(report.all_stabilized);
        for i in 0..6 {
            assert_eq!(report.candidate(atom(i)), Some(true), "p{i} accepted");
        }
        let chars = characterization_check(&spec, &mut ctx, &trace, &report).unwrap();
        assert!(chars.iter().all(|e| e.verdict == CharVerdict::Holds), "{chars:?}");
    }

    #[test]
    fn axiomatized_contradiction_revises_once() {
        // ¬f_1 added as an axiom makes c derivable from {f_1}: slot 1
        // revises; clause (2) fires exactly once.
        let mut spec = SystemSpec::trivial_p();
        let stream = crate::logic::AxiomStream::from_deltas(vec![(
            1,
            vec![crate::codec::neg(atom(1))],
        )]);
        spec.operator = OperatorHandle::entailment(EntailmentOperator::new(stream));
        let mut ctx = EvalCtx::new();
        let trace = run(&spec, &mut ctx, &RunOptions::new(40)).unwrap();
        let revisions: Vec<_> =
            trace.events.iter().filter(|e| matches!(e.clause, Clause::Revise { .. })).collect();
        assert_eq!(revisions.len(), 1, "{:?}", trace.events);
        assert_eq!(revisions[0].clause, Clause::Revise { z: 1 });
        // The stack at slot 1 holds the replaced axiom and its revision.
        assert_eq!(trace.final_state.stacks[1].len(), 2);
    }

    #[test]
    fn inconsistent_d_system_has_empty_theses_from_witness_stage() {
        // c ∈ H(∅) from stage 14: A_s = ∅ for every s ≥ 15.
        let approx = Approximation::from_deltas(vec![(14, vec![Axiom::new(CONTRADICTION, [])])]);
        let spec = SystemSpec::new_d(
            OperatorHandle::Table(approx),
            ProposingFunction::Identity,
            CONTRADICTION,
        );
        let mut ctx = EvalCtx::new();
        let opts = RunOptions::new(60).with_snapshots(64);
        let trace = run(&spec, &mut ctx, &opts).unwrap();
        let snaps = trace.snapshots.as_ref().unwrap();
        for snap in snaps.iter().filter(|s| s.stage >= 15) {
            assert!(snap.a.is_empty(), "A_{} = {:?}", snap.stage, snap.a);
            assert_eq!(snap.m, 0);
        }
        let report = limit_report(&spec, &mut ctx, &trace, 4, DEFAULT_LOOP_DEPTH, 32).unwrap();
        let hl = report.hl.as_ref().unwrap();
        assert_eq!(hl.u_star, 0);
        assert!(hl.codes.is_empty(), "candidate A = ∅");
    }

    #[test]
    fn looping_system_earns_loop_warning() {
        // Every revision at slot 0 stays inconsistent (c ∈ H(∅)), so the
        // stack grows past the depth threshold and the report flags it.
        let approx = Approximation::from_deltas(vec![(1, vec![Axiom::new(CONTRADICTION, [])])]);
        let spec = SystemSpec::new_p(
            OperatorHandle::Table(approx),
            ProposingFunction::Identity,
            RevisingFunction::tautology_chain(),
            CONTRADICTION,
        );
        let mut ctx = EvalCtx::new();
        let trace = run(&spec, &mut ctx, &RunOptions::new(60)).unwrap();
        let report = limit_report(&spec, &mut ctx, &trace, 4, DEFAULT_LOOP_DEPTH, 32).unwrap();
        assert_eq!(report.loop_warnings, vec![0]);
        assert!(trace.max_depth[0] > DEFAULT_LOOP_DEPTH);
    }

    #[test]
    fn q_characterization_excludes_on_counterexample_only() {
        // Only c⁻ is derivable from L(x) ∪ {f_x}: the proposal is revised
        // and the membership criterion reports a holding exclusion.
        let c = CONTRADICTION;
        let cm = atom(8);
        let stream = crate::logic::AxiomStream::from_deltas(vec![(
            1,
            vec![crate::codec::imp(atom(1), cm)],
        )]);
        let spec = SystemSpec::new_q(
            OperatorHandle::entailment(EntailmentOperator::new(stream)),
            ProposingFunction::Atoms,
            RevisingFunction::tautology_chain(),
            c,
            cm,
        );
        let mut ctx = EvalCtx::new();
        let watch: Vec<Code> = (0..6).map(atom).collect();
        let opts = RunOptions::new(160).with_watch(watch);
        let trace = run(&spec, &mut ctx, &opts).unwrap();
        // Slot 1 proposes p1, which yields the counterexample: clause (3).
        assert!(trace
            .events
            .iter()
            .any(|e| e.clause == Clause::Revise { z: 1 }));
        let report = limit_report(&spec, &mut ctx, &trace, 5, DEFAULT_LOOP_DEPTH, 128).unwrap();
        assert_eq!(report.candidate(atom(1)), Some(false), "f_1 excluded");
        let chars = characterization_check(&spec, &mut ctx, &trace, &report).unwrap();
        let slot1 = chars.iter().find(|e| e.slot == 1).unwrap();
        assert_eq!(slot1.witnessed, Some(true));
        assert_eq!(slot1.verdict, CharVerdict::Holds);
        assert!(chars.iter().all(|e| e.verdict == CharVerdict::Holds), "{chars:?}");
    }

    #[test]
    fn determinism_byte_for_byte() {
        let spec = SystemSpec::trivial_p();
        let mut ctx1 = EvalCtx::new();
        let mut ctx2 = EvalCtx::new();
        let opts = RunOptions::new(50).with_watch(vec![atom(0), atom(1)]).with_snapshots(32);
        let t1 = run(&spec, &mut ctx1, &opts).unwrap();
        let t2 = run(&spec, &mut ctx2, &opts).unwrap();
        assert_eq!(
            serde_json::to_vec(&t1).unwrap(),
            serde_json::to_vec(&t2).unwrap()
        );
    }

    #[test]
    fn marker_invariant_holds_throughout() {
        let spec = p_over(vec![
            (1, vec![Axiom::new(CONTRADICTION, [2]), Axiom::new(CONTRADICTION, [5])]),
        ]);
        let mut ctx = EvalCtx::new();
        let trace = run(&spec, &mut ctx, &RunOptions::new(30).with_snapshots(8)).unwrap();
        for snap in trace.snapshots.unwrap() {
            let st = ProcedureState { stage: snap.stage, stacks: snap.stacks, marker: snap.m };
            assert!(st.marker_invariant_holds(), "stage {}", snap.stage);
        }
    }
}
