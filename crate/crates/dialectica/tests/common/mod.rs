//! Shared test support: a first-principles simulator of the staged
//! procedures, independent of the engine's code paths.
//!
//! The oracle re-derives every `χ_s(k)` from scratch each stage by direct
//! set operations over the cumulative axiom table, walks every slot
//! (no prefix search), and applies the clause case-splits literally.

use dialectica::codec::Code;
use dialectica::operators::{Approximation, Axiom, OperatorHandle};
use dialectica::systems::{SystemKind, SystemSpec};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleSnapshot {
    pub stage: u64,
    pub m: usize,
    pub stacks: BTreeMap<usize, Vec<Code>>,
    pub a: BTreeSet<Code>,
    pub clause: Option<OracleClause>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleClause {
    Extend,
    Revise(usize),
    Discard(usize),
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    Ran(Vec<OracleSnapshot>),
    /// A revision targeted an empty slot (the system is inconsistent in
    /// its counterexample); snapshots up to that point.
    ReviseEmpty { at_stage: u64, snapshots: Vec<OracleSnapshot> },
}

fn raw_table(spec: &SystemSpec) -> &Approximation {
    match &spec.operator {
        OperatorHandle::Table(t) => t,
        _ => panic!("the oracle simulates explicit-table systems"),
    }
}

/// Table at stage s, recomputed from the deltas every time.
fn table_at(approx: &Approximation, s: u64) -> Vec<Axiom> {
    let mut out = Vec::new();
    for d in &approx.stages {
        if d.s <= s {
            for a in &d.axioms {
                out.push(a.clone());
            }
        }
    }
    out
}

fn apply_table(table: &[Axiom], xs: &BTreeSet<Code>) -> BTreeSet<Code> {
    let mut out = BTreeSet::new();
    for ax in table {
        if ax.premises.iter().all(|p| xs.contains(p)) {
            out.insert(ax.conclusion);
        }
    }
    out
}

struct OracleState {
    stacks: BTreeMap<usize, Vec<Code>>,
    m: usize,
}

impl OracleState {
    fn l(&self, u: usize) -> BTreeSet<Code> {
        let mut out = BTreeSet::new();
        for (&slot, stack) in &self.stacks {
            if slot < u {
                if let Some(&top) = stack.last() {
                    out.insert(top);
                }
            }
        }
        out
    }

    fn chi(&self, table: &[Axiom], i: usize) -> BTreeSet<Code> {
        apply_table(table, &self.l(i + 1))
    }

    fn recompute_m(&mut self) {
        self.m = self
            .stacks
            .iter()
            .filter(|(_, st)| !st.is_empty())
            .map(|(&u, _)| u)
            .max()
            .unwrap_or(0);
    }
}

/// Run the kind-appropriate procedure for `budget` stages, returning one
/// snapshot per stage (including stage 0).
pub fn oracle_run(spec: &SystemSpec, budget: u64) -> OracleOutcome {
    let approx = raw_table(spec);
    let f = |u: usize| spec.f.value(u as u64).expect("total proposing function");
    let fm = |x: Code| {
        spec.f_minus
            .as_ref()
            .expect("revising function present")
            .value(x)
            .expect("total revising function")
    };

    let mut state = OracleState { stacks: BTreeMap::new(), m: 0 };
    state.stacks.insert(0, vec![f(0)]);
    let mut snapshots = vec![OracleSnapshot {
        stage: 0,
        m: 0,
        stacks: state.stacks.clone(),
        a: BTreeSet::new(),
        clause: None,
    }];

    for s in 0..budget {
        let table = table_at(approx, s);
        let m = state.m;
        // The clause decision, walking every k ≤ m literally.
        let least_with = |target: Code| -> Option<usize> {
            (0..=m).find(|&k| state.chi(&table, k).contains(&target))
        };
        let clause = match spec.kind {
            SystemKind::P => match least_with(spec.c) {
                None => OracleClause::Extend,
                Some(z) => OracleClause::Revise(z),
            },
            SystemKind::D => match least_with(spec.c) {
                None => OracleClause::Extend,
                Some(z) => {
                    if apply_table(&table, &BTreeSet::new()).contains(&spec.c) {
                        OracleClause::Reset
                    } else {
                        OracleClause::Discard(z)
                    }
                }
            },
            SystemKind::Q => {
                let cm = spec.c_minus.expect("q-system counterexample");
                // Clause (1): no k ≤ m with {c, c⁻} ∩ χ_s(k) ≠ ∅.
                // Clause (2): least k with c ∈ χ_s(k) and no k' < k with
                // c⁻ ∈ χ_s(k').
                // Clause (3): least k with c⁻ ∈ χ_s(k) and no k' ≤ k with
                // c ∈ χ_s(k').
                let clause2 = (0..=m).find(|&k| {
                    state.chi(&table, k).contains(&spec.c)
                        && (0..k).all(|k2| !state.chi(&table, k2).contains(&cm))
                });
                let clause3 = (0..=m).find(|&k| {
                    state.chi(&table, k).contains(&cm)
                        && (0..=k).all(|k2| !state.chi(&table, k2).contains(&spec.c))
                });
                match (clause2, clause3) {
                    (None, None) => OracleClause::Extend,
                    (Some(z), _) => {
                        if apply_table(&table, &BTreeSet::new()).contains(&spec.c) {
                            OracleClause::Reset
                        } else {
                            OracleClause::Discard(z)
                        }
                    }
                    (None, Some(z)) => OracleClause::Revise(z),
                }
            }
        };

        // Apply the clause's case split literally.
        let mut next: BTreeMap<usize, Vec<Code>> = BTreeMap::new();
        match clause {
            OracleClause::Extend => {
                for (&u, st) in &state.stacks {
                    if u <= m {
                        next.insert(u, st.clone());
                    }
                }
                next.insert(m + 1, vec![f(m + 1)]);
            }
            OracleClause::Revise(z) => {
                for (&u, st) in &state.stacks {
                    if u < z {
                        next.insert(u, st.clone());
                    }
                }
                let mut stack = state.stacks.get(&z).cloned().unwrap_or_default();
                match stack.last().copied() {
                    Some(top) => {
                        stack.push(fm(top));
                        next.insert(z, stack);
                    }
                    None => {
                        return OracleOutcome::ReviseEmpty { at_stage: s + 1, snapshots };
                    }
                }
            }
            OracleClause::Discard(z) => {
                for (&u, st) in &state.stacks {
                    if u < z {
                        next.insert(u, st.clone());
                    }
                }
                next.insert(z + 1, vec![f(z + 1)]);
            }
            OracleClause::Reset => {
                next.insert(0, vec![f(0)]);
            }
        }
        state.stacks = next;
        state.stacks.retain(|_, st| !st.is_empty());
        state.recompute_m();

        // A_{s+1} = ∪_{i < m(s+1)} χ_{s+1}(i), from the s+1 table.
        let table_next = table_at(approx, s + 1);
        let mut a = BTreeSet::new();
        for i in 0..state.m {
            a.extend(state.chi(&table_next, i));
        }
        snapshots.push(OracleSnapshot {
            stage: s + 1,
            m: state.m,
            stacks: state.stacks.clone(),
            a,
            clause: Some(clause),
        });
    }
    OracleOutcome::Ran(snapshots)
}
