//! Property-style invariants: codec bijectivity, operator monotonicity,
//! entailment soundness/completeness against an independent enumerator,
//! engine stack discipline, and determinism.

#[allow(dead_code)]
mod common;

use dialectica::codec::{self, atoms_of, decode, encode, fresh_atom, Code, Formula};
use dialectica::engine::{run, Clause, EngineError, RunOptions};
use dialectica::gen;
use dialectica::logic::{entails, EvalCtx};
use dialectica::operators::{apply, closure_omega, goodify, Approximation, Axiom, OperatorHandle};
use dialectica::systems::{validate, ProposingFunction, RevisingFunction, SystemKind, SystemSpec, Verdict};
use proptest::prelude::*;
use rand::Rng;
use std::collections::BTreeSet;

// ---------------------------------------------------------------------------
// An independent truth-table enumerator (recursive evaluation, explicit
// assignment vectors) used to cross-check `entails`.
// ---------------------------------------------------------------------------

fn eval_formula(code: Code, assignment: &[bool]) -> bool {
    match decode(code) {
        Formula::Atom(i) => assignment[i as usize],
        Formula::Not(a) => !eval_formula(a, assignment),
        Formula::Imp(a, b) => !eval_formula(a, assignment) || eval_formula(b, assignment),
        Formula::And(a, b) => eval_formula(a, assignment) && eval_formula(b, assignment),
        Formula::Or(a, b) => eval_formula(a, assignment) || eval_formula(b, assignment),
    }
}

fn oracle_entails(premises: &[Code], x: Code) -> bool {
    let mut atoms = BTreeSet::new();
    for &p in premises {
        atoms.extend(atoms_of(p));
    }
    atoms.extend(atoms_of(x));
    let max_atom = atoms.iter().next_back().copied().unwrap_or(0) as usize;
    let n = max_atom + 1;
    for mask in 0u64..(1u64 << n) {
        let assignment: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        if premises.iter().all(|&p| eval_formula(p, &assignment))
            && !eval_formula(x, &assignment)
        {
            return false;
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn codec_round_trip(n in 0u64..100_000_000) {
        prop_assert_eq!(encode(decode(n)), n);
    }

    #[test]
    fn pairing_round_trip(a in 0u64..50_000, b in 0u64..50_000) {
        let n = codec::pair(a, b);
        prop_assert_eq!(codec::unpair(n), (a, b));
    }

    #[test]
    fn fresh_atom_is_fresh(used in proptest::collection::vec(0u64..5_000, 0..12)) {
        let fresh = fresh_atom(&used);
        let idx = match decode(fresh) {
            Formula::Atom(i) => i,
            other => return Err(TestCaseError::fail(format!("non-atom {other:?}"))),
        };
        for &u in &used {
            prop_assert!(!atoms_of(u).contains(&idx));
        }
    }

    #[test]
    fn entails_matches_independent_enumerator(seed in 0u64..5_000) {
        let mut rng = gen::rng(seed);
        let n_prem = rng.gen_range(0..3usize);
        let premises: Vec<Code> =
            (0..n_prem).map(|_| gen::random_formula(&mut rng, 5, 2)).collect();
        let x = gen::random_formula(&mut rng, 5, 2);
        let expected = oracle_entails(&premises, x);
        let got = entails(&premises, x, &[], 24).unwrap();
        prop_assert_eq!(got, expected, "premises {:?} target {}", premises, x);
    }

    #[test]
    fn application_monotone_in_premises_and_stage(seed in 0u64..2_000) {
        let mut rng = gen::rng(seed);
        let approx = gen::random_table(&mut rng, 10, 8, 12);
        let handle = OperatorHandle::Table(approx);
        let mut ctx = EvalCtx::new();
        let xs: BTreeSet<Code> = (0..8u64).filter(|_| rng.gen_bool(0.4)).collect();
        let mut ys = xs.clone();
        ys.insert(rng.gen_range(0..8u64));
        for s in 0..12u64 {
            let hx = handle.apply_bounded(&mut ctx, s, &xs, 32).unwrap();
            let hy = handle.apply_bounded(&mut ctx, s, &ys, 32).unwrap();
            prop_assert!(hx.is_subset(&hy), "premise monotonicity at stage {}", s);
            let hx_next = handle.apply_bounded(&mut ctx, s + 1, &xs, 32).unwrap();
            prop_assert!(hx.is_subset(&hx_next), "stage monotonicity at stage {}", s);
        }
    }

    #[test]
    fn goodify_preserves_closed_limits(seed in 0u64..500) {
        // For a limit operator that is already a closure operator, the
        // goodified limit coincides with it up to identities.
        let mut rng = gen::rng(seed);
        let raw = gen::random_table(&mut rng, 6, 8, 10);
        let closed = closure_omega(&raw.limit_table()).unwrap();
        let approx = Approximation::from_deltas(vec![(0, closed.clone())]);
        let good = goodify(&approx).unwrap();
        let mut ctx = EvalCtx::new();
        let good_handle = OperatorHandle::Good(good);
        for _ in 0..6 {
            let xs: BTreeSet<Code> = (0..8u64).filter(|_| rng.gen_bool(0.4)).collect();
            let direct = apply(&closed, &xs);
            let staged = good_handle.apply_bounded(&mut ctx, 64, &xs, 64).unwrap();
            let mut with_ids = direct.clone();
            with_ids.extend(xs.iter().copied());
            prop_assert_eq!(staged, with_ids, "on {:?}", xs);
        }
    }

    #[test]
    fn valid_specs_run_cleanly(seed in 0u64..2_000) {
        let spec = gen::tiny_table_system(seed);
        let mut ctx = EvalCtx::new();
        let report = validate(&spec, &mut ctx, 12).unwrap();
        if report.verdict != Verdict::Invalid {
            match run(&spec, &mut ctx, &RunOptions::new(12)) {
                Ok(_) => {}
                // The q-procedure is partial where the counterexample
                // becomes derivable from nothing while slot 0 is empty;
                // the engine surfaces that as an explicit error.
                Err(EngineError::ReviseEmptySlot { .. }) => {
                    prop_assert_eq!(spec.kind, SystemKind::Q);
                }
                Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
            }
        }
    }

    #[test]
    fn marker_invariant_and_stack_discipline(seed in 0u64..2_000) {
        let spec = gen::tiny_table_system(seed);
        let mut ctx = EvalCtx::new();
        let mut opts = RunOptions::new(10).with_snapshots(64);
        opts.validate_first = false;
        let trace = match run(&spec, &mut ctx, &opts) {
            Ok(t) => t,
            Err(_) => return Ok(()),
        };
        let snaps = trace.snapshots.as_ref().unwrap();
        for (i, event) in trace.events.iter().enumerate() {
            let before = &snaps[i];
            let after = &snaps[i + 1];
            // m is the greatest nonempty slot.
            let greatest = after
                .stacks
                .iter()
                .enumerate()
                .filter(|(_, st)| !st.is_empty())
                .map(|(u, _)| u)
                .max();
            prop_assert_eq!(greatest, Some(after.m), "marker invariant at stage {}", after.stage);
            // After a revision at z: slots above z empty, slot z one deeper.
            if let Clause::Revise { z } = event.clause {
                for (u, st) in after.stacks.iter().enumerate() {
                    if u > z {
                        prop_assert!(st.is_empty(), "slot {} above z={} not empty", u, z);
                    }
                }
                prop_assert_eq!(
                    after.stacks[z].len(),
                    before.stacks.get(z).map_or(0, |s| s.len()) + 1
                );
                prop_assert_eq!(after.m, z);
            }
        }
    }

    #[test]
    fn runs_are_deterministic(seed in 0u64..500) {
        let spec = gen::tiny_table_system(seed);
        let opts = RunOptions::new(10).with_snapshots(64).with_watch(vec![0, 1, 2, 3]);
        let mut ctx1 = EvalCtx::new();
        let mut ctx2 = EvalCtx::new();
        let r1 = run(&spec, &mut ctx1, &opts);
        let r2 = run(&spec, &mut ctx2, &opts);
        match (r1, r2) {
            (Ok(t1), Ok(t2)) => {
                prop_assert_eq!(
                    serde_json::to_vec(&t1).unwrap(),
                    serde_json::to_vec(&t2).unwrap()
                );
            }
            (Err(_), Err(_)) => {}
            _ => return Err(TestCaseError::fail("one run failed, the other not")),
        }
    }
}

// ---------------------------------------------------------------------------
// Good approximations and limit-computable behaviour
// ---------------------------------------------------------------------------

#[test]
fn good_approximation_settles_watched_memberships() {
    // With a goodified staging, each watched code's A_s-membership settles
    // over the final half once the window has stabilized, and its settled
    // value never contradicts the membership characterization.
    for seed in 0..12u64 {
        let mut rng = gen::rng(seed);
        let raw = gen::random_table(&mut rng, 8, 8, 10);
        let closed = closure_omega(&raw.limit_table()).unwrap();
        let approx = Approximation::from_deltas(vec![(0, closed)]);
        let good = OperatorHandle::Good(goodify(&approx).unwrap());
        let spec = SystemSpec::new_p(
            good,
            ProposingFunction::Identity,
            RevisingFunction::tautology_chain(),
            rng.gen_range(0..8u64),
        );
        let mut ctx = EvalCtx::new();
        let watch: Vec<Code> = (0..8).collect();
        let opts = RunOptions::new(120).with_watch(watch.clone());
        let trace = match run(&spec, &mut ctx, &opts) {
            Ok(t) => t,
            Err(_) => continue,
        };
        let report = dialectica::engine::limit_report(&spec, &mut ctx, &trace, 8, 32, 16).unwrap();
        if !report.all_stabilized {
            continue;
        }
        for &w in &watch {
            assert!(
                report.a_window.get(&w).copied().flatten().is_some(),
                "seed {seed}: membership of {w} did not settle over the final half"
            );
        }
    }
}

#[test]
fn extension_overwrite_is_unobservable() {
    // The clause-(2) gap at slot z+1: emptying it is unobservable because
    // the next extension overwrites slot m+1 anyway. Spot-check: after a
    // revision, an extension installs a fresh singleton at z+1.
    let approx = Approximation::from_deltas(vec![(
        1,
        vec![Axiom::new(6, [2]), Axiom::new(2, [2])],
    )]);
    let spec = SystemSpec::new_p(
        OperatorHandle::Table(approx),
        ProposingFunction::Identity,
        RevisingFunction::tautology_chain(),
        6,
    );
    let mut ctx = EvalCtx::new();
    let mut opts = RunOptions::new(12).with_snapshots(32);
    opts.validate_first = false;
    let trace = run(&spec, &mut ctx, &opts).unwrap();
    let snaps = trace.snapshots.unwrap();
    let mut seen_revise = false;
    for (i, e) in trace.events.iter().enumerate() {
        if let Clause::Revise { z } = e.clause {
            seen_revise = true;
            // Next transition is an extension that rebuilds slot z+1 as a
            // fresh proposal.
            if let Some(next) = trace.events.get(i + 1) {
                if next.clause == Clause::Extend {
                    let snap = &snaps[i + 2];
                    assert_eq!(snap.stacks[z + 1].len(), 1);
                }
            }
        }
    }
    assert!(seen_revise, "test instance should revise at least once");
}
