//! Deterministic generators of small systems and samples, shared by the
//! property-style test suites and the CLI sampling checks.

use crate::codec::{atom, conj, disj, imp, neg, Code, CONTRADICTION};
use crate::logic::{AxiomStream, EntailmentOperator, LawSample};
use crate::operators::{Approximation, Axiom, OperatorHandle};
use crate::systems::{ProposingFunction, RevisingFunction, SystemKind, SystemSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random formula over atoms `p_0 .. p_{max_atom}`, with the given
/// connective depth.
pub fn random_formula(rng: &mut ChaCha8Rng, max_atom: u64, depth: u32) -> Code {
    if depth == 0 || rng.gen_bool(0.3) {
        return atom(rng.gen_range(0..=max_atom));
    }
    let a = random_formula(rng, max_atom, depth - 1);
    let b = random_formula(rng, max_atom, depth - 1);
    match rng.gen_range(0..4) {
        0 => neg(a),
        1 => imp(a, b),
        2 => conj(a, b),
        _ => disj(a, b),
    }
}

/// A random explicit table: at most `max_axioms` axioms over codes below
/// `universe`, entering at stages below `max_stage`.
pub fn random_table(
    rng: &mut ChaCha8Rng,
    max_axioms: usize,
    universe: u64,
    max_stage: u64,
) -> Approximation {
    let n = rng.gen_range(1..=max_axioms);
    let mut deltas: Vec<(u64, Vec<Axiom>)> = Vec::new();
    for _ in 0..n {
        let conclusion = rng.gen_range(0..universe);
        let n_prem = rng.gen_range(0..=2usize);
        let premises: Vec<Code> = (0..n_prem).map(|_| rng.gen_range(0..universe)).collect();
        let stage = rng.gen_range(0..max_stage);
        deltas.push((stage, vec![Axiom::new(conclusion, premises)]));
    }
    Approximation::from_deltas(deltas)
}

/// A small injective proposing function: a shuffled prefix of `0..len`,
/// identity beyond.
pub fn shuffled_prefix(rng: &mut ChaCha8Rng, len: usize) -> ProposingFunction {
    let mut prefix: Vec<Code> = (0..len as u64).collect();
    for i in (1..prefix.len()).rev() {
        let j = rng.gen_range(0..=i);
        prefix.swap(i, j);
    }
    ProposingFunction::identity_after(prefix)
}

/// A random tiny system over an explicit table, any kind. Suitable for
/// cross-checking the engine against a first-principles simulator.
pub fn tiny_table_system(seed: u64) -> SystemSpec {
    let mut rng = rng(seed);
    let table = random_table(&mut rng, 12, 8, 15);
    let f = if rng.gen_bool(0.5) {
        ProposingFunction::Identity
    } else {
        shuffled_prefix(&mut rng, 5)
    };
    let c = rng.gen_range(0..8u64);
    let f_minus = RevisingFunction::tautology_chain();
    match rng.gen_range(0..3) {
        0 => SystemSpec::new_d(OperatorHandle::Table(table), f, c),
        1 => SystemSpec::new_p(OperatorHandle::Table(table), f, f_minus, c),
        _ => {
            // c⁻ distinct from c and outside the chain image (all chain
            // values are ≥ 14).
            let cm = (c + 1) % 8;
            SystemSpec::new_q(OperatorHandle::Table(table), f, f_minus, c, cm)
        }
    }
}

/// Two staged enumeration orders of the same limit table: axioms arrive in
/// chunks, in the given order and in reverse, so that the staging finishes
/// within roughly 24 stages however large the table is.
pub fn staged_orders(table: &[Axiom]) -> (Approximation, Approximation) {
    let chunk = table.len().div_ceil(24).max(1);
    let stage_of = |i: usize| (i / chunk) as u64 + 1;
    let forward = Approximation::from_deltas(
        table.iter().cloned().enumerate().map(|(i, a)| (stage_of(i), vec![a])).collect(),
    );
    let backward = Approximation::from_deltas(
        table.iter().rev().cloned().enumerate().map(|(i, a)| (stage_of(i), vec![a])).collect(),
    );
    (forward, backward)
}

/// A consistent stream of extra axioms: literals over distinct atoms, which
/// any assignment agreeing with the signs satisfies.
pub fn consistent_literal_stream(rng: &mut ChaCha8Rng, n: usize, stage_spread: u64) -> AxiomStream {
    let mut deltas = Vec::new();
    let mut used = Vec::new();
    for _ in 0..n {
        let mut i = rng.gen_range(0..12u64);
        while used.contains(&i) {
            i = (i + 1) % 12;
        }
        used.push(i);
        let lit = if rng.gen_bool(0.5) { atom(i) } else { neg(atom(i)) };
        deltas.push((rng.gen_range(0..stage_spread), vec![lit]));
    }
    AxiomStream::from_deltas(deltas)
}

/// A consistent loopless system with connectives (entailment operator):
/// p-kind or q-kind.
pub fn connective_system(seed: u64, kind: SystemKind) -> SystemSpec {
    let mut rng = rng(seed);
    let n_extras = rng.gen_range(0..4);
    let stream = consistent_literal_stream(&mut rng, n_extras, 6);
    let used_atoms: std::collections::BTreeSet<u64> = stream
        .limit()
        .iter()
        .flat_map(|&c| crate::codec::atoms_of(c))
        .collect();
    let operator = OperatorHandle::entailment(EntailmentOperator::new(stream));
    let f = if rng.gen_bool(0.5) { ProposingFunction::Atoms } else { shuffled_prefix(&mut rng, 6) };
    let f_minus = RevisingFunction::tautology_chain();
    match kind {
        SystemKind::P => SystemSpec::new_p(operator, f, f_minus, CONTRADICTION),
        SystemKind::Q => {
            // A counterexample the base theory never proves: an atom the
            // extras do not mention (also outside the chain image).
            let mut j = 30u64;
            while used_atoms.contains(&j) {
                j += 1;
            }
            SystemSpec::new_q(operator, f, f_minus, CONTRADICTION, atom(j))
        }
        SystemKind::D => SystemSpec::new_d(operator, f, CONTRADICTION),
    }
}

/// Random samples for the connective-laws check, over at most `max_atom+1`
/// atoms.
pub fn law_samples(seed: u64, n: usize, max_atom: u64) -> Vec<LawSample> {
    let mut rng = rng(seed);
    (0..n)
        .map(|_| {
            let n_x = rng.gen_range(0..=2usize);
            let xs = (0..n_x).map(|_| random_formula(&mut rng, max_atom, 2)).collect();
            let x = random_formula(&mut rng, max_atom, 2);
            let y = random_formula(&mut rng, max_atom, 2);
            let probes =
                (0..3).map(|_| random_formula(&mut rng, max_atom, 2)).collect();
            LawSample { xs, x, y, probes }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::EvalCtx;
    use crate::systems::validate;

    #[test]
    fn generators_are_deterministic() {
        let a = tiny_table_system(42);
        let b = tiny_table_system(42);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn connective_systems_validate() {
        let mut ctx = EvalCtx::new();
        for seed in 0..10 {
            let spec = connective_system(seed, SystemKind::P);
            let report = validate(&spec, &mut ctx, 40).unwrap();
            assert!(report.is_valid(), "seed {seed}: {report:?}");
            let spec = connective_system(seed, SystemKind::Q);
            let report = validate(&spec, &mut ctx, 40).unwrap();
            assert!(report.is_valid(), "seed {seed}: {report:?}");
        }
    }
}
