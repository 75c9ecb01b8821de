//! Total Gödel numbering of propositional sentences.
//!
//! Every natural number decodes to exactly one formula, and every formula
//! encodes back to the same number, so the universe of sentences is literally
//! ω. The connective functions (`neg`, `imp`, `conj`, `disj`) are injective
//! computable maps on codes; the contradiction used throughout the crate is
//! `conj(0, neg(0))`, i.e. code 13 (`p0 & !p0`).

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

/// A sentence code: a natural number standing for a propositional formula.
pub type Code = u64;

/// The canonical contradiction `p0 & !p0`, fixed globally so that traces
/// and JSON files are portable.
pub const CONTRADICTION: Code = 13;

/// Cantor pairing: a bijection ω×ω → ω.
///
/// `pair(a, b) = (a+b)(a+b+1)/2 + b`. Panics on u64 overflow (codes that
/// large never arise from the staged procedures; chain generators use
/// [`checked_pair`]).
pub fn pair(a: u64, b: u64) -> u64 {
    checked_pair(a, b).expect("code overflow in pair()")
}

/// Overflow-aware Cantor pairing.
pub fn checked_pair(a: u64, b: u64) -> Option<u64> {
    let s = a.checked_add(b)?;
    let t = s.checked_mul(s.checked_add(1)?)? / 2;
    t.checked_add(b)
}

/// Inverse of [`pair`].
pub fn unpair(n: u64) -> (u64, u64) {
    // w = floor((sqrt(8n+1) - 1) / 2), adjusted for integer sqrt drift.
    let mut w = (((8.0 * n as f64 + 1.0).sqrt() - 1.0) / 2.0) as u64;
    while w.checked_mul(w + 1).is_none_or(|t| t / 2 > n) {
        w -= 1;
    }
    while (w + 1).checked_mul(w + 2).is_some_and(|t| t / 2 <= n) {
        w += 1;
    }
    let b = n - w * (w + 1) / 2;
    (w - b, b)
}

/// The shape of a decoded sentence. Children are themselves codes, so a
/// formula is a finite tree unfolded on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    Atom(u64),
    Not(Code),
    Imp(Code, Code),
    And(Code, Code),
    Or(Code, Code),
}

/// Decode a natural number into a formula. Total: every natural is a sentence.
pub fn decode(n: Code) -> Formula {
    let tag = n % 5;
    let payload = n / 5;
    match tag {
        0 => Formula::Atom(payload),
        1 => Formula::Not(payload),
        2 => {
            let (a, b) = unpair(payload);
            Formula::Imp(a, b)
        }
        3 => {
            let (a, b) = unpair(payload);
            Formula::And(a, b)
        }
        _ => {
            let (a, b) = unpair(payload);
            Formula::Or(a, b)
        }
    }
}

/// Encode a formula back into its code. Inverse of [`decode`].
pub fn encode(f: Formula) -> Code {
    match f {
        Formula::Atom(i) => 5 * i,
        Formula::Not(a) => 5 * a + 1,
        Formula::Imp(a, b) => 5 * pair(a, b) + 2,
        Formula::And(a, b) => 5 * pair(a, b) + 3,
        Formula::Or(a, b) => 5 * pair(a, b) + 4,
    }
}

/// Code of the atom `p_i`.
pub fn atom(i: u64) -> Code {
    5 * i
}

/// Injective negation on codes: `neg(a) = 5a + 1`.
pub fn neg(a: Code) -> Code {
    5 * a + 1
}

/// Injective implication on codes.
pub fn imp(a: Code, b: Code) -> Code {
    5 * pair(a, b) + 2
}

/// Injective conjunction on codes.
pub fn conj(a: Code, b: Code) -> Code {
    5 * pair(a, b) + 3
}

/// Injective disjunction on codes.
pub fn disj(a: Code, b: Code) -> Code {
    5 * pair(a, b) + 4
}

/// Overflow-aware `conj`, for chain generators that iterate self-conjunction.
pub fn checked_conj(a: Code, b: Code) -> Option<Code> {
    checked_pair(a, b)?.checked_mul(5)?.checked_add(3)
}

/// Overflow-aware `disj`.
pub fn checked_disj(a: Code, b: Code) -> Option<Code> {
    checked_pair(a, b)?.checked_mul(5)?.checked_add(4)
}

/// Collect the atom indices occurring (as subformula atoms) in `code`.
pub fn atoms_of(code: Code) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    collect_atoms(code, &mut out);
    out
}

fn collect_atoms(code: Code, out: &mut BTreeSet<u64>) {
    match decode(code) {
        Formula::Atom(i) => {
            out.insert(i);
        }
        Formula::Not(a) => collect_atoms(a, out),
        Formula::Imp(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
            collect_atoms(a, out);
            collect_atoms(b, out);
        }
    }
}

/// The least atom index not occurring in any code of `used`, as a code.
///
/// Over a consistent propositional base, such an atom is underivable and
/// un-refutable from any set of sentences not mentioning it, which is the
/// independence contract the diagonalization construction relies on.
pub fn fresh_atom<'a, I: IntoIterator<Item = &'a Code>>(used: I) -> Code {
    let mut seen = BTreeSet::new();
    for &c in used {
        collect_atoms(c, &mut seen);
    }
    let mut i = 0u64;
    while seen.contains(&i) {
        i += 1;
    }
    atom(i)
}

/// Pretty-printer wrapper: renders atoms as `p0, p1, ...` and connectives
/// as `! -> & |`.
pub struct Pretty(pub Code);

impl fmt::Display for Pretty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_pretty(self.0, f)
    }
}

fn write_pretty(code: Code, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match decode(code) {
        Formula::Atom(i) => write!(f, "p{i}"),
        Formula::Not(a) => {
            write!(f, "!")?;
            write_pretty_child(a, f)
        }
        Formula::Imp(a, b) => {
            write_pretty_child(a, f)?;
            write!(f, " -> ")?;
            write_pretty_child(b, f)
        }
        Formula::And(a, b) => {
            write_pretty_child(a, f)?;
            write!(f, " & ")?;
            write_pretty_child(b, f)
        }
        Formula::Or(a, b) => {
            write_pretty_child(a, f)?;
            write!(f, " | ")?;
            write_pretty_child(b, f)
        }
    }
}

fn write_pretty_child(code: Code, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match decode(code) {
        Formula::Atom(_) | Formula::Not(_) => write_pretty(code, f),
        _ => {
            write!(f, "(")?;
            write_pretty(code, f)?;
            write!(f, ")")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairing_examples() {
        assert_eq!(pair(0, 0), 0);
        assert_eq!(pair(1, 2), 8);
        assert_eq!(unpair(8), (1, 2));
    }

    #[test]
    fn pairing_round_trip() {
        for n in 0..10_000u64 {
            let (a, b) = unpair(n);
            assert_eq!(pair(a, b), n);
        }
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(15), Formula::Atom(3));
        assert_eq!(decode(1), Formula::Not(0));
        assert_eq!(decode(0), Formula::Atom(0));
        // 1 decodes to Not(Atom(0)) once the child is unfolded.
        match decode(1) {
            Formula::Not(child) => assert_eq!(decode(child), Formula::Atom(0)),
            other => panic!("unexpected shape {other:?}"),
        }
        assert_eq!(encode(Formula::And(0, 1)), 13);
        assert_eq!(conj(0, neg(0)), CONTRADICTION);
    }

    #[test]
    fn connective_codes() {
        assert_eq!(neg(0), 1);
        assert_eq!(conj(0, 1), 13);
        assert_eq!(neg(neg(0)), 6);
        assert_ne!(neg(neg(0)), 0, "syntactic double negation is distinct");
        assert_eq!(disj(0, neg(0)), 14);
    }

    #[test]
    fn round_trip_encode_decode() {
        for n in 0..100_000u64 {
            assert_eq!(encode(decode(n)), n);
        }
    }

    #[test]
    fn connectives_injective_no_collisions() {
        // Tags differ between families; pairing is injective inside each.
        let mut seen = BTreeSet::new();
        for a in 0..40u64 {
            assert!(seen.insert(neg(a)));
        }
        for a in 0..12u64 {
            for b in 0..12u64 {
                assert!(seen.insert(imp(a, b)));
                assert!(seen.insert(conj(a, b)));
                assert!(seen.insert(disj(a, b)));
            }
        }
    }

    #[test]
    fn fresh_atom_examples() {
        assert_eq!(fresh_atom(&[]), 0);
        assert_eq!(fresh_atom(&[0, 1]), 5);
        // atoms of 13 = {0}, by a subformula walk.
        assert_eq!(atoms_of(13).into_iter().collect::<Vec<_>>(), vec![0]);
        assert_eq!(fresh_atom(&[13]), 5);
    }

    #[test]
    fn fresh_atom_never_occurs_in_used() {
        let used = vec![13, 14, 1823, atom(4), neg(atom(6))];
        let fresh = fresh_atom(&used);
        let idx = match decode(fresh) {
            Formula::Atom(i) => i,
            other => panic!("fresh_atom returned non-atom {other:?}"),
        };
        for &u in &used {
            assert!(!atoms_of(u).contains(&idx));
        }
    }

    #[test]
    fn pretty_rendering() {
        assert_eq!(Pretty(13).to_string(), "p0 & !p0");
        assert_eq!(Pretty(14).to_string(), "p0 | !p0");
        assert_eq!(Pretty(atom(3)).to_string(), "p3");
        assert_eq!(Pretty(imp(atom(1), atom(2))).to_string(), "p1 -> p2");
    }
}
