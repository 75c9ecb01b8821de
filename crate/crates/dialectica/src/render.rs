//! Trace export: TSV rows and ASCII stack diagrams.
//!
//! The diagram draws slots as columns and stacks as vertical strings, the
//! way the staged procedures are usually pictured: the top of each column
//! is the current proposal ρ(u), entries below it are its revised
//! predecessors.

use crate::codec::{Code, Pretty};
use crate::engine::{ProcedureState, Trace};
use std::fmt::Write;

/// TSV rows: stage, clause, z, m, and the watched part of `A_s` as a sorted
/// list (or the snapshot `A_s` when the trace carries snapshots).
pub fn trace_tsv(trace: &Trace) -> String {
    let mut out = String::from("stage\tclause\tz\tm\tA_s\n");
    for (i, e) in trace.events.iter().enumerate() {
        let clause = match e.clause {
            crate::engine::Clause::Extend => "extend",
            crate::engine::Clause::Revise { .. } => "revise",
            crate::engine::Clause::Discard { .. } => "discard",
            crate::engine::Clause::Reset => "reset",
        };
        let z = e.clause.z().map(|z| z.to_string()).unwrap_or_else(|| "-".into());
        let a: Vec<Code> = if let Some(snaps) = &trace.snapshots {
            snaps[i + 1].a.iter().copied().collect()
        } else if !trace.watch.is_empty() {
            trace
                .watch
                .iter()
                .zip(trace.watch_rows[i].iter())
                .filter(|(_, &b)| b)
                .map(|(&w, _)| w)
                .collect()
        } else {
            Vec::new()
        };
        let a_str = a.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", e.stage, clause, z, e.m, a_str);
    }
    out
}

/// ASCII diagram of the stacks at a given state. `max_slots` bounds how many
/// columns are drawn; with `pretty`, a legend lists the decoded formulas.
pub fn ascii_stacks(state: &ProcedureState, max_slots: usize, pretty: bool) -> String {
    let shown = state.stacks.len().min(max_slots);
    let depth = state.stacks.iter().take(shown).map(|s| s.len()).max().unwrap_or(0);
    let mut widths = Vec::with_capacity(shown);
    for u in 0..shown {
        let mut w = format!("{u}").len();
        for c in &state.stacks[u] {
            w = w.max(format!("{c}").len());
        }
        widths.push(w + 2);
    }
    let mut out = String::new();
    let _ = writeln!(out, "stage {}   m = {}", state.stage, state.marker);
    for row in (0..depth).rev() {
        for (u, &width) in widths.iter().enumerate().take(shown) {
            let cell = state.stacks[u].get(row).map(|c| c.to_string()).unwrap_or_default();
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    for &w in &widths {
        let _ = write!(out, "{:->width$}", "", width = w);
    }
    out.push('\n');
    for (u, &w) in widths.iter().enumerate() {
        let _ = write!(out, "{u:>width$}", width = w);
    }
    out.push('\n');
    if pretty {
        let mut codes: Vec<Code> =
            state.stacks.iter().take(shown).flatten().copied().collect();
        codes.sort_unstable();
        codes.dedup();
        out.push('\n');
        for c in codes {
            let _ = writeln!(out, "  {c} = {}", Pretty(c));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_renders_columns() {
        let state = ProcedureState {
            stage: 7,
            stacks: vec![vec![0], vec![5, 14], vec![10]],
            marker: 2,
        };
        let art = ascii_stacks(&state, 16, false);
        assert!(art.contains("stage 7"));
        assert!(art.contains("14"));
        let lines: Vec<&str> = art.lines().collect();
        assert!(lines.len() >= 4, "{art}");
    }

    #[test]
    fn pretty_legend_lists_formulas() {
        let state = ProcedureState { stage: 1, stacks: vec![vec![13]], marker: 0 };
        let art = ascii_stacks(&state, 4, true);
        assert!(art.contains("13 = p0 & !p0"), "{art}");
    }
}
