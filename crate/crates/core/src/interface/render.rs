//! Human-readable views of a [`ParseResult`].

use std::fmt::Write;

use crate::interface::result::{ParseResult, TreeNode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Tree,
    Json,
    Summary,
}

pub fn render(result: &ParseResult, format: Format) -> String {
    match format {
        Format::Tree => tree(result),
        Format::Json => result.to_json(),
        Format::Summary => summary(result),
    }
}

/// One line: `COMPLETE relative+passive recoveries=1 [S ...]` or `FAIL <cause> at token k`.
pub fn summary(result: &ParseResult) -> String {
    match (&result.failure, &result.tree) {
        (Some(f), _) => match f.token {
            Some(k) => format!("FAIL {} at token {k}", f.cause),
            None => format!("FAIL {} at end of input", f.cause),
        },
        (None, Some(t)) => format!(
            "COMPLETE {} recoveries={} {}",
            result.structure_label,
            result.counters.recoveries,
            t.bracketed()
        ),
        (None, None) => "COMPLETE".into(),
    }
}

pub fn tree(result: &ParseResult) -> String {
    let mut out = String::new();
    match &result.tree {
        Some(t) => write_node(&mut out, t, 0),
        None => {
            out.push_str(&summary(result));
            out.push('\n');
        }
    }
    if !result.roles.is_empty() {
        out.push_str("roles:\n");
        for r in &result.roles {
            let _ = writeln!(out, "  {}({}) = {} @{}", r.role, r.event, r.filler, r.token);
        }
    }
    if !result.meanings.is_empty() {
        out.push_str("meanings:\n");
        for m in &result.meanings {
            let names: Vec<&str> = m.active.iter().map(|s| s.as_str()).collect();
            let _ = writeln!(out, "  {} @{}: {{{}}}", m.word, m.token, names.join(", "));
        }
    }
    let _ = writeln!(
        out,
        "retains={} evictions={} recoveries={}",
        result.counters.retains, result.counters.evictions, result.counters.recoveries
    );
    out
}

fn write_node(out: &mut String, node: &TreeNode, depth: usize) {
    let indent = "  ".repeat(depth);
    let slot = node.slot.as_ref().map(|s| format!("{s}: ")).unwrap_or_default();
    match &node.word {
        Some(w) => {
            let _ = write!(out, "{indent}{slot}{} \"{w}\"", node.category);
            if !node.meanings.is_empty() {
                let names: Vec<&str> = node.meanings.iter().map(|s| s.as_str()).collect();
                let _ = write!(out, " {{{}}}", names.join(", "));
            }
            for r in &node.roles {
                let _ = write!(out, " {r}");
            }
            out.push('\n');
        }
        None => {
            let _ = writeln!(out, "{indent}{slot}{} {}..{}", node.category, node.start, node.end);
            for c in &node.children {
                write_node(out, c, depth + 1);
            }
        }
    }
}
