//! Tab-separated text form of an acceptor.
//!
//! One arc per line as `src<TAB>dst<TAB>label<TAB>weight`, then one line per
//! final state as `state<TAB>final_weight`. The start state is the source of
//! the first arc (or the first final state when there are no arcs).

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use super::{Arc, Wfsa};
use crate::symbols::SymbolTable;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("dump line {line}: {message}")]
pub struct DumpError {
    pub line: usize,
    pub message: String,
}

pub fn write_text(a: &Wfsa, symbols: &SymbolTable) -> String {
    let mut out = String::new();
    for arc in a.arcs() {
        let label = symbols
            .symbol(crate::symbols::TokenId(arc.label))
            .map(str::to_owned)
            .unwrap_or_else(|| arc.label.to_string());
        writeln!(out, "{}\t{}\t{}\t{}", arc.src, arc.dst, label, arc.weight).unwrap();
    }
    for (s, w) in a.finals() {
        writeln!(out, "{s}\t{w}").unwrap();
    }
    out
}

pub fn parse_text(text: &str, symbols: &mut SymbolTable) -> Result<Wfsa, DumpError> {
    let mut arcs = Vec::new();
    let mut finals = BTreeMap::new();
    let mut start = None;
    let mut max_state = 0u32;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DumpError {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let state = |f: &str| {
            f.parse::<u32>()
                .map_err(|_| bad(format!("bad state id `{f}`")))
        };
        let weight = |f: &str| {
            f.parse::<f64>()
                .map_err(|_| bad(format!("bad weight `{f}`")))
        };
        match fields.as_slice() {
            [src, dst, label, w] => {
                let (src, dst) = (state(src)?, state(dst)?);
                let label = symbols.intern(label).0;
                arcs.push(Arc::new(src, dst, label, weight(w)?));
                start.get_or_insert(src);
                max_state = max_state.max(src).max(dst);
            }
            [s, w] => {
                let s = state(s)?;
                finals.insert(s, weight(w)?);
                start.get_or_insert(s);
                max_state = max_state.max(s);
            }
            _ => return Err(bad(format!("expected 2 or 4 fields, got {}", fields.len()))),
        }
    }
    Wfsa::from_parts(max_state + 1, start.unwrap_or(0), arcs, finals).map_err(|e| DumpError {
        line: 0,
        message: e.to_string(),
    })
}
