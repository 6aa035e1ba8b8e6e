//! Intersection of acceptors with an N-gram LM.
//!
//! [`intersect_with_lm`] composes by querying the LM's transition function,
//! so each word sequence receives its backoff probability exactly once.
//! [`intersect_with_explicit_backoff`] instead materializes the LM as an
//! acceptor with epsilon backoff arcs and matches them against epsilon
//! self-loops on the input; in the log semiring that construction also sums
//! the backoff paths of words that are listed in a longer context.

use std::collections::{BTreeMap, VecDeque};

use rustc_hash::FxHashMap;

use super::{Arc, Label, StateId, Wfsa, EPSILON};
use crate::ngram::{LmStateId, NGramError, NGramModel};
use crate::symbols::TokenId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompositionOptions {
    /// Start from the `<s>` context.
    pub bos: bool,
    /// Add `log P(</s> | context)` to final weights.
    pub eos: bool,
}

fn adjacency(q: &Wfsa) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); q.num_states() as usize];
    for (i, arc) in q.arcs().iter().enumerate() {
        if !arc.is_epsilon_self_loop() {
            out[arc.src as usize].push(i);
        }
    }
    out
}

/// Product of `q` with the LM, built by LM queries. States are the reachable
/// (q-state, LM-state) pairs; arc labels are those of `q`.
pub fn intersect_with_lm<F>(
    q: &Wfsa,
    model: &NGramModel,
    opts: CompositionOptions,
    mut resolve: F,
) -> Result<Wfsa, NGramError>
where
    F: FnMut(Label) -> Result<TokenId, NGramError>,
{
    let out = adjacency(q);
    let mut ids: FxHashMap<(StateId, LmStateId), StateId> = FxHashMap::default();
    let mut queue = VecDeque::new();
    let mut arcs = Vec::new();
    let mut finals = BTreeMap::new();
    let mut tokens: FxHashMap<Label, TokenId> = FxHashMap::default();

    let start = (q.start(), model.start_state(opts.bos));
    ids.insert(start, 0);
    queue.push_back(start);
    while let Some((qs, lm)) = queue.pop_front() {
        let src = ids[&(qs, lm)];
        if let Some(fw) = q.final_weight(qs) {
            let eos = if opts.eos {
                model.lm_advance(lm, model.eos())?.1
            } else {
                0.0
            };
            finals.insert(src, fw + eos);
        }
        for &i in &out[qs as usize] {
            let arc = q.arcs()[i];
            let (next_lm, lp) = if arc.label == EPSILON {
                (lm, 0.0)
            } else {
                let token = match tokens.get(&arc.label) {
                    Some(&t) => t,
                    None => {
                        let t = resolve(arc.label)?;
                        tokens.insert(arc.label, t);
                        t
                    }
                };
                model.lm_advance(lm, token)?
            };
            let key = (arc.dst, next_lm);
            let next_id = ids.len() as StateId;
            let dst = *ids.entry(key).or_insert_with(|| {
                queue.push_back(key);
                next_id
            });
            arcs.push(Arc::new(src, dst, arc.label, arc.weight + lp));
        }
    }
    Ok(Wfsa::from_parts(ids.len() as u32, 0, arcs, finals).expect("product is well-formed"))
}

/// Generic acceptor intersection. Equal labels move both machines; epsilon
/// arcs only match epsilon arcs.
pub fn intersect(a: &Wfsa, b: &Wfsa) -> Wfsa {
    let mut b_index: FxHashMap<(StateId, Label), Vec<usize>> = FxHashMap::default();
    for (i, arc) in b.arcs().iter().enumerate() {
        b_index.entry((arc.src, arc.label)).or_default().push(i);
    }
    let mut a_out = vec![Vec::new(); a.num_states() as usize];
    for (i, arc) in a.arcs().iter().enumerate() {
        a_out[arc.src as usize].push(i);
    }

    let mut ids: FxHashMap<(StateId, StateId), StateId> = FxHashMap::default();
    let mut queue = VecDeque::new();
    let mut arcs = Vec::new();
    let mut finals = BTreeMap::new();
    let start = (a.start(), b.start());
    ids.insert(start, 0);
    queue.push_back(start);
    while let Some((sa, sb)) = queue.pop_front() {
        let src = ids[&(sa, sb)];
        if let (Some(fa), Some(fb)) = (a.final_weight(sa), b.final_weight(sb)) {
            finals.insert(src, fa + fb);
        }
        for &i in &a_out[sa as usize] {
            let arc_a = a.arcs()[i];
            let Some(matches) = b_index.get(&(sb, arc_a.label)) else {
                continue;
            };
            for &j in matches {
                let arc_b = b.arcs()[j];
                let key = (arc_a.dst, arc_b.dst);
                let next_id = ids.len() as StateId;
                let dst = *ids.entry(key).or_insert_with(|| {
                    queue.push_back(key);
                    next_id
                });
                arcs.push(Arc::new(src, dst, arc_a.label, arc_a.weight + arc_b.weight));
            }
        }
    }
    Wfsa::from_parts(ids.len() as u32, 0, arcs, finals).expect("product is well-formed")
}

/// The LM as an acceptor over token ids: one arc per listed N-gram, one
/// epsilon arc per backoff, every state final with weight 0.
pub fn lm_as_wfsa(model: &NGramModel, bos: bool) -> Wfsa {
    let mut index: FxHashMap<LmStateId, StateId> = FxHashMap::default();
    for s in model.state_ids() {
        let id = index.len() as StateId;
        index.insert(s, id);
    }
    let mut arcs: Vec<Arc> = model
        .listed_transitions()
        .map(|(src, token, dst, lp)| Arc::new(index[&src], index[&dst], token.0, lp))
        .collect();
    for s in model.state_ids() {
        if let Some((to, bo)) = model.backoff_transition(s) {
            arcs.push(Arc::new(index[&s], index[&to], EPSILON, bo));
        }
    }
    let finals = (0..index.len() as StateId).map(|s| (s, 0.0)).collect();
    let start = index[&model.start_state(bos)];
    Wfsa::from_parts(index.len() as u32, start, arcs, finals).expect("LM automaton is well-formed")
}

/// Intersection through the materialized LM automaton with epsilon
/// self-loops on `q`. Output labels are LM token ids.
pub fn intersect_with_explicit_backoff<F>(
    q: &Wfsa,
    model: &NGramModel,
    opts: CompositionOptions,
    mut resolve: F,
) -> Result<Wfsa, NGramError>
where
    F: FnMut(Label) -> Result<TokenId, NGramError>,
{
    let mut arcs = Vec::with_capacity(q.arcs().len());
    for arc in q.arcs() {
        if arc.is_epsilon_self_loop() {
            continue;
        }
        let label = if arc.label == EPSILON {
            EPSILON
        } else {
            resolve(arc.label)?.0
        };
        arcs.push(Arc::new(arc.src, arc.dst, label, arc.weight));
    }
    let mut num_states = q.num_states();
    let finals = if opts.eos {
        model.resolve(crate::symbols::EOS_SYMBOL, false)?;
        let super_final = num_states;
        num_states += 1;
        for (&f, &w) in q.finals() {
            arcs.push(Arc::new(f, super_final, model.eos().0, w));
        }
        BTreeMap::from([(super_final, 0.0)])
    } else {
        q.finals().clone()
    };
    let relabelled = Wfsa::from_parts(num_states, q.start(), arcs, finals)
        .expect("relabelled input is well-formed")
        .add_epsilon_self_loops();
    Ok(intersect(&relabelled, &lm_as_wfsa(model, opts.bos)))
}
