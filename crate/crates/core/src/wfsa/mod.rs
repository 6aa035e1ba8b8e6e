//! Weighted finite-state acceptors over natural-log weights.
//!
//! Automata are immutable once built; the topological order and the
//! per-state arc index are computed on first use and cached. Epsilon
//! self-loops are tolerated everywhere and skipped by all DAG algorithms.

mod compose;
mod dump;
mod semiring;

pub use compose::{
    intersect, intersect_with_explicit_backoff, intersect_with_lm, lm_as_wfsa, CompositionOptions,
};
pub use dump::{parse_text, write_text, DumpError};
pub use semiring::{log_add, Semiring};

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

pub type StateId = u32;
pub type Label = u32;
pub const EPSILON: Label = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WfsaError {
    #[error("arc {src} -> {dst} references a state outside 0..{num_states}")]
    StateOutOfRange {
        src: StateId,
        dst: StateId,
        num_states: u32,
    },
    #[error("start state {0} out of range")]
    BadStart(StateId),
    #[error("automaton has a cycle through state {0}")]
    Cyclic(StateId),
    #[error("more than {limit} accepting paths")]
    TooManyPaths { limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub src: StateId,
    pub dst: StateId,
    pub label: Label,
    pub weight: f64,
}

impl Arc {
    pub fn new(src: StateId, dst: StateId, label: Label, weight: f64) -> Self {
        Arc {
            src,
            dst,
            label,
            weight,
        }
    }

    #[inline]
    pub fn is_epsilon_self_loop(&self) -> bool {
        self.src == self.dst && self.label == EPSILON
    }
}

/// One accepted label sequence with its accumulated weight.
#[derive(Debug, Clone, PartialEq)]
pub struct PathScore {
    pub labels: Vec<Label>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
struct Topology {
    order: Vec<StateId>,
    /// arcs leaving state s: out_arcs[offsets[s]..offsets[s + 1]]
    offsets: Vec<usize>,
    out_arcs: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct Wfsa {
    num_states: u32,
    start: StateId,
    arcs: Vec<Arc>,
    finals: BTreeMap<StateId, f64>,
    topology: OnceLock<Result<Topology, WfsaError>>,
}

impl PartialEq for Wfsa {
    fn eq(&self, other: &Self) -> bool {
        self.num_states == other.num_states
            && self.start == other.start
            && self.arcs == other.arcs
            && self.finals == other.finals
    }
}

impl Wfsa {
    pub fn from_parts(
        num_states: u32,
        start: StateId,
        arcs: Vec<Arc>,
        finals: BTreeMap<StateId, f64>,
    ) -> Result<Self, WfsaError> {
        if start >= num_states.max(1) {
            return Err(WfsaError::BadStart(start));
        }
        let num_states = num_states.max(1);
        for a in &arcs {
            if a.src >= num_states || a.dst >= num_states {
                return Err(WfsaError::StateOutOfRange {
                    src: a.src,
                    dst: a.dst,
                    num_states,
                });
            }
        }
        if let Some((&s, _)) = finals.range(num_states..).next() {
            return Err(WfsaError::StateOutOfRange {
                src: s,
                dst: s,
                num_states,
            });
        }
        Ok(Wfsa {
            num_states,
            start,
            arcs,
            finals,
            topology: OnceLock::new(),
        })
    }

    pub fn num_states(&self) -> u32 {
        self.num_states
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn finals(&self) -> &BTreeMap<StateId, f64> {
        &self.finals
    }

    pub fn final_weight(&self, state: StateId) -> Option<f64> {
        self.finals.get(&state).copied()
    }

    fn topology(&self) -> Result<&Topology, WfsaError> {
        self.topology
            .get_or_init(|| build_topology(self))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Topological order of all states (epsilon self-loops ignored).
    pub fn topological_order(&self) -> Result<&[StateId], WfsaError> {
        self.topology().map(|t| t.order.as_slice())
    }

    pub fn is_acyclic(&self) -> bool {
        self.topology().is_ok()
    }

    /// Arcs leaving `state` in insertion order, epsilon self-loops excluded.
    pub fn out_arcs(&self, state: StateId) -> Result<impl Iterator<Item = &Arc> + '_, WfsaError> {
        let topo = self.topology()?;
        let s = state as usize;
        Ok(topo.out_arcs[topo.offsets[s]..topo.offsets[s + 1]]
            .iter()
            .map(move |&i| &self.arcs[i as usize]))
    }

    /// Forward weight of every state.
    pub fn forward_weights(&self, semiring: Semiring) -> Result<Vec<f64>, WfsaError> {
        let topo = self.topology()?;
        let mut alpha = vec![Semiring::ZERO; self.num_states as usize];
        alpha[self.start as usize] = Semiring::ONE;
        for &s in &topo.order {
            let a = alpha[s as usize];
            if a == Semiring::ZERO {
                continue;
            }
            for &i in &topo.out_arcs[topo.offsets[s as usize]..topo.offsets[s as usize + 1]] {
                let arc = &self.arcs[i as usize];
                let d = arc.dst as usize;
                alpha[d] = semiring.plus(alpha[d], semiring.times(a, arc.weight));
            }
        }
        Ok(alpha)
    }

    /// Semiring sum over all accepting paths; `-inf` when none exist.
    pub fn forward_score(&self, semiring: Semiring) -> Result<f64, WfsaError> {
        let alpha = self.forward_weights(semiring)?;
        Ok(semiring.sum(
            self.finals
                .iter()
                .map(|(&f, &w)| semiring.times(alpha[f as usize], w)),
        ))
    }

    /// Number of accepting paths, saturating at `u128::MAX`.
    pub fn count_paths(&self) -> Result<u128, WfsaError> {
        let topo = self.topology()?;
        let mut count = vec![0u128; self.num_states as usize];
        count[self.start as usize] = 1;
        for &s in &topo.order {
            let c = count[s as usize];
            if c == 0 {
                continue;
            }
            for &i in &topo.out_arcs[topo.offsets[s as usize]..topo.offsets[s as usize + 1]] {
                let d = self.arcs[i as usize].dst as usize;
                count[d] = count[d].saturating_add(c);
            }
        }
        Ok(self
            .finals
            .keys()
            .fold(0u128, |acc, &f| acc.saturating_add(count[f as usize])))
    }

    /// Every accepting path with its exact weight, sorted by label sequence.
    /// Epsilon labels are dropped from the reported sequences.
    pub fn enumerate_paths(&self, limit: usize) -> Result<Vec<PathScore>, WfsaError> {
        let n = self.count_paths()?;
        if n > limit as u128 {
            return Err(WfsaError::TooManyPaths { limit });
        }
        let topo = self.topology()?;
        let mut out = Vec::with_capacity(n as usize);
        let mut labels = Vec::new();
        // iterative DFS: (state, next out-arc cursor, weight on entry)
        let mut stack: Vec<(StateId, usize, f64)> = vec![(self.start, 0, 0.0)];
        let mut pushed_label: Vec<bool> = vec![false];
        while let Some(top) = stack.last_mut() {
            let (s, cursor, w) = *top;
            top.1 += 1;
            let lo = topo.offsets[s as usize];
            let hi = topo.offsets[s as usize + 1];
            if cursor == 0 {
                if let Some(fw) = self.final_weight(s) {
                    out.push(PathScore {
                        labels: labels.clone(),
                        weight: w + fw,
                    });
                }
            }
            if lo + cursor < hi {
                let arc = &self.arcs[topo.out_arcs[lo + cursor] as usize];
                let has_label = arc.label != EPSILON;
                if has_label {
                    labels.push(arc.label);
                }
                stack.push((arc.dst, 0, w + arc.weight));
                pushed_label.push(has_label);
            } else {
                stack.pop();
                if pushed_label.pop() == Some(true) {
                    labels.pop();
                }
            }
        }
        out.sort_by(|a, b| a.labels.cmp(&b.labels));
        Ok(out)
    }

    /// Highest-weight accepting path; ties go to the lexicographically
    /// smallest label sequence.
    pub fn best_path(&self) -> Result<Option<PathScore>, WfsaError> {
        let topo = self.topology()?;
        let mut best: Vec<Option<(f64, Vec<Label>)>> = vec![None; self.num_states as usize];
        best[self.start as usize] = Some((0.0, Vec::new()));
        let better = |cand: &(f64, Vec<Label>), cur: &Option<(f64, Vec<Label>)>| match cur {
            None => true,
            Some((w, l)) => cand.0 > *w || (cand.0 == *w && cand.1 < *l),
        };
        for &s in &topo.order {
            let Some((w, labels)) = best[s as usize].clone() else {
                continue;
            };
            for &i in &topo.out_arcs[topo.offsets[s as usize]..topo.offsets[s as usize + 1]] {
                let arc = &self.arcs[i as usize];
                let mut l = labels.clone();
                if arc.label != EPSILON {
                    l.push(arc.label);
                }
                let cand = (w + arc.weight, l);
                if cand.0 > Semiring::ZERO && better(&cand, &best[arc.dst as usize]) {
                    best[arc.dst as usize] = Some(cand);
                }
            }
        }
        let mut result: Option<(f64, Vec<Label>)> = None;
        for (&f, &fw) in &self.finals {
            if let Some((w, l)) = &best[f as usize] {
                let cand = (w + fw, l.clone());
                if cand.0 > Semiring::ZERO && better(&cand, &result) {
                    result = Some(cand);
                }
            }
        }
        Ok(result.map(|(weight, labels)| PathScore { labels, weight }))
    }

    /// Copy with one weight-0 epsilon self-loop added to every state.
    pub fn add_epsilon_self_loops(&self) -> Wfsa {
        let mut arcs = self.arcs.clone();
        arcs.extend((0..self.num_states).map(|s| Arc::new(s, s, EPSILON, 0.0)));
        Wfsa {
            num_states: self.num_states,
            start: self.start,
            arcs,
            finals: self.finals.clone(),
            topology: OnceLock::new(),
        }
    }
}

fn build_topology(a: &Wfsa) -> Result<Topology, WfsaError> {
    let n = a.num_states as usize;
    let mut offsets = vec![0usize; n + 1];
    let mut indegree = vec![0u32; n];
    for arc in a.arcs.iter().filter(|arc| !arc.is_epsilon_self_loop()) {
        offsets[arc.src as usize + 1] += 1;
        indegree[arc.dst as usize] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut fill = offsets.clone();
    let mut out_arcs = vec![0u32; offsets[n]];
    for (i, arc) in a.arcs.iter().enumerate() {
        if arc.is_epsilon_self_loop() {
            continue;
        }
        out_arcs[fill[arc.src as usize]] = i as u32;
        fill[arc.src as usize] += 1;
    }
    // Kahn with a FIFO seeded in state order: deterministic
    let mut order = Vec::with_capacity(n);
    let mut queue: std::collections::VecDeque<StateId> = (0..n as u32)
        .filter(|&s| indegree[s as usize] == 0)
        .collect();
    while let Some(s) = queue.pop_front() {
        order.push(s);
        for &i in &out_arcs[offsets[s as usize]..offsets[s as usize + 1]] {
            let d = a.arcs[i as usize].dst as usize;
            indegree[d] -= 1;
            if indegree[d] == 0 {
                queue.push_back(d as StateId);
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&s| indegree[s] > 0).unwrap_or(0);
        return Err(WfsaError::Cyclic(stuck as StateId));
    }
    Ok(Topology {
        order,
        offsets,
        out_arcs,
    })
}
