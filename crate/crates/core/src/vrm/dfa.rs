//! Subset construction, minimization and execution of byte-level DFAs.
//!
//! Every DFA produced here is total over all 256 byte values, minimal, and
//! canonically numbered: state 0 is the dead sink and the remaining states
//! are numbered in breadth-first order from the start state, visiting
//! bytes in ascending order. Two regexes with the same language therefore
//! compile to identical tables.

use std::collections::{HashMap, VecDeque};

use super::ast::{ByteSet, RegexAst};
use super::nfa::Nfa;
use super::VrmError;

pub const DEAD: u32 = 0;
pub const DEFAULT_STATE_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dfa {
    /// `state * 256 + byte -> state`
    table: Vec<u32>,
    accepting: Vec<bool>,
    start: u32,
}

/// Outcome of walking a DFA over an input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfaRun {
    pub accepted: bool,
    pub final_state: u32,
    /// Visited states, starting with the start state; `input.len() + 1` long.
    pub trace: Vec<u32>,
}

impl Dfa {
    /// Builds a DFA from raw parts, checking totality and the dead-state
    /// convention. Used when importing artifacts.
    pub fn from_parts(table: Vec<u32>, accepting: Vec<bool>, start: u32) -> Result<Self, String> {
        let n = accepting.len();
        if n == 0 {
            return Err("DFA has no states".into());
        }
        if table.len() != n * 256 {
            return Err("transition table is not total".into());
        }
        if start as usize >= n {
            return Err("start state out of range".into());
        }
        if table.iter().any(|&t| t as usize >= n) {
            return Err("transition target out of range".into());
        }
        if accepting[0] || table[..256].iter().any(|&t| t != DEAD) {
            return Err("state 0 is not a dead sink".into());
        }
        Ok(Self {
            table,
            accepting,
            start,
        })
    }

    pub fn state_count(&self) -> usize {
        self.accepting.len()
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn is_accepting(&self, state: u32) -> bool {
        self.accepting[state as usize]
    }

    pub fn accepting_states(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.accepting.len() as u32).filter(|&s| self.accepting[s as usize])
    }

    #[inline]
    pub fn next(&self, state: u32, byte: u8) -> u32 {
        self.table[state as usize * 256 + byte as usize]
    }

    pub fn transitions(&self, state: u32) -> &[u32] {
        &self.table[state as usize * 256..(state as usize + 1) * 256]
    }

    /// Full-string match with no length bound.
    pub fn accepts(&self, input: &[u8]) -> bool {
        let mut s = self.start;
        for &b in input {
            s = self.next(s, b);
            if s == DEAD {
                return false;
            }
        }
        self.is_accepting(s)
    }

    /// Walks the DFA from the start state. Inputs longer than `max_len` are
    /// refused, mirroring a fixed-size circuit.
    pub fn run(&self, input: &[u8], max_len: usize) -> Result<DfaRun, VrmError> {
        if input.len() > max_len {
            return Err(VrmError::InputTooLong {
                len: input.len(),
                max: max_len,
            });
        }
        let mut trace = Vec::with_capacity(input.len() + 1);
        let mut s = self.start;
        trace.push(s);
        for &b in input {
            s = self.next(s, b);
            trace.push(s);
        }
        Ok(DfaRun {
            accepted: self.is_accepting(s),
            final_state: s,
            trace,
        })
    }

    /// Lengths of every prefix of `input` the DFA accepts, ascending.
    pub fn accepted_prefixes(&self, input: &[u8]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut s = self.start;
        if self.is_accepting(s) {
            out.push(0);
        }
        for (i, &b) in input.iter().enumerate() {
            s = self.next(s, b);
            if s == DEAD {
                break;
            }
            if self.is_accepting(s) {
                out.push(i + 1);
            }
        }
        out
    }

    pub fn is_empty_language(&self) -> bool {
        !self.accepting.iter().any(|&a| a)
    }

    /// Bytes that can appear in some accepted string.
    pub fn alphabet(&self) -> ByteSet {
        let live = self.live_states();
        let mut set = ByteSet::empty();
        for s in 0..self.state_count() {
            if !live[s] {
                continue;
            }
            for (b, &t) in self.transitions(s as u32).iter().enumerate() {
                if live[t as usize] {
                    set.insert(b as u8);
                }
            }
        }
        set
    }

    /// States reachable from the start that can still reach acceptance.
    fn live_states(&self) -> Vec<bool> {
        let n = self.state_count();
        let mut reachable = vec![false; n];
        let mut queue = VecDeque::from([self.start as usize]);
        reachable[self.start as usize] = true;
        while let Some(s) = queue.pop_front() {
            for &t in self.transitions(s as u32) {
                if !reachable[t as usize] {
                    reachable[t as usize] = true;
                    queue.push_back(t as usize);
                }
            }
        }
        let mut coreach = self.accepting.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..n {
                if !coreach[s] && self.transitions(s as u32).iter().any(|&t| coreach[t as usize]) {
                    coreach[s] = true;
                    changed = true;
                }
            }
        }
        (0..n).map(|s| reachable[s] && coreach[s]).collect()
    }
}

/// Groups bytes that no byte set in the NFA distinguishes.
fn byte_classes(nfa: &Nfa) -> (Vec<u8>, [usize; 256]) {
    let mut sets: Vec<ByteSet> = nfa.states.iter().filter_map(|s| s.edge.map(|(set, _)| set)).collect();
    sets.sort_unstable();
    sets.dedup();
    let mut signature_to_class: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut class_of = [0usize; 256];
    let mut reps = Vec::new();
    for b in 0..=255u8 {
        let sig: Vec<bool> = sets.iter().map(|s| s.contains(b)).collect();
        let next_id = signature_to_class.len();
        let id = *signature_to_class.entry(sig).or_insert_with(|| {
            reps.push(b);
            next_id
        });
        class_of[b as usize] = id;
    }
    (reps, class_of)
}

pub fn compile(ast: &RegexAst) -> Result<Dfa, VrmError> {
    compile_with_budget(ast, DEFAULT_STATE_BUDGET)
}

pub fn compile_with_budget(ast: &RegexAst, budget: usize) -> Result<Dfa, VrmError> {
    let nfa = Nfa::from_ast(ast)?;
    let (reps, class_of) = byte_classes(&nfa);
    let k = reps.len();

    // subset construction over byte classes; id 0 is the empty set
    let mut marks = vec![false; nfa.states.len()];
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut sets: Vec<Vec<usize>> = vec![Vec::new()];
    ids.insert(Vec::new(), 0);
    let start_set = nfa.closure([nfa.start], &mut marks);
    let start = 1;
    ids.insert(start_set.clone(), start);
    sets.push(start_set);
    let mut delta: Vec<usize> = vec![0; k];
    let mut cursor = 1;
    while cursor < sets.len() {
        let current = sets[cursor].clone();
        let mut row = vec![0usize; k];
        for (c, &rep) in reps.iter().enumerate() {
            let targets = current.iter().filter_map(|&s| match nfa.states[s].edge {
                Some((set, t)) if set.contains(rep) => Some(t),
                _ => None,
            });
            let next = nfa.closure(targets, &mut marks);
            let id = match ids.get(&next) {
                Some(&id) => id,
                None => {
                    let id = sets.len();
                    if id > budget {
                        return Err(VrmError::StateBlowup { budget });
                    }
                    ids.insert(next.clone(), id);
                    sets.push(next);
                    id
                }
            };
            row[c] = id;
        }
        delta.extend(row);
        cursor += 1;
    }
    let accepting: Vec<bool> = sets.iter().map(|s| s.binary_search(&nfa.accept).is_ok()).collect();

    let (table, accepting, start) = minimize(&delta, &accepting, start, k);
    let n = accepting.len();
    let mut full = vec![DEAD; n * 256];
    for s in 0..n {
        for b in 0..256 {
            full[s * 256 + b] = table[s * k + class_of[b]] as u32;
        }
    }
    Ok(Dfa {
        table: full,
        accepting,
        start: start as u32,
    })
}

/// Moore partition refinement followed by canonical renumbering. Input state
/// 0 must be the dead sink. Returns (class-indexed table, accepting, start).
fn minimize(delta: &[usize], accepting: &[bool], start: usize, k: usize) -> (Vec<usize>, Vec<bool>, usize) {
    let n = accepting.len();
    let mut block: Vec<usize> = accepting.iter().map(|&a| usize::from(a)).collect();
    loop {
        let mut sig_ids: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut next_block = vec![0; n];
        for s in 0..n {
            let mut sig = Vec::with_capacity(k + 1);
            sig.push(block[s]);
            sig.extend((0..k).map(|c| block[delta[s * k + c]]));
            let len = sig_ids.len();
            next_block[s] = *sig_ids.entry(sig).or_insert(len);
        }
        let stable = sig_ids.len() == block.iter().collect::<std::collections::HashSet<_>>().len();
        block = next_block;
        if stable {
            break;
        }
    }

    // canonical numbering: dead block first, then BFS over blocks from start
    let dead_block = block[0];
    let mut new_id: HashMap<usize, usize> = HashMap::from([(dead_block, 0)]);
    let mut order = vec![0usize];
    let mut queue = VecDeque::new();
    if let std::collections::hash_map::Entry::Vacant(e) = new_id.entry(block[start]) {
        e.insert(order.len());
        order.push(start);
        queue.push_back(start);
    }
    // classes are numbered by their smallest byte, so this visits bytes in order
    while let Some(s) = queue.pop_front() {
        for c in 0..k {
            let t = delta[s * k + c];
            if let std::collections::hash_map::Entry::Vacant(e) = new_id.entry(block[t]) {
                e.insert(order.len());
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    let m = order.len();
    let mut table = vec![0; m * k];
    let mut acc = vec![false; m];
    for (id, &rep) in order.iter().enumerate() {
        acc[id] = accepting[rep];
        for c in 0..k {
            table[id * k + c] = new_id[&block[delta[rep * k + c]]];
        }
    }
    (table, acc, new_id[&block[start]])
}
