//! Thompson construction.

use super::ast::{ByteSet, RegexAst};
use super::VrmError;

/// Hard cap on NFA size; counted repetition of large groups can otherwise
/// grow without bound before the DFA budget is ever consulted.
pub const MAX_NFA_STATES: usize = 200_000;

#[derive(Debug, Clone, Default)]
pub struct NfaState {
    pub epsilon: Vec<usize>,
    pub edge: Option<(ByteSet, usize)>,
}

#[derive(Debug, Clone)]
pub struct Nfa {
    pub states: Vec<NfaState>,
    pub start: usize,
    pub accept: usize,
}

/// A sub-automaton with one entry and one exit state.
#[derive(Clone, Copy)]
struct Frag {
    start: usize,
    end: usize,
}

struct Builder {
    states: Vec<NfaState>,
}

impl Builder {
    fn state(&mut self) -> Result<usize, VrmError> {
        if self.states.len() >= MAX_NFA_STATES {
            return Err(VrmError::StateBlowup {
                budget: MAX_NFA_STATES,
            });
        }
        self.states.push(NfaState::default());
        Ok(self.states.len() - 1)
    }

    fn eps(&mut self, from: usize, to: usize) {
        self.states[from].epsilon.push(to);
    }

    fn build(&mut self, ast: &RegexAst) -> Result<Frag, VrmError> {
        Ok(match ast {
            RegexAst::Empty => {
                let s = self.state()?;
                Frag { start: s, end: s }
            }
            RegexAst::Literal(b) => self.edge(ByteSet::single(*b))?,
            RegexAst::Class(set) => self.edge(*set)?,
            RegexAst::Group(inner) => self.build(inner)?,
            RegexAst::Concat(items) => {
                let mut frag = self.build(&RegexAst::Empty)?;
                for item in items {
                    let next = self.build(item)?;
                    self.eps(frag.end, next.start);
                    frag.end = next.end;
                }
                frag
            }
            RegexAst::Alternation(branches) => {
                let start = self.state()?;
                let end = self.state()?;
                for b in branches {
                    let f = self.build(b)?;
                    self.eps(start, f.start);
                    self.eps(f.end, end);
                }
                Frag { start, end }
            }
            RegexAst::Repeat { inner, min, max } => {
                let mut frag = self.build(&RegexAst::Empty)?;
                for _ in 0..*min {
                    let f = self.build(inner)?;
                    self.eps(frag.end, f.start);
                    frag.end = f.end;
                }
                match max {
                    None => {
                        // x*: loop back through a hub state
                        let hub = self.state()?;
                        let f = self.build(inner)?;
                        self.eps(frag.end, hub);
                        self.eps(hub, f.start);
                        self.eps(f.end, hub);
                        frag.end = hub;
                    }
                    Some(max) => {
                        let end = self.state()?;
                        for _ in *min..*max {
                            let f = self.build(inner)?;
                            self.eps(frag.end, f.start);
                            self.eps(frag.end, end);
                            frag.end = f.end;
                        }
                        self.eps(frag.end, end);
                        frag.end = end;
                    }
                }
                frag
            }
        })
    }

    fn edge(&mut self, set: ByteSet) -> Result<Frag, VrmError> {
        let start = self.state()?;
        let end = self.state()?;
        self.states[start].edge = Some((set, end));
        Ok(Frag { start, end })
    }
}

impl Nfa {
    pub fn from_ast(ast: &RegexAst) -> Result<Self, VrmError> {
        let mut b = Builder { states: Vec::new() };
        let frag = b.build(ast)?;
        Ok(Self {
            states: b.states,
            start: frag.start,
            accept: frag.end,
        })
    }

    /// Adds the epsilon closure of `seeds` to a sorted, deduplicated set.
    pub fn closure(&self, seeds: impl IntoIterator<Item = usize>, marks: &mut [bool]) -> Vec<usize> {
        let mut stack: Vec<usize> = Vec::new();
        let mut out = Vec::new();
        for s in seeds {
            if !marks[s] {
                marks[s] = true;
                stack.push(s);
            }
        }
        while let Some(s) = stack.pop() {
            out.push(s);
            for &t in &self.states[s].epsilon {
                if !marks[t] {
                    marks[t] = true;
                    stack.push(t);
                }
            }
        }
        for &s in &out {
            marks[s] = false;
        }
        out.sort_unstable();
        out
    }
}
