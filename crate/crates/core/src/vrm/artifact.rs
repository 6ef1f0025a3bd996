//! The verifier artifact: the portable compiled form of a rule that the
//! wallet registers and checks claims against.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! "VRM1"                magic
//! u16                   format version (1)
//! u64                   rule id
//! u32                   max_len
//! u32                   segment count
//! per segment:
//!   u8 0, u32 len, bytes             fixed literal
//!   u8 1, u32 len, name, dfa         variable
//! dfa                   whole-template automaton
//!
//! dfa := u32 byte length of the rest, u32 states, u32 start,
//!        u32 accepting count, u32 accepting ids (ascending),
//!        per state: u16 run count, runs of (u8 last byte, u32 target)
//! ```
//!
//! Transitions are run-length encoded: each run covers the bytes after the
//! previous run's last byte up to and including its own, and the final run
//! of every state ends at 255.

use std::collections::HashSet;

use super::dfa::Dfa;
use super::rule::{valid_fixed_byte, valid_var_name, VariableValues};
use super::VrmError;

pub const MAGIC: &[u8; 4] = b"VRM1";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArtifactSegment {
    Fixed(String),
    Variable { name: String, dfa: Dfa },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifierArtifact {
    rule_id: u64,
    max_len: usize,
    segments: Vec<ArtifactSegment>,
    template: Dfa,
}

impl VerifierArtifact {
    pub fn new(rule_id: u64, max_len: usize, segments: Vec<ArtifactSegment>, template: Dfa) -> Result<Self, VrmError> {
        let corrupt = |m: &str| VrmError::CorruptArtifact(m.into());
        if max_len == 0 || max_len > u32::MAX as usize {
            return Err(corrupt("max_len out of range"));
        }
        if segments.is_empty() {
            return Err(corrupt("no segments"));
        }
        let mut names = HashSet::new();
        for seg in &segments {
            match seg {
                ArtifactSegment::Fixed(text) => {
                    if text.is_empty() || !text.bytes().all(valid_fixed_byte) {
                        return Err(corrupt("invalid fixed segment"));
                    }
                }
                ArtifactSegment::Variable { name, .. } => {
                    if !valid_var_name(name) || !names.insert(name.as_str()) {
                        return Err(corrupt("invalid or duplicate variable name"));
                    }
                }
            }
        }
        Ok(Self {
            rule_id,
            max_len,
            segments,
            template,
        })
    }

    pub fn rule_id(&self) -> u64 {
        self.rule_id
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn segments(&self) -> &[ArtifactSegment] {
        &self.segments
    }

    pub fn template_dfa(&self) -> &Dfa {
        &self.template
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            ArtifactSegment::Variable { name, .. } => Some(name.as_str()),
            ArtifactSegment::Fixed(_) => None,
        })
    }

    /// Anchored, left-to-right segment matching. Each variable takes the
    /// longest prefix its DFA accepts that still lets the remaining segments
    /// match; the whole text must be consumed.
    ///
    /// On failure, `NoMatch::segment` is the furthest segment index reached
    /// (equal to the segment count when text is left over at the end).
    pub fn match_and_extract(&self, text: &str) -> Result<VariableValues, VrmError> {
        let bytes = text.as_bytes();
        if bytes.len() > self.max_len {
            return Err(VrmError::InputTooLong {
                len: bytes.len(),
                max: self.max_len,
            });
        }
        let mut search = Search {
            segments: &self.segments,
            text: bytes,
            spans: vec![(0, 0); self.segments.len()],
            failed: HashSet::new(),
            furthest: 0,
        };
        if !search.run(0, 0) {
            return Err(VrmError::NoMatch {
                segment: search.furthest,
            });
        }
        Ok(self
            .segments
            .iter()
            .zip(&search.spans)
            .filter_map(|(seg, &(a, b))| match seg {
                ArtifactSegment::Variable { name, .. } => Some((name.clone(), text[a..b].to_string())),
                ArtifactSegment::Fixed(_) => None,
            })
            .collect())
    }

    /// Concatenates fixed parts and values in segment order. A missing
    /// variable is reported before an unexpected extra one.
    pub fn reconstruct(&self, values: &VariableValues) -> Result<String, VrmError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                ArtifactSegment::Fixed(text) => out.push_str(text),
                ArtifactSegment::Variable { name, .. } => out.push_str(
                    values
                        .get(name)
                        .ok_or_else(|| VrmError::MissingVariable(name.clone()))?,
                ),
            }
        }
        if let Some((extra, _)) = values.iter().find(|(k, _)| !self.variable_names().any(|n| n == *k)) {
            return Err(VrmError::UnknownVariable(extra.to_string()));
        }
        Ok(out)
    }

    /// True iff every value is accepted by its variable automaton and the
    /// reconstructed string is accepted by the whole-template automaton
    /// within `max_len`.
    pub fn reconstruct_and_verify(&self, values: &VariableValues) -> Result<bool, VrmError> {
        let text = self.reconstruct(values)?;
        let per_variable = self.segments.iter().all(|seg| match seg {
            ArtifactSegment::Variable { name, dfa } => values.get(name).is_some_and(|v| dfa.accepts(v.as_bytes())),
            ArtifactSegment::Fixed(_) => true,
        });
        if !per_variable {
            return Ok(false);
        }
        match self.template.run(text.as_bytes(), self.max_len) {
            Ok(run) => Ok(run.accepted),
            Err(VrmError::InputTooLong { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }

    pub fn export(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.extend_from_slice(&self.rule_id.to_le_bytes());
        w.extend_from_slice(&(self.max_len as u32).to_le_bytes());
        w.extend_from_slice(&(self.segments.len() as u32).to_le_bytes());
        for seg in &self.segments {
            match seg {
                ArtifactSegment::Fixed(text) => {
                    w.push(0);
                    put_bytes(&mut w, text.as_bytes());
                }
                ArtifactSegment::Variable { name, dfa } => {
                    w.push(1);
                    put_bytes(&mut w, name.as_bytes());
                    put_dfa(&mut w, dfa);
                }
            }
        }
        put_dfa(&mut w, &self.template);
        w
    }

    pub fn import(bytes: &[u8]) -> Result<Self, VrmError> {
        if bytes.len() >= 4 && &bytes[..3] == b"VRM" && bytes[3] != MAGIC[3] {
            return Err(VrmError::VersionMismatch {
                found: u32::from(bytes[3]),
            });
        }
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(VrmError::CorruptArtifact("bad magic".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(VrmError::VersionMismatch {
                found: u32::from(version),
            });
        }
        let rule_id = r.u64()?;
        let max_len = r.u32()? as usize;
        let count = r.u32()? as usize;
        if count > bytes.len() {
            return Err(VrmError::CorruptArtifact("segment count exceeds input".into()));
        }
        let mut segments = Vec::with_capacity(count);
        for _ in 0..count {
            segments.push(match r.u8()? {
                0 => ArtifactSegment::Fixed(r.string()?),
                1 => {
                    let name = r.string()?;
                    let dfa = r.dfa()?;
                    ArtifactSegment::Variable { name, dfa }
                }
                t => return Err(VrmError::CorruptArtifact(format!("unknown segment tag {t}"))),
            });
        }
        let template = r.dfa()?;
        if r.pos != bytes.len() {
            return Err(VrmError::CorruptArtifact("trailing bytes".into()));
        }
        Self::new(rule_id, max_len, segments, template)
    }
}

struct Search<'a> {
    segments: &'a [ArtifactSegment],
    text: &'a [u8],
    spans: Vec<(usize, usize)>,
    /// (segment, position) pairs known not to lead to a full match.
    failed: HashSet<(usize, usize)>,
    furthest: usize,
}

impl Search<'_> {
    fn run(&mut self, seg: usize, pos: usize) -> bool {
        self.furthest = self.furthest.max(seg);
        if seg == self.segments.len() {
            return pos == self.text.len();
        }
        if self.failed.contains(&(seg, pos)) {
            return false;
        }
        let matched = match &self.segments[seg] {
            ArtifactSegment::Fixed(lit) => {
                let lit = lit.as_bytes();
                self.text[pos..].starts_with(lit) && {
                    self.spans[seg] = (pos, pos + lit.len());
                    self.run(seg + 1, pos + lit.len())
                }
            }
            ArtifactSegment::Variable { dfa, .. } => {
                let ends = dfa.accepted_prefixes(&self.text[pos..]);
                ends.into_iter().rev().any(|len| {
                    self.spans[seg] = (pos, pos + len);
                    self.run(seg + 1, pos + len)
                })
            }
        };
        if !matched {
            self.failed.insert((seg, pos));
        }
        matched
    }
}

fn put_bytes(w: &mut Vec<u8>, b: &[u8]) {
    w.extend_from_slice(&(b.len() as u32).to_le_bytes());
    w.extend_from_slice(b);
}

fn put_dfa(w: &mut Vec<u8>, dfa: &Dfa) {
    let mut body = Vec::new();
    body.extend_from_slice(&(dfa.state_count() as u32).to_le_bytes());
    body.extend_from_slice(&dfa.start().to_le_bytes());
    let accepting: Vec<u32> = dfa.accepting_states().collect();
    body.extend_from_slice(&(accepting.len() as u32).to_le_bytes());
    for s in accepting {
        body.extend_from_slice(&s.to_le_bytes());
    }
    for s in 0..dfa.state_count() as u32 {
        let row = dfa.transitions(s);
        let mut runs: Vec<(u8, u32)> = Vec::new();
        for (b, &t) in row.iter().enumerate() {
            match runs.last_mut() {
                Some((last, target)) if *target == t => *last = b as u8,
                _ => runs.push((b as u8, t)),
            }
        }
        body.extend_from_slice(&(runs.len() as u16).to_le_bytes());
        for (last, target) in runs {
            body.push(last);
            body.extend_from_slice(&target.to_le_bytes());
        }
    }
    put_bytes(w, &body);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VrmError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| VrmError::CorruptArtifact("truncated".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, VrmError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, VrmError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, VrmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, VrmError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, VrmError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| VrmError::CorruptArtifact("non-UTF-8 string".into()))
    }

    fn dfa(&mut self) -> Result<Dfa, VrmError> {
        let len = self.u32()? as usize;
        let mut r = Reader {
            buf: self.take(len)?,
            pos: 0,
        };
        let corrupt = |m: &str| VrmError::CorruptArtifact(m.into());
        let n = r.u32()? as usize;
        if n == 0 || n > len {
            return Err(corrupt("bad state count"));
        }
        let start = r.u32()?;
        let acc_count = r.u32()? as usize;
        if acc_count > n {
            return Err(corrupt("bad accepting count"));
        }
        let mut accepting = vec![false; n];
        let mut prev: Option<u32> = None;
        for _ in 0..acc_count {
            let s = r.u32()?;
            if s as usize >= n || prev.is_some_and(|p| p >= s) {
                return Err(corrupt("accepting ids not ascending or out of range"));
            }
            accepting[s as usize] = true;
            prev = Some(s);
        }
        let mut table = Vec::with_capacity(n * 256);
        for _ in 0..n {
            let runs = r.u16()?;
            let mut next_byte = 0usize;
            for _ in 0..runs {
                let last = r.u8()? as usize;
                let target = r.u32()?;
                if last < next_byte {
                    return Err(corrupt("transition runs out of order"));
                }
                table.extend(std::iter::repeat_n(target, last + 1 - next_byte));
                next_byte = last + 1;
            }
            if next_byte != 256 {
                return Err(corrupt("transition runs do not cover all bytes"));
            }
        }
        if r.pos != r.buf.len() {
            return Err(corrupt("trailing bytes in automaton"));
        }
        Dfa::from_parts(table, accepting, start).map_err(VrmError::CorruptArtifact)
    }
}
