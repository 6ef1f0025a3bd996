//! Parser for the supported regex subset.
//!
//! Supported: literals, escaped metacharacters, `\d \w \s` and their
//! negations, `\n \r \t \xHH`, bracket classes with ranges and negation,
//! `.`, `|`, `(...)`, `(?:...)`, `* + ?`, `{m}`, `{m,}`, `{m,n}`.
//! Anchors, lookaround, backreferences and lazy/possessive quantifiers are
//! rejected with [`VrmError::UnsupportedSyntax`].

use std::fmt;

use super::VrmError;

/// Upper bound for counted repetition.
pub const MAX_REPEAT: u32 = 1000;

/// A set of bytes.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ByteSet([u64; 4]);

impl ByteSet {
    pub const fn empty() -> Self {
        Self([0; 4])
    }

    pub fn range(lo: u8, hi: u8) -> Self {
        let mut s = Self::empty();
        for b in lo..=hi {
            s.insert(b);
        }
        s
    }

    pub fn single(b: u8) -> Self {
        let mut s = Self::empty();
        s.insert(b);
        s
    }

    /// Printable ASCII plus space, the universe for `.` and negation.
    pub fn printable() -> Self {
        Self::range(0x20, 0x7e)
    }

    pub fn digit() -> Self {
        Self::range(b'0', b'9')
    }

    pub fn word() -> Self {
        Self::range(b'a', b'z')
            .union(&Self::range(b'A', b'Z'))
            .union(&Self::digit())
            .union(&Self::single(b'_'))
    }

    pub fn space() -> Self {
        b" \t\r\n".iter().copied().collect()
    }

    pub fn insert(&mut self, b: u8) {
        self.0[(b >> 6) as usize] |= 1 << (b & 63);
    }

    pub fn contains(&self, b: u8) -> bool {
        self.0[(b >> 6) as usize] & (1 << (b & 63)) != 0
    }

    pub fn union(&self, other: &Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] | other.0[i]))
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] & other.0[i]))
    }

    /// Complement relative to [`ByteSet::printable`].
    pub fn negated(&self) -> Self {
        let p = Self::printable();
        Self(std::array::from_fn(|i| p.0[i] & !self.0[i]))
    }

    pub fn is_empty(&self) -> bool {
        self.0 == [0; 4]
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..=255u8).filter(|&b| self.contains(b))
    }

    pub fn first(&self) -> Option<u8> {
        self.iter().next()
    }
}

impl FromIterator<u8> for ByteSet {
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        let mut s = Self::empty();
        for b in iter {
            s.insert(b);
        }
        s
    }
}

impl fmt::Debug for ByteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        let bytes: Vec<u8> = self.iter().collect();
        let mut i = 0;
        while i < bytes.len() {
            let mut j = i;
            while j + 1 < bytes.len() && bytes[j + 1] == bytes[j] + 1 {
                j += 1;
            }
            write!(f, "{}", (bytes[i] as char).escape_debug())?;
            if j > i {
                write!(f, "-{}", (bytes[j] as char).escape_debug())?;
            }
            i = j + 1;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegexAst {
    /// Matches the empty string.
    Empty,
    Literal(u8),
    Class(ByteSet),
    Concat(Vec<RegexAst>),
    Alternation(Vec<RegexAst>),
    Repeat {
        inner: Box<RegexAst>,
        min: u32,
        max: Option<u32>,
    },
    Group(Box<RegexAst>),
}

impl RegexAst {
    /// Concatenation of literal bytes.
    pub fn literal(text: &[u8]) -> Self {
        match text {
            [] => Self::Empty,
            [b] => Self::Literal(*b),
            _ => Self::Concat(text.iter().map(|&b| Self::Literal(b)).collect()),
        }
    }

    /// Every byte set that appears in the tree, literals included.
    pub fn byte_sets(&self) -> Vec<ByteSet> {
        let mut out = Vec::new();
        self.collect_sets(&mut out);
        out
    }

    fn collect_sets(&self, out: &mut Vec<ByteSet>) {
        match self {
            Self::Empty => {}
            Self::Literal(b) => out.push(ByteSet::single(*b)),
            Self::Class(s) => out.push(*s),
            Self::Concat(v) | Self::Alternation(v) => v.iter().for_each(|a| a.collect_sets(out)),
            Self::Repeat { inner, .. } | Self::Group(inner) => inner.collect_sets(out),
        }
    }
}

/// Escapes every metacharacter so the result parses back to `text` literally.
pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' | '.' | '+' | '*' | '?' | '(' | ')' | '|' | '[' | ']' | '{' | '}' | '^' | '$' => {
                out.push('\\');
                out.push(c);
            }
            '\r' => out.push_str("\\r"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            _ => out.push(c),
        }
    }
    out
}

pub fn parse_regex(pattern: &str) -> Result<RegexAst, VrmError> {
    let mut p = Parser {
        src: pattern.as_bytes(),
        pos: 0,
        depth: 0,
    };
    let ast = p.alternation()?;
    if p.pos < p.src.len() {
        return Err(p.error("unmatched ')'"));
    }
    Ok(ast)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

const MAX_DEPTH: usize = 64;

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn error(&self, detail: &str) -> VrmError {
        VrmError::Parse {
            offset: self.pos,
            detail: detail.into(),
        }
    }

    fn unsupported(&self, offset: usize, detail: &str) -> VrmError {
        VrmError::UnsupportedSyntax {
            offset,
            detail: detail.into(),
        }
    }

    fn alternation(&mut self) -> Result<RegexAst, VrmError> {
        let mut branches = vec![self.concat()?];
        while self.peek() == Some(b'|') {
            self.pos += 1;
            branches.push(self.concat()?);
        }
        Ok(if branches.len() == 1 {
            branches.pop().expect("one branch")
        } else {
            RegexAst::Alternation(branches)
        })
    }

    fn concat(&mut self) -> Result<RegexAst, VrmError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == b'|' || c == b')' {
                break;
            }
            items.push(self.repeat()?);
        }
        Ok(match items.len() {
            0 => RegexAst::Empty,
            1 => items.pop().expect("one item"),
            _ => RegexAst::Concat(items),
        })
    }

    fn repeat(&mut self) -> Result<RegexAst, VrmError> {
        let atom = self.atom()?;
        let (min, max) = match self.peek() {
            Some(b'*') => (0, None),
            Some(b'+') => (1, None),
            Some(b'?') => (0, Some(1)),
            Some(b'{') => {
                let bounds = self.counted()?;
                self.pos -= 1; // counted() consumed the closing brace
                bounds
            }
            _ => return Ok(atom),
        };
        self.pos += 1;
        match self.peek() {
            Some(b'?') | Some(b'+') => {
                return Err(self.unsupported(self.pos, "lazy or possessive quantifier"))
            }
            Some(b'*') | Some(b'{') => return Err(self.error("nested quantifier")),
            _ => {}
        }
        Ok(RegexAst::Repeat {
            inner: Box::new(atom),
            min,
            max,
        })
    }

    /// Parses `{m}`, `{m,}` or `{m,n}` starting at `{`; leaves `pos` after `}`.
    fn counted(&mut self) -> Result<(u32, Option<u32>), VrmError> {
        self.pos += 1;
        let min = self.number()?.ok_or_else(|| self.error("expected repetition count"))?;
        let max = if self.peek() == Some(b',') {
            self.pos += 1;
            self.number()?
        } else {
            Some(min)
        };
        if self.peek() != Some(b'}') {
            return Err(self.error("expected '}'"));
        }
        self.pos += 1;
        if let Some(max) = max {
            if max < min {
                return Err(self.error("repetition max below min"));
            }
        }
        if min > MAX_REPEAT || max.is_some_and(|m| m > MAX_REPEAT) {
            return Err(self.error("repetition count too large"));
        }
        Ok((min, max))
    }

    fn number(&mut self) -> Result<Option<u32>, VrmError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Ok(None);
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map(Some)
            .map_err(|_| self.error("repetition count too large"))
    }

    fn atom(&mut self) -> Result<RegexAst, VrmError> {
        let start = self.pos;
        let c = self.peek().ok_or_else(|| self.error("unexpected end of pattern"))?;
        match c {
            b'(' => {
                self.pos += 1;
                if self.peek() == Some(b'?') {
                    if self.src.get(self.pos + 1) == Some(&b':') {
                        self.pos += 2;
                    } else {
                        return Err(self.unsupported(start, "lookaround or inline flags"));
                    }
                }
                self.depth += 1;
                if self.depth > MAX_DEPTH {
                    return Err(self.error("groups nested too deeply"));
                }
                let inner = self.alternation()?;
                self.depth -= 1;
                if self.peek() != Some(b')') {
                    return Err(self.error("unclosed group"));
                }
                self.pos += 1;
                Ok(RegexAst::Group(Box::new(inner)))
            }
            b'[' => self.class(),
            b'.' => {
                self.pos += 1;
                Ok(RegexAst::Class(ByteSet::printable()))
            }
            b'^' | b'$' => Err(self.unsupported(start, "anchors")),
            b'*' | b'+' | b'?' | b'{' => Err(self.error("nothing to repeat")),
            b']' | b'}' => Err(self.error("unescaped closing bracket")),
            b'\\' => {
                self.pos += 1;
                match self.escape(false)? {
                    Escaped::Byte(b) => Ok(RegexAst::Literal(b)),
                    Escaped::Set(s) => Ok(RegexAst::Class(s)),
                }
            }
            0x20..=0x7e => {
                self.pos += 1;
                Ok(RegexAst::Literal(c))
            }
            _ => Err(self.error("character outside printable ASCII")),
        }
    }

    /// Called with `pos` just after the backslash.
    fn escape(&mut self, in_class: bool) -> Result<Escaped, VrmError> {
        let at = self.pos - 1;
        let c = self.peek().ok_or_else(|| self.error("trailing backslash"))?;
        self.pos += 1;
        Ok(match c {
            b'd' => Escaped::Set(ByteSet::digit()),
            b'D' => Escaped::Set(ByteSet::digit().negated()),
            b'w' => Escaped::Set(ByteSet::word()),
            b'W' => Escaped::Set(ByteSet::word().negated()),
            b's' => Escaped::Set(ByteSet::space()),
            b'S' => Escaped::Set(ByteSet::space().negated()),
            b'n' => Escaped::Byte(b'\n'),
            b'r' => Escaped::Byte(b'\r'),
            b't' => Escaped::Byte(b'\t'),
            b'x' => {
                let hex = self
                    .src
                    .get(self.pos..self.pos + 2)
                    .and_then(|h| std::str::from_utf8(h).ok())
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| self.error("expected two hex digits after \\x"))?;
                self.pos += 2;
                Escaped::Byte(hex)
            }
            b'1'..=b'9' | b'k' => return Err(self.unsupported(at, "backreference")),
            b'b' | b'B' | b'A' | b'z' | b'Z' if !in_class => {
                return Err(self.unsupported(at, "anchors"))
            }
            c if c.is_ascii_punctuation() || c == b' ' => Escaped::Byte(c),
            _ => return Err(self.error("unknown escape")),
        })
    }

    fn class(&mut self) -> Result<RegexAst, VrmError> {
        self.pos += 1;
        let negate = self.peek() == Some(b'^');
        if negate {
            self.pos += 1;
        }
        let mut set = ByteSet::empty();
        let mut first = true;
        loop {
            let c = self.peek().ok_or_else(|| self.error("unclosed character class"))?;
            if c == b']' && !first {
                self.pos += 1;
                break;
            }
            if c == b']' {
                return Err(self.error("empty character class"));
            }
            first = false;
            let lo = match self.class_item()? {
                Escaped::Set(s) => {
                    set = set.union(&s);
                    continue;
                }
                Escaped::Byte(b) => b,
            };
            let is_range = self.peek() == Some(b'-')
                && self.src.get(self.pos + 1).is_some_and(|&n| n != b']');
            if is_range {
                self.pos += 1;
                let hi = match self.class_item()? {
                    Escaped::Byte(b) => b,
                    Escaped::Set(_) => return Err(self.error("class escape as range bound")),
                };
                if hi < lo {
                    return Err(self.error("reversed range"));
                }
                set = set.union(&ByteSet::range(lo, hi));
            } else {
                set.insert(lo);
            }
        }
        Ok(RegexAst::Class(if negate { set.negated() } else { set }))
    }

    fn class_item(&mut self) -> Result<Escaped, VrmError> {
        let c = self.peek().ok_or_else(|| self.error("unclosed character class"))?;
        self.pos += 1;
        match c {
            b'\\' => self.escape(true),
            b'[' if self.peek() == Some(b':') => Err(self.unsupported(self.pos - 1, "POSIX classes")),
            0x20..=0x7e => Ok(Escaped::Byte(c)),
            _ => {
                self.pos -= 1;
                Err(self.error("character outside printable ASCII"))
            }
        }
    }
}

enum Escaped {
    Byte(u8),
    Set(ByteSet),
}
