//! A deliberately naive backtracking regex matcher used as a test oracle.
//!
//! It shares no code with the library: it has its own parser and walks the
//! pattern with continuations, trying every way to split the input. Only
//! the syntax the test patterns use is supported.

#[derive(Debug, Clone)]
enum Node {
    Byte(u8),
    Set(Vec<(u8, u8)>, bool),
    Seq(Vec<Node>),
    Alt(Vec<Node>),
    Rep(Box<Node>, usize, Option<usize>),
}

pub struct Backtracker {
    root: Node,
}

struct Parser<'a> {
    p: &'a [u8],
    i: usize,
}

fn printable() -> Vec<(u8, u8)> {
    vec![(0x20, 0x7e)]
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.p.get(self.i).copied()
    }

    fn eat(&mut self) -> u8 {
        let c = self.p[self.i];
        self.i += 1;
        c
    }

    fn alt(&mut self) -> Node {
        let mut branches = vec![self.seq()];
        while self.peek() == Some(b'|') {
            self.eat();
            branches.push(self.seq());
        }
        if branches.len() == 1 {
            branches.pop().unwrap()
        } else {
            Node::Alt(branches)
        }
    }

    fn seq(&mut self) -> Node {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == b'|' || c == b')' {
                break;
            }
            let atom = self.atom();
            items.push(self.quantified(atom));
        }
        Node::Seq(items)
    }

    fn number(&mut self) -> usize {
        let start = self.i;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.i += 1;
        }
        std::str::from_utf8(&self.p[start..self.i]).unwrap().parse().unwrap()
    }

    fn quantified(&mut self, atom: Node) -> Node {
        match self.peek() {
            Some(b'*') => {
                self.eat();
                Node::Rep(Box::new(atom), 0, None)
            }
            Some(b'+') => {
                self.eat();
                Node::Rep(Box::new(atom), 1, None)
            }
            Some(b'?') => {
                self.eat();
                Node::Rep(Box::new(atom), 0, Some(1))
            }
            Some(b'{') => {
                self.eat();
                let lo = self.number();
                let hi = if self.peek() == Some(b',') {
                    self.eat();
                    if self.peek() == Some(b'}') {
                        None
                    } else {
                        Some(self.number())
                    }
                } else {
                    Some(lo)
                };
                assert_eq!(self.eat(), b'}');
                Node::Rep(Box::new(atom), lo, hi)
            }
            _ => atom,
        }
    }

    fn escape(&mut self) -> Node {
        match self.eat() {
            b'd' => Node::Set(vec![(b'0', b'9')], false),
            b'w' => Node::Set(vec![(b'0', b'9'), (b'A', b'Z'), (b'a', b'z'), (b'_', b'_')], false),
            b's' => Node::Set(vec![(b' ', b' '), (b'\t', b'\t'), (b'\r', b'\r'), (b'\n', b'\n')], false),
            b'n' => Node::Byte(b'\n'),
            b'r' => Node::Byte(b'\r'),
            b't' => Node::Byte(b'\t'),
            c => Node::Byte(c),
        }
    }

    fn atom(&mut self) -> Node {
        match self.eat() {
            b'(' => {
                if self.p[self.i..].starts_with(b"?:") {
                    self.i += 2;
                }
                let inner = self.alt();
                assert_eq!(self.eat(), b')');
                inner
            }
            b'[' => {
                let negated = self.peek() == Some(b'^');
                if negated {
                    self.eat();
                }
                let mut ranges = Vec::new();
                loop {
                    let c = self.eat();
                    if c == b']' && !ranges.is_empty() {
                        break;
                    }
                    let lo = if c == b'\\' {
                        match self.escape() {
                            Node::Byte(b) => b,
                            Node::Set(r, _) => {
                                ranges.extend(r);
                                continue;
                            }
                            _ => unreachable!(),
                        }
                    } else {
                        c
                    };
                    if self.peek() == Some(b'-') && self.p.get(self.i + 1) != Some(&b']') {
                        self.eat();
                        let mut hi = self.eat();
                        if hi == b'\\' {
                            hi = match self.escape() {
                                Node::Byte(b) => b,
                                _ => panic!("class range to a class"),
                            };
                        }
                        ranges.push((lo, hi));
                    } else {
                        ranges.push((lo, lo));
                    }
                }
                Node::Set(ranges, negated)
            }
            b'.' => Node::Set(printable(), false),
            b'\\' => self.escape(),
            c => Node::Byte(c),
        }
    }
}

fn in_set(ranges: &[(u8, u8)], negated: bool, b: u8) -> bool {
    let hit = ranges.iter().any(|&(lo, hi)| lo <= b && b <= hi);
    if negated {
        !hit && (0x20..=0x7e).contains(&b)
    } else {
        hit
    }
}

fn m(node: &Node, s: &[u8], i: usize, k: &mut dyn FnMut(usize) -> bool) -> bool {
    match node {
        Node::Byte(b) => s.get(i) == Some(b) && k(i + 1),
        Node::Set(r, neg) => s.get(i).is_some_and(|&b| in_set(r, *neg, b)) && k(i + 1),
        Node::Seq(items) => seq(items, s, i, k),
        Node::Alt(branches) => branches.iter().any(|b| m(b, s, i, k)),
        Node::Rep(inner, lo, hi) => rep(inner, *lo, *hi, s, i, k),
    }
}

fn seq(items: &[Node], s: &[u8], i: usize, k: &mut dyn FnMut(usize) -> bool) -> bool {
    match items.split_first() {
        None => k(i),
        Some((first, rest)) => m(first, s, i, &mut |j| seq(rest, s, j, k)),
    }
}

fn rep(inner: &Node, lo: usize, hi: Option<usize>, s: &[u8], i: usize, k: &mut dyn FnMut(usize) -> bool) -> bool {
    if lo == 0 && k(i) {
        return true;
    }
    if hi == Some(0) {
        return false;
    }
    m(inner, s, i, &mut |j| {
        // an empty iteration can never help once the minimum is met
        if j == i && lo == 0 {
            return false;
        }
        rep(inner, lo.saturating_sub(1), hi.map(|h| h - 1), s, j, k)
    })
}

impl Backtracker {
    pub fn new(pattern: &str) -> Self {
        let mut p = Parser {
            p: pattern.as_bytes(),
            i: 0,
        };
        let root = p.alt();
        assert_eq!(p.i, pattern.len(), "oracle could not parse {pattern:?}");
        Self { root }
    }

    /// Whole-string match.
    pub fn is_match(&self, input: &[u8]) -> bool {
        m(&self.root, input, 0, &mut |j| j == input.len())
    }
}

/// Escapes a literal for use inside an oracle pattern.
pub fn quote(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if "\\.+*?()|[]{}^$-".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

#[test]
fn oracle_self_check() {
    let t = Backtracker::new(r"Transfer \d{1,20} wei Ether\.");
    assert!(t.is_match(b"Transfer 42 wei Ether."));
    assert!(!t.is_match(b"Transfer  wei Ether."));
    assert!(!t.is_match(b"Transfer 123456789012345678901 wei Ether."));
    let e = Backtracker::new("(a|ab)(c|bcd)(d*)");
    assert!(e.is_match(b"abcd"));
    assert!(Backtracker::new("(a*)*b").is_match(b"aaab"));
    assert!(!Backtracker::new("[^a-z]+").is_match(b"aB"));
    assert!(Backtracker::new("x{0}y").is_match(b"y"));
}
