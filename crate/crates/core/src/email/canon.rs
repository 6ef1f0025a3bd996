//! DKIM header and body canonicalization (RFC 6376 section 3.4).

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeaderCanon {
    Simple,
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BodyCanon {
    Simple,
    Relaxed,
}

/// The `c=` pair. Defaults to `relaxed/relaxed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanonicalizationMode {
    pub header: HeaderCanon,
    pub body: BodyCanon,
}

impl CanonicalizationMode {
    pub const RELAXED: Self = Self {
        header: HeaderCanon::Relaxed,
        body: BodyCanon::Relaxed,
    };
    pub const SIMPLE: Self = Self {
        header: HeaderCanon::Simple,
        body: BodyCanon::Simple,
    };
}

impl Default for CanonicalizationMode {
    fn default() -> Self {
        Self::RELAXED
    }
}

impl fmt::Display for CanonicalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = match self.header {
            HeaderCanon::Simple => "simple",
            HeaderCanon::Relaxed => "relaxed",
        };
        let b = match self.body {
            BodyCanon::Simple => "simple",
            BodyCanon::Relaxed => "relaxed",
        };
        write!(f, "{h}/{b}")
    }
}

impl FromStr for CanonicalizationMode {
    type Err = String;

    /// Parses a `c=` value. A missing body part means `simple`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, b) = s.split_once('/').unwrap_or((s, "simple"));
        let header = match h.trim() {
            "simple" => HeaderCanon::Simple,
            "relaxed" => HeaderCanon::Relaxed,
            other => return Err(format!("unknown header canonicalization {other:?}")),
        };
        let body = match b.trim() {
            "simple" => BodyCanon::Simple,
            "relaxed" => BodyCanon::Relaxed,
            other => return Err(format!("unknown body canonicalization {other:?}")),
        };
        Ok(Self { header, body })
    }
}

fn is_wsp(b: u8) -> bool {
    b == b' ' || b == b'\t'
}

pub fn canonicalize_header(name: &str, raw_value: &[u8], mode: HeaderCanon) -> Vec<u8> {
    let mut out = Vec::with_capacity(name.len() + raw_value.len() + 3);
    match mode {
        HeaderCanon::Simple => {
            out.extend_from_slice(name.as_bytes());
            out.push(b':');
            out.extend_from_slice(raw_value);
        }
        HeaderCanon::Relaxed => {
            out.extend(name.trim_end().bytes().map(|b| b.to_ascii_lowercase()));
            out.push(b':');
            let mut pending_space = false;
            let mut started = false;
            for &b in raw_value.iter().filter(|&&b| b != b'\r' && b != b'\n') {
                if is_wsp(b) {
                    pending_space = started;
                } else {
                    if pending_space {
                        out.push(b' ');
                    }
                    pending_space = false;
                    started = true;
                    out.push(b);
                }
            }
        }
    }
    out.extend_from_slice(b"\r\n");
    out
}

pub fn canonicalize_body(body: &[u8], mode: BodyCanon) -> Vec<u8> {
    match mode {
        BodyCanon::Simple => {
            let mut out = body.to_vec();
            if !out.ends_with(b"\r\n") {
                out.extend_from_slice(b"\r\n");
            }
            while out.ends_with(b"\r\n\r\n") {
                out.truncate(out.len() - 2);
            }
            out
        }
        BodyCanon::Relaxed => {
            let mut out = Vec::with_capacity(body.len());
            let mut lines: Vec<&[u8]> = split_crlf(body).collect();
            // a body that ends in CRLF yields one empty trailing piece
            while lines.last().is_some_and(|l| l.iter().all(|&b| is_wsp(b))) {
                lines.pop();
            }
            for line in lines {
                let mut pending_space = false;
                for &b in line {
                    if is_wsp(b) {
                        pending_space = true;
                    } else {
                        if pending_space {
                            out.push(b' ');
                        }
                        pending_space = false;
                        out.push(b);
                    }
                }
                out.extend_from_slice(b"\r\n");
            }
            out
        }
    }
}

fn split_crlf(body: &[u8]) -> impl Iterator<Item = &[u8]> {
    let mut rest = Some(body);
    std::iter::from_fn(move || {
        let cur = rest?;
        match cur.windows(2).position(|w| w == b"\r\n") {
            Some(p) => {
                rest = Some(&cur[p + 2..]);
                Some(&cur[..p])
            }
            None => {
                rest = None;
                Some(cur)
            }
        }
    })
}
