//! RFC 5322-style message parsing restricted to what the wallet needs: ASCII
//! headers, CRLF line endings and a single-part body.
//!
//! Parsing is lossless. Every header keeps its raw value (everything after
//! the colon, folds included) so [`EmailMessage::to_bytes`] reproduces the
//! input exactly, and the DKIM layer can canonicalize from the original bytes.

pub mod canon;

use thiserror::Error;

pub use canon::{canonicalize_body, canonicalize_header, BodyCanon, CanonicalizationMode, HeaderCanon};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmailError {
    #[error("malformed email: {0}")]
    MalformedEmail(String),
    #[error("missing header: {0}")]
    MissingHeader(String),
    #[error("malformed address: {0}")]
    MalformedAddress(String),
    #[error("malformed subject: {0}")]
    MalformedSubject(String),
}

fn malformed(msg: impl Into<String>) -> EmailError {
    EmailError::MalformedEmail(msg.into())
}

/// Limits applied while parsing. The size cap plays the role of a fixed
/// circuit size: anything larger is refused outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub max_size: usize,
    /// Maximum physical line length, excluding the CRLF.
    pub max_line: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_size: 8192,
            max_line: 998,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub name: String,
    /// Bytes after the colon up to (not including) the final CRLF.
    pub raw_value: Vec<u8>,
}

impl Header {
    pub fn new(name: impl Into<String>, raw_value: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.into(),
            raw_value: raw_value.into(),
        }
    }

    /// The value with folds removed and surrounding whitespace trimmed.
    pub fn unfolded_value(&self) -> String {
        let unfolded: Vec<u8> = self
            .raw_value
            .iter()
            .copied()
            .filter(|&b| b != b'\r' && b != b'\n')
            .collect();
        String::from_utf8_lossy(&unfolded)
            .trim_matches(|c| c == ' ' || c == '\t')
            .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmailMessage {
    headers: Vec<Header>,
    body: Vec<u8>,
}

impl EmailMessage {
    pub fn new(headers: Vec<Header>, body: impl Into<Vec<u8>>) -> Self {
        Self {
            headers,
            body: body.into(),
        }
    }

    pub fn parse(raw: &[u8]) -> Result<Self, EmailError> {
        Self::parse_with(raw, ParseOptions::default())
    }

    pub fn parse_with(raw: &[u8], opts: ParseOptions) -> Result<Self, EmailError> {
        if raw.len() > opts.max_size {
            return Err(malformed(format!(
                "message is {} bytes, limit is {}",
                raw.len(),
                opts.max_size
            )));
        }
        check_line_endings(raw, opts.max_line)?;

        let mut headers: Vec<Header> = Vec::new();
        let mut pos = 0;
        loop {
            let Some(eol) = find_crlf(raw, pos) else {
                return Err(malformed("no blank line separating header and body"));
            };
            if eol == pos {
                pos += 2;
                break;
            }
            let line = &raw[pos..eol];
            if line[0] == b' ' || line[0] == b'\t' {
                let last = headers
                    .last_mut()
                    .ok_or_else(|| malformed("continuation line before first header"))?;
                last.raw_value.extend_from_slice(b"\r\n");
                last.raw_value.extend_from_slice(line);
            } else {
                let colon = line
                    .iter()
                    .position(|&b| b == b':')
                    .ok_or_else(|| malformed("header line without colon"))?;
                let name = &line[..colon];
                if name.is_empty() || !name.iter().all(|&b| (33..=126).contains(&b)) {
                    return Err(malformed("invalid header name"));
                }
                headers.push(Header {
                    name: String::from_utf8(name.to_vec()).expect("ascii"),
                    raw_value: line[colon + 1..].to_vec(),
                });
            }
            pos = eol + 2;
        }
        if headers.is_empty() {
            return Err(malformed("no headers"));
        }

        let msg = Self {
            headers,
            body: raw[pos..].to_vec(),
        };
        if let Some(ct) = msg.header("Content-Type") {
            if ct.unfolded_value().to_ascii_lowercase().starts_with("multipart/") {
                return Err(malformed("multipart bodies are not supported"));
            }
        }
        Ok(msg)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.body.len() + 64 * self.headers.len());
        for h in &self.headers {
            out.extend_from_slice(h.name.as_bytes());
            out.push(b':');
            out.extend_from_slice(&h.raw_value);
            out.extend_from_slice(b"\r\n");
        }
        out.extend_from_slice(b"\r\n");
        out.extend_from_slice(&self.body);
        out
    }

    pub fn headers(&self) -> &[Header] {
        &self.headers
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    pub fn set_body(&mut self, body: impl Into<Vec<u8>>) {
        self.body = body.into();
    }

    /// Last header with this name (case-insensitive).
    pub fn header(&self, name: &str) -> Option<&Header> {
        self.headers
            .iter()
            .rev()
            .find(|h| h.name.eq_ignore_ascii_case(name))
    }

    pub fn headers_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Header> + 'a {
        self.headers
            .iter()
            .filter(move |h| h.name.eq_ignore_ascii_case(name))
    }

    pub fn prepend_header(&mut self, header: Header) {
        self.headers.insert(0, header);
    }

    pub fn remove_headers(&mut self, name: &str) {
        self.headers.retain(|h| !h.name.eq_ignore_ascii_case(name));
    }

    /// The body with all trailing CR/LF removed; this is the string rules
    /// are matched against.
    pub fn trimmed_body(&self) -> &[u8] {
        let mut end = self.body.len();
        while end > 0 && matches!(self.body[end - 1], b'\r' | b'\n') {
            end -= 1;
        }
        &self.body[..end]
    }

    /// Lowercased addr-spec of the From header.
    pub fn sender_address(&self) -> Result<String, EmailError> {
        let from = self
            .header("From")
            .ok_or_else(|| EmailError::MissingHeader("From".into()))?;
        parse_address(&from.unfolded_value())
    }

    /// Rule id the Subject starts with.
    pub fn rule_id(&self) -> Result<u64, EmailError> {
        let subject = self
            .header("Subject")
            .ok_or_else(|| EmailError::MissingHeader("Subject".into()))?;
        parse_rule_id(&subject.unfolded_value())
    }
}

fn find_crlf(raw: &[u8], from: usize) -> Option<usize> {
    raw[from..]
        .windows(2)
        .position(|w| w == b"\r\n")
        .map(|p| p + from)
}

fn check_line_endings(raw: &[u8], max_line: usize) -> Result<(), EmailError> {
    let mut line_len = 0usize;
    let mut i = 0;
    while i < raw.len() {
        match raw[i] {
            b'\r' => {
                if raw.get(i + 1) != Some(&b'\n') {
                    return Err(malformed(format!("bare CR at offset {i}")));
                }
                line_len = 0;
                i += 2;
                continue;
            }
            b'\n' => return Err(malformed(format!("bare LF at offset {i}"))),
            _ => {
                line_len += 1;
                if line_len > max_line {
                    return Err(malformed(format!("line exceeds {max_line} bytes")));
                }
            }
        }
        i += 1;
    }
    Ok(())
}

/// Extracts the addr-spec from `Name <addr>` or a bare address, lowercased.
pub fn parse_address(value: &str) -> Result<String, EmailError> {
    let bad = || EmailError::MalformedAddress(value.to_string());
    let addr = match (value.find('<'), value.rfind('>')) {
        (Some(open), Some(close)) if open < close => &value[open + 1..close],
        (None, None) => value,
        _ => return Err(bad()),
    };
    let addr = addr.trim();
    let (local, domain) = addr.split_once('@').ok_or_else(bad)?;
    let valid_part = |s: &str| {
        !s.is_empty()
            && s
                .bytes()
                .all(|b| b.is_ascii_graphic() && !b"<>()[]\\,;:@\"".contains(&b))
    };
    if !valid_part(local) || !valid_part(domain) {
        return Err(bad());
    }
    Ok(addr.to_ascii_lowercase())
}

pub fn parse_rule_id(subject: &str) -> Result<u64, EmailError> {
    let s = subject.trim_matches(|c| c == ' ' || c == '\t');
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    let rest = &s[digits..];
    if digits == 0 || !(rest.is_empty() || rest.starts_with([' ', '\t'])) {
        return Err(EmailError::MalformedSubject(subject.to_string()));
    }
    s[..digits]
        .parse()
        .map_err(|_| EmailError::MalformedSubject(subject.to_string()))
}

/// Domain part of a lowercased address.
pub fn address_domain(addr: &str) -> &str {
    addr.rsplit_once('@').map(|(_, d)| d).unwrap_or("")
}
