//! Rule templates: an ordered list of fixed literals and named variables.

use std::collections::BTreeMap;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::artifact::{ArtifactSegment, VerifierArtifact};
use super::ast::{escape, parse_regex, RegexAst};
use super::dfa::{compile_with_budget, DEFAULT_STATE_BUDGET};
use super::VrmError;

/// JSON form of a rule, as written by a rule developer:
///
/// ```json
/// {"rule_id": 1, "max_len": 256, "segments": [{"fixed": "Transfer "}, {"var": "A", "regex": "\\d+"}]}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTemplate {
    pub rule_id: u64,
    pub max_len: usize,
    pub segments: Vec<TemplateSegment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateSegment {
    Fixed { fixed: String },
    Variable { var: String, regex: String },
}

impl TemplateSegment {
    pub fn fixed(text: impl Into<String>) -> Self {
        Self::Fixed { fixed: text.into() }
    }

    pub fn var(name: impl Into<String>, regex: impl Into<String>) -> Self {
        Self::Variable {
            var: name.into(),
            regex: regex.into(),
        }
    }
}

impl RuleTemplate {
    pub fn from_json(text: &str) -> Result<Self, VrmError> {
        serde_json::from_str(text).map_err(|e| VrmError::InvalidRule(format!("template JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Fixed(String),
    Variable {
        name: String,
        pattern: String,
        ast: RegexAst,
    },
}

/// Extracted variable values keyed by name. Sorted, so serialization is
/// canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableValues(BTreeMap<String, String>);

impl VariableValues {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<String>) -> Option<String> {
        self.0.insert(name.into(), value.into())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for VariableValues {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

/// A compiled rule: the source segments plus the verifier artifact built
/// from them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegexRule {
    pub rule_id: u64,
    pub max_len: usize,
    segments: Vec<Segment>,
    artifact: VerifierArtifact,
}

pub(crate) fn valid_fixed_byte(b: u8) -> bool {
    (0x20..=0x7e).contains(&b) || matches!(b, b'\r' | b'\n' | b'\t')
}

pub(crate) fn valid_var_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    bytes
        .next()
        .is_some_and(|b| b.is_ascii_alphabetic() || b == b'_')
        && bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

impl RegexRule {
    pub fn compile(template: &RuleTemplate) -> Result<Self, VrmError> {
        Self::compile_with_budget(template, DEFAULT_STATE_BUDGET)
    }

    pub fn compile_with_budget(template: &RuleTemplate, budget: usize) -> Result<Self, VrmError> {
        let invalid = |m: String| VrmError::InvalidRule(m);
        if template.max_len == 0 || template.max_len > u32::MAX as usize {
            return Err(invalid("max_len must be positive".into()));
        }
        if template.segments.is_empty() {
            return Err(invalid("rule has no segments".into()));
        }
        let mut names = HashSet::new();
        let mut segments = Vec::with_capacity(template.segments.len());
        let mut compiled = Vec::with_capacity(template.segments.len());
        for seg in &template.segments {
            match seg {
                TemplateSegment::Fixed { fixed } => {
                    if fixed.is_empty() || !fixed.bytes().all(valid_fixed_byte) {
                        return Err(invalid(format!("invalid fixed segment {fixed:?}")));
                    }
                    segments.push(Segment::Fixed(fixed.clone()));
                    compiled.push(ArtifactSegment::Fixed(fixed.clone()));
                }
                TemplateSegment::Variable { var, regex } => {
                    if !valid_var_name(var) {
                        return Err(invalid(format!("invalid variable name {var:?}")));
                    }
                    if !names.insert(var.clone()) {
                        return Err(invalid(format!("duplicate variable {var}")));
                    }
                    let ast = parse_regex(regex)?;
                    let dfa = compile_with_budget(&ast, budget)?;
                    segments.push(Segment::Variable {
                        name: var.clone(),
                        pattern: regex.clone(),
                        ast,
                    });
                    compiled.push(ArtifactSegment::Variable {
                        name: var.clone(),
                        dfa,
                    });
                }
            }
        }
        for pair in compiled.windows(2) {
            if let [ArtifactSegment::Variable { name: a, dfa: da }, ArtifactSegment::Variable { name: b, dfa: db }] =
                pair
            {
                if !da.alphabet().intersection(&db.alphabet()).is_empty() {
                    return Err(invalid(format!(
                        "adjacent variables {a} and {b} have overlapping alphabets"
                    )));
                }
            }
        }
        let whole = whole_ast(&segments);
        let template_dfa = compile_with_budget(&whole, budget)?;
        let artifact = VerifierArtifact::new(template.rule_id, template.max_len, compiled, template_dfa)?;
        Ok(Self {
            rule_id: template.rule_id,
            max_len: template.max_len,
            segments,
            artifact,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn artifact(&self) -> &VerifierArtifact {
        &self.artifact
    }

    pub fn into_artifact(self) -> VerifierArtifact {
        self.artifact
    }

    /// The whole template as a single regex tree.
    pub fn whole_ast(&self) -> RegexAst {
        whole_ast(&self.segments)
    }

    /// The whole template as regex source, fixed parts escaped.
    pub fn whole_pattern(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Fixed(text) => escape(text),
                Segment::Variable { pattern, .. } => format!("({pattern})"),
            })
            .collect()
    }

    pub fn match_and_extract(&self, text: &str) -> Result<VariableValues, VrmError> {
        self.artifact.match_and_extract(text)
    }

    pub fn reconstruct_and_verify(&self, values: &VariableValues) -> Result<bool, VrmError> {
        self.artifact.reconstruct_and_verify(values)
    }
}

fn whole_ast(segments: &[Segment]) -> RegexAst {
    RegexAst::Concat(
        segments
            .iter()
            .map(|s| match s {
                Segment::Fixed(text) => RegexAst::literal(text.as_bytes()),
                Segment::Variable { ast, .. } => RegexAst::Group(Box::new(ast.clone())),
            })
            .collect(),
    )
}
