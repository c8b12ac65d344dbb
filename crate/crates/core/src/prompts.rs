//! Prompt templates, the manual prompt registry and two-step prompt
//! decomposition.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::lm::{CheckpointId, FillMask, LmError, DEFAULT_TOP_K};
use crate::relation::Relation;

pub const SUBJ: &str = "[SUBJ]";
pub const OBJ: &str = "[OBJ]";
pub const MASK: &str = "[MASK]";
pub const KEYWORD: &str = "[KEYWORD]";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template {pattern:?} must contain exactly one {placeholder}, found {found}")]
    Placeholder {
        pattern: String,
        placeholder: &'static str,
        found: usize,
    },
    #[error("keyword `{0}` is not in the decomposition keyword set")]
    UnknownKeyword(String),
    #[error("decomposition rule: {0}")]
    Rule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    #[default]
    Manual,
    MinedMiddle,
    MinedDependency,
}

/// One piece of a parsed pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment<'a> {
    Text(&'a str),
    Subject,
    Object,
}

/// A pattern with one `[SUBJ]` and one `[OBJ]` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct PromptTemplate {
    pattern: String,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawTemplate {
    Bare(String),
    Full {
        pattern: String,
        #[serde(default)]
        provenance: Provenance,
    },
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = PromptError;

    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        match raw {
            RawTemplate::Bare(p) => PromptTemplate::new(p, Provenance::Manual),
            RawTemplate::Full { pattern, provenance } => PromptTemplate::new(pattern, provenance),
        }
    }
}

impl From<PromptTemplate> for RawTemplate {
    fn from(t: PromptTemplate) -> Self {
        RawTemplate::Full {
            pattern: t.pattern,
            provenance: t.provenance,
        }
    }
}

fn count_exactly_one(pattern: &str, placeholder: &'static str) -> Result<(), PromptError> {
    match pattern.matches(placeholder).count() {
        1 => Ok(()),
        found => Err(PromptError::Placeholder {
            pattern: pattern.to_string(),
            placeholder,
            found,
        }),
    }
}

/// Replace placeholders in a single left-to-right scan of `pattern`.
/// Substituted values are never rescanned, so a value containing a
/// placeholder string is inserted literally.
pub fn splice(pattern: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(pattern.len() + 32);
    let mut rest = pattern;
    'outer: while !rest.is_empty() {
        for (name, value) in slots {
            if let Some(after) = rest.strip_prefix(name) {
                out.push_str(value);
                rest = after;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

/// Instantiated template text with the byte spans of both fillers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filled {
    pub text: String,
    pub subject: Range<usize>,
    pub object: Range<usize>,
}

impl PromptTemplate {
    pub fn new(pattern: impl Into<String>, provenance: Provenance) -> Result<Self, PromptError> {
        let pattern = pattern.into();
        count_exactly_one(&pattern, SUBJ)?;
        count_exactly_one(&pattern, OBJ)?;
        Ok(PromptTemplate { pattern, provenance })
    }

    pub fn manual(pattern: impl Into<String>) -> Result<Self, PromptError> {
        Self::new(pattern, Provenance::Manual)
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// The pattern split at its two placeholders.
    pub fn segments(&self) -> Vec<Segment<'_>> {
        let s = self.pattern.find(SUBJ).expect("validated");
        let o = self.pattern.find(OBJ).expect("validated");
        let (first, first_len, second, second_len, first_seg, second_seg) = if s < o {
            (s, SUBJ.len(), o, OBJ.len(), Segment::Subject, Segment::Object)
        } else {
            (o, OBJ.len(), s, SUBJ.len(), Segment::Object, Segment::Subject)
        };
        let mut segs = Vec::with_capacity(5);
        let p = self.pattern.as_str();
        if first > 0 {
            segs.push(Segment::Text(&p[..first]));
        }
        segs.push(first_seg);
        if second > first + first_len {
            segs.push(Segment::Text(&p[first + first_len..second]));
        }
        segs.push(second_seg);
        if p.len() > second + second_len {
            segs.push(Segment::Text(&p[second + second_len..]));
        }
        segs
    }

    /// Fill both placeholders, recording where each filler landed.
    pub fn fill(&self, subject: &str, object: &str) -> Filled {
        let mut text = String::with_capacity(self.pattern.len() + subject.len() + object.len());
        let (mut subj_span, mut obj_span) = (0..0, 0..0);
        for seg in self.segments() {
            match seg {
                Segment::Text(t) => text.push_str(t),
                Segment::Subject => {
                    let start = text.len();
                    text.push_str(subject);
                    subj_span = start..text.len();
                }
                Segment::Object => {
                    let start = text.len();
                    text.push_str(object);
                    obj_span = start..text.len();
                }
            }
        }
        Filled {
            text,
            subject: subj_span,
            object: obj_span,
        }
    }

    /// Prompt text for `subject` with the object slot masked.
    pub fn instantiate(&self, subject: &str, mask_token: &str) -> String {
        self.fill(subject, mask_token).text
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pattern)
    }
}

/// Validate `pattern` and instantiate it in one step.
pub fn instantiate(pattern: &str, subject: &str, mask_token: &str) -> Result<String, PromptError> {
    Ok(PromptTemplate::manual(pattern)?.instantiate(subject, mask_token))
}

/// Reconstruct the template from a filled string and its recorded spans.
pub fn unsplice(filled: &Filled) -> String {
    let t = &filled.text;
    let (a, b, a_ph, b_ph) = if filled.subject.start <= filled.object.start {
        (&filled.subject, &filled.object, SUBJ, OBJ)
    } else {
        (&filled.object, &filled.subject, OBJ, SUBJ)
    };
    format!("{}{a_ph}{}{b_ph}{}", &t[..a.start], &t[a.end..b.start], &t[b.end..])
}

/// Pre-condition query that picks a type keyword for the subject, followed
/// by a type-conditioned formal prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionRule {
    pub precondition_pattern: String,
    pub keywords: Vec<String>,
    pub formal_pattern: String,
    pub fallback_keyword: String,
}

impl DecompositionRule {
    /// The location-type rule for `StateSharesBorderState`.
    pub fn location_type() -> Self {
        DecompositionRule {
            precondition_pattern: "[SUBJ], as a place, is a [MASK].".into(),
            keywords: ["state", "province", "department", "city", "region"]
                .map(String::from)
                .to_vec(),
            formal_pattern: "[SUBJ] [KEYWORD] shares border with [MASK] [KEYWORD]".into(),
            fallback_keyword: "state".into(),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.keywords.is_empty() {
            return Err(PromptError::Rule("keyword set is empty".into()));
        }
        if !self.keywords.contains(&self.fallback_keyword) {
            return Err(PromptError::Rule(format!(
                "fallback keyword `{}` is not in the keyword set",
                self.fallback_keyword
            )));
        }
        count_exactly_one(&self.precondition_pattern, SUBJ)?;
        count_exactly_one(&self.precondition_pattern, MASK)?;
        count_exactly_one(&self.formal_pattern, SUBJ)?;
        count_exactly_one(&self.formal_pattern, MASK)?;
        if !self.formal_pattern.contains(KEYWORD) {
            return Err(PromptError::Rule("formal pattern has no [KEYWORD] slot".into()));
        }
        Ok(())
    }

    pub fn precondition_prompt(&self, subject: &str, mask_token: &str) -> String {
        splice(&self.precondition_pattern, &[(SUBJ, subject), (MASK, mask_token)])
    }
}

/// Ask the model what kind of entity `subject` is: the keyword with the best
/// rank among the top candidates of the pre-condition prompt, or the rule's
/// fallback when none appears.
pub fn infer_subject_type(
    subject: &str,
    rule: &DecompositionRule,
    lm: &dyn FillMask,
    checkpoint: &CheckpointId,
) -> Result<String, LmError> {
    let prompt = rule.precondition_prompt(subject, lm.mask_token());
    let candidates = lm.query(checkpoint, &prompt, DEFAULT_TOP_K)?;
    let found = candidates.iter().find_map(|c| {
        let tok = c.token.trim().to_lowercase();
        rule.keywords.iter().find(|k| k.to_lowercase() == tok)
    });
    Ok(found.unwrap_or(&rule.fallback_keyword).clone())
}

/// The formal prompt for `subject` typed as `keyword`.
pub fn decomposed_prompt(
    subject: &str,
    keyword: &str,
    rule: &DecompositionRule,
    mask_token: &str,
) -> Result<String, PromptError> {
    if !rule.keywords.iter().any(|k| k == keyword) {
        return Err(PromptError::UnknownKeyword(keyword.to_string()));
    }
    Ok(splice(
        &rule.formal_pattern,
        &[(SUBJ, subject), (KEYWORD, keyword), (MASK, mask_token)],
    ))
}

/// Templates (in ensemble order) and optional decomposition for one relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationPrompts {
    pub templates: Vec<PromptTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionRule>,
}

pub type PromptRegistry = BTreeMap<Relation, RelationPrompts>;

/// The challenge baseline prompt for each relation.
pub fn baseline_patterns() -> Vec<(&'static str, &'static str)> {
    vec![
        ("ChemicalCompoundElement", "[SUBJ] consists of [OBJ], which is an element."),
        ("CompanyParentOrganization", "The parent organization of [SUBJ] is [OBJ]."),
        ("CountryBordersWithCountry", "[SUBJ] shares border with [OBJ]."),
        ("CountryOfficialLanguage", "The official language of [SUBJ] is [OBJ]."),
        ("PersonCauseOfDeath", "[SUBJ] died due to [OBJ]."),
        ("PersonEmployer", "[SUBJ] is an employer at [OBJ], which is a company."),
        ("PersonInstrument", "[SUBJ] plays [OBJ], which is an instrument."),
        ("PersonLanguage", "[SUBJ] speaks in [OBJ]."),
        ("PersonPlaceOfDeath", "[SUBJ] died at [OBJ]."),
        ("PersonProfession", "[SUBJ] is a [OBJ] by profession."),
        ("RiverBasinsCountry", "[SUBJ] river basins in [OBJ]."),
        ("StateSharesBorderState", "[SUBJ] shares border with [OBJ] state."),
    ]
}

/// Hand-written replacements for relations where the baseline prompt
/// underperforms.
pub fn manual_overrides() -> Vec<(&'static str, &'static str)> {
    vec![
        ("PersonInstrument", "The musician [SUBJ] plays [OBJ], which is an instrument"),
        ("PersonEmployer", "[SUBJ] works at [OBJ]"),
    ]
}

/// Baseline prompts with no decomposition.
pub fn baseline_registry() -> PromptRegistry {
    baseline_patterns()
        .into_iter()
        .map(|(rel, p)| {
            (
                Relation::new(rel),
                RelationPrompts {
                    templates: vec![PromptTemplate::manual(p).expect("static template")],
                    decomposition: None,
                },
            )
        })
        .collect()
}

/// Baseline prompts with the manual overrides and the location-type
/// decomposition for `StateSharesBorderState`.
pub fn default_registry() -> PromptRegistry {
    let mut reg = baseline_registry();
    for (rel, p) in manual_overrides() {
        reg.get_mut(&Relation::new(rel)).expect("known relation").templates =
            vec![PromptTemplate::manual(p).expect("static template")];
    }
    reg.get_mut(&Relation::new("StateSharesBorderState"))
        .expect("known relation")
        .decomposition = Some(DecompositionRule::location_type());
    reg
}
