//! Garden-path sentence families and their rendered forms.
//!
//! A family stores the slots of one item; [`render`] assembles a sentence for a
//! given [`FormSpec`] and records where the negating material, the verb, and the
//! trigger sit in the final byte string. Templates per kind:
//!
//! ```text
//! NPZ : preamble verb [blocked_object][","] post_region [extension] trigger continuation
//! NPS : preamble verb ["that"] post_region [extension] trigger continuation
//! MVRR: preamble ["that were" | "who were" | ...] verb post_region [extension] trigger continuation
//! ```
//!
//! Slots are joined by exactly one space and the NP/Z comma binds to the word on
//! its left. Word insertions own the space that precedes them, so the inserted
//! span of `"The horses that were raced"` is `" that were"`; excising every
//! inserted span reproduces the non-negated rendering byte for byte.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TSV_HEADER: [&str; 11] = [
    "id",
    "kind",
    "preamble",
    "ambiguous_verb",
    "unambiguous_verb",
    "blocked_object",
    "post_region",
    "extension",
    "negation_insert",
    "trigger",
    "continuation",
];

/// Accepted relative-clause openers for MV/RR negation. The singular forms
/// cover items with a singular head noun such as "The captive".
pub const MVRR_NEGATIONS: [&str; 4] = ["that were", "who were", "that was", "who was"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "NPZ")]
    Npz,
    #[serde(rename = "NPS")]
    Nps,
    #[serde(rename = "MVRR")]
    Mvrr,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Npz => "NPZ",
            Kind::Nps => "NPS",
            Kind::Mvrr => "MVRR",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "NPZ" => Ok(Kind::Npz),
            "NPS" => Ok(Kind::Nps),
            "MVRR" => Ok(Kind::Mvrr),
            other => Err(format!("invalid kind `{other}` (expected NPZ, NPS or MVRR)")),
        }
    }
}

/// Templated components of one garden-path item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceFamily {
    pub id: String,
    pub kind: Kind,
    pub preamble: String,
    pub ambiguous_verb: String,
    pub unambiguous_verb: String,
    pub blocked_object: Option<String>,
    pub post_region: String,
    pub extension: Option<String>,
    pub negation_insert: String,
    pub trigger: String,
    pub continuation: String,
}

impl SentenceFamily {
    /// Checks the slot invariants; the message names the violated constraint.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let required = [
            ("id", &self.id),
            ("preamble", &self.preamble),
            ("ambiguous_verb", &self.ambiguous_verb),
            ("unambiguous_verb", &self.unambiguous_verb),
            ("post_region", &self.post_region),
            ("negation_insert", &self.negation_insert),
            ("trigger", &self.trigger),
            ("continuation", &self.continuation),
        ];
        for (name, value) in required {
            if value.trim().is_empty() {
                return Err(format!("required slot `{name}` is empty"));
            }
        }
        for (name, value) in [("blocked_object", &self.blocked_object), ("extension", &self.extension)] {
            if matches!(value, Some(v) if v.trim().is_empty()) {
                return Err(format!("optional slot `{name}` is present but blank"));
            }
        }
        if self.blocked_object.is_some() && self.kind != Kind::Npz {
            return Err(format!("blocked_object is only allowed for NPZ, not {}", self.kind));
        }
        let negation_ok = match self.kind {
            Kind::Npz => self.negation_insert == ",",
            Kind::Nps => self.negation_insert == "that",
            Kind::Mvrr => MVRR_NEGATIONS.contains(&self.negation_insert.as_str()),
        };
        if !negation_ok {
            let expected = match self.kind {
                Kind::Npz => "\",\"".to_string(),
                Kind::Nps => "\"that\"".to_string(),
                Kind::Mvrr => MVRR_NEGATIONS.map(|s| format!("\"{s}\"")).join(" or "),
            };
            return Err(format!(
                "negation_insert `{}` invalid for {}: expected {expected}",
                self.negation_insert, self.kind
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerbChoice {
    Ambiguous,
    Unambiguous,
    /// NP/Z only: the ambiguous verb followed by an explicit direct object.
    Blocked,
}

impl VerbChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            VerbChoice::Ambiguous => "garden",
            VerbChoice::Unambiguous => "unambiguous",
            VerbChoice::Blocked => "blocked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FormSpec {
    pub verb_choice: VerbChoice,
    pub negated: bool,
    pub extended: bool,
}

impl FormSpec {
    pub fn new(verb_choice: VerbChoice, negated: bool, extended: bool) -> Self {
        FormSpec {
            verb_choice,
            negated,
            extended,
        }
    }

    /// Same form with the negation flag set to `negated`.
    pub fn with_negated(self, negated: bool) -> Self {
        FormSpec { negated, ..self }
    }

    /// Stable short name, e.g. `garden`, `blocked.ext`, `unambiguous.ext.neg`.
    pub fn tag(&self) -> String {
        let mut tag = self.verb_choice.as_str().to_string();
        if self.extended {
            tag.push_str(".ext");
        }
        if self.negated {
            tag.push_str(".neg");
        }
        tag
    }

    /// Table-style description, e.g. "Garden Path (negated)".
    pub fn describe(&self) -> String {
        let base = match self.verb_choice {
            VerbChoice::Ambiguous => "Garden Path",
            VerbChoice::Unambiguous => "Unambiguous",
            VerbChoice::Blocked => "Blocked",
        };
        let mut mods = Vec::new();
        if self.negated {
            mods.push("negated");
        }
        if self.extended {
            mods.push("extended");
        }
        if mods.is_empty() {
            base.to_string()
        } else {
            format!("{base} ({})", mods.join(", "))
        }
    }

    pub fn validate_for(&self, family: &SentenceFamily) -> Result<()> {
        if self.verb_choice == VerbChoice::Blocked {
            if family.kind != Kind::Npz {
                return Err(Error::InvalidForm(format!(
                    "blocked form requested for {} family `{}`",
                    family.kind, family.id
                )));
            }
            if family.blocked_object.is_none() {
                return Err(Error::InvalidForm(format!(
                    "blocked form requested but family `{}` has no blocked_object",
                    family.id
                )));
            }
        }
        if self.extended && family.extension.is_none() {
            return Err(Error::InvalidForm(format!(
                "extended form requested but family `{}` has no extension",
                family.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedSentence {
    pub family_id: String,
    pub form: FormSpec,
    pub text: String,
    /// Byte ranges of negating material; empty unless `form.negated`.
    pub inserted_spans: Vec<Range<usize>>,
    pub trigger_span: Range<usize>,
    /// Span of whichever verb the form uses (ambiguous or unambiguous).
    pub verb_span: Range<usize>,
}

impl RenderedSentence {
    /// `text` with every inserted span cut out.
    pub fn excised_text(&self) -> String {
        excise(&self.text, &self.inserted_spans)
    }
}

pub(crate) fn excise(text: &str, spans: &[Range<usize>]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for span in spans {
        out.push_str(&text[cursor..span.start]);
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    out
}

/// Parses a corpus TSV from a string. Row numbers in errors count the header as row 1.
pub fn parse_corpus(tsv: &str) -> Result<Vec<SentenceFamily>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(tsv.as_bytes());

    let mut families = Vec::new();
    let mut seen = HashSet::new();
    let mut header_seen = false;
    for (index, record) in reader.records().enumerate() {
        let row = index + 1;
        let record = record.map_err(|e| Error::CorpusRow {
            row,
            message: e.to_string(),
        })?;
        if !header_seen {
            let fields: Vec<&str> = record.iter().collect();
            if fields != TSV_HEADER {
                return Err(Error::CorpusRow {
                    row,
                    message: format!("header must be `{}`", TSV_HEADER.join("\\t")),
                });
            }
            header_seen = true;
            continue;
        }
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != TSV_HEADER.len() {
            return Err(Error::CorpusRow {
                row,
                message: format!("expected {} columns, found {}", TSV_HEADER.len(), record.len()),
            });
        }
        let family = family_from_fields(&record).map_err(|message| Error::CorpusRow { row, message })?;
        if !seen.insert(family.id.clone()) {
            return Err(Error::CorpusRow {
                row,
                message: format!("duplicate id `{}`", family.id),
            });
        }
        families.push(family);
    }
    if !header_seen {
        return Err(Error::CorpusRow {
            row: 1,
            message: "missing header row".into(),
        });
    }
    Ok(families)
}

fn family_from_fields(record: &csv::StringRecord) -> std::result::Result<SentenceFamily, String> {
    let cell = |i: usize| -> String {
        let v = record[i].trim();
        if v == "-" {
            String::new()
        } else {
            v.to_string()
        }
    };
    let optional = |i: usize| -> Option<String> { Some(cell(i)).filter(|v| !v.is_empty()) };
    let kind: Kind = record[1].trim().parse()?;
    let family = SentenceFamily {
        id: cell(0),
        kind,
        preamble: cell(2),
        ambiguous_verb: cell(3),
        unambiguous_verb: cell(4),
        blocked_object: optional(5),
        post_region: cell(6),
        extension: optional(7),
        negation_insert: cell(8),
        trigger: cell(9),
        continuation: cell(10),
    };
    family.validate()?;
    Ok(family)
}

/// The bundled seed corpus.
pub const SEED_CORPUS_TSV: &str = include_str!("../data/seed_corpus.tsv");

pub fn seed_corpus() -> Result<Vec<SentenceFamily>> {
    parse_corpus(SEED_CORPUS_TSV)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<SentenceFamily>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

/// Writes families back out in the TSV schema.
pub fn write_corpus(families: &[SentenceFamily]) -> String {
    let mut out = TSV_HEADER.join("\t");
    out.push('\n');
    for f in families {
        let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".to_string());
        let row = [
            f.id.clone(),
            f.kind.to_string(),
            f.preamble.clone(),
            f.ambiguous_verb.clone(),
            f.unambiguous_verb.clone(),
            opt(&f.blocked_object),
            f.post_region.clone(),
            opt(&f.extension),
            f.negation_insert.clone(),
            f.trigger.clone(),
            f.continuation.clone(),
        ];
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Every valid form: verb choices × extended × negated, in that nesting order.
pub fn enumerate_forms(family: &SentenceFamily) -> Vec<FormSpec> {
    let mut verbs = vec![VerbChoice::Ambiguous, VerbChoice::Unambiguous];
    if family.kind == Kind::Npz && family.blocked_object.is_some() {
        verbs.push(VerbChoice::Blocked);
    }
    let extended: &[bool] = if family.extension.is_some() {
        &[false, true]
    } else {
        &[false]
    };
    let mut forms = Vec::new();
    for &verb in &verbs {
        for &ext in extended {
            for negated in [false, true] {
                forms.push(FormSpec::new(verb, negated, ext));
            }
        }
    }
    forms
}

#[derive(Default)]
struct Builder {
    text: String,
    inserted: Vec<Range<usize>>,
}

impl Builder {
    fn word(&mut self, s: &str) -> Range<usize> {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        let start = self.text.len();
        self.text.push_str(s);
        start..self.text.len()
    }

    /// Inserted words own their leading space.
    fn inserted_word(&mut self, s: &str) {
        let start = self.text.len();
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        self.text.push_str(s);
        self.inserted.push(start..self.text.len());
    }

    fn inserted_attached(&mut self, s: &str) {
        let start = self.text.len();
        self.text.push_str(s);
        self.inserted.push(start..self.text.len());
    }
}

pub fn render(family: &SentenceFamily, form: FormSpec) -> Result<RenderedSentence> {
    form.validate_for(family)?;
    let verb = match form.verb_choice {
        VerbChoice::Ambiguous | VerbChoice::Blocked => &family.ambiguous_verb,
        VerbChoice::Unambiguous => &family.unambiguous_verb,
    };
    let mut b = Builder::default();
    b.word(&family.preamble);
    let verb_span = match family.kind {
        Kind::Npz => {
            let span = b.word(verb);
            if form.verb_choice == VerbChoice::Blocked {
                // validate_for guarantees the object exists
                b.word(family.blocked_object.as_deref().unwrap_or_default());
            }
            if form.negated {
                b.inserted_attached(&family.negation_insert);
            }
            span
        }
        Kind::Nps => {
            let span = b.word(verb);
            if form.negated {
                b.inserted_word(&family.negation_insert);
            }
            span
        }
        Kind::Mvrr => {
            if form.negated {
                b.inserted_word(&family.negation_insert);
            }
            b.word(verb)
        }
    };
    b.word(&family.post_region);
    if form.extended {
        b.word(family.extension.as_deref().unwrap_or_default());
    }
    let trigger_span = b.word(&family.trigger);
    b.word(&family.continuation);

    Ok(RenderedSentence {
        family_id: family.id.clone(),
        form,
        text: b.text,
        inserted_spans: b.inserted,
        trigger_span,
        verb_span,
    })
}

/// Renders every valid form of a family in [`enumerate_forms`] order.
pub fn render_all(family: &SentenceFamily) -> Vec<RenderedSentence> {
    enumerate_forms(family)
        .into_iter()
        .map(|form| render(family, form).expect("enumerated forms are valid"))
        .collect()
}
