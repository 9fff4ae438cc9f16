//! Vocabulary recycling: map canonical entities onto published term lists
//! before minting anything new.
//!
//! Precedence: exact label match beats normalized label match beats synonym
//! match beats minting. Within one tier the earliest vocabulary in the
//! caller's order wins, and within one vocabulary the lexicographically
//! smallest CURIE wins. Minted IRIs live under the pipeline namespace.

use std::collections::HashMap;

use thiserror::Error;

use crate::normalize::{CanonicalEntity, EntityKind, Normalizer};

#[derive(Debug, Clone, PartialEq)]
pub struct VocabTerm {
    pub curie: String,
    pub label: String,
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub name: String,
    terms: Vec<VocabTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MatchOutcome {
    ExactLabel,
    NormalizedLabel,
    Synonym,
    Minted,
}

impl MatchOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatchOutcome::ExactLabel => "exact_label",
            MatchOutcome::NormalizedLabel => "normalized_label",
            MatchOutcome::Synonym => "synonym",
            MatchOutcome::Minted => "minted",
        }
    }

    pub fn parse(s: &str) -> Option<MatchOutcome> {
        match s {
            "exact_label" => Some(MatchOutcome::ExactLabel),
            "normalized_label" => Some(MatchOutcome::NormalizedLabel),
            "synonym" => Some(MatchOutcome::Synonym),
            "minted" => Some(MatchOutcome::Minted),
            _ => None,
        }
    }

    /// 1 is the strongest match, 4 means nothing was recycled.
    pub fn quality(&self) -> u8 {
        match self {
            MatchOutcome::ExactLabel => 1,
            MatchOutcome::NormalizedLabel => 2,
            MatchOutcome::Synonym => 3,
            MatchOutcome::Minted => 4,
        }
    }
}

impl std::fmt::Display for MatchOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingResult {
    pub kind: EntityKind,
    pub entity_key: String,
    pub outcome: MatchOutcome,
    /// CURIE of the recycled term, or the full minted IRI.
    pub iri_or_curie: String,
    /// Name of the vocabulary that supplied the term; None exactly when minted.
    pub vocabulary: Option<String>,
    pub match_quality: u8,
}

#[derive(Debug, Error)]
pub enum RecycleError {
    #[error("{name}.tsv line {line}: expected curie<TAB>label<TAB>synonyms")]
    BadLine { name: String, line: usize },
    #[error("{name}.tsv line {line}: malformed CURIE {curie:?}")]
    BadCurie { name: String, line: usize, curie: String },
    #[error("{name}.tsv line {line}: empty label for {curie}")]
    EmptyTermLabel { name: String, line: usize, curie: String },
    #[error("{name}.tsv: duplicate CURIE {curie} on lines {first_line} and {second_line}")]
    DuplicateCurie { name: String, curie: String, first_line: usize, second_line: usize },
    #[error("namespace {namespace:?} must end with '/' or '#'")]
    BadNamespace { namespace: String },
    #[error("cannot mint an IRI for an empty key")]
    EmptyKey,
}

/// Accepts `prefix:local` where the prefix looks like a vocabulary
/// abbreviation and the local part is non-empty without whitespace. Absolute
/// IRIs (scheme://...) are not CURIEs.
pub fn is_valid_curie(s: &str) -> bool {
    let Some((prefix, local)) = s.split_once(':') else {
        return false;
    };
    if prefix.is_empty() || local.is_empty() || local.starts_with("//") {
        return false;
    }
    let mut chars = prefix.chars();
    let first = chars.next().expect("non-empty prefix");
    if !(first.is_ascii_alphabetic() || first == '_') {
        return false;
    }
    if !chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')) {
        return false;
    }
    !local.chars().any(|c| c.is_whitespace())
}

impl Vocabulary {
    /// Parses `curie TAB label TAB synonym1|synonym2|...` lines. The synonym
    /// column may be empty or missing. Blank lines and '#' comments skipped.
    pub fn from_tsv(tsv_text: &str, name: &str) -> Result<Vocabulary, RecycleError> {
        let mut terms = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, line) in tsv_text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(RecycleError::BadLine { name: name.to_string(), line: line_no });
            }
            let curie = fields[0].trim().to_string();
            if !is_valid_curie(&curie) {
                return Err(RecycleError::BadCurie {
                    name: name.to_string(),
                    line: line_no,
                    curie,
                });
            }
            let label = fields[1].trim().to_string();
            if label.is_empty() {
                return Err(RecycleError::EmptyTermLabel {
                    name: name.to_string(),
                    line: line_no,
                    curie,
                });
            }
            if let Some(first) = seen.get(&curie) {
                return Err(RecycleError::DuplicateCurie {
                    name: name.to_string(),
                    curie,
                    first_line: *first,
                    second_line: line_no,
                });
            }
            seen.insert(curie.clone(), line_no);
            let synonyms = fields
                .get(2)
                .map(|s| {
                    s.split('|')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            terms.push(VocabTerm { curie, label, synonyms });
        }
        Ok(Vocabulary { name: name.to_string(), terms })
    }

    pub fn terms(&self) -> &[VocabTerm] {
        &self.terms
    }

    pub fn contains_curie(&self, curie: &str) -> bool {
        self.terms.iter().any(|t| t.curie == curie)
    }
}

pub fn load_vocabulary(tsv_text: &str, name: &str) -> Result<Vocabulary, RecycleError> {
    Vocabulary::from_tsv(tsv_text, name)
}

/// Smallest CURIE among terms matched by `pred` in one vocabulary.
fn best_in_vocab<F>(vocab: &Vocabulary, pred: F) -> Option<String>
where
    F: Fn(&VocabTerm) -> bool,
{
    vocab
        .terms
        .iter()
        .filter(|t| pred(t))
        .map(|t| t.curie.clone())
        .min()
}

/// Maps one entity against the vocabularies in the given order. Falls back to
/// minting an IRI under `namespace` when no tier matches.
pub fn map_term(
    entity: &CanonicalEntity,
    vocabularies: &[&Vocabulary],
    normalizer: &Normalizer,
    namespace: &str,
) -> Result<MappingResult, RecycleError> {
    let kind = entity.kind;
    let done = |outcome: MatchOutcome, curie: String, vocab: &Vocabulary| MappingResult {
        kind,
        entity_key: entity.canonical_key.clone(),
        outcome,
        iri_or_curie: curie,
        vocabulary: Some(vocab.name.clone()),
        match_quality: outcome.quality(),
    };

    for vocab in vocabularies {
        if let Some(curie) = best_in_vocab(vocab, |t| t.label == entity.display_label) {
            return Ok(done(MatchOutcome::ExactLabel, curie, vocab));
        }
    }
    for vocab in vocabularies {
        if let Some(curie) = best_in_vocab(vocab, |t| {
            normalizer.canonicalize(&t.label, kind).ok().as_deref()
                == Some(entity.canonical_key.as_str())
        }) {
            return Ok(done(MatchOutcome::NormalizedLabel, curie, vocab));
        }
    }
    for vocab in vocabularies {
        if let Some(curie) = best_in_vocab(vocab, |t| {
            t.synonyms.iter().any(|s| {
                normalizer.canonicalize(s, kind).ok().as_deref()
                    == Some(entity.canonical_key.as_str())
            })
        }) {
            return Ok(done(MatchOutcome::Synonym, curie, vocab));
        }
    }
    let iri = mint_local_iri(&entity.canonical_key, namespace)?;
    Ok(MappingResult {
        kind,
        entity_key: entity.canonical_key.clone(),
        outcome: MatchOutcome::Minted,
        iri_or_curie: iri,
        vocabulary: None,
        match_quality: MatchOutcome::Minted.quality(),
    })
}

/// Mints `namespace + slug`. The slug maps spaces to '-', keeps [a-z0-9-] and
/// percent-encodes every other byte of the UTF-8 form as uppercase %HH.
///
/// Note: because ' ' maps to the same output character as a literal '-', two
/// keys that differ only in space-vs-dash mint the same IRI. Canonical keys
/// coming out of the normalizer do not collide this way in practice.
pub fn mint_local_iri(canonical_key: &str, namespace: &str) -> Result<String, RecycleError> {
    if !(namespace.ends_with('/') || namespace.ends_with('#')) {
        return Err(RecycleError::BadNamespace { namespace: namespace.to_string() });
    }
    if canonical_key.is_empty() {
        return Err(RecycleError::EmptyKey);
    }
    let mut slug = String::with_capacity(canonical_key.len());
    for ch in canonical_key.chars() {
        match ch {
            ' ' => slug.push('-'),
            'a'..='z' | '0'..='9' | '-' => slug.push(ch),
            other => {
                let mut buf = [0u8; 4];
                for byte in other.encode_utf8(&mut buf).as_bytes() {
                    slug.push_str(&format!("%{byte:02X}"));
                }
            }
        }
    }
    Ok(format!("{namespace}{slug}"))
}

/// Percent-escape for IRI path segments that must keep their case (CURIEs,
/// trial registry ids). Keeps [A-Za-z0-9_.-].
pub(crate) fn escape_iri_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '_' | '.' | '-' => out.push(ch),
            other => {
                let mut buf = [0u8; 4];
                for byte in other.encode_utf8(&mut buf).as_bytes() {
                    out.push_str(&format!("%{byte:02X}"));
                }
            }
        }
    }
    out
}

/// Per-kind counts of each outcome plus the overall recycled fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingReport {
    /// (kind, outcome, count), sorted by kind then match quality.
    pub rows: Vec<(EntityKind, MatchOutcome, usize)>,
    pub mapped_fraction: f64,
}

impl MappingReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("kind\toutcome\tcount\n");
        for (kind, outcome, count) in &self.rows {
            out.push_str(&format!("{kind}\t{outcome}\t{count}\n"));
        }
        out.push_str(&format!("overall\tmapped_fraction\t{}\n", self.mapped_fraction));
        out
    }
}

pub fn mapping_report(results: &[MappingResult]) -> MappingReport {
    use std::collections::BTreeMap;
    let mut counts: BTreeMap<(&str, u8), (EntityKind, MatchOutcome, usize)> = BTreeMap::new();
    let mut mapped = 0usize;
    for r in results {
        counts
            .entry((r.kind.as_str(), r.outcome.quality()))
            .and_modify(|e| e.2 += 1)
            .or_insert((r.kind, r.outcome, 1));
        if r.outcome != MatchOutcome::Minted {
            mapped += 1;
        }
    }
    let mapped_fraction = if results.is_empty() {
        1.0
    } else {
        mapped as f64 / results.len() as f64
    };
    MappingReport { rows: counts.into_values().collect(), mapped_fraction }
}
