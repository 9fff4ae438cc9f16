//! Label canonicalization and entity merging.
//!
//! Canonical keys are what make two raw labels the same entity: NFC, case
//! fold, whitespace collapse, trailing sentence punctuation stripped, and for
//! foods, food groups and diseases a plural strip on the final word. Chemical
//! names (flavonoids, subclasses, drugs) are never plural-stripped. A curation
//! override file can pin any raw label to a chosen key and wins over the
//! rules.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::ingest::SourceProvenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityKind {
    FoodGroup,
    Food,
    FlavonoidSubclass,
    Flavonoid,
    Disease,
    Drug,
}

impl EntityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntityKind::FoodGroup => "food_group",
            EntityKind::Food => "food",
            EntityKind::FlavonoidSubclass => "flavonoid_subclass",
            EntityKind::Flavonoid => "flavonoid",
            EntityKind::Disease => "disease",
            EntityKind::Drug => "drug",
        }
    }

    pub fn parse(s: &str) -> Option<EntityKind> {
        match s {
            "food_group" => Some(EntityKind::FoodGroup),
            "food" => Some(EntityKind::Food),
            "flavonoid_subclass" => Some(EntityKind::FlavonoidSubclass),
            "flavonoid" => Some(EntityKind::Flavonoid),
            "disease" => Some(EntityKind::Disease),
            "drug" => Some(EntityKind::Drug),
            _ => None,
        }
    }

    /// Plural stripping only applies where labels are common nouns; chemical
    /// and product names must survive byte-for-byte apart from case folding.
    fn strips_plural(&self) -> bool {
        matches!(self, EntityKind::Food | EntityKind::FoodGroup | EntityKind::Disease)
    }

    pub fn all() -> [EntityKind; 6] {
        [
            EntityKind::FoodGroup,
            EntityKind::Food,
            EntityKind::FlavonoidSubclass,
            EntityKind::Flavonoid,
            EntityKind::Disease,
            EntityKind::Drug,
        ]
    }
}

impl std::fmt::Display for EntityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One raw label occurrence heading into the merge.
#[derive(Debug, Clone, PartialEq)]
pub struct RawLabel {
    pub text: String,
    pub kind: EntityKind,
    pub provenance: SourceProvenance,
}

/// A merged entity: one canonical key, the surface form chosen for display,
/// and every raw occurrence that mapped onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalEntity {
    pub kind: EntityKind,
    pub canonical_key: String,
    pub display_label: String,
    pub merged_from: Vec<(String, SourceProvenance)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    pub kind: EntityKind,
    pub canonical_key: String,
    pub display_label: String,
    pub absorbed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReviewPair {
    pub kind: EntityKind,
    pub a: String,
    pub b: String,
    pub distance: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeReport {
    pub merges: Vec<MergeRecord>,
    pub review_queue: Vec<ReviewPair>,
}

#[derive(Debug, Error)]
pub enum NormalizeError {
    #[error("label {raw:?} is empty after trimming")]
    EmptyLabel { raw: String },
    #[error(
        "canonical key {key:?} is shared by {kind_a} label {label_a:?} and {kind_b} label {label_b:?}"
    )]
    CrossKindCollision {
        key: String,
        kind_a: String,
        label_a: String,
        kind_b: String,
        label_b: String,
    },
    #[error("override file line {line}: expected raw_label<TAB>kind<TAB>canonical_key")]
    BadOverrideLine { line: usize },
    #[error("override file line {line}: unknown entity kind {value:?}")]
    BadOverrideKind { line: usize, value: String },
    #[error("override chain starting at {start:?} ({kind}) never settles")]
    OverrideCycle { kind: String, start: String },
}

/// Sentence punctuation stripped from label ends. Brackets and quotes stay:
/// they are balanced parts of chemical names.
const TRAILING_PUNCTUATION: [char; 6] = ['.', ',', ';', ':', '!', '?'];

#[derive(Debug, Clone)]
pub struct Normalizer {
    overrides: HashMap<(EntityKind, String), String>,
    plural_exceptions: HashSet<String>,
    review_max_distance: usize,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::new()
    }
}

impl Normalizer {
    pub fn new() -> Self {
        let mut n = Normalizer {
            overrides: HashMap::new(),
            plural_exceptions: HashSet::new(),
            review_max_distance: 1,
        };
        // The subclass list in circulation spells flavanones "flavnaones";
        // accept it as a synonym of the canonical spelling.
        n.overrides.insert(
            (EntityKind::FlavonoidSubclass, "flavnaones".to_string()),
            "flavanones".to_string(),
        );
        n
    }

    pub fn review_max_distance(&self) -> usize {
        self.review_max_distance
    }

    pub fn set_review_max_distance(&mut self, d: usize) {
        self.review_max_distance = d;
    }

    /// Loads `raw_label TAB kind TAB canonical_key` lines. Blank lines and
    /// lines starting with '#' are skipped. Targets are themselves
    /// canonicalized so that canonicalize stays idempotent.
    pub fn load_overrides(&mut self, text: &str) -> Result<(), NormalizeError> {
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(NormalizeError::BadOverrideLine { line: line_no });
            }
            let raw = fields[0].trim();
            let kind = EntityKind::parse(fields[1].trim()).ok_or(NormalizeError::BadOverrideKind {
                line: line_no,
                value: fields[1].trim().to_string(),
            })?;
            let target = fields[2].trim();
            if raw.is_empty() || target.is_empty() {
                return Err(NormalizeError::BadOverrideLine { line: line_no });
            }
            let folded = fold(raw);
            let canonical_target = self.apply_rules(&fold(target), kind);
            self.overrides.insert((kind, folded), canonical_target);
        }
        self.resolve_override_chains()
    }

    /// Loads plural exceptions, one word per line; '#' comments allowed.
    pub fn load_plural_exceptions(&mut self, text: &str) {
        for line in text.lines() {
            let word = line.trim();
            if word.is_empty() || word.starts_with('#') {
                continue;
            }
            self.plural_exceptions.insert(word.to_lowercase());
        }
    }

    /// Overrides may point at labels that other overrides rewrite; follow the
    /// chain so lookups land on a fixed point.
    fn resolve_override_chains(&mut self) -> Result<(), NormalizeError> {
        let keys: Vec<(EntityKind, String)> = self.overrides.keys().cloned().collect();
        for key in keys {
            let mut seen = BTreeSet::new();
            let mut current = self.overrides[&key].clone();
            while let Some(next) = self.overrides.get(&(key.0, current.clone())) {
                if *next == current {
                    break;
                }
                if !seen.insert(current.clone()) {
                    return Err(NormalizeError::OverrideCycle {
                        kind: key.0.as_str().to_string(),
                        start: key.1.clone(),
                    });
                }
                current = next.clone();
            }
            self.overrides.insert(key, current);
        }
        Ok(())
    }

    /// Canonical key for a raw label. Deterministic and idempotent.
    pub fn canonicalize(&self, raw: &str, kind: EntityKind) -> Result<String, NormalizeError> {
        let folded = fold(raw);
        if folded.is_empty() {
            return Err(NormalizeError::EmptyLabel { raw: raw.to_string() });
        }
        if let Some(target) = self.overrides.get(&(kind, folded.clone())) {
            return Ok(target.clone());
        }
        let key = self.apply_rules(&folded, kind);
        if key.is_empty() {
            return Err(NormalizeError::EmptyLabel { raw: raw.to_string() });
        }
        Ok(key)
    }

    /// Rule pipeline after folding: trailing punctuation strip, then the
    /// kind-gated plural strip on the final word.
    fn apply_rules(&self, folded: &str, kind: EntityKind) -> String {
        let mut label = folded.to_string();
        loop {
            let before = label.len();
            label = label
                .trim_end_matches(|c| TRAILING_PUNCTUATION.contains(&c))
                .trim_end()
                .to_string();
            if label.len() == before {
                break;
            }
        }
        if kind.strips_plural() {
            label = self.strip_plural(&label);
        }
        label
    }

    fn strip_plural(&self, label: &str) -> String {
        let start = label.rfind(' ').map(|i| i + 1).unwrap_or(0);
        let word = &label[start..];
        if word.is_empty() || self.plural_exceptions.contains(word) {
            return label.to_string();
        }
        let len = word.chars().count();
        let stripped = if word.ends_with("ies") && len > 3 {
            format!("{}y", &word[..word.len() - 3])
        } else if word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && len > 3 {
            word[..word.len() - 1].to_string()
        } else {
            word.to_string()
        };
        format!("{}{}", &label[..start], stripped)
    }

    /// Groups raw labels by canonical key. Within a group the display label is
    /// the most frequent raw form, ties broken by lexicographic order. A key
    /// claimed by two different kinds is an error: keys are globally unique so
    /// that minted IRIs cannot collide across kinds.
    pub fn merge_entities(
        &self,
        labels: &[RawLabel],
    ) -> Result<(Vec<CanonicalEntity>, MergeReport), NormalizeError> {
        struct Group {
            kind: EntityKind,
            first_label: String,
            counts: BTreeMap<String, usize>,
            occurrences: Vec<(String, SourceProvenance)>,
        }
        let mut groups: BTreeMap<String, Group> = BTreeMap::new();
        for raw in labels {
            let key = self.canonicalize(&raw.text, raw.kind)?;
            match groups.get_mut(&key) {
                Some(group) => {
                    if group.kind != raw.kind {
                        return Err(NormalizeError::CrossKindCollision {
                            key,
                            kind_a: group.kind.as_str().to_string(),
                            label_a: group.first_label.clone(),
                            kind_b: raw.kind.as_str().to_string(),
                            label_b: raw.text.clone(),
                        });
                    }
                    *group.counts.entry(raw.text.clone()).or_insert(0) += 1;
                    group.occurrences.push((raw.text.clone(), raw.provenance.clone()));
                }
                None => {
                    let mut counts = BTreeMap::new();
                    counts.insert(raw.text.clone(), 1);
                    groups.insert(
                        key,
                        Group {
                            kind: raw.kind,
                            first_label: raw.text.clone(),
                            counts,
                            occurrences: vec![(raw.text.clone(), raw.provenance.clone())],
                        },
                    );
                }
            }
        }

        let mut entities = Vec::with_capacity(groups.len());
        let mut merges = Vec::new();
        let mut keys_by_kind: BTreeMap<EntityKind, Vec<String>> = BTreeMap::new();
        for (key, group) in groups {
            // BTreeMap iteration is sorted, so on equal counts the first
            // (lexicographically smallest) label wins.
            let mut display = String::new();
            let mut best = 0usize;
            for (label, count) in &group.counts {
                if *count > best {
                    display = label.clone();
                    best = *count;
                }
            }
            let mut merged_from = group.occurrences;
            merged_from.sort();
            if group.counts.len() > 1 {
                merges.push(MergeRecord {
                    kind: group.kind,
                    canonical_key: key.clone(),
                    display_label: display.clone(),
                    absorbed: group.counts.keys().filter(|l| **l != display).cloned().collect(),
                });
            }
            keys_by_kind.entry(group.kind).or_default().push(key.clone());
            entities.push(CanonicalEntity {
                kind: group.kind,
                canonical_key: key,
                display_label: display,
                merged_from,
            });
        }

        let mut review_queue = Vec::new();
        for (kind, keys) in keys_by_kind {
            for (a, b, distance) in detect_near_duplicates(&keys, self.review_max_distance) {
                review_queue.push(ReviewPair { kind, a, b, distance });
            }
        }
        review_queue.sort_by(|x, y| {
            (x.distance, &x.a, &x.b, x.kind).cmp(&(y.distance, &y.a, &y.b, y.kind))
        });
        Ok((entities, MergeReport { merges, review_queue }))
    }
}

/// NFC, trim, lowercase, whitespace collapse. The shared first half of both
/// the canonicalization rules and override lookups.
fn fold(raw: &str) -> String {
    let nfc: String = raw.nfc().collect();
    nfc.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonicalization with the default rule set (no curation files loaded).
pub fn canonicalize_label(raw: &str, kind: EntityKind) -> Result<String, NormalizeError> {
    Normalizer::new().canonicalize(raw, kind)
}

/// Pairs of distinct labels within edit distance `1..=max_distance`, sorted by
/// (distance, first, second). Pairs are flagged for human review, never
/// merged automatically.
pub fn detect_near_duplicates(
    labels: &[String],
    max_distance: usize,
) -> Vec<(String, String, usize)> {
    let unique: BTreeSet<&String> = labels.iter().collect();
    let items: Vec<&String> = unique.into_iter().collect();
    let chars: Vec<Vec<char>> = items.iter().map(|s| s.chars().collect()).collect();
    let mut pairs = Vec::new();
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            if chars[i].len().abs_diff(chars[j].len()) > max_distance {
                continue;
            }
            if let Some(d) = banded_distance(&chars[i], &chars[j], max_distance) {
                if d >= 1 {
                    pairs.push((items[i].clone(), items[j].clone(), d));
                }
            }
        }
    }
    pairs.sort();
    pairs.sort_by_key(|p| p.2);
    pairs
}

/// Edit distance between two strings, by characters.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let bound = a.chars().count().max(b.chars().count());
    levenshtein_within(a, b, bound).expect("bound covers the worst case")
}

/// Banded edit distance: returns None when the distance exceeds `max`.
fn levenshtein_within(a: &str, b: &str, max: usize) -> Option<usize> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    banded_distance(&a, &b, max)
}

fn banded_distance(a: &[char], b: &[char], max: usize) -> Option<usize> {
    if a.len().abs_diff(b.len()) > max {
        return None;
    }
    // Shared prefixes and suffixes never contribute to the distance.
    let mut lo = 0;
    while lo < a.len() && lo < b.len() && a[lo] == b[lo] {
        lo += 1;
    }
    let (a, b) = (&a[lo..], &b[lo..]);
    let mut hi = 0;
    while hi < a.len() && hi < b.len() && a[a.len() - 1 - hi] == b[b.len() - 1 - hi] {
        hi += 1;
    }
    let (a, b) = (&a[..a.len() - hi], &b[..b.len() - hi]);
    let (m, n) = (a.len(), b.len());
    // Any alignment path with |i - j| > max already costs more than max, so
    // cells outside that band stay at the sentinel.
    let inf = max + 1;
    let mut prev: Vec<usize> = (0..=n).map(|j| if j <= max { j } else { inf }).collect();
    let mut cur = vec![inf; n + 1];
    for i in 1..=m {
        let jlo = i.saturating_sub(max).max(1);
        let jhi = (i + max).min(n);
        cur[jlo - 1] = if jlo == 1 && i <= max { i } else { inf };
        let mut row_min = cur[jlo - 1];
        for j in jlo..=jhi {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            let cell = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost).min(inf);
            cur[j] = cell;
            row_min = row_min.min(cell);
        }
        if row_min > max {
            return None;
        }
        // The next row reads one cell past this row's band.
        if jhi + 1 <= n {
            cur[jhi + 1] = inf;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    if prev[n] > max {
        None
    } else {
        Some(prev[n])
    }
}
