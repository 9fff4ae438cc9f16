//! Template sheets and their compilation into an OWL class hierarchy.
//!
//! A sheet is a CSV whose first row holds column names, second row holds
//! directives, and remaining rows hold data. Directives are case-sensitive:
//! `ID`, `LABEL`, `TYPE`, `SC <pattern>` (the pattern's `%` is replaced by
//! the cell), `A <property>`, `ignore`, or an empty string. Compiled sheets
//! merge into a single axiom set which serializes to a canonical Turtle
//! form: stable prefix block, one triple per line, fully sorted.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::{Direction, EdgeKind, KnowledgeGraph, NodeKind};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDFS_LABEL: &str = "http://www.w3.org/2000/01/rdf-schema#label";
pub const RDFS_SUB_CLASS_OF: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";
pub const OWL_CLASS: &str = "http://www.w3.org/2002/07/owl#Class";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("prefix file line {line}: expected prefix<TAB>iri")]
    BadPrefixLine { line: usize },
    #[error("invalid prefix {prefix:?}")]
    BadPrefix { prefix: String },
    #[error("prefix {prefix:?} declared twice")]
    DuplicatePrefix { prefix: String },
    #[error("prefix {prefix:?} expands to {base:?}, which is not an absolute IRI")]
    BadBase { prefix: String, base: String },
    #[error("sheet {sheet}: no header row")]
    MissingHeaderRow { sheet: String },
    #[error("sheet {sheet}: no directive row")]
    MissingDirectiveRow { sheet: String },
    #[error("sheet {sheet}: column {column} has unrecognized directive {text:?}")]
    UnknownDirective { sheet: String, column: usize, text: String },
    #[error("sheet {sheet}: no ID column")]
    NoIdColumn { sheet: String },
    #[error("sheet {sheet}: more than one ID column")]
    MultipleIdColumns { sheet: String },
    #[error("sheet {sheet} row {row}: has {cells} cells but the sheet has {columns} columns")]
    RaggedRow { sheet: String, row: usize, cells: usize, columns: usize },
    #[error("sheet {sheet} row {row}: empty ID cell")]
    EmptyId { sheet: String, row: usize },
    #[error("sheet {sheet} row {row}: unknown prefix {prefix:?}")]
    UnknownPrefixInCell { sheet: String, row: usize, prefix: String },
    #[error("sheet {sheet} row {row}: {text:?} is neither a known CURIE nor an absolute IRI")]
    Unresolvable { sheet: String, row: usize, text: String },
    #[error("sheet {sheet} row {row}: TYPE cell {text:?} (expected empty, \"class\" or \"owl:Class\")")]
    BadType { sheet: String, row: usize, text: String },
    #[error("conflicting labels for {subject}: {a:?} vs {b:?}")]
    LabelConflict { subject: String, a: String, b: String },
    #[error("sheet {sheet}: {source}")]
    Csv {
        sheet: String,
        #[source]
        source: csv::Error,
    },
}

fn is_absolute_iri(text: &str) -> bool {
    !text.contains(char::is_whitespace)
        && (text.contains("://") || text.starts_with("urn:") || text.starts_with("mailto:"))
}

fn is_valid_prefix(prefix: &str) -> bool {
    let mut chars = prefix.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn is_turtle_local(local: &str) -> bool {
    let mut chars = local.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphanumeric() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Prefix declarations used both for expanding cells and for rendering
/// IRIs back to compact form.
#[derive(Debug, Clone, Default)]
pub struct PrefixMap {
    entries: BTreeMap<String, String>,
}

impl PrefixMap {
    pub fn new() -> PrefixMap {
        PrefixMap::default()
    }

    pub fn insert(&mut self, prefix: &str, base: &str) -> Result<(), TemplateError> {
        if !is_valid_prefix(prefix) {
            return Err(TemplateError::BadPrefix { prefix: prefix.to_string() });
        }
        if !is_absolute_iri(base) {
            return Err(TemplateError::BadBase {
                prefix: prefix.to_string(),
                base: base.to_string(),
            });
        }
        if self.entries.contains_key(prefix) {
            return Err(TemplateError::DuplicatePrefix { prefix: prefix.to_string() });
        }
        self.entries.insert(prefix.to_string(), base.to_string());
        Ok(())
    }

    /// Loads `prefix TAB iri` lines. '#' comments and blank lines are
    /// skipped.
    pub fn from_tsv(text: &str) -> Result<PrefixMap, TemplateError> {
        let mut map = PrefixMap::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t').map(str::trim);
            match (fields.next(), fields.next(), fields.next()) {
                (Some(prefix), Some(base), None) if !prefix.is_empty() && !base.is_empty() => {
                    map.insert(prefix, base)?;
                }
                _ => return Err(TemplateError::BadPrefixLine { line: i + 1 }),
            }
        }
        Ok(map)
    }

    pub fn from_pairs<'a, I>(pairs: I) -> Result<PrefixMap, TemplateError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut map = PrefixMap::new();
        for (prefix, base) in pairs {
            map.insert(prefix, base)?;
        }
        Ok(map)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(p, b)| (p.as_str(), b.as_str()))
    }

    pub fn get(&self, prefix: &str) -> Option<&str> {
        self.entries.get(prefix).map(String::as_str)
    }

    /// Expands a CURIE with a registered prefix, passes absolute IRIs
    /// through, and returns None for anything else.
    pub fn expand(&self, text: &str) -> Option<String> {
        if let Some((prefix, local)) = text.split_once(':') {
            if let Some(base) = self.entries.get(prefix) {
                return Some(format!("{base}{local}"));
            }
        }
        if is_absolute_iri(text) {
            return Some(text.to_string());
        }
        None
    }

    fn best_match<'a>(&'a self, iri: &'a str) -> Option<(&'a str, &'a str)> {
        // Longest base wins; among equal bases the smallest prefix.
        self.entries
            .iter()
            .filter(|(_, base)| iri.starts_with(base.as_str()))
            .max_by(|(pa,ba), (pb, bb)| ba.len().cmp(&bb.len()).then(pb.cmp(pa)))
            .map(|(p, b)| (p.as_str(), &iri[b.len()..]))
    }

    /// Compact form for template cells: a CURIE whenever some base prefixes
    /// the IRI, otherwise the IRI itself. Round-trips through `expand`.
    pub fn shrink_cell(&self, iri: &str) -> String {
        match self.best_match(iri) {
            Some((prefix, local)) if !local.contains(char::is_whitespace) => {
                format!("{prefix}:{local}")
            }
            _ => iri.to_string(),
        }
    }

    /// Prefixed name for Turtle output, only when the local part stays
    /// within the conservative name charset.
    pub fn shrink_name(&self, iri: &str) -> Option<String> {
        match self.best_match(iri) {
            Some((prefix, local)) if is_turtle_local(local) => Some(format!("{prefix}:{local}")),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Id,
    Label,
    Type,
    SubClassOf(String),
    Annotation(String),
    Ignore,
}

impl Directive {
    /// Directives are matched exactly; there is no case folding.
    pub fn parse(text: &str) -> Option<Directive> {
        match text {
            "" | "ignore" => return Some(Directive::Ignore),
            "ID" => return Some(Directive::Id),
            "LABEL" => return Some(Directive::Label),
            "TYPE" => return Some(Directive::Type),
            _ => {}
        }
        if let Some(pattern) = text.strip_prefix("SC ") {
            if pattern.contains('%') {
                return Some(Directive::SubClassOf(pattern.to_string()));
            }
            return None;
        }
        if let Some(property) = text.strip_prefix("A ") {
            if !property.trim().is_empty() {
                return Some(Directive::Annotation(property.trim().to_string()));
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSheet {
    pub name: String,
    pub headers: Vec<String>,
    /// Raw directive strings, one per header column.
    pub directives: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TemplateSheet {
    pub fn to_csv(&self) -> String {
        let width = self.headers.len();
        let mut writer = csv::Writer::from_writer(Vec::new());
        let pad = |cells: &[String]| {
            let mut out = cells.to_vec();
            out.resize(width, String::new());
            out
        };
        writer.write_record(pad(&self.headers)).expect("in-memory write");
        writer.write_record(pad(&self.directives)).expect("in-memory write");
        for row in &self.rows {
            writer.write_record(pad(row)).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Parses a sheet and validates the directive row: every directive must be
/// recognized and exactly one column must be `ID`. Rows count from 1, so the
/// header row is 1, the directive row 2 and data starts at 3.
pub fn parse_template(csv_text: &str, sheet_name: &str) -> Result<TemplateSheet, TemplateError> {
    let text = csv_text.strip_prefix('\u{feff}').unwrap_or(csv_text);
    let mut reader =
        csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let wrap = |source: csv::Error| TemplateError::Csv { sheet: sheet_name.to_string(), source };
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(wrap)?;
        records.push(record.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>());
    }
    let mut records = records.into_iter();
    let headers = records
        .next()
        .ok_or_else(|| TemplateError::MissingHeaderRow { sheet: sheet_name.to_string() })?;
    let mut directives = records
        .next()
        .ok_or_else(|| TemplateError::MissingDirectiveRow { sheet: sheet_name.to_string() })?;
    let width = headers.len();
    if directives.len() > width {
        return Err(TemplateError::RaggedRow {
            sheet: sheet_name.to_string(),
            row: 2,
            cells: directives.len(),
            columns: width,
        });
    }
    directives.resize(width, String::new());

    let mut id_columns = 0;
    for (column, text) in directives.iter().enumerate() {
        match Directive::parse(text) {
            Some(Directive::Id) => id_columns += 1,
            Some(_) => {}
            None => {
                return Err(TemplateError::UnknownDirective {
                    sheet: sheet_name.to_string(),
                    column: column + 1,
                    text: text.clone(),
                });
            }
        }
    }
    if id_columns == 0 {
        return Err(TemplateError::NoIdColumn { sheet: sheet_name.to_string() });
    }
    if id_columns > 1 {
        return Err(TemplateError::MultipleIdColumns { sheet: sheet_name.to_string() });
    }

    let mut rows = Vec::new();
    for (i, mut row) in records.enumerate() {
        if row.len() > width {
            return Err(TemplateError::RaggedRow {
                sheet: sheet_name.to_string(),
                row: i + 3,
                cells: row.len(),
                columns: width,
            });
        }
        row.resize(width, String::new());
        rows.push(row);
    }
    Ok(TemplateSheet { name: sheet_name.to_string(), headers, directives, rows })
}

/// One assertion in the compiled ontology. All IRIs are stored expanded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axiom {
    ClassDeclaration(String),
    Label { subject: String, text: String },
    SubClassOf { sub: String, sup: String },
    Annotation { subject: String, property: String, value: String },
    Relation { subject: String, property: String, object: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OwlDocument {
    pub axioms: BTreeSet<Axiom>,
}

impl OwlDocument {
    pub fn new() -> OwlDocument {
        OwlDocument::default()
    }

    pub fn len(&self) -> usize {
        self.axioms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axioms.is_empty()
    }
}

fn resolve_strict(
    prefixes: &PrefixMap,
    text: &str,
    sheet: &str,
    row: usize,
) -> Result<String, TemplateError> {
    if let Some(iri) = prefixes.expand(text) {
        return Ok(iri);
    }
    if let Some((prefix, _)) = text.split_once(':') {
        return Err(TemplateError::UnknownPrefixInCell {
            sheet: sheet.to_string(),
            row,
            prefix: prefix.to_string(),
        });
    }
    Err(TemplateError::Unresolvable { sheet: sheet.to_string(), row, text: text.to_string() })
}

/// Compiles one sheet. Every data row declares its ID cell as a class; the
/// other columns contribute label, superclass, and annotation axioms. An
/// `A` cell whose text expands to an IRI produces both the annotation and
/// the corresponding relation; other text stays annotation-only.
pub fn expand_template(
    sheet: &TemplateSheet,
    prefixes: &PrefixMap,
) -> Result<OwlDocument, TemplateError> {
    let directives: Vec<Directive> = sheet
        .directives
        .iter()
        .enumerate()
        .map(|(column, text)| {
            Directive::parse(text).ok_or_else(|| TemplateError::UnknownDirective {
                sheet: sheet.name.clone(),
                column: column + 1,
                text: text.clone(),
            })
        })
        .collect::<Result<_, _>>()?;
    let id_column = directives
        .iter()
        .position(|d| *d == Directive::Id)
        .ok_or_else(|| TemplateError::NoIdColumn { sheet: sheet.name.clone() })?;
    if directives.iter().filter(|d| **d == Directive::Id).count() > 1 {
        return Err(TemplateError::MultipleIdColumns { sheet: sheet.name.clone() });
    }

    // Annotation properties come from the directive row, so failures there
    // point at row 2.
    let mut properties: Vec<Option<String>> = Vec::with_capacity(directives.len());
    for directive in &directives {
        properties.push(match directive {
            Directive::Annotation(text) => Some(resolve_strict(prefixes, text, &sheet.name, 2)?),
            _ => None,
        });
    }

    let mut doc = OwlDocument::new();
    for (i, row) in sheet.rows.iter().enumerate() {
        let row_number = i + 3;
        let cell = |c: usize| row.get(c).map(|s| s.trim()).unwrap_or("");
        let id_cell = cell(id_column);
        if id_cell.is_empty() {
            return Err(TemplateError::EmptyId { sheet: sheet.name.clone(), row: row_number });
        }
        let subject = resolve_strict(prefixes, id_cell, &sheet.name, row_number)?;
        doc.axioms.insert(Axiom::ClassDeclaration(subject.clone()));
        for (c, directive) in directives.iter().enumerate() {
            let text = cell(c);
            match directive {
                Directive::Id | Directive::Ignore => {}
                Directive::Type => match text {
                    "" | "class" | "owl:Class" => {}
                    other => {
                        return Err(TemplateError::BadType {
                            sheet: sheet.name.clone(),
                            row: row_number,
                            text: other.to_string(),
                        });
                    }
                },
                Directive::Label => {
                    if !text.is_empty() {
                        doc.axioms.insert(Axiom::Label {
                            subject: subject.clone(),
                            text: text.to_string(),
                        });
                    }
                }
                Directive::SubClassOf(pattern) => {
                    if !text.is_empty() {
                        let target = pattern.replacen('%', text, 1);
                        let sup = resolve_strict(prefixes, &target, &sheet.name, row_number)?;
                        doc.axioms.insert(Axiom::SubClassOf { sub: subject.clone(), sup });
                    }
                }
                Directive::Annotation(_) => {
                    if !text.is_empty() {
                        let property = properties[c].clone().expect("annotation property");
                        doc.axioms.insert(Axiom::Annotation {
                            subject: subject.clone(),
                            property: property.clone(),
                            value: text.to_string(),
                        });
                        if let Some(object) = prefixes.expand(text) {
                            doc.axioms.insert(Axiom::Relation {
                                subject: subject.clone(),
                                property,
                                object,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(doc)
}

/// Union of two documents. Fails when the same subject carries two
/// different labels; everything else merges freely. Commutative,
/// associative and idempotent on documents that merge at all.
pub fn merge_documents(a: &OwlDocument, b: &OwlDocument) -> Result<OwlDocument, TemplateError> {
    let mut axioms = a.axioms.clone();
    axioms.extend(b.axioms.iter().cloned());
    let mut labels: BTreeMap<&str, &str> = BTreeMap::new();
    for axiom in &axioms {
        if let Axiom::Label { subject, text } = axiom {
            if let Some(previous) = labels.get(subject.as_str()) {
                if *previous != text.as_str() {
                    let (a, b) = if *previous < text.as_str() {
                        (previous.to_string(), text.clone())
                    } else {
                        (text.clone(), previous.to_string())
                    };
                    return Err(TemplateError::LabelConflict { subject: subject.clone(), a, b });
                }
            } else {
                labels.insert(subject, text);
            }
        }
    }
    Ok(OwlDocument { axioms })
}

pub fn compile_sheets(
    sheets: &[TemplateSheet],
    prefixes: &PrefixMap,
) -> Result<OwlDocument, TemplateError> {
    let mut doc = OwlDocument::new();
    for sheet in sheets {
        let expanded = expand_template(sheet, prefixes)?;
        doc = merge_documents(&doc, &expanded)?;
    }
    Ok(doc)
}

fn escape_literal(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out
}

fn render_iri(prefixes: &PrefixMap, iri: &str) -> String {
    prefixes.shrink_name(iri).unwrap_or_else(|| format!("<{iri}>"))
}

/// Canonical Turtle: sorted prefix block, one blank separator line, then
/// one full `subject predicate object .` triple per line. Subjects sort by
/// expanded IRI; within a subject the type triple comes first, then label,
/// then subClassOf, then remaining predicates by expanded IRI; objects sort
/// by their rendered form. Output is LF-terminated with no trailing spaces,
/// so equal documents serialize to equal bytes.
pub fn serialize_turtle(doc: &OwlDocument, prefixes: &PrefixMap) -> String {
    struct Line {
        subject: String,
        rank: u8,
        predicate: String,
        object: String,
        text: String,
    }

    let mut lines: Vec<Line> = Vec::with_capacity(doc.axioms.len());
    let mut push = |subject: &str, predicate: &str, object: String| {
        let rank = match predicate {
            RDF_TYPE => 0,
            RDFS_LABEL => 1,
            RDFS_SUB_CLASS_OF => 2,
            _ => 3,
        };
        let rendered_predicate =
            if predicate == RDF_TYPE { "a".to_string() } else { render_iri(prefixes, predicate) };
        let text = format!("{} {rendered_predicate} {object} .", render_iri(prefixes, subject));
        lines.push(Line {
            subject: subject.to_string(),
            rank,
            predicate: predicate.to_string(),
            object,
            text,
        });
    };
    for axiom in &doc.axioms {
        match axiom {
            Axiom::ClassDeclaration(subject) => {
                push(subject, RDF_TYPE, render_iri(prefixes, OWL_CLASS));
            }
            Axiom::Label { subject, text } => {
                push(subject, RDFS_LABEL, format!("\"{}\"", escape_literal(text)));
            }
            Axiom::SubClassOf { sub, sup } => {
                push(sub, RDFS_SUB_CLASS_OF, render_iri(prefixes, sup));
            }
            Axiom::Annotation { subject, property, value } => {
                push(subject, property, format!("\"{}\"", escape_literal(value)));
            }
            Axiom::Relation { subject, property, object } => {
                push(subject, property, render_iri(prefixes, object));
            }
        }
    }
    lines.sort_by(|a, b| {
        (&a.subject, a.rank, &a.predicate, &a.object)
            .cmp(&(&b.subject, b.rank, &b.predicate, &b.object))
    });
    lines.dedup_by(|a, b| a.text == b.text);

    let mut out = String::new();
    for (prefix, base) in prefixes.iter() {
        out.push_str(&format!("@prefix {prefix}: <{base}> .\n"));
    }
    if !lines.is_empty() {
        if !out.is_empty() {
            out.push('\n');
        }
        for line in &lines {
            out.push_str(&line.text);
            out.push('\n');
        }
    }
    out
}

fn reference_cell(graph: &KnowledgeGraph, prefixes: &PrefixMap, iri: &str) -> String {
    // Prefer the recycled identifier so downstream tools see the shared
    // CURIE; minted-only entities fall back to their own compacted IRI.
    let mut curies: Vec<&str> = graph
        .neighbors(iri, &EdgeKind::HasId, Direction::Out)
        .map(|nodes| nodes.iter().map(|n| n.label.as_str()).collect())
        .unwrap_or_default();
    curies.sort();
    match curies.first() {
        Some(curie) => curie.to_string(),
        None => prefixes.shrink_cell(iri),
    }
}

fn parent_cell(graph: &KnowledgeGraph, prefixes: &PrefixMap, iri: &str) -> String {
    let mut parents: Vec<&str> = graph
        .neighbors(iri, &EdgeKind::ParentOf, Direction::In)
        .map(|nodes| nodes.iter().map(|n| n.iri.as_str()).collect())
        .unwrap_or_default();
    parents.sort();
    match parents.first() {
        Some(parent) => prefixes.shrink_cell(parent),
        None => String::new(),
    }
}

fn annotation_block(mut refs: Vec<Vec<String>>, width: usize) -> Vec<Vec<String>> {
    for row in &mut refs {
        row.sort();
        row.resize(width, String::new());
    }
    refs
}

/// Derives the three template layers from a graph.
///
/// Layer 1 is one declaration sheet per built-in node kind (always emitted,
/// even when empty) plus one per extension kind present. Layer 2 places
/// foods under groups and flavonoids under subclasses with their disease
/// associations; layer 3 attaches the contained flavonoids to each food.
/// Every sheet is sorted by subject IRI, so the output is deterministic.
pub fn graph_to_templates(
    graph: &KnowledgeGraph,
    prefixes: &PrefixMap,
    namespace: &str,
) -> Vec<TemplateSheet> {
    let mut sheets = Vec::new();

    let mut kinds: Vec<NodeKind> =
        NodeKind::builtin_names().iter().map(|n| NodeKind::parse(n)).collect();
    let extras: BTreeSet<NodeKind> = graph
        .nodes()
        .map(|n| n.kind.clone())
        .filter(|k| !NodeKind::builtin_names().contains(&k.name()))
        .collect();
    kinds.extend(extras);
    for kind in kinds {
        let rows: Vec<Vec<String>> = graph
            .nodes_of_kind(&kind)
            .map(|n| vec![prefixes.shrink_cell(&n.iri), n.label.clone()])
            .collect();
        sheets.push(TemplateSheet {
            name: format!("layer1_{kind}"),
            headers: vec!["ID".to_string(), "LABEL".to_string()],
            directives: vec!["ID".to_string(), "LABEL".to_string()],
            rows,
        });
    }

    let foods: Vec<&crate::graph::Node> = graph.nodes_of_kind(&NodeKind::Food).collect();
    let flavonoids: Vec<&crate::graph::Node> = graph.nodes_of_kind(&NodeKind::Flavonoid).collect();

    sheets.push(TemplateSheet {
        name: "layer2_food".to_string(),
        headers: vec!["ID".to_string(), "LABEL".to_string(), "SC %".to_string()],
        directives: vec!["ID".to_string(), "LABEL".to_string(), "SC %".to_string()],
        rows: foods
            .iter()
            .map(|n| {
                vec![
                    prefixes.shrink_cell(&n.iri),
                    n.label.clone(),
                    parent_cell(graph, prefixes, &n.iri),
                ]
            })
            .collect(),
    });

    let disease_property = format!("A {}", prefixes.shrink_cell(&format!("{namespace}has-associated-disease")));
    let disease_refs: Vec<Vec<String>> = flavonoids
        .iter()
        .map(|n| {
            graph
                .neighbors(&n.iri, &EdgeKind::HasAssociatedDisease, Direction::Out)
                .map(|nodes| {
                    nodes.iter().map(|d| reference_cell(graph, prefixes, &d.iri)).collect()
                })
                .unwrap_or_default()
        })
        .collect();
    let disease_width = disease_refs.iter().map(Vec::len).max().unwrap_or(0);
    let disease_refs = annotation_block(disease_refs, disease_width);
    let mut headers = vec!["ID".to_string(), "LABEL".to_string(), "SC %".to_string()];
    headers.extend(std::iter::repeat(disease_property.clone()).take(disease_width));
    sheets.push(TemplateSheet {
        name: "layer2_flavonoid".to_string(),
        headers: headers.clone(),
        directives: headers,
        rows: flavonoids
            .iter()
            .zip(disease_refs)
            .map(|(n, refs)| {
                let mut row = vec![
                    prefixes.shrink_cell(&n.iri),
                    n.label.clone(),
                    parent_cell(graph, prefixes, &n.iri),
                ];
                row.extend(refs);
                row
            })
            .collect(),
    });

    let mut contained: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let derived = graph.derived_contains();
    for (food, flavonoid, _) in &derived {
        if let Some(node) = graph.node(food) {
            contained
                .entry(node.iri.as_str())
                .or_default()
                .push(reference_cell(graph, prefixes, flavonoid));
        }
    }
    let contains_refs: Vec<Vec<String>> = foods
        .iter()
        .map(|n| contained.get(n.iri.as_str()).cloned().unwrap_or_default())
        .collect();
    let contains_width = contains_refs.iter().map(Vec::len).max().unwrap_or(0);
    let contains_refs = annotation_block(contains_refs, contains_width);
    let contains_property =
        format!("A {}", prefixes.shrink_cell(&format!("{namespace}contains")));
    let mut headers = vec!["ID".to_string(), "LABEL".to_string()];
    headers.extend(std::iter::repeat(contains_property.clone()).take(contains_width));
    sheets.push(TemplateSheet {
        name: "layer3_food_flavonoids".to_string(),
        headers: headers.clone(),
        directives: headers,
        rows: foods
            .iter()
            .zip(contains_refs)
            .map(|(n, refs)| {
                let mut row = vec![prefixes.shrink_cell(&n.iri), n.label.clone()];
                row.extend(refs);
                row
            })
            .collect(),
    });

    sheets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_prefixes() -> PrefixMap {
        PrefixMap::from_pairs([
            ("ff", "http://example.org/ff/"),
            ("owl", "http://www.w3.org/2002/07/owl#"),
            ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
            ("CHEBI", "http://purl.obolibrary.org/obo/CHEBI_"),
            ("DOID", "http://purl.obolibrary.org/obo/DOID_"),
        ])
        .unwrap()
    }

    #[test]
    fn prefix_map_round_trips_and_rejects_duplicates() {
        let map = PrefixMap::from_tsv("# prefixes\nff\thttp://example.org/ff/\n").unwrap();
        assert_eq!(map.expand("ff:apple").as_deref(), Some("http://example.org/ff/apple"));
        assert_eq!(map.shrink_cell("http://example.org/ff/apple"), "ff:apple");
        assert!(matches!(
            PrefixMap::from_tsv("ff\thttp://a/\nff\thttp://b/\n"),
            Err(TemplateError::DuplicatePrefix { .. })
        ));
        assert!(matches!(
            PrefixMap::from_tsv("only-one-field\n"),
            Err(TemplateError::BadPrefixLine { line: 1 })
        ));
    }

    #[test]
    fn shrink_prefers_longest_base_then_smallest_prefix() {
        let map = PrefixMap::from_pairs([
            ("obo", "http://purl.obolibrary.org/obo/"),
            ("CHEBI", "http://purl.obolibrary.org/obo/CHEBI_"),
            ("zz", "http://purl.obolibrary.org/obo/CHEBI_"),
        ])
        .unwrap();
        assert_eq!(map.shrink_cell("http://purl.obolibrary.org/obo/CHEBI_15864"), "CHEBI:15864");
        assert_eq!(map.shrink_name("http://purl.obolibrary.org/obo/CHEBI_15864").unwrap(), "CHEBI:15864");
    }

    #[test]
    fn expand_passes_absolute_iris_and_ignores_unknown_prefixes() {
        let map = test_prefixes();
        assert_eq!(map.expand("http://other.org/x").as_deref(), Some("http://other.org/x"));
        assert_eq!(map.expand("nope:123"), None);
        assert_eq!(map.expand("plain words"), None);
    }

    #[test]
    fn directives_are_case_sensitive() {
        assert_eq!(Directive::parse("ID"), Some(Directive::Id));
        assert_eq!(Directive::parse("LABEL"), Some(Directive::Label));
        assert_eq!(Directive::parse("TYPE"), Some(Directive::Type));
        assert_eq!(Directive::parse("SC %"), Some(Directive::SubClassOf("%".to_string())));
        assert_eq!(Directive::parse("A ff:contains"), Some(Directive::Annotation("ff:contains".to_string())));
        assert_eq!(Directive::parse("ignore"), Some(Directive::Ignore));
        assert_eq!(Directive::parse(""), Some(Directive::Ignore));
        for bad in ["Id", "id", "Label", "IGNORE", "SC", "SC x", "A ", "sc %"] {
            assert_eq!(Directive::parse(bad), None, "{bad:?} should not parse");
        }
    }

    #[test]
    fn expand_produces_the_expected_axioms() {
        let sheet = parse_template(
            "id,name,group,xref\nID,LABEL,SC %,A ff:has-id\nff:apple,Apple,ff:fruits,CHEBI:2\n",
            "demo",
        )
        .unwrap();
        let doc = expand_template(&sheet, &test_prefixes()).unwrap();
        let expected: BTreeSet<Axiom> = [
            Axiom::ClassDeclaration("http://example.org/ff/apple".into()),
            Axiom::Label { subject: "http://example.org/ff/apple".into(), text: "Apple".into() },
            Axiom::SubClassOf {
                sub: "http://example.org/ff/apple".into(),
                sup: "http://example.org/ff/fruits".into(),
            },
            Axiom::Annotation {
                subject: "http://example.org/ff/apple".into(),
                property: "http://example.org/ff/has-id".into(),
                value: "CHEBI:2".into(),
            },
            Axiom::Relation {
                subject: "http://example.org/ff/apple".into(),
                property: "http://example.org/ff/has-id".into(),
                object: "http://purl.obolibrary.org/obo/CHEBI_2".into(),
            },
        ]
        .into();
        assert_eq!(doc.axioms, expected);
    }

    #[test]
    fn annotation_cells_with_plain_text_stay_annotations() {
        let sheet = parse_template(
            "id,note\nID,A ff:note\nff:apple,\"crisp, raw\"\nff:pear,nope:1\n",
            "demo",
        )
        .unwrap();
        let doc = expand_template(&sheet, &test_prefixes()).unwrap();
        assert!(doc.axioms.iter().all(|a| !matches!(a, Axiom::Relation { .. })));
        assert_eq!(
            doc.axioms.iter().filter(|a| matches!(a, Axiom::Annotation { .. })).count(),
            2
        );
    }

    #[test]
    fn id_cells_must_resolve_and_unknown_prefixes_are_named() {
        let sheet =
            parse_template("id\nID\nnope:apple\n", "demo").unwrap();
        match expand_template(&sheet, &test_prefixes()).unwrap_err() {
            TemplateError::UnknownPrefixInCell { prefix, row, .. } => {
                assert_eq!(prefix, "nope");
                assert_eq!(row, 3);
            }
            other => panic!("unexpected error: {other}"),
        }
        let sheet = parse_template("id\nID\nbare\n", "demo").unwrap();
        assert!(matches!(
            expand_template(&sheet, &test_prefixes()),
            Err(TemplateError::Unresolvable { .. })
        ));
    }

    #[test]
    fn empty_id_cell_errors_with_its_row_number() {
        let sheet =
            parse_template("id,name\nID,LABEL\nff:a,First\n,Second\n", "demo").unwrap();
        match expand_template(&sheet, &test_prefixes()).unwrap_err() {
            TemplateError::EmptyId { row, .. } => assert_eq!(row, 4),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn exactly_one_id_column_is_required() {
        assert!(matches!(
            parse_template("a,b\nLABEL,LABEL\n", "demo"),
            Err(TemplateError::NoIdColumn { .. })
        ));
        assert!(matches!(
            parse_template("a,b\nID,ID\n", "demo"),
            Err(TemplateError::MultipleIdColumns { .. })
        ));
        assert!(matches!(
            parse_template("a,b\nID,WAT\n", "demo"),
            Err(TemplateError::UnknownDirective { column: 2, .. })
        ));
    }

    #[test]
    fn type_cells_accept_the_three_spellings() {
        let sheet = parse_template(
            "id,t\nID,TYPE\nff:a,\nff:b,class\nff:c,owl:Class\n",
            "demo",
        )
        .unwrap();
        assert_eq!(expand_template(&sheet, &test_prefixes()).unwrap().len(), 3);
        let sheet = parse_template("id,t\nID,TYPE\nff:a,property\n", "demo").unwrap();
        match expand_template(&sheet, &test_prefixes()).unwrap_err() {
            TemplateError::BadType { row, text, .. } => {
                assert_eq!(row, 3);
                assert_eq!(text, "property");
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn merge_is_union_and_rejects_label_conflicts() {
        let prefixes = test_prefixes();
        let a = expand_template(
            &parse_template("id,n\nID,LABEL\nff:x,One\n", "a").unwrap(),
            &prefixes,
        )
        .unwrap();
        let b = expand_template(
            &parse_template("id,n\nID,LABEL\nff:y,Two\n", "b").unwrap(),
            &prefixes,
        )
        .unwrap();
        let merged = merge_documents(&a, &b).unwrap();
        assert_eq!(merged.len(), a.len() + b.len());
        assert_eq!(merge_documents(&merged, &a).unwrap(), merged);

        let conflicting = expand_template(
            &parse_template("id,n\nID,LABEL\nff:x,Other\n", "c").unwrap(),
            &prefixes,
        )
        .unwrap();
        match merge_documents(&a, &conflicting).unwrap_err() {
            TemplateError::LabelConflict { subject, a, b } => {
                assert_eq!(subject, "http://example.org/ff/x");
                assert_eq!((a.as_str(), b.as_str()), ("One", "Other"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn turtle_serialization_is_frozen() {
        let mut doc = OwlDocument::new();
        let apple = "http://example.org/ff/apple".to_string();
        doc.axioms.insert(Axiom::ClassDeclaration(apple.clone()));
        doc.axioms.insert(Axiom::Label { subject: apple.clone(), text: "Apple".into() });
        doc.axioms.insert(Axiom::SubClassOf {
            sub: apple.clone(),
            sup: "http://example.org/ff/fruits".into(),
        });
        doc.axioms.insert(Axiom::Relation {
            subject: apple.clone(),
            property: "http://example.org/ff/contains".into(),
            object: "http://purl.obolibrary.org/obo/CHEBI_16243".into(),
        });
        doc.axioms.insert(Axiom::Annotation {
            subject: apple,
            property: "http://example.org/ff/note".into(),
            value: "raw, with \"skin\"\n".into(),
        });
        let turtle = serialize_turtle(&doc, &test_prefixes());
        let expected = "\
@prefix CHEBI: <http://purl.obolibrary.org/obo/CHEBI_> .
@prefix DOID: <http://purl.obolibrary.org/obo/DOID_> .
@prefix ff: <http://example.org/ff/> .
@prefix owl: <http://www.w3.org/2002/07/owl#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .

ff:apple a owl:Class .
ff:apple rdfs:label \"Apple\" .
ff:apple rdfs:subClassOf ff:fruits .
ff:apple ff:contains CHEBI:16243 .
ff:apple ff:note \"raw, with \\\"skin\\\"\\n\" .
";
        assert_eq!(turtle, expected);
    }

    #[test]
    fn turtle_falls_back_to_absolute_for_awkward_locals() {
        let mut doc = OwlDocument::new();
        doc.axioms
            .insert(Axiom::ClassDeclaration("http://example.org/ff/%28%2B%29-catechin".into()));
        let turtle = serialize_turtle(&doc, &test_prefixes());
        assert!(turtle.contains("<http://example.org/ff/%28%2B%29-catechin> a owl:Class .\n"));
        assert!(!turtle.contains("ff:%28"));
    }

    #[test]
    fn sheet_csv_round_trips() {
        let sheet = TemplateSheet {
            name: "demo".to_string(),
            headers: vec!["ID".into(), "LABEL".into()],
            directives: vec!["ID".into(), "LABEL".into()],
            rows: vec![vec!["ff:a".into(), "With, comma".into()]],
        };
        let parsed = parse_template(&sheet.to_csv(), "demo").unwrap();
        assert_eq!(parsed, sheet);
    }

    #[test]
    fn graph_templates_cover_every_builtin_kind() {
        let graph = crate::graph::tests::fixture_graph();
        let prefixes = test_prefixes();
        let sheets = graph_to_templates(&graph, &prefixes, "http://example.org/ff/");
        let names: Vec<&str> = sheets.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "layer1_food_group",
                "layer1_food",
                "layer1_composition",
                "layer1_flavonoid_subclass",
                "layer1_flavonoid",
                "layer1_disease",
                "layer1_drug",
                "layer1_clinical_trial",
                "layer1_identifier",
                "layer2_food",
                "layer2_flavonoid",
                "layer3_food_flavonoids",
            ]
        );
        // Fixture has no custom kinds, and every sheet is parseable again.
        for sheet in &sheets {
            let reparsed = parse_template(&sheet.to_csv(), &sheet.name).unwrap();
            assert_eq!(&reparsed, sheet);
        }
        let layer2 = sheets.iter().find(|s| s.name == "layer2_flavonoid").unwrap();
        // Quercetin carries one disease association, so one A column.
        assert_eq!(layer2.directives.iter().filter(|d| d.starts_with("A ")).count(), 1);
        assert_eq!(layer2.directives[3], "A ff:has-associated-disease");
        let quercetin = layer2.rows.iter().find(|r| r[1] == "Quercetin").unwrap();
        assert_eq!(quercetin[2], "ff:flavonols");
        assert_eq!(quercetin[3], "DOID:219");
    }

    #[test]
    fn empty_graph_still_emits_every_builtin_sheet() {
        let graph = crate::graph::KnowledgeGraph::from_parts(Vec::new(), Vec::new());
        let sheets = graph_to_templates(&graph, &test_prefixes(), "http://example.org/ff/");
        assert_eq!(sheets.len(), 12);
        assert!(sheets.iter().all(|s| s.rows.is_empty()));
        for sheet in &sheets {
            assert_eq!(parse_template(&sheet.to_csv(), &sheet.name).unwrap(), *sheet);
        }
    }

    #[test]
    fn graph_templates_compile_and_serialize() {
        let graph = crate::graph::tests::fixture_graph();
        let prefixes = test_prefixes();
        let sheets = graph_to_templates(&graph, &prefixes, "http://example.org/ff/");
        let doc = compile_sheets(&sheets, &prefixes).unwrap();
        let turtle = serialize_turtle(&doc, &prefixes);
        assert!(turtle.contains("ff:quercetin a owl:Class .\n"));
        assert!(turtle.contains("ff:quercetin rdfs:subClassOf ff:flavonols .\n"));
        assert!(turtle
            .contains("ff:quercetin ff:has-associated-disease DOID:219 .\n"));
        assert!(turtle.ends_with(".\n"));
        assert!(turtle.lines().all(|l| l == l.trim_end()));
    }
}
