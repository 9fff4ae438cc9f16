//! Structural checks over graphs and compiled ontology documents.
//!
//! Error-level findings mean the artifact breaks an invariant the rest of
//! the pipeline relies on; warnings flag things a curator should look at.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::graph::{EdgeKind, KnowledgeGraph, NodeKind};
use crate::normalize::{EntityKind, Normalizer};
use crate::recycle::{MappingResult, MatchOutcome};
use crate::templater::{Axiom, OwlDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl Severity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingCode {
    Cycle,
    DanglingEdge,
    DuplicateId,
    MultipleParents,
    LabelConflict,
    UnknownSubclass,
    OrphanNode,
    RedundantEdge,
    UnmappedTerm,
}

impl FindingCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FindingCode::Cycle => "CYCLE",
            FindingCode::DanglingEdge => "DANGLING_EDGE",
            FindingCode::DuplicateId => "DUPLICATE_ID",
            FindingCode::MultipleParents => "MULTIPLE_PARENTS",
            FindingCode::LabelConflict => "LABEL_CONFLICT",
            FindingCode::UnknownSubclass => "UNKNOWN_SUBCLASS",
            FindingCode::OrphanNode => "ORPHAN_NODE",
            FindingCode::RedundantEdge => "REDUNDANT_EDGE",
            FindingCode::UnmappedTerm => "UNMAPPED_TERM",
        }
    }

    pub fn severity(&self) -> Severity {
        match self {
            FindingCode::Cycle
            | FindingCode::DanglingEdge
            | FindingCode::DuplicateId
            | FindingCode::MultipleParents
            | FindingCode::LabelConflict
            | FindingCode::UnknownSubclass => Severity::Error,
            FindingCode::OrphanNode
            | FindingCode::RedundantEdge
            | FindingCode::UnmappedTerm => Severity::Warning,
        }
    }
}

impl PartialOrd for FindingCode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

// Findings sort by the code column as written, not declaration order.
impl Ord for FindingCode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    pub code: FindingCode,
    pub severity: Severity,
    pub subject: String,
    pub message: String,
}

impl Finding {
    /// Severity is a function of the code; there is no way to build a
    /// warning-level CYCLE.
    pub fn new(code: FindingCode, subject: impl Into<String>, message: impl Into<String>) -> Finding {
        Finding { code, severity: code.severity(), subject: subject.into(), message: message.into() }
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

const MAPPABLE: [NodeKind; 6] = [
    NodeKind::FoodGroup,
    NodeKind::Food,
    NodeKind::FlavonoidSubclass,
    NodeKind::Flavonoid,
    NodeKind::Disease,
    NodeKind::Drug,
];

/// Structural audit of a graph, including graphs reloaded from hand-edited
/// exports. Findings come back sorted by (code, subject).
pub fn check_graph(
    graph: &KnowledgeGraph,
    normalizer: &Normalizer,
    extra_subclasses: &[String],
) -> Vec<Finding> {
    let mut findings = Vec::new();

    for members in graph.parent_cycles() {
        findings.push(Finding::new(
            FindingCode::Cycle,
            members[0].clone(),
            format!("parent_of cycle among: {}", members.join(", ")),
        ));
    }

    for edge in graph.edges() {
        for (endpoint, which) in [(&edge.source, "source"), (&edge.target, "target")] {
            if graph.node(endpoint).is_none() {
                findings.push(Finding::new(
                    FindingCode::DanglingEdge,
                    endpoint.clone(),
                    format!(
                        "{} edge {} -> {} references a missing {which} node",
                        edge.kind.name(),
                        edge.source,
                        edge.target
                    ),
                ));
            }
        }
    }

    let mut parents: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for edge in graph.edges().iter().filter(|e| e.kind == EdgeKind::ParentOf) {
        parents.entry(edge.target.as_str()).or_default().insert(edge.source.as_str());
    }
    for node in graph.nodes() {
        if node.kind != NodeKind::Food && node.kind != NodeKind::Flavonoid {
            continue;
        }
        match parents.get(node.iri.as_str()) {
            Some(list) if list.len() > 1 => {
                let joined = list.iter().copied().collect::<Vec<_>>().join(", ");
                findings.push(Finding::new(
                    FindingCode::MultipleParents,
                    node.iri.clone(),
                    format!("{} has {} parents: {joined}", node.kind.name(), list.len()),
                ));
            }
            Some(_) => {}
            None => {
                findings.push(Finding::new(
                    FindingCode::OrphanNode,
                    node.iri.clone(),
                    format!("{} has no parent_of edge", node.kind.name()),
                ));
            }
        }
    }

    // An edge is redundant when the remaining parent edges already imply it.
    let parent_edges: Vec<(&str, &str)> = graph
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::ParentOf)
        .map(|e| (e.source.as_str(), e.target.as_str()))
        .collect();
    for &(u, v) in &parent_edges {
        if reachable_without(&parent_edges, u, v) {
            findings.push(Finding::new(
                FindingCode::RedundantEdge,
                format!("{u} -> {v}"),
                "parent_of edge implied by the remaining parent_of edges".to_string(),
            ));
        }
    }

    let mut known: BTreeSet<String> = BTreeSet::new();
    for display in crate::graph::SUBCLASS_SEED.iter().copied().map(str::to_string).chain(extra_subclasses.iter().cloned())
    {
        if let Ok(key) = normalizer.canonicalize(&display, EntityKind::FlavonoidSubclass) {
            known.insert(key);
        }
    }
    for node in graph.nodes_of_kind(&NodeKind::FlavonoidSubclass) {
        let recognized = normalizer
            .canonicalize(&node.label, EntityKind::FlavonoidSubclass)
            .map(|key| known.contains(&key))
            .unwrap_or(false);
        if !recognized {
            findings.push(Finding::new(
                FindingCode::UnknownSubclass,
                node.iri.clone(),
                format!("label {:?} is not a recognized flavonoid subclass", node.label),
            ));
        }
    }

    let mapped: HashSet<&str> = graph
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::HasId)
        .map(|e| e.source.as_str())
        .collect();
    for node in graph.nodes() {
        if MAPPABLE.contains(&node.kind) && !mapped.contains(node.iri.as_str()) {
            findings.push(Finding::new(
                FindingCode::UnmappedTerm,
                node.iri.clone(),
                format!("{} carries no recycled identifier (has_id) edge", node.kind.name()),
            ));
        }
    }

    findings.sort();
    findings
}

fn reachable_without(edges: &[(&str, &str)], from: &str, to: &str) -> bool {
    let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for &(s, t) in edges {
        if s == from && t == to {
            continue;
        }
        adjacency.entry(s).or_default().push(t);
    }
    let mut stack = vec![from];
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    while let Some(node) = stack.pop() {
        for &next in adjacency.get(node).map(Vec::as_slice).unwrap_or(&[]) {
            if next == to {
                return true;
            }
            if seen.insert(next) {
                stack.push(next);
            }
        }
    }
    false
}

/// Checks a compiled document: conflicting labels are errors, declared
/// classes that never participate in any axiom are warnings.
pub fn check_ontology(doc: &OwlDocument) -> Vec<Finding> {
    let mut findings = Vec::new();

    let mut labels: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut declared: BTreeSet<&str> = BTreeSet::new();
    let mut referenced: BTreeSet<&str> = BTreeSet::new();
    for axiom in &doc.axioms {
        match axiom {
            Axiom::ClassDeclaration(iri) => {
                declared.insert(iri);
            }
            Axiom::Label { subject, text } => {
                labels.entry(subject).or_default().insert(text);
            }
            Axiom::SubClassOf { sub, sup } => {
                referenced.insert(sub);
                referenced.insert(sup);
            }
            Axiom::Annotation { subject, .. } => {
                referenced.insert(subject);
            }
            Axiom::Relation { subject, object, .. } => {
                referenced.insert(subject);
                referenced.insert(object);
            }
        }
    }

    for (subject, texts) in &labels {
        if texts.len() > 1 {
            let joined = texts.iter().map(|t| format!("{t:?}")).collect::<Vec<_>>().join(", ");
            findings.push(Finding::new(
                FindingCode::LabelConflict,
                subject.to_string(),
                format!("class labelled {} times: {joined}", texts.len()),
            ));
        }
    }
    for iri in declared.difference(&referenced) {
        findings.push(Finding::new(
            FindingCode::OrphanNode,
            iri.to_string(),
            "class declared but never placed in the hierarchy or annotated".to_string(),
        ));
    }

    findings.sort();
    findings
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    pub kind: String,
    pub total: usize,
    pub mapped: usize,
}

impl CoverageRow {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.mapped as f64 / self.total as f64
        }
    }
}

/// Per-kind recycling coverage: how many canonical entities got a vocabulary
/// identifier instead of a minted IRI.
pub fn coverage_stats(mappings: &[MappingResult]) -> Vec<CoverageRow> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for mapping in mappings {
        let entry = counts.entry(mapping.kind.as_str()).or_insert((0, 0));
        entry.0 += 1;
        if mapping.outcome != MatchOutcome::Minted {
            entry.1 += 1;
        }
    }
    let mut rows: Vec<CoverageRow> = counts
        .into_iter()
        .map(|(kind, (total, mapped))| CoverageRow { kind: kind.to_string(), total, mapped })
        .collect();
    let total: usize = rows.iter().map(|r| r.total).sum();
    let mapped: usize = rows.iter().map(|r| r.mapped).sum();
    rows.push(CoverageRow { kind: "overall".to_string(), total, mapped });
    rows
}

pub fn coverage_to_tsv(rows: &[CoverageRow]) -> String {
    let mut out = String::from("kind\ttotal\tmapped\tfraction\n");
    for row in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", row.kind, row.total, row.mapped, row.fraction()));
    }
    out
}

fn sanitize(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

pub fn findings_to_tsv(findings: &[Finding]) -> String {
    let mut out = String::from("code\tseverity\tsubject\tmessage\n");
    for finding in findings {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            finding.code,
            finding.severity.as_str(),
            sanitize(&finding.subject),
            sanitize(&finding.message),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{import_graph_csv, Edge, KnowledgeGraph, Node, Props};

    fn kg(nodes: &[(&str, &str, &str)], edges: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let nodes = nodes
            .iter()
            .map(|(iri, kind, label)| Node {
                iri: iri.to_string(),
                kind: NodeKind::parse(kind),
                label: label.to_string(),
                props: Props::new(),
            })
            .collect();
        let edges = edges
            .iter()
            .map(|(s, k, t)| Edge {
                source: s.to_string(),
                kind: EdgeKind::parse(k),
                target: t.to_string(),
                props: Props::new(),
            })
            .collect();
        KnowledgeGraph::from_parts(nodes, edges)
    }

    fn codes(findings: &[Finding]) -> Vec<&'static str> {
        findings.iter().map(|f| f.code.as_str()).collect()
    }

    #[test]
    fn severity_is_derived_from_the_code() {
        let errors = [
            FindingCode::Cycle,
            FindingCode::DanglingEdge,
            FindingCode::DuplicateId,
            FindingCode::MultipleParents,
            FindingCode::LabelConflict,
            FindingCode::UnknownSubclass,
        ];
        let warnings =
            [FindingCode::OrphanNode, FindingCode::RedundantEdge, FindingCode::UnmappedTerm];
        for code in errors {
            assert_eq!(Finding::new(code, "s", "m").severity, Severity::Error);
        }
        for code in warnings {
            assert_eq!(Finding::new(code, "s", "m").severity, Severity::Warning);
        }
    }

    #[test]
    fn cycle_reported_once_at_smallest_member() {
        let graph = kg(
            &[("http://x/a", "food_group", "a"), ("http://x/b", "food_group", "b")],
            &[("http://x/a", "parent_of", "http://x/b"), ("http://x/b", "parent_of", "http://x/a")],
        );
        let findings = check_graph(&graph, &Normalizer::new(), &[]);
        let cycles: Vec<&Finding> =
            findings.iter().filter(|f| f.code == FindingCode::Cycle).collect();
        assert_eq!(cycles.len(), 1);
        assert_eq!(cycles[0].subject, "http://x/a");
        assert!(cycles[0].message.contains("http://x/b"));
    }

    #[test]
    fn dangling_edge_names_the_missing_endpoint() {
        let graph = kg(
            &[("http://x/g", "food_group", "g")],
            &[("http://x/g", "parent_of", "http://x/gone")],
        );
        let findings = check_graph(&graph, &Normalizer::new(), &[]);
        let dangling: Vec<&Finding> =
            findings.iter().filter(|f| f.code == FindingCode::DanglingEdge).collect();
        assert_eq!(dangling.len(), 1);
        assert_eq!(dangling[0].subject, "http://x/gone");
        assert_eq!(dangling[0].severity, Severity::Error);
    }

    #[test]
    fn multiple_parents_orphan_and_redundant() {
        // g1 -> g2 -> f plus the shortcut g1 -> f: the shortcut is redundant
        // and f gains a second parent. g2's own parent edge keeps it covered.
        let graph = kg(
            &[
                ("http://x/f", "food", "f"),
                ("http://x/g1", "food_group", "g1"),
                ("http://x/g2", "food_group", "g2"),
                ("http://x/lone", "flavonoid", "lone"),
            ],
            &[
                ("http://x/g1", "parent_of", "http://x/g2"),
                ("http://x/g2", "parent_of", "http://x/f"),
                ("http://x/g1", "parent_of", "http://x/f"),
            ],
        );
        let findings = check_graph(&graph, &Normalizer::new(), &[]);
        let multiple: Vec<&Finding> =
            findings.iter().filter(|f| f.code == FindingCode::MultipleParents).collect();
        assert_eq!(multiple.len(), 1);
        assert_eq!(multiple[0].subject, "http://x/f");
        let redundant: Vec<&Finding> =
            findings.iter().filter(|f| f.code == FindingCode::RedundantEdge).collect();
        assert_eq!(redundant.len(), 1);
        assert_eq!(redundant[0].subject, "http://x/g1 -> http://x/f");
        assert_eq!(redundant[0].severity, Severity::Warning);
        let orphans: Vec<&Finding> =
            findings.iter().filter(|f| f.code == FindingCode::OrphanNode).collect();
        assert_eq!(orphans.len(), 1);
        assert_eq!(orphans[0].subject, "http://x/lone");
    }

    #[test]
    fn unknown_subclass_respects_extras() {
        let graph = kg(&[("http://x/w", "flavonoid_subclass", "Weirdones")], &[]);
        let normalizer = Normalizer::new();
        let findings = check_graph(&graph, &normalizer, &[]);
        assert!(findings.iter().any(|f| f.code == FindingCode::UnknownSubclass));
        let findings = check_graph(&graph, &normalizer, &["Weirdones".to_string()]);
        assert!(findings.iter().all(|f| f.code != FindingCode::UnknownSubclass));
    }

    #[test]
    fn unmapped_term_only_for_mappable_kinds() {
        let graph = kg(
            &[
                ("http://x/d", "disease", "d"),
                ("http://x/c", "composition", "c"),
                ("http://x/t", "clinical_trial", "t"),
            ],
            &[],
        );
        let findings = check_graph(&graph, &Normalizer::new(), &[]);
        assert_eq!(codes(&findings), vec!["UNMAPPED_TERM"]);
        assert_eq!(findings[0].subject, "http://x/d");
    }

    #[test]
    fn import_findings_plus_checks_sort_together() {
        let nodes_csv = "iri,kind,label\nhttp://x/a,food,A\nhttp://x/a,food,B\n";
        let edges_csv = "source,kind,target,props_json\nhttp://x/a,parent_of,http://x/zzz,{}\n";
        let (graph, mut findings) = import_graph_csv(nodes_csv, edges_csv).unwrap();
        findings.extend(check_graph(&graph, &Normalizer::new(), &[]));
        findings.sort();
        let seen = codes(&findings);
        assert_eq!(seen, vec!["DANGLING_EDGE", "LABEL_CONFLICT", "ORPHAN_NODE", "UNMAPPED_TERM"]);
        assert!(has_errors(&findings));
    }

    #[test]
    fn ontology_label_conflict_and_orphan() {
        let mut doc = OwlDocument::new();
        doc.axioms.insert(Axiom::ClassDeclaration("http://x/a".into()));
        doc.axioms.insert(Axiom::Label { subject: "http://x/a".into(), text: "one".into() });
        doc.axioms.insert(Axiom::Label { subject: "http://x/a".into(), text: "two".into() });
        doc.axioms.insert(Axiom::SubClassOf { sub: "http://x/a".into(), sup: "http://x/b".into() });
        doc.axioms.insert(Axiom::ClassDeclaration("http://x/alone".into()));
        let findings = check_ontology(&doc);
        assert_eq!(codes(&findings), vec!["LABEL_CONFLICT", "ORPHAN_NODE"]);
        assert_eq!(findings[0].subject, "http://x/a");
        assert_eq!(findings[1].subject, "http://x/alone");
    }

    #[test]
    fn tsv_sanitizes_tabs_and_newlines() {
        let findings = vec![Finding::new(
            FindingCode::LabelConflict,
            "http://x/a",
            "labels \"one\tand\" vs \"two\nand\"",
        )];
        let tsv = findings_to_tsv(&findings);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "code\tseverity\tsubject\tmessage");
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split('\t').count(), 4);
    }

    #[test]
    fn coverage_rows_count_non_minted() {
        use crate::recycle::MappingResult;
        let mk = |kind: EntityKind, key: &str, outcome: MatchOutcome| MappingResult {
            kind,
            entity_key: key.to_string(),
            outcome,
            iri_or_curie: "X:1".to_string(),
            vocabulary: None,
            match_quality: outcome.quality(),
        };
        let rows = coverage_stats(&[
            mk(EntityKind::Flavonoid, "a", MatchOutcome::ExactLabel),
            mk(EntityKind::Flavonoid, "b", MatchOutcome::Minted),
            mk(EntityKind::Disease, "c", MatchOutcome::Synonym),
        ]);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].kind, "disease");
        assert_eq!((rows[0].total, rows[0].mapped), (1, 1));
        assert_eq!(rows[1].kind, "flavonoid");
        assert_eq!((rows[1].total, rows[1].mapped), (2, 1));
        assert_eq!(rows[2].kind, "overall");
        assert_eq!(rows[2].fraction(), 2.0 / 3.0);
        assert_eq!(coverage_stats(&[]).last().unwrap().fraction(), 1.0);
    }
}
