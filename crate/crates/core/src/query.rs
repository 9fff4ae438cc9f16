//! A small query language over the graph.
//!
//! Keywords are case-insensitive; labels and IRIs sit in double quotes with
//! no escape syntax. Label matching runs both sides through the configured
//! normalizer, so `"Apples"` finds the food displayed as `Apple`. A query
//! that matches nothing is not an error: it yields an empty table plus a
//! warning.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::graph::{Direction, EdgeKind, KnowledgeGraph, Node, NodeKind};
use crate::normalize::{EntityKind, Normalizer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    FoodsInGroup(String),
    FlavonoidsOfFood(String),
    FoodsContainingFlavonoid(String),
    DiseasesOfFlavonoid(String),
    FoodsForDisease(String),
    Neighbors { iri: String, kind: EdgeKind, direction: Direction },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("column {column}: {message}")]
    Syntax { column: usize, message: String },
}

fn syntax(column: usize, message: impl Into<String>) -> QueryError {
    QueryError::Syntax { column, message: message.into() }
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    /// 1-based character position of the token start.
    column: usize,
    quoted: bool,
}

fn lex(text: &str) -> Result<Vec<Token>, QueryError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i + 1;
        if chars[i] == '"' {
            let mut value = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    Some('"') => break,
                    Some(c) => {
                        value.push(*c);
                        i += 1;
                    }
                    None => return Err(syntax(start, "unterminated quoted label")),
                }
            }
            i += 1;
            tokens.push(Token { text: value, column: start, quoted: true });
        } else {
            let mut value = String::new();
            while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '"' {
                value.push(chars[i]);
                i += 1;
            }
            tokens.push(Token { text: value, column: start, quoted: false });
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    next: usize,
    end_column: usize,
}

impl Parser {
    fn take(&mut self, expected: &str) -> Result<Token, QueryError> {
        match self.tokens.get(self.next) {
            Some(token) => {
                self.next += 1;
                Ok(token.clone())
            }
            None => Err(syntax(self.end_column, format!("expected {expected}"))),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), QueryError> {
        let token = self.take(word)?;
        if token.quoted || !token.text.eq_ignore_ascii_case(word) {
            return Err(syntax(token.column, format!("expected {word}")));
        }
        Ok(())
    }

    fn quoted(&mut self, what: &str) -> Result<String, QueryError> {
        let token = self.take(&format!("a double-quoted {what}"))?;
        if !token.quoted {
            return Err(syntax(token.column, format!("expected a double-quoted {what}")));
        }
        Ok(token.text)
    }

    fn finish(&mut self, query: Query) -> Result<Query, QueryError> {
        if let Some(extra) = self.tokens.get(self.next) {
            return Err(syntax(extra.column, format!("unexpected trailing input {:?}", extra.text)));
        }
        Ok(query)
    }
}

pub fn parse_query(text: &str) -> Result<Query, QueryError> {
    let tokens = lex(text)?;
    let end_column = text.chars().count() + 1;
    let mut parser = Parser { tokens, next: 0, end_column };

    let head = parser.take("a query keyword")?;
    if head.quoted {
        return Err(syntax(head.column, "expected FOODS, FLAVONOIDS, DISEASES or NEIGHBORS"));
    }
    match head.text.to_ascii_uppercase().as_str() {
        "FOODS" => {
            let second = parser.take("IN, CONTAINING or FOR")?;
            match second.text.to_ascii_uppercase().as_str() {
                "IN" if !second.quoted => {
                    parser.keyword("GROUP")?;
                    let label = parser.quoted("group label")?;
                    parser.finish(Query::FoodsInGroup(label))
                }
                "CONTAINING" if !second.quoted => {
                    parser.keyword("FLAVONOID")?;
                    let label = parser.quoted("flavonoid label")?;
                    parser.finish(Query::FoodsContainingFlavonoid(label))
                }
                "FOR" if !second.quoted => {
                    parser.keyword("DISEASE")?;
                    let label = parser.quoted("disease label")?;
                    parser.finish(Query::FoodsForDisease(label))
                }
                _ => Err(syntax(second.column, "expected IN, CONTAINING or FOR")),
            }
        }
        "FLAVONOIDS" => {
            parser.keyword("OF")?;
            parser.keyword("FOOD")?;
            let label = parser.quoted("food label")?;
            parser.finish(Query::FlavonoidsOfFood(label))
        }
        "DISEASES" => {
            parser.keyword("OF")?;
            parser.keyword("FLAVONOID")?;
            let label = parser.quoted("flavonoid label")?;
            parser.finish(Query::DiseasesOfFlavonoid(label))
        }
        "NEIGHBORS" => {
            let iri = parser.quoted("IRI")?;
            parser.keyword("VIA")?;
            let kind_token = parser.take("an edge kind")?;
            let kind_name = kind_token.text.to_ascii_lowercase();
            if kind_token.quoted || !EdgeKind::builtin_names().contains(&kind_name.as_str()) {
                return Err(syntax(
                    kind_token.column,
                    format!(
                        "unknown edge kind {:?} (expected one of: {})",
                        kind_token.text,
                        EdgeKind::builtin_names().join(", ")
                    ),
                ));
            }
            let direction_token = parser.take("IN or OUT")?;
            let direction = match direction_token.text.to_ascii_uppercase().as_str() {
                "IN" if !direction_token.quoted => Direction::In,
                "OUT" if !direction_token.quoted => Direction::Out,
                _ => return Err(syntax(direction_token.column, "expected IN or OUT")),
            };
            parser.finish(Query::Neighbors {
                iri,
                kind: EdgeKind::parse(&kind_name),
                direction,
            })
        }
        _ => Err(syntax(head.column, "expected FOODS, FLAVONOIDS, DISEASES or NEIGHBORS")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

impl ResultTable {
    fn new(columns: &[&str]) -> ResultTable {
        ResultTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn finish(mut self) -> ResultTable {
        let unique: BTreeSet<Vec<String>> = self.rows.drain(..).collect();
        self.rows = unique.into_iter().collect();
        self
    }

    /// Tab-separated output with a header row. Tabs and line breaks inside
    /// fields become spaces so the row structure survives.
    pub fn to_tsv(&self) -> String {
        let sanitize = |field: &str| field.replace(['\t', '\n', '\r'], " ");
        let mut out = self.columns.iter().map(|c| sanitize(c)).collect::<Vec<_>>().join("\t");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(|c| sanitize(c)).collect::<Vec<_>>().join("\t"));
            out.push('\n');
        }
        out
    }
}

fn matching_nodes<'a>(
    graph: &'a KnowledgeGraph,
    normalizer: &Normalizer,
    kind: &NodeKind,
    entity_kind: EntityKind,
    label: &str,
) -> Vec<&'a Node> {
    let Ok(wanted) = normalizer.canonicalize(label, entity_kind) else {
        return Vec::new();
    };
    graph
        .nodes_of_kind(kind)
        .filter(|n| {
            normalizer
                .canonicalize(&n.label, entity_kind)
                .map(|key| key == wanted)
                .unwrap_or(false)
        })
        .collect()
}

fn contains_pairs(graph: &KnowledgeGraph) -> Vec<(String, String)> {
    graph.derived_contains().into_iter().map(|(food, flavonoid, _)| (food, flavonoid)).collect()
}

fn label_of(graph: &KnowledgeGraph, iri: &str) -> Option<String> {
    graph.node(iri).map(|n| n.label.clone())
}

pub fn execute_query(
    graph: &KnowledgeGraph,
    normalizer: &Normalizer,
    query: &Query,
) -> ResultTable {
    match query {
        Query::FoodsInGroup(label) => {
            let mut table = ResultTable::new(&["food"]);
            let groups =
                matching_nodes(graph, normalizer, &NodeKind::FoodGroup, EntityKind::FoodGroup, label);
            if groups.is_empty() {
                table.warnings.push(format!("no food group labelled {label:?} in the graph"));
            }
            for group in groups {
                if let Ok(children) = graph.neighbors(&group.iri, &EdgeKind::ParentOf, Direction::Out)
                {
                    for child in children.iter().filter(|n| n.kind == NodeKind::Food) {
                        table.rows.push(vec![child.label.clone()]);
                    }
                }
            }
            table.finish()
        }
        Query::FlavonoidsOfFood(label) => {
            let mut table = ResultTable::new(&["flavonoid"]);
            let foods = matching_nodes(graph, normalizer, &NodeKind::Food, EntityKind::Food, label);
            if foods.is_empty() {
                table.warnings.push(format!("no food labelled {label:?} in the graph"));
            }
            let pairs = contains_pairs(graph);
            for food in foods {
                for (f, v) in pairs.iter().filter(|(f, _)| *f == food.iri) {
                    debug_assert_eq!(f, &food.iri);
                    if let Some(flavonoid) = label_of(graph, v) {
                        table.rows.push(vec![flavonoid]);
                    }
                }
            }
            table.finish()
        }
        Query::FoodsContainingFlavonoid(label) => {
            let mut table = ResultTable::new(&["food"]);
            let flavonoids =
                matching_nodes(graph, normalizer, &NodeKind::Flavonoid, EntityKind::Flavonoid, label);
            if flavonoids.is_empty() {
                table.warnings.push(format!("no flavonoid labelled {label:?} in the graph"));
            }
            let pairs = contains_pairs(graph);
            for flavonoid in flavonoids {
                for (f, _) in pairs.iter().filter(|(_, v)| *v == flavonoid.iri) {
                    if let Some(food) = label_of(graph, f) {
                        table.rows.push(vec![food]);
                    }
                }
            }
            table.finish()
        }
        Query::DiseasesOfFlavonoid(label) => {
            let mut table = ResultTable::new(&["disease"]);
            let flavonoids =
                matching_nodes(graph, normalizer, &NodeKind::Flavonoid, EntityKind::Flavonoid, label);
            if flavonoids.is_empty() {
                table.warnings.push(format!("no flavonoid labelled {label:?} in the graph"));
            }
            for flavonoid in flavonoids {
                if let Ok(diseases) =
                    graph.neighbors(&flavonoid.iri, &EdgeKind::HasAssociatedDisease, Direction::Out)
                {
                    for disease in diseases.iter().filter(|n| n.kind == NodeKind::Disease) {
                        table.rows.push(vec![disease.label.clone()]);
                    }
                }
            }
            table.finish()
        }
        Query::FoodsForDisease(label) => {
            let mut table = ResultTable::new(&["food", "flavonoid"]);
            let diseases =
                matching_nodes(graph, normalizer, &NodeKind::Disease, EntityKind::Disease, label);
            if diseases.is_empty() {
                table.warnings.push(format!("no disease labelled {label:?} in the graph"));
            }
            let pairs = contains_pairs(graph);
            for disease in diseases {
                let flavonoids = match graph.neighbors(
                    &disease.iri,
                    &EdgeKind::HasAssociatedDisease,
                    Direction::In,
                ) {
                    Ok(nodes) => nodes,
                    Err(_) => continue,
                };
                for flavonoid in flavonoids {
                    for (f, _) in pairs.iter().filter(|(_, v)| *v == flavonoid.iri) {
                        if let Some(food) = label_of(graph, f) {
                            table.rows.push(vec![food, flavonoid.label.clone()]);
                        }
                    }
                }
            }
            table.finish()
        }
        Query::Neighbors { iri, kind, direction } => {
            let mut table = ResultTable::new(&["label", "iri"]);
            match graph.neighbors(iri, kind, *direction) {
                Ok(nodes) => {
                    for node in nodes {
                        table.rows.push(vec![node.label.clone(), node.iri.clone()]);
                    }
                }
                Err(_) => {
                    table.warnings.push(format!("no node with IRI {iri:?} in the graph"));
                }
            }
            table.finish()
        }
    }
}

/// Convenience for callers holding raw query text.
pub fn run_query(
    graph: &KnowledgeGraph,
    normalizer: &Normalizer,
    text: &str,
) -> Result<ResultTable, QueryError> {
    Ok(execute_query(graph, normalizer, &parse_query(text)?))
}
