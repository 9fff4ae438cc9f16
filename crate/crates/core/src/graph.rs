//! The typed knowledge graph: foods under groups, flavonoids under
//! subclasses, per-food composition hubs, disease associations, drug
//! formulations and trials, plus identifier nodes for recycled vocabulary
//! terms.
//!
//! `build_graph` validates its input against the edge schema and refuses
//! parent cycles; `import_graph_csv` is deliberately lenient so that the
//! checkers in the validate module can inspect damaged exports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AssociationRecord, ContentRecord, DrugRecord, FoodRecord};
use crate::normalize::{CanonicalEntity, EntityKind, NormalizeError, Normalizer};
use crate::recycle::{escape_iri_component, mint_local_iri, MappingResult, MatchOutcome, RecycleError};
use crate::validate::{Finding, FindingCode};

macro_rules! named_kind {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone)]
        pub enum $name {
            $($variant,)+
            /// A kind declared through a schema extension file. Always build
            /// values with `parse` so built-in names never hide in here.
            Other(String),
        }

        impl $name {
            pub fn name(&self) -> &str {
                match self {
                    $($name::$variant => $text,)+
                    $name::Other(s) => s,
                }
            }

            pub fn parse(s: &str) -> $name {
                match s {
                    $($text => $name::$variant,)+
                    other => $name::Other(other.to_string()),
                }
            }

            pub fn builtin_names() -> &'static [&'static str] {
                &[$($text),+]
            }
        }

        impl PartialEq for $name {
            fn eq(&self, other: &Self) -> bool {
                self.name() == other.name()
            }
        }
        impl Eq for $name {}
        impl Hash for $name {
            fn hash<H: Hasher>(&self, state: &mut H) {
                self.name().hash(state);
            }
        }
        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for $name {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.name().cmp(other.name())
            }
        }
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_kind!(NodeKind {
    FoodGroup => "food_group",
    Food => "food",
    Composition => "composition",
    FlavonoidSubclass => "flavonoid_subclass",
    Flavonoid => "flavonoid",
    Disease => "disease",
    Drug => "drug",
    ClinicalTrial => "clinical_trial",
    Identifier => "identifier",
});

named_kind!(EdgeKind {
    ParentOf => "parent_of",
    HasId => "has_id",
    HasComposition => "has_composition",
    HasComponent => "has_component",
    HasAssociatedDisease => "has_associated_disease",
    FormulatedFrom => "formulated_from",
    EvaluatedIn => "evaluated_in",
    Targets => "targets",
});

impl NodeKind {
    pub fn from_entity(kind: EntityKind) -> NodeKind {
        match kind {
            EntityKind::FoodGroup => NodeKind::FoodGroup,
            EntityKind::Food => NodeKind::Food,
            EntityKind::FlavonoidSubclass => NodeKind::FlavonoidSubclass,
            EntityKind::Flavonoid => NodeKind::Flavonoid,
            EntityKind::Disease => NodeKind::Disease,
            EntityKind::Drug => NodeKind::Drug,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropValue {
    Number(f64),
    Text(String),
}

pub type Props = BTreeMap<String, PropValue>;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub iri: String,
    pub kind: NodeKind,
    pub label: String,
    pub props: Props,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: String,
    pub kind: EdgeKind,
    pub target: String,
    pub props: Props,
}

impl Edge {
    fn sort_key(&self) -> (&str, &str, &str) {
        (&self.source, self.kind.name(), &self.target)
    }

    pub fn props_json(&self) -> String {
        serde_json::to_string(&self.props).expect("props serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
}

/// Which (source kind, target kind) pairs each edge kind may connect.
/// "*" is a wildcard side.
#[derive(Debug, Clone)]
pub struct GraphSchema {
    allowed: BTreeSet<(String, String, String)>,
}

impl Default for GraphSchema {
    fn default() -> Self {
        Self::builtin()
    }
}

impl GraphSchema {
    pub fn builtin() -> Self {
        let rules = [
            ("parent_of", "food_group", "food"),
            ("parent_of", "flavonoid_subclass", "flavonoid"),
            ("has_id", "*", "identifier"),
            ("has_composition", "food", "composition"),
            ("has_component", "composition", "flavonoid"),
            ("has_associated_disease", "flavonoid", "disease"),
            ("formulated_from", "drug", "composition"),
            ("evaluated_in", "drug", "clinical_trial"),
            ("targets", "clinical_trial", "disease"),
        ];
        GraphSchema {
            allowed: rules
                .iter()
                .map(|(e, s, t)| (e.to_string(), s.to_string(), t.to_string()))
                .collect(),
        }
    }

    /// Extends the schema from `edge_kind TAB source_kind TAB target_kind`
    /// lines. '#' comments and blank lines are skipped.
    pub fn extend_from_tsv(&mut self, text: &str) -> Result<(), GraphError> {
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
                return Err(GraphError::BadSchemaLine { line: i + 1 });
            }
            self.allowed.insert((
                fields[0].to_string(),
                fields[1].to_string(),
                fields[2].to_string(),
            ));
        }
        Ok(())
    }

    pub fn allows(&self, edge: &EdgeKind, source: &NodeKind, target: &NodeKind) -> bool {
        let e = edge.name();
        let s = source.name();
        let t = target.name();
        [(s, t), ("*", t), (s, "*"), ("*", "*")].iter().any(|(s, t)| {
            self.allowed.contains(&(e.to_string(), s.to_string(), t.to_string()))
        })
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown node {iri}")]
    UnknownNode { iri: String },
    #[error("{file}:{line}: content row names unknown food code {code:?}")]
    UnknownFoodCode { file: String, line: u64, code: String },
    #[error("food {label:?} has no food group; every food needs a parent group")]
    MissingGroup { label: String },
    #[error("food {label:?} is assigned to two groups: {a:?} and {b:?}")]
    ConflictingGroups { label: String, a: String, b: String },
    #[error("flavonoid {label:?} has no subclass; add a content row or declare one")]
    MissingSubclass { label: String },
    #[error("flavonoid {label:?} is assigned to two subclasses: {a:?} and {b:?}")]
    ConflictingSubclasses { label: String, a: String, b: String },
    #[error("subclass {label:?} is not a known flavonoid subclass (known: {known})")]
    UnknownSubclass { label: String, known: String },
    #[error("{file}:{line}: row names {label:?} which is not a canonical {kind} entity")]
    UnknownEntity { file: String, line: u64, label: String, kind: String },
    #[error("{file}:{line}: external id {curie:?} is not a valid CURIE")]
    BadExternalId { file: String, line: u64, curie: String },
    #[error("parent_of cycle: {cycle}")]
    ParentCycle { cycle: String },
    #[error("edge {edge} from {from} ({from_kind}) to {to} ({to_kind}) violates the schema")]
    SchemaViolation { edge: String, from: String, from_kind: String, to: String, to_kind: String },
    #[error("schema extension line {line}: expected edge_kind<TAB>source_kind<TAB>target_kind")]
    BadSchemaLine { line: usize },
    #[error("{file}: missing required column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}:{line}: {message}")]
    BadRow { file: String, line: u64, message: String },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Recycle(#[from] RecycleError),
}

/// Immutable after construction. Nodes are keyed by IRI; edges are kept
/// sorted by (source, kind, target) and deduplicated; adjacency indexes are
/// built once.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, Node>,
    edges: Vec<Edge>,
    out_index: HashMap<String, Vec<usize>>,
    in_index: HashMap<String, Vec<usize>>,
}

impl KnowledgeGraph {
    /// Assembles a graph without validating schema or acyclicity; duplicate
    /// edge triples are resolved towards the lexicographically smallest props
    /// JSON so the result does not depend on input order.
    pub fn from_parts(nodes: Vec<Node>, edges: Vec<Edge>) -> KnowledgeGraph {
        let mut node_map = BTreeMap::new();
        for node in nodes {
            node_map.entry(node.iri.clone()).or_insert(node);
        }
        let mut edge_map: BTreeMap<(String, String, String), Edge> = BTreeMap::new();
        for edge in edges {
            let key = (edge.source.clone(), edge.kind.name().to_string(), edge.target.clone());
            match edge_map.get_mut(&key) {
                Some(existing) => {
                    if edge.props_json() < existing.props_json() {
                        *existing = edge;
                    }
                }
                None => {
                    edge_map.insert(key, edge);
                }
            }
        }
        let edges: Vec<Edge> = edge_map.into_values().collect();
        let mut out_index: HashMap<String, Vec<usize>> = HashMap::new();
        let mut in_index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, edge) in edges.iter().enumerate() {
            out_index.entry(edge.source.clone()).or_default().push(i);
            in_index.entry(edge.target.clone()).or_default().push(i);
        }
        KnowledgeGraph { nodes: node_map, edges, out_index, in_index }
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, iri: &str) -> Option<&Node> {
        self.nodes.get(iri)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes_of_kind(&self, kind: &NodeKind) -> impl Iterator<Item = &Node> {
        let kind = kind.clone();
        self.nodes.values().filter(move |n| n.kind == kind)
    }

    fn edge_refs(&self, iri: &str, kind: &EdgeKind, direction: Direction) -> Vec<&Edge> {
        let index = match direction {
            Direction::Out => &self.out_index,
            Direction::In => &self.in_index,
        };
        index
            .get(iri)
            .map(|ids| {
                ids.iter().map(|&i| &self.edges[i]).filter(|e| e.kind == *kind).collect()
            })
            .unwrap_or_default()
    }

    /// Nodes adjacent to `iri` over `kind` edges, sorted by display label
    /// then IRI. Edge endpoints missing from the node table are skipped; the
    /// validate module reports those as dangling.
    pub fn neighbors(
        &self,
        iri: &str,
        kind: &EdgeKind,
        direction: Direction,
    ) -> Result<Vec<&Node>, GraphError> {
        if !self.nodes.contains_key(iri) {
            return Err(GraphError::UnknownNode { iri: iri.to_string() });
        }
        let mut out: Vec<&Node> = self
            .edge_refs(iri, kind, direction)
            .into_iter()
            .filter_map(|e| {
                let other = match direction {
                    Direction::Out => &e.target,
                    Direction::In => &e.source,
                };
                self.nodes.get(other)
            })
            .collect();
        out.sort_by(|a, b| (&a.label, &a.iri).cmp(&(&b.label, &b.iri)));
        out.dedup_by(|a, b| a.iri == b.iri);
        Ok(out)
    }

    /// Irreflexive transitive closure of one edge kind: every (a, b) with a
    /// directed path a -> ... -> b, self-pairs excluded.
    pub fn transitive_closure(&self, kind: &EdgeKind) -> BTreeSet<(String, String)> {
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for edge in &self.edges {
            if edge.kind == *kind {
                adjacency.entry(edge.source.as_str()).or_default().push(edge.target.as_str());
            }
        }
        let mut closure = BTreeSet::new();
        for &start in adjacency.keys() {
            let mut stack: Vec<&str> = adjacency[start].clone();
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            while let Some(current) = stack.pop() {
                if !seen.insert(current) {
                    continue;
                }
                if current != start {
                    closure.insert((start.to_string(), current.to_string()));
                }
                if let Some(next) = adjacency.get(current) {
                    stack.extend(next.iter().copied());
                }
            }
        }
        closure
    }

    /// The food -> flavonoid pairs implied by composition hubs, with the
    /// measured mean. Computed on demand, never stored as edges.
    pub fn derived_contains(&self) -> Vec<(String, String, f64)> {
        let mut rows: BTreeMap<(String, String), f64> = BTreeMap::new();
        for comp_edge in self.edges.iter().filter(|e| e.kind == EdgeKind::HasComposition) {
            let food = &comp_edge.source;
            for part in self.edge_refs(&comp_edge.target, &EdgeKind::HasComponent, Direction::Out)
            {
                let mean = match part.props.get("mean_mg_per_100g") {
                    Some(PropValue::Number(v)) => *v,
                    _ => 0.0,
                };
                rows.entry((food.clone(), part.target.clone())).or_insert(mean);
            }
        }
        rows.into_iter().map(|((f, v), m)| (f, v, m)).collect()
    }

    /// Cycles in the parent_of relation. Each strongly connected component
    /// with a cycle is reported once as the list of its members, sorted, with
    /// the smallest IRI first; components are sorted by that entry point.
    pub fn parent_cycles(&self) -> Vec<Vec<String>> {
        let mut adjacency: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut reverse: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        let mut vertices: BTreeSet<&str> = BTreeSet::new();
        let mut self_loops: BTreeSet<&str> = BTreeSet::new();
        for edge in self.edges.iter().filter(|e| e.kind == EdgeKind::ParentOf) {
            adjacency.entry(edge.source.as_str()).or_default().push(edge.target.as_str());
            reverse.entry(edge.target.as_str()).or_default().push(edge.source.as_str());
            vertices.insert(edge.source.as_str());
            vertices.insert(edge.target.as_str());
            if edge.source == edge.target {
                self_loops.insert(edge.source.as_str());
            }
        }

        // Kosaraju: order by first DFS finish time, then collect components
        // on the reversed graph.
        let mut finished: Vec<&str> = Vec::with_capacity(vertices.len());
        let mut visited: BTreeSet<&str> = BTreeSet::new();
        for &root in &vertices {
            if visited.contains(root) {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
            visited.insert(root);
            while let Some((node, next_child)) = stack.pop() {
                let children = adjacency.get(node).map(Vec::as_slice).unwrap_or(&[]);
                if next_child < children.len() {
                    stack.push((node, next_child + 1));
                    let child = children[next_child];
                    if visited.insert(child) {
                        stack.push((child, 0));
                    }
                } else {
                    finished.push(node);
                }
            }
        }

        let mut component: BTreeMap<&str, usize> = BTreeMap::new();
        let mut members: Vec<Vec<&str>> = Vec::new();
        for &root in finished.iter().rev() {
            if component.contains_key(root) {
                continue;
            }
            let id = members.len();
            let mut collected = Vec::new();
            let mut stack = vec![root];
            component.insert(root, id);
            while let Some(node) = stack.pop() {
                collected.push(node);
                for &prev in reverse.get(node).map(Vec::as_slice).unwrap_or(&[]) {
                    if !component.contains_key(prev) {
                        component.insert(prev, id);
                        stack.push(prev);
                    }
                }
            }
            members.push(collected);
        }

        let mut cycles: Vec<Vec<String>> = members
            .into_iter()
            .filter(|m| m.len() > 1 || (m.len() == 1 && self_loops.contains(m[0])))
            .map(|mut m| {
                m.sort();
                m.into_iter().map(str::to_string).collect()
            })
            .collect();
        cycles.sort();
        cycles
    }
}

/// Record tables plus the normalize/map outputs that feed the build.
#[derive(Debug, Clone, Copy)]
pub struct BuildInputs<'a> {
    pub foods: &'a [FoodRecord],
    pub contents: &'a [ContentRecord],
    pub associations: &'a [AssociationRecord],
    pub drugs: &'a [DrugRecord],
    pub entities: &'a [CanonicalEntity],
    pub mappings: &'a [MappingResult],
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub namespace: String,
    /// Display labels of subclasses beyond the built-in five.
    pub extra_subclasses: Vec<String>,
    /// Edge conformance rules checked as a build postcondition.
    pub schema: GraphSchema,
}

impl BuildOptions {
    pub fn new(namespace: &str) -> BuildOptions {
        BuildOptions {
            namespace: namespace.to_string(),
            extra_subclasses: Vec::new(),
            schema: GraphSchema::builtin(),
        }
    }
}

/// The five seeded flavonoid subclasses.
pub const SUBCLASS_SEED: [&str; 5] =
    ["Anthocyanidins", "Flavan-3-ols", "Flavanones", "Flavones", "Flavonols"];

pub fn build_graph(
    inputs: &BuildInputs,
    normalizer: &Normalizer,
    options: &BuildOptions,
) -> Result<KnowledgeGraph, GraphError> {
    let ns = options.namespace.as_str();
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();

    // Subclass skeleton: seeded five plus configured extras.
    let mut subclass_display: BTreeMap<String, String> = BTreeMap::new();
    for display in SUBCLASS_SEED.iter().map(|s| s.to_string()).chain(options.extra_subclasses.iter().cloned())
    {
        let key = normalizer.canonicalize(&display, EntityKind::FlavonoidSubclass)?;
        subclass_display.entry(key).or_insert(display);
    }
    let subclass_iri = |key: &str| mint_local_iri(key, ns);
    for (key, display) in &subclass_display {
        nodes.push(Node {
            iri: subclass_iri(key)?,
            kind: NodeKind::FlavonoidSubclass,
            label: display.clone(),
            props: Props::new(),
        });
    }
    let known_subclasses =
        || subclass_display.keys().cloned().collect::<Vec<_>>().join(", ");

    // Entity nodes. Keys are globally unique, so one map covers every kind.
    let mut entity_by_key: BTreeMap<&str, &CanonicalEntity> = BTreeMap::new();
    for entity in inputs.entities {
        entity_by_key.insert(entity.canonical_key.as_str(), entity);
    }
    let mut iri_by_key: BTreeMap<String, String> = BTreeMap::new();
    for entity in inputs.entities {
        let key = entity.canonical_key.as_str();
        if entity.kind == EntityKind::FlavonoidSubclass {
            if !subclass_display.contains_key(key) {
                return Err(GraphError::UnknownSubclass {
                    label: entity.display_label.clone(),
                    known: known_subclasses(),
                });
            }
            iri_by_key.insert(key.to_string(), subclass_iri(key)?);
            continue;
        }
        let iri = mint_local_iri(key, ns)?;
        iri_by_key.insert(key.to_string(), iri.clone());
        nodes.push(Node {
            iri,
            kind: NodeKind::from_entity(entity.kind),
            label: entity.display_label.clone(),
            props: Props::new(),
        });
    }

    // Foods: one composition hub each, parent group edge, food_code property.
    let mut food_key_by_code: BTreeMap<&str, String> = BTreeMap::new();
    let mut codes_by_food: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut group_of_food: BTreeMap<String, String> = BTreeMap::new();
    for record in inputs.foods {
        let food_key = normalizer.canonicalize(&record.description, EntityKind::Food)?;
        if record.food_group.trim().is_empty() {
            return Err(GraphError::MissingGroup { label: record.description.clone() });
        }
        let group_key = normalizer.canonicalize(&record.food_group, EntityKind::FoodGroup)?;
        if let Some(existing) = group_of_food.get(&food_key) {
            if *existing != group_key {
                let (a, b) = if *existing < group_key {
                    (existing.clone(), group_key.clone())
                } else {
                    (group_key.clone(), existing.clone())
                };
                return Err(GraphError::ConflictingGroups { label: record.description.clone(), a, b });
            }
        } else {
            group_of_food.insert(food_key.clone(), group_key.clone());
        }
        food_key_by_code.insert(record.food_code.as_str(), food_key.clone());
        codes_by_food.entry(food_key).or_default().insert(record.food_code.clone());
    }

    let require_key = |key: &str, kind: EntityKind, file: &str, line: u64, label: &str| {
        match (entity_by_key.get(key), iri_by_key.get(key)) {
            (Some(_), Some(iri)) => Ok(iri.clone()),
            _ => Err(GraphError::UnknownEntity {
                file: file.to_string(),
                line,
                label: label.to_string(),
                kind: kind.as_str().to_string(),
            }),
        }
    };

    let mut composition_of_food: BTreeMap<String, String> = BTreeMap::new();
    for (food_key, group_key) in &group_of_food {
        let food_iri = iri_by_key.get(food_key).cloned().ok_or_else(|| GraphError::UnknownEntity {
            file: String::new(),
            line: 0,
            label: food_key.clone(),
            kind: "food".to_string(),
        })?;
        let group_iri =
            iri_by_key.get(group_key).cloned().ok_or_else(|| GraphError::UnknownEntity {
                file: String::new(),
                line: 0,
                label: group_key.clone(),
                kind: "food_group".to_string(),
            })?;
        edges.push(Edge {
            source: group_iri,
            kind: EdgeKind::ParentOf,
            target: food_iri,
            props: Props::new(),
        });
    }
    for entity in inputs.entities.iter().filter(|e| e.kind == EntityKind::Food) {
        let food_iri = iri_by_key[&entity.canonical_key].clone();
        let composition_iri = format!("{food_iri}/composition");
        nodes.push(Node {
            iri: composition_iri.clone(),
            kind: NodeKind::Composition,
            label: format!("{} composition", entity.display_label),
            props: Props::new(),
        });
        edges.push(Edge {
            source: food_iri,
            kind: EdgeKind::HasComposition,
            target: composition_iri.clone(),
            props: Props::new(),
        });
        composition_of_food.insert(entity.canonical_key.clone(), composition_iri);
    }
    // food_code node property (joined when one entity covers several codes)
    for node in nodes.iter_mut().filter(|n| n.kind == NodeKind::Food) {
        if let Some(entity) = inputs
            .entities
            .iter()
            .find(|e| e.kind == EntityKind::Food && iri_by_key[&e.canonical_key] == node.iri)
        {
            if let Some(codes) = codes_by_food.get(&entity.canonical_key) {
                let joined = codes.iter().cloned().collect::<Vec<_>>().join(",");
                node.props.insert("food_code".to_string(), PropValue::Text(joined));
            }
        }
    }

    // Flavonoid subclass membership from content rows.
    let mut subclass_of_flavonoid: BTreeMap<String, String> = BTreeMap::new();
    for record in inputs.contents {
        let flavonoid_key = normalizer.canonicalize(&record.flavonoid_name, EntityKind::Flavonoid)?;
        require_key(
            &flavonoid_key,
            EntityKind::Flavonoid,
            &record.provenance.file_name,
            record.provenance.line_number,
            &record.flavonoid_name,
        )?;
        if record.subclass.trim().is_empty() {
            continue;
        }
        let subclass_key =
            normalizer.canonicalize(&record.subclass, EntityKind::FlavonoidSubclass)?;
        if !subclass_display.contains_key(&subclass_key) {
            return Err(GraphError::UnknownSubclass {
                label: record.subclass.clone(),
                known: known_subclasses(),
            });
        }
        if let Some(existing) = subclass_of_flavonoid.get(&flavonoid_key) {
            if *existing != subclass_key {
                let (a, b) = if *existing < subclass_key {
                    (existing.clone(), subclass_key)
                } else {
                    (subclass_key, existing.clone())
                };
                return Err(GraphError::ConflictingSubclasses {
                    label: record.flavonoid_name.clone(),
                    a,
                    b,
                });
            }
        } else {
            subclass_of_flavonoid.insert(flavonoid_key, subclass_key);
        }
    }
    for entity in inputs.entities.iter().filter(|e| e.kind == EntityKind::Flavonoid) {
        let subclass_key = subclass_of_flavonoid.get(&entity.canonical_key).ok_or_else(|| {
            GraphError::MissingSubclass { label: entity.display_label.clone() }
        })?;
        edges.push(Edge {
            source: subclass_iri(subclass_key)?,
            kind: EdgeKind::ParentOf,
            target: iri_by_key[&entity.canonical_key].clone(),
            props: Props::new(),
        });
    }

    // Composition membership with measurement props.
    for record in inputs.contents {
        let food_key = food_key_by_code.get(record.food_code.as_str()).ok_or_else(|| {
            GraphError::UnknownFoodCode {
                file: record.provenance.file_name.clone(),
                line: record.provenance.line_number,
                code: record.food_code.clone(),
            }
        })?;
        let composition_iri = composition_of_food.get(food_key).cloned().ok_or_else(|| {
            GraphError::UnknownEntity {
                file: record.provenance.file_name.clone(),
                line: record.provenance.line_number,
                label: food_key.clone(),
                kind: "food".to_string(),
            }
        })?;
        let flavonoid_key = normalizer.canonicalize(&record.flavonoid_name, EntityKind::Flavonoid)?;
        let mut props = Props::new();
        props.insert(
            "mean_mg_per_100g".to_string(),
            PropValue::Number(record.mean_mg_per_100g),
        );
        if !record.method.is_empty() {
            props.insert("method".to_string(), PropValue::Text(record.method.clone()));
        }
        if !record.state.is_empty() {
            props.insert("state".to_string(), PropValue::Text(record.state.clone()));
        }
        edges.push(Edge {
            source: composition_iri,
            kind: EdgeKind::HasComponent,
            target: iri_by_key[&flavonoid_key].clone(),
            props,
        });
    }

    // Disease associations.
    for record in inputs.associations {
        let flavonoid_key = normalizer.canonicalize(&record.flavonoid_name, EntityKind::Flavonoid)?;
        let flavonoid_iri = require_key(
            &flavonoid_key,
            EntityKind::Flavonoid,
            &record.provenance.file_name,
            record.provenance.line_number,
            &record.flavonoid_name,
        )?;
        let disease_key = normalizer.canonicalize(&record.disease_label, EntityKind::Disease)?;
        let disease_iri = require_key(
            &disease_key,
            EntityKind::Disease,
            &record.provenance.file_name,
            record.provenance.line_number,
            &record.disease_label,
        )?;
        let mut props = Props::new();
        if !record.effect.is_empty() {
            props.insert("effect".to_string(), PropValue::Text(record.effect.clone()));
        }
        if !record.citation_key.is_empty() {
            props.insert("citation_key".to_string(), PropValue::Text(record.citation_key.clone()));
        }
        edges.push(Edge {
            source: flavonoid_iri,
            kind: EdgeKind::HasAssociatedDisease,
            target: disease_iri.clone(),
            props,
        });
        if let Some(curie) = &record.external_disease_id {
            if !crate::recycle::is_valid_curie(curie) {
                return Err(GraphError::BadExternalId {
                    file: record.provenance.file_name.clone(),
                    line: record.provenance.line_number,
                    curie: curie.clone(),
                });
            }
            let (id_node, id_edge) = identifier_parts(ns, &disease_iri, curie);
            nodes.push(id_node);
            edges.push(id_edge);
        }
    }

    // Recycled identifiers.
    for mapping in inputs.mappings.iter().filter(|m| m.outcome != MatchOutcome::Minted) {
        let Some(iri) = iri_by_key.get(&mapping.entity_key) else {
            continue;
        };
        let (id_node, id_edge) = identifier_parts(ns, iri, &mapping.iri_or_curie);
        nodes.push(id_node);
        edges.push(id_edge);
    }

    // Drug formulations and trials.
    for record in inputs.drugs {
        let drug_key = normalizer.canonicalize(&record.drug_name, EntityKind::Drug)?;
        let drug_iri = require_key(
            &drug_key,
            EntityKind::Drug,
            &record.provenance.file_name,
            record.provenance.line_number,
            &record.drug_name,
        )?;
        let food_key = food_key_by_code.get(record.food_code.as_str()).ok_or_else(|| {
            GraphError::UnknownFoodCode {
                file: record.provenance.file_name.clone(),
                line: record.provenance.line_number,
                code: record.food_code.clone(),
            }
        })?;
        let composition_iri = composition_of_food[food_key].clone();
        edges.push(Edge {
            source: drug_iri.clone(),
            kind: EdgeKind::FormulatedFrom,
            target: composition_iri,
            props: Props::new(),
        });
        if let Some(trial_id) = &record.trial_id {
            let trial_iri = format!("{ns}trial/{}", escape_iri_component(trial_id));
            nodes.push(Node {
                iri: trial_iri.clone(),
                kind: NodeKind::ClinicalTrial,
                label: trial_id.clone(),
                props: Props::new(),
            });
            edges.push(Edge {
                source: drug_iri.clone(),
                kind: EdgeKind::EvaluatedIn,
                target: trial_iri.clone(),
                props: Props::new(),
            });
            if let Some(disease_label) = &record.disease_label {
                let disease_key = normalizer.canonicalize(disease_label, EntityKind::Disease)?;
                let disease_iri = require_key(
                    &disease_key,
                    EntityKind::Disease,
                    &record.provenance.file_name,
                    record.provenance.line_number,
                    disease_label,
                )?;
                edges.push(Edge {
                    source: trial_iri,
                    kind: EdgeKind::Targets,
                    target: disease_iri,
                    props: Props::new(),
                });
            }
        }
    }

    let graph = KnowledgeGraph::from_parts(nodes, edges);

    // Postconditions: schema conformance and an acyclic parent relation.
    let schema = &options.schema;
    for edge in graph.edges() {
        let source = graph.node(&edge.source).ok_or_else(|| GraphError::UnknownNode {
            iri: edge.source.clone(),
        })?;
        let target = graph.node(&edge.target).ok_or_else(|| GraphError::UnknownNode {
            iri: edge.target.clone(),
        })?;
        if !schema.allows(&edge.kind, &source.kind, &target.kind) {
            return Err(GraphError::SchemaViolation {
                edge: edge.kind.name().to_string(),
                from: edge.source.clone(),
                from_kind: source.kind.name().to_string(),
                to: edge.target.clone(),
                to_kind: target.kind.name().to_string(),
            });
        }
    }
    if let Some(cycle) = graph.parent_cycles().first() {
        return Err(GraphError::ParentCycle { cycle: cycle.join(" -> ") });
    }
    Ok(graph)
}

fn identifier_parts(ns: &str, entity_iri: &str, curie: &str) -> (Node, Edge) {
    let id_iri = format!("{ns}identifier/{}", escape_iri_component(curie));
    let node = Node {
        iri: id_iri.clone(),
        kind: NodeKind::Identifier,
        label: curie.to_string(),
        props: Props::new(),
    };
    let edge = Edge {
        source: entity_iri.to_string(),
        kind: EdgeKind::HasId,
        target: id_iri,
        props: Props::new(),
    };
    (node, edge)
}

/// Canonical CSV export: nodes sorted by IRI, edges by (source, kind,
/// target). Byte-stable for a given graph.
pub fn export_graph_csv(graph: &KnowledgeGraph) -> (String, String) {
    let mut nodes_writer = csv::Writer::from_writer(Vec::new());
    nodes_writer.write_record(["iri", "kind", "label"]).expect("in-memory write");
    for node in graph.nodes() {
        nodes_writer
            .write_record([node.iri.as_str(), node.kind.name(), node.label.as_str()])
            .expect("in-memory write");
    }
    let nodes_csv =
        String::from_utf8(nodes_writer.into_inner().expect("flush")).expect("utf-8");

    let mut edges = graph.edges().to_vec();
    edges.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut edges_writer = csv::Writer::from_writer(Vec::new());
    edges_writer
        .write_record(["source", "kind", "target", "props_json"])
        .expect("in-memory write");
    for edge in &edges {
        edges_writer
            .write_record([
                edge.source.as_str(),
                edge.kind.name(),
                edge.target.as_str(),
                edge.props_json().as_str(),
            ])
            .expect("in-memory write");
    }
    let edges_csv =
        String::from_utf8(edges_writer.into_inner().expect("flush")).expect("utf-8");
    (nodes_csv, edges_csv)
}

fn csv_rows(
    csv_text: &str,
    file_name: &str,
    required: &[&str],
) -> Result<Vec<(Vec<String>, u64)>, GraphError> {
    let text = csv_text.strip_prefix('\u{feff}').unwrap_or(csv_text);
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let wrap = |source: csv::Error| GraphError::Csv { file: file_name.to_string(), source };
    let headers = reader.headers().map_err(wrap)?.clone();
    let mut positions = Vec::new();
    for name in required {
        let index = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| GraphError::MissingColumn {
                file: file_name.to_string(),
                column: name.to_string(),
            })?;
        positions.push(index);
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(wrap)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fields =
            positions.iter().map(|&i| record.get(i).unwrap_or("").to_string()).collect();
        rows.push((fields, line));
    }
    Ok(rows)
}

/// Loads a graph from exported CSVs without enforcing build invariants.
/// Structural damage (duplicate rows, conflicting labels) comes back as
/// findings; malformed cells are hard errors.
pub fn import_graph_csv(
    nodes_csv: &str,
    edges_csv: &str,
) -> Result<(KnowledgeGraph, Vec<Finding>), GraphError> {
    let mut findings = Vec::new();

    let mut nodes: Vec<Node> = Vec::new();
    let mut node_seen: HashMap<String, (NodeKind, String)> = HashMap::new();
    for (fields, line) in csv_rows(nodes_csv, "graph_nodes.csv", &["iri", "kind", "label"])? {
        let iri = fields[0].trim().to_string();
        if iri.is_empty() {
            return Err(GraphError::BadRow {
                file: "graph_nodes.csv".to_string(),
                line,
                message: "empty iri".to_string(),
            });
        }
        let kind_text = fields[1].trim();
        if kind_text.is_empty() {
            return Err(GraphError::BadRow {
                file: "graph_nodes.csv".to_string(),
                line,
                message: format!("node {iri} has an empty kind"),
            });
        }
        let kind = NodeKind::parse(kind_text);
        let label = fields[2].clone();
        match node_seen.get(&iri) {
            Some((_, first_label)) if *first_label != label => {
                let (a, b) = if *first_label < label {
                    (first_label.clone(), label.clone())
                } else {
                    (label.clone(), first_label.clone())
                };
                findings.push(Finding::new(
                    FindingCode::LabelConflict,
                    iri.clone(),
                    format!("node declared with two labels: {a:?} and {b:?}"),
                ));
            }
            Some(_) => {
                findings.push(Finding::new(
                    FindingCode::DuplicateId,
                    iri.clone(),
                    "node row repeated".to_string(),
                ));
            }
            None => {
                node_seen.insert(iri.clone(), (kind.clone(), label.clone()));
                nodes.push(Node { iri, kind, label, props: Props::new() });
            }
        }
    }

    let mut edges: Vec<Edge> = Vec::new();
    let mut edge_seen: BTreeSet<(String, String, String)> = BTreeSet::new();
    for (fields, line) in
        csv_rows(edges_csv, "graph_edges.csv", &["source", "kind", "target", "props_json"])?
    {
        let source = fields[0].trim().to_string();
        let target = fields[2].trim().to_string();
        let kind_text = fields[1].trim();
        if source.is_empty() || target.is_empty() || kind_text.is_empty() {
            return Err(GraphError::BadRow {
                file: "graph_edges.csv".to_string(),
                line,
                message: "empty source, kind or target".to_string(),
            });
        }
        let kind = EdgeKind::parse(kind_text);
        let props_text = fields[3].trim();
        let props: Props = if props_text.is_empty() {
            Props::new()
        } else {
            serde_json::from_str(props_text).map_err(|e| GraphError::BadRow {
                file: "graph_edges.csv".to_string(),
                line,
                message: format!("bad props JSON: {e}"),
            })?
        };
        let key = (source.clone(), kind.name().to_string(), target.clone());
        if !edge_seen.insert(key) {
            findings.push(Finding::new(
                FindingCode::DuplicateId,
                format!("{source} -> {target}"),
                format!("{} edge row repeated", kind.name()),
            ));
            continue;
        }
        edges.push(Edge { source, kind, target, props });
    }

    findings.sort();
    Ok((KnowledgeGraph::from_parts(nodes, edges), findings))
}
