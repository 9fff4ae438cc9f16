//! Builds a typed food/flavonoid/disease knowledge graph from tabular
//! composition data, reusing published vocabularies where labels match,
//! and compiles the graph into template sheets and a canonical Turtle
//! ontology.

pub mod config;
pub mod graph;
pub mod ingest;
pub mod normalize;
pub mod pipeline;
pub mod query;
pub mod recycle;
pub mod templater;
pub mod validate;

pub use config::PipelineConfig;
pub use graph::{Edge, EdgeKind, KnowledgeGraph, Node, NodeKind};
pub use ingest::SourceProvenance;
pub use normalize::{CanonicalEntity, EntityKind, Normalizer};
pub use recycle::{MappingResult, MatchOutcome, Vocabulary};
pub use templater::{Axiom, OwlDocument, PrefixMap, TemplateSheet};
pub use validate::{Finding, FindingCode, Severity};
