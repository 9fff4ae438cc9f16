//! Stage orchestration. Each stage reads its inputs from the output
//! directory of the previous one and writes its own artifacts, so stages
//! can run one at a time or all together; `run_pipeline` is nothing more
//! than the stages called in order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::graph::{
    build_graph, export_graph_csv, import_graph_csv, BuildInputs, BuildOptions, GraphError,
    GraphSchema, KnowledgeGraph,
};
use crate::ingest::{
    parse_disease_associations, parse_drug_table, parse_flavonoid_table, parse_food_table,
    write_disease_associations, write_drug_table, write_flavonoid_table, write_food_table,
    AssociationRecord, ContentRecord, DrugRecord, FoodRecord, IngestError, TableReader,
};
use crate::normalize::{CanonicalEntity, EntityKind, MergeReport, NormalizeError, Normalizer, RawLabel};
use crate::recycle::{
    load_vocabulary, map_term, mapping_report, MappingResult, MatchOutcome, RecycleError,
    Vocabulary,
};
use crate::templater::{
    compile_sheets, graph_to_templates, parse_template, serialize_turtle, PrefixMap,
    TemplateError,
};
use crate::validate::{
    check_graph, coverage_stats, coverage_to_tsv, findings_to_tsv, has_errors, Finding,
};

#[derive(Debug, Error)]
pub enum StageError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    BadArtifact { file: &'static str, line: usize, message: String },
    #[error("graph export carries {errors} error-level findings; fix it before templating")]
    CorruptGraph { errors: usize },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error(transparent)]
    Recycle(#[from] RecycleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Where every artifact lives under the configured output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub foods_csv: PathBuf,
    pub contents_csv: PathBuf,
    pub associations_csv: PathBuf,
    pub drugs_csv: PathBuf,
    pub entities_tsv: PathBuf,
    pub merge_report_tsv: PathBuf,
    pub mappings_tsv: PathBuf,
    pub mapping_report_tsv: PathBuf,
    pub nodes_csv: PathBuf,
    pub edges_csv: PathBuf,
    pub templates_dir: PathBuf,
    pub ontology_ttl: PathBuf,
    pub findings_tsv: PathBuf,
    pub coverage_tsv: PathBuf,
}

impl ArtifactPaths {
    pub fn new(output_dir: &Path) -> ArtifactPaths {
        ArtifactPaths {
            foods_csv: output_dir.join("ingest/foods.csv"),
            contents_csv: output_dir.join("ingest/contents.csv"),
            associations_csv: output_dir.join("ingest/associations.csv"),
            drugs_csv: output_dir.join("ingest/drugs.csv"),
            entities_tsv: output_dir.join("normalize/entities.tsv"),
            merge_report_tsv: output_dir.join("normalize/merge_report.tsv"),
            mappings_tsv: output_dir.join("map/mappings.tsv"),
            mapping_report_tsv: output_dir.join("map/mapping_report.tsv"),
            nodes_csv: output_dir.join("graph_nodes.csv"),
            edges_csv: output_dir.join("graph_edges.csv"),
            templates_dir: output_dir.join("templates"),
            ontology_ttl: output_dir.join("ontology.ttl"),
            findings_tsv: output_dir.join("findings.tsv"),
            coverage_tsv: output_dir.join("coverage.tsv"),
        }
    }
}

fn read(path: &Path) -> Result<String, StageError> {
    std::fs::read_to_string(path)
        .map_err(|source| StageError::Read { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), StageError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|source| StageError::Write { path: path.to_path_buf(), source })?;
    }
    std::fs::write(path, text)
        .map_err(|source| StageError::Write { path: path.to_path_buf(), source })
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

/// The normalizer described by a config: built-in rules plus the configured
/// override and plural exception files.
pub fn build_normalizer(config: &PipelineConfig) -> Result<Normalizer, StageError> {
    let mut normalizer = Normalizer::new();
    normalizer.set_review_max_distance(config.review_max_distance);
    if let Some(path) = &config.curation_overrides {
        normalizer.load_overrides(&read(path)?)?;
    }
    if let Some(path) = &config.plural_exceptions {
        normalizer.load_plural_exceptions(&read(path)?);
    }
    Ok(normalizer)
}

/// Every label the record tables contribute to entity merging.
pub fn collect_labels(
    foods: &[FoodRecord],
    contents: &[ContentRecord],
    associations: &[AssociationRecord],
    drugs: &[DrugRecord],
) -> Vec<RawLabel> {
    let mut labels = Vec::new();
    for f in foods {
        labels.push(RawLabel {
            text: f.description.clone(),
            kind: EntityKind::Food,
            provenance: f.provenance.clone(),
        });
        if !f.food_group.trim().is_empty() {
            labels.push(RawLabel {
                text: f.food_group.clone(),
                kind: EntityKind::FoodGroup,
                provenance: f.provenance.clone(),
            });
        }
    }
    for c in contents {
        labels.push(RawLabel {
            text: c.flavonoid_name.clone(),
            kind: EntityKind::Flavonoid,
            provenance: c.provenance.clone(),
        });
        if !c.subclass.trim().is_empty() {
            labels.push(RawLabel {
                text: c.subclass.clone(),
                kind: EntityKind::FlavonoidSubclass,
                provenance: c.provenance.clone(),
            });
        }
    }
    for a in associations {
        labels.push(RawLabel {
            text: a.flavonoid_name.clone(),
            kind: EntityKind::Flavonoid,
            provenance: a.provenance.clone(),
        });
        labels.push(RawLabel {
            text: a.disease_label.clone(),
            kind: EntityKind::Disease,
            provenance: a.provenance.clone(),
        });
    }
    for d in drugs {
        labels.push(RawLabel {
            text: d.drug_name.clone(),
            kind: EntityKind::Drug,
            provenance: d.provenance.clone(),
        });
        if let Some(label) = &d.disease_label {
            labels.push(RawLabel {
                text: label.clone(),
                kind: EntityKind::Disease,
                provenance: d.provenance.clone(),
            });
        }
    }
    labels
}

#[derive(Debug, Clone, Default)]
pub struct IngestCounts {
    pub foods: usize,
    pub contents: usize,
    pub associations: usize,
    pub drugs: usize,
}

/// Parses the configured input tables and re-serializes them in canonical
/// column order under `<output>/ingest/`.
pub fn stage_ingest(config: &PipelineConfig) -> Result<IngestCounts, StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let reader = TableReader::with_renames(&config.column_renames);
    let foods = reader.foods(&read(&config.inputs.foods)?, &file_name(&config.inputs.foods))?;
    let contents =
        reader.contents(&read(&config.inputs.contents)?, &file_name(&config.inputs.contents))?;
    let associations = reader
        .associations(&read(&config.inputs.associations)?, &file_name(&config.inputs.associations))?;
    let drugs = match &config.inputs.drugs {
        Some(path) => reader.drugs(&read(path)?, &file_name(path))?,
        None => Vec::new(),
    };
    write(&paths.foods_csv, &write_food_table(&foods))?;
    write(&paths.contents_csv, &write_flavonoid_table(&contents))?;
    write(&paths.associations_csv, &write_disease_associations(&associations))?;
    write(&paths.drugs_csv, &write_drug_table(&drugs))?;
    Ok(IngestCounts {
        foods: foods.len(),
        contents: contents.len(),
        associations: associations.len(),
        drugs: drugs.len(),
    })
}

struct IngestedTables {
    foods: Vec<FoodRecord>,
    contents: Vec<ContentRecord>,
    associations: Vec<AssociationRecord>,
    drugs: Vec<DrugRecord>,
}

fn reload_ingested(paths: &ArtifactPaths) -> Result<IngestedTables, StageError> {
    Ok(IngestedTables {
        foods: parse_food_table(&read(&paths.foods_csv)?, "foods.csv")?,
        contents: parse_flavonoid_table(&read(&paths.contents_csv)?, "contents.csv")?,
        associations: parse_disease_associations(
            &read(&paths.associations_csv)?,
            "associations.csv",
        )?,
        drugs: parse_drug_table(&read(&paths.drugs_csv)?, "drugs.csv")?,
    })
}

fn sanitize_tsv(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

pub fn entities_to_tsv(entities: &[CanonicalEntity]) -> String {
    let mut out = String::from("kind\tcanonical_key\tdisplay_label\n");
    for entity in entities {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            entity.kind.as_str(),
            sanitize_tsv(&entity.canonical_key),
            sanitize_tsv(&entity.display_label),
        ));
    }
    out
}

pub fn entities_from_tsv(text: &str) -> Result<Vec<CanonicalEntity>, StageError> {
    let bad = |line: usize, message: String| StageError::BadArtifact {
        file: "entities.tsv",
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "kind\tcanonical_key\tdisplay_label")) => {}
        _ => return Err(bad(1, "missing header".to_string())),
    }
    let mut entities = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(i + 1, format!("expected 3 fields, found {}", fields.len())));
        }
        let kind = EntityKind::parse(fields[0])
            .ok_or_else(|| bad(i + 1, format!("unknown entity kind {:?}", fields[0])))?;
        entities.push(CanonicalEntity {
            kind,
            canonical_key: fields[1].to_string(),
            display_label: fields[2].to_string(),
            merged_from: Vec::new(),
        });
    }
    Ok(entities)
}

pub fn merge_report_to_tsv(report: &MergeReport) -> String {
    let mut out = String::from("record\tkind\ta\tb\tdetail\n");
    for merge in &report.merges {
        out.push_str(&format!(
            "merged\t{}\t{}\t{}\t{}\n",
            merge.kind.as_str(),
            sanitize_tsv(&merge.canonical_key),
            sanitize_tsv(&merge.display_label),
            sanitize_tsv(&merge.absorbed.join("|")),
        ));
    }
    for pair in &report.review_queue {
        out.push_str(&format!(
            "review\t{}\t{}\t{}\t{}\n",
            pair.kind.as_str(),
            sanitize_tsv(&pair.a),
            sanitize_tsv(&pair.b),
            pair.distance,
        ));
    }
    out
}

/// Merges the ingested labels into canonical entities and writes the entity
/// table plus the merge report.
pub fn stage_normalize(config: &PipelineConfig) -> Result<(usize, usize), StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let tables = reload_ingested(&paths)?;
    let normalizer = build_normalizer(config)?;
    let labels =
        collect_labels(&tables.foods, &tables.contents, &tables.associations, &tables.drugs);
    let (entities, report) = normalizer.merge_entities(&labels)?;
    write(&paths.entities_tsv, &entities_to_tsv(&entities))?;
    write(&paths.merge_report_tsv, &merge_report_to_tsv(&report))?;
    Ok((entities.len(), report.review_queue.len()))
}

pub fn mappings_to_tsv(mappings: &[MappingResult]) -> String {
    let mut out = String::from("kind\tentity_key\toutcome\tiri_or_curie\tvocabulary\tmatch_quality\n");
    for mapping in mappings {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            mapping.kind.as_str(),
            sanitize_tsv(&mapping.entity_key),
            mapping.outcome.as_str(),
            sanitize_tsv(&mapping.iri_or_curie),
            mapping.vocabulary.as_deref().unwrap_or(""),
            mapping.match_quality,
        ));
    }
    out
}

pub fn mappings_from_tsv(text: &str) -> Result<Vec<MappingResult>, StageError> {
    let bad = |line: usize, message: String| StageError::BadArtifact {
        file: "mappings.tsv",
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "kind\tentity_key\toutcome\tiri_or_curie\tvocabulary\tmatch_quality")) => {}
        _ => return Err(bad(1, "missing header".to_string())),
    }
    let mut mappings = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(bad(i + 1, format!("expected 6 fields, found {}", fields.len())));
        }
        let kind = EntityKind::parse(fields[0])
            .ok_or_else(|| bad(i + 1, format!("unknown entity kind {:?}", fields[0])))?;
        let outcome = MatchOutcome::parse(fields[2])
            .ok_or_else(|| bad(i + 1, format!("unknown match outcome {:?}", fields[2])))?;
        let match_quality = fields[5]
            .parse::<u8>()
            .map_err(|_| bad(i + 1, format!("bad match quality {:?}", fields[5])))?;
        mappings.push(MappingResult {
            kind,
            entity_key: fields[1].to_string(),
            outcome,
            iri_or_curie: fields[3].to_string(),
            vocabulary: if fields[4].is_empty() { None } else { Some(fields[4].to_string()) },
            match_quality,
        });
    }
    Ok(mappings)
}

fn load_vocabularies(config: &PipelineConfig) -> Result<Vec<Vocabulary>, StageError> {
    let names: Vec<&String> = match &config.vocabulary_order {
        Some(order) => order.iter().collect(),
        None => config.vocabularies.iter().map(|v| &v.name).collect(),
    };
    let by_name: BTreeMap<&str, &PathBuf> =
        config.vocabularies.iter().map(|v| (v.name.as_str(), &v.path)).collect();
    let mut vocabularies = Vec::new();
    for name in names {
        let path = by_name[name.as_str()];
        vocabularies.push(load_vocabulary(&read(path)?, name)?);
    }
    Ok(vocabularies)
}

/// Disease terms check the disease vocabulary first; everything else keeps
/// the configured order.
fn vocabulary_order_for<'a>(
    vocabularies: &'a [Vocabulary],
    kind: EntityKind,
) -> Vec<&'a Vocabulary> {
    let mut refs: Vec<&Vocabulary> = vocabularies.iter().collect();
    if kind == EntityKind::Disease {
        refs.sort_by_key(|v| if v.name.eq_ignore_ascii_case("doid") { 0 } else { 1 });
    }
    refs
}

/// Maps every canonical entity onto the recycled vocabularies and writes the
/// mapping table and its summary report.
pub fn stage_map(config: &PipelineConfig) -> Result<crate::recycle::MappingReport, StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let entities = entities_from_tsv(&read(&paths.entities_tsv)?)?;
    let vocabularies = load_vocabularies(config)?;
    let normalizer = build_normalizer(config)?;
    let mut mappings = Vec::with_capacity(entities.len());
    for entity in &entities {
        let ordered = vocabulary_order_for(&vocabularies, entity.kind);
        mappings.push(map_term(entity, &ordered, &normalizer, &config.namespace)?);
    }
    let report = mapping_report(&mappings);
    write(&paths.mappings_tsv, &mappings_to_tsv(&mappings))?;
    write(&paths.mapping_report_tsv, &report.to_tsv())?;
    Ok(report)
}

/// Builds the validated graph from the staged artifacts and exports it.
pub fn stage_build_graph(config: &PipelineConfig) -> Result<(usize, usize), StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let tables = reload_ingested(&paths)?;
    let entities = entities_from_tsv(&read(&paths.entities_tsv)?)?;
    let mappings = mappings_from_tsv(&read(&paths.mappings_tsv)?)?;
    let normalizer = build_normalizer(config)?;
    let graph = build_graph(
        &BuildInputs {
            foods: &tables.foods,
            contents: &tables.contents,
            associations: &tables.associations,
            drugs: &tables.drugs,
            entities: &entities,
            mappings: &mappings,
        },
        &normalizer,
        &BuildOptions {
            namespace: config.namespace.clone(),
            extra_subclasses: config.extra_subclasses.clone(),
            schema: load_schema(config)?,
        },
    )?;
    let (nodes_csv, edges_csv) = export_graph_csv(&graph);
    write(&paths.nodes_csv, &nodes_csv)?;
    write(&paths.edges_csv, &edges_csv)?;
    Ok((graph.node_count(), graph.edge_count()))
}

/// Built-in edge rules plus the configured extension file, if any.
fn load_schema(config: &PipelineConfig) -> Result<GraphSchema, StageError> {
    let mut schema = GraphSchema::builtin();
    if let Some(path) = &config.schema_extension {
        schema.extend_from_tsv(&read(path)?)?;
    }
    Ok(schema)
}

/// Reloads the exported graph, tolerating structural damage. The findings
/// describe whatever damage was found.
pub fn load_graph(config: &PipelineConfig) -> Result<(KnowledgeGraph, Vec<Finding>), StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    Ok(import_graph_csv(&read(&paths.nodes_csv)?, &read(&paths.edges_csv)?)?)
}

pub fn load_prefixes(config: &PipelineConfig) -> Result<PrefixMap, StageError> {
    Ok(PrefixMap::from_tsv(&read(&config.prefixes)?)?)
}

fn sheet_file_name(sheet_name: &str) -> String {
    let slug: String = sheet_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{slug}.csv")
}

/// Derives the template layers from the exported graph and writes one CSV
/// per sheet, replacing whatever the directory held before.
pub fn stage_emit_templates(config: &PipelineConfig) -> Result<usize, StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let (graph, findings) = load_graph(config)?;
    if has_errors(&findings) {
        return Err(StageError::CorruptGraph {
            errors: findings.iter().filter(|f| f.severity == crate::validate::Severity::Error).count(),
        });
    }
    let prefixes = load_prefixes(config)?;
    let sheets = graph_to_templates(&graph, &prefixes, &config.namespace);
    match std::fs::remove_dir_all(&paths.templates_dir) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(source) => {
            return Err(StageError::Write { path: paths.templates_dir.clone(), source });
        }
    }
    for sheet in &sheets {
        write(&paths.templates_dir.join(sheet_file_name(&sheet.name)), &sheet.to_csv())?;
    }
    Ok(sheets.len())
}

/// Parses every sheet in the templates directory (sorted by file name),
/// compiles and merges them, and writes the canonical Turtle document.
pub fn stage_build_owl(config: &PipelineConfig) -> Result<usize, StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let prefixes = load_prefixes(config)?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&paths.templates_dir)
        .map_err(|source| StageError::Read { path: paths.templates_dir.clone(), source })?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    entries.sort();
    let mut sheets = Vec::with_capacity(entries.len());
    for path in &entries {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        sheets.push(parse_template(&read(path)?, &stem)?);
    }
    let doc = compile_sheets(&sheets, &prefixes)?;
    write(&paths.ontology_ttl, &serialize_turtle(&doc, &prefixes))?;
    Ok(doc.len())
}

/// Audits the exported graph and records coverage. Returns the findings so
/// callers can decide on an exit status.
pub fn stage_validate(config: &PipelineConfig) -> Result<Vec<Finding>, StageError> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let (graph, mut findings) = load_graph(config)?;
    let normalizer = build_normalizer(config)?;
    findings.extend(check_graph(&graph, &normalizer, &config.extra_subclasses));
    findings.sort();
    write(&paths.findings_tsv, &findings_to_tsv(&findings))?;
    if paths.mappings_tsv.exists() {
        let mappings = mappings_from_tsv(&read(&paths.mappings_tsv)?)?;
        write(&paths.coverage_tsv, &coverage_to_tsv(&coverage_stats(&mappings)))?;
    }
    Ok(findings)
}

#[derive(Debug, Clone, Default)]
pub struct PipelineSummary {
    pub counts: IngestCounts,
    pub entities: usize,
    pub review_pairs: usize,
    pub mapped_fraction: f64,
    pub nodes: usize,
    pub edges: usize,
    pub sheets: usize,
    pub axioms: usize,
    pub findings: Vec<Finding>,
}

/// The whole pipeline, stage by stage, on one config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary, StageError> {
    let counts = stage_ingest(config)?;
    let (entities, review_pairs) = stage_normalize(config)?;
    let report = stage_map(config)?;
    let (nodes, edges) = stage_build_graph(config)?;
    let sheets = stage_emit_templates(config)?;
    let axioms = stage_build_owl(config)?;
    let findings = stage_validate(config)?;
    Ok(PipelineSummary {
        counts,
        entities,
        review_pairs,
        mapped_fraction: report.mapped_fraction,
        nodes,
        edges,
        sheets,
        axioms,
        findings,
    })
}
