//! Command line front end for the flavograph pipeline. Stage subcommands
//! write their artifacts into the configured output directory; data goes to
//! files or standard output, progress lines go to standard error.

use std::io::Read;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flavograph::config::PipelineConfig;
use flavograph::graph::import_graph_csv;
use flavograph::normalize::Normalizer;
use flavograph::pipeline::{
    self, build_normalizer, run_pipeline, stage_build_graph, stage_build_owl, stage_emit_templates,
    stage_ingest, stage_map, stage_normalize, stage_validate, ArtifactPaths,
};
use flavograph::query::run_query;
use flavograph::validate::{check_graph, findings_to_tsv, has_errors, Severity};

/// Exit status meanings: 0 success (warnings allowed), 1 error findings or a
/// stage failure, 2 usage or config problems (also clap's own default).
const EXIT_OK: i32 = 0;
const EXIT_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Parser)]
#[command(
    name = "flavograph",
    version,
    about = "Builds a food/flavonoid/disease knowledge graph and its ontology from CSV tables"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config file (JSON)
    #[arg(short, long, global = true, env = "FLAVOGRAPH_CONFIG", value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the configured output directory (resolved against the
    /// current directory, not the config file)
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Override the configured namespace IRI
    #[arg(long, global = true, value_name = "IRI")]
    namespace: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the input tables and stage them in canonical column order
    Ingest,
    /// Canonicalize and merge entity labels from the staged tables
    Normalize,
    /// Map merged entities onto the configured vocabularies
    Map,
    /// Knowledge graph construction and export
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Template sheet derivation
    Template {
        #[command(subcommand)]
        command: TemplateCommand,
    },
    /// Ontology document construction
    Owl {
        #[command(subcommand)]
        command: OwlCommand,
    },
    /// Run queries against the exported graph
    Query {
        /// Query text; with no -e, reads one query per line from stdin
        #[arg(short = 'e', long = "expr", value_name = "QUERY")]
        expr: Option<String>,
    },
    /// Audit a graph export and report findings
    Validate {
        /// Node export CSV; together with --edges, audits these files
        /// instead of the configured output directory
        #[arg(long, requires = "edges", value_name = "FILE")]
        nodes: Option<PathBuf>,
        /// Edge export CSV
        #[arg(long, requires = "nodes", value_name = "FILE")]
        edges: Option<PathBuf>,
    },
    /// Whole-pipeline orchestration
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Build the graph from staged artifacts and export it as CSV
    Build,
    /// Print one side of the graph export to standard output
    Export {
        #[arg(long, value_enum)]
        what: ExportWhat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportWhat {
    Nodes,
    Edges,
}

#[derive(Subcommand)]
enum TemplateCommand {
    /// Derive the template sheets from the exported graph
    Emit,
}

#[derive(Subcommand)]
enum OwlCommand {
    /// Compile the emitted template sheets into the Turtle ontology
    Build,
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run every stage in order
    Run,
}

fn main() {
    std::process::exit(run(Cli::parse()));
}

fn run(cli: Cli) -> i32 {
    let config = match load_config(&cli.common) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("flavograph: {err:#}");
            return EXIT_USAGE;
        }
    };
    // Direct-mode validate is the one subcommand that works without a config.
    if let Command::Validate { nodes: Some(nodes), edges: Some(edges) } = &cli.command {
        return report(validate_files(nodes, edges, config.as_ref()));
    }
    let Some(config) = config else {
        eprintln!("flavograph: no config file; pass --config or set FLAVOGRAPH_CONFIG");
        return EXIT_USAGE;
    };
    report(dispatch(&cli.command, &config))
}

fn report(result: Result<i32>) -> i32 {
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("flavograph: {err:#}");
            EXIT_FAILURE
        }
    }
}

/// Loads the config when one is named and applies the command line overrides.
fn load_config(common: &Common) -> Result<Option<PipelineConfig>> {
    let Some(path) = &common.config else {
        return Ok(None);
    };
    let mut config = PipelineConfig::load(path)?;
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    if let Some(namespace) = &common.namespace {
        config.namespace = namespace.clone();
        config.validate()?;
    }
    Ok(Some(config))
}

fn dispatch(command: &Command, config: &PipelineConfig) -> Result<i32> {
    match command {
        Command::Ingest => {
            let counts = stage_ingest(config)?;
            eprintln!(
                "ingest: {} foods, {} contents, {} associations, {} drugs",
                counts.foods, counts.contents, counts.associations, counts.drugs
            );
            Ok(EXIT_OK)
        }
        Command::Normalize => {
            let (entities, review_pairs) = stage_normalize(config)?;
            eprintln!("normalize: {entities} entities, {review_pairs} pairs queued for review");
            Ok(EXIT_OK)
        }
        Command::Map => {
            let report = stage_map(config)?;
            eprintln!("map: {:.3} of entities mapped to a vocabulary", report.mapped_fraction);
            Ok(EXIT_OK)
        }
        Command::Graph { command: GraphCommand::Build } => {
            let (nodes, edges) = stage_build_graph(config)?;
            eprintln!("graph build: {nodes} nodes, {edges} edges");
            Ok(EXIT_OK)
        }
        Command::Graph { command: GraphCommand::Export { what } } => {
            let paths = ArtifactPaths::new(&config.output_dir);
            let path = match what {
                ExportWhat::Nodes => &paths.nodes_csv,
                ExportWhat::Edges => &paths.edges_csv,
            };
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}; run `graph build` first", path.display()))?;
            print!("{text}");
            Ok(EXIT_OK)
        }
        Command::Template { command: TemplateCommand::Emit } => {
            let sheets = stage_emit_templates(config)?;
            eprintln!("template emit: {sheets} sheets");
            Ok(EXIT_OK)
        }
        Command::Owl { command: OwlCommand::Build } => {
            let axioms = stage_build_owl(config)?;
            eprintln!("owl build: {axioms} axioms");
            Ok(EXIT_OK)
        }
        Command::Query { expr } => run_queries(config, expr.as_deref()),
        Command::Validate { .. } => {
            let findings = stage_validate(config)?;
            print!("{}", findings_to_tsv(&findings));
            summarize_findings(&findings);
            Ok(if has_errors(&findings) { EXIT_FAILURE } else { EXIT_OK })
        }
        Command::Pipeline { command: PipelineCommand::Run } => {
            let summary = run_pipeline(config)?;
            eprintln!(
                "pipeline run: {} entities, {} nodes, {} edges, {} sheets, {} axioms, \
                 {:.3} mapped",
                summary.entities,
                summary.nodes,
                summary.edges,
                summary.sheets,
                summary.axioms,
                summary.mapped_fraction
            );
            summarize_findings(&summary.findings);
            Ok(if has_errors(&summary.findings) { EXIT_FAILURE } else { EXIT_OK })
        }
    }
}

fn summarize_findings(findings: &[flavograph::Finding]) {
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    let warnings = findings.len() - errors;
    eprintln!("validate: {errors} errors, {warnings} warnings");
}

/// Audits a graph export given directly as a pair of CSV files. The config
/// is optional here and only contributes the normalizer and the list of
/// additionally allowed subclasses.
fn validate_files(nodes: &PathBuf, edges: &PathBuf, config: Option<&PipelineConfig>) -> Result<i32> {
    let nodes_csv = std::fs::read_to_string(nodes)
        .with_context(|| format!("cannot read {}", nodes.display()))?;
    let edges_csv = std::fs::read_to_string(edges)
        .with_context(|| format!("cannot read {}", edges.display()))?;
    let (graph, mut findings) = import_graph_csv(&nodes_csv, &edges_csv)?;
    let normalizer = match config {
        Some(config) => build_normalizer(config)?,
        None => Normalizer::new(),
    };
    let extra = config.map(|c| c.extra_subclasses.clone()).unwrap_or_default();
    findings.extend(check_graph(&graph, &normalizer, &extra));
    findings.sort();
    print!("{}", findings_to_tsv(&findings));
    summarize_findings(&findings);
    Ok(if has_errors(&findings) { EXIT_FAILURE } else { EXIT_OK })
}

/// Runs one query from -e, or one query per non-empty stdin line, stopping
/// at the first syntax error. Result tables go to standard output.
fn run_queries(config: &PipelineConfig, expr: Option<&str>) -> Result<i32> {
    let (graph, findings) = pipeline::load_graph(config)?;
    if has_errors(&findings) {
        return Err(anyhow!(
            "graph export carries {} error-level findings; rebuild or validate it first",
            findings.iter().filter(|f| f.severity == Severity::Error).count()
        ));
    }
    let normalizer = build_normalizer(config)?;
    let mut stdin_text = String::new();
    let lines: Vec<&str> = match expr {
        Some(text) => vec![text],
        None => {
            std::io::stdin().read_to_string(&mut stdin_text).context("cannot read stdin")?;
            stdin_text.lines().filter(|l| !l.trim().is_empty()).collect()
        }
    };
    for line in lines {
        let table = run_query(&graph, &normalizer, line)?;
        for warning in &table.warnings {
            eprintln!("warning: {warning}");
        }
        print!("{}", table.to_tsv());
    }
    Ok(EXIT_OK)
}
