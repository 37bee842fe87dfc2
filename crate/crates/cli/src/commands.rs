use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use trajkg::analytics::{
    all_overlaps, assessment_coverage, bias_warning, bottlenecks, class_coverage_timeline,
    class_profile, comprehensiveness, score_groups, student_comparison, CoverageReport,
};
use trajkg::graph::{self, build_graph, export_dot, KnowledgeGraph};
use trajkg::ingest::{
    corpus_files, load_materials, read_refined_file, refine_corpus, write_refined_list,
};
use trajkg::mapping::{
    load_assessment, map_assessment, read_mappings_jsonl, validate_mappings, write_mappings_jsonl,
    MappingConfig,
};
use trajkg::provider::{DeterministicBackend, ExtractionProvider, RemoteBackend, TemplateSet};
use trajkg::report::{
    self, ClassAssessment, ClassReport, CoverageSummary, GroupsReport, Report, StudentReport,
};
use trajkg::trajectory::{
    build_cohort, read_responses, record_responses, roster_from, total_scores,
    write_response_store, Cohort, Course,
};
use trajkg::Diagnostic;

use crate::config::{Format, ProviderChoice, RunConfig};
use crate::error::CliError;

/// Configuration with every flag applied and every path resolved.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub format: Format,
    pub provider: ProviderChoice,
}

impl Context {
    fn refined_path(&self) -> PathBuf {
        self.config
            .paths
            .refined
            .clone()
            .unwrap_or_else(|| self.out.join("refined.tsv"))
    }

    fn graph_path(&self) -> PathBuf {
        self.config
            .paths
            .graph
            .clone()
            .unwrap_or_else(|| self.out.join("graph.json"))
    }

    fn mappings_dir(&self) -> PathBuf {
        self.out.join("mappings")
    }

    fn store_path(&self) -> PathBuf {
        self.out.join("responses.csv")
    }

    fn make_provider(&self) -> Result<ExtractionProvider, CliError> {
        let settings = &self.config.provider;
        let templates = match &settings.template_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::default(),
        };
        let provider = match self.provider {
            ProviderChoice::Deterministic => ExtractionProvider::new(
                Box::new(DeterministicBackend::with_tau(self.config.thresholds.tau)),
                templates,
            ),
            ProviderChoice::Remote => ExtractionProvider::new(
                Box::new(RemoteBackend::from_env(settings.remote_config())?),
                templates,
            ),
        };
        Ok(provider.with_batch_size(settings.batch_size))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| io_error(path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("serializable"));
        text.push('\n');
    }
    write_text(path, &text)
}

fn warn_all(diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        tracing::warn!("{d}");
    }
}

fn write_audit(ctx: &Context, name: &str, provider: &ExtractionProvider) -> Result<(), CliError> {
    write_jsonl(
        &ctx.out.join("audit").join(format!("{name}.jsonl")),
        &provider.audit_log(),
    )
}

pub fn ingest(ctx: &Context, corpus: Option<PathBuf>) -> Result<(), CliError> {
    let dir = corpus
        .or_else(|| ctx.config.paths.corpus.clone())
        .ok_or_else(|| {
            CliError::Input("no corpus directory given (argument or paths.corpus)".into())
        })?;
    if !dir.is_dir() {
        return Err(CliError::Input(format!(
            "corpus directory {} does not exist",
            dir.display()
        )));
    }
    let files = corpus_files(&dir)?;
    if files.is_empty() {
        return Err(CliError::Input(format!(
            "no .txt or .md files in {}",
            dir.display()
        )));
    }
    let docs = load_materials(&files)?;
    let provider = ctx.make_provider()?;
    let result = refine_corpus(&docs, &provider);
    write_audit(ctx, "ingest", &provider)?;
    let output = result?;
    warn_all(&output.diagnostics);

    let path = ctx.refined_path();
    let mut buf = Vec::new();
    write_refined_list(&output.statements, &mut buf).map_err(|e| io_error(&path, e))?;
    write_text(
        &path,
        &String::from_utf8(buf).expect("refined list is UTF-8"),
    )?;
    write_jsonl(
        &ctx.out.join("refined.diagnostics.jsonl"),
        &output.diagnostics,
    )?;
    println!(
        "{} statements from {} documents",
        output.statements.len(),
        docs.len()
    );
    Ok(())
}

pub fn build(ctx: &Context, refined: Option<PathBuf>) -> Result<(), CliError> {
    let path = refined.unwrap_or_else(|| ctx.refined_path());
    let statements = read_refined_file(&path)?;
    let provider = ctx.make_provider()?;
    let extracted = (|| {
        let nodes = provider.extract_nodes(&statements)?;
        if nodes.nodes.is_empty() {
            return Err(CliError::Validation("zero nodes extracted".into()));
        }
        let relations = provider.extract_relations(&nodes.nodes, &statements)?;
        Ok((nodes, relations))
    })();
    write_audit(ctx, "build-graph", &provider)?;
    let (nodes, relations) = extracted?;

    let (graph, build_diags) = build_graph(&nodes.nodes, &relations.relations);
    let mut diagnostics = nodes.diagnostics;
    diagnostics.extend(relations.diagnostics);
    diagnostics.extend(build_diags);
    warn_all(&diagnostics);
    write_jsonl(&ctx.out.join("graph.diagnostics.jsonl"), &diagnostics)?;

    if graph.node_count() == 0 {
        return Err(CliError::Validation("graph has no nodes".into()));
    }
    let problems = graph.validate();
    if !problems.is_empty() {
        warn_all(&problems);
        return Err(CliError::Validation(format!(
            "graph failed validation with {} problems",
            problems.len()
        )));
    }
    write_text(&ctx.graph_path(), &graph::to_json(&graph))?;
    println!(
        "{} nodes, {} edges, {} diagnostics",
        graph.node_count(),
        graph.edge_count(),
        diagnostics.len()
    );
    Ok(())
}

fn load_graph(ctx: &Context) -> Result<KnowledgeGraph, CliError> {
    Ok(graph::load(&ctx.graph_path())?)
}

fn bank_paths(ctx: &Context, given: Vec<PathBuf>) -> Result<Vec<PathBuf>, CliError> {
    let banks = if given.is_empty() {
        ctx.config.paths.assessments.clone()
    } else {
        given
    };
    if banks.is_empty() {
        return Err(CliError::Input(
            "no question banks given (arguments or paths.assessments)".into(),
        ));
    }
    Ok(banks)
}

pub fn map(ctx: &Context, banks: Vec<PathBuf>) -> Result<(), CliError> {
    let banks = bank_paths(ctx, banks)?;
    let assessments = banks
        .iter()
        .map(|p| load_assessment(p))
        .collect::<Result<Vec<_>, _>>()?;
    let graph = load_graph(ctx)?;
    let provider = ctx.make_provider()?;
    let config = MappingConfig {
        tau: ctx.config.thresholds.tau,
    };
    let mut result = Ok(());
    for assessment in &assessments {
        let outcome = match map_assessment(assessment, &graph, &provider, &config) {
            Ok(outcome) => outcome,
            Err(e) => {
                result = Err(CliError::from(e));
                break;
            }
        };
        let check = validate_mappings(
            &outcome.mappings,
            &graph,
            assessment,
            ctx.config.thresholds.unmapped_ceiling,
        );
        let mut diagnostics = outcome.diagnostics;
        diagnostics.extend(check.diagnostics);
        warn_all(&diagnostics);

        let dir = ctx.mappings_dir();
        let path = dir.join(format!("{}.jsonl", assessment.assessment_id));
        let mut buf = Vec::new();
        write_mappings_jsonl(&outcome.mappings, &mut buf).map_err(|e| io_error(&path, e))?;
        write_text(&path, &String::from_utf8(buf).expect("mappings are UTF-8"))?;
        write_jsonl(
            &dir.join(format!("{}.diagnostics.jsonl", assessment.assessment_id)),
            &diagnostics,
        )?;
        println!(
            "{}: {} questions, {} unmapped",
            assessment.assessment_id,
            outcome.mappings.len(),
            outcome.unmapped.len()
        );
    }
    write_audit(ctx, "map", &provider)?;
    result
}

fn load_course(ctx: &Context, graph: &KnowledgeGraph) -> Result<Course, CliError> {
    let banks = bank_paths(ctx, Vec::new())?;
    let assessments = banks
        .iter()
        .map(|p| load_assessment(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut mappings = BTreeMap::new();
    for assessment in &assessments {
        let path = ctx
            .mappings_dir()
            .join(format!("{}.jsonl", assessment.assessment_id));
        let file = File::open(&path).map_err(|e| {
            CliError::Input(format!(
                "cannot read {} (run `map` first): {e}",
                path.display()
            ))
        })?;
        let list = read_mappings_jsonl(BufReader::new(file))?;
        let check = validate_mappings(
            &list,
            graph,
            assessment,
            ctx.config.thresholds.unmapped_ceiling,
        );
        let fatal: Vec<&Diagnostic> = check
            .diagnostics
            .iter()
            .filter(|d| d.code != "unmapped ceiling")
            .collect();
        if !fatal.is_empty() {
            let lines: Vec<String> = fatal.iter().map(|d| d.to_string()).collect();
            return Err(CliError::Validation(format!(
                "mappings for {} do not match the graph: {}",
                assessment.assessment_id,
                lines.join("; ")
            )));
        }
        mappings.insert(assessment.assessment_id.clone(), list);
    }
    Ok(Course::new(assessments, mappings)?)
}

pub fn record(ctx: &Context, responses: Option<PathBuf>) -> Result<(), CliError> {
    let path = responses
        .or_else(|| ctx.config.paths.responses.clone())
        .ok_or_else(|| {
            CliError::Input("no responses file given (argument or paths.responses)".into())
        })?;
    let banks = bank_paths(ctx, Vec::new())?;
    let assessments = banks
        .iter()
        .map(|p| load_assessment(p))
        .collect::<Result<Vec<_>, _>>()?;
    let records = record_responses(&path, &assessments)?;
    let store = ctx.store_path();
    let mut buf = Vec::new();
    write_response_store(&records, &mut buf)
        .map_err(|e| CliError::Input(format!("cannot encode responses: {e}")))?;
    write_text(
        &store,
        &String::from_utf8(buf).expect("responses are UTF-8"),
    )?;
    println!(
        "{} responses from {} students",
        records.len(),
        roster_from(&records).len()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReportKind {
    Coverage,
    Bias,
    Student {
        id: String,
        assessment: Option<String>,
    },
    Class,
    Groups {
        k: usize,
    },
    Bottlenecks,
    Comprehensiveness,
}

struct Loaded {
    graph: KnowledgeGraph,
    course: Course,
}

impl Loaded {
    fn new(ctx: &Context) -> Result<Self, CliError> {
        let graph = load_graph(ctx)?;
        let course = load_course(ctx, &graph)?;
        Ok(Loaded { graph, course })
    }

    fn coverages(&self) -> Vec<CoverageReport> {
        self.course
            .assessments
            .iter()
            .map(|a| {
                assessment_coverage(
                    &self.graph,
                    &a.assessment_id,
                    self.course.mappings_for(&a.assessment_id),
                )
            })
            .collect()
    }

    fn responses(
        &self,
        ctx: &Context,
    ) -> Result<Vec<trajkg::trajectory::ResponseRecord>, CliError> {
        let path = ctx.store_path();
        let file = File::open(&path).map_err(|e| {
            CliError::Input(format!(
                "cannot read {} (run `record` first): {e}",
                path.display()
            ))
        })?;
        Ok(read_responses(
            BufReader::new(file),
            &self.course.assessments,
        )?)
    }

    fn cohort(&self, responses: &[trajkg::trajectory::ResponseRecord]) -> Result<Cohort, CliError> {
        let roster = roster_from(responses);
        let cohort = build_cohort(&self.graph, &self.course, responses, &roster)?;
        Ok(cohort)
    }
}

fn emit<R: Report>(ctx: &Context, name: &str, report: &R) -> Result<(), CliError> {
    let dir = ctx.out.join("reports");
    if ctx.format.json() {
        write_text(&dir.join(format!("{name}.json")), &report::to_json(report))?;
    }
    if ctx.format.markdown() {
        write_text(&dir.join(format!("{name}.md")), &report.markdown())?;
    }
    Ok(())
}

fn student_report(
    ctx: &Context,
    loaded: &Loaded,
    id: &str,
    assessment: Option<&str>,
) -> Result<(StudentReport, String), CliError> {
    let responses = loaded.responses(ctx)?;
    let cohort = loaded.cohort(&responses)?;
    if !cohort.roster.iter().any(|s| s == id) {
        return Err(CliError::Input(format!("unknown student {id:?}")));
    }
    let target = match assessment {
        Some(a) => loaded
            .course
            .assessment(a)
            .ok_or_else(|| CliError::Input(format!("unknown assessment {a:?}")))?,
        None => loaded
            .course
            .assessments
            .last()
            .ok_or_else(|| CliError::Input("course has no assessments".into()))?,
    };
    let aid = &target.assessment_id;
    let coverage: CoverageReport =
        assessment_coverage(&loaded.graph, aid, loaded.course.mappings_for(aid));
    let profile = class_profile(
        &loaded.graph,
        &coverage,
        &cohort.snapshots_for(aid),
        &cohort.roster,
    )?;
    let snapshot = cohort
        .snapshot(id, aid)
        .expect("every roster member has a snapshot per assessment");
    let comparison = student_comparison(
        &loaded.graph,
        snapshot,
        &profile,
        &coverage,
        ctx.config.thresholds.lag,
    )?;
    let dot = export_dot(&loaded.graph, Some(&comparison.overlay()))?;
    let timeline = cohort.timelines[id].clone();
    Ok((
        StudentReport {
            comparison,
            timeline,
        },
        dot,
    ))
}

pub fn report(ctx: &Context, kind: ReportKind) -> Result<(), CliError> {
    let loaded = Loaded::new(ctx)?;
    let thresholds = ctx.config.thresholds.analytics();
    match kind {
        ReportKind::Coverage => {
            let assessments = loaded.coverages();
            let overlaps = all_overlaps(&assessments)?;
            let summary = CoverageSummary {
                graph: loaded.graph.stamp(),
                assessments,
                overlaps,
            };
            emit(ctx, "coverage", &summary)
        }
        ReportKind::Bias => {
            let coverages = loaded.coverages();
            let overlaps = all_overlaps(&coverages)?;
            let warning =
                bias_warning(&coverages, &overlaps, thresholds.overlap, thresholds.floor)?;
            emit(ctx, "bias", &warning)
        }
        ReportKind::Student { id, assessment } => {
            let (report, dot) = student_report(ctx, &loaded, &id, assessment.as_deref())?;
            emit(ctx, &format!("student-{id}"), &report)?;
            write_text(
                &ctx.out.join("reports").join(format!("student-{id}.dot")),
                &dot,
            )
        }
        ReportKind::Class => {
            let responses = loaded.responses(ctx)?;
            let cohort = loaded.cohort(&responses)?;
            let mut assessments = Vec::new();
            for coverage in loaded.coverages() {
                let profile = class_profile(
                    &loaded.graph,
                    &coverage,
                    &cohort.snapshots_for(&coverage.assessment_id),
                    &cohort.roster,
                )?;
                assessments.push(ClassAssessment::from(&profile));
            }
            let timeline = class_coverage_timeline(
                &loaded.graph,
                &loaded.course,
                &cohort.timelines,
                &cohort.roster,
                thresholds.class,
            )?;
            let report = ClassReport {
                roster_size: cohort.roster.len(),
                theta_class: thresholds.class,
                assessments,
                timeline,
            };
            emit(ctx, "class", &report)
        }
        ReportKind::Groups { k } => {
            let responses = loaded.responses(ctx)?;
            let cohort = loaded.cohort(&responses)?;
            let scores = total_scores(&responses, &cohort.roster);
            let groups = score_groups(&scores, k, &loaded.course, &cohort.timelines)?;
            emit(ctx, "groups", &GroupsReport { k, groups })
        }
        ReportKind::Bottlenecks => {
            let responses = loaded.responses(ctx)?;
            let cohort = loaded.cohort(&responses)?;
            let report = bottlenecks(
                &loaded.graph,
                &loaded.course,
                &cohort.timelines,
                &responses,
                thresholds.min_support,
            );
            emit(ctx, "bottlenecks", &report)
        }
        ReportKind::Comprehensiveness => {
            let report = comprehensiveness(&loaded.graph, &loaded.coverages())?;
            emit(ctx, "comprehensiveness", &report)
        }
    }
}

pub fn export(
    ctx: &Context,
    student: Option<String>,
    assessment: Option<String>,
) -> Result<(), CliError> {
    match student {
        None => {
            let graph = load_graph(ctx)?;
            write_text(&ctx.out.join("graph.dot"), &export_dot(&graph, None)?)
        }
        Some(id) => {
            let loaded = Loaded::new(ctx)?;
            let (_, dot) = student_report(ctx, &loaded, &id, assessment.as_deref())?;
            write_text(&ctx.out.join(format!("graph-{id}.dot")), &dot)
        }
    }
}
