//! End-to-end pipeline: parse, reason, verbalize, plan, generate templates,
//! map, score, paraphrase, postprocess, and emit the fine-tuning corpus with
//! its manifest. Every stage artifact is written to the output directory so
//! stages can also be run (and validated) independently.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chase::{
    chase_to_jsonl, parse_chase_dump, reason_with, replay, Chase, ReasonOptions, ReplayReport,
    DEFAULT_STEP_BOUND,
};
use crate::corpus::{
    generate_ground_corpus, generate_templates, map_step, preprocess, BackendBoundary,
    CorpusPair, DeterministicBackend, GeneratorBackend, GroundGuard, NlpTask, RemoteBackend,
    TemplateSet,
};
use crate::error::{BackendError, ChaseError, ParseError, VerbalizeError};
use crate::model::{FactStore, Glossary, Origin, Program, Value};
use crate::plan::{build_logic_plan, to_dot, verbalize_plan, VerbalizedPlan};
use crate::quality::{
    filter_scored, paraphrase, postprocess, score_corpus, Postprocessed, QualityReport,
    ScoreContext, Verdict,
};
use crate::verbalize::{verbalize_chase, verbalize_fact, verbalized_to_jsonl, Lexicon};

/// Names of the artifacts a `run` writes into its output directory.
pub mod files {
    pub const CHASE: &str = "chase.jsonl";
    pub const VERBALIZED: &str = "verbalized.jsonl";
    pub const PLAN: &str = "plan.json";
    pub const PLAN_DOT: &str = "plan.dot";
    pub const TEMPLATES: &str = "templates.json";
    pub const TRANSCRIPT: &str = "transcript.jsonl";
    pub const CORPUS_RAW: &str = "corpus_raw.jsonl";
    pub const QUALITY_REPORT: &str = "quality_report.jsonl";
    pub const TRAIN: &str = "train.jsonl";
    pub const VAL: &str = "val.jsonl";
    pub const MANIFEST: &str = "manifest.json";
}

/// Which corpus to synthesize: the full chase corpus or the ground-facts
/// ablation baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorpusMode {
    Chase,
    Ground,
}

impl fmt::Display for CorpusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusMode::Chase => "chase",
            CorpusMode::Ground => "ground",
        })
    }
}

impl FromStr for CorpusMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "chase" => Ok(CorpusMode::Chase),
            "ground" => Ok(CorpusMode::Ground),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Backend selection: the local deterministic generator or a remote HTTP
/// endpoint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Deterministic,
    Remote(String),
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Deterministic => f.write_str("deterministic"),
            BackendSpec::Remote(url) => write!(f, "{url}"),
        }
    }
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("deterministic") {
            Ok(BackendSpec::Deterministic)
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(BackendSpec::Remote(s.to_string()))
        } else {
            Err(format!("backend must be `deterministic` or an http(s) URL, got `{s}`"))
        }
    }
}

/// Full configuration of one pipeline run.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub program_path: PathBuf,
    pub facts_path: PathBuf,
    pub glossary_path: PathBuf,
    pub tasks: Vec<NlpTask>,
    pub mode: CorpusMode,
    pub backend: BackendSpec,
    pub threshold: f64,
    pub paraphrases: usize,
    pub split: f64,
    pub seed: u64,
    pub step_bound: usize,
    pub denylist_path: Option<PathBuf>,
    pub model: Option<String>,
    pub emit_dot: bool,
    pub out_dir: PathBuf,
    pub lexicon: Lexicon,
}

impl PipelineConfig {
    /// A config with the documented defaults for everything but the paths.
    pub fn new(
        program_path: impl Into<PathBuf>,
        facts_path: impl Into<PathBuf>,
        glossary_path: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
    ) -> PipelineConfig {
        PipelineConfig {
            program_path: program_path.into(),
            facts_path: facts_path.into(),
            glossary_path: glossary_path.into(),
            tasks: vec![NlpTask::QuestionAnswering, NlpTask::Explanation],
            mode: CorpusMode::Chase,
            backend: BackendSpec::Deterministic,
            threshold: 0.5,
            paraphrases: 0,
            split: 0.9,
            seed: 42,
            step_bound: DEFAULT_STEP_BOUND,
            denylist_path: None,
            model: None,
            emit_dot: false,
            out_dir: out_dir.into(),
            lexicon: Lexicon::default(),
        }
    }
}

/// Stage-tagged pipeline failure; [`PipelineError::exit_code`] maps stages to
/// the CLI exit codes.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("parse error in {file}: {source}")]
    Parse {
        file: String,
        #[source]
        source: ParseError,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("reasoning error: {0}")]
    Reason(#[from] ChaseError),
    #[error("verbalization error: {0}")]
    Verbalize(#[from] VerbalizeError),
    #[error("backend error: {0}")]
    Backend(#[from] BackendError),
    #[error("chase replay failed: {0}")]
    Replay(String),
    #[error("quality stage error: {0}")]
    Quality(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 0 success, 1 usage, 2 parse, 3 reasoning, 4 backend, 5 quality.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Io { .. } => 1,
            PipelineError::Parse { .. } | PipelineError::Validation(_) => 2,
            PipelineError::Reason(_) | PipelineError::Verbalize(_) | PipelineError::Replay(_) => 3,
            PipelineError::Backend(_) => 4,
            PipelineError::Quality(_) => 5,
        }
    }
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

pub fn read_input(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_stage<T>(
    path: &Path,
    parse: impl FnOnce(&str) -> Result<T, ParseError>,
) -> Result<(String, T), PipelineError> {
    let text = read_input(path)?;
    let parsed = parse(&text).map_err(|source| PipelineError::Parse {
        file: path.display().to_string(),
        source,
    })?;
    Ok((text, parsed))
}

/// The three parsed inputs plus their raw texts (for digests).
pub struct LoadedInputs {
    pub program_text: String,
    pub program: Program,
    pub facts_text: String,
    pub store: FactStore,
    pub glossary_text: String,
    pub glossary: Glossary,
    pub denylist: Vec<String>,
}

/// Reads and parses the configured inputs and checks glossary totality:
/// every predicate of the program and the fact store needs an entry of the
/// right arity before any stage runs.
pub fn load_inputs(config: &PipelineConfig) -> Result<LoadedInputs, PipelineError> {
    validate_config(config)?;
    let (program_text, program) = parse_stage(&config.program_path, crate::parse::parse_program)?;
    let (facts_text, store) = parse_stage(&config.facts_path, crate::parse::parse_facts)?;
    let (glossary_text, glossary) =
        parse_stage(&config.glossary_path, crate::parse::parse_glossary)?;

    check_glossary_coverage(&program, &store, &glossary)?;

    let denylist = load_denylist(config.denylist_path.as_deref())?;

    Ok(LoadedInputs {
        program_text,
        program,
        facts_text,
        store,
        glossary_text,
        glossary,
        denylist,
    })
}

/// One denylist phrase per line; `#` comments and blanks are skipped.
pub fn load_denylist(path: Option<&Path>) -> Result<Vec<String>, PipelineError> {
    match path {
        Some(path) => Ok(read_input(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect()),
        None => Ok(Vec::new()),
    }
}

fn validate_config(config: &PipelineConfig) -> Result<(), PipelineError> {
    if config.tasks.is_empty() {
        return Err(PipelineError::Usage("at least one task is required".into()));
    }
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(PipelineError::Usage("threshold must be in [0, 1]".into()));
    }
    if !(0.0..=1.0).contains(&config.split) {
        return Err(PipelineError::Usage("split must be in [0, 1]".into()));
    }
    Ok(())
}

/// Glossary totality: predicates(program ∪ store) ⊆ predicates(glossary),
/// with matching arities.
pub fn check_glossary_coverage(
    program: &Program,
    store: &FactStore,
    glossary: &Glossary,
) -> Result<(), PipelineError> {
    let mut required: BTreeMap<&str, usize> = program.arities().into_iter().collect();
    for pred in store.predicates() {
        if let Some(arity) = store.arity_of(pred) {
            required.entry(pred).or_insert(arity);
        }
    }
    let mut problems = Vec::new();
    for (pred, arity) in required {
        match glossary.entry(pred) {
            None => problems.push(format!("no glossary entry for predicate {pred}")),
            Some(entry) if entry.slots.len() != arity => problems.push(format!(
                "glossary entry for {pred} has {} slots but the predicate has arity {arity}",
                entry.slots.len()
            )),
            Some(_) => {}
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Validation(problems.join("; ")))
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub tasks: Vec<String>,
    pub mode: String,
    pub backend: String,
    pub threshold: f64,
    pub paraphrases: usize,
    pub split: f64,
    pub seed: u64,
    pub step_bound: usize,
    pub model: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StageCounts {
    pub facts: usize,
    pub rules: usize,
    pub steps: usize,
    pub templates: usize,
    pub pairs_mapped: usize,
    pub pairs_kept: usize,
    pub pairs_filtered: usize,
    pub paraphrases_added: usize,
    pub duplicates_removed: usize,
    pub train: usize,
    pub val: usize,
    pub per_task: BTreeMap<String, usize>,
    pub per_rule: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub inputs: BTreeMap<String, InputDigest>,
    pub config: ConfigEcho,
    pub counts: StageCounts,
    pub backend_calls: usize,
}

fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Output directory with cleanup-on-error
// ---------------------------------------------------------------------------

struct OutDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<OutDir, PipelineError> {
        fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    /// Removes everything written so far; used when a stage fails.
    fn discard(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("artifact serializes"));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// The run itself
// ---------------------------------------------------------------------------

/// Result of a pipeline run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

/// Ground mode never consults a backend; this one refuses to be called.
struct NoBackend;

impl GeneratorBackend for NoBackend {
    fn expand(
        &mut self,
        request: &crate::corpus::ExpandRequest,
    ) -> Result<Vec<crate::corpus::TemplateDraft>, BackendError> {
        Err(BackendError::Malformed(format!(
            "no backend configured, request for node {} rejected",
            request.node
        )))
    }

    fn name(&self) -> String {
        "none".into()
    }
}

/// Runs the whole pipeline with the backend named in the config.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    let inputs = load_inputs(config)?;
    match (&config.mode, &config.backend) {
        (CorpusMode::Ground, _) => run_pipeline_on(config, inputs, &mut NoBackend),
        (_, BackendSpec::Deterministic) => {
            let mut backend =
                DeterministicBackend::new(&inputs.program, &inputs.glossary, &config.lexicon)
                    .map_err(|e| PipelineError::Validation(e.to_string()))?;
            run_pipeline_on(config, inputs, &mut backend)
        }
        (_, BackendSpec::Remote(url)) => {
            let mut backend = RemoteBackend::new(url.clone());
            run_pipeline_on(config, inputs, &mut backend)
        }
    }
}

/// Runs the pipeline with an injected backend (used by tests to count and
/// record generator traffic).
pub fn run_pipeline_with_backend(
    config: &PipelineConfig,
    backend: &mut dyn GeneratorBackend,
) -> Result<RunSummary, PipelineError> {
    let inputs = load_inputs(config)?;
    run_pipeline_on(config, inputs, backend)
}

fn run_pipeline_on(
    config: &PipelineConfig,
    inputs: LoadedInputs,
    backend: &mut dyn GeneratorBackend,
) -> Result<RunSummary, PipelineError> {
    let mut out = OutDir::create(&config.out_dir)?;
    match run_stages(config, &inputs, backend, &mut out) {
        Ok(summary) => Ok(summary),
        Err(e) => {
            out.discard();
            Err(e)
        }
    }
}

#[derive(Serialize)]
struct QualityRow {
    prompt: String,
    response: String,
    task: String,
    rule: String,
    template: String,
    subscores: BTreeMap<String, f64>,
    aggregate: f64,
    verdict: Verdict,
}

fn quality_row(pair: &CorpusPair, report: &QualityReport) -> QualityRow {
    QualityRow {
        prompt: pair.prompt.clone(),
        response: pair.response.clone(),
        task: pair.task.to_string(),
        rule: pair.rule.clone(),
        template: pair.template.clone(),
        subscores: report.subscores.clone(),
        aggregate: report.aggregate,
        verdict: report.verdict,
    }
}

struct QualityStage {
    report_rows: Vec<QualityRow>,
    corpus: Postprocessed,
    kept: usize,
    filtered: usize,
    paraphrases_added: usize,
}

/// Score, filter (strict `<= threshold`), paraphrase the kept pairs, and
/// postprocess. Originals are retained; variants inherit provenance and
/// score.
fn quality_stage(
    pairs: Vec<CorpusPair>,
    context: &ScoreContext,
    threshold: f64,
    paraphrases: usize,
    seed: u64,
    split: f64,
) -> QualityStage {
    let reports = score_corpus(&pairs, context, threshold);
    let scored: Vec<(CorpusPair, QualityReport)> = pairs
        .into_iter()
        .zip(reports)
        .map(|(mut pair, report)| {
            pair.score = Some(report.aggregate);
            (pair, report)
        })
        .collect();
    let (kept, removed) = filter_scored(scored, threshold);

    let kept_count = kept.len();
    let mut paraphrases_added = 0usize;
    let mut final_pairs: Vec<CorpusPair> = Vec::new();
    let mut report_rows: Vec<QualityRow> = Vec::new();
    for (index, (pair, mut report)) in kept.into_iter().enumerate() {
        let pair_seed = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let variants = paraphrase(&pair, pair_seed, paraphrases);
        if !variants.is_empty() {
            report.verdict = Verdict::ParaphraseAdded;
        }
        report_rows.push(quality_row(&pair, &report));
        paraphrases_added += variants.len();
        final_pairs.push(pair);
        for variant in variants {
            let variant_report = QualityReport {
                subscores: report.subscores.clone(),
                aggregate: report.aggregate,
                verdict: Verdict::Kept,
            };
            report_rows.push(quality_row(&variant, &variant_report));
            final_pairs.push(variant);
        }
    }
    let filtered = removed.len();
    for (pair, report) in &removed {
        report_rows.push(quality_row(pair, report));
    }
    let corpus = postprocess(final_pairs, seed, split);
    QualityStage { report_rows, corpus, kept: kept_count, filtered, paraphrases_added }
}

/// The standalone `quality` stage: scores an existing raw corpus against the
/// chase of the given inputs and writes the quality artifacts into the
/// configured output directory.
pub fn score_existing_corpus(
    config: &PipelineConfig,
    program: &Program,
    data: &FactStore,
    glossary: &Glossary,
    raw_corpus: &str,
) -> Result<(), PipelineError> {
    validate_config(config)?;
    let mut pairs: Vec<CorpusPair> = Vec::new();
    for (i, line) in raw_corpus.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(line).map_err(|e| {
            PipelineError::Quality(format!("corpus line {}: {e}", i + 1))
        })?);
    }

    let mut reference_sentences: Vec<String> = Vec::new();
    for fact in data.facts() {
        reference_sentences.push(verbalize_fact(&fact.atom, glossary)?);
    }
    let chase = reason_with(data, program, ReasonOptions { step_bound: config.step_bound })?;
    let verbalized = verbalize_chase(&chase, program, glossary, &config.lexicon)?;
    reference_sentences.extend(verbalized.into_iter().map(|v| v.sentence));
    let known_strings: Vec<String> = chase
        .store
        .ground_values()
        .into_iter()
        .filter_map(|v| match v {
            Value::Str(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    let denylist = load_denylist(config.denylist_path.as_deref())?;
    let context = ScoreContext::new(reference_sentences, known_strings, denylist);

    let stage = quality_stage(
        pairs,
        &context,
        config.threshold,
        config.paraphrases,
        config.seed,
        config.split,
    );
    let mut out = OutDir::create(&config.out_dir)?;
    let result = (|| {
        out.write(files::QUALITY_REPORT, &jsonl(stage.report_rows.iter()))?;
        out.write(files::TRAIN, &jsonl(stage.corpus.train.iter()))?;
        out.write(files::VAL, &jsonl(stage.corpus.val.iter()))
    })();
    if result.is_err() {
        out.discard();
    }
    result
}

fn run_stages(
    config: &PipelineConfig,
    inputs: &LoadedInputs,
    backend: &mut dyn GeneratorBackend,
    out: &mut OutDir,
) -> Result<RunSummary, PipelineError> {
    let mut tasks = config.tasks.clone();
    tasks.sort();
    tasks.dedup();

    let lexicon = &config.lexicon;
    let mut counts = StageCounts {
        facts: inputs.store.len(),
        rules: inputs.program.rules.len(),
        ..StageCounts::default()
    };

    // Stage artifacts that exist only in chase mode.
    let mut chase: Option<Chase> = None;
    let mut backend_calls = 0usize;
    let mut backend_name = "none".to_string();

    // Mapped (pre-quality) corpus and the scoring references.
    let mut pairs: Vec<CorpusPair> = Vec::new();
    let mut reference_sentences: Vec<String> = Vec::new();

    // Extensional fact sentences anchor plausibility in both modes.
    for fact in inputs.store.facts() {
        reference_sentences.push(verbalize_fact(&fact.atom, &inputs.glossary)?);
    }

    // Fact-level pairs are shared by both modes (the paper's baseline
    // questions must be answerable from either corpus).
    pairs.extend(generate_ground_corpus(&inputs.store, &inputs.glossary, &tasks)?);

    if config.mode == CorpusMode::Chase {
        let computed = reason_with(
            &inputs.store,
            &inputs.program,
            ReasonOptions { step_bound: config.step_bound },
        )?;
        out.write(files::CHASE, &chase_to_jsonl(&computed))?;
        counts.steps = computed.steps.len();

        let verbalized =
            verbalize_chase(&computed, &inputs.program, &inputs.glossary, lexicon)?;
        out.write(files::VERBALIZED, &verbalized_to_jsonl(&verbalized))?;
        reference_sentences.extend(verbalized.iter().map(|v| v.sentence.clone()));

        let plan = build_logic_plan(&inputs.program);
        let verbalized_plan: VerbalizedPlan =
            verbalize_plan(&plan, &inputs.program, &inputs.glossary, lexicon)?;
        out.write(
            files::PLAN,
            &serde_json::to_string_pretty(&verbalized_plan).expect("plan serializes"),
        )?;
        if config.emit_dot {
            out.write(files::PLAN_DOT, &to_dot(&plan))?;
        }

        let requests: Vec<_> = tasks
            .iter()
            .flat_map(|task| preprocess(&verbalized_plan, *task))
            .collect();
        let mut boundary = BackendBoundary::new(GroundGuard::from_store(&inputs.store));
        let templates: TemplateSet = generate_templates(&requests, backend, &mut boundary)?;
        out.write(
            files::TEMPLATES,
            &serde_json::to_string_pretty(&templates).expect("templates serialize"),
        )?;
        out.write(files::TRANSCRIPT, &{
            let mut t = String::new();
            for payload in boundary.transcript() {
                t.push_str(payload);
                t.push('\n');
            }
            t
        })?;
        counts.templates = templates.len();
        backend_calls = boundary.calls();
        backend_name = backend.name();

        for step in &verbalized {
            pairs.extend(map_step(&templates, step));
        }
        chase = Some(computed);
    }

    out.write(files::CORPUS_RAW, &jsonl(pairs.iter()))?;
    counts.pairs_mapped = pairs.len();

    // Quality: score, filter, paraphrase, postprocess.
    let known_strings: Vec<String> = match &chase {
        Some(c) => c.store.ground_values(),
        None => inputs.store.ground_values(),
    }
    .into_iter()
    .filter_map(|v| match v {
        Value::Str(s) => Some(s.clone()),
        _ => None,
    })
    .collect();
    let context = ScoreContext::new(
        reference_sentences,
        known_strings,
        inputs.denylist.clone(),
    );
    let stage = quality_stage(
        pairs,
        &context,
        config.threshold,
        config.paraphrases,
        config.seed,
        config.split,
    );
    counts.pairs_kept = stage.kept;
    counts.pairs_filtered = stage.filtered;
    counts.paraphrases_added = stage.paraphrases_added;
    counts.duplicates_removed = stage.corpus.duplicates_removed;
    counts.train = stage.corpus.train.len();
    counts.val = stage.corpus.val.len();
    for pair in stage.corpus.train.iter().chain(stage.corpus.val.iter()) {
        *counts.per_task.entry(pair.task.to_string()).or_insert(0) += 1;
        *counts.per_rule.entry(pair.rule.clone()).or_insert(0) += 1;
    }
    out.write(files::QUALITY_REPORT, &jsonl(stage.report_rows.iter()))?;
    out.write(files::TRAIN, &jsonl(stage.corpus.train.iter()))?;
    out.write(files::VAL, &jsonl(stage.corpus.val.iter()))?;

    let mut manifest_inputs = BTreeMap::new();
    manifest_inputs.insert(
        "program".to_string(),
        InputDigest {
            path: config.program_path.display().to_string(),
            sha256: sha256_hex(&inputs.program_text),
        },
    );
    manifest_inputs.insert(
        "facts".to_string(),
        InputDigest {
            path: config.facts_path.display().to_string(),
            sha256: sha256_hex(&inputs.facts_text),
        },
    );
    manifest_inputs.insert(
        "glossary".to_string(),
        InputDigest {
            path: config.glossary_path.display().to_string(),
            sha256: sha256_hex(&inputs.glossary_text),
        },
    );
    let manifest = Manifest {
        inputs: manifest_inputs,
        config: ConfigEcho {
            tasks: tasks.iter().map(|t| t.to_string()).collect(),
            mode: config.mode.to_string(),
            backend: backend_name,
            threshold: config.threshold,
            paraphrases: config.paraphrases,
            split: config.split,
            seed: config.seed,
            step_bound: config.step_bound,
            model: config.model.clone(),
        },
        counts,
        backend_calls,
    };
    out.write(
        files::MANIFEST,
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    Ok(RunSummary { manifest, out_dir: config.out_dir.clone() })
}

// ---------------------------------------------------------------------------
// Replay validation entry point
// ---------------------------------------------------------------------------

/// Parses a chase dump and replays it against the program and facts.
pub fn validate_chase(
    dump: &str,
    program: &Program,
    extensional: &FactStore,
) -> Result<ReplayReport, PipelineError> {
    let steps = parse_chase_dump(dump).map_err(PipelineError::Validation)?;
    Ok(replay(&steps, program, extensional))
}

/// Convenience used by tests: counts extensional facts in a store.
pub fn extensional_count(store: &FactStore) -> usize {
    store
        .facts()
        .iter()
        .filter(|f| f.origin == Origin::Extensional)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glossary_coverage_checks_presence_and_arity() {
        let program = crate::parse::parse_program("Open(x,y,t) -> Accepted(x,y,t).").unwrap();
        let store = crate::parse::parse_facts("Open(\"a\",0.1,1).\nMarketClosed(5).").unwrap();
        let full = crate::parse::parse_glossary(
            "Open(x, y, t): \"{x} opens {y} at {t}\"\n\
             Accepted(x, y, t): \"{y} by {x} is accepted at {t}\"\n\
             MarketClosed(t): \"{t} is closed\"",
        )
        .unwrap();
        assert!(check_glossary_coverage(&program, &store, &full).is_ok());

        // Missing entry.
        let missing = crate::parse::parse_glossary(
            "Open(x, y, t): \"{x} opens {y} at {t}\"\n\
             Accepted(x, y, t): \"{y} by {x} is accepted at {t}\"",
        )
        .unwrap();
        let err = check_glossary_coverage(&program, &store, &missing).unwrap_err();
        assert!(err.to_string().contains("MarketClosed"));
        assert_eq!(err.exit_code(), 2);

        // Entry with the wrong arity.
        let wrong = crate::parse::parse_glossary(
            "Open(x, y): \"{x} opens {y}\"\n\
             Accepted(x, y, t): \"{y} by {x} is accepted at {t}\"\n\
             MarketClosed(t): \"{t} is closed\"",
        )
        .unwrap();
        let err = check_glossary_coverage(&program, &store, &wrong).unwrap_err();
        assert!(err.to_string().contains("arity"));
    }

    #[test]
    fn backend_specs_parse() {
        assert_eq!("deterministic".parse::<BackendSpec>().unwrap(), BackendSpec::Deterministic);
        assert_eq!(
            "http://localhost:9000".parse::<BackendSpec>().unwrap(),
            BackendSpec::Remote("http://localhost:9000".into())
        );
        assert!("ftp://x".parse::<BackendSpec>().is_err());
        assert_eq!("chase".parse::<CorpusMode>().unwrap(), CorpusMode::Chase);
        assert!("both".parse::<CorpusMode>().is_err());
    }

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(PipelineError::Usage("x".into()).exit_code(), 1);
        assert_eq!(
            PipelineError::Parse {
                file: "f".into(),
                source: ParseError::new(1, 1, crate::error::ParseErrorKind::Syntax, "x"),
            }
            .exit_code(),
            2
        );
        assert_eq!(PipelineError::Reason(ChaseError::DivisionByZero).exit_code(), 3);
        assert_eq!(
            PipelineError::Backend(BackendError::Transport("x".into())).exit_code(),
            4
        );
        assert_eq!(PipelineError::Quality("x".into()).exit_code(), 5);
    }
}
