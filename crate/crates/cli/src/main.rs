//! chaseforge: compute a chase, verbalize it, and synthesize fine-tuning
//! corpora from the command line. Every pipeline stage is its own
//! subcommand so stage dumps can be produced and consumed independently.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chaseforge_core::chase::{
    chase_to_jsonl, parse_chase_dump, reason_with, ChaseStep, ReasonOptions, DEFAULT_STEP_BOUND,
};
use chaseforge_core::corpus::{
    generate_ground_corpus, generate_templates, map_step, preprocess, BackendBoundary,
    DeterministicBackend, GroundGuard, NlpTask, RemoteBackend,
};
use chaseforge_core::model::{FactStore, Glossary, Program};
use chaseforge_core::pipeline::{
    self, check_glossary_coverage, read_input, run_pipeline, validate_chase, BackendSpec,
    CorpusMode, PipelineConfig, PipelineError,
};
use chaseforge_core::plan::{build_logic_plan, to_dot, verbalize_plan};
use chaseforge_core::verbalize::{verbalize_steps, verbalized_to_jsonl, Lexicon};

#[derive(Parser)]
#[command(
    name = "chaseforge",
    about = "Reasoning-driven fine-tuning corpus synthesis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Rule program (.vada)
    #[arg(long)]
    program: PathBuf,
    /// Fact database (.facts)
    #[arg(long, visible_alias = "facts")]
    data: Option<PathBuf>,
    /// Glossary (.gloss)
    #[arg(long)]
    glossary: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate inputs; print a summary.
    Parse {
        #[command(flatten)]
        inputs: InputArgs,
        /// Print the canonical program text instead of the summary.
        #[arg(long)]
        print: bool,
    },
    /// Compute the chase and emit the step dump (JSON lines).
    Chase {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STEP_BOUND)]
        step_bound: usize,
    },
    /// Verbalize chase steps through the glossary.
    Verbalize {
        #[command(flatten)]
        inputs: InputArgs,
        /// Chase dump to read; computed on the fly when omitted (needs --data).
        #[arg(long)]
        chase: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and verbalize the logic plan.
    Plan {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also emit the plan as DOT text.
        #[arg(long)]
        emit_plan: Option<PathBuf>,
    },
    /// Generate templates and map them over the chase (raw corpus).
    Corpus {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, value_delimiter = ',', default_value = "qa,explanation")]
        task: Vec<NlpTask>,
        #[arg(long, default_value = "chase")]
        mode: CorpusMode,
        #[arg(long, default_value = "deterministic")]
        backend: BackendSpec,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STEP_BOUND)]
        step_bound: usize,
    },
    /// Score, filter, paraphrase, and split an existing raw corpus.
    Quality {
        #[command(flatten)]
        inputs: InputArgs,
        /// Raw corpus (JSON lines) to score.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        paraphrases: usize,
        #[arg(long)]
        denylist: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        split: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run the whole pipeline and emit corpus, dumps, and manifest.
    Run {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, value_delimiter = ',', default_value = "qa,explanation")]
        task: Vec<NlpTask>,
        #[arg(long, default_value = "chase")]
        mode: CorpusMode,
        #[arg(long, default_value = "deterministic")]
        backend: BackendSpec,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        paraphrases: usize,
        #[arg(long)]
        denylist: Option<PathBuf>,
        #[arg(long, default_value_t = 0.9)]
        split: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STEP_BOUND)]
        step_bound: usize,
        /// Downstream model name, recorded in the manifest.
        #[arg(long)]
        model: Option<String>,
        /// Also write the plan as DOT.
        #[arg(long)]
        emit_plan: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a chase dump against program and facts.
    Validate {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        chase: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not usage errors.
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_program(path: &Path) -> Result<Program, PipelineError> {
    let text = read_input(path)?;
    chaseforge_core::parse_program(&text).map_err(|source| PipelineError::Parse {
        file: path.display().to_string(),
        source,
    })
}

fn load_facts(path: &Path) -> Result<FactStore, PipelineError> {
    let text = read_input(path)?;
    chaseforge_core::parse_facts(&text).map_err(|source| PipelineError::Parse {
        file: path.display().to_string(),
        source,
    })
}

fn load_glossary(path: &Path) -> Result<Glossary, PipelineError> {
    let text = read_input(path)?;
    chaseforge_core::parse_glossary(&text).map_err(|source| PipelineError::Parse {
        file: path.display().to_string(),
        source,
    })
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, PipelineError> {
    value.ok_or_else(|| PipelineError::Usage(format!("--{flag} is required here")))
}

fn emit(out: Option<PathBuf>, contents: &str) -> Result<(), PipelineError> {
    match out {
        Some(path) => std::fs::write(&path, contents).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Reads steps from a dump file, or computes them when no dump is given.
fn obtain_steps(
    program: &Program,
    inputs: &InputArgs,
    dump: &Option<PathBuf>,
) -> Result<Vec<ChaseStep>, PipelineError> {
    match dump {
        Some(path) => {
            let text = read_input(path)?;
            let parsed = parse_chase_dump(&text).map_err(PipelineError::Validation)?;
            let data = load_facts(require(inputs.data.as_ref(), "data")?)?;
            let base = data.len();
            Ok(parsed
                .into_iter()
                .enumerate()
                .map(|(i, line)| ChaseStep {
                    step_id: line.step_id,
                    rule_id: line.rule_id,
                    substitution: line.substitution,
                    body_fact_ids: line.body_fact_ids,
                    derived_fact_id: base + i,
                })
                .collect())
        }
        None => {
            let data = load_facts(require(inputs.data.as_ref(), "data")?)?;
            let chase = reason_with(&data, program, ReasonOptions::default())?;
            Ok(chase.steps)
        }
    }
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Parse { inputs, print } => {
            let program = load_program(&inputs.program)?;
            let store = inputs.data.as_ref().map(|p| load_facts(p)).transpose()?;
            let glossary = inputs.glossary.as_ref().map(|p| load_glossary(p)).transpose()?;
            if let (Some(store), Some(glossary)) = (&store, &glossary) {
                check_glossary_coverage(&program, store, glossary)?;
            }
            if print {
                print!("{}", program.print());
            } else {
                println!("rules: {}", program.rules.len());
                for (i, stratum) in program.strata.iter().enumerate() {
                    let names: Vec<&str> = stratum.iter().map(String::as_str).collect();
                    println!("stratum {i}: {}", names.join(", "));
                }
                if let Some(store) = &store {
                    println!("facts: {}", store.len());
                }
                if let Some(glossary) = &glossary {
                    println!("glossary entries: {}", glossary.predicates().len());
                }
            }
            Ok(())
        }
        Command::Chase { inputs, out, step_bound } => {
            let program = load_program(&inputs.program)?;
            let data = load_facts(require(inputs.data.as_ref(), "data")?)?;
            let chase = reason_with(&data, &program, ReasonOptions { step_bound })?;
            emit(out, &chase_to_jsonl(&chase))
        }
        Command::Verbalize { inputs, chase, out } => {
            let program = load_program(&inputs.program)?;
            let glossary = load_glossary(require(inputs.glossary.as_ref(), "glossary")?)?;
            let steps = obtain_steps(&program, &inputs, &chase)?;
            let verbalized = verbalize_steps(&steps, &program, &glossary, &Lexicon::default())?;
            emit(out, &verbalized_to_jsonl(&verbalized))
        }
        Command::Plan { inputs, out, emit_plan } => {
            let program = load_program(&inputs.program)?;
            let glossary = load_glossary(require(inputs.glossary.as_ref(), "glossary")?)?;
            let plan = build_logic_plan(&program);
            let verbalized =
                verbalize_plan(&plan, &program, &glossary, &Lexicon::default())?;
            if let Some(path) = emit_plan {
                emit(Some(path), &to_dot(&plan))?;
            }
            emit(
                out,
                &format!(
                    "{}\n",
                    serde_json::to_string_pretty(&verbalized)
                        .expect("plan serializes")
                ),
            )
        }
        Command::Corpus { inputs, task, mode, backend, out, step_bound } => {
            let program = load_program(&inputs.program)?;
            let data = load_facts(require(inputs.data.as_ref(), "data")?)?;
            let glossary = load_glossary(require(inputs.glossary.as_ref(), "glossary")?)?;
            check_glossary_coverage(&program, &data, &glossary)?;
            let mut tasks = task;
            tasks.sort();
            tasks.dedup();
            let lexicon = Lexicon::default();

            let mut pairs = generate_ground_corpus(&data, &glossary, &tasks)?;
            if mode == CorpusMode::Chase {
                let chase = reason_with(&data, &program, ReasonOptions { step_bound })?;
                let verbalized = chaseforge_core::verbalize::verbalize_chase(
                    &chase, &program, &glossary, &lexicon,
                )?;
                let plan = build_logic_plan(&program);
                let verbalized_plan = verbalize_plan(&plan, &program, &glossary, &lexicon)?;
                let requests: Vec<_> = tasks
                    .iter()
                    .flat_map(|t| preprocess(&verbalized_plan, *t))
                    .collect();
                let mut boundary = BackendBoundary::new(GroundGuard::from_store(&data));
                let templates = match backend {
                    BackendSpec::Deterministic => {
                        let mut b = DeterministicBackend::new(&program, &glossary, &lexicon)
                            .map_err(PipelineError::Verbalize)?;
                        generate_templates(&requests, &mut b, &mut boundary)?
                    }
                    BackendSpec::Remote(url) => {
                        let mut b = RemoteBackend::new(url);
                        generate_templates(&requests, &mut b, &mut boundary)?
                    }
                };
                for step in &verbalized {
                    pairs.extend(map_step(&templates, step));
                }
            }
            let mut text = String::new();
            for pair in &pairs {
                text.push_str(&serde_json::to_string(pair).expect("pair serializes"));
                text.push('\n');
            }
            emit(out, &text)
        }
        Command::Quality {
            inputs,
            input,
            out,
            threshold,
            paraphrases,
            denylist,
            split,
            seed,
        } => {
            let program = load_program(&inputs.program)?;
            let data = load_facts(require(inputs.data.as_ref(), "data")?)?;
            let glossary = load_glossary(require(inputs.glossary.as_ref(), "glossary")?)?;
            let mut config = PipelineConfig::new(
                inputs.program.clone(),
                inputs.data.clone().unwrap(),
                inputs.glossary.clone().unwrap(),
                out,
            );
            config.threshold = threshold;
            config.paraphrases = paraphrases;
            config.denylist_path = denylist;
            config.split = split;
            config.seed = seed;
            let raw = read_input(&input)?;
            pipeline::score_existing_corpus(&config, &program, &data, &glossary, &raw)
        }
        Command::Run {
            inputs,
            task,
            mode,
            backend,
            threshold,
            paraphrases,
            denylist,
            split,
            seed,
            step_bound,
            model,
            emit_plan,
            out,
        } => {
            let mut config = PipelineConfig::new(
                inputs.program.clone(),
                require(inputs.data.clone(), "data")?,
                require(inputs.glossary.clone(), "glossary")?,
                out,
            );
            config.tasks = task;
            config.mode = mode;
            config.backend = backend;
            config.threshold = threshold;
            config.paraphrases = paraphrases;
            config.denylist_path = denylist;
            config.split = split;
            config.seed = seed;
            config.step_bound = step_bound;
            config.model = model;
            config.emit_dot = emit_plan;
            let summary = run_pipeline(&config)?;
            println!(
                "wrote {} train / {} val pairs to {} ({} backend calls)",
                summary.manifest.counts.train,
                summary.manifest.counts.val,
                summary.out_dir.display(),
                summary.manifest.backend_calls
            );
            Ok(())
        }
        Command::Validate { inputs, chase } => {
            let program = load_program(&inputs.program)?;
            let data = load_facts(require(inputs.data.as_ref(), "data")?)?;
            let dump = read_input(&chase)?;
            let report = validate_chase(&dump, &program, &data)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serializes")
            );
            if report.valid {
                Ok(())
            } else {
                let violation = report
                    .violation
                    .map(|v| format!("step {}: {}", v.step, v.message))
                    .unwrap_or_default();
                Err(PipelineError::Replay(violation))
            }
        }
    }
}
