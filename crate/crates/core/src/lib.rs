//! chaseforge-core: reasoning-driven corpus synthesis.
//!
//! The crate computes the chase of a Datalog± program over a fact database
//! with full per-step provenance, verbalizes facts, steps, and rules through
//! a glossary of sentence templates, and synthesizes task-specific
//! prompt-response fine-tuning corpora. Template generation is lifted: the
//! generator backend sees only tokenized rule text, once per plan node per
//! task, so its call count is independent of the data size and no ground
//! value ever crosses the boundary.
//!
//! Modules follow the stages:
//!
//! - [`parse`]: `.vada` programs, `.facts` databases, `.gloss` glossaries
//! - [`stratify`]: predicate stratification
//! - [`chase`]: semi-naive fixpoint with provenance, replay validation
//! - [`verbalize`]: deterministic sentence assembly
//! - [`plan`]: the rule dependency graph
//! - [`corpus`]: lifted templates, chase mapping, the backend boundary
//! - [`quality`]: scoring, filtering, paraphrasing, postprocessing
//! - [`pipeline`]: end-to-end orchestration and artifact emission

pub mod chase;
pub mod corpus;
pub mod decimal;
pub mod error;
pub mod model;
pub mod parse;
pub mod pipeline;
pub mod plan;
pub mod quality;
pub mod stratify;
pub mod verbalize;

pub use chase::{apply_rule, compose_back, evaluate, reason, reason_with, Chase, ChaseStep};
pub use corpus::{
    generate_ground_corpus, generate_templates, map_step, preprocess, CorpusPair, NlpTask,
};
pub use error::{BackendError, ChaseError, ParseError, ParseErrorKind, VerbalizeError};
pub use model::{FactStore, Glossary, Program, Value};
pub use parse::{parse_facts, parse_glossary, parse_program};
pub use pipeline::{run_pipeline, run_pipeline_with_backend, validate_chase, PipelineConfig};
pub use plan::{build_logic_plan, verbalize_plan, LogicPlan};
pub use quality::{check_quality, filter_scored, paraphrase, postprocess};
pub use stratify::stratify;
pub use verbalize::{verbalize_fact, verbalize_rule, verbalize_step, Lexicon, VerbalizedStep};
