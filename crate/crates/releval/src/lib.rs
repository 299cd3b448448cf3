//! Zero- and few-shot relation extraction evaluation over instruction-tuned
//! language models.
//!
//! The toolkit benchmarks four prompt formulations for deciding which
//! relation holds between two marked entities in a sentence:
//!
//! * **vanilla** — list the candidate relation labels and ask for one;
//! * **vanilla-temp** — the same list, each label explained by its
//!   verbalization template filled with `Entity 1`/`Entity 2` markers;
//! * **qa4re** — multiple choice: each entity-filled template becomes a
//!   lettered option (the none-of-the-above option always present and
//!   last), and the model answers with a letter;
//! * **nli4re** — per-option premise/hypothesis entailment scoring with a
//!   0.5 max-entailment threshold deciding none-of-the-above.
//!
//! Candidate options are type-constrained: relations incompatible with the
//! example's head/tail entity types are dropped before prompting. Models are
//! reached through a pluggable completion backend (any OpenAI-compatible
//! endpoint, or deterministic in-process test backends) behind a persistent
//! response cache, so finished experiments replay byte-identically with zero
//! network traffic.
//!
//! The `releval` binary drives experiments from TOML configs; see the book
//! under `book/` for a guided tour and `README.md` for the short version.

pub mod backend;
pub mod candidates;
pub mod corpus;
pub mod evaluate;
pub mod formulate;
pub mod infer;
pub mod runner;
pub mod schema;
pub mod testing;
pub mod verbalize;

// The book's code snippets double as doctests; `cargo test --doc` keeps the
// guide compiling against the current API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(schemas_and_templates, "../../../book/src/schemas-and-templates.md");
    chapter!(datasets_and_sampling, "../../../book/src/datasets-and-sampling.md");
    chapter!(candidate_options, "../../../book/src/candidate-options.md");
    chapter!(formulations, "../../../book/src/formulations.md");
    chapter!(backends_and_caching, "../../../book/src/backends-and-caching.md");
    chapter!(parsing_and_metrics, "../../../book/src/parsing-and-metrics.md");
    chapter!(running_experiments, "../../../book/src/running-experiments.md");
}
