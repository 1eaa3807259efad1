//! Logical forms, the exact oracle, synthetic corpora, SQL conversion and
//! adversarial perturbations.

mod dataset;
pub mod fixtures;
mod generator;
mod logical_form;
mod oracle;
mod perturb;
mod sql;
mod templates;

pub use dataset::{
    build_vocabulary, is_consistent, read_jsonl, read_tables, to_jsonl, validate, write_jsonl, write_tables, Dataset,
    Example, Tables,
};
pub use generator::{
    generate, generate_table, item_rng, make_example, sample_logical_form, stable_hash, ColumnKind, ColumnSpec, Corpus,
    GeneratorConfig,
};
pub use logical_form::{parse_logical_form, Comparator, Condition, LogicalForm, Value};
pub use oracle::{condition_holds, oracle_execute};
pub use perturb::{
    eligible_cells, perturb_dataset, perturb_operation, perturb_values, PerturbMode, PerturbStatus, Perturbed,
    MAX_ATTEMPTS,
};
pub use sql::{convert_sql_annotation, parse_sql, sql_to_logical_form, SqlQuery};
pub use templates::{parse_question, render_question, variants};
