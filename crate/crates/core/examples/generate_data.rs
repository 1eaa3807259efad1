//! Generate a synthetic corpus from a preset, write it to disk, and print
//! the operation mix and a few sample questions.
//!
//!     cargo run --release --example generate_data -- [desk|wikiops-skew] [out-dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use operand_qa::dataspace::{generate, validate, write_jsonl, write_tables, GeneratorConfig};

fn main() -> operand_qa::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "desk".into());
    let out = PathBuf::from(args.next().unwrap_or_else(|| std::env::temp_dir().join("operand-qa-data").display().to_string()));
    let cfg = GeneratorConfig::preset(&preset)?;
    let corpus = generate(&cfg)?;

    write_tables(&out.join("tables"), &corpus.tables)?;
    for (name, split) in [("train", &corpus.train), ("dev", &corpus.dev), ("test", &corpus.test)] {
        validate(split, &corpus.tables)?;
        write_jsonl(&out.join(format!("{name}.jsonl")), split)?;
        let mut mix: BTreeMap<String, usize> = BTreeMap::new();
        for ex in split {
            *mix.entry(ex.logical_form.op.to_string()).or_default() += 1;
        }
        println!("{name:<5} {:>4} examples  {mix:?}", split.len());
    }
    println!("{} tables written under {}\n", corpus.tables.len(), out.display());

    for ex in corpus.train.iter().take(5) {
        println!("{}\n  {}  -> {}", ex.question, ex.logical_form, ex.answer);
    }
    Ok(())
}
