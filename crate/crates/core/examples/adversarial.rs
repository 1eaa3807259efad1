//! Value and operation perturbations: show one rewritten example of each,
//! then compare the oracle with a briefly trained model under both.
//!
//!     cargo run --release --example adversarial -- [epochs]

use operand_qa::dataspace::{build_vocabulary, generate, perturb_operation, perturb_values, Dataset, GeneratorConfig, PerturbMode, Perturbed};
use operand_qa::evaluator::{adversarial_eval, AdversarialReport, OracleAdapter};
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::trainer::{train, TrainConfig};

fn show(name: &str, r: &AdversarialReport) {
    println!(
        "{name:<7} {}: FinalAcc {:.3} -> {:.3}  drop {:+.3}  ({} emitted, {} skipped)",
        r.mode, r.base.final_acc, r.perturbed.final_acc, r.final_acc_drop, r.emitted, r.skipped
    );
}

fn main() -> operand_qa::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let corpus = generate(&GeneratorConfig::default())?;
    let split = |examples| Dataset {
        tables: corpus.tables.clone(),
        examples,
    };
    let (train_set, test) = (split(corpus.train.clone()), split(corpus.test.clone()));

    let ex = &test.examples[0];
    let table = test.table(ex)?;
    println!("original   {}  -> {}", ex.question, ex.answer);
    if let Perturbed::Done { example, table: Some((id, t)) } = perturb_values(ex, table, 1) {
        let changed = (0..t.n_rows())
            .flat_map(|j| (0..t.n_cols()).map(move |k| (j, k)))
            .filter(|&(j, k)| t.cell(j, k).raw != table.cell(j, k).raw)
            .count();
        println!("values     {} cells rewritten in {id}, answer still {}", changed, example.answer);
    }
    if let Perturbed::Done { example, .. } = perturb_operation(ex, table, 1)? {
        println!("operation  {}  -> {}", example.question, example.answer);
    }
    println!();

    let vocab = build_vocabulary(&train_set.examples, &train_set.tables);
    let mut model = OperandModel::new(ModelConfig::desk(), vocab, 1)?;
    train(
        &mut model,
        &train_set,
        &TrainConfig {
            batch_size: 10,
            epochs,
            track_train_metrics: false,
            ..TrainConfig::default()
        },
    )?;
    for mode in [PerturbMode::Vp, PerturbMode::Op] {
        show("oracle", &adversarial_eval(&OracleAdapter, &test, mode, 7, 0.5)?);
        show("model", &adversarial_eval(&model, &test, mode, 7, 0.5)?);
    }
    Ok(())
}
