//! Overfit 100 synthetic questions with the small configuration and watch
//! operand and answer accuracy climb. Stops once both reach 0.95.
//!
//!     cargo run --release --example train_overfit -- [max-epochs]

use std::collections::BTreeMap;
use std::time::Instant;

use operand_qa::dataspace::{build_vocabulary, generate, Dataset, GeneratorConfig};
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::trainer::{train_from, TrainConfig};

fn main() -> operand_qa::Result<()> {
    let epochs = match std::env::args().nth(1) {
        Some(s) => s.parse().map_err(|_| operand_qa::Error::Config(format!("bad epoch count `{s}`")))?,
        None => 500,
    };
    let corpus = generate(&GeneratorConfig {
        train: 100,
        dev: 0,
        test: 0,
        ..GeneratorConfig::default()
    })?;
    let data = Dataset {
        tables: corpus.tables,
        examples: corpus.train,
    };
    let vocab = build_vocabulary(&data.examples, &data.tables);
    let mut model = OperandModel::new(ModelConfig::desk(), vocab, 1)?;
    let cfg = TrainConfig {
        batch_size: 10,
        epochs,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    train_from(&mut model, &data, &cfg, 0, |m, _| {
        println!(
            "epoch {:>3}  loss {:>8.4}  cell {:>7.4}  answer {:>8.4}  op {:>6.4}  HardOpA {:.3}  FinalAcc {:.3}  ({:.0}s)",
            m.epoch,
            m.loss,
            m.cell_loss,
            m.answer_loss,
            m.op_loss,
            m.train_hard_op_a,
            m.train_final_acc,
            start.elapsed().as_secs_f64()
        );
        Ok(m.train_hard_op_a < 0.95 || m.train_final_acc < 0.95)
    })?;

    let mut confusion: BTreeMap<(String, String), usize> = BTreeMap::new();
    for ex in &data.examples {
        let p = model.predict(&ex.question, data.table(ex)?, cfg.gamma)?;
        *confusion.entry((ex.logical_form.op.to_string(), p.operation.to_string())).or_default() += 1;
    }
    println!("gold -> predicted operation:");
    for ((gold, pred), n) in confusion {
        println!("  {gold:>5} -> {pred:<5} {n}");
    }
    Ok(())
}
