//! Train with and without the cell-selection loss on the same data and
//! compare held-out operand and answer accuracy.
//!
//!     cargo run --release --example ablation -- [epochs] [seeds]

use std::time::Instant;

use operand_qa::dataspace::{build_vocabulary, generate, Dataset, GeneratorConfig};
use operand_qa::evaluator::evaluate;
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::trainer::{train, TrainConfig};
use operand_qa::Error;

fn arg(i: usize, default: u64) -> operand_qa::Result<u64> {
    match std::env::args().nth(i) {
        Some(s) => s.parse().map_err(|_| Error::Config(format!("bad argument `{s}`"))),
        None => Ok(default),
    }
}

fn main() -> operand_qa::Result<()> {
    let epochs = arg(1, 300)? as usize;
    let seeds = arg(2, 3)?;
    for seed in 1..=seeds {
        let corpus = generate(&GeneratorConfig {
            seed,
            train: 100,
            dev: 100,
            test: 0,
            ..GeneratorConfig::default()
        })?;
        let split = |examples| Dataset {
            tables: corpus.tables.clone(),
            examples,
        };
        let (mut train_set, dev) = (split(corpus.train.clone()), split(corpus.dev.clone()));
        train_set.prune_tables();
        let vocab = build_vocabulary(&train_set.examples, &train_set.tables);
        for use_cell_loss in [true, false] {
            let start = Instant::now();
            let mut model = OperandModel::new(ModelConfig::desk(), vocab.clone(), seed)?;
            let cfg = TrainConfig {
                batch_size: 10,
                epochs,
                seed,
                use_cell_loss,
                track_train_metrics: false,
                ..TrainConfig::default()
            };
            train(&mut model, &train_set, &cfg)?;
            let r = evaluate(&model, &dev, cfg.gamma)?;
            println!(
                "seed {seed}  cell loss {:<5}  dev HardOpA {:.3}  FinalAcc {:.3}  SoftOpP {:.3}  SoftOpR {:.3}  ({:.0}s)",
                use_cell_loss,
                r.hard_op_a,
                r.final_acc,
                r.soft_op_p,
                r.soft_op_r,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
