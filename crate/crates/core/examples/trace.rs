//! Train on a handful of questions, then print where the model looked at
//! each timestep while answering one of them.
//!
//!     cargo run --release --example trace -- [epochs] [k]

use operand_qa::dataspace::{build_vocabulary, generate, Dataset, GeneratorConfig};
use operand_qa::evaluator::{dump_trace, render_trace_text};
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::trainer::{train, TrainConfig};

fn main() -> operand_qa::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().ok());
    let epochs = args.next().flatten().unwrap_or(150);
    let k = args.next().flatten().unwrap_or(3);
    let corpus = generate(&GeneratorConfig {
        train: 20,
        dev: 0,
        test: 0,
        ..GeneratorConfig::default()
    })?;
    let data = Dataset {
        tables: corpus.tables,
        examples: corpus.train,
    };
    let mut model = OperandModel::new(ModelConfig::desk(), build_vocabulary(&data.examples, &data.tables), 1)?;
    let cfg = TrainConfig {
        batch_size: 10,
        epochs,
        dropout: 0.0,
        track_train_metrics: false,
        ..TrainConfig::default()
    };
    train(&mut model, &data, &cfg)?;

    let ex = &data.examples[0];
    println!("gold: {}  -> {}\n", ex.logical_form, ex.answer);
    print!("{}", render_trace_text(&dump_trace(&model, ex, data.table(ex)?, k, cfg.gamma)?));
    Ok(())
}
