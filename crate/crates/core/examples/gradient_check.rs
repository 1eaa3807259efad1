//! Compare end-to-end backpropagated gradients of the training loss with
//! central finite differences on a 3x3 table.

use std::time::Instant;

use operand_qa::autodiff::{gradient_check, GradCheckOptions, Graph, Tape};
use operand_qa::dataspace::{build_vocabulary, make_example, Tables};
use operand_qa::encoders::Table;
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::trainer::{example_loss, TrainConfig};

fn main() -> operand_qa::Result<()> {
    let table = Table::new(
        vec!["Player", "Team", "HR"],
        vec![
            vec!["Judge".into(), "NYY".into(), "5".into()],
            vec!["Betts".into(), "BOS".into(), "2".into()],
            vec!["Soto".into(), "NYY".into(), "7".into()],
        ],
    )?;
    let ex = make_example("grad".into(), "grad", &table, "sum(HR|Team=NYY)".parse()?, 0)?;
    let tables: Tables = [("grad".to_string(), table.clone())].into_iter().collect();
    let vocab = build_vocabulary([&ex], &tables);
    let config = ModelConfig {
        word_dim: 6,
        int_bits: 4,
        frac_bits: 3,
        hidden_dim: 5,
        cell_dim: 6,
        row_dim: 5,
        attention_dim: 4,
        op_dim: 4,
        ..ModelConfig::desk()
    };
    let model = OperandModel::new(config, vocab, 3)?;
    let cfg = TrainConfig {
        dropout: 0.0,
        ..TrainConfig::default()
    };
    let mut store = model.store.clone();
    let start = Instant::now();
    let report = gradient_check(&mut store, None, &GradCheckOptions::default(), |tape, store| {
        let mut g = Graph::with_tape(store, std::mem::replace(tape, Tape::new()));
        let (_, loss) = example_loss(&mut g, &model, &ex, &cfg, &table)?;
        *tape = g.into_tape();
        Ok(loss)
    })?;
    println!("loss {:.6}", report.loss);
    for p in &report.params {
        println!("{:<16} {:>5} entries  max rel err {:.2e}  max abs err {:.2e}", p.name, p.checked, p.max_rel_err, p.max_abs_err);
    }
    println!("worst relative error {:.2e} in {:.1}s", report.max_rel_err(), start.elapsed().as_secs_f64());
    Ok(())
}
