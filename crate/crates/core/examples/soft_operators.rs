//! How the differentiable operators behave as cell scores move between a
//! hard selection and a fuzzy one, next to the discrete result.

use operand_qa::autodiff::{Graph, ParameterStore};
use operand_qa::dataspace::fixtures::running_sum;
use operand_qa::opsolver::{hard_op, soft_answer, NumericGrid, Operation};
use operand_qa::rowsel::threshold_operands;

fn main() -> operand_qa::Result<()> {
    let (table, _) = running_sum();
    let grid = NumericGrid::from_table(&table, 1.0)?;
    let hr: Vec<&str> = (0..table.n_rows()).map(|j| table.cell(j, 2).raw.as_str()).collect();
    println!("HR column {hr:?}, scores only on HR\n");

    let profiles: [(&str, [f64; 5]); 4] = [
        ("NYY exactly", [1.0, 0.0, 1.0, 0.0, 1.0]),
        ("NYY, confident", [0.9, 0.1, 0.8, 0.2, 0.9]),
        ("NYY, unsure", [0.6, 0.4, 0.55, 0.45, 0.7]),
        ("everyone", [1.0; 5]),
    ];
    let ops = [Operation::Sum, Operation::Count, Operation::Max, Operation::Min, Operation::Mean, Operation::Range];
    print!("{:<16}", "");
    for op in ops {
        print!("{:>18}", op.name());
    }
    println!();
    for (name, col) in profiles {
        let mut scores = vec![0.0; table.n_rows() * table.n_cols()];
        for (j, s) in col.iter().enumerate() {
            scores[j * table.n_cols() + 2] = *s;
        }
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let c = g.tape.leaf(table.n_rows(), table.n_cols(), scores.clone())?;
        let operands = threshold_operands(&scores, table.n_cols(), 0.5)?;
        print!("{name:<16}");
        for op in ops {
            let soft = soft_answer(&mut g, op, c, &grid)?;
            let hard = hard_op(op, &operands, &table)?;
            let hard = hard.as_num().unwrap_or(f64::NAN);
            print!("{:>18}", format!("{:.3} ({hard:.3})", g.tape.scalar(soft)));
        }
        println!();
    }
    println!("\nsoft value, with the hard result at threshold 0.5 in parentheses");
    Ok(())
}
