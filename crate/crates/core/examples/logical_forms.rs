//! Logical forms end to end: parse, execute against a table, render as
//! questions, and convert a SQL annotation.

use operand_qa::dataspace::fixtures::putouts;
use operand_qa::dataspace::{convert_sql_annotation, oracle_execute, parse_question, render_question, variants, LogicalForm};
use operand_qa::opsolver::Operation;

fn main() -> operand_qa::Result<()> {
    let (table, ex) = putouts();
    println!("{}", table.headers().join(" | "));
    for j in 0..table.n_rows() {
        let row: Vec<&str> = (0..table.n_cols()).map(|k| table.cell(j, k).raw.as_str()).collect();
        println!("{}", row.join(" | "));
    }
    println!();

    for text in ["max(PO|PB=0,Pos=RF)", "count(Player|Team=NYY)", "range(G|PO>=250)", "all(Player|Pos=SS)", "mean(PB|Team=LAD)"] {
        let lf: LogicalForm = text.parse()?;
        let (operands, answer) = oracle_execute(&lf, &table)?;
        let cells: Vec<&str> = operands.iter().map(|&(r, c)| table.cell(r, c).raw.as_str()).collect();
        println!("{lf:<26} operands {cells:?} -> {answer}");
    }
    println!();

    println!("question for `{}`: {}", ex.logical_form, ex.question);
    for (i, _) in variants(Operation::Range).iter().enumerate() {
        let q = render_question(&"range(PO|Pos=RF)".parse()?, i);
        let (back, variant) = parse_question(&q)?;
        println!("  variant {variant}: {q}  => {back}");
    }
    println!();

    let sql = "SELECT MAX(PO) FROM t WHERE Pos = 'RF' AND PB = 0";
    let converted = convert_sql_annotation("sql-1", "Most put-outs by a right fielder with no passed balls?", sql, "putouts", &table)?;
    println!("{sql}\n  => {}  answer {}", converted.logical_form, converted.answer);
    if let Err(e) = convert_sql_annotation("sql-2", "?", "SELECT PO FROM t WHERE PO > 200 OR PB = 0", "putouts", &table) {
        println!("rejected: {e}");
    }
    Ok(())
}
