//! Small hand-built tables used by tests, examples and documentation.

use crate::encoders::Table;

use super::dataset::Example;
use super::generator::make_example;

fn table(headers: &[&str], rows: &[&[&str]]) -> Table {
    Table::new(
        headers.to_vec(),
        rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
    )
    .expect("fixture table is rectangular")
}

/// Three qualifying cells 5, 2 and 7 that sum to 14.
pub fn running_sum() -> (Table, Example) {
    let t = table(
        &["Player", "Team", "HR"],
        &[
            &["Judge", "NYY", "5"],
            &["Betts", "BOS", "9"],
            &["Torres", "NYY", "2"],
            &["Devers", "BOS", "4"],
            &["Soto", "NYY", "7"],
        ],
    );
    let ex = make_example("running-sum".into(), "running-sum", &t, "sum(HR|Team=NYY)".parse().unwrap(), 0)
        .expect("fixture is consistent");
    (t, ex)
}

/// Highest put-outs among right fielders without passed balls: 286.
pub fn putouts() -> (Table, Example) {
    let t = table(
        &["Player", "Team", "Pos", "PO", "PB", "G"],
        &[
            &["Judge", "NYY", "RF", "286", "0", "148"],
            &["Betts", "BOS", "RF", "259", "0", "150"],
            &["Soto", "LAD", "LF", "301", "0", "151"],
            &["Realmuto", "ATL", "C", "390", "7", "133"],
            &["Springer", "HOU", "RF", "244", "1", "140"],
            &["Story", "CHC", "SS", "197", "0", "145"],
            &["Lindor", "NYY", "SS", "212", "0", "152"],
            &["Harper", "BOS", "1B", "385", "2", "149"],
        ],
    );
    let ex = make_example("putouts".into(), "putouts", &t, "max(PO|PB=0,Pos=RF)".parse().unwrap(), 1)
        .expect("fixture is consistent");
    (t, ex)
}
