use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::opsolver::Operation;

use super::logical_form::{Comparator, Condition, LogicalForm, Value};

/// Question patterns per operation; `{column}` is the target slot and the
/// condition clause is appended at the end.
pub fn variants(op: Operation) -> &'static [&'static str] {
    match op {
        Operation::All => &[
            "list the {column} values",
            "show every {column}",
            "which {column} entries are listed",
        ],
        Operation::Min => &[
            "what is the minimum {column}",
            "what is the lowest {column}",
            "which {column} is the smallest",
        ],
        Operation::Max => &[
            "what is the maximum {column}",
            "what is the highest {column}",
            "which {column} is the largest",
        ],
        Operation::Count => &[
            "how many {column} entries are there",
            "what is the count of {column} entries",
            "count the {column} values",
        ],
        Operation::Sum => &[
            "what is the total number of {column}",
            "what is the sum of {column}",
            "how many {column} in total",
        ],
        Operation::Mean => &[
            "what is the average {column}",
            "what is the mean {column}",
            "what is the {column} on average",
        ],
        Operation::Range => &[
            "what is the range of {column}",
            "what is the difference between the highest and lowest {column}",
            "how widely does {column} vary",
        ],
    }
}

fn phrase(cmp: Comparator) -> &'static str {
    match cmp {
        Comparator::Eq => "is equal to",
        Comparator::Gt => "is greater than",
        Comparator::Lt => "is less than",
        Comparator::Ge => "is at least",
        Comparator::Le => "is at most",
    }
}

pub fn render_question(lf: &LogicalForm, variant: usize) -> String {
    let all = variants(lf.op);
    let mut q = all[variant % all.len()].replace("{column}", &lf.target);
    for (i, c) in lf.conditions.iter().enumerate() {
        let join = if i == 0 { "where" } else { "and" };
        q.push_str(&format!(" {join} {} {} {}", c.column, phrase(c.cmp), c.value));
    }
    q
}

struct Compiled {
    questions: Vec<(Operation, usize, Regex)>,
    condition: Regex,
}

fn compiled() -> &'static Compiled {
    static C: OnceLock<Compiled> = OnceLock::new();
    C.get_or_init(|| {
        let mut questions = Vec::new();
        for op in Operation::ALL {
            for (i, t) in variants(op).iter().enumerate() {
                let (pre, post) = t.split_once("{column}").expect("template has a column slot");
                let re = format!(
                    "^{}(?P<column>.+?){}(?P<conds>(?: where .+)?)$",
                    regex::escape(pre),
                    regex::escape(post)
                );
                questions.push((op, i, Regex::new(&re).expect("template regex")));
            }
        }
        let condition = Regex::new(
            "^(?P<column>.+?) is (?P<cmp>equal to|greater than|less than|at least|at most) (?P<value>.+)$",
        )
        .expect("condition regex");
        Compiled { questions, condition }
    })
}

fn parse_conditions(text: &str) -> Option<Vec<Condition>> {
    let Some(rest) = text.strip_prefix(" where ") else {
        return text.is_empty().then(Vec::new);
    };
    let re = &compiled().condition;
    rest.split(" and ")
        .map(|part| {
            let c = re.captures(part)?;
            let cmp = match &c["cmp"] {
                "equal to" => Comparator::Eq,
                "greater than" => Comparator::Gt,
                "less than" => Comparator::Lt,
                "at least" => Comparator::Ge,
                _ => Comparator::Le,
            };
            Some(Condition {
                column: c["column"].to_string(),
                cmp,
                value: Value::parse(&c["value"]),
            })
        })
        .collect()
}

/// Recover the logical form and template variant behind a rendered question.
pub fn parse_question(question: &str) -> Result<(LogicalForm, usize)> {
    for (op, variant, re) in &compiled().questions {
        let Some(c) = re.captures(question) else { continue };
        if let Some(conditions) = parse_conditions(&c["conds"]) {
            let lf = LogicalForm {
                op: *op,
                target: c["column"].to_string(),
                conditions,
            };
            return Ok((lf, *variant));
        }
    }
    Err(Error::Parse {
        pos: 0,
        msg: format!("question `{question}` matches no template"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_question_round_trips() {
        let lf: LogicalForm = "sum(HR|Team=NYY,AB>=300)".parse().unwrap();
        let q = render_question(&lf, 0);
        assert_eq!(q, "what is the total number of HR where Team is equal to NYY and AB is at least 300");
        assert_eq!(parse_question(&q).unwrap(), (lf, 0));
    }

    #[test]
    fn every_template_parses_to_itself_only() {
        let lf0: LogicalForm = "max(PO|PB=0,Pos=RF)".parse().unwrap();
        for op in Operation::ALL {
            for v in 0..variants(op).len() {
                let lf = LogicalForm { op, ..lf0.clone() };
                let q = render_question(&lf, v);
                let hits: Vec<_> = compiled()
                    .questions
                    .iter()
                    .filter(|(_, _, re)| re.is_match(&q))
                    .collect();
                assert_eq!(hits.len(), 1, "{q}");
                assert_eq!(parse_question(&q).unwrap(), (lf, v));
            }
        }
    }
}
