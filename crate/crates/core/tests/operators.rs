use operand_qa::autodiff::{Graph, ParameterStore};
use operand_qa::dataspace::fixtures::{putouts, running_sum};
use operand_qa::dataspace::{build_vocabulary, generate, GeneratorConfig};
use operand_qa::encoders::Table;
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::opsolver::{decode_extremum, hard_op, soft_mixture, soft_op, Answer, NumericGrid, Operation};
use operand_qa::rowsel::{threshold_operands, OperandSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{column, soft, soft_hard_case};

#[test]
fn worked_values() {
    let t = column(&["5", "2", "7"]);
    assert_eq!(soft(Operation::Sum, &[1.0, 1.0, 1.0], &t), 14.0);
    assert_eq!(soft(Operation::Count, &[1.0, 1.0], &column(&["4", "9"])), 2.0);

    // reversed grid [6, 1] for values [3, 8]
    let t = column(&["3", "8"]);
    let grid = NumericGrid::from_table(&t, 1.0).unwrap();
    assert_eq!(grid.reversed, [6.0, 1.0]);
    let store = ParameterStore::new();
    let mut g = Graph::new(&store);
    let c = g.tape.leaf(2, 1, vec![1.0, 1.0]).unwrap();
    let raw = soft_op(&mut g, Operation::Min, c, &grid).unwrap();
    assert_eq!(g.tape.scalar(raw), 6.0);
    assert_eq!(decode_extremum(Operation::Min, 6.0, 8.0, &grid).unwrap(), 3.0);
    assert_eq!(decode_extremum(Operation::Range, 6.0, 8.0, &grid).unwrap(), 5.0);
    assert_eq!(soft(Operation::Range, &[1.0, 1.0], &t), 5.0);
    // a single selected value decodes to itself
    assert_eq!(soft(Operation::Min, &[0.0, 1.0], &t), 8.0);
    assert_eq!(soft(Operation::Min, &[1.0, 0.0], &t), 3.0);

    assert_eq!(soft(Operation::Max, &[1.0, 1.0], &column(&["286", "259"])), 286.0);
    assert_eq!(soft(Operation::Mean, &[0.0, 1.0, 0.0], &column(&["4", "2.5", "9"])), 2.5);
    assert_eq!(soft(Operation::All, &[1.0], &column(&["4"])), -1e4);
}

#[test]
fn mixture_examples() {
    let t = column(&["5", "2", "7"]);
    let grid = NumericGrid::from_table(&t, 1.0).unwrap();
    let ops = [Operation::Sum, Operation::Count];
    for (weights, want) in [(vec![1.0, 0.0], 14.0), (vec![0.5, 0.5], 8.5)] {
        let store = ParameterStore::new();
        let mut g = Graph::new(&store);
        let c = g.tape.leaf(3, 1, vec![1.0; 3]).unwrap();
        let a = g.tape.leaf(2, 1, weights).unwrap();
        let (y, parts) = soft_mixture(&mut g, &ops, a, c, &grid).unwrap();
        assert_eq!(g.tape.scalar(y), want);
        assert_eq!(parts.len(), 2);
    }
    let all = OperandSet(vec![(0, 0), (1, 0), (2, 0)]);
    assert_eq!(hard_op(Operation::Sum, &all, &t).unwrap(), Answer::Num(14.0));
}

#[test]
fn soft_matches_hard_on_indicator_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..1000 {
        soft_hard_case(&mut rng).unwrap_or_else(|e| panic!("case {case}: {e}"));
    }
}

#[test]
fn hard_op_errors() {
    let t = Table::new(vec!["a", "b"], vec![vec!["1".into(), "x".into()]]).unwrap();
    assert!(hard_op(Operation::Max, &OperandSet(vec![]), &t).is_err());
    assert!(hard_op(Operation::Sum, &OperandSet(vec![(0, 1)]), &t).is_err());
    assert_eq!(hard_op(Operation::Count, &OperandSet(vec![(0, 1)]), &t).unwrap(), Answer::Num(1.0));
    assert_eq!(
        hard_op(Operation::All, &OperandSet(vec![(0, 0), (0, 1)]), &t).unwrap(),
        Answer::Cells(vec!["1".into(), "x".into()])
    );
    let (table, ex) = putouts();
    assert_eq!(hard_op(Operation::Max, &ex.operands, &table).unwrap(), Answer::Num(286.0));
    let (table, ex) = running_sum();
    assert_eq!(hard_op(Operation::Sum, &ex.operands, &table).unwrap(), Answer::Num(14.0));
}

#[test]
fn operation_weights_form_a_simplex() {
    let corpus = generate(&GeneratorConfig {
        train: 20,
        dev: 0,
        test: 0,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let vocab = build_vocabulary(&corpus.train, &corpus.tables);
    let model = OperandModel::new(ModelConfig::desk(), vocab.clone(), 3).unwrap();
    for ex in &corpus.train {
        let p = model.predict(&ex.question, &corpus.tables[&ex.table_id], 0.5).unwrap();
        assert_eq!(p.op_weights.len(), 7);
        assert!((p.op_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.op_weights.iter().all(|&w| w > 0.0));
    }
    let single = ModelConfig {
        operations: vec![Operation::Sum],
        ..ModelConfig::desk()
    };
    let model = OperandModel::new(single, vocab, 3).unwrap();
    let ex = &corpus.train[0];
    let p = model.predict(&ex.question, &corpus.tables[&ex.table_id], 0.5).unwrap();
    assert_eq!(p.op_weights, [1.0]);
    assert_eq!(p.operation, Operation::Sum);
}

#[test]
fn test_time_answer_composes_argmax_and_threshold() {
    let corpus = generate(&GeneratorConfig {
        train: 40,
        dev: 0,
        test: 0,
        seed: 5,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let vocab = build_vocabulary(&corpus.train, &corpus.tables);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let small = ModelConfig {
        word_dim: 8,
        hidden_dim: 8,
        cell_dim: 8,
        row_dim: 8,
        attention_dim: 8,
        op_dim: 8,
        ..ModelConfig::desk()
    };
    let mut answered = 0;
    for i in 0..200 {
        let model = OperandModel::new(small.clone(), vocab.clone(), i).unwrap();
        let ex = &corpus.train[rng.gen_range(0..corpus.train.len())];
        let table = &corpus.tables[&ex.table_id];
        // untrained cell scores are small, so keep gamma low enough to select something
        let gamma = rng.gen_range(0.01..0.1);
        let p = model.predict(&ex.question, table, gamma).unwrap();
        // recompose from the raw outputs
        let mut best = 0;
        for (k, &w) in p.op_weights.iter().enumerate() {
            if w > p.op_weights[best] {
                best = k;
            }
        }
        let op = model.operations()[best];
        assert_eq!(p.operation, op);
        let chosen: Vec<(usize, usize)> = (0..p.cell_scores.len())
            .filter(|&i| p.cell_scores[i] > gamma)
            .map(|i| (i / table.n_cols(), i % table.n_cols()))
            .collect();
        assert_eq!(p.operands.0, chosen);
        assert_eq!(threshold_operands(&p.cell_scores, table.n_cols(), gamma).unwrap(), p.operands);
        let want = if chosen.is_empty() { None } else { hard_op(op, &OperandSet(chosen), table).ok() };
        answered += want.is_some() as usize;
        assert_eq!(p.answer, want);
    }
    assert!(answered > 20, "{answered}");
}

proptest! {
    #[test]
    fn sum_and_count_never_decrease(vals in prop::collection::vec(1u32..500, 1..8), seed in 0u64..1000, bump in 0.0f64..0.5) {
        let t = column(&vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().iter().map(String::as_str).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..vals.len()).map(|_| rng.gen_range(0.0..0.5)).collect();
        let i = rng.gen_range(0..vals.len());
        let mut more = scores.clone();
        more[i] += bump;
        for op in [Operation::Sum, Operation::Count] {
            prop_assert!(soft(op, &more, &t) >= soft(op, &scores, &t));
        }
    }

    #[test]
    fn threshold_is_strict_and_row_major(scores in prop::collection::vec(0.0f64..1.0, 1..24), gamma in 0.01f64..0.99) {
        let cols = 1 + scores.len() % 3;
        let n = scores.len() / cols * cols;
        let s = &scores[..n];
        let set = threshold_operands(s, cols, gamma).unwrap();
        let mut prev = None;
        for &(r, c) in set.iter() {
            prop_assert!(s[r * cols + c] > gamma);
            prop_assert!(prev.map_or(true, |p| p < (r, c)));
            prev = Some((r, c));
        }
        prop_assert_eq!(set.len(), s.iter().filter(|&&x| x > gamma).count());
    }
}

#[test]
fn threshold_boundaries() {
    let set = threshold_operands(&[0.9, 0.2, 0.6, 0.4], 2, 0.5).unwrap();
    assert_eq!(set.0, [(0, 0), (1, 0)]);
    assert!(threshold_operands(&[0.5, 0.7], 2, 0.5).unwrap().0 == [(0, 1)]);
    for bad in [0.0, 1.0, -0.1, f64::NAN] {
        assert!(threshold_operands(&[0.5], 1, bad).is_err());
    }
}
