use std::collections::BTreeSet;

use operand_qa::dataspace::fixtures::putouts;
use operand_qa::dataspace::{
    build_vocabulary, eligible_cells, generate, oracle_execute, parse_question, perturb_dataset, perturb_operation,
    render_question, validate, variants, Dataset, GeneratorConfig, PerturbMode, Perturbed,
};
use operand_qa::evaluator::{adversarial_eval, dump_trace, parse_trace_text, render_trace_text, OracleAdapter};
use operand_qa::model::{ModelConfig, OperandModel};
use operand_qa::opsolver::{Answer, Operation};

fn corpus(cfg: &GeneratorConfig) -> Vec<Dataset> {
    let c = generate(cfg).unwrap();
    [c.train, c.dev, c.test]
        .into_iter()
        .map(|examples| {
            let mut d = Dataset {
                tables: c.tables.clone(),
                examples,
            };
            d.prune_tables();
            d
        })
        .collect()
}

#[test]
fn generated_corpus_is_consistent_and_covers_every_operation() {
    let cfg = GeneratorConfig::default();
    let splits = corpus(&cfg);
    assert_eq!(splits.iter().map(|s| s.examples.len()).collect::<Vec<_>>(), [100, 50, 50]);
    let mut ids = BTreeSet::new();
    for s in &splits {
        validate(&s.examples, &s.tables).unwrap();
        for ex in &s.examples {
            assert!(ids.insert(ex.id.clone()), "duplicate id {}", ex.id);
            assert!(!ex.operands.is_empty());
        }
    }
    let ops: BTreeSet<Operation> = splits[0].examples.iter().map(|e| e.logical_form.op).collect();
    assert_eq!(ops.len(), 7);

    let again = generate(&cfg).unwrap();
    assert_eq!(again.train, splits[0].examples);
    let other = generate(&GeneratorConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(other.train, splits[0].examples);
}

#[test]
fn questions_parse_back_to_their_logical_forms() {
    for s in corpus(&GeneratorConfig {
        numeric_condition_rate: 0.5,
        ..GeneratorConfig::default()
    }) {
        for ex in &s.examples {
            let (lf, variant) = parse_question(&ex.question).unwrap();
            assert_eq!(lf, ex.logical_form, "{}", ex.question);
            assert_eq!(render_question(&lf, variant), ex.question);
        }
    }
    for op in Operation::ALL {
        assert_eq!(variants(op).len(), 3);
    }
    assert!(parse_question("tell me a joke").is_err());
}

#[test]
fn value_perturbation_keeps_operands_and_answers() {
    let test = corpus(&GeneratorConfig::default()).remove(2);
    let (out, status) = perturb_dataset(&test, PerturbMode::Vp, 7).unwrap();
    assert_eq!(status.len(), test.examples.len());
    let skipped = status.iter().filter(|s| s.status == "skipped").count();
    assert!(skipped as f64 <= 0.05 * test.examples.len() as f64, "{skipped} skipped");
    validate(&out.examples, &out.tables).unwrap();
    for ex in &out.examples {
        let orig = test.examples.iter().find(|o| o.id == ex.id).unwrap();
        let (before, after) = (test.table(orig).unwrap(), out.table(ex).unwrap());
        assert_eq!((&ex.answer, &ex.operands, &ex.question), (&orig.answer, &orig.operands, &orig.question));
        // only cells outside operands and condition columns move
        let free: BTreeSet<(usize, usize)> = eligible_cells(orig, before).into_iter().collect();
        let mut moved = 0;
        for j in 0..before.n_rows() {
            for k in 0..before.n_cols() {
                if before.cell(j, k).raw != after.cell(j, k).raw {
                    assert!(free.contains(&(j, k)));
                    moved += 1;
                }
            }
        }
        assert!(moved > 0);
    }
}

#[test]
fn operation_perturbation_changes_the_operation() {
    let test = corpus(&GeneratorConfig::default()).remove(2);
    let (out, status) = perturb_dataset(&test, PerturbMode::Op, 7).unwrap();
    validate(&out.examples, &out.tables).unwrap();
    assert_eq!(out.examples.len() + status.iter().filter(|s| s.status == "skipped").count(), test.examples.len());
    for ex in &out.examples {
        let orig = test.examples.iter().find(|o| o.id == ex.id).unwrap();
        assert_ne!(ex.logical_form.op, orig.logical_form.op);
        assert!(ex.logical_form.op.is_numeric());
        assert_eq!(ex.operands, orig.operands);
        assert_eq!(oracle_execute(&ex.logical_form, out.table(ex).unwrap()).unwrap().1, ex.answer);
        assert_eq!(parse_question(&ex.question).unwrap().0, ex.logical_form);
    }
    for s in status.iter().filter(|s| s.status == "skipped") {
        let orig = test.examples.iter().find(|o| o.id == s.id).unwrap();
        assert!(!orig.logical_form.op.is_numeric() || matches!(orig.answer, Answer::Num(_)));
        assert!(!s.reason.is_empty());
    }
}

#[test]
fn max_to_sum_on_the_putouts_table() {
    let (table, ex) = putouts();
    let mut seen_sum = false;
    for seed in 0..50 {
        let Perturbed::Done { example, .. } = perturb_operation(&ex, &table, seed).unwrap() else { panic!() };
        assert_ne!(example.logical_form.op, Operation::Max);
        if example.logical_form.op == Operation::Sum {
            assert_eq!(example.answer, Answer::Num(545.0));
            seen_sum = true;
        }
    }
    assert!(seen_sum);
}

#[test]
fn oracle_is_immune_to_both_perturbations() {
    for preset in ["desk", "wikiops-skew"] {
        let test = corpus(&GeneratorConfig::preset(preset).unwrap()).remove(2);
        for mode in [PerturbMode::Vp, PerturbMode::Op] {
            let r = adversarial_eval(&OracleAdapter, &test, mode, 7, 0.5).unwrap();
            assert!(r.all_valid);
            assert_eq!((r.base.final_acc, r.perturbed.final_acc, r.final_acc_drop), (1.0, 1.0, 0.0), "{preset} {mode}");
            assert_eq!(r.emitted + r.skipped, test.examples.len());
        }
    }
}

#[test]
fn traces_round_trip_and_respect_k() {
    let (table, ex) = putouts();
    let tables = [("putouts".to_string(), table.clone())].into_iter().collect();
    let model = OperandModel::new(ModelConfig::desk(), build_vocabulary([&ex], &tables), 1).unwrap();
    for k in [1, 3, 100] {
        let t = dump_trace(&model, &ex, &table, k, 0.5).unwrap();
        assert_eq!(t.steps.len(), 4);
        for s in &t.steps {
            assert_eq!(s.columns.len(), k.min(table.n_cols()));
            let words = model.tokens(&ex.question).unwrap().len();
            assert_eq!(s.pivots.len(), k.min(words));
            assert_eq!(s.params.len(), k.min(words));
            assert!(s.columns.windows(2).all(|w| w[0].weight >= w[1].weight));
        }
        assert_eq!(t.operations.len(), 7);
        assert_eq!(parse_trace_text(&render_trace_text(&t)).unwrap(), t);
        let json: operand_qa::evaluator::Trace = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(json, t);
    }
    assert!(dump_trace(&model, &ex, &table, 0, 0.5).is_err());
}
