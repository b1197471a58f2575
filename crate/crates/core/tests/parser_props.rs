mod support;

use m2v_core::model::{evaluate_numeric, validate};
use m2v_core::{parse, serialize, Node, OperationKind};
use proptest::prelude::*;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn serialize_then_parse_is_identity(tree in arb_vl(4)) {
        let text = serialize(&tree);
        prop_assert_eq!(parse(&text).unwrap(), tree);
    }

    #[test]
    fn canonical_form_is_a_fixed_point(tree in arb_vl(4)) {
        let once = serialize(&tree);
        let twice = serialize(&parse(&once).unwrap());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn arbitrary_text_never_panics(text in any::<String>()) {
        let _ = parse(&text);
    }

    #[test]
    fn damaged_fixtures_never_panic(which in any::<prop::sample::Index>(), cut in any::<prop::sample::Index>(), insert in any::<char>()) {
        let fixtures = corpus();
        let text = &fixtures[which.index(fixtures.len())].1;
        let mut at = cut.index(text.len() + 1);
        while !text.is_char_boundary(at) {
            at -= 1;
        }
        let _ = parse(&text[..at]);
        let mut spliced = text.clone();
        spliced.insert(at, insert);
        let _ = parse(&spliced);
    }

    #[test]
    fn operation_names_ignore_case(tree in arb_vl(2)) {
        let text = serialize(&tree);
        let name = tree.as_op().unwrap().kind.name();
        let shouted = format!("{}{}", name.to_uppercase(), &text[name.len()..]);
        prop_assert_eq!(parse(&shouted).unwrap(), tree);
    }

    #[test]
    fn whitespace_between_tokens_is_ignored(tree in arb_vl(3)) {
        let text = serialize(&tree);
        let spaced = text.replace('(', " (\n  ").replace("],", "] ,\n").replace(')', "\n)");
        prop_assert_eq!(parse(&spaced).unwrap(), tree);
    }

    #[test]
    fn validate_is_pure(tree in arb_vl(3)) {
        prop_assert_eq!(validate(&tree), validate(&tree));
        prop_assert!(validate(&tree).ok());
    }

    #[test]
    fn evaluation_recurses_structurally(tree in arb_vl(3)) {
        let Node::Op(op) = &tree else { unreachable!() };
        let (a, b) = (evaluate_numeric(&op.arg1), evaluate_numeric(&op.arg2));
        let whole = evaluate_numeric(&tree);
        if let (Ok(a), Ok(b), Ok(v)) = (a, b, whole) {
            let expected = match op.kind {
                OperationKind::Addition => a + b,
                OperationKind::Subtraction | OperationKind::Comparison => a - b,
                OperationKind::Multiplication | OperationKind::Area | OperationKind::Unittrans => a * b,
                OperationKind::Division => a / b,
                OperationKind::Surplus => (a as i64).rem_euclid(b as i64) as f64,
            };
            prop_assert_eq!(v.to_bits(), expected.to_bits());
        }
    }
}

#[test]
fn fixture_results_agree_with_evaluation() {
    use m2v_core::model::check_against_expression;
    for (id, text) in corpus() {
        let tree = parse(&text).unwrap();
        let op = tree.as_op().unwrap();
        if op.kind == OperationKind::Comparison {
            continue;
        }
        let check = check_against_expression(&tree, op.result.entity_quantity).unwrap();
        assert!(check.matches, "{id}: evaluates to {} but result holds {}", check.value, op.result.entity_quantity);
    }
}
