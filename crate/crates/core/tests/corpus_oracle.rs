use std::collections::HashSet;

use modlens::corpus::*;
use modlens::oracle::*;
use proptest::prelude::*;

proptest! {
    #[test]
    fn encoding_round_trips(a in 0u64..100_000, b in 0u64..100_000) {
        for format in [FormatSpec::addition(), FormatSpec::multiplication()] {
            let s = encode_sample(a, b, &format).unwrap();
            prop_assert_eq!(s.tokens.len(), format.sequence_len());
            let back = ArithSample::from_line(&s.to_line(), &format).unwrap();
            prop_assert_eq!((back.a, back.b), (a, b));
            let c = decode_result(back.answer_tokens(&format), &format).unwrap();
            prop_assert_eq!(c as u128, ground_truth(format.op, a, b));
        }
    }

    #[test]
    fn oracle_is_constant_on_classes(a in 0u64..10_000, b in 0u64..10_000, k in 0u64..50, j in 0u64..50) {
        for op in [OpKind::Add, OpKind::Mul] {
            let spec = OracleSpec::symmetric(op, 3);
            prop_assert_eq!(oracle_eval(&spec, a + 1000 * k, b + 1000 * j), oracle_eval(&spec, a, b));
            let rep = canonical_rep(a, b, 1000);
            prop_assert!(rep.contains(a, b));
            prop_assert!(rep.rep_a < 1000 && rep.rep_b < 1000);
        }
    }

    #[test]
    fn oracle_agrees_with_truth_in_distribution(a in 0u64..1000, b in 0u64..1000) {
        for op in [OpKind::Add, OpKind::Mul] {
            let spec = OracleSpec::symmetric(op, 3);
            prop_assert_eq!(oracle_eval(&spec, a, b), ground_truth(op, a, b));
            prop_assert!(oracle_match(ground_truth(op, a, b), &spec, a, b));
        }
    }
}

fn pairs(samples: &[ArithSample]) -> HashSet<(u64, u64)> {
    samples.iter().map(|s| (s.a, s.b)).collect()
}

#[test]
fn preset_splits_are_disjoint_and_deterministic() {
    let spec = CorpusSpec::preset(OpKind::Add, 3);
    let s = generate_splits(&spec).unwrap();
    let (d1, d2, d3) = (pairs(&s.d1), pairs(&s.d2), pairs(&s.d3));
    assert_eq!((d1.len(), d2.len(), d3.len()), (10_000, 10_000, 10_000));
    assert!(d1.is_disjoint(&d2) && d1.is_disjoint(&d3) && d2.is_disjoint(&d3));
    assert!(s.d1.iter().chain(&s.d2).all(|x| !is_ood(x.a, x.b, 3)));
    assert!(s.d3.iter().all(|x| is_ood(x.a, x.b, 3) && x.a < 100_000 && x.b < 100_000));
    assert_eq!(generate_splits(&spec).unwrap(), s);
    assert_ne!(generate_splits(&CorpusSpec::preset(OpKind::Add, 4)).unwrap().d1, s.d1);
}

#[test]
fn splits_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = CorpusSpec::preset(OpKind::Mul, 1);
    spec.d1_size = 500;
    spec.d2_size = 200;
    spec.d3_size = 300;
    let s = generate_splits(&spec).unwrap();
    write_splits(dir.path(), &s).unwrap();
    let text = std::fs::read_to_string(dir.path().join("d1.txt")).unwrap();
    assert_eq!(text.lines().count(), 500);
    assert!(text.lines().all(|l| l.len() == 20));
    assert_eq!(read_splits(dir.path()).unwrap(), s);
}

#[test]
fn corrupted_lines_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = CorpusSpec::preset(OpKind::Add, 1);
    spec.d1_size = 10;
    spec.d2_size = 10;
    spec.d3_size = 10;
    write_splits(dir.path(), &generate_splits(&spec).unwrap()).unwrap();
    std::fs::write(dir.path().join("d2.txt"), "0034900705450109\n").unwrap();
    assert!(read_splits(dir.path()).is_err());
}
