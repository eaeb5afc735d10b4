use claret_core::verify::{gradcheck_suite, GRADCHECK_TOLERANCE};

#[test]
fn every_family_passes() {
    let results = gradcheck_suite(0, None).unwrap();
    let families: Vec<&str> = results.iter().map(|r| r.family).collect();
    for want in ["conv2d", "dense", "relu", "maxpool2", "dropout", "softmax_ce", "micro_claret"] {
        assert!(families.contains(&want), "{want} missing");
    }
    for r in &results {
        assert!(r.report.max_relative_error < GRADCHECK_TOLERANCE, "{}: {:e}", r.family, r.report.max_relative_error);
        assert!(r.report.tensors.iter().all(|t| t.checked >= t.checked.min(64)));
    }
}

#[test]
fn same_seed_same_report() {
    let errs = |seed| -> Vec<u64> {
        gradcheck_suite(seed, None)
            .unwrap()
            .iter()
            .map(|r| r.report.max_relative_error.to_bits())
            .collect()
    };
    assert_eq!(errs(4), errs(4));
}
