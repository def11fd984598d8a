use lqm_testkit::checks;

fn assert_pass(v: checks::Verdict) {
    assert!(v.passed, "{v}");
}

#[test]
fn segment_scores_match_reference_formula() {
    assert_pass(checks::formula_oracle(7));
}

#[test]
fn micro_and_macro_diverge_only_under_clamping() {
    assert_pass(checks::micro_vs_macro());
}

#[test]
fn agreement_matches_exhaustive_matcher() {
    assert_pass(checks::iaa_oracle(11, 500, 300));
}

#[test]
fn bleu_matches_brute_force_counter() {
    assert_pass(checks::bleu_oracle(13));
}

#[test]
fn correlation_fixture_and_rank_invariance() {
    assert_pass(checks::statistics(17));
}
