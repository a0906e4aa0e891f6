mod common;

#[test]
fn analytic_derivatives_match_finite_differences() {
    let results = common::gradient_suite(50);
    assert!(results.len() >= 12);
    for (name, err) in results {
        println!("{name:<28} {err:.2e}");
        assert!(err <= 1e-5, "{name}: relative error {err:e}");
    }
}
