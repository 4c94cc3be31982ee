//! Thread-count independence of the Monte Carlo estimators.
//!
//! Every sample draws from its own counter-derived RNG substream and the
//! reduction runs in index order, so the estimates must be bit-identical
//! whether the fill loop runs sequentially or on a rayon pool. A single test
//! function flips `RECTFREE_THREADS` between runs; keeping it alone in this
//! target avoids races with other tests over the process environment.

use rectfree::mc::{estimate_classical_cumulant_c2, estimate_in};
use rectfree::{MatrixModel, ScalarField};

const THREADS_VAR: &str = "RECTFREE_THREADS";

fn with_threads<T>(setting: Option<&str>, run: impl FnOnce() -> T) -> T {
    match setting {
        Some(v) => std::env::set_var(THREADS_VAR, v),
        None => std::env::remove_var(THREADS_VAR),
    }
    let out = run();
    std::env::remove_var(THREADS_VAR);
    out
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let real = MatrixModel::new(vec![0.4, 0.7, 1.0, 1.3], 8, ScalarField::Real).unwrap();
    let complex = MatrixModel::new(vec![0.6, 0.9, 1.2], 6, ScalarField::Complex).unwrap();
    let samples = 5000;
    let seed = 0xD17E_0001;

    for model in [&real, &complex] {
        let sequential = with_threads(None, || estimate_in(model, 0.3, samples, seed).unwrap());
        for threads in ["1", "2", "4", "7"] {
            let pooled =
                with_threads(Some(threads), || estimate_in(model, 0.3, samples, seed).unwrap());
            assert_eq!(
                sequential.value.to_bits(),
                pooled.value.to_bits(),
                "estimate value drifted at {threads} threads"
            );
            assert_eq!(
                sequential.std_error.to_bits(),
                pooled.std_error.to_bits(),
                "standard error drifted at {threads} threads"
            );
        }

        let c2_seq =
            with_threads(None, || estimate_classical_cumulant_c2(model, samples, seed).unwrap());
        let c2_par = with_threads(Some("4"), || {
            estimate_classical_cumulant_c2(model, samples, seed).unwrap()
        });
        assert_eq!(c2_seq.value.to_bits(), c2_par.value.to_bits());
        assert_eq!(c2_seq.std_error.to_bits(), c2_par.std_error.to_bits());
    }

    // An explicit zero must behave exactly like unset: sequential execution.
    let zero = with_threads(Some("0"), || estimate_in(&real, 0.3, samples, seed).unwrap());
    let unset = with_threads(None, || estimate_in(&real, 0.3, samples, seed).unwrap());
    assert_eq!(zero.value.to_bits(), unset.value.to_bits());
}
