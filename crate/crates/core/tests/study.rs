//! Coverage-study trends on the benchmark model.

use marband::exec::with_threads;
use marband::{run_study, Execution, MissingModel, SimConfig};

const SEED: u64 = 20_240_601;

#[test]
fn coverage_grows_and_area_shrinks_with_n() {
    let reports: Vec<_> = [200usize, 500, 1000]
        .iter()
        .map(|&n| run_study(&SimConfig::new(n, MissingModel::A, 300, SEED), Execution::Parallel).unwrap())
        .collect();
    for w in reports.windows(2) {
        let (small, large) = (&w[0], &w[1]);
        for alpha in [0.10, 0.05] {
            let (a, b) = (small.level(alpha).unwrap(), large.level(alpha).unwrap());
            assert!(
                b.proposed.coverage >= a.proposed.coverage - 0.03,
                "coverage n={} -> n={}: {} -> {}",
                small.config.n,
                large.config.n,
                a.proposed.coverage,
                b.proposed.coverage
            );
            assert!(b.proposed.mean_area < a.proposed.mean_area);
            assert!(b.complete_case.mean_area < a.complete_case.mean_area);
        }
    }
    for r in &reports {
        assert_eq!(r.failures, 0);
        let (l10, l05) = (r.level(0.10).unwrap(), r.level(0.05).unwrap());
        assert!(l05.proposed.covered >= l10.proposed.covered);
        assert!(l05.complete_case.covered >= l10.complete_case.covered);
        assert!((r.missing_rate - 0.5).abs() < 0.03);
    }
}

#[test]
fn report_is_independent_of_worker_count() {
    let config = SimConfig::new(300, MissingModel::B, 24, SEED);
    let one = with_threads(1, || run_study(&config, Execution::Parallel).unwrap());
    let four = with_threads(4, || run_study(&config, Execution::Parallel).unwrap());
    let seq = run_study(&config, Execution::Sequential).unwrap();
    assert_eq!(one, four);
    assert_eq!(one, seq);
    assert_eq!(
        serde_json::to_string(&one).unwrap(),
        serde_json::to_string(&four).unwrap()
    );
}

#[test]
fn proposed_ecdf_is_closer_to_uniform_than_complete_case() {
    let r = run_study(&SimConfig::new(1000, MissingModel::A, 300, SEED), Execution::Parallel).unwrap();
    assert!(r.ks_u < r.ks_v, "KS(U) = {}, KS(V) = {}", r.ks_u, r.ks_v);
}
