use hdsi_core::simulation::{aggregate_metrics, generate_dgp, run_replication, run_study, StudyMethod};
use hdsi_core::{DgpConfig, PenaltyConfig};

fn small() -> DgpConfig {
    DgpConfig::new(200, 12, 0.5, 1.0, 4, 11, 40).unwrap()
}

#[test]
fn report_does_not_depend_on_thread_count() {
    let cfg = small();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_study(&cfg, 0.1, 200).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(4));
    assert_eq!(a, run_study(&cfg, 0.1, 200).unwrap());
    assert_eq!(a.replications, 40);
    assert_eq!(a.failures, 0);
}

#[test]
fn adjusted_rejections_nest_inside_naive() {
    let cfg = small();
    for r in 0..10 {
        let sets = run_replication(&cfg, r, 0.1, 200, &PenaltyConfig::homoscedastic()).unwrap();
        let naive = &sets[0];
        for set in &sets[1..5] {
            for k in 0..cfg.k {
                assert!(!set[k] || naive[k]);
            }
        }
        // Bonferroni within Holm within BH.
        for k in 0..cfg.k {
            assert!(!sets[2][k] || sets[3][k]);
            assert!(!sets[3][k] || sets[1][k]);
        }
    }
}

#[test]
fn generated_data_is_reproducible_and_distinct_across_replications() {
    let cfg = small();
    let a = generate_dgp(&cfg, 3).unwrap();
    let b = generate_dgp(&cfg, 3).unwrap();
    let c = generate_dgp(&cfg, 4).unwrap();
    assert_eq!(a.x(), b.x());
    assert_eq!(a.y(), b.y());
    assert_ne!(a.y(), c.y());
    assert_eq!(a.k(), cfg.k);
}

#[test]
fn regressor_correlation_follows_toeplitz() {
    let cfg = DgpConfig::new(20_000, 4, 0.6, 1.0, 1, 5, 1).unwrap();
    let d = generate_dgp(&cfg, 0).unwrap();
    let x = d.x();
    let n = cfg.n as f64;
    for (a, b, want) in [(0, 1, 0.6), (0, 2, 0.36), (1, 3, 0.36), (2, 2, 1.0)] {
        let cov = x.column(a).dot(&x.column(b)) / n;
        assert!((cov - want).abs() < 0.03, "cov({a},{b}) = {cov}");
    }
}

#[test]
fn metric_conventions() {
    let truth = [true, false];
    let m = aggregate_metrics(&[vec![true, true]], &truth);
    assert_eq!((m.mean_correct, m.mean_incorrect, m.fdr, m.fwer), (1.0, 1.0, 0.5, 1.0));
    let m = aggregate_metrics(&[vec![false, false], vec![false, false]], &truth);
    assert_eq!((m.mean_correct, m.mean_incorrect, m.fdr, m.fwer), (0.0, 0.0, 0.0, 0.0));
    let m = aggregate_metrics(&[vec![true, true]], &[false, false]);
    assert_eq!((m.fdr, m.fwer), (1.0, 1.0));
    let m = aggregate_metrics(&[vec![true, false], vec![false, false]], &truth);
    assert!((m.sd_correct - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn reference_design_support() {
    let cfg = DgpConfig::reference(500, 1, 1);
    let idx: Vec<usize> = (0..60).filter(|&k| cfg.theta[k] != 0.0).collect();
    assert_eq!(idx, (0..12).map(|i| 5 * i).collect::<Vec<_>>());
    assert_eq!(
        &cfg.theta[..15],
        &[1.0, 0.0, 0.0, 0.0, 0.0, -0.8, 0.0, 0.0, 0.0, 0.0, 0.6, 0.0, 0.0, 0.0, 0.0]
    );
    assert_eq!(StudyMethod::ALL.len(), 6);
}
