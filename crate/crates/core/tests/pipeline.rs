use lqrecover::experiments::{
    aggregate, cross_validate_lambda, generate_instance, run_sweep, CovarianceSpec, CvSettings, ExperimentConfig,
    LambdaGrid, MethodSpec,
};
use lqrecover::solvers::Penalty;

fn desk() -> ExperimentConfig {
    ExperimentConfig {
        n: 32,
        s: 3,
        sample_sizes: vec![16, 28],
        num_trials: 4,
        methods: vec![
            MethodSpec::Regularized { penalty: Penalty::L1 },
            MethodSpec::Regularized { penalty: Penalty::Lq { q: 0.5 } },
            MethodSpec::Regularized { penalty: Penalty::Scad { a: 3.7 } },
            MethodSpec::Constrained { q: 0.5 },
        ],
        cv_folds: 4,
        master_seed: 11,
        ..ExperimentConfig::paper()
    }
}

#[test]
fn table_cells_are_trial_means() {
    let cfg = desk();
    let reports = run_sweep(&cfg).unwrap();
    assert_eq!(reports.len(), 2 * 4 * 4);
    let rows = aggregate(&reports);
    assert_eq!(rows.len(), 8);
    for row in &rows {
        let cell: Vec<_> = reports.iter().filter(|r| r.m == row.m && r.method == row.method).collect();
        assert_eq!(cell.len(), row.trials);
        let mean = cell.iter().map(|r| r.sensitivity).sum::<f64>() / cell.len() as f64;
        assert!((mean - row.sensitivity.mean).abs() <= 1e-12);
        let mean = cell.iter().map(|r| r.specificity).sum::<f64>() / cell.len() as f64;
        assert!((mean - row.specificity.mean).abs() <= 1e-12);
        assert!(row.max_objective_increase <= 1e-12);
    }
}

#[test]
fn only_lq_methods_carry_dominance_and_overlays() {
    let reports = run_sweep(&desk()).unwrap();
    for r in &reports {
        let lq = !r.method.starts_with("SCAD");
        assert_eq!(r.dominant_property_held.is_some(), lq, "{}", r.method);
        if r.within_bound.is_some() {
            assert!(r.bound.is_some());
        }
    }
}

#[test]
fn noiseless_cv_avoids_the_largest_lambda() {
    let inst = generate_instance(40, 30, 3, 0.0, &CovarianceSpec::Identity, 4).unwrap();
    let settings = CvSettings { folds: 5, grid: LambdaGrid::Relative { num: 12, min_ratio: 1e-4 }, ..CvSettings::default() };
    let pen = Penalty::L1;
    let res = cross_validate_lambda(&inst.x, &inst.y, pen, &settings, 9).unwrap();
    assert!(res.index > 0);
    assert!(res.lambda < res.lambdas[0]);
    let again = cross_validate_lambda(&inst.x, &inst.y, pen, &settings, 9).unwrap();
    assert_eq!(res.lambda, again.lambda);
}
