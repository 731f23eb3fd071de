use irtkit::dataio::{generate_synthetic, SyntheticConfig};
use irtkit::dkt::DktHyperparams;
use irtkit::eval::{cross_validate, make_split, sweep, ModelFamily, ModelSpec, SweepGrid};
use irtkit::irt::FitOptions;

#[test]
fn hierarchy_helps_on_grouped_data() {
    let cfg = SyntheticConfig { n_groups: 8, tau2: 0.5, sigma2: 0.125, ..SyntheticConfig::new(150, 160, 30, 41) };
    let (d, _) = generate_synthetic(&cfg).unwrap();
    let plan = make_split(d.n_students(), 2).unwrap();
    let opts = FitOptions::default();
    let irt = cross_validate(&ModelSpec::Irt, &d, &plan, &opts).unwrap().report;
    let hirt = cross_validate(&ModelSpec::Hirt { sigma2: 0.125, tau2: 0.5 }, &d, &plan, &opts).unwrap().report;
    let (a, b) = (irt.auc().unwrap().0, hirt.auc().unwrap().0);
    assert!(b >= a, "HIRT {b} vs IRT {a}");
}

#[test]
fn drift_sweep_selects_positive_gamma() {
    let cfg = SyntheticConfig { drift_gamma2: 0.05, ..SyntheticConfig::new(100, 30, 120, 8) };
    let (d, _) = generate_synthetic(&cfg).unwrap();
    let plan = make_split(d.n_students(), 1).unwrap();
    let grid = SweepGrid::default_for(ModelFamily::Tirt, &DktHyperparams::default());
    let res = sweep(&grid, &d, &plan, &FitOptions::default()).unwrap();
    assert_eq!(res.rows.len(), grid.points.len());
    let ModelSpec::Tirt { gamma2 } = res.best else { panic!("{:?}", res.best) };
    assert!(gamma2 > 0.0);
}

#[test]
fn cross_validation_is_deterministic() {
    let (d, _) = generate_synthetic(&SyntheticConfig::new(40, 10, 15, 4)).unwrap();
    let plan = make_split(d.n_students(), 9).unwrap();
    let opts = FitOptions::default();
    let hp = DktHyperparams { compressed_dim: 6, hidden_dim: 5, epochs: 2, seed: 3, ..Default::default() };
    for spec in [ModelSpec::Irt, ModelSpec::Tirt { gamma2: 0.1 }, ModelSpec::Dkt(hp)] {
        let a = cross_validate(&spec, &d, &plan, &opts).unwrap();
        let b = cross_validate(&spec, &d, &plan, &opts).unwrap();
        assert_eq!(a, b);
        let expected: usize = plan.folds.iter().flatten().map(|&s| d.sequence(s).len() - 1).sum();
        assert_eq!(a.logs.iter().map(|l| l.len()).sum::<usize>(), expected);
    }
}

#[test]
fn fold_errors_carry_the_fold() {
    let (d, _) = generate_synthetic(&SyntheticConfig::new(20, 5, 5, 4)).unwrap();
    let plan = make_split(d.n_students(), 0).unwrap();
    let bad = ModelSpec::Dkt(DktHyperparams { compressed_dim: 99, ..Default::default() });
    let err = cross_validate(&bad, &d, &plan, &FitOptions::default()).unwrap_err();
    assert!(matches!(err, irtkit::Error::Fold { .. }), "{err}");
}
