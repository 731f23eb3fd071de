mod common;

use common::{central_difference, dataset, relative_error};
use irtkit::dataio::{parse_canonical, Dataset};
use irtkit::dkt::{train_dkt, DktHyperparams};
use irtkit::eval::{auc_of, online_predict, TrainedModel};
use irtkit::irt::{
    fit_hirt, fit_irt, hirt_log_posterior, irt_log_posterior, FitOptions, HirtParameters, IrtParameters,
};
use irtkit::link::PROBABILITY_FLOOR;
use irtkit::tirt::{discount_factor, estimate_from_history, tirt_log_posterior, DiscountedEntry, DiscountedHistory, TirtConfig};
use proptest::prelude::*;

type Rows = Vec<(u8, u8, bool)>;

fn rows_strategy(max_students: u8, max_items: u8, max_len: usize) -> impl Strategy<Value = Rows> {
    prop::collection::vec((0..max_students, 0..max_items, any::<bool>()), 1..max_len)
}

fn build(rows: &Rows) -> Dataset {
    let named: Vec<(String, String, String, bool)> = rows
        .iter()
        .map(|&(s, i, r)| (format!("s{s}"), format!("i{i}"), format!("g{}", i % 2), r))
        .collect();
    let refs: Vec<(&str, &str, &str, bool)> =
        named.iter().map(|(s, i, g, r)| (s.as_str(), i.as_str(), g.as_str(), *r)).collect();
    dataset(&refs)
}

fn params_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn irt_gradient_matches_finite_differences(rows in rows_strategy(6, 6, 30), seed in params_strategy(12)) {
        let d = build(&rows);
        let (ns, ni) = (d.n_students(), d.n_items());
        let x: Vec<f64> = seed[..ns + ni].to_vec();
        let split = |x: &[f64]| IrtParameters { theta: x[..ns].to_vec(), beta: x[ns..].to_vec() };
        let lp = irt_log_posterior(&split(&x), &d);
        let analytic: Vec<f64> = lp.grad_theta.iter().chain(&lp.grad_beta).copied().collect();
        let fd = central_difference(|y| irt_log_posterior(&split(y), &d).value, &x, 1e-5);
        prop_assert!(relative_error(&fd, &analytic) < 1e-5);
    }

    #[test]
    fn hirt_gradient_matches_finite_differences(
        rows in rows_strategy(5, 6, 30),
        seed in params_strategy(14),
        sigma2 in 0.1..2.0f64,
        tau2 in 0.1..2.0f64,
    ) {
        let d = build(&rows);
        let (ns, ni, ng) = (d.n_students(), d.n_items(), d.n_groups());
        let x: Vec<f64> = seed[..ns + ni + ng].to_vec();
        let split = |x: &[f64]| HirtParameters {
            theta: x[..ns].to_vec(),
            beta: x[ns..ns + ni].to_vec(),
            mu: x[ns + ni..].to_vec(),
            sigma2,
            tau2,
        };
        let lp = hirt_log_posterior(&split(&x), &d).unwrap();
        let analytic: Vec<f64> =
            lp.grad_theta.iter().chain(&lp.grad_beta).chain(&lp.grad_mu).copied().collect();
        let fd = central_difference(|y| hirt_log_posterior(&split(y), &d).unwrap().value, &x, 1e-5);
        prop_assert!(relative_error(&fd, &analytic) < 1e-5);
    }

    #[test]
    fn tirt_objective_is_concave_and_solved(
        hist in prop::collection::vec((-2.0..2.0f64, any::<bool>(), 0i64..50), 1..40),
        gamma2 in 0.0..20.0f64,
        theta in -3.0..3.0f64,
    ) {
        let h = DiscountedHistory {
            entries: hist
                .iter()
                .map(|&(beta, correct, lag)| DiscountedEntry { beta, correct, discount: discount_factor(gamma2, lag).unwrap() })
                .collect(),
        };
        let o = tirt_log_posterior(theta, &h, PROBABILITY_FLOOR);
        prop_assert!(o.curvature < 0.0);
        let fd = central_difference(|y| tirt_log_posterior(y[0], &h, PROBABILITY_FLOOR).value, &[theta], 1e-5);
        prop_assert!(relative_error(&fd, &[o.grad]) < 1e-5);
        let hat = estimate_from_history(&h, 0.0, PROBABILITY_FLOOR);
        prop_assert!(tirt_log_posterior(hat, &h, PROBABILITY_FLOOR).grad.abs() < 1e-8);
    }

    #[test]
    fn fits_ascend_and_predict_inside_unit_interval(rows in rows_strategy(6, 6, 40)) {
        let d = build(&rows);
        let fit = fit_irt(&d, &FitOptions::default()).unwrap();
        prop_assert!(fit.report.converged);
        for w in fit.report.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        let hirt = fit_hirt(&d, 0.5, 0.25, &FitOptions::default()).unwrap();
        for w in hirt.report.objective_trace.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        for s in 0..d.n_students() {
            for i in 0..d.n_items() {
                let p = fit.params.predict(Some(s), Some(i));
                prop_assert!(p > 0.0 && p < 1.0);
                let p = hirt.params.as_irt().predict(Some(s), Some(i));
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }
    }

    #[test]
    fn negating_responses_negates_estimates(rows in rows_strategy(6, 6, 40)) {
        let d = build(&rows);
        let flipped: Rows = rows.iter().map(|&(s, i, r)| (s, i, !r)).collect();
        let f = build(&flipped);
        let a = fit_irt(&d, &FitOptions::default()).unwrap().params;
        let b = fit_irt(&f, &FitOptions::default()).unwrap().params;
        for (x, y) in a.theta.iter().chain(&a.beta).zip(b.theta.iter().chain(&b.beta)) {
            prop_assert!((x + y).abs() < 1e-3);
        }
    }

    #[test]
    fn relabelling_permutes_parameters(rows in rows_strategy(6, 6, 40)) {
        let d = build(&rows);
        // Renaming reverses the order in which students and items are first
        // seen, so both index maps are permuted.
        let renamed: Rows = rows.iter().map(|&(s, i, r)| (5 - s, 5 - i, r)).collect();
        let mut reordered = renamed.clone();
        reordered.sort_by_key(|&(s, _, _)| s);
        let e = build(&reordered);
        let a = fit_irt(&d, &FitOptions::default()).unwrap().params;
        let b = fit_irt(&e, &FitOptions::default()).unwrap().params;
        for s in 0..d.n_students() as u32 {
            let name = d.students().name(s);
            let other = format!("s{}", 5 - name[1..].parse::<u8>().unwrap());
            let t = e.students().get(&other).unwrap();
            prop_assert!((a.theta[s as usize] - b.theta[t as usize]).abs() < 1e-6);
            for i in 0..d.n_items() as u32 {
                let iname = d.items().name(i);
                let j = e.items().get(&format!("i{}", 5 - iname[1..].parse::<u8>().unwrap())).unwrap();
                let pa = a.predict(Some(s as usize), Some(i as usize));
                let pb = b.predict(Some(t as usize), Some(j as usize));
                prop_assert!((pa - pb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(
        pairs in prop::collection::vec((0u32..64, any::<bool>()), 2..60),
    ) {
        let base: Vec<(f64, bool)> = pairs.iter().map(|&(k, r)| (k as f64 / 64.0, r)).collect();
        let Ok(a) = auc_of(&base) else { return Ok(()) };
        prop_assert!((0.0..=1.0).contains(&a));
        let cubed: Vec<(f64, bool)> = base.iter().map(|&(p, r)| (p * p * p + 0.01, r)).collect();
        let logit: Vec<(f64, bool)> = base.iter().map(|&(p, r)| ((p + 0.01).ln() - (1.01 - p).ln(), r)).collect();
        prop_assert_eq!(auc_of(&cubed).unwrap(), a);
        prop_assert_eq!(auc_of(&logit).unwrap(), a);
    }

    #[test]
    fn reversed_scores_give_complementary_auc(labels in prop::collection::vec(any::<bool>(), 2..40)) {
        let pairs: Vec<(f64, bool)> = labels.iter().enumerate().map(|(k, &r)| ((k as f64 * 0.37).sin(), r)).collect();
        let Ok(a) = auc_of(&pairs) else { return Ok(()) };
        let rev: Vec<(f64, bool)> = pairs.iter().map(|&(p, r)| (-p, r)).collect();
        prop_assert!((auc_of(&rev).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn canonical_round_trip_is_stable(rows in rows_strategy(5, 5, 30)) {
        let d = build(&rows);
        for s in 0..d.n_students() as u32 {
            let times: Vec<u32> = d.sequence(s).map(|r| r.time_index).collect();
            prop_assert_eq!(times, (0..d.sequence(s).len() as u32).collect::<Vec<_>>());
        }
        let mut buf = Vec::new();
        d.write_canonical(&mut buf).unwrap();
        let again = parse_canonical(buf.as_slice()).unwrap();
        prop_assert_eq!(again.len(), d.len());
        prop_assert_eq!(again.content_hash(), d.content_hash());
    }
}

fn causal_models(d: &Dataset) -> Vec<TrainedModel> {
    let n = d.n_items();
    let beta: Vec<f64> = (0..n).map(|i| (i as f64 * 0.9).sin()).collect();
    let seen = vec![true; n];
    let hp = DktHyperparams { compressed_dim: 4, hidden_dim: 5, epochs: 2, seed: 9, ..Default::default() };
    let dkt = train_dkt(d, &hp).unwrap();
    vec![
        TrainedModel::Static { beta: beta.clone(), seen: seen.clone(), floor: PROBABILITY_FLOOR },
        TrainedModel::Temporal { beta, seen: seen.clone(), cfg: TirtConfig::new(0.3).unwrap(), floor: PROBABILITY_FLOOR },
        TrainedModel::Dkt { params: dkt.params, labels: hp.labels, seen },
        TrainedModel::Window { w: 3 },
        TrainedModel::Constant { p: 0.6 },
    ]
}

#[test]
fn truncating_a_history_leaves_earlier_predictions_unchanged() {
    let rows: Rows = (0..60).map(|k| ((k % 3) as u8, (k * 7 % 5) as u8, k % 4 != 1 && k % 7 != 0)).collect();
    let d = build(&rows);
    for model in causal_models(&d) {
        for s in 0..d.n_students() as u32 {
            let seq = d.sequence_vec(s);
            let full = model.predict_sequence(&seq, &d).unwrap();
            for cut in 0..=seq.len() {
                let part = model.predict_sequence(&seq[..cut], &d).unwrap();
                assert_prefix(&part, &full);
            }
            // Changing a later response never moves an earlier prediction.
            let mut changed = seq.clone();
            let last = changed.len() - 1;
            changed[last].correct = !changed[last].correct;
            let again = model.predict_sequence(&changed, &d).unwrap();
            for (a, b) in again.iter().zip(&full) {
                assert_eq!(a.probability, b.probability);
            }
        }
    }
}

fn assert_prefix(part: &[irtkit::eval::PredictionEntry], full: &[irtkit::eval::PredictionEntry]) {
    assert!(part.len() <= full.len());
    for (a, b) in part.iter().zip(full) {
        assert_eq!(a, b);
    }
}

#[test]
fn duplicated_rows_inflate_the_previous_response_baseline() {
    let rows: Rows = (0..80).map(|k| ((k % 4) as u8, (k % 5) as u8, (k * 13 % 7) < 4)).collect();
    let dedup = build(&rows);
    let doubled: Rows = rows.iter().flat_map(|&r| [r, r]).collect();
    let dup = build(&doubled);
    let students = |d: &Dataset| (0..d.n_students() as u32).collect::<Vec<_>>();
    let model = TrainedModel::Window { w: 1 };
    let a = online_predict(&model, &dedup, &students(&dedup)).unwrap();
    let b = online_predict(&model, &dup, &students(&dup)).unwrap();
    let acc = |l: &irtkit::eval::PredictionLog| irtkit::eval::accuracy(l).unwrap();
    assert!(acc(&b) > acc(&a));
    // Every second copy is predicted from its twin.
    assert!(b.entries.iter().filter(|e| e.time_index % 2 == 1).all(|e| (e.probability == 1.0) == e.correct));
}
