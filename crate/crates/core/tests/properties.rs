use proptest::prelude::*;

use prefdesign::belief::{log_likelihood, log_unnormalized_posterior, preference_likelihood, Answer};
use prefdesign::domains::{instantiate, plan, DomainSpec};
use prefdesign::envdesign::GpModel;
use prefdesign::experiments::reward_correlation;
use prefdesign::query::{best_pair, info_gain};
use prefdesign::{BeliefSamples, CandidatePair, FeatureVector, PreferenceRecord, WeightVector};

const D: usize = 4;

fn features() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, D)
}

/// Points inside the closed unit ball.
fn inside() -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0..1.0f64, D), 0.0..1.0f64).prop_map(|(v, r)| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            v
        } else {
            v.iter().map(|x| x / n * r).collect()
        }
    })
}

fn answer() -> impl Strategy<Value = Answer> {
    prop_oneof![Just(Answer::A), Just(Answer::B)]
}

fn record() -> impl Strategy<Value = PreferenceRecord> {
    (features(), features(), answer(), 0.1..5.0f64).prop_map(|(a, b, c, beta)| {
        PreferenceRecord::with_rationality(FeatureVector::new(a).unwrap(), FeatureVector::new(b).unwrap(), c, beta)
            .unwrap()
    })
}

fn belief(k: usize) -> impl Strategy<Value = BeliefSamples> {
    prop::collection::vec(inside(), k).prop_map(|ws| {
        BeliefSamples::from_samples(ws.into_iter().map(|w| WeightVector::new(w).unwrap()).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn likelihood_complement_is_one(r in record(), w in inside()) {
        let total = preference_likelihood(&r, &w).unwrap() + preference_likelihood(&r.flipped(), &w).unwrap();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn likelihood_is_a_probability(r in record(), w in inside()) {
        let p = preference_likelihood(&r, &w).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(log_likelihood(&r, &w).unwrap() <= 0.0);
    }

    #[test]
    fn log_posterior_is_additive(
        first in prop::collection::vec(record(), 0..6),
        second in prop::collection::vec(record(), 0..6),
        w in inside(),
    ) {
        let joined: Vec<_> = first.iter().chain(&second).cloned().collect();
        let whole = log_unnormalized_posterior(&w, &joined).unwrap();
        let parts = log_unnormalized_posterior(&w, &first).unwrap() + log_unnormalized_posterior(&w, &second).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9 * (1.0 + whole.abs()));
        let direct: f64 = joined.iter().map(|r| log_likelihood(r, &w).unwrap()).sum();
        prop_assert!((whole - direct).abs() <= 1e-9 * (1.0 + whole.abs()));
    }

    #[test]
    fn posterior_support_is_the_unit_ball(
        records in prop::collection::vec(record(), 0..4),
        v in prop::collection::vec(-3.0..3.0f64, D),
    ) {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lp = log_unnormalized_posterior(&v, &records).unwrap();
        if n > 1.0 + 1e-9 {
            prop_assert_eq!(lp, f64::NEG_INFINITY);
            prop_assert!(WeightVector::new(v).is_err());
        } else {
            prop_assert!(lp.is_finite());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn info_gain_bounds_and_symmetry(a in features(), b in features(), bel in belief(40)) {
        let pair = CandidatePair::new(FeatureVector::new(a.clone()).unwrap(), FeatureVector::new(b).unwrap()).unwrap();
        let g = info_gain(&pair, &bel).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&g));
        let swapped = info_gain(&pair.swapped(), &bel).unwrap();
        prop_assert!((g - swapped).abs() <= 1e-12);
        let same = CandidatePair::new(FeatureVector::new(a.clone()).unwrap(), FeatureVector::new(a).unwrap()).unwrap();
        prop_assert!(info_gain(&same, &bel).unwrap() <= 1e-9);
    }

    #[test]
    fn best_pair_is_exhaustive_max(cands in prop::collection::vec(features(), 2..7), bel in belief(30)) {
        let fs: Vec<FeatureVector> = cands.into_iter().map(|c| FeatureVector::new(c).unwrap()).collect();
        let ((i, j), g) = best_pair(&fs, &bel).unwrap();
        prop_assert!(i < j);
        let mut best = ((0, 1), f64::NEG_INFINITY);
        for x in 0..fs.len() {
            for y in x + 1..fs.len() {
                let gx = info_gain(&CandidatePair::new(fs[x].clone(), fs[y].clone()).unwrap(), &bel).unwrap();
                if gx > best.1 {
                    best = ((x, y), gx);
                }
            }
        }
        prop_assert_eq!((i, j), best.0);
        prop_assert_eq!(g, best.1);
    }

    #[test]
    fn correlation_scale_and_sign(
        pts in prop::collection::vec(features(), 3..30),
        w in inside(),
        v in inside(),
        c in 0.01..100.0f64,
    ) {
        let fs: Vec<FeatureVector> = pts.into_iter().map(|p| FeatureVector::new(p).unwrap()).collect();
        if let Ok(r) = reward_correlation(&w, &v, &fs) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let wscaled: Vec<f64> = w.iter().map(|x| x * c).collect();
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            prop_assert!((reward_correlation(&w, &scaled, &fs).unwrap() - r).abs() <= 1e-12);
            prop_assert!((reward_correlation(&wscaled, &v, &fs).unwrap() - r).abs() <= 1e-12);
            prop_assert!((reward_correlation(&w, &neg, &fs).unwrap() + r).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn gp_variance_never_exceeds_prior(
        xs in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 0..12),
        probe in prop::collection::vec(0.0..1.0f64, 2),
        ls in 0.05..1.0f64,
        sv in 0.1..4.0f64,
    ) {
        let ys: Vec<f64> = xs.iter().map(|x| (5.0 * x[0]).sin() + x[1]).collect();
        let m = GpModel::new(vec![ls, ls], sv, 1e-4).unwrap().with_data(xs, ys).unwrap();
        let (_, sd) = m.condition().unwrap().predict(&probe).unwrap();
        prop_assert!(sd * sd <= sv * (1.0 + 1e-12));
    }

    #[test]
    fn plan_is_invariant_to_positive_rescaling(
        w in inside(),
        c in prop_oneof![Just(0.5), Just(2.0), Just(3.0), Just(10.0), 0.01..100.0f64],
        theta in prop::collection::vec(0.0..1.0f64, 12),
        seed in 0u64..4,
    ) {
        let spec = DomainSpec::gridnav();
        let mut w5 = w.clone();
        w5.push(0.0);
        let env = instantiate(&spec, &theta, seed).unwrap();
        let scaled: Vec<f64> = w5.iter().map(|x| x * c).collect();
        prop_assert_eq!(plan(&env, &w5, &spec).unwrap(), plan(&env, &scaled, &spec).unwrap());
    }
}
