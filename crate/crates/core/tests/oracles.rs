//! Brute-force oracles checked against the production code paths.

use fearh_core::metrics::{aupr, auroc, ScoredLabels};
use fearh_core::model::{HiddenActivation, ModelConfig, ModelKind, Network, ParameterVector};
use fearh_core::protocol::{federated_average, OwnerWeights};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of the batch loss, one parameter at a time.
fn numeric_gradient(net: &Network, rows: &[&[u8]], labels: &[u8], h: f64) -> Vec<f64> {
    let base = net.params().as_slice().to_vec();
    (0..base.len())
        .map(|k| {
            let mut plus = base.clone();
            plus[k] += h;
            let mut minus = base.clone();
            minus[k] -= h;
            let lp = net
                .with_params(ParameterVector::new(plus).unwrap())
                .unwrap()
                .batch_loss(rows, labels)
                .unwrap();
            let lm = net
                .with_params(ParameterVector::new(minus).unwrap())
                .unwrap()
                .batch_loss(rows, labels)
                .unwrap();
            (lp - lm) / (2.0 * h)
        })
        .collect()
}

/// Relative error with a 1e-6 floor on the denominator so entries that are
/// zero in both (dead units, inactive inputs) count as agreement.
fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Network, Vec<Vec<u8>>, Vec<u8>) {
    let d = rng.gen_range(1..=6);
    let sizes = match rng.gen_range(0..4) {
        0 => vec![d, 1],
        1 => vec![d, rng.gen_range(1..=4), 1],
        2 => vec![d, rng.gen_range(1..=4), rng.gen_range(1..=2), 1],
        _ => vec![d, 4, 2, 1],
    };
    let kind = if sizes.len() == 2 { ModelKind::Logistic } else { ModelKind::NeuralNet };
    let act = if rng.gen_bool(0.8) { HiddenActivation::Relu } else { HiddenActivation::Tanh };
    let config = ModelConfig::new(sizes, act, kind).unwrap();
    let len = fearh_core::model::param_count(&config);
    let params = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let net = Network::from_params(config, ParameterVector::new(params).unwrap()).unwrap();
    let batch = rng.gen_range(1..=8);
    let rows = (0..batch)
        .map(|_| (0..d).map(|_| rng.gen_range(0..2u8)).collect())
        .collect();
    let labels = (0..batch).map(|_| rng.gen_range(0..2u8)).collect();
    (net, rows, labels)
}

/// Worst relative error of backprop against finite differences over
/// `instances` random networks.
pub fn gradient_check(instances: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..instances)
        .map(|_| {
            let (net, rows, labels) = random_instance(&mut rng);
            let refs: Vec<&[u8]> = rows.iter().map(Vec::as_slice).collect();
            let exact = net.gradient(&refs, &labels).unwrap();
            let numeric = numeric_gradient(&net, &refs, &labels, 1e-5);
            max_relative_error(exact.as_slice(), &numeric)
        })
        .fold(0.0, f64::max)
}

#[test]
fn backprop_matches_finite_differences() {
    let err = gradient_check(100, 17);
    assert!(err < 1e-4, "max relative error {err}");
}

fn brute_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Scores on a coarse grid so tie groups are common.
fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..=50).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..10).prop_map(|k| k as f64 / 10.0), n),
            prop::collection::vec(0u8..2, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn auroc_equals_pair_enumeration((scores, labels) in scored()) {
        let data = ScoredLabels::new(scores.clone(), labels.clone()).unwrap();
        let pos = data.positives();
        prop_assume!(pos > 0 && pos < labels.len());
        let fast = auroc(&data).unwrap();
        prop_assert!((fast - brute_auroc(&scores, &labels)).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&fast));
        let ap = aupr(&data).unwrap();
        prop_assert!((0.0..=1.0).contains(&ap));
    }
}

proptest! {
    #[test]
    fn auroc_ignores_monotone_transforms(
        (scores, labels) in scored(),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let pos = labels.iter().filter(|&&y| y == 1).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let base = auroc(&ScoredLabels::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (scale * s + shift).exp()).collect();
        let moved = auroc(&ScoredLabels::new(mapped, labels).unwrap()).unwrap();
        prop_assert!((base - moved).abs() <= 1e-12);
    }

    #[test]
    fn auroc_label_flip_complements(
        scores in prop::collection::hash_set(0u32..100_000, 2..40),
        seed in any::<u64>(),
    ) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<u8> = scores.iter().map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let flipped: Vec<u8> = labels.iter().map(|y| 1 - y).collect();
        let a = auroc(&ScoredLabels::new(scores.clone(), labels).unwrap()).unwrap();
        let b = auroc(&ScoredLabels::new(scores, flipped).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn weighted_average_matches_elementwise_loop(
        n in 1usize..6,
        len in 1usize..20,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect())
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let rho: Vec<f64> = raw.iter().map(|r| r / total).collect();

        let mut expected = vec![0.0; len];
        for k in 0..len {
            for l in 0..n {
                expected[k] += rho[l] * models[l][k];
            }
        }
        let pvs: Vec<ParameterVector> =
            models.iter().map(|m| ParameterVector::new(m.clone()).unwrap()).collect();
        let got = federated_average(&pvs, &OwnerWeights::new(rho).unwrap()).unwrap();
        for (g, e) in got.as_slice().iter().zip(&expected) {
            prop_assert!((g - e).abs() <= 1e-12);
        }

        let uniform = federated_average(&pvs, &OwnerWeights::uniform(n).unwrap()).unwrap();
        for k in 0..len {
            let mean = models.iter().map(|m| m[k]).sum::<f64>() / n as f64;
            prop_assert!((uniform.as_slice()[k] - mean).abs() <= 1e-12);
        }
    }
}
