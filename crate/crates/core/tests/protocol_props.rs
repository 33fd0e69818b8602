use fearh_core::model::ParameterVector;
use fearh_core::protocol::{hybridize_pair, hybridize_round, select_swap_positions, HybridConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sorted_bits(values: impl Iterator<Item = f64>) -> Vec<u64> {
    let mut v: Vec<u64> = values.map(f64::to_bits).collect();
    v.sort_unstable();
    v
}

proptest! {
    #[test]
    fn pair_swap_conserves_values_and_touches_only_selected(
        len in 1usize..60,
        gamma in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..len).map(|_| rng.gen()).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() + 2.0).collect();
        let hybrid = HybridConfig::new(gamma).unwrap();
        let positions = select_swap_positions(len, hybrid, &mut rng);
        prop_assert_eq!(positions.len(), (gamma * len as f64 + 1e-9).floor() as usize);

        let pa = ParameterVector::new(a.clone()).unwrap();
        let pb = ParameterVector::new(b.clone()).unwrap();
        let (a2, b2) = hybridize_pair(&pa, &pb, &positions).unwrap();

        for k in 0..len {
            let selected = positions.contains(&k);
            // a and b never share a value, so every selected slot must change.
            prop_assert_eq!(a2.as_slice()[k] != a[k], selected);
            prop_assert_eq!(b2.as_slice()[k] != b[k], selected);
            let before = sorted_bits([a[k], b[k]].into_iter());
            let after = sorted_bits([a2.as_slice()[k], b2.as_slice()[k]].into_iter());
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn round_preserves_pair_multisets(
        n in 1usize..10,
        len in 1usize..30,
        gamma in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<ParameterVector> = (0..n)
            .map(|_| ParameterVector::new((0..len).map(|_| rng.gen()).collect()).unwrap())
            .collect();
        let (out, plan) = hybridize_round(&models, HybridConfig::new(gamma).unwrap(), &mut rng).unwrap();
        for &(i, j) in &plan.pairing.pairs {
            for k in 0..len {
                let before = sorted_bits([models[i].as_slice()[k], models[j].as_slice()[k]].into_iter());
                let after = sorted_bits([out[i].as_slice()[k], out[j].as_slice()[k]].into_iter());
                prop_assert_eq!(before, after);
            }
        }
        if let Some(left) = plan.pairing.leftover {
            prop_assert_eq!(&out[left], &models[left]);
        }
    }
}
