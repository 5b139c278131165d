use std::collections::BTreeSet;
use std::time::Instant;

use proptest::prelude::*;
use scw_core::channel::{transmit, ParametricCsi};
use scw_core::codebook::{enumerate_full_scw, sample_partial_codebook};
use scw_core::detect::{
    detect_binary_cw_csi_free, detect_coherent_ml, detect_noncoherent_ml, detect_scw_csi_free,
    detect_scw_csi_free_with, is_sort_consistent, log_likelihood, TieOptions,
};
use scw_core::rng::stream;
use scw_core::{Codeword, Csi, CsiModel, ObservationVector, PhysicalParams, SymbolAlphabet, WeightVector};

fn code_strategy() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (2usize..=3)
        .prop_flat_map(|levels| (Just(levels), prop::collection::vec(0usize..=3, levels)))
        .prop_filter("K between 1 and 8", |(_, c)| (1..=8).contains(&c.iter().sum::<usize>()))
}

fn set(words: &[Codeword]) -> BTreeSet<Codeword> {
    words.iter().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn sorting_attains_the_coherent_maximum(
        (levels, counts) in code_strategy(),
        c_s in 0.01f64..30.0,
        c_n in 0.05f64..10.0,
        seed in any::<u64>(),
    ) {
        let alphabet = SymbolAlphabet::uniform(levels).unwrap();
        let w = WeightVector::new(counts).unwrap();
        let book = enumerate_full_scw(&alphabet, &w).unwrap();
        let csi = Csi::new(c_s, c_n).unwrap();
        let mut rng = stream(seed, &[]);
        let sent = &book.codewords()[seed as usize % book.len()];
        let obs = transmit(sent, &alphabet, &csi, &mut rng);

        let sorted = detect_scw_csi_free_with(&obs, &alphabet, &w, TieOptions { enumerate: true, cap: usize::MAX }).unwrap();
        let coherent = detect_coherent_ml(&obs, &book, &csi).unwrap();
        let ll = log_likelihood(&obs, &sorted.best, &alphabet, &csi);
        prop_assert!((ll - coherent.score).abs() <= 1e-9 * coherent.score.abs().max(1.0));
        prop_assert!(coherent.is_tied_with(&sorted.best));
        prop_assert!(is_sort_consistent(&obs, &coherent.best));
        prop_assert_eq!(set(&sorted.ties), set(&coherent.ties));
        prop_assert_eq!(sorted.tie_count, coherent.ties.len() as u128);
    }

    #[test]
    fn noncoherent_detection_stays_in_the_co_optimal_set(
        (levels, counts) in code_strategy(),
        c_a in 0.01f64..20.0,
        c_b in 0.01f64..20.0,
        p in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let alphabet = SymbolAlphabet::uniform(levels).unwrap();
        let w = WeightVector::new(counts).unwrap();
        let book = enumerate_full_scw(&alphabet, &w).unwrap();
        let mixture = CsiModel::FiniteMixture {
            components: vec![(Csi::new(c_a, 2.0).unwrap(), p), (Csi::new(c_b, 2.0).unwrap(), 1.0 - p)],
        };
        let parametric = CsiModel::ParametricRandom(ParametricCsi::default_random(PhysicalParams::default(), 3.0));
        let mut rng = stream(seed, &[1]);
        let sent = &book.codewords()[seed as usize % book.len()];
        let obs = transmit(sent, &alphabet, &Csi::new(c_a, 2.0).unwrap(), &mut rng);
        let sorted = detect_scw_csi_free(&obs, &alphabet, &w).unwrap();
        for model in [mixture, parametric] {
            let nc = detect_noncoherent_ml(&obs, &book, &model, 8, &mut rng).unwrap();
            prop_assert!(is_sort_consistent(&obs, &nc.best));
            prop_assert!(sorted.ties.is_empty() || sorted.is_tied_with(&nc.best));
        }
    }

    #[test]
    fn correlation_and_likelihood_argmax_sets_agree(
        k in 2usize..=10,
        omega_frac in 0.0f64..1.0,
        size in 2usize..=64,
        c_s in 0.01f64..30.0,
        c_n in 0.05f64..10.0,
        seed in any::<u64>(),
    ) {
        let omega = ((k as f64 * omega_frac) as usize).clamp(1, k - 1);
        let full = enumerate_full_scw(&SymbolAlphabet::binary(), &WeightVector::binary(k, omega).unwrap()).unwrap();
        let book = sample_partial_codebook(&full, size.min(full.len()), seed).unwrap();
        let csi = Csi::new(c_s, c_n).unwrap();
        let mut rng = stream(seed, &[2]);
        let sent = &book.codewords()[seed as usize % book.len()];
        let obs = transmit(sent, book.alphabet(), &csi, &mut rng);
        let corr = detect_binary_cw_csi_free(&obs, &book).unwrap();
        let coherent = detect_coherent_ml(&obs, &book, &csi).unwrap();
        prop_assert_eq!(set(&corr.ties), set(&coherent.ties));
        prop_assert_eq!(corr.best, coherent.best);
    }

    #[test]
    fn increasing_relabelling_keeps_the_decision(
        (levels, counts) in code_strategy(),
        raw in prop::collection::vec(0u64..40, 8),
        scale in 1u64..7,
        shift in 0u64..100,
        square in any::<bool>(),
    ) {
        let alphabet = SymbolAlphabet::uniform(levels).unwrap();
        let w = WeightVector::new(counts).unwrap();
        let r: Vec<u64> = raw[..w.length()].to_vec();
        let map = |x: u64| if square { x * x + shift } else { scale * x + shift };
        let base = detect_scw_csi_free(&ObservationVector::new(r.clone()), &alphabet, &w).unwrap();
        let mapped = detect_scw_csi_free(&ObservationVector::new(r.iter().map(|&x| map(x)).collect()), &alphabet, &w).unwrap();
        prop_assert_eq!(&base.best, &mapped.best);
        prop_assert_eq!(base.ties, mapped.ties);
        prop_assert_eq!(base.tie_count, mapped.tie_count);
    }

    #[test]
    fn reported_ties_are_exactly_the_sort_consistent_codewords(
        (levels, counts) in code_strategy(),
        raw in prop::collection::vec(0u64..4, 8),
    ) {
        let alphabet = SymbolAlphabet::uniform(levels).unwrap();
        let w = WeightVector::new(counts).unwrap();
        let obs = ObservationVector::new(raw[..w.length()].to_vec());
        let book = enumerate_full_scw(&alphabet, &w).unwrap();
        let res = detect_scw_csi_free_with(&obs, &alphabet, &w, TieOptions { enumerate: true, cap: usize::MAX }).unwrap();
        let brute: Vec<Codeword> = book.codewords().iter().filter(|c| is_sort_consistent(&obs, c)).cloned().collect();
        prop_assert_eq!(&res.ties, &brute);
        prop_assert_eq!(res.tie_count, brute.len() as u128);
        prop_assert_eq!(res.tie_broken, brute.len() > 1);
    }
}

#[test]
fn sorting_detector_runtime_is_near_linear() {
    let time = |k: usize| {
        let w = WeightVector::binary(k, k / 2).unwrap();
        let mut rng = stream(5, &[k as u64]);
        let sent = Codeword::new((0..k).map(|i| (i % 2) as u8).collect());
        let obs = transmit(&sent, &SymbolAlphabet::binary(), &Csi::new(5.0, 5.0).unwrap(), &mut rng);
        let opts = TieOptions { enumerate: false, cap: 0 };
        let start = Instant::now();
        for _ in 0..5 {
            detect_scw_csi_free_with(&obs, &SymbolAlphabet::binary(), &w, opts).unwrap();
        }
        start.elapsed().as_secs_f64()
    };
    time(1 << 14);
    let small = time(1 << 15);
    let large = time(1 << 18);
    // 8x the input; K log K predicts about 9.6x, quadratic 64x
    assert!(large / small < 30.0, "ratio {}", large / small);
}
