use alas_core::masalign::{brute_force_mas, mas, path_distance, MasError};
use alas_core::simkernel::SimilarityMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, values: Vec<f32>) -> SimilarityMatrix {
    SimilarityMatrix::new(0, Array2::from_shape_vec((rows, cols), values).unwrap()).unwrap()
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1..=5usize).prop_flat_map(|t| (Just(t), t..=9usize))
}

/// Multiples of 1/64 in [-1, 1]; sums of these stay exact.
fn dyadic(rows: usize, cols: usize) -> impl Strategy<Value = SimilarityMatrix> {
    prop::collection::vec(-64i32..=64, rows * cols)
        .prop_map(move |v| matrix(rows, cols, v.into_iter().map(|x| x as f32 / 64.0).collect()))
}

/// Few distinct values, so ties are common.
fn coarse(rows: usize, cols: usize) -> impl Strategy<Value = SimilarityMatrix> {
    prop::collection::vec(-2i32..=2, rows * cols)
        .prop_map(move |v| matrix(rows, cols, v.into_iter().map(|x| x as f32 / 2.0).collect()))
}

#[test]
fn matches_brute_force_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let t = rng.random_range(1..=5);
        let a = rng.random_range(t..=9);
        let values = (0..t * a).map(|_| rng.random_range(-1.0f32..=1.0)).collect();
        let s = matrix(t, a, values);
        let fast = mas(&s).unwrap();
        let slow = brute_force_mas(&s).unwrap();
        assert_eq!(fast.indices, slow.indices, "{:?}", s.values());
        assert!((fast.score - slow.score).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_brute_force_with_ties(s in shape().prop_flat_map(|(t, a)| coarse(t, a))) {
        let fast = mas(&s).unwrap();
        let slow = brute_force_mas(&s).unwrap();
        prop_assert_eq!(fast.indices, slow.indices);
        prop_assert_eq!(fast.score, slow.score);
    }

    #[test]
    fn shift_invariant(s in shape().prop_flat_map(|(t, a)| dyadic(t, a)), k in -16i32..=16) {
        let c = k as f32 / 8.0;
        let shifted = SimilarityMatrix::new(0, s.values().mapv(|x| x + c)).unwrap();
        prop_assert_eq!(mas(&s).unwrap().indices, mas(&shifted).unwrap().indices);
    }

    #[test]
    fn raising_the_optimal_path_keeps_it(s in shape().prop_flat_map(|(t, a)| dyadic(t, a)), k in 1i32..=8) {
        let best = mas(&s).unwrap();
        let mut raised = s.values().to_owned();
        for (i, &j) in best.indices().iter().enumerate() {
            raised[[j, i]] += k as f32 / 8.0;
        }
        let again = mas(&SimilarityMatrix::new(0, raised).unwrap()).unwrap();
        prop_assert_eq!(again.indices, best.indices);
    }

    #[test]
    fn path_is_valid(t in 1..40usize, extra in 0..80usize, seed: u64) {
        let a = t + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = matrix(t, a, (0..t * a).map(|_| rng.random_range(-1.0f32..=1.0)).collect());
        let p = mas(&s).unwrap();
        prop_assert_eq!(p.indices().len(), a);
        prop_assert_eq!(p.indices()[0], 0);
        prop_assert_eq!(p.indices()[a - 1], t - 1);
        prop_assert!(p.indices().windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        prop_assert!(p.is_valid(t));
        let recomputed: f64 = p.indices().iter().enumerate().map(|(i, &j)| s.get(j, i) as f64).sum();
        prop_assert!((recomputed - p.score).abs() < 1e-9);
    }

    #[test]
    fn distance_is_a_pseudometric(
        (x, y, z) in (1..64usize).prop_flat_map(|n| {
            let v = || prop::collection::vec(0..50usize, n);
            (v(), v(), v())
        })
    ) {
        let d = |a: &[usize], b: &[usize]| path_distance(a, b).unwrap();
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert!(d(&x, &y) >= 0.0);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert_eq!(d(&x, &y) == 0.0, x == y);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
    }
}

#[test]
fn infeasible_when_more_rows_than_frames() {
    let s = matrix(3, 2, vec![0.0; 6]);
    assert!(matches!(mas(&s), Err(MasError::Infeasible { rows: 3, frames: 2 })));
    assert!(matches!(brute_force_mas(&s), Err(MasError::Infeasible { .. })));
}

#[test]
fn distance_examples() {
    assert_eq!(path_distance(&[0, 0, 1, 1, 2], &[0, 0, 1, 1, 2]).unwrap(), 0.0);
    assert_eq!(path_distance(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.25);
    assert_eq!(path_distance(&[0, 0, 0, 0, 0], &[0, 1, 2, 3, 4]).unwrap(), 2.0);
    assert!(matches!(path_distance(&[0, 1], &[0]), Err(MasError::LengthMismatch { .. })));
}
