use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use xbar_snn::crossbar::{CrossbarArray, ProgrammingOptions, UpdateModel};
use xbar_snn::learning::SparseUpdate;
use xbar_snn::matrix::Matrix;

fn updates(n_out: usize, n_in: usize) -> impl Strategy<Value = Vec<SparseUpdate>> {
    prop::collection::vec((0..n_out, 0..n_in, -0.8f64..0.8), 0..30)
        .prop_map(|v| v.into_iter().map(|(row, col, delta)| SparseUpdate { row, col, delta }).collect())
}

proptest! {
    #[test]
    fn bounds_and_counters_hold(
        seed in any::<u64>(),
        soft in any::<bool>(),
        batches in prop::collection::vec(updates(4, 6), 1..20),
    ) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut xb = CrossbarArray::random(4, 6, -0.2, 0.7, 0.5, &mut r).unwrap();
        if soft {
            xb.update_model = UpdateModel::SoftBound;
        }
        let mut prev = xb.write_counts().clone();
        for ups in &batches {
            let before = xb.total_writes();
            let stats = xb.program(ups).unwrap();
            prop_assert_eq!(xb.total_writes(), before + stats.total_writes);
            prop_assert!(xb.conductances().as_slice().iter().all(|&g| (-0.2..=0.7).contains(&g)));
            let now = xb.write_counts().clone();
            prop_assert!(prev.as_slice().iter().zip(now.as_slice()).all(|(a, b)| a <= b));
            prev = now;
        }
        let sum: u64 = xb.write_counts().as_slice().iter().sum();
        prop_assert_eq!(sum, xb.write_stats().total_writes);
        prop_assert!(xb.validate().is_ok());
    }

    #[test]
    fn vmm_matches_double_loop(seed in any::<u64>(), p in prop::collection::vec(0.0f64..5.0, 16)) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let xb = CrossbarArray::random(8, 16, 0.0, 1.0, 0.5, &mut r).unwrap();
        let got = xb.vmm(&p).unwrap();
        let g = xb.conductances();
        for i in 0..8 {
            let mut want = 0.0;
            for j in 0..16 {
                want += (g.get(i, j) - xb.g_ref()) * p[j];
            }
            prop_assert!((got[i] - want).abs() <= 1e-12);
        }
    }
}

#[test]
fn effective_weight_examples() {
    let xb = CrossbarArray::new(2, 3, 0.0, 1.0).unwrap();
    assert_eq!(xb.g_ref(), 0.5);
    assert!(xb.effective_weight().as_slice().iter().all(|&w| w == 0.0));
    let hi = CrossbarArray::with_conductances(Matrix::filled(1, 1, 1.0), 0.0, 1.0).unwrap();
    assert_eq!(hi.effective_weight().get(0, 0), 0.5);
    let lo = CrossbarArray::with_conductances(Matrix::filled(1, 1, 0.0), 0.0, 1.0).unwrap();
    assert_eq!(lo.effective_weight().get(0, 0), -0.5);
    let one = CrossbarArray::with_conductances(Matrix::filled(1, 1, 0.7), 0.0, 1.0).unwrap();
    assert!((one.vmm(&[0.5]).unwrap()[0] - 0.1).abs() < 1e-15);
    assert_eq!(xb.vmm(&[0.0; 3]).unwrap(), vec![0.0, 0.0]);
    assert!(xb.vmm(&[0.0; 2]).is_err());
}

#[test]
fn soft_bound_examples() {
    let mut at_max = CrossbarArray::with_conductances(Matrix::filled(1, 1, 1.0), 0.0, 1.0).unwrap();
    at_max.update_model = UpdateModel::SoftBound;
    at_max.program(&[SparseUpdate { row: 0, col: 0, delta: 0.1 }]).unwrap();
    assert_eq!(at_max.conductances().get(0, 0), 1.0);
    assert_eq!(at_max.write_counts().get(0, 0), 1);

    let mut at_min = CrossbarArray::with_conductances(Matrix::filled(1, 1, 0.0), 0.0, 1.0).unwrap();
    at_min.update_model = UpdateModel::SoftBound;
    at_min.program(&[SparseUpdate { row: 0, col: 0, delta: 0.3 }]).unwrap();
    assert!((at_min.conductances().get(0, 0) - 0.3).abs() < 1e-15);
}

#[test]
fn soft_bound_approaches_max_from_below() {
    let mut xb = CrossbarArray::new(1, 1, 0.0, 1.0).unwrap();
    xb.update_model = UpdateModel::SoftBound;
    let mut last = xb.conductances().get(0, 0);
    for _ in 0..2000 {
        xb.program(&[SparseUpdate { row: 0, col: 0, delta: 0.05 }]).unwrap();
        let g = xb.conductances().get(0, 0);
        assert!(g >= last && g <= 1.0);
        last = g;
    }
    assert!(last > 0.999);
}

#[test]
fn empty_program_is_identity() {
    let mut r = ChaCha8Rng::seed_from_u64(31);
    let mut xb = CrossbarArray::random(3, 3, 0.0, 1.0, 0.3, &mut r).unwrap();
    let before = xb.clone();
    let stats = xb.program(&[]).unwrap();
    assert_eq!(stats.total_writes, 0);
    assert_eq!(xb, before);
    assert_eq!(CrossbarArray::new(3, 3, 0.0, 1.0).unwrap().write_stats().total_writes, 0);
}

#[test]
fn duplicates_collapse_and_bad_indices_fail() {
    let mut xb = CrossbarArray::new(2, 2, 0.0, 1.0).unwrap();
    let ups = [
        SparseUpdate { row: 0, col: 1, delta: 0.1 },
        SparseUpdate { row: 1, col: 0, delta: -0.1 },
        SparseUpdate { row: 0, col: 1, delta: 0.05 },
    ];
    let stats = xb.program(&ups).unwrap();
    assert_eq!(stats.total_writes, 2);
    assert!((xb.conductances().get(0, 1) - 0.65).abs() < 1e-15);
    assert!(xb.program(&[SparseUpdate { row: 2, col: 0, delta: 0.1 }]).is_err());
    assert_eq!(xb.total_writes(), 2);
}

#[test]
fn quantization_and_noise_hooks() {
    let mut q = CrossbarArray::new(1, 2, 0.0, 1.0).unwrap();
    q.options.quantize_levels = Some(10);
    q.program(&[SparseUpdate { row: 0, col: 0, delta: 0.03 }, SparseUpdate { row: 0, col: 1, delta: 0.07 }]).unwrap();
    assert_eq!(q.conductances().get(0, 0), 0.5);
    assert!((q.conductances().get(0, 1) - 0.6).abs() < 1e-12);

    let noisy = |seed| {
        let mut x = CrossbarArray::new(1, 1, 0.0, 1.0).unwrap();
        x.options = ProgrammingOptions { quantize_levels: None, write_noise_sigma: Some(0.3), noise_seed: seed };
        x.program(&[SparseUpdate { row: 0, col: 0, delta: 0.1 }]).unwrap();
        x.conductances().get(0, 0)
    };
    assert_eq!(noisy(1), noisy(1));
    assert_ne!(noisy(1), noisy(2));
    assert!(noisy(1) > 0.5);
}

#[test]
fn random_init_respects_range() {
    let mut r = ChaCha8Rng::seed_from_u64(32);
    let xb = CrossbarArray::random(10, 10, 0.0, 1.0, 0.25, &mut r).unwrap();
    assert!(xb.conductances().as_slice().iter().all(|&g| (0.25..=0.75).contains(&g)));
    assert!(CrossbarArray::random(1, 1, 0.0, 1.0, 0.6, &mut r).is_err());
    assert!(CrossbarArray::new(1, 1, 1.0, 1.0).is_err());
}
