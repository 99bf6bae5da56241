use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xbar_snn::dynamics::{trace_bound, LayerParams, LayerState};
use xbar_snn::matrix::Matrix;
use xbar_snn::CrossbarArray;

fn run_p(params: &LayerParams, train: &[Vec<bool>]) -> Vec<Vec<f64>> {
    let mut st = LayerState::for_params(params);
    let mut out = Vec::new();
    for x in train {
        st.step_traces(x, params).unwrap();
        out.push(st.p.clone());
    }
    out
}

fn spike_train(n_in: usize, steps: usize) -> impl Strategy<Value = Vec<Vec<bool>>> {
    prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.3), n_in), steps)
}

proptest! {
    #[test]
    fn p_trace_superposes(
        alpha in 0.0f64..0.99,
        beta in 0.0f64..0.99,
        (a, b) in (1usize..6).prop_flat_map(|n| (spike_train(n, 60), spike_train(n, 60))),
    ) {
        let n = a[0].len();
        let params = LayerParams::uniform(n, 1, alpha, beta, 0.5, 0.0).unwrap();
        // Disjoint trains, so their merge is still a binary spike train.
        let b: Vec<Vec<bool>> = a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| q && !p).collect()).collect();
        let merged: Vec<Vec<bool>> = a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| p || q).collect()).collect();
        let pa = run_p(&params, &a);
        let pb = run_p(&params, &b);
        let pm = run_p(&params, &merged);
        for t in 0..pm.len() {
            for j in 0..n {
                prop_assert!((pm[t][j] - pa[t][j] - pb[t][j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn q_decays_geometrically(beta in 0.0f64..0.99, warm in spike_train(3, 20), quiet in 1usize..50) {
        let params = LayerParams::uniform(3, 1, 0.7, beta, 0.5, 0.0).unwrap();
        let mut st = LayerState::for_params(&params);
        for x in &warm {
            st.step_traces(x, &params).unwrap();
        }
        let q0 = st.q.clone();
        let mut oracle = q0.clone();
        for _ in 0..quiet {
            st.step_traces(&[false; 3], &params).unwrap();
            for q in &mut oracle {
                *q *= beta;
            }
        }
        prop_assert_eq!(st.q, oracle);
    }

    #[test]
    fn p_stays_below_bound(alpha in 0.0f64..0.95, beta in 0.0f64..0.95, train in spike_train(4, 300)) {
        let params = LayerParams::uniform(4, 1, alpha, beta, 0.5, 0.0).unwrap();
        let bound = trace_bound(alpha, beta);
        for p in run_p(&params, &train) {
            for &v in &p {
                prop_assert!(v >= 0.0 && v <= bound + 1e-9);
            }
        }
    }

    #[test]
    fn traces_stay_non_negative(train in spike_train(5, 80), seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let params = LayerParams::randomized(5, 3, 0.8, 0.6, 0.8, 0.5, 0.2, &mut r).unwrap();
        let w = Matrix::from_fn(3, 5, |_, _| r.random_range(-1.0..1.0));
        let mut st = LayerState::for_params(&params);
        for x in &train {
            st.membrane_and_fire(&w, &params).unwrap();
            st.step_traces(x, &params).unwrap();
            prop_assert!(st.p.iter().chain(&st.q).chain(&st.r).all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn membrane_matches_double_loop() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let params = LayerParams::uniform(4, 3, 0.8, 0.6, 0.8, r.random_range(0.0..2.0)).unwrap();
        let w = Matrix::from_fn(3, 4, |_, _| r.random_range(-2.0..2.0));
        let mut st = LayerState::for_params(&params);
        st.p = (0..4).map(|_| r.random_range(0.0..3.0)).collect();
        st.r = (0..3).map(|_| r.random_range(0.0..2.0)).collect();
        st.membrane_and_fire(&w, &params).unwrap();
        for i in 0..3 {
            let mut u = 0.0;
            for j in 0..4 {
                u += w.get(i, j) * st.p[j];
            }
            u -= params.delta * st.r[i];
            assert_eq!(st.u[i], u);
            assert_eq!(st.s[i], u > 0.0);
        }
    }
}

#[test]
fn crossbar_read_feeds_the_same_membrane() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let xb = CrossbarArray::random(8, 16, 0.0, 1.0, 0.4, &mut r).unwrap();
    let params = LayerParams::uniform(16, 8, 0.8, 0.6, 0.8, 0.5).unwrap();
    let mut a = LayerState::for_params(&params);
    a.p = (0..16).map(|_| r.random_range(0.0..4.0)).collect();
    a.r = (0..8).map(|_| r.random_range(0.0..1.0)).collect();
    let mut b = a.clone();
    a.membrane_and_fire(&xb.effective_weight(), &params).unwrap();
    b.fire(&xb.vmm(&b.p).unwrap(), &params).unwrap();
    for (x, y) in a.u.iter().zip(&b.u) {
        assert!((x - y).abs() <= 1e-12);
    }
}

#[test]
fn binary_mode_with_zero_weights_never_fires() {
    let params = LayerParams::uniform(5, 4, 0.8, 0.6, 0.8, 0.5).unwrap().binary_network_mode();
    assert!(params.alpha.iter().all(|&a| a == 0.0));
    let w = Matrix::zeros(4, 5);
    let mut st = LayerState::for_params(&params);
    let mut r = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        st.membrane_and_fire(&w, &params).unwrap();
        assert!(st.s.iter().all(|&s| !s));
        let x: Vec<bool> = (0..5).map(|_| r.random_bool(0.5)).collect();
        st.step_traces(&x, &params).unwrap();
    }
}

#[test]
fn dimension_mismatch_is_an_error() {
    let params = LayerParams::uniform(3, 2, 0.8, 0.6, 0.8, 0.5).unwrap();
    let mut st = LayerState::for_params(&params);
    assert!(st.step_traces(&[true; 4], &params).is_err());
    assert!(st.membrane_and_fire(&Matrix::zeros(3, 3), &params).is_err());
    assert!(LayerParams::uniform(3, 2, 1.0, 0.6, 0.8, 0.5).is_err());
    assert!(LayerParams::uniform(3, 2, 0.8, 0.6, 0.8, -0.1).is_err());
}
