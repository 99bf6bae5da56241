use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xbar_snn::local_error::{one_hot, LocalErrorHead};
use xbar_snn::matrix::Matrix;

proptest! {
    #[test]
    fn feedback_is_linear(seed in any::<u64>(), e1 in prop::collection::vec(-2.0f64..2.0, 4), e2 in prop::collection::vec(-2.0f64..2.0, 4)) {
        let head = LocalErrorHead::init(seed, 4, 9).unwrap();
        let sum: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a + b).collect();
        let a = head.feedback_error(&e1).unwrap();
        let b = head.feedback_error(&e2).unwrap();
        let ab = head.feedback_error(&sum).unwrap();
        for i in 0..9 {
            prop_assert!((ab[i] - a[i] - b[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn feedback_ratio_is_omega(seed in any::<u64>()) {
        let head = LocalErrorHead::init(seed, 3, 7).unwrap();
        let (j, h, w) = (head.classifier(), head.feedback(), head.omega());
        for i in 0..7 {
            for k in 0..3 {
                prop_assert_eq!(h.get(i, k), j.get(k, i) * w.get(i, k));
            }
        }
    }

    #[test]
    fn loss_matches_scalar_loop(seed in any::<u64>(), s in prop::collection::vec(any::<bool>(), 6), label in 0usize..4) {
        let head = LocalErrorHead::init(seed, 4, 6).unwrap();
        let y = one_hot(label, 4);
        let mut want = 0.0;
        for k in 0..4 {
            let mut z = -y[k];
            for i in 0..6 {
                if s[i] {
                    z += head.classifier().get(k, i);
                }
            }
            want += z * z;
        }
        want *= 0.5;
        prop_assert!((head.local_loss(&s, &y).unwrap() - want).abs() <= 1e-12);
    }
}

#[test]
fn init_is_deterministic_and_rejects_one_class() {
    assert_eq!(LocalErrorHead::init(5, 10, 20).unwrap(), LocalErrorHead::init(5, 10, 20).unwrap());
    assert_ne!(LocalErrorHead::init(5, 10, 20).unwrap(), LocalErrorHead::init(6, 10, 20).unwrap());
    assert!(LocalErrorHead::init(5, 1, 20).is_err());
    assert!(LocalErrorHead::init(5, 3, 0).is_err());
}

#[test]
fn loss_and_error_examples() {
    let j = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let head = LocalErrorHead::exact_feedback(j).unwrap();
    assert_eq!(head.local_loss(&[true, false], &one_hot(0, 2)).unwrap(), 0.0);
    assert_eq!(head.local_error(&[true, false], &one_hot(0, 2)).unwrap(), vec![0.0, 0.0]);
    assert_eq!(head.local_loss(&[false, false], &one_hot(1, 2)).unwrap(), 0.5);
    assert!(head.local_loss(&[true], &one_hot(1, 2)).is_err());
}

#[test]
fn exact_feedback_is_loss_gradient() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let j = Matrix::from_fn(3, 5, |_, _| r.random_range(-1.0..1.0));
    let head = LocalErrorHead::exact_feedback(j.clone()).unwrap();
    let s = [true, false, true, true, false];
    let y = one_hot(2, 3);
    let err = head.local_error(&s, &y).unwrap();
    // d/dS_i of 1/2 |J S - y|^2 evaluated with S relaxed to reals.
    for i in 0..5 {
        let mut g = 0.0;
        for k in 0..3 {
            let z: f64 = (0..5).map(|m| j.get(k, m) * f64::from(u8::from(s[m]))).sum::<f64>() - y[k];
            g += j.get(k, i) * z;
        }
        assert!((err[i] - g).abs() < 1e-12);
    }
}

#[test]
fn perturbed_feedback_agrees_in_sign_more_often_than_chance() {
    let mut r = ChaCha8Rng::seed_from_u64(22);
    let (mut agree, mut total) = (0usize, 0usize);
    for draw in 0..1000u64 {
        let head = LocalErrorHead::init(draw, 10, 20).unwrap();
        let exact = LocalErrorHead::exact_feedback(head.classifier().clone()).unwrap();
        let e: Vec<f64> = (0..10).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = head.feedback_error(&e).unwrap();
        let b = exact.feedback_error(&e).unwrap();
        for (x, y) in a.iter().zip(&b) {
            total += 1;
            if x.signum() == y.signum() {
                agree += 1;
            }
        }
    }
    let frac = agree as f64 / total as f64;
    assert!(frac > 0.6, "sign agreement {frac}");
}

#[test]
fn omega_moments() {
    let head = LocalErrorHead::init(99, 10, 10_000).unwrap();
    let w = head.omega().as_slice();
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    assert!((var - 0.5).abs() < 0.02, "variance {var}");
}
