use lagpf_bench::metrics::{error_histogram, relative_abs_error, relative_l2_error, time_averaged_relative_l2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_loop_l2(est: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    for i in 0..est.len() {
        for j in 0..est[i].len() {
            num += (est[i][j] - reference[i][j]).powi(2);
        }
    }
    let mut den = 0.0;
    for row in reference {
        for v in row {
            den += v * v;
        }
    }
    num.sqrt() / den.sqrt()
}

#[test]
fn random_3x2_matches_two_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let est: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let reference: Vec<Vec<f64>> =
            (0..3).map(|_| (0..2).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let got = relative_l2_error(&est, &reference).unwrap();
        let want = two_loop_l2(&est, &reference);
        assert!((got - want).abs() <= 1e-14 * want.max(1.0), "{got} vs {want}");
    }
}

#[test]
fn uniform_errors_fill_ten_bins_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let errs: Vec<Vec<f64>> = (0..n / 10).map(|_| (0..10).map(|_| rng.random::<f64>()).collect()).collect();
    let edges: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let h = error_histogram(&errs, &edges).unwrap();
    // Binomial standard error of one bin frequency.
    let se = (0.1 * 0.9 / n as f64).sqrt();
    for f in &h.frequencies {
        assert!((f - 0.1).abs() < 4.0 * se, "{f}");
    }
    assert_eq!(h.overflow, 0.0);
}

#[test]
fn histogram_denominator_is_d_times_t_plus_one() {
    let (d, t) = (7, 12);
    let errs = vec![vec![5.0; d]; t + 1];
    let h = error_histogram(&errs, &[0.0, 1.0, 2.0]).unwrap();
    assert_eq!(h.total, d * (t + 1));
    assert_eq!(h.overflow, 1.0);
}

#[test]
fn time_averaged_l2_skips_the_initial_state() {
    let reference = vec![vec![1.0, 0.0], vec![3.0, 4.0], vec![0.0, 2.0]];
    let est = vec![vec![100.0, 0.0], vec![3.0, 4.5], vec![0.0, 3.0]];
    // Per-time ratios 0.5 / 5 and 1 / 2.
    let want = 0.5 * (0.1 + 0.5);
    assert!((time_averaged_relative_l2(&est, &reference).unwrap() - want).abs() < 1e-15);
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1e3f64..1e3, cols), rows)
}

proptest! {
    #[test]
    fn histogram_mass_is_conserved(errs in matrix(5, 4), hi in 0.1f64..10.0) {
        let abs: Vec<Vec<f64>> = errs.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect();
        let edges: Vec<f64> = (0..=8).map(|i| hi * i as f64 / 8.0).collect();
        let h = error_histogram(&abs, &edges).unwrap();
        let total: f64 = h.frequencies.iter().sum::<f64>() + h.underflow + h.overflow;
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(h.frequencies.iter().all(|f| *f >= 0.0));
    }

    #[test]
    fn l2_is_scale_invariant(est in matrix(4, 3), reference in matrix(4, 3), c in 0.01f64..100.0) {
        prop_assume!(reference.iter().flatten().any(|v| v.abs() > 1e-3));
        let scale = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { m.iter().map(|r| r.iter().map(|v| c * v).collect()).collect() };
        let a = relative_l2_error(&est, &reference).unwrap();
        let b = relative_l2_error(&scale(&est), &scale(&reference)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn relative_abs_error_is_nonnegative_and_zero_on_identity(reference in matrix(3, 3), eps in 1e-10f64..1.0) {
        let e = relative_abs_error(&reference, &reference, eps).unwrap();
        prop_assert!(e.values.iter().flatten().all(|v| *v == 0.0));
        let shifted: Vec<Vec<f64>> = reference.iter().map(|r| r.iter().map(|v| v + 1.0).collect()).collect();
        let e = relative_abs_error(&shifted, &reference, eps).unwrap();
        for (v, r) in e.values.iter().flatten().zip(reference.iter().flatten()) {
            prop_assert!((v * r.abs().max(eps) - 1.0).abs() < 1e-9);
        }
    }
}
