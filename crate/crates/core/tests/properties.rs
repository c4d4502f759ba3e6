use nalgebra::DMatrix;
use proptest::prelude::*;

use stve::baselines::{mle_fit, online_gradient_run_with_gains, stationary_regression, MleOptions};
use stve::operators::{apply_difference, apply_summation, filter_rows, gram_matrix};
use stve::{estimate, filter, simulate, KalmanConfig, RegressionDataset, SimulationConfig, StveConfig};

fn design(t: usize, n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0..3.0f64, t * n).prop_map(move |v| DMatrix::from_row_slice(t, n, &v))
}

/// Strictly increasing 1-based times with gaps.
fn times(t: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, t).prop_map(|steps| {
        steps
            .iter()
            .scan(0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    })
}

/// Row `s` of the unrolled system holds `u_s` in each of its first `tau_s` blocks.
fn unrolled(u: &DMatrix<f64>, times: &[usize]) -> DMatrix<f64> {
    let n = u.ncols();
    let last = *times.last().unwrap();
    let mut a = DMatrix::zeros(u.nrows(), last * n);
    for (s, &tau) in times.iter().enumerate() {
        for block in 0..tau {
            for j in 0..n {
                a[(s, block * n + j)] = u[(s, j)];
            }
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_equals_unrolled_product((u, ts) in (2usize..20, 1usize..5).prop_flat_map(|(t, n)| (design(t, n), times(t)))) {
        let t = u.nrows();
        let ds = RegressionDataset::with_times(u.clone(), vec![0.0; t], vec![true; t], ts.clone()).unwrap();
        let a = unrolled(&u, &ts);
        let dense = &a * a.transpose();
        let g = gram_matrix(&ds).unwrap();
        let scale = dense.amax().max(1.0);
        prop_assert!((g - dense).amax() <= 1e-12 * scale);
    }

    #[test]
    fn difference_inverts_summation(h in prop::collection::vec(-1e3..1e3f64, 1..200)) {
        let back = apply_difference(&apply_summation(&h).unwrap()).unwrap();
        let scale = h.iter().fold(1.0f64, |m, v| m.max(v.abs())) * h.len() as f64;
        for (a, b) in back.iter().zip(&h) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn masked_gram_is_principal_submatrix(
        (u, mask) in (3usize..20, 1usize..4).prop_flat_map(|(t, n)| (design(t, n), prop::collection::vec(prop::bool::weighted(0.7), t)))
    ) {
        let t = u.nrows();
        prop_assume!(mask.iter().filter(|m| **m).count() >= 2);
        let full = RegressionDataset::fully_observed(u.clone(), vec![1.0; t]).unwrap();
        let masked = RegressionDataset::new(u, vec![1.0; t], mask.clone()).unwrap();
        let (kept, _) = filter_rows(&masked, 0.0).unwrap();
        let g_full = gram_matrix(&full).unwrap();
        let idx: Vec<usize> = (0..t).filter(|&i| mask[i]).collect();
        let sub = g_full.select_rows(idx.iter()).select_columns(idx.iter());
        let g = gram_matrix(&kept).unwrap();
        prop_assert_eq!(g.shape(), sub.shape());
        prop_assert!((g - sub).amax() <= 1e-12 * g_full.amax().max(1.0));
    }

    #[test]
    fn sign_flips_leave_estimate_unchanged(seed in 0u64..1000, flips in prop::collection::vec(any::<bool>(), 80)) {
        let (ds, _) = simulate(&SimulationConfig::gaussian(80, 3, 0.5, 1.0, seed)).unwrap();
        let mut u = ds.u().clone();
        let mut y = ds.y().to_vec();
        for (t, &f) in flips.iter().enumerate() {
            if f {
                u.row_mut(t).neg_mut();
                y[t] = -y[t];
            }
        }
        let flipped = RegressionDataset::fully_observed(u, y).unwrap();
        let a = estimate(&ds, &StveConfig::default()).unwrap();
        let b = estimate(&flipped, &StveConfig::default()).unwrap();
        prop_assert!((a.sigma2_raw - b.sigma2_raw).abs() <= 1e-9 * a.sigma2_raw.abs().max(1.0));
        prop_assert!((a.eta2_raw - b.eta2_raw).abs() <= 1e-9 * a.eta2_raw.abs().max(1.0));
    }

    #[test]
    fn online_gradient_with_kalman_gains_tracks_kalman(seed in 0u64..1000, sigma2 in 0.01..2.0f64, eta2 in 0.05..2.0f64) {
        let (ds, _) = simulate(&SimulationConfig::gaussian(60, 1, sigma2, eta2, seed)).unwrap();
        let cfg = KalmanConfig { c0_scale: 3.0, ..KalmanConfig::new(sigma2, eta2) };
        let kf = filter(&ds, &cfg).unwrap();
        // Scalar gain a_t = P_{t|t-1} / s_t with P_{t|t-1} = (s_t - eta2) / u_t^2.
        let gains: Vec<f64> = (0..60)
            .map(|t| {
                let u2 = ds.u()[(t, 0)].powi(2);
                let s = kf.innovation_variances[t];
                (s - eta2) / (u2 * s)
            })
            .collect();
        let og = online_gradient_run_with_gains(&ds, None, &gains).unwrap();
        let scale = kf.states.amax().max(1.0);
        prop_assert!((og.states - &kf.states).amax() <= 1e-9 * scale);
    }

    #[test]
    fn stationary_fit_is_split_invariant_on_linear_data(
        (u, x) in (6usize..30, 1usize..4).prop_flat_map(|(t, n)| (design(t, n), prop::collection::vec(-5.0..5.0f64, n)))
    ) {
        let (t, n) = u.shape();
        let y: Vec<f64> = (0..t).map(|i| (0..n).map(|j| u[(i, j)] * x[j]).sum()).collect();
        let ds = RegressionDataset::fully_observed(u, y).unwrap();
        let half = t / 2;
        prop_assume!(half >= n && t - half >= n);
        let fits = [ds.slice(0..half).unwrap(), ds.slice(half..t).unwrap()].map(|d| stationary_regression(&d));
        for fit in fits.into_iter().flatten() {
            for j in 0..n {
                prop_assert!((fit[j] - x[j]).abs() <= 1e-6 * (1.0 + x[j].abs()));
            }
        }
    }
}

#[test]
fn mle_started_at_truth_stays_near_it() {
    let (ds, _) = simulate(&SimulationConfig::gaussian(600, 3, 0.5, 2.0, 5)).unwrap();
    let fit = mle_fit(&ds, (0.5, 2.0), &MleOptions::default()).unwrap();
    assert!(fit.loglik >= fit.initial_loglik);
    assert!((fit.sigma2 / 0.5).ln().abs() < 0.5, "sigma2 {}", fit.sigma2);
    assert!((fit.eta2 / 2.0).ln().abs() < 0.3, "eta2 {}", fit.eta2);
}

#[test]
fn mle_and_stve_agree_at_long_horizons() {
    let (ds, _) = simulate(&SimulationConfig::gaussian(2000, 3, 0.5, 2.0, 17)).unwrap();
    let fit = mle_fit(&ds, (1.0, 1.0), &MleOptions::default()).unwrap();
    let e = estimate(&ds, &StveConfig::default()).unwrap();
    assert!((fit.sigma2 - e.sigma2).abs() < 0.15, "mle {} stve {}", fit.sigma2, e.sigma2);
    assert!((fit.eta2 - e.eta2).abs() < 0.6, "mle {} stve {}", fit.eta2, e.eta2);
}
