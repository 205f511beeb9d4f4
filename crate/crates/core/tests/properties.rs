use arraysel::crb::{CovarianceMode, CrbConfig, Labeler};
use arraysel::doa::{azimuth_error, music_estimate, rmse, rmse_paired, AngularGrid};
use arraysel::geometry::{ArrayKind, SensorArray};
use arraysel::harness::ExperimentConfig;
use arraysel::nn::softmax;
use arraysel::signal::{noise_power_for_snr, sample_covariance, simulate_snapshots, CovarianceMatrix, SourceDirection};
use proptest::prelude::*;

fn positions(m: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec([-1.5f64..1.5, -1.5f64..1.5, -0.3f64..0.3], m)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn best_subset_follows_sensor_relabeling(
        pos in positions(6),
        perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
        phi in 0.0f64..359.0,
    ) {
        let cfg = CrbConfig { covariance: CovarianceMode::Asymptotic, ..CrbConfig::default() };
        let dir = SourceDirection::azimuth(phi);
        let n2 = noise_power_for_snr(10.0, 1.0);
        let original = SensorArray::new(pos.clone(), ArrayKind::Custom).unwrap();
        // Sensor i of the relabeled array is sensor perm[i] of the original.
        let relabeled = SensorArray::new(perm.iter().map(|&i| pos[i]).collect(), ArrayKind::Custom).unwrap();
        let label = |a: &SensorArray| {
            let lab = Labeler::new(a.clone(), 3, cfg).unwrap();
            let r = CovarianceMatrix::asymptotic(a, &dir, 1.0, n2, None).unwrap();
            let scores = lab.score_all(&dir, r.data(), 100, n2);
            let mut sorted: Vec<f64> = scores.iter().flatten().copied().collect();
            sorted.sort_by(f64::total_cmp);
            (lab.label_covariance(&dir, &r, 100, n2).unwrap().indices().to_vec(), sorted)
        };
        let (a, scores) = label(&original);
        prop_assume!(scores.len() > 1 && scores[1] > scores[0] * (1.0 + 1e-6));
        let (b, _) = label(&relabeled);
        let mut mapped: Vec<usize> = b.iter().map(|&i| perm[i]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, a);
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-80.0f64..80.0, 1..30), shift in -100.0f64..100.0) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rmse_is_nonnegative_and_order_free(
        est in prop::collection::vec(0.0f64..360.0, 1..40),
        truth in 0.0f64..360.0,
        seed in any::<u64>(),
    ) {
        let v = rmse(&est, truth).unwrap();
        prop_assert!((0.0..=180.0).contains(&v));
        let mut shuffled = est.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 1) % n as u64) as usize);
        }
        prop_assert!((rmse(&shuffled, truth).unwrap() - v).abs() < 1e-9);
        let truths = vec![truth; n];
        prop_assert!((rmse_paired(&est, &truths).unwrap() - v).abs() < 1e-9);
    }

    #[test]
    fn azimuth_error_is_wrapped(a in -720.0f64..720.0, b in -720.0f64..720.0) {
        let e = azimuth_error(a, b);
        prop_assert!(e > -180.0 && e <= 180.0);
        prop_assert!(((a - b - e) / 360.0 - ((a - b - e) / 360.0).round()).abs() < 1e-9);
    }

    #[test]
    fn music_ignores_covariance_scale(phi in 0.0f64..359.0, scale in 0.01f64..100.0, seed in 0u64..1000) {
        let array = arraysel::geometry::build_uca(8, 0.5).unwrap();
        let grid = AngularGrid::azimuth(90.0, 1.0).unwrap();
        let y = simulate_snapshots(&array, &SourceDirection::azimuth(phi), 40, 1.0, 0.1, None, seed).unwrap();
        let r = sample_covariance(&y);
        let a = music_estimate(array.positions(), &r, &grid, 1).unwrap();
        let b = music_estimate(array.positions(), &r.scaled(scale), &grid, 1).unwrap();
        prop_assert_eq!(a.phi_deg, b.phi_deg);
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), trials in 1usize..500, snr in -10i32..30) {
        let mut cfg = ExperimentConfig::desk();
        cfg.seed = seed;
        cfg.trials = trials;
        cfg.test_snr = vec![snr as f64, snr as f64 + 2.5];
        let back = ExperimentConfig::desk().apply_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back.to_text(), cfg.to_text());
    }
}
