use langevin_mimo::baselines::{detect_ml, detect_mmse, detect_zf, residual};
use langevin_mimo::channel::{precompute_spectral, sample_kronecker, sample_noise};
use langevin_mimo::detector::{detect_with_realization, step_size_diag};
use langevin_mimo::rng::seeded;
use langevin_mimo::score::{likelihood_score, prior_denoiser, prior_score, Branch, SpectralState};
use langevin_mimo::{AnnealingSchedule, ChannelParams, Complex64, Constellation, DVector, LangevinConfig};
use proptest::prelude::*;
use rand::Rng;

struct Instance {
    h: langevin_mimo::DMatrix<Complex64>,
    y: Vec<Complex64>,
    sigma0_sq: f64,
}

fn instance(seed: u64, nr: usize, nu: usize, c: &Constellation, sigma0_sq: f64) -> Instance {
    let mut rng = seeded(seed);
    let h = sample_kronecker(ChannelParams::new(nr, nu, 0.5).unwrap(), &mut rng).unwrap();
    let x: Vec<Complex64> = (0..nu).map(|_| c.points()[rng.random_range(0..c.order())]).collect();
    let z = sample_noise(nr, sigma0_sq, &mut rng).unwrap();
    let y = (&h * DVector::from_vec(x) + z).iter().copied().collect();
    Instance { h, y, sigma0_sq }
}

proptest! {
    #[test]
    fn schedules_are_monotone_with_exact_endpoints(first in 0.02f64..10.0, frac in 1e-3f64..0.99, n in 2usize..60) {
        let last = first * frac;
        let s = AnnealingSchedule::geometric(first, last, n).unwrap();
        prop_assert_eq!(s.len(), n);
        prop_assert_eq!(s.first(), first);
        prop_assert_eq!(s.last(), last);
        prop_assert!(s.sigmas().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn step_sizes_are_nonnegative_and_continuous(
        sigma_l in 1e-3f64..2.0,
        s in 0.0f64..5.0,
        sigma0 in 1e-3f64..2.0,
        eps in 1e-7f64..1e-2,
    ) {
        let a = step_size_diag(sigma_l, &[s], sigma0, eps, 0.01)[0];
        prop_assert!(a >= 0.0 && a.is_finite());
        let boundary = step_size_diag(sigma_l, &[s.max(1e-3)], sigma_l * s.max(1e-3), eps, 0.01)[0];
        prop_assert_eq!(boundary, 0.0);
    }

    #[test]
    fn exactly_one_branch_applies(sigma0 in 1e-3f64..2.0, sigma_l in 1e-3f64..2.0, s in prop_oneof![Just(0.0), 0.0f64..4.0]) {
        let b = Branch::select(sigma0, sigma_l, s);
        let expected = if s == 0.0 {
            Branch::PriorOnly
        } else if sigma0 >= sigma_l * s {
            Branch::LikelihoodAndPrior
        } else {
            Branch::LikelihoodOnly
        };
        prop_assert_eq!(b, expected);
        prop_assert_eq!(b, Branch::select(sigma0, sigma_l, s));
    }

    #[test]
    fn likelihood_score_depends_on_the_residual_only(seed in any::<u64>(), sigma_l in 0.01f64..1.0, shift in -1.0f64..1.0) {
        let c = Constellation::qam(4).unwrap();
        let inst = instance(seed, 4, 3, &c, 0.1);
        let chan = precompute_spectral(&inst.h, inst.sigma0_sq).unwrap();
        let mut rng = seeded(seed ^ 1);
        let chi = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let eta = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let delta = DVector::from_fn(6, |j, _| shift * (j as f64 - 2.5));
        let mut sigma_delta = DVector::zeros(8);
        for j in 0..6 {
            sigma_delta[j] = chan.singular_values[j] * delta[j];
        }
        let a = likelihood_score(&SpectralState { chi: chi.clone(), eta: eta.clone(), level_index: 1 }, &chan, sigma_l);
        let b = likelihood_score(&SpectralState { chi: chi + delta, eta: eta + sigma_delta, level_index: 1 }, &chan, sigma_l);
        prop_assert!((a - &b).amax() <= 1e-9 * (1.0 + b.amax()));
    }

    #[test]
    fn rotated_prior_score_keeps_its_norm(seed in any::<u64>(), sigma_l in 0.01f64..1.0) {
        let c = Constellation::qam(16).unwrap();
        let inst = instance(seed, 6, 4, &c, 0.1);
        let chan = precompute_spectral(&inst.h, inst.sigma0_sq).unwrap();
        let mut rng = seeded(seed ^ 2);
        let chi = DVector::from_fn(8, |_, _| rng.random_range(-1.0..1.0));
        let g = DVector::from_vec(prior_score((&chan.svd_v * chi).as_slice(), sigma_l, &c));
        let rotated = chan.svd_v.tr_mul(&g);
        prop_assert!((rotated.norm() - g.norm()).abs() <= 1e-10 * g.norm().max(1.0));
    }

    #[test]
    fn denoiser_is_finite_odd_and_inside_the_alphabet(x in -1e6f64..1e6, sigma in 1.5e-4f64..10.0, order in prop::sample::select(vec![4usize, 16, 64, 256])) {
        let c = Constellation::qam(order).unwrap();
        let levels = c.pam_levels();
        let d = prior_denoiser(&[x, -x], sigma, &c);
        prop_assert!(d[0].is_finite());
        prop_assert_eq!(d[0], -d[1]);
        prop_assert!(d[0] >= levels[0] && d[0] <= levels[levels.len() - 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn detectors_return_symbols_and_ml_dominates(seed in any::<u64>(), snr_sigma in 0.02f64..0.5) {
        let c = Constellation::qam(4).unwrap();
        let inst = instance(seed, 4, 3, &c, snr_sigma);
        let chan = precompute_spectral(&inst.h, inst.sigma0_sq).unwrap();
        let config = LangevinConfig { seed, ..LangevinConfig::with_shape(6, 20, 4).unwrap() };
        let lan = detect_with_realization(&inst.y, &chan, &config, &c).unwrap();

        let best = lan.per_trajectory_residuals.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(lan.residual, best);
        prop_assert_eq!(lan.residual, lan.per_trajectory_residuals[lan.trajectory_index]);

        let ml = detect_ml(&inst.y, &inst.h, &c).unwrap();
        let zf = detect_zf(&inst.y, &inst.h, &c).unwrap();
        let mmse = detect_mmse(&inst.y, &inst.h, inst.sigma0_sq, &c).unwrap();
        let r_ml = residual(&inst.y, &inst.h, &ml);
        for est in [&ml, &zf, &mmse, &lan.symbols] {
            prop_assert_eq!(est.len(), 3);
            prop_assert!(est.iter().all(|&s| c.contains(s)));
            prop_assert!(r_ml <= residual(&inst.y, &inst.h, est));
        }
    }

    #[test]
    fn detection_is_identical_across_thread_counts(seed in any::<u64>()) {
        let c = Constellation::qam(16).unwrap();
        let inst = instance(seed, 6, 3, &c, 0.05);
        let chan = precompute_spectral(&inst.h, inst.sigma0_sq).unwrap();
        let config = LangevinConfig { seed, ..LangevinConfig::with_shape(5, 15, 6).unwrap() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| detect_with_realization(&inst.y, &chan, &config, &c).unwrap())
        };
        prop_assert_eq!(run(1), run(3));
    }

    #[test]
    fn mmse_matches_zf_at_vanishing_noise(seed in any::<u64>()) {
        let c = Constellation::qam(16).unwrap();
        let inst = instance(seed, 8, 3, &c, 0.01);
        let sv = inst.h.clone().svd(false, false).singular_values;
        prop_assume!(sv.max() / sv.min() < 1e3);
        prop_assert_eq!(
            detect_mmse(&inst.y, &inst.h, 1e-13, &c).unwrap(),
            detect_zf(&inst.y, &inst.h, &c).unwrap()
        );
    }
}
