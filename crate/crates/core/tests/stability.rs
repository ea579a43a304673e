mod common;

use approx::assert_relative_eq;
use common::*;
use platoon_core::controllers::ControllerSpec;
use platoon_core::linalg::DMatrix;
use platoon_core::sim::run;
use platoon_core::stability::{
    check_excitation, default_width, deviations, estimate_deviation_gain, estimate_gain, excitation_gram,
    extract_deviations, extract_deviations_recorded, toeplitz, toeplitz_gram, NominalPolicy, OutputKind,
    StabilityError,
};
use platoon_core::ActuationParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn white(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// `y[k] = a·y[k−1] + (1 − a)·K·u[k]`, a low-pass with DC gain `K`.
fn low_pass(u: &[f64], a: f64, k: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(u.len());
    let mut prev = 0.0;
    for &x in u {
        prev = a * prev + (1.0 - a) * k * x;
        y.push(prev);
    }
    y
}

/// Peak of `|G(e^{jω})|` on a dense grid over `[0, π]`.
fn low_pass_hinf(a: f64, k: f64) -> f64 {
    (0..=20_000)
        .map(|i| {
            let w = std::f64::consts::PI * i as f64 / 20_000.0;
            let (re, im) = (1.0 - a * w.cos(), a * w.sin());
            (1.0 - a) * k / (re * re + im * im).sqrt()
        })
        .fold(0.0, f64::max)
}

#[test]
fn toeplitz_examples() {
    let t = toeplitz(&[1.0, 2.0], 1).unwrap();
    assert_eq!((t.rows(), t.cols()), (2, 1));
    assert_eq!(t.as_slice(), &[1.0, 2.0]);
    let t = toeplitz(&[1.0, 2.0, 3.0], 2).unwrap();
    assert_eq!((t.rows(), t.cols()), (4, 2));
    let want = [[1.0, 0.0], [2.0, 1.0], [3.0, 2.0], [0.0, 3.0]];
    for (i, row) in want.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(t[(i, j)], *v);
        }
    }
    assert!(matches!(toeplitz(&[1.0, 2.0], 2), Err(StabilityError::BadWidth { .. })));
    assert!(matches!(toeplitz(&[1.0, 2.0], 0), Err(StabilityError::BadWidth { .. })));
}

#[test]
fn gram_is_autocorrelation() {
    let u = white(500, 1);
    let m = 12;
    let g = toeplitz_gram(&u, m).unwrap();
    let t = toeplitz(&u, m).unwrap();
    let n = u.len() as f64;
    for i in 0..m {
        for j in 0..m {
            let explicit: f64 = (0..t.rows()).map(|r| t[(r, i)] * t[(r, j)]).sum::<f64>() / n;
            let lag = i.abs_diff(j);
            let auto: f64 = (0..u.len() - lag).map(|k| u[k] * u[k + lag]).sum::<f64>() / n;
            assert_relative_eq!(g[(i, j)], explicit, epsilon = 1e-12);
            assert_relative_eq!(g[(i, j)], auto, epsilon = 1e-12);
        }
    }
}

#[test]
fn excitation_examples() {
    let rep = check_excitation(&excitation_gram(&white(10_000, 2), 10).unwrap()).unwrap();
    assert!(rep.persistently_excited);
    assert_eq!(rep.numeric_rank, 10);

    let constant = vec![0.7; 400];
    for m in [2, 5, 20] {
        let rep = check_excitation(&excitation_gram(&constant, m).unwrap()).unwrap();
        assert_eq!(rep.numeric_rank, 1, "m={m}");
        assert!(!rep.persistently_excited);
    }

    let sine: Vec<f64> = (0..2000).map(|k| (0.3 * k as f64 + 0.4).sin()).collect();
    for m in [3, 8, 30] {
        let rep = check_excitation(&excitation_gram(&sine, m).unwrap()).unwrap();
        assert_eq!(rep.numeric_rank, 2, "m={m}");
    }
    match estimate_gain(&constant, &constant, 5) {
        Err(StabilityError::NotExcited { rank, m, .. }) => assert_eq!((rank, m), (1, 5)),
        other => panic!("expected refusal, got {other:?}"),
    }
}

#[test]
fn static_systems_are_exact() {
    let u = white(2000, 3);
    let m = default_width(u.len());
    let id = estimate_gain(&u, &u, m).unwrap();
    assert!((id.gamma_hat - 1.0).abs() <= 1e-9, "{}", id.gamma_hat);
    let y: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
    let two = estimate_gain(&u, &y, m).unwrap();
    assert!((two.gamma_hat - 2.0).abs() <= 1e-9, "{}", two.gamma_hat);
    assert_eq!((two.m, two.n_d), (44, 2000));
}

#[test]
fn first_order_within_five_percent() {
    let (a, k) = (0.9, 2.0);
    let oracle = low_pass_hinf(a, k);
    assert_relative_eq!(oracle, k, max_relative = 1e-12);
    let n = 20_000;
    let mean: f64 = (0..10)
        .map(|seed| {
            let u = white(n, 100 + seed);
            estimate_gain(&u, &low_pass(&u, a, k), default_width(n)).unwrap().gamma_hat
        })
        .sum::<f64>()
        / 10.0;
    assert!((mean - oracle).abs() <= 0.05 * oracle, "mean {mean} vs {oracle}");
}

#[test]
fn refinement_is_monotone() {
    let (a, k) = (0.8, 1.5);
    let oracle = low_pass_hinf(a, k);
    let mut prev = f64::INFINITY;
    for n in [1000, 2000, 4000, 8000, 16000] {
        let mut errs: Vec<f64> = (0..20)
            .map(|seed| {
                let u = white(n, 500 + seed);
                let g = estimate_gain(&u, &low_pass(&u, a, k), default_width(n)).unwrap().gamma_hat;
                (g - oracle).abs()
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        let med = 0.5 * (errs[9] + errs[10]);
        assert!(med <= prev, "N={n}: median error {med} > {prev}");
        prev = med;
    }
}

#[test]
fn deviation_examples() {
    let c = vec![20.0; 1200];
    let d = deviations(&c, &c, None, 0.1, 60.0, OutputKind::Speed, None).unwrap();
    assert!(d.input.iter().chain(&d.output).all(|&x| x == 0.0));
    assert_eq!(d.v_eq, vec![20.0, 20.0]);

    // Whole periods per window: the median sits on the mean.
    let lead: Vec<f64> = (0..1800).map(|k| 20.0 + 2.0 * (2.0 * std::f64::consts::PI * (k as f64 * 0.1 + 0.05) / 20.0).sin()).collect();
    let d = deviations(&lead, &lead, None, 0.1, 60.0, OutputKind::Speed, None).unwrap();
    for v in &d.v_eq {
        assert!((v - 20.0).abs() <= 1e-9, "{v}");
    }

    let gap = vec![30.0; 1200];
    let p = NominalPolicy {
        s0: 3.0,
        leader_length: 5.0,
        tau: 1.0,
    };
    let d = deviations(&c, &c, Some(&gap), 0.1, 60.0, OutputKind::Gap, Some(p)).unwrap();
    assert!(d.output.iter().all(|&x| (x - 2.0).abs() < 1e-12));
    assert!(matches!(
        deviations(&c, &c, None, 0.1, 0.05, OutputKind::Speed, None),
        Err(StabilityError::BadWindow)
    ));
}

#[test]
fn misaligned_trajectories_are_refused() {
    let s = cycle_platoon(ControllerSpec::Ctg(CTG), 1, ActuationParams::default());
    let r = run(&s).unwrap();
    let lead = &r.vehicle(0).unwrap().trajectory;
    let mut f = r.vehicle(1).unwrap().trajectory.clone();
    let ok = extract_deviations(lead, &f, 60.0, OutputKind::Speed, None).unwrap();
    let rec = extract_deviations_recorded(&f, 60.0, OutputKind::Speed, None).unwrap();
    assert_eq!(ok, rec);
    f.t0 += 0.05;
    assert!(matches!(
        extract_deviations(lead, &f, 60.0, OutputKind::Speed, None),
        Err(StabilityError::Misaligned(_))
    ));
}

fn follower_gains(spec: ControllerSpec) -> Vec<f64> {
    let r = run(&cycle_platoon(spec, 5, ActuationParams::default())).unwrap();
    assert!(!r.collided());
    r.vehicles[1..]
        .iter()
        .map(|v| {
            let d = extract_deviations_recorded(&v.trajectory, 60.0, OutputKind::Speed, None).unwrap();
            estimate_deviation_gain(&d, None).unwrap().gamma_hat
        })
        .collect()
}

/// VTG followers stay at or below unit gain on the leader cycle, while the
/// calibrated CTG (τ* below its stability threshold) amplifies.
#[test]
fn string_stability_verdicts() {
    let vtg_gains = follower_gains(ControllerSpec::Vtg(vtg(RING_WEIGHTS)));
    let ctg_gains = follower_gains(ControllerSpec::Ctg(CTG));
    assert!(vtg_gains.iter().all(|&g| g <= 1.05), "VTG {vtg_gains:?}");
    assert!(ctg_gains.iter().any(|&g| g > 1.0), "CTG {ctg_gains:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn gain_scales_homogeneously(seed in 0u64..10_000, alpha in prop_oneof![-5.0..-0.1_f64, 0.1..5.0_f64], beta in -5.0..5.0_f64) {
        let u = white(600, seed);
        let y = low_pass(&u, 0.7, 1.3);
        let m = default_width(u.len());
        let base = estimate_gain(&u, &y, m).unwrap().gamma_hat;
        let us: Vec<f64> = u.iter().map(|x| alpha * x).collect();
        let ys: Vec<f64> = y.iter().map(|x| beta * x).collect();
        let scaled = estimate_gain(&us, &ys, m).unwrap().gamma_hat;
        let want = (beta / alpha).abs() * base;
        prop_assert!((scaled - want).abs() <= 1e-9 * (1.0 + want), "{} vs {}", scaled, want);
    }

    #[test]
    fn gram_is_symmetric_psd(seed in 0u64..10_000, m in 1usize..20) {
        let u = white(200, seed);
        let g = toeplitz_gram(&u, m).unwrap();
        let sym = DMatrix::from_fn(m, m, |i, j| g[(i, j)] - g[(j, i)]);
        prop_assert!(sym.max_abs() == 0.0);
        let rep = check_excitation(&g).unwrap();
        prop_assert!(rep.min_eig >= -1e-12 * rep.max_eig.max(1.0));
    }
}
