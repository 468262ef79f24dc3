use dprmdi_core::channel::{simulate_stats, transmittance, ChannelParams, IntensitySettings, Setting};
use dprmdi_core::estimator::{
    estimate, estimate_single_photon, estimate_stage2, EstimationConfig, Interval, SourceSet, Stage1Bounds, TailModel,
    Target,
};
use dprmdi_core::fock::{class_probabilities, PhaseRandomization, SeriesPolicy};
use dprmdi_core::validation::{model_class_yield, model_stage1_yield, standard_decoy_bounds};
use proptest::prelude::*;

fn setup(phases: PhaseRandomization, km: f64, mu: f64, nu: f64) -> (ChannelParams, IntensitySettings, SourceSet) {
    let params = ChannelParams::default().at_distance(km);
    let settings = IntensitySettings::new(mu, nu).unwrap();
    let src = SourceSet::new(phases, &settings).unwrap();
    (params, settings, src)
}

fn assert_brackets(iv: Interval, truth: f64, what: &str) {
    assert!(
        iv.contains(truth, 1e-9 * truth.max(1e-12)),
        "{what}: {truth} not in {iv:?}"
    );
}

#[test]
fn bounds_bracket_the_true_yields() {
    for phases in [
        PhaseRandomization::Continuous,
        PhaseRandomization::Discrete(3),
        PhaseRandomization::Discrete(9),
        PhaseRandomization::Discrete(12),
        PhaseRandomization::Discrete(20),
    ] {
        for km in [0.0, 30.0, 80.0] {
            for (mu, nu) in [(0.3, 0.002), (0.5, 0.1)] {
                let (params, settings, src) = setup(phases, km, mu, nu);
                let stats = simulate_stats(&params, &settings, &settings);
                let est = estimate(&stats, &src, &EstimationConfig::default()).unwrap();
                let sig = src.get(Setting::Signal);
                for target in [Target::Gain, Target::ErrorProduct] {
                    let (s1, s2) = match target {
                        Target::Gain => (&est.gain_stage1, &est.gain),
                        Target::ErrorProduct => (&est.error_stage1, &est.error),
                    };
                    let k = s1.k();
                    for i in 0..k {
                        for bob in Setting::ALL {
                            let truth = model_stage1_yield(&params, sig, src.get(bob), i, target);
                            assert_brackets(
                                s1.get(bob, i),
                                truth,
                                &format!("{phases} {km} {target:?} stage1 i={i} {bob}"),
                            );
                        }
                        for j in 0..k {
                            let truth = model_class_yield(&params, sig, sig, i, j, target);
                            assert_brackets(s2.get(i, j), truth, &format!("{phases} {km} {target:?} i={i} j={j}"));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn independent_tails_are_looser_but_still_sound() {
    let (params, settings, src) = setup(PhaseRandomization::Continuous, 10.0, 0.4, 0.01);
    let stats = simulate_stats(&params, &settings, &settings);
    let coupled = estimate_single_photon(&stats, &src, &EstimationConfig::default()).unwrap();
    let free = EstimationConfig {
        tail: TailModel::Independent,
        ..EstimationConfig::default()
    };
    let free = estimate_single_photon(&stats, &src, &free).unwrap();
    let sig = src.get(Setting::Signal);
    let truth = model_class_yield(&params, sig, sig, 1, 1, Target::Gain);
    assert_brackets(free.y11, truth, "independent tails");
    assert!(free.y11.lo <= coupled.y11.lo && free.y11.hi >= coupled.y11.hi);
}

#[test]
fn continuous_source_matches_standard_decoy_analysis() {
    for km in [0.0, 20.0, 60.0, 100.0] {
        for (mu, nu) in [(0.35, 0.04), (0.5, 0.1), (0.2, 0.002)] {
            let (params, settings, src) = setup(PhaseRandomization::Continuous, km, mu, nu);
            let stats = simulate_stats(&params, &settings, &settings);
            let ours = estimate_single_photon(&stats, &src, &EstimationConfig::default()).unwrap();
            let (y11, ye11) = standard_decoy_bounds(&stats, &settings).unwrap();
            for (a, b) in [
                (ours.y11.lo, y11.lo),
                (ours.y11.hi, y11.hi),
                (ours.ye11.lo, ye11.lo),
                (ours.ye11.hi, ye11.hi),
            ] {
                assert!(
                    (a - b).abs() <= 1e-8 * b.abs().max(1e-300),
                    "{km} km mu={mu}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn noiseless_single_photon_yield_floor() {
    let cfg = EstimationConfig {
        epsilon_override: Some(0.0),
        ..EstimationConfig::default()
    };
    for km in [0.0, 5.0, 10.0, 15.0, 20.0, 25.0] {
        let params = ChannelParams {
            dark_count: 0.0,
            misalignment: 0.0,
            ..ChannelParams::default().at_distance(km)
        };
        let settings = IntensitySettings::new(0.5, 0.1).unwrap();
        let src = SourceSet::new(PhaseRandomization::Continuous, &settings).unwrap();
        let stats = simulate_stats(&params, &settings, &settings);
        let b = estimate_single_photon(&stats, &src, &cfg).unwrap();
        let eta = transmittance(&params);
        assert_brackets(b.y11, eta * eta, &format!("{km} km"));
        assert!(b.y11.lo >= 0.5 * eta * eta, "{km} km: {:?} vs {}", b.y11, eta * eta);
    }
}

#[test]
fn point_stage1_data_give_the_square_system_solution() {
    // Three phases keep three classes with no tail, so each stage-2 system is square.
    let settings = IntensitySettings::new(0.5, 0.1).unwrap();
    let src = SourceSet::new(PhaseRandomization::Discrete(3), &settings).unwrap();
    let cfg = EstimationConfig {
        epsilon_override: Some(0.0),
        ..EstimationConfig::default()
    };
    let p: Vec<Vec<f64>> = Setting::ALL
        .iter()
        .map(|&s| class_probabilities(src.get(s), 3, &SeriesPolicy::default()).unwrap())
        .collect();
    let y = [[1e-4, 3e-3, 5e-3], [2e-3, 2.2e-3, 6e-3], [4e-3, 7e-3, 9e-3]];
    let mut intervals: [Vec<Interval>; 3] = Default::default();
    for (b, row) in p.iter().enumerate() {
        intervals[b] = (0..3)
            .map(|i| {
                let v: f64 = (0..3).map(|j| row[j] * y[i][j]).sum();
                Interval::new(v, v)
            })
            .collect();
    }
    let stage1 = Stage1Bounds {
        target: Target::Gain,
        intervals,
        diagnostics: Vec::new(),
    };
    let s2 = estimate_stage2(&stage1, &src, &cfg).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let iv = s2.get(i, j);
            assert!(
                (iv.lo - y[i][j]).abs() <= 1e-8 * y[i][j],
                "lo {i}{j}: {iv:?} vs {}",
                y[i][j]
            );
            assert!(
                (iv.hi - y[i][j]).abs() <= 1e-8 * y[i][j],
                "hi {i}{j}: {iv:?} vs {}",
                y[i][j]
            );
        }
    }
}

#[test]
fn estimation_is_deterministic() {
    let (params, settings, src) = setup(PhaseRandomization::Discrete(11), 15.0, 0.3, 0.01);
    let stats = simulate_stats(&params, &settings, &settings);
    let a = estimate(&stats, &src, &EstimationConfig::default()).unwrap();
    let b = estimate(&stats, &src, &EstimationConfig::default()).unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn larger_epsilon_never_shrinks_intervals(
        km in 0.0..60.0f64,
        mu in 0.1..0.6f64,
        ratio in 0.01..0.5f64,
        e1 in 0.0..1e-4f64,
        factor in 1.0..100.0f64,
    ) {
        let (params, settings, src) = setup(PhaseRandomization::Discrete(10), km, mu, mu * ratio);
        let stats = simulate_stats(&params, &settings, &settings);
        let at = |e: f64| {
            let cfg = EstimationConfig { epsilon_override: Some(e), ..EstimationConfig::default() };
            estimate(&stats, &src, &cfg).unwrap()
        };
        let small = at(e1);
        let large = at((e1 * factor).min(1.0));
        for (a, b) in [(&small.gain, &large.gain), (&small.error, &large.error)] {
            for (ra, rb) in a.intervals.iter().zip(&b.intervals) {
                for (x, y) in ra.iter().zip(rb) {
                    prop_assert!(y.lo <= x.lo + 1e-12 && y.hi >= x.hi - 1e-12, "{:?} not inside {:?}", x, y);
                }
            }
        }
    }

    #[test]
    fn continuous_intervals_always_bracket(km in 0.0..120.0f64, mu in 0.05..0.8f64, ratio in 0.002..0.6f64) {
        let (params, settings, src) = setup(PhaseRandomization::Continuous, km, mu, mu * ratio);
        let stats = simulate_stats(&params, &settings, &settings);
        let b = estimate_single_photon(&stats, &src, &EstimationConfig::default()).unwrap();
        let sig = src.get(Setting::Signal);
        let y = model_class_yield(&params, sig, sig, 1, 1, Target::Gain);
        let ye = model_class_yield(&params, sig, sig, 1, 1, Target::ErrorProduct);
        prop_assert!(b.y11.contains(y, 1e-9 * y));
        prop_assert!(b.ye11.contains(ye, 1e-9 * ye));
        prop_assert!(b.y11.lo >= 0.0 && b.y11.hi <= 1.0 && b.y11.lo <= b.y11.hi);
    }
}
