use pnc_core::dynamics::{
    evolve, extract_peak_ratio, simulate_sequence, thermalization_curve, LevelSystem, NoiseSpec, PulseProfile,
    PulseSequence, DEFAULT_WINDOW_NS,
};
use proptest::prelude::*;

/// Classical RK4 on the three-level rate equations, rates in MHz, time in ns.
fn rk4(s: &LevelSystem, p: [f64; 3], duration: f64, pumped: bool) -> [f64; 3] {
    let w = if pumped { s.omega } else { 0.0 } * 1e-3;
    let g = s.gamma_opt * 1e-3;
    let (up, down, b) = (s.gamma_up * 1e-3, s.gamma_down * 1e-3, s.beta);
    let f = |p: [f64; 3]| {
        [
            -(w + up) * p[0] + down * p[1] + (w + g * (1.0 - b)) * p[2],
            up * p[0] - down * p[1] + g * b * p[2],
            w * p[0] - (w + g) * p[2],
        ]
    };
    let n = 20_000;
    let h = duration / n as f64;
    let mut y = p;
    let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    for _ in 0..n {
        let k1 = f(y);
        let k2 = f(add(y, k1, h / 2.0));
        let k3 = f(add(y, k2, h / 2.0));
        let k4 = f(add(y, k3, h));
        for i in 0..3 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[test]
fn propagation_matches_runge_kutta() {
    let s = LevelSystem::from_t1(34.0, 0.4).unwrap();
    for (pumped, start) in [(true, [0.7, 0.3, 0.0]), (false, [0.2, 0.5, 0.3])] {
        let a = evolve(&s, start, 40.0, pumped).unwrap();
        let b = rk4(&s, start, 40.0, pumped);
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-10, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn dark_evolution_reaches_thermal_equilibrium() {
    let s = LevelSystem::new(3.0, 20.0);
    let p = evolve(&s, [1.0, 0.0, 0.0], 20.0 * s.t1_ns(), false).unwrap();
    assert!((p[1] / p[0] / (3.0 / 20.0) - 1.0).abs() < 1e-6, "{p:?}");
    assert!(p[2].abs() < 1e-12);
}

#[test]
fn no_drive_means_no_signal_and_no_ratio() {
    let mut s = LevelSystem::from_t1(100.0, 0.5).unwrap();
    s.omega = 0.0;
    let trace = simulate_sequence(&s, &PulseSequence::new(50.0)).unwrap();
    assert!(trace.signal.iter().all(|&v| v == 0.0));
    assert!(extract_peak_ratio(&trace, DEFAULT_WINDOW_NS).is_err());
}

#[test]
fn frozen_bath_gives_no_recovery() {
    let s = LevelSystem::new(0.0, 0.0);
    let ratio =
        extract_peak_ratio(&simulate_sequence(&s, &PulseSequence::new(200.0)).unwrap(), DEFAULT_WINDOW_NS).unwrap();
    let shelved =
        extract_peak_ratio(&simulate_sequence(&s, &PulseSequence::new(5.0)).unwrap(), DEFAULT_WINDOW_NS).unwrap();
    assert!((ratio - shelved).abs() < 1e-9, "{ratio} vs {shelved}");
    assert!(ratio.abs() < 0.05, "{ratio}");
}

#[test]
fn long_delay_recovers_fully() {
    let s = LevelSystem::from_t1(34.0, 0.3).unwrap();
    let trace = simulate_sequence(&s, &PulseSequence::new(30.0 * 34.0)).unwrap();
    let r = extract_peak_ratio(&trace, DEFAULT_WINDOW_NS).unwrap();
    assert!((r - 1.0).abs() < 1e-6, "{r}");
}

#[test]
fn ramped_pulses_still_conserve_population() {
    let s = LevelSystem::from_t1(50.0, 0.5).unwrap();
    let seq = PulseSequence { profile: PulseProfile::Ramp { rise: 0.5 }, step_ns: 0.05, ..PulseSequence::new(40.0) };
    let trace = simulate_sequence(&s, &seq).unwrap();
    for p in &trace.populations {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v > -1e-12));
    }
}

#[test]
fn noisy_curves_are_reproducible() {
    let s = LevelSystem::from_t1(34.0, 0.5).unwrap();
    let taus = [5.0, 20.0, 60.0, 150.0];
    let noise = Some(NoiseSpec { level: 0.02, seed: 7 });
    let template = PulseSequence::new(0.0);
    let a = thermalization_curve(&s, &template, &taus, DEFAULT_WINDOW_NS, noise).unwrap();
    let b = thermalization_curve(&s, &template, &taus, DEFAULT_WINDOW_NS, noise).unwrap();
    assert_eq!(a, b);
    let clean = thermalization_curve(&s, &template, &taus, DEFAULT_WINDOW_NS, None).unwrap();
    assert_ne!(a, clean);
}

#[test]
fn recovery_grows_with_delay() {
    let s = LevelSystem::from_t1(34.0, 0.5).unwrap();
    let taus: Vec<f64> = (1..=10).map(|i| i as f64 * 15.0).collect();
    let curve = thermalization_curve(&s, &PulseSequence::new(0.0), &taus, DEFAULT_WINDOW_NS, None).unwrap();
    assert!(curve.windows(2).all(|w| w[1].1 > w[0].1), "{curve:?}");
    assert!(curve.iter().all(|&(_, r)| r > 0.0 && r < 1.0 + 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn populations_stay_normalised(t1 in 10.0..1000.0f64, ratio in 0.0..1.0f64, delay in 1.0..200.0f64) {
        let s = LevelSystem::from_t1(t1, ratio).unwrap();
        let trace = simulate_sequence(&s, &PulseSequence::new(delay)).unwrap();
        for p in &trace.populations {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
