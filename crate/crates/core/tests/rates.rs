use pnc_core::rates::{
    bose_occupation, crossover_temperature, linear_rate, raman_rate, single_phonon_rates, total_relaxation,
    OrbitalSystem, RamanMode, RateConvention, RateModel,
};
use proptest::prelude::*;

const H: f64 = 6.626_070_15e-34;
const KB: f64 = 1.380_649e-23;

fn model(chi_rho: f64, chi_rho_sq: f64) -> RateModel {
    RateModel { chi_rho, chi_rho_sq, ..RateModel::default() }
}

#[test]
fn occupation_at_a_typical_operating_point() {
    let x = H * 60e9 / (KB * 4.4);
    let oracle = 1.0 / (x.exp() - 1.0);
    let n = bose_occupation(60.0, 4.4);
    assert!((n - oracle).abs() < 1e-12 * oracle);
    assert!((n - 1.08).abs() < 0.005);
    assert_eq!(bose_occupation(60.0, 0.0), 0.0);
}

#[test]
fn raman_quadrature_matches_the_closed_form() {
    let sys = OrbitalSystem::new(60.0).unwrap();
    let m = model(0.0, 3e-7);
    for t in [2.0, 4.4, 12.0, 20.0] {
        let closed = raman_rate(&sys, &m, t, RamanMode::ClosedForm).unwrap();
        let numeric = raman_rate(&sys, &m, t, RamanMode::NumericIntegral).unwrap();
        assert!((numeric / closed - 1.0).abs() < 1e-6, "T = {t}: {numeric} vs {closed}");
    }
    assert_eq!(raman_rate(&sys, &m, 0.0, RamanMode::NumericIntegral).unwrap(), 0.0);
}

#[test]
fn raman_scales_as_the_cube() {
    let sys = OrbitalSystem::new(47.0).unwrap();
    let m = model(0.0, 1e-6);
    let r1 = raman_rate(&sys, &m, 5.0, RamanMode::ClosedForm).unwrap();
    let r2 = raman_rate(&sys, &m, 10.0, RamanMode::ClosedForm).unwrap();
    assert!((r2 / r1 - 8.0).abs() < 1e-12);
}

#[test]
fn high_temperature_limit_approaches_the_linear_form() {
    let delta = 60.0;
    let sys = OrbitalSystem::new(delta).unwrap();
    let m = model(1e-4, 0.0);
    let mut prev: Option<(f64, f64)> = None;
    for factor in [5.0, 10.0, 20.0, 50.0, 200.0, 1000.0] {
        let t = factor * H * delta * 1e9 / KB;
        let (up, down) = single_phonon_rates(&sys, &m, t).unwrap();
        let lin = linear_rate(&sys, &m, t);
        let dev = ((up / lin - 1.0).abs(), (down / lin - 1.0).abs());
        if let Some(p) = prev {
            assert!(dev.0 < p.0 && dev.1 < p.1);
        }
        prev = Some(dev);
    }
    // x/(e^x - 1) = 1 - x/2 + ..., so the mean of the two rates converges
    // one order faster than either.
    let t = 50.0 * H * delta * 1e9 / KB;
    let (up, down) = single_phonon_rates(&sys, &m, t).unwrap();
    let lin = linear_rate(&sys, &m, t);
    assert!((up / lin - 1.0).abs() < 0.01);
    assert!((0.5 * (up + down) / lin - 1.0).abs() < 1e-4);
}

#[test]
fn fitted_couplings_put_the_crossover_between_10_and_14_kelvin() {
    let delta = 60.0;
    let sys = OrbitalSystem::new(delta).unwrap();
    let m = model(RateModel::chi_rho_from_linear_slope(0.15, delta), RateModel::chi_rho_sq_from_cubic(6.3e-4, delta));
    let t = crossover_temperature(&sys, &m, 1.0, 40.0).unwrap().expect("crossover");
    assert!((10.0..=14.0).contains(&t), "crossover at {t} K");
    let angular = RateModel { convention: RateConvention::Angular, ..m };
    let ta = crossover_temperature(&sys, &angular, 1.0, 40.0).unwrap().unwrap();
    assert!((ta - t).abs() < 1e-9);
}

#[test]
fn channels_switch_off_independently() {
    let sys = OrbitalSystem::new(50.0).unwrap();
    let only_raman = total_relaxation(&sys, &model(0.0, 1e-6), 8.0).unwrap();
    assert_eq!(only_raman.t1_ns, None);
    assert!((only_raman.total - 2.0 * only_raman.gamma_raman).abs() < 1e-15);
    let only_single = total_relaxation(&sys, &model(1e-4, 0.0), 8.0).unwrap();
    let (up, down) = single_phonon_rates(&sys, &model(1e-4, 0.0), 8.0).unwrap();
    assert_eq!(only_single.total, up + down);
    assert!((only_single.t1_ns.unwrap() - 1e3 / (up + down)).abs() < 1e-9);
}

proptest! {
    #[test]
    fn detailed_balance_holds(delta in 1.0..500.0f64, t in 0.05..300.0f64, chi in 1e-8..1.0f64) {
        let sys = OrbitalSystem::new(delta).unwrap();
        let (up, down) = single_phonon_rates(&sys, &model(chi, 0.0), t).unwrap();
        let x = H * delta * 1e9 / (KB * t);
        prop_assume!(up > 0.0 && x < 600.0);
        prop_assert!(((down / up) / x.exp() - 1.0).abs() < 1e-12);
        prop_assert!(down >= up);
    }

    #[test]
    fn rates_grow_with_temperature(delta in 10.0..200.0f64, t in 0.5..50.0f64, dt in 0.01..10.0f64) {
        let sys = OrbitalSystem::new(delta).unwrap();
        let m = model(1e-4, 1e-7);
        let a = total_relaxation(&sys, &m, t).unwrap();
        let b = total_relaxation(&sys, &m, t + dt).unwrap();
        prop_assert!(b.gamma_up >= a.gamma_up && b.gamma_down >= a.gamma_down && b.gamma_raman >= a.gamma_raman);
    }

    #[test]
    fn angular_convention_is_a_pure_rescaling(delta in 10.0..200.0f64, t in 0.5..50.0f64) {
        let sys = OrbitalSystem::new(delta).unwrap();
        let m = model(1e-4, 1e-7);
        let plain = total_relaxation(&sys, &m, t).unwrap();
        let ang = total_relaxation(&sys, &RateModel { convention: RateConvention::Angular, ..m }, t).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        prop_assert!((ang.total / plain.total / tau - 1.0).abs() < 1e-12);
        prop_assert!((ang.gamma_raman / plain.gamma_raman / tau - 1.0).abs() < 1e-12);
    }
}
