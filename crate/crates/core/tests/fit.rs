use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resokit::fit::{
    fit_circle, fit_resonance, harmonic_mean, harmonic_mean_qi, remove_delay, sweep_around, synthesize_trace,
    NotchParams, S21Trace,
};
use resokit::Error;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn asr3() -> NotchParams {
    NotchParams::from_qi(6.0e9, 9.6e6, 1.7e6, 0.1)
}

fn trace(p: &NotchParams, snr_db: Option<f64>, seed: u64) -> S21Trace {
    let freqs = sweep_around(p.f0, p.ql, 8.0, 801);
    synthesize_trace(p, &freqs, snr_db, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn circle_through_exact_points() {
    let c0 = Complex64::new(0.5, 0.0);
    let pts: Vec<Complex64> = (0..16).map(|k| c0 + Complex64::from_polar(0.25, TAU * k as f64 / 16.0)).collect();
    let c = fit_circle(&pts).unwrap();
    assert!((c.center - c0).norm() < 1e-12);
    assert!((c.radius - 0.25).abs() < 1e-12);
    let three = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.0)];
    let c = fit_circle(&three).unwrap();
    assert!(c.center.norm() < 1e-12 && (c.radius - 1.0).abs() < 1e-12);
    assert!(fit_circle(&three[..2]).is_err());
}

#[test]
fn circle_fit_under_noise() {
    let c0 = Complex64::new(0.5, 0.0);
    let mut errors: Vec<f64> = (0..100)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Complex64> = (0..100)
                .map(|k| {
                    let noise =
                        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * (0.001 * 12f64.sqrt());
                    c0 + Complex64::from_polar(0.25, TAU * k as f64 / 100.0) + noise
                })
                .collect();
            let c = fit_circle(&pts).unwrap();
            (c.center - c0).norm().max((c.radius - 0.25).abs())
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    assert!(errors[94] < 0.002, "95th percentile {}", errors[94]);
}

#[test]
fn delay_is_recovered_on_a_wide_sweep() {
    let p = NotchParams::from_qi(6.0e9, 2e4, 1.5e4, 0.05).with_environment(50e-9, 1.0, 0.0);
    let (_, tau) = remove_delay(&trace(&p, None, 0)).unwrap();
    assert!((tau - 50e-9).abs() < 0.5e-9, "tau = {tau:e}");
    let (_, tau) = remove_delay(&trace(&p, Some(60.0), 1)).unwrap();
    assert!((tau - 50e-9).abs() < 0.5e-9, "tau = {tau:e}");
    let p0 = p.with_environment(0.0, 1.0, 0.0);
    let (_, tau) = remove_delay(&trace(&p0, Some(60.0), 2)).unwrap();
    assert!(tau.abs() < 0.1e-9, "tau = {tau:e}");
}

#[test]
fn environment_is_recovered_where_identifiable() {
    let p = NotchParams::from_qi(6.0e9, 2e4, 1.5e4, -0.2).with_environment(30e-9, 0.7, 1.1);
    let fit = fit_resonance(&trace(&p, Some(60.0), 3)).unwrap();
    assert!((fit.delay_ns - 30.0).abs() < 0.5);
    assert!(rel(fit.amplitude, 0.7) < 1e-3);
    let d_alpha = (fit.alpha - 1.1 + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
    assert!(d_alpha.abs() < 1e-2);
}

#[test]
fn noise_only_and_flat_traces_have_no_resonance() {
    let freqs = sweep_around(6e9, 1e6, 8.0, 801);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise: Vec<Complex64> = freqs
        .iter()
        .map(|_| Complex64::new(1.0 + 1e-3 * (rng.random::<f64>() - 0.5), 1e-3 * (rng.random::<f64>() - 0.5)))
        .collect();
    let t = S21Trace::new(freqs.clone(), noise).unwrap();
    assert!(matches!(fit_resonance(&t), Err(Error::NoResonance(_))));
    let flat = S21Trace::new(freqs, vec![Complex64::new(0.3, 0.4); 801]).unwrap();
    assert!(matches!(fit_resonance(&flat), Err(Error::NoResonance(_))));
}

#[test]
fn short_traces_are_rejected() {
    let p = asr3();
    let freqs = sweep_around(p.f0, p.ql, 8.0, 31);
    let t = synthesize_trace(&p, &freqs, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(matches!(fit_resonance(&t), Err(Error::InvalidInput(_))));
}

#[test]
fn asr3_round_trip() {
    let p = asr3().with_environment(0.0, 0.8, 0.4);
    for seed in 0..10 {
        let fit = fit_resonance(&trace(&p, Some(60.0), seed)).unwrap();
        assert!(rel(fit.qi, 9.6e6) < 0.01, "seed {seed}: Qi = {}", fit.qi);
        assert!(rel(fit.qc_mag, 1.7e6) < 0.01);
        assert!(rel(fit.ql, p.ql) < 0.01);
        assert!((fit.f0 - 6.0e9).abs() < 0.01 * p.linewidth());
    }
}

#[test]
fn noiseless_fit_is_exact() {
    let p = asr3().with_environment(0.0, 1.3, -2.0);
    let fit = fit_resonance(&trace(&p, None, 0)).unwrap();
    assert!(rel(fit.qi, 9.6e6) < 1e-6);
    assert!(rel(fit.qc_mag, 1.7e6) < 1e-6);
    assert!((fit.phi - 0.1).abs() < 1e-6);
    assert!(fit.rms_residual < 1e-9);
}

#[test]
fn weakly_coupled_limit() {
    let p = NotchParams::from_qi(5.0e9, 1e6, 2e7, 0.0);
    let fit = fit_resonance(&trace(&p, Some(70.0), 5)).unwrap();
    assert!(rel(fit.ql, 1e6) < 0.06);
    assert!(rel(fit.qi, 1e6) < 0.02);
    assert!(fit.diameter() < 0.06);
}

#[test]
fn fit_is_invariant_under_global_gain_and_phase() {
    let t = trace(&asr3(), Some(60.0), 6);
    let g = Complex64::from_polar(3.7, 2.1);
    let scaled = S21Trace::new(t.freqs.clone(), t.s21.iter().map(|z| z * g).collect()).unwrap();
    let (a, b) = (fit_resonance(&t).unwrap(), fit_resonance(&scaled).unwrap());
    assert!(rel(b.qi, a.qi) < 1e-9);
    assert!(rel(b.ql, a.ql) < 1e-9);
    assert!(rel(b.qc_mag, a.qc_mag) < 1e-9);
    assert!((b.phi - a.phi).abs() < 1e-9);
    assert!(rel(b.amplitude, 3.7 * a.amplitude) < 1e-9);
}

#[test]
fn descending_sweep_gives_the_same_fit() {
    let t = trace(&asr3(), Some(60.0), 7);
    let rev = S21Trace::new(t.freqs.iter().rev().copied().collect(), t.s21.iter().rev().copied().collect()).unwrap();
    assert_eq!(fit_resonance(&t).unwrap(), fit_resonance(&rev).unwrap());
}

#[test]
fn qi_uncertainty_has_nominal_coverage() {
    let p = asr3();
    let n = 200;
    let covered = (0..n)
        .filter(|seed| {
            let fit = fit_resonance(&trace(&p, Some(50.0), 1000 + seed)).unwrap();
            (fit.qi - 9.6e6).abs() <= fit.uncertainties.qi
        })
        .count();
    let frac = covered as f64 / n as f64;
    assert!((0.60..=0.76).contains(&frac), "coverage {frac}");
}

#[test]
fn harmonic_mean_values() {
    assert_eq!(harmonic_mean(&[2.0, 2.0, 2.0]).unwrap(), 2.0);
    assert!((harmonic_mean(&[1.0, 4.0, 4.0]).unwrap() - 2.0).abs() < 1e-15);
    assert!(harmonic_mean(&[]).is_err());
    assert!(harmonic_mean(&[1.0, 0.0]).is_err());
    let fits: Vec<_> = (0..3).map(|s| fit_resonance(&trace(&asr3(), Some(60.0), 20 + s)).unwrap()).collect();
    let hm = harmonic_mean_qi(&fits).unwrap();
    let lo = fits.iter().map(|f| f.qi).fold(f64::INFINITY, f64::min);
    let hi = fits.iter().map(|f| f.qi).fold(0.0, f64::max);
    assert!(hm >= lo && hm <= hi);
}
