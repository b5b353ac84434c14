use num_complex::Complex64;
use proptest::prelude::*;

use resokit::calibration::{
    component_from_difference, dbm_to_watts, input_power_dbm, photon_number, synthetic_paper_chain, watts_to_dbm,
    AttenuationChain, AttenuationComponent, DEFAULT_MEDIAN_WINDOW, PUBLISHED_TOTALS,
};
use resokit::fit::S21Trace;
use resokit::Error;

fn freqs() -> Vec<f64> {
    (0..301).map(|k| 4.0e9 + 1e7 * k as f64).collect()
}

fn trace(s21: impl Fn(f64) -> Complex64) -> S21Trace {
    let f = freqs();
    let z = f.iter().map(|x| s21(*x)).collect();
    S21Trace::new(f, z).unwrap()
}

fn reference() -> S21Trace {
    trace(|f| Complex64::from_polar(0.5, 1e-9 * f))
}

#[test]
fn identical_traces_give_zero_attenuation() {
    let c = component_from_difference(&reference(), &reference(), "none", DEFAULT_MEDIAN_WINDOW).unwrap();
    assert!(c.atten_db.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn attenuator_is_recovered() {
    let g = 10f64.powf(-46.0 / 20.0);
    let with = trace(|f| Complex64::from_polar(0.5 * g, 1e-9 * f + 0.3));
    let c = component_from_difference(&reference(), &with, "attenuator", DEFAULT_MEDIAN_WINDOW).unwrap();
    assert!(c.atten_db.iter().all(|v| (v + 46.0).abs() < 1e-9));
}

#[test]
fn lowpass_filter_with_attenuator() {
    // one-pole lowpass at 8 GHz behind a 20 dB pad
    let fc = 8.0e9;
    let h = |f: f64| 0.1 / Complex64::new(1.0, f / fc);
    let with = trace(|f| 0.5 * h(f));
    let c = component_from_difference(&reference(), &with, "filter", 1).unwrap();
    for (f, v) in c.freqs.iter().zip(&c.atten_db) {
        let expected = -20.0 - 10.0 * (1.0 + (f / fc).powi(2)).log10();
        assert!((v - expected).abs() < 1e-9, "{f}: {v} vs {expected}");
    }
}

#[test]
fn median_smoothing_removes_spikes() {
    let with = trace(|f| {
        let spike = if ((f - 4.0e9) / 1e7).round() as i64 % 37 == 5 { 3.0 } else { 1.0 };
        Complex64::from_polar(0.05 * spike, 0.0)
    });
    let c = component_from_difference(&reference(), &with, "pad", DEFAULT_MEDIAN_WINDOW).unwrap();
    assert!(c.atten_db.iter().all(|v| (v + 20.0).abs() < 1e-9));
    assert!(component_from_difference(&reference(), &with, "pad", 4).is_err());
}

#[test]
fn synthetic_chain_reproduces_published_totals() {
    let chain = synthetic_paper_chain();
    for (f, total) in PUBLISHED_TOTALS {
        assert!((chain.total_attenuation(f).unwrap() - total).abs() < 1e-9);
    }
    assert!(matches!(chain.total_attenuation(8e9), Err(Error::OutOfRange { .. })));
}

#[test]
fn chain_sums_components() {
    assert_eq!(AttenuationChain::default().total_attenuation(5e9).unwrap(), 0.0);
    let chain = AttenuationChain::new(vec![
        AttenuationComponent::flat("a", -40.0, 4e9, 8e9).unwrap(),
        AttenuationComponent::flat("b", -36.0, 4e9, 8e9).unwrap(),
    ])
    .unwrap();
    assert_eq!(chain.total_attenuation(6e9).unwrap(), -76.0);
    assert_eq!(input_power_dbm(-20.0, -16.0, &chain, 6e9).unwrap(), -112.0);
}

#[test]
fn photon_number_hand_oracle() {
    let chain = AttenuationChain::new(vec![AttenuationComponent::flat("line", -77.9, 4e9, 8e9).unwrap()]).unwrap();
    let p_dbm = input_power_dbm(-80.0, -16.0, &chain, 6e9).unwrap();
    let p_in = dbm_to_watts(p_dbm);
    assert!(((p_in - 4.073_802_778_041_127_3e-21) / p_in).abs() < 1e-12);
    let n = photon_number(p_in, 6e9, 1.7e6, 9.6e6).unwrap();
    assert!(((n - 0.133_400_080_993_269_97) / n).abs() < 1e-10);
}

#[test]
fn photon_number_edge_cases() {
    assert_eq!(photon_number(0.0, 6e9, 1e6, 1e6).unwrap(), 0.0);
    let n = photon_number(1e-18, 6e9, 1e6, 2e6).unwrap();
    assert!((photon_number(3e-18, 6e9, 1e6, 2e6).unwrap() / n - 3.0).abs() < 1e-12);
    assert!(matches!(photon_number(-1.0, 6e9, 1e6, 1e6), Err(Error::Domain(_))));
    assert!(matches!(photon_number(1e-18, 6e9, 0.0, 1e6), Err(Error::Domain(_))));
}

fn flat_chain(values: &[f64]) -> AttenuationChain {
    AttenuationChain::new(
        values
            .iter()
            .enumerate()
            .map(|(k, v)| AttenuationComponent::flat(format!("c{k}"), *v, 4e9, 8e9).unwrap())
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn chain_total_ignores_order(mut values in prop::collection::vec(-60.0f64..0.0, 1..6), f in 4e9f64..8e9) {
        let a = flat_chain(&values).total_attenuation(f).unwrap();
        values.reverse();
        let b = flat_chain(&values).total_attenuation(f).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn photon_number_is_monotone(
        p in 1e-22f64..1e-15,
        f in 4e9f64..8e9,
        qc in 1e4f64..1e7,
        qi in 1e4f64..1e7,
    ) {
        let n = photon_number(p, f, qc, qi).unwrap();
        prop_assert!(photon_number(2.0 * p, f, qc, qi).unwrap() > n);
        prop_assert!(photon_number(p, f, qc, 2.0 * qi).unwrap() > n);
    }

    #[test]
    fn dbm_round_trip(p in -200.0f64..30.0) {
        prop_assert!((watts_to_dbm(dbm_to_watts(p)) - p).abs() < 1e-12);
    }
}
