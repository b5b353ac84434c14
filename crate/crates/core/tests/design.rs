use std::f64::consts::PI;

use proptest::prelude::*;

use resokit::constants::{EPS_SILICON, MU_0, SPEED_OF_LIGHT};
use resokit::design::{
    asr_frequency, asr_impedance, asr_inductance, asr_voltage_profile, cpw_eps_eff, cpw_frequency, cpw_impedance,
    current_sheet_inductance, elliptic_k, length_for_frequency, lumped_impedance, solve_gap_for_impedance, AsrGeometry,
    CoilConstants, CpwGeometry, DEFAULT_SHIELD_HEIGHT,
};
use resokit::Error;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn elliptic_k_reference_values() {
    assert_eq!(elliptic_k(0.0).unwrap(), PI / 2.0);
    // 40-digit arithmetic-geometric mean
    assert!(rel(elliptic_k(std::f64::consts::FRAC_1_SQRT_2).unwrap(), 1.854_074_677_301_371_9) < 1e-12);
    let near_one = elliptic_k(0.999_999).unwrap();
    assert!(near_one.is_finite() && near_one > elliptic_k(0.9).unwrap());
    assert!(matches!(elliptic_k(1.0), Err(Error::Domain(_))));
    assert!(matches!(elliptic_k(-0.1), Err(Error::Domain(_))));
}

#[test]
fn cpw_formula_oracles() {
    let g = CpwGeometry::new(8e-6, 24e-6, 1.5e-3, 1e-3, EPS_SILICON).unwrap();
    assert!(rel(cpw_eps_eff(&g).unwrap(), 6.225_211_245_683_537_5) < 1e-10);
    let g = CpwGeometry::new(12e-6, 26e-6, 1.5e-3, 1e-3, EPS_SILICON).unwrap();
    assert!(rel(cpw_eps_eff(&g).unwrap(), 6.225_273_041_976_951_3) < 1e-10);
    assert!(rel(cpw_impedance(&g).unwrap(), 50.519_987_869_730_016) < 1e-10);
}

#[test]
fn vacuum_substrate_and_half_space_limits() {
    let g = CpwGeometry::new(10e-6, 30e-6, 1.5e-3, 1e-3, 1.0).unwrap();
    assert!((cpw_eps_eff(&g).unwrap() - 1.0).abs() < 1e-14);
    let dev = |h: f64| {
        let g = CpwGeometry::new(10e-6, 30e-6, h, 1e-3, EPS_SILICON).unwrap();
        cpw_eps_eff(&g).unwrap() - 6.225
    };
    assert!(dev(10.0 * 30e-6).abs() < 1e-2);
    assert!(dev(1000.0 * 30e-6).abs() < 1e-6);
    assert!(dev(1000.0 * 30e-6).abs() < dev(100.0 * 30e-6).abs());
}

#[test]
fn symmetric_vacuum_impedance_collapses() {
    // h large: k2 -> k1
    let g = CpwGeometry::new(10e-6, 30e-6, 1.0, 1e-3, 1.0).unwrap();
    let k = g.k1();
    let kp = (1.0 - k * k).sqrt();
    let expected = 60.0 * PI / (2.0 * elliptic_k(k).unwrap() / elliptic_k(kp).unwrap());
    assert!(rel(cpw_impedance(&g).unwrap(), expected) < 1e-9);
}

#[test]
fn quarter_wave_frequency_normalization() {
    let g = CpwGeometry::new(10e-6, 30e-6, 1.5e-3, SPEED_OF_LIGHT / 4.0, 1.0).unwrap();
    assert!(rel(cpw_frequency(&g).unwrap(), 1.0) < 1e-14);
    let f = cpw_frequency(&g).unwrap();
    let doubled = g.with_length(2.0 * g.length);
    assert_eq!(cpw_frequency(&doubled).unwrap(), f / 2.0);
}

#[test]
fn length_inversion_round_trip() {
    let gap = solve_gap_for_impedance(8e-6, DEFAULT_SHIELD_HEIGHT, EPS_SILICON, 50.0).unwrap();
    let g = CpwGeometry::from_gap(8e-6, gap, DEFAULT_SHIELD_HEIGHT, 1e-3, EPS_SILICON).unwrap();
    let len = length_for_frequency(&g, 6.17e9).unwrap();
    assert!(rel(cpw_frequency(&g.with_length(len)).unwrap(), 6.17e9) < 1e-9);
}

#[test]
fn fifty_ohm_gaps_exist_for_all_widths() {
    for w in [8e-6, 12e-6, 20e-6] {
        let gap = solve_gap_for_impedance(w, DEFAULT_SHIELD_HEIGHT, EPS_SILICON, 50.0).unwrap();
        let g = CpwGeometry::from_gap(w, gap, DEFAULT_SHIELD_HEIGHT, 1e-3, EPS_SILICON).unwrap();
        assert!((cpw_impedance(&g).unwrap() - 50.0).abs() < 0.01);
    }
}

#[test]
fn asr1_formula_oracles() {
    let c = CoilConstants::default();
    let g = AsrGeometry::new(12e-6, 24e-6, 12, 0.0, EPS_SILICON).unwrap();
    let f = asr_frequency(&g, &c).unwrap();
    assert!(rel(f, 4_482_109_287.551_696) < 1e-12);
    // above the measured 4.02 GHz by less than 15%
    assert!(f > 4.02e9 && f < 1.15 * 4.02e9);
    let l = asr_inductance(&g, &c).unwrap();
    let hand = MU_0 * 144.0 * 288e-6 * 0.5 * (2.5f64.ln() + 0.2);
    assert!(rel(l, hand) < 1e-12);
    assert!(rel(l, 2.908_788_653_253_221_2e-8) < 1e-10);
    let z = asr_impedance(&g, &c).unwrap();
    assert!(rel(z, 2.0 * PI * f * l) < 1e-12);
    assert!(rel(z, 819.170_827_182_128_7) < 1e-10);
}

#[test]
fn all_paper_spirals_are_near_810_ohm() {
    let c = CoilConstants::default();
    for w in [7e-6, 8e-6, 10e-6, 12e-6] {
        let g = AsrGeometry::equal_spacing(w, 12, EPS_SILICON).unwrap();
        assert!(rel(asr_impedance(&g, &c).unwrap(), 810.0) < 0.02);
    }
}

#[test]
fn spiral_scaling_laws() {
    let c = CoilConstants::default();
    let g = AsrGeometry::new(12e-6, 24e-6, 12, 0.0, EPS_SILICON).unwrap();
    let f = asr_frequency(&g, &c).unwrap();
    let wide = AsrGeometry { p: 48e-6, ..g };
    assert!(rel(asr_frequency(&wide, &c).unwrap(), f / 2.0) < 1e-14);
    let l = asr_inductance(&g, &c).unwrap();
    assert!(rel(asr_inductance(&g.scaled(2.0), &c).unwrap(), 2.0 * l) < 1e-14);
    assert_eq!(current_sheet_inductance(0, 0.0, 0.0, &c).unwrap(), 0.0);
    assert_eq!(lumped_impedance(f, 0.0), 0.0);
    assert!(asr_inductance(&AsrGeometry { n: 0, ..g }, &c).is_err());
}

#[test]
fn voltage_profile_anchor_points() {
    let g = AsrGeometry::new(12e-6, 24e-6, 12, 0.0, EPS_SILICON).unwrap();
    let r = g.r_out();
    assert_eq!(asr_voltage_profile(&g, 0.0, 0.7).unwrap(), 0.7);
    assert!((asr_voltage_profile(&g, r, 0.7).unwrap() + 0.7).abs() < 1e-15);
    assert!(asr_voltage_profile(&g, r / 2f64.sqrt(), 0.7).unwrap().abs() < 1e-15);
    assert!(asr_voltage_profile(&g, 1.01 * r, 1.0).is_err());
    assert!(asr_voltage_profile(&g, -1e-9, 1.0).is_err());
}

proptest! {
    #[test]
    fn elliptic_k_is_increasing(a in 0.0f64..0.999, b in 0.0f64..0.999) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(elliptic_k(lo).unwrap() < elliptic_k(hi).unwrap());
    }

    #[test]
    fn cpw_eps_eff_is_bounded(
        w in 1e-6f64..100e-6,
        gap in 1e-6f64..100e-6,
        h in 50e-6f64..5e-3,
        eps in 1.0f64..20.0,
    ) {
        let g = CpwGeometry::from_gap(w, gap, h, 1e-3, eps).unwrap();
        let e = cpw_eps_eff(&g).unwrap();
        prop_assert!(e >= 1.0 - 1e-12 && e <= eps + 1e-12);
    }

    #[test]
    fn cpw_impedance_falls_with_width(g_total in 40e-6f64..200e-6, h in 0.3e-3f64..3e-3) {
        let zs: Vec<f64> = (1..=20)
            .map(|k| {
                let w = g_total * k as f64 / 21.0;
                cpw_impedance(&CpwGeometry::new(w, g_total, h, 1e-3, EPS_SILICON).unwrap()).unwrap()
            })
            .collect();
        prop_assert!(zs.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn spiral_frequency_scales_inversely(
        w in 2e-6f64..30e-6,
        n in 1u32..40,
        r_in in 0.0f64..200e-6,
        s in 0.1f64..10.0,
    ) {
        let c = CoilConstants::default();
        let g = AsrGeometry::new(w, 2.0 * w, n, r_in, EPS_SILICON).unwrap();
        let f = asr_frequency(&g, &c).unwrap();
        prop_assert!(rel(asr_frequency(&g.scaled(s), &c).unwrap(), f / s) < 1e-12);
        let z = asr_impedance(&g, &c).unwrap();
        prop_assert!(rel(z, 2.0 * PI * f * asr_inductance(&g, &c).unwrap()) < 1e-12);
    }

    #[test]
    fn voltage_profile_single_crossing(w in 2e-6f64..30e-6, n in 1u32..40, v0 in 0.1f64..5.0) {
        let g = AsrGeometry::equal_spacing(w, n, EPS_SILICON).unwrap();
        let r = g.r_out();
        let vs: Vec<f64> = (1..2000)
            .map(|k| asr_voltage_profile(&g, r * k as f64 / 2000.0, v0).unwrap())
            .collect();
        prop_assert!(vs.iter().all(|v| v.abs() <= v0));
        let crossings = vs.windows(2).filter(|p| p[0].signum() != p[1].signum()).count();
        prop_assert_eq!(crossings, 1);
    }
}
