use std::f64::consts::FRAC_PI_2;

use crate::{Error, Result};

const AGM_RTOL: f64 = 1e-15;
const AGM_MAX_ITER: usize = 64;

/// Complete elliptic integral of the first kind `K(k)` with modulus `k`
/// (not the parameter `m = k²`).
///
/// Evaluated through the arithmetic-geometric mean,
/// `K(k) = π / (2 agm(1, √(1 - k²)))`, iterated until the two means agree to
/// a relative 1e-15.
pub fn elliptic_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::domain(format!("elliptic_k needs 0 <= k < 1, got {k}")));
    }
    // (1 - k)(1 + k) keeps the complementary modulus accurate as k -> 1
    let kp = ((1.0 - k) * (1.0 + k)).sqrt();
    Ok(FRAC_PI_2 / agm(1.0, kp))
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..AGM_MAX_ITER {
        if (a - b).abs() <= AGM_RTOL * a {
            break;
        }
        let next_a = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next_a;
    }
    a
}

/// Ratio `K(k) / K(k')` with `k' = √(1 - k²)`.
pub(crate) fn k_ratio(k: f64) -> Result<f64> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::domain(format!("modulus must lie in (0, 1), got {k}")));
    }
    let kp = ((1.0 - k) * (1.0 + k)).sqrt();
    Ok(elliptic_k(k)? / elliptic_k(kp)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_at_zero_is_half_pi() {
        assert_eq!(elliptic_k(0.0).unwrap(), FRAC_PI_2);
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(matches!(elliptic_k(-1e-3), Err(Error::Domain(_))));
        assert!(matches!(elliptic_k(1.0), Err(Error::Domain(_))));
        assert!(elliptic_k(f64::NAN).is_err());
    }

    #[test]
    fn near_singular_endpoint_is_finite_and_large() {
        let near = elliptic_k(0.999_999).unwrap();
        assert!(near.is_finite());
        assert!(near > elliptic_k(0.9).unwrap());
        // K(k) ~ ln(4/k') as k -> 1
        let kp = (1.0f64 - 0.999_999f64.powi(2)).sqrt();
        assert!((near - (4.0 / kp).ln()).abs() < 1e-4);
    }

    #[test]
    fn strictly_increasing() {
        let mut prev = elliptic_k(0.0).unwrap();
        for i in 1..1000 {
            let k = i as f64 / 1000.0;
            let v = elliptic_k(k).unwrap();
            assert!(v > prev, "K not increasing at k = {k}");
            prev = v;
        }
    }

    #[test]
    fn legendre_relation_holds() {
        // K(1/√2) = Γ(1/4)² / (4 √π)
        let gamma_quarter = 3.625_609_908_221_908_f64;
        let expected = gamma_quarter * gamma_quarter / (4.0 * std::f64::consts::PI.sqrt());
        let k = elliptic_k(std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!((k - expected).abs() / expected < 1e-14);
    }
}
