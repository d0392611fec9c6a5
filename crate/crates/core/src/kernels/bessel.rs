//! Modified Bessel function of the second kind, `K_nu(x)`, for real order.
//!
//! The order is split as `nu = mu + n` with `|mu| <= 1/2`. `K_mu` and
//! `K_{mu+1}` come from Temme's series for `x < 2` and from Steed's continued
//! fraction (CF2) for `x >= 2`; forward recurrence then lifts the order to
//! `nu`. Forward recurrence is stable for `K`. Values are carried as
//! exponentially scaled quantities with a separate power-of-ten exponent so
//! that very small `x` or large `nu` do not overflow internally.

use std::f64::consts::{LN_10, PI};

use crate::error::{domain, Result};

// Chebyshev coefficients for the Temme gamma helpers on [-1, 1]
// (the standard GSL tables).
const G1_COEFFS: [f64; 14] = [
    -1.145_164_083_662_683,
    0.006_360_853_113_470_843,
    0.001_862_451_930_072_068_5,
    0.000_152_833_085_873_453_5,
    0.000_017_017_464_011_802_04,
    -6.459_750_292_334_725e-7,
    -5.181_984_843_251_938e-8,
    4.518_909_289_485_818e-10,
    3.243_322_737_102_087e-11,
    6.830_943_402_494_752e-13,
    2.835_350_275_517_21e-14,
    -7.988_390_576_932_359e-16,
    -3.372_667_730_077_195e-17,
    -3.658_633_480_921_052e-20,
];

const G2_COEFFS: [f64; 15] = [
    1.882_645_524_949_671_8,
    -0.077_490_658_396_167_52,
    -0.018_256_714_847_324_93,
    0.000_633_803_020_907_489_6,
    0.000_076_229_054_350_872_9,
    -9.550_164_756_172_044e-7,
    -8.892_726_810_788_635e-8,
    -1.952_133_477_231_961_4e-9,
    -9.400_305_273_588_516e-11,
    4.687_513_384_953_239e-12,
    2.265_853_574_692_576e-13,
    -1.172_550_969_848_801_5e-15,
    -7.044_133_820_024_522e-17,
    -2.437_787_831_010_769_4e-18,
    -7.522_524_321_825_39e-20,
];

const MAX_SERIES_TERMS: usize = 15_000;
const MAX_CF_TERMS: usize = 10_000;

/// Result of a Bessel evaluation.
///
/// `saturated` is set when `K_nu(x)` exceeds the largest finite `f64`; the
/// value is then `f64::MAX`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselK {
    pub value: f64,
    pub saturated: bool,
}

/// `K_nu(x)` for `nu > 0`, `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> Result<BesselK> {
    let ln_k = ln_bessel_k(nu, x)?;
    if ln_k > f64::MAX.ln() {
        return Ok(BesselK {
            value: f64::MAX,
            saturated: true,
        });
    }
    Ok(BesselK {
        value: ln_k.exp(),
        saturated: false,
    })
}

/// Natural logarithm of `K_nu(x)`. Never overflows.
pub fn ln_bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(nu.is_finite() && nu >= 0.0) {
        return domain(format!(
            "Bessel order must be finite and nonnegative, got {nu}"
        ));
    }
    if !(x.is_finite() && x > 0.0) {
        return domain(format!(
            "Bessel argument must be finite and positive, got {x}"
        ));
    }
    let (scaled, e10) = k_scaled_e10(nu, x);
    Ok(scaled.ln() + e10 as f64 * LN_10 - x)
}

/// `exp(x) K_nu(x) = scaled * 10^e10`.
fn k_scaled_e10(nu: f64, x: f64) -> (f64, i32) {
    let n = (nu + 0.5).floor() as usize;
    let mu = nu - n as f64;

    let (k_mu, k_mu_p1) = if x < 2.0 {
        temme_series(mu, x)
    } else {
        steed_cf2(mu, x)
    };

    let mut e10 = 0i32;
    let mut k_cur = k_mu;
    let mut k_next = k_mu_p1;
    let rescale_at = f64::MAX.sqrt();
    for i in 0..n {
        let mut k_prev = k_cur;
        k_cur = k_next;
        if k_cur.abs() > rescale_at {
            let p = (k_cur.abs().ln() / LN_10).floor();
            let factor = 10f64.powf(p);
            k_prev /= factor;
            k_cur /= factor;
            e10 += p as i32;
        }
        k_next = 2.0 * (mu + i as f64 + 1.0) / x * k_cur + k_prev;
    }
    (k_cur, e10)
}

fn chebyshev(coeffs: &[f64], x: f64) -> f64 {
    let y2 = 2.0 * x;
    let mut d = 0.0;
    let mut dd = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let tmp = d;
        d = y2 * d - dd + c;
        dd = tmp;
    }
    x * d - dd + 0.5 * coeffs[0]
}

/// Returns `(1/Gamma(1+mu), 1/Gamma(1-mu), g1, g2)` for `|mu| <= 1/2`.
fn temme_gamma(mu: f64) -> (f64, f64, f64, f64) {
    let t = 4.0 * mu.abs() - 1.0;
    let g1 = chebyshev(&G1_COEFFS, t);
    let g2 = chebyshev(&G2_COEFFS, t);
    let inv_gamma_1pmu = 1.0 / (g2 - mu * g1);
    let inv_gamma_1mmu = 1.0 / (g2 + mu * g1);
    (inv_gamma_1pmu, inv_gamma_1mmu, g1, g2)
}

/// Scaled `(K_mu, K_{mu+1})` by Temme's series, valid for `x < 2`.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let half_x = 0.5 * x;
    let ln_half_x = half_x.ln();
    let half_x_mu = (mu * ln_half_x).exp();
    let pi_mu = PI * mu;
    let sigma = -mu * ln_half_x;
    let sinrat = if pi_mu.abs() < f64::EPSILON {
        1.0
    } else {
        pi_mu / pi_mu.sin()
    };
    let sinhrat = if sigma.abs() < f64::EPSILON {
        1.0
    } else {
        sigma.sinh() / sigma
    };
    let (inv_g1p, inv_g1m, g1, g2) = temme_gamma(mu);

    let mut fk = sinrat * (sigma.cosh() * g1 - sinhrat * ln_half_x * g2);
    let mut pk = 0.5 / half_x_mu * inv_g1p;
    let mut qk = 0.5 * half_x_mu * inv_g1m;
    let mut ck = 1.0;
    let mut sum0 = fk;
    let mut sum1 = pk;
    for k in 1..=MAX_SERIES_TERMS {
        let kf = k as f64;
        fk = (kf * fk + pk + qk) / (kf * kf - mu * mu);
        ck *= half_x * half_x / kf;
        pk /= kf - mu;
        qk /= kf + mu;
        let hk = -kf * fk + pk;
        let del0 = ck * fk;
        sum0 += del0;
        sum1 += ck * hk;
        if del0.abs() < 0.5 * sum0.abs() * f64::EPSILON {
            break;
        }
    }
    let ex = x.exp();
    (sum0 * ex, sum1 * 2.0 / x * ex)
}

/// Scaled `(K_mu, K_{mu+1})` by Steed's method for the continued fraction
/// CF2, valid for `x >= 2`.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let mut bi = 2.0 * (1.0 + x);
    let mut di = 1.0 / bi;
    let mut delhi = di;
    let mut hi = di;
    let mut qi = 0.0;
    let mut qip1 = 1.0;
    let mut ai = -(0.25 - mu * mu);
    let a1 = ai;
    let mut ci = -ai;
    let mut bqi = -ai;
    let mut s = 1.0 + bqi * delhi;

    for i in 2..=MAX_CF_TERMS {
        ai -= 2.0 * (i - 1) as f64;
        ci = -ai * ci / i as f64;
        let tmp = (qi - bi * qip1) / ai;
        qi = qip1;
        qip1 = tmp;
        bqi += ci * qip1;
        bi += 2.0;
        di = 1.0 / (bi + ai * di);
        delhi *= bi * di - 1.0;
        hi += delhi;
        let dels = bqi * delhi;
        s += dels;
        if (dels / s).abs() < f64::EPSILON {
            break;
        }
    }
    hi *= -a1;

    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mu_p1 = k_mu * (mu + x + 0.5 - hi) / x;
    (k_mu, k_mu_p1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`. The integrand decays
    /// doubly exponentially, so a plain trapezoid rule converges geometrically.
    fn integral_oracle(nu: f64, x: f64) -> f64 {
        let h: f64 = 1.0 / 256.0;
        let mut sum = 0.5 * (-x).exp();
        let mut t = h;
        loop {
            let term = (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
            sum += term;
            if term < 1e-300 || t > 60.0 {
                break;
            }
            t += h;
        }
        sum * h
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn half_order_closed_form() {
        let v = bessel_k(0.5, 1.0).unwrap().value;
        assert!(rel(v, (PI / 2.0).sqrt() * (-1.0f64).exp()) < 1e-14);
        assert!((v - 0.461_068_50).abs() < 1e-8);
    }

    #[test]
    fn three_halves_closed_form() {
        let v = bessel_k(1.5, 2.0).unwrap().value;
        let expect = (PI / 4.0).sqrt() * (-2.0f64).exp() * 1.5;
        assert!(rel(v, expect) < 1e-14, "{v} vs {expect}");
    }

    #[test]
    fn matches_integral_representation_across_crossover() {
        for &nu in &[0.1, 0.5, 0.77, 1.0, 1.3, 2.0, 2.5, 3.7, 6.2] {
            for &x in &[0.05, 0.5, 1.0, 1.9, 1.999, 2.0, 2.001, 2.5, 5.0, 12.0, 30.0] {
                let got = bessel_k(nu, x).unwrap().value;
                let want = integral_oracle(nu, x);
                assert!(rel(got, want) < 1e-12, "nu={nu} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn continuous_at_crossover() {
        for &nu in &[0.3, 1.0, 2.4] {
            let below = bessel_k(nu, 2.0 - 1e-12).unwrap().value;
            let at = bessel_k(nu, 2.0).unwrap().value;
            assert!(rel(below, at) < 1e-10);
        }
    }

    #[test]
    fn decreasing_and_decaying() {
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let x = 0.01 + 0.1 * i as f64;
            let v = bessel_k(1.3, x).unwrap().value;
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn rejects_bad_argument() {
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(1.0, -1.0).is_err());
        assert!(bessel_k(1.0, f64::NAN).is_err());
    }

    #[test]
    fn saturates_instead_of_overflowing() {
        let k = bessel_k(200.0, 1e-3).unwrap();
        assert!(k.saturated);
        assert_eq!(k.value, f64::MAX);
        let ln = ln_bessel_k(200.0, 1e-3).unwrap();
        assert!(ln.is_finite() && ln > 700.0);
    }
}
