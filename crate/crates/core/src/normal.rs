//! Univariate and bivariate standard normal distribution functions.
//!
//! The bivariate CDF follows Genz's `BVND` (Drezner–Wesolowsky with
//! Gauss–Legendre quadrature, plus the asymptotic expansion for |ρ| > 0.925).
//! The 20-point rule is used on every branch; absolute error is well below
//! 1e-14 over the whole plane.
#![allow(clippy::excessive_precision)]

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const FRAC_1_2PI: f64 = 1.0 / (2.0 * PI);
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

// (weight, abscissa) on [-1, 1]; symmetric halves.
const GL20: [(f64, f64); 10] = [
    (0.1761400713915212e-01, -0.9931285991850949e+00),
    (0.4060142980038694e-01, -0.9639719272779138e+00),
    (0.6267204833410906e-01, -0.9122344282513259e+00),
    (0.8327674157670475e-01, -0.8391169718222188e+00),
    (0.1019301198172404e+00, -0.7463319064601508e+00),
    (0.1181945319615184e+00, -0.6360536807265150e+00),
    (0.1316886384491766e+00, -0.5108670019508271e+00),
    (0.1420961093183821e+00, -0.3737060887154196e+00),
    (0.1491729864726037e+00, -0.2277858511416451e+00),
    (0.1527533871307259e+00, -0.7652652113349733e-01),
];

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`std_normal_cdf`]; returns ±∞ at 0 and 1.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    // one Newton step tidies the last couple of ulps in the central region
    let pdf = std_normal_pdf(x);
    if pdf > 1e-300 {
        let step = (std_normal_cdf(x) - p) / pdf;
        if step.is_finite() && step.abs() < 1e-6 {
            return x - step;
        }
    }
    x
}

pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

/// `P(X <= x, Y <= y)` for a standard bivariate normal with correlation `rho`.
///
/// Infinite arguments are accepted. Fails with [`Error::Domain`] unless
/// `|rho| < 1` and neither argument is NaN.
pub fn bivariate_normal_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(format!("correlation {rho} outside (-1, 1)")));
    }
    if x.is_nan() || y.is_nan() {
        return Err(Error::Domain("NaN argument to bivariate normal CDF".into()));
    }
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(std_normal_cdf(y));
    }
    if y == f64::INFINITY {
        return Ok(std_normal_cdf(x));
    }
    Ok(upper_orthant(-x, -y, rho).clamp(0.0, 1.0))
}

/// `P(X > h, Y > k)`; Genz's BVND.
fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
    let (h, mut k) = (h, k);
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r != 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in &GL20 {
                for sign in [-1.0, 1.0] {
                    let sn = (asr * (sign * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (4.0 * PI);
        }
        return bvn + std_normal_cdf(-h) * std_normal_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let as_ = (1.0 - r) * (1.0 + r);
    let mut a = as_.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    let asr = -(bs / as_ + hk) / 2.0;
    if asr > -100.0 {
        bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
    }
    if -hk < 100.0 {
        let b = bs.sqrt();
        bvn -= (-hk / 2.0).exp() * SQRT_2PI * std_normal_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for &(w, x) in &GL20 {
        for sign in [-1.0, 1.0] {
            let xs = (a * (sign * x + 1.0)).powi(2);
            let rs = (1.0 - xs).sqrt();
            let asr = -(bs / xs + hk) / 2.0;
            if asr > -100.0 {
                bvn += a
                    * w
                    * asr.exp()
                    * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
            }
        }
    }
    bvn = -bvn * FRAC_1_2PI;
    if r > 0.0 {
        bvn + std_normal_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            out += std_normal_cdf(k) - std_normal_cdf(h);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plackett's identity: Φ2(x,y;ρ) = Φ(x)Φ(y) + ∫_0^ρ φ2(x,y;t) dt, integrated
    /// with composite Simpson on a fine mesh.
    fn plackett(x: f64, y: f64, rho: f64) -> f64 {
        let dens = |t: f64| {
            let om = 1.0 - t * t;
            (-(x * x - 2.0 * t * x * y + y * y) / (2.0 * om)).exp() / (2.0 * PI * om.sqrt())
        };
        let n = 20_000;
        let h = rho / n as f64;
        let mut s = dens(0.0) + dens(rho);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * dens(i as f64 * h);
        }
        std_normal_cdf(x) * std_normal_cdf(y) + s * h / 3.0
    }

    #[test]
    fn origin_values() {
        assert!((bivariate_normal_cdf(0.0, 0.0, 0.0).unwrap() - 0.25).abs() < 1e-15);
        for rho in [-0.99f64, -0.95, -0.5, -0.1, 0.2, 0.5, 0.8, 0.93, 0.999] {
            let expected = 0.25 + rho.asin() / (2.0 * PI);
            let got = bivariate_normal_cdf(0.0, 0.0, rho).unwrap();
            assert!((got - expected).abs() < 1e-13, "rho={rho}: {got} vs {expected}");
        }
        let got = bivariate_normal_cdf(0.0, 0.0, 0.5).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn marginal_limit() {
        for y in [-3.0, -1.2, 0.0, 0.4, 2.5] {
            for rho in [-0.9, 0.0, 0.5, 0.97] {
                let got = bivariate_normal_cdf(8.0, y, rho).unwrap();
                assert!((got - std_normal_cdf(y)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn against_plackett_quadrature() {
        let pts = [-3.1, -1.7, -0.6, 0.0, 0.3, 1.1, 2.4];
        for &x in &pts {
            for &y in &pts {
                for rho in [-0.9, -0.6, -0.2, 0.15, 0.5, 0.7, 0.9] {
                    let got = bivariate_normal_cdf(x, y, rho).unwrap();
                    let want = plackett(x, y, rho);
                    assert!((got - want).abs() < 1e-11, "({x},{y},{rho}): {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn symmetry_and_domain() {
        let a = bivariate_normal_cdf(0.3, -1.2, 0.96).unwrap();
        let b = bivariate_normal_cdf(-1.2, 0.3, 0.96).unwrap();
        assert!((a - b).abs() < 1e-15);
        assert!(bivariate_normal_cdf(0.0, 0.0, 1.0).is_err());
        assert!(bivariate_normal_cdf(0.0, 0.0, -1.0).is_err());
        assert!(bivariate_normal_cdf(f64::NAN, 0.0, 0.0).is_err());
        assert_eq!(bivariate_normal_cdf(f64::NEG_INFINITY, 1.0, 0.3).unwrap(), 0.0);
        assert_eq!(bivariate_normal_cdf(f64::INFINITY, f64::INFINITY, 0.3).unwrap(), 1.0);
    }

    #[test]
    fn quantile_roundtrip() {
        for p in [1e-12, 1e-6, 0.01, 0.2, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = std_normal_quantile(p);
            assert!((std_normal_cdf(x) - p).abs() <= 1e-15 * p.max(1e-3), "p={p}");
        }
        assert_eq!(std_normal_quantile(0.5), 0.0);
        assert_eq!(std_normal_quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(std_normal_quantile(1.0), f64::INFINITY);
    }
}
