//! Special functions not covered by `libm`: the Airy function Ai and Jacobi
//! theta functions with characteristics.

use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

/// Magnitude of the first zero of Ai.
pub const AIRY_FIRST_ZERO: f64 = 2.338_107_410_459_767;

const AI_0: f64 = 0.355_028_053_887_817_2;
const AIP_0: f64 = 0.258_819_403_792_806_8;
const SERIES_LIMIT: f64 = 5.5;

/// Airy function Ai(x) for x ≥ −8.
///
/// Maclaurin series below `SERIES_LIMIT`, asymptotic expansion above it.
/// Relative accuracy ~1e−8 near the switch point, better elsewhere.
pub fn airy_ai(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        airy_ai_asymptotic(x)
    } else {
        airy_ai_series(x)
    }
}

fn airy_ai_series(x: f64) -> f64 {
    let x3 = x * x * x;
    let (mut f, mut g) = (1.0, x);
    let (mut tf, mut tg) = (1.0, x);
    for k in 1..200 {
        let k3 = 3.0 * k as f64;
        tf *= x3 / ((k3 - 1.0) * k3);
        tg *= x3 / (k3 * (k3 + 1.0));
        f += tf;
        g += tg;
        if tf.abs() < 1e-18 * f.abs().max(1e-300) && tg.abs() < 1e-18 * g.abs().max(1e-300) {
            break;
        }
    }
    AI_0 * f - AIP_0 * g
}

fn airy_ai_asymptotic(x: f64) -> f64 {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let mut sum = 1.0;
    let mut u = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..40 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        let term = u / zeta.powi(k);
        if term >= last {
            break;
        }
        sum += if k % 2 == 1 { -term } else { term };
        if term < 1e-17 {
            break;
        }
        last = term;
    }
    (-zeta).exp() / (2.0 * PI.sqrt() * x.powf(0.25)) * sum
}

/// A complex number stored as `exp(log_scale) * mantissa`, for sums whose
/// terms overflow f64.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub log_scale: f64,
    pub mantissa: Complex64,
}

impl Scaled {
    pub fn times(self, other: Scaled) -> Scaled {
        Scaled {
            log_scale: self.log_scale + other.log_scale,
            mantissa: self.mantissa * other.mantissa,
        }
    }

    pub fn plus(self, other: Scaled) -> Scaled {
        let m = self.log_scale.max(other.log_scale);
        Scaled {
            log_scale: m,
            mantissa: self.mantissa * (self.log_scale - m).exp() + other.mantissa * (other.log_scale - m).exp(),
        }
    }

    /// self / other as an ordinary complex number.
    pub fn ratio(self, other: Scaled) -> Complex64 {
        self.mantissa / other.mantissa * (self.log_scale - other.log_scale).exp()
    }
}

/// Jacobi theta function with characteristics for purely imaginary τ = i·`tau_im`:
/// θ[a; b](z, τ) = Σ_n exp(iπτ(n+a)² + 2πi(z+b)(n+a)).
///
/// Terms are summed outward from the dominant index until they fall below
/// 1e−17 of the running sum.
pub fn theta_char(a: f64, b: f64, z: Complex64, tau_im: f64) -> Scaled {
    assert!(tau_im > 0.0, "theta series needs Im τ > 0");
    // Real exponent: −π τ_im (n+a)² − 2π Im z (n+a); peak at n + a = −Im z / τ_im.
    let centre = (-z.im / tau_im - a).round();
    let exponent = |n: f64| {
        let na = n + a;
        Complex64::new(-PI * tau_im * na * na, 0.0) + Complex64::new(0.0, 2.0 * PI) * (z + b) * na
    };
    let peak = exponent(centre).re;
    let mut sum = (exponent(centre) - peak).exp();
    for side in [-1.0, 1.0] {
        let mut step = 1.0;
        loop {
            let t = (exponent(centre + side * step) - peak).exp();
            sum += t;
            if t.norm() < 1e-17 * sum.norm().max(1e-300) || step > 10_000.0 {
                break;
            }
            step += 1.0;
        }
    }
    Scaled {
        log_scale: peak,
        mantissa: sum,
    }
}
