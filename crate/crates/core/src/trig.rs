//! Entire functions of `z = alpha^2` built from `cos(alpha h)` and
//! `sin(alpha h)`. They do not depend on the sign of `alpha`, which is what
//! makes the determinant sign-invariant.

use num_complex::Complex64;

/// Below this value of `|z h^2|` the Taylor series in `x = z h^2` is used.
pub(crate) const SERIES_SWITCH: f64 = 1.0;

const TERMS: usize = 14;

/// Value and first two `z`-derivatives of a function of `z`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct D2 {
    pub f: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
}

/// `cos(sqrt(z) h)`, `sin(sqrt(z) h)/sqrt(z)` and `sqrt(z) sin(sqrt(z) h)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerTrig {
    pub c: D2,
    pub s0: D2,
    pub s1: D2,
}

fn series(x: Complex64, coeff: impl Fn(usize) -> f64) -> (Complex64, Complex64, Complex64) {
    let mut f = Complex64::new(0.0, 0.0);
    let mut d1 = Complex64::new(0.0, 0.0);
    let mut d2 = Complex64::new(0.0, 0.0);
    // Horner evaluation of the three sums
    for n in (0..TERMS).rev() {
        let a = coeff(n);
        f = f * x + a;
        if n >= 1 {
            d1 = d1 * x + a * n as f64;
        }
        if n >= 2 {
            d2 = d2 * x + a * (n * (n - 1)) as f64;
        }
    }
    (f, d1, d2)
}

fn inv_factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc / i as f64)
}

pub(crate) fn layer_trig(z: Complex64, h: f64) -> LayerTrig {
    let h2 = h * h;
    let x = z * h2;
    let (c, s0) = if x.norm() < SERIES_SWITCH {
        let sgn = |n: usize| if n % 2 == 0 { 1.0 } else { -1.0 };
        let (fc, fc1, fc2) = series(x, |n| sgn(n) * inv_factorial(2 * n));
        let (fs, fs1, fs2) = series(x, |n| sgn(n) * inv_factorial(2 * n + 1));
        (
            D2 { f: fc, d1: fc1 * h2, d2: fc2 * h2 * h2 },
            D2 { f: fs * h, d1: fs1 * h * h2, d2: fs2 * h * h2 * h2 },
        )
    } else {
        let r = crate::medium::principal_sqrt(z);
        let cf = (r * h).cos();
        let s0f = (r * h).sin() / r;
        let c1 = -0.5 * h * s0f;
        let s01 = (h * cf - s0f) / (2.0 * z);
        let c2 = -0.5 * h * s01;
        let s02 = (h * c1 - 3.0 * s01) / (2.0 * z);
        (D2 { f: cf, d1: c1, d2: c2 }, D2 { f: s0f, d1: s01, d2: s02 })
    };
    let s1 = D2 { f: z * s0.f, d1: s0.f + z * s0.d1, d2: 2.0 * s0.d1 + z * s0.d2 };
    LayerTrig { c, s0, s1 }
}

/// `sin(x)/x`, entire.
pub(crate) fn sinc(x: Complex64) -> Complex64 {
    if x.norm() < 0.5 {
        let x2 = x * x;
        let (f, _, _) = series(-x2, |n| inv_factorial(2 * n + 1));
        f
    } else {
        x.sin() / x
    }
}
