//! Second-order Taylor jets in the two variables `(W, K)`.
//!
//! Arithmetic on jets propagates value, gradient and Hessian exactly, which
//! gives noise-free partial derivatives of the determinant for the Newton
//! systems.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: Complex64,
    pub w: Complex64,
    pub k: Complex64,
    pub ww: Complex64,
    pub wk: Complex64,
    pub kk: Complex64,
}

impl Jet {
    pub fn constant(v: Complex64) -> Self {
        Jet { v, ..Default::default() }
    }

    pub fn real(v: f64) -> Self {
        Self::constant(Complex64::new(v, 0.0))
    }

    /// A function affine in `(W, K)`: `v + a W' + b K'`.
    pub fn affine(v: Complex64, a: f64, b: f64) -> Self {
        Jet { v, w: a.into(), k: b.into(), ..Default::default() }
    }

    /// Compose a scalar function `f` (value and two derivatives) with `self`.
    pub fn compose(&self, f: Complex64, df: Complex64, d2f: Complex64) -> Self {
        Jet {
            v: f,
            w: df * self.w,
            k: df * self.k,
            ww: d2f * self.w * self.w + df * self.ww,
            wk: d2f * self.w * self.k + df * self.wk,
            kk: d2f * self.k * self.k + df * self.kk,
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Jet {
            v: self.v * s,
            w: self.w * s,
            k: self.k * s,
            ww: self.ww * s,
            wk: self.wk * s,
            kk: self.kk * s,
        }
    }

    pub fn conj(&self) -> Self {
        Jet {
            v: self.v.conj(),
            w: self.w.conj(),
            k: self.k.conj(),
            ww: self.ww.conj(),
            wk: self.wk.conj(),
            kk: self.kk.conj(),
        }
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::real(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            w: self.w + o.w,
            k: self.k + o.k,
            ww: self.ww + o.ww,
            wk: self.wk + o.wk,
            kk: self.kk + o.kk,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(Complex64::new(-1.0, 0.0))
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            w: self.w * o.v + self.v * o.w,
            k: self.k * o.v + self.v * o.k,
            ww: self.ww * o.v + 2.0 * self.w * o.w + self.v * o.ww,
            wk: self.wk * o.v + self.w * o.k + self.k * o.w + self.v * o.wk,
            kk: self.kk * o.v + 2.0 * self.k * o.k + self.v * o.kk,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(Complex64::new(s, 0.0))
    }
}

/// Determinant of a 4x4 matrix of jets by Laplace expansion along the
/// first two rows.
pub fn det4(m: &[[Jet; 4]; 4]) -> Jet {
    const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let minor = |r0: usize, r1: usize, a: usize, b: usize| m[r0][a] * m[r1][b] - m[r0][b] * m[r1][a];
    let mut acc = Jet::default();
    for &(a, b) in PAIRS.iter() {
        // complementary columns
        let rest: Vec<usize> = (0..4).filter(|&c| c != a && c != b).collect();
        let (c, d) = (rest[0], rest[1]);
        let sign = if (a + b + 1) % 2 == 0 { 1.0 } else { -1.0 };
        acc = acc + minor(0, 1, a, b) * minor(2, 3, c, d) * sign;
    }
    acc
}

/// Plain complex 4x4 determinant, same expansion as [`det4`].
pub fn det4_c(m: &[[Complex64; 4]; 4]) -> Complex64 {
    let mut j = [[Jet::default(); 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            j[r][c] = Jet::constant(m[r][c]);
        }
    }
    det4(&j).v
}
