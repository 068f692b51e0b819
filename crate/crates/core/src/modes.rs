//! Transverse mode profiles, their bilinear forms and excitation amplitudes.
//!
//! A profile is
//!
//! ```text
//! u(y) = A cos(alpha_1 y)                                          0 < y < H1
//!        P cos(alpha_2 (y - H1)) + Q sin(alpha_2 (y - H1))/alpha_2  H1 < y < H2
//!        F cos(alpha_3 (y - H3))                                   H2 < y < H3
//! ```
//!
//! with `P = u(H1+)` and `Q = u'(H1+)`. The values `u(H2-)`, `u'(H2-)` are
//! kept as well: when the middle layer is evanescent, continuing `(P, Q)`
//! across it loses digits, so evaluation and integrals there work from the
//! nearer interface. Every basis function is entire in `alpha_j^2`, so
//! nothing depends on the root branches. [`ModeProfile::literal`] converts
//! to the coefficients `(A, B, C, F)` of the `sin(alpha_2 y), cos(alpha_2 y)`
//! basis.

use num_complex::Complex64;

use crate::dispersion::{alphas, regular_values, DispersionMatrix, MatrixKind};
use crate::error::{Error, Result};
use crate::medium::{principal_sqrt, LayerStack, LinkingParams};
use crate::trig::{layer_trig, sinc, LayerTrig};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A mode `u(y)` at the spectral point `(omega, k)` of the waveguide with
/// linking parameters `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProfile {
    pub omega: Complex64,
    pub k: Complex64,
    pub eps: LinkingParams,
    /// `[A, P, Q, F]`.
    pub coeffs: [Complex64; 4],
    /// `[u(H2-), u'(H2-)]`.
    pub upper: [Complex64; 2],
    pub stack: LayerStack,
}

/// Weight function of an inner product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    Rho,
    RhoOverC2,
}

impl ModeProfile {
    pub fn w(&self) -> Complex64 {
        self.omega * self.omega
    }

    pub fn kk(&self) -> Complex64 {
        self.k * self.k
    }

    /// `alpha_j^2` per layer.
    pub fn radicands(&self) -> [Complex64; 3] {
        [0, 1, 2].map(|j| self.stack.radicand(self.w(), self.kk(), j))
    }

    /// Coefficients `(A, B, C, F)` of the literal basis, using principal roots.
    pub fn literal(&self) -> [Complex64; 4] {
        let [a, p, q, f] = self.coeffs;
        let a2 = alphas(self.w(), self.kk(), &self.stack)[1];
        let x = a2 * self.stack.h1_top;
        let (s, c) = (x.sin(), x.cos());
        let q_over = if a2 == ZERO { ZERO } else { q / a2 };
        [a, p * s + q_over * c, p * c - q_over * s, f]
    }

    /// `max |D v| / (max |D| max |v|)` for the literal coefficient vector
    /// against the literal matrix of the profile's waveguide.
    pub fn null_residual(&self) -> f64 {
        let m = DispersionMatrix::build(MatrixKind::Combined, self.w(), self.kk(), self.eps, &self.stack);
        let v = self.literal();
        let r = m.apply(&v);
        let rn = r.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let vn = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        rn / (m.max_abs() * vn)
    }

    /// Complex conjugate profile: `conj(u(y))`.
    pub fn conj(&self) -> ModeProfile {
        ModeProfile {
            omega: self.omega.conj(),
            k: self.k.conj(),
            eps: self.eps.conj(),
            coeffs: self.coeffs.map(|c| c.conj()),
            upper: self.upper.map(|c| c.conj()),
            stack: self.stack,
        }
    }

    /// `u(H1-), u(H1+), u(H2-), u(H2+)`.
    pub fn interface_values(&self) -> [Complex64; 4] {
        let t = trigs(self);
        let [a, p, _, f] = self.coeffs;
        [a * t[0].c.f, p, self.upper[0], f * t[2].c.f]
    }

    /// `u'(H1-), u'(H1+), u'(H2-), u'(H2+)`.
    pub fn interface_slopes(&self) -> [Complex64; 4] {
        let t = trigs(self);
        let [a, _, q, f] = self.coeffs;
        [-a * t[0].s1.f, q, self.upper[1], f * t[2].s1.f]
    }
}

fn trigs(p: &ModeProfile) -> [LayerTrig; 3] {
    let h = p.stack.thicknesses();
    let z = p.radicands();
    [0, 1, 2].map(|j| layer_trig(z[j], h[j]))
}

/// Largest column of the adjugate of the regular matrix.
fn null_vector(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> Result<[Complex64; 4]> {
    let m = regular_values(w, kk, eps, stack);
    let mut best = [ZERO; 4];
    let mut best_norm = -1.0;
    for row in 0..4 {
        // cofactors of `row` form a null vector when rank(M) = 3
        let mut v = [ZERO; 4];
        for col in 0..4 {
            let rows: Vec<usize> = (0..4).filter(|&r| r != row).collect();
            let cols: Vec<usize> = (0..4).filter(|&c| c != col).collect();
            let g = |i: usize, j: usize| m[rows[i]][cols[j]];
            let det3 = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1))
                - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
            let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
            v[col] = det3 * sign;
        }
        let n = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if n > best_norm {
            best_norm = n;
            best = v;
        }
    }
    if !(best_norm > 0.0) || !best_norm.is_finite() {
        return Err(Error::SingularMinor);
    }
    Ok(best)
}

/// Shoot from both walls and match across the middle layer, carrying the
/// data in the direction that loses fewer digits.
fn shoot(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> Result<([Complex64; 4], [Complex64; 2])> {
    let h = stack.thicknesses();
    let [r1, r2, r3] = stack.densities();
    let t = [0, 1, 2].map(|j| layer_trig(stack.radicand(w, kk, j), h[j]));
    let (u1, d1) = (t[0].c.f, -t[0].s1.f);
    let (u3, d3) = (t[2].c.f, t[2].s1.f);
    let ((p, q), (r, s)) = match eps {
        LinkingParams::Infinite => ((r1 * u1 / r2, d1), (r3 * u3 / r2, d3)),
        LinkingParams::Finite { eps1, eps2 } => {
            if eps1 == ZERO || eps2 == ZERO {
                return Err(Error::SingularMinor);
            }
            (((r1 * u1 + d1 / eps1) / r2, d1), ((r3 * u3 - d3 / eps2) / r2, d3))
        }
    };
    let (c2, s0, s1) = (t[1].c.f, t[1].s0.f, t[1].s1.f);
    // slopes are weighted by a length so that both rows compare
    let len = 1.0 / principal_sqrt(stack.radicand(w, kk, 1)).norm().max(1.0 / h[1]);
    let n2 = |x: Complex64, y: Complex64| x.norm() + len * y.norm();
    // bottom data carried up, or top data carried down
    let up = (p * c2 + q * s0, -p * s1 + q * c2);
    let down = (r * c2 - s * s0, r * s1 + s * c2);
    let keep_up = n2(up.0, up.1) / (n2(p * c2, -p * s1) + n2(q * s0, q * c2));
    let keep_down = n2(down.0, down.1) / (n2(r * c2, r * s1) + n2(s * s0, s * c2));
    let (a, f) = if keep_up >= keep_down {
        // A up = F (r, s)
        if up.0.norm() >= len * up.1.norm() {
            (r, up.0)
        } else {
            (s, up.1)
        }
    } else if p.norm() >= len * q.norm() {
        // A (p, q) = F down
        (down.0, p)
    } else {
        (down.1, q)
    };
    if !(a.is_finite() && f.is_finite()) || (a == ZERO && f == ZERO) {
        return Err(Error::SingularMinor);
    }
    let (a, f) = if f != ZERO { (a / f, ONE) } else { (ONE, ZERO) };
    Ok(([a, a * p, a * q, f], [f * r, f * s]))
}

fn from_null_vector(v: [Complex64; 4], w: Complex64, kk: Complex64, stack: &LayerStack) -> ([Complex64; 4], [Complex64; 2]) {
    let t = layer_trig(stack.radicand(w, kk, 1), stack.thicknesses()[1]);
    let (p, q) = (v[1], v[2]);
    (v, [p * t.c.f + q * t.s0.f, -p * t.s1.f + q * t.c.f])
}

/// Mode of the ideal waveguide at a root `(omega, k)`, normalised to `F = 1`
/// (or `A = 1` if the mode vanishes in the top layer).
pub fn solve_coefficients(omega: Complex64, k: Complex64, stack: &LayerStack) -> Result<ModeProfile> {
    let (coeffs, upper) = shoot(omega * omega, k * k, LinkingParams::Infinite, stack)?;
    Ok(ModeProfile { omega, k, eps: LinkingParams::Infinite, coeffs, upper, stack: *stack })
}

/// Mode of the waveguide with linking parameters `eps` at a root `(W, K)`.
/// A decoupled interface (`eps = 0`) falls back to the null vector of the
/// regular matrix.
pub fn solve_coefficients_eps(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> Result<ModeProfile> {
    let (coeffs, upper) = match shoot(w, kk, eps, stack) {
        Ok(x) => x,
        Err(_) => {
            let v = null_vector(w, kk, eps, stack)?;
            let big = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let norm = if v[3].norm() >= 1e-8 * big { v[3] } else { v[0] };
            if norm == ZERO {
                return Err(Error::SingularMinor);
            }
            from_null_vector(v.map(|x| x / norm), w, kk, stack)
        }
    };
    Ok(ModeProfile { omega: principal_sqrt(w), k: principal_sqrt(kk), eps, coeffs, upper, stack: *stack })
}

/// Middle-layer value and slope at offset `t` from `H1`, continued from
/// whichever interface is closer.
fn middle(p: &ModeProfile, z: Complex64, t: f64) -> (Complex64, Complex64) {
    let h = p.stack.thicknesses()[1];
    let (a, b, s) = if t <= 0.5 * h {
        (p.coeffs[1], p.coeffs[2], t)
    } else {
        (p.upper[0], p.upper[1], t - h)
    };
    let tr = layer_trig(z, s);
    (a * tr.c.f + b * tr.s0.f, -a * tr.s1.f + b * tr.c.f)
}

/// Profile value at `y`.
pub fn eval_profile(p: &ModeProfile, y: f64) -> Result<Complex64> {
    let layer = p.stack.layer_at(y)?;
    let z = p.radicands();
    let [a, _, _, f] = p.coeffs;
    Ok(match layer {
        0 => a * layer_trig(z[0], y).c.f,
        1 => middle(p, z[1], y - p.stack.h1_top).0,
        _ => f * layer_trig(z[2], y - p.stack.h3_top).c.f,
    })
}

/// Profile derivative `u'(y)`.
pub fn eval_profile_slope(p: &ModeProfile, y: f64) -> Result<Complex64> {
    let layer = p.stack.layer_at(y)?;
    let z = p.radicands();
    let [a, _, _, f] = p.coeffs;
    Ok(match layer {
        0 => -a * layer_trig(z[0], y).s1.f,
        1 => middle(p, z[1], y - p.stack.h1_top).1,
        _ => -f * layer_trig(z[2], y - p.stack.h3_top).s1.f,
    })
}

fn well_separated(z1: Complex64, z2: Complex64, h: f64) -> bool {
    let h2 = h * h;
    let big = (z1 * h2).norm().max((z2 * h2).norm()).max(1.0);
    ((z2 - z1) * h2).norm() >= 1e-3 * big
}

/// Integrals over `[0, h]` of products of `c(z, t) = cos(sqrt(z) t)` and
/// `s(z, t) = sin(sqrt(z) t)/sqrt(z)`: `[cc, cs, sc, ss]`, first factor at
/// `z1`, second at `z2`.
pub(crate) fn basis_integrals(z1: Complex64, z2: Complex64, h: f64) -> [Complex64; 4] {
    let h2 = h * h;
    let (x1, x2) = (z1 * h2, z2 * h2);
    if x1.norm() < 1.0 && x2.norm() < 1.0 {
        return series_integrals(x1, x2, h);
    }
    let dz = z2 - z1;
    if well_separated(z1, z2, h) {
        let t1 = layer_trig(z1, h);
        let t2 = layer_trig(z2, h);
        let (c1, s1, c2, s2) = (t1.c.f, t1.s0.f, t2.c.f, t2.s0.f);
        return [
            (z2 * c1 * s2 - z1 * s1 * c2) / dz,
            (ONE - c1 * c2 - z1 * s1 * s2) / dz,
            (c1 * c2 + z2 * s1 * s2 - ONE) / dz,
            (c1 * s2 - s1 * c2) / dz,
        ];
    }
    // nearly equal and away from zero: use the roots directly
    let (a, b) = near_roots(z1, z2);
    let cint = |s: Complex64| h * sinc(s * h);
    let sint = |s: Complex64| {
        let q = sinc(s * (0.5 * h));
        s * (0.5 * h2) * q * q
    };
    let (cm, cp) = (cint(a - b), cint(a + b));
    let (sm, sp) = (sint(a - b), sint(a + b));
    [0.5 * (cm + cp), (sp - sm) / (2.0 * b), (sp + sm) / (2.0 * a), (cm - cp) / (2.0 * a * b)]
}

/// `sqrt(z1)` and the root of `z2` nearest to it.
fn near_roots(z1: Complex64, z2: Complex64) -> (Complex64, Complex64) {
    let a = principal_sqrt(z1);
    let b0 = principal_sqrt(z2);
    (a, if (a - b0).norm() <= (a + b0).norm() { b0 } else { -b0 })
}

/// `int_0^h s(z1, h - t) s(z2, t) dt` for nearly equal `z1, z2` away from zero.
fn convolution_near(z1: Complex64, z2: Complex64, h: f64) -> Complex64 {
    let (a, b) = near_roots(z1, z2);
    let (sp, sm) = ((a + b) * (0.5 * h), (a - b) * (0.5 * h));
    0.5 * h * (sinc(sp) * sm.cos() - sp.cos() * sinc(sm)) / (a * b)
}

fn series_integrals(x1: Complex64, x2: Complex64, h: f64) -> [Complex64; 4] {
    const N: usize = 16;
    let mut al = [[ZERO; N]; 2];
    let mut be = [[ZERO; N]; 2];
    for (idx, x) in [x1, x2].into_iter().enumerate() {
        let mut pw = ONE;
        let mut fact_even = 1.0;
        let mut fact_odd = 1.0;
        for i in 0..N {
            if i > 0 {
                pw *= -x;
                fact_even *= ((2 * i - 1) * (2 * i)) as f64;
                fact_odd *= ((2 * i) * (2 * i + 1)) as f64;
            }
            al[idx][i] = pw / fact_even;
            be[idx][i] = pw / fact_odd;
        }
    }
    let mut out = [ZERO; 4];
    for i in 0..N {
        for j in 0..N {
            let p = (2 * i + 2 * j) as f64;
            out[0] += al[0][i] * al[1][j] / (p + 1.0);
            out[1] += al[0][i] * be[1][j] / (p + 2.0);
            out[2] += be[0][i] * al[1][j] / (p + 2.0);
            out[3] += be[0][i] * be[1][j] / (p + 3.0);
        }
    }
    [out[0] * h, out[1] * h * h, out[2] * h * h, out[3] * h * h * h]
}

/// `int u1 u2` over the middle layer.
fn middle_integral(p1: &ModeProfile, p2: &ModeProfile, z1: Complex64, z2: Complex64) -> Complex64 {
    let h = p1.stack.thicknesses()[1];
    let (lo1, lo2) = ((p1.coeffs[1], p1.coeffs[2]), (p2.coeffs[1], p2.coeffs[2]));
    let (hi1, hi2) = ((p1.upper[0], p1.upper[1]), (p2.upper[0], p2.upper[1]));
    if well_separated(z1, z2, h) {
        // Lagrange identity with the interface data
        let wr = |a: (Complex64, Complex64), b: (Complex64, Complex64)| a.1 * b.0 - a.0 * b.1;
        return (wr(hi1, hi2) - wr(lo1, lo2)) / (z2 - z1);
    }
    let decay = |z: Complex64| principal_sqrt(z).im.abs() * h;
    let small = (z1 * h * h).norm() < 1.0 && (z2 * h * h).norm() < 1.0;
    if small || decay(z1).max(decay(z2)) <= 1.0 {
        let j = basis_integrals(z1, z2, h);
        return lo1.0 * lo2.0 * j[0] + lo1.0 * lo2.1 * j[1] + lo1.1 * lo2.0 * j[2] + lo1.1 * lo2.1 * j[3];
    }
    // evanescent: basis decaying away from either interface,
    // phi(t) = s(h - t)/s(h), psi(t) = s(t)/s(h)
    let sh1 = layer_trig(z1, h).s0.f;
    let sh2 = layer_trig(z2, h).s0.f;
    let norm = sh1 * sh2;
    let same = basis_integrals(z1, z2, h)[3] / norm;
    let cross = convolution_near(z1, z2, h) / norm;
    let (a1, b1, a2, b2) = (lo1.0, hi1.0, lo2.0, hi2.0);
    (a1 * a2 + b1 * b2) * same + (a1 * b2 + b1 * a2) * cross
}

/// `int_0^H3 w(y) u1(y) u2(y) dy` in closed form, layer by layer.
pub fn inner_product(p1: &ModeProfile, p2: &ModeProfile, weight: Weight) -> Complex64 {
    let s = &p1.stack;
    let h = s.thicknesses();
    let rho = s.densities();
    let c = s.speeds();
    let z1 = p1.radicands();
    let z2 = p2.radicands();
    let wgt = |j: usize| match weight {
        Weight::Rho => rho[j],
        Weight::RhoOverC2 => rho[j] / (c[j] * c[j]),
    };
    let l1 = p1.coeffs[0] * p2.coeffs[0] * basis_integrals(z1[0], z2[0], h[0])[0];
    let l2 = middle_integral(p1, p2, z1[1], z2[1]);
    let l3 = p1.coeffs[3] * p2.coeffs[3] * basis_integrals(z1[2], z2[2], h[2])[0];
    wgt(0) * l1 + wgt(1) * l2 + wgt(2) * l3
}

/// `int rho |u|^2`, the sesquilinear norm.
pub fn energy_norm(p: &ModeProfile) -> f64 {
    inner_product(&p.conj(), p, Weight::Rho).re
}

/// Excitation amplitude `P = rho(y0) U(y0) / (2 i k <U, U>)`.
pub fn amplitude_p(p: &ModeProfile, y0: f64) -> Result<Complex64> {
    if p.k == ZERO {
        return Err(Error::Cutoff);
    }
    let norm = inner_product(p, p, Weight::Rho);
    if norm.norm() < 1e-10 * energy_norm(p) {
        return Err(Error::ZeroNorm);
    }
    let rho = p.stack.densities()[p.stack.layer_at(y0)?];
    let u = eval_profile(p, y0)?;
    Ok(rho * u / (Complex64::new(0.0, 2.0) * p.k * norm))
}

/// Interface term of the bilinear identity, general form.
pub fn bilinear_s(p1: &ModeProfile, p2: &ModeProfile) -> Complex64 {
    let [r1, r2, r3] = p1.stack.densities();
    let u1 = p1.interface_values();
    let u2 = p2.interface_values();
    let d1 = p1.interface_slopes();
    let d2 = p2.interface_slopes();
    // u' at H1 taken from below, at H2 from above, as in the interface conditions
    d1[0] * (r1 * u2[0] - r2 * u2[1])
        + d2[0] * (r2 * u1[1] - r1 * u1[0])
        + d1[3] * (r2 * u2[2] - r3 * u2[3])
        + d2[3] * (r3 * u1[3] - r2 * u1[2])
}

/// Specialised interface terms: both waveguides with finite nonzero
/// linking parameters, or the first one decoupled (`eps = 0`) and the
/// second finite. Returns `None` when neither form applies.
pub fn bilinear_s_special(p1: &ModeProfile, p2: &ModeProfile) -> Option<Complex64> {
    let (LinkingParams::Finite { eps1: e1a, eps2: e2a }, LinkingParams::Finite { eps1: e1b, eps2: e2b }) =
        (p1.eps, p2.eps)
    else {
        return None;
    };
    let d1 = p1.interface_slopes();
    let d2 = p2.interface_slopes();
    if e1a != ZERO && e2a != ZERO && e1b != ZERO && e2b != ZERO {
        return Some((ONE / e1a - ONE / e1b) * d1[0] * d2[0] + (ONE / e2a - ONE / e2b) * d1[3] * d2[3]);
    }
    if e1a == ZERO && e2a == ZERO {
        let [r1, r2, r3] = p1.stack.densities();
        let u1 = p1.interface_values();
        let u2 = p2.interface_values();
        let jump1 = |u: &[Complex64; 4]| r2 * u[1] - r1 * u[0];
        let jump2 = |u: &[Complex64; 4]| r3 * u[3] - r2 * u[2];
        return Some(e1b * jump1(&u2) * jump1(&u1) + e2b * jump2(&u2) * jump2(&u1));
    }
    None
}

/// Group velocity from the bilinear identity,
/// `v = (k/omega) <rho, u^2> / <rho/c^2, u^2>`.
pub fn group_velocity_bilinear(p: &ModeProfile) -> Result<f64> {
    if p.k == ZERO {
        return Err(Error::Cutoff);
    }
    let num = inner_product(p, p, Weight::Rho);
    let den = inner_product(p, p, Weight::RhoOverC2);
    Ok((p.k / p.omega * num / den).re)
}
