//! Branch points of the dispersion surface, found by deforming the
//! interfaces from decoupled (`eps = 0`) to ideal (`eps = inf`) contact.
//!
//! At `eps = 0` the layers are independent and two sheets of different
//! layers cross on the real plane. A small `eps` splits every crossing into
//! a conjugate pair of branch points, seeded by perturbation theory and then
//! followed in `eps` by Newton's method on the pair of equations
//! `D = 0, dD/dK = 0`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::{det_partials, Partials};
use crate::error::{Error, Result};
use crate::medium::{principal_sqrt, LayerStack, LinkingParams};

/// A branch point `Theta_{mu, nu, m, n}`: sheet `m` of layer `mu` meets
/// sheet `n` of layer `nu` in the decoupled waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct BranchPointId {
    pub mu: usize,
    pub nu: usize,
    pub m: usize,
    pub n: usize,
}

impl BranchPointId {
    /// Layers are 1-based. `(mu, nu)` is unordered; the result has `mu < nu`
    /// with the sheet indices swapped along.
    pub fn new(mu: usize, nu: usize, m: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&mu) || !(1..=3).contains(&nu) || mu == nu {
            return Err(Error::InvalidArgument(format!("layer pair ({mu}, {nu}) must be two distinct layers in 1..=3")));
        }
        if m == 0 && n == 0 {
            return Err(Error::InvalidArgument("sheet pair (0, 0) is not supported".into()));
        }
        Ok(if mu < nu { BranchPointId { mu, nu, m, n } } else { BranchPointId { mu: nu, nu: mu, m: n, n: m } })
    }
}

/// Crossing of the decoupled sheets `K = W/c_mu^2 - (pi m/h_mu)^2` and
/// `K = W/c_nu^2 - (pi n/h_nu)^2`.
pub fn crossing_point(id: BranchPointId, stack: &LayerStack) -> Result<(f64, f64)> {
    let c = stack.speeds();
    let h = stack.thicknesses();
    let (i, j) = (id.mu - 1, id.nu - 1);
    if c[i] == c[j] {
        return Err(Error::DegenerateSpeeds(id.mu, id.nu));
    }
    let (m, n) = (id.m as f64, id.n as f64);
    let pm = (PI * m / h[i]).powi(2);
    let pn = (PI * n / h[j]).powi(2);
    let w = (pm - pn) / (1.0 / (c[i] * c[i]) - 1.0 / (c[j] * c[j]));
    let kk = (pm * c[i] * c[i] - pn * c[j] * c[j]) / (c[j] * c[j] - c[i] * c[i]);
    Ok((w, kk))
}

fn sigma(j: usize) -> f64 {
    if j == 0 {
        2.0
    } else {
        1.0
    }
}

fn parity(m: usize, n: usize) -> f64 {
    if (m + n) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// First-order seeds for neighbouring layers, `(1, 2)` with the path
/// starting at `(eps, 0)` or `(2, 3)` starting at `(0, eps)`. The two
/// entries are the two roots of the splitting quadratic.
pub fn perturb_seed_case1(id: BranchPointId, eps: f64, stack: &LayerStack) -> Result<[(Complex64, Complex64); 2]> {
    if id.nu - id.mu != 1 {
        return Err(Error::InvalidArgument("first-order seeds need neighbouring layers".into()));
    }
    let (w0, k0) = crossing_point(id, stack)?;
    let (i, j) = (id.mu - 1, id.nu - 1);
    let c = stack.speeds();
    let h = stack.thicknesses();
    let rho = stack.densities();
    let g1 = rho[i] / (sigma(id.m) * h[i]);
    let g2 = rho[j] / (sigma(id.n) * h[j]);
    let (c1s, c2s) = (c[i] * c[i], c[j] * c[j]);
    let s = parity(id.m, id.n);
    let seed = |sgn: f64| {
        let a = Complex64::new(g1.sqrt(), -sgn * s * g2.sqrt());
        let w1 = 2.0 * a * a / (1.0 / c1s - 1.0 / c2s);
        let k1 = 2.0 * Complex64::new(g1 * c1s - g2 * c2s, -sgn * s * (g1 * g2).sqrt() * (c1s + c2s)) / (c2s - c1s);
        (w0 + eps * w1, k0 + eps * k1)
    };
    Ok([seed(1.0), seed(-1.0)])
}

/// Which reading of the `c_1^3 + c_3^2` factor of the second-order `K`
/// correction to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KFactor {
    /// `c_1^3 + c_3^2`, as printed.
    Printed,
    /// `c_1^2 + c_3^2`.
    Squared,
}

/// Seeds for the outer layers `(1, 3)` on the diagonal path `(eps, eps)`.
/// With `second_order` false only the (unsplit) first-order terms are used.
pub fn perturb_seed_case2(
    id: BranchPointId,
    eps: f64,
    stack: &LayerStack,
    factor: KFactor,
    second_order: bool,
) -> Result<[(Complex64, Complex64); 2]> {
    if (id.mu, id.nu) != (1, 3) {
        return Err(Error::InvalidArgument("outer-layer seeds need the pair (1, 3)".into()));
    }
    let (w0, k0) = crossing_point(id, stack)?;
    let c = stack.speeds();
    let h = stack.thicknesses();
    let rho = stack.densities();
    let g1 = rho[0] / (sigma(id.m) * h[0]);
    let g3 = rho[2] / (sigma(id.n) * h[2]);
    let (c1s, c3s) = (c[0] * c[0], c[2] * c[2]);
    let w1 = 2.0 * (g1 - g3) / (1.0 / c1s - 1.0 / c3s);
    let k1 = 2.0 * (g1 * c1s - g3 * c3s) / (c3s - c1s);
    let a2 = principal_sqrt(Complex64::new(w0 / (c[1] * c[1]) - k0, 0.0));
    let sn = (a2 * h[1]).sin();
    if sn.norm() < 1e-8 {
        return Err(Error::ResonantMiddleLayer);
    }
    let den = a2 * sn;
    let cs = (a2 * h[1]).cos();
    // contribution of the sheet's own layer; the zero sheet has a flat profile
    let own = |r: f64, j: usize| if j > 0 { r * r / (PI * PI * (j * j) as f64) } else { r * r / 3.0 };
    let t1 = own(rho[0], id.m);
    let t3 = own(rho[2], id.n);
    let s = parity(id.m, id.n);
    let r2 = rho[1];
    let cc = match factor {
        KFactor::Printed => c[0].powi(3) + c3s,
        KFactor::Squared => c1s + c3s,
    };
    let i = Complex64::new(0.0, 1.0);
    let seed = |sgn: f64| {
        if !second_order {
            return (Complex64::new(w0 + eps * w1, 0.0), Complex64::new(k0 + eps * k1, 0.0));
        }
        let w2 = (t3 - t1 + 2.0 * r2 * cs * (g1 - g3) / den + sgn * 4.0 * s * r2 * (g1 * g3).sqrt() * i / den)
            / (1.0 / c1s - 1.0 / c3s);
        let k2 = (c1s * t1 - c3s * t3 + 2.0 * r2 * (g3 * c3s - g1 * c1s) * cs / den
            - sgn * 2.0 * s * r2 * cc * (g1 * g3).sqrt() * i / den)
            / (c1s - c3s);
        (w0 + eps * w1 + eps * eps * w2, k0 + eps * k1 + eps * eps * k2)
    };
    Ok([seed(1.0), seed(-1.0)])
}

/// Seeds appropriate to the layer pair at the start of its default path.
pub fn perturb_seed(id: BranchPointId, eps: f64, stack: &LayerStack, factor: KFactor) -> Result<[(Complex64, Complex64); 2]> {
    if (id.mu, id.nu) == (1, 3) {
        perturb_seed_case2(id, eps, stack, factor, true)
    } else {
        perturb_seed_case1(id, eps, stack)
    }
}

fn residual_scale(p: &Partials) -> f64 {
    1.0 + p.scale + p.d_w.norm()
}

/// `max(|D|, |D_K|)` relative to the scale of the determinant at `(W, K)`.
pub fn branch_residual(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> f64 {
    let p = det_partials(w, kk, eps, stack);
    p.d.norm().max(p.d_k.norm()) / residual_scale(&p)
}

/// Newton's method on `D = 0, D_K = 0` in `(W, K)`.
pub fn newton_branch_point(
    w0: Complex64,
    k0: Complex64,
    eps: LinkingParams,
    stack: &LayerStack,
) -> Result<(Complex64, Complex64)> {
    newton_branch_point_iter(w0, k0, eps, stack).map(|(w, k, _)| (w, k))
}

/// As [`newton_branch_point`], also returning the number of iterations.
pub fn newton_branch_point_iter(
    w0: Complex64,
    k0: Complex64,
    eps: LinkingParams,
    stack: &LayerStack,
) -> Result<(Complex64, Complex64, usize)> {
    let (mut w, mut kk) = (w0, k0);
    for it in 1..=50 {
        let p = det_partials(w, kk, eps, stack);
        let q = [[p.d_w, p.d_k], [p.d_wk, p.d_kk]];
        let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
        let qs = (q[0][0].norm() + q[0][1].norm()) * (q[1][0].norm() + q[1][1].norm());
        if !(det.norm() > 1e-14 * qs) {
            return Err(Error::SingularJacobian);
        }
        let dw = -(q[1][1] * p.d - q[0][1] * p.d_k) / det;
        let dk = -(q[0][0] * p.d_k - q[1][0] * p.d) / det;
        if !dw.is_finite() || !dk.is_finite() {
            return Err(Error::SingularJacobian);
        }
        w += dw;
        kk += dk;
        if dw.norm() <= 1e-12 * (1.0 + w.norm()) && dk.norm() <= 1e-12 * (1.0 + kk.norm()) {
            if branch_residual(w, kk, eps, stack) < 1e-10 {
                return Ok((w, kk, it));
            }
        }
    }
    Err(Error::NoConvergence)
}

/// Shape of the path in the `(eps1, eps2)` plane; `eps0` is the start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathShape {
    /// `(eps, eps - eps0)`.
    Lower,
    /// `(eps - eps0, eps)`.
    Upper,
    /// `(eps, eps)`.
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSpec {
    pub eps0: f64,
    pub end: f64,
    pub nodes: usize,
    pub shape: PathShape,
    /// `+1` traces the member with `Im W > 0` at the first node.
    pub sign: i8,
    pub factor: KFactor,
}

impl PathSpec {
    pub fn default_for(id: BranchPointId) -> Self {
        let shape = match (id.mu, id.nu) {
            (1, 2) => PathShape::Lower,
            (2, 3) => PathShape::Upper,
            _ => PathShape::Diagonal,
        };
        PathSpec { eps0: 0.01, end: 1000.0, nodes: 200, shape, sign: 1, factor: KFactor::Squared }
    }

    pub fn point(&self, e: f64) -> (f64, f64) {
        match self.shape {
            PathShape::Lower => (e, e - self.eps0),
            PathShape::Upper => (e - self.eps0, e),
            PathShape::Diagonal => (e, e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPointRecord {
    pub id: BranchPointId,
    pub path: PathSpec,
    /// Perturbation seed at the first node.
    pub seed: (Complex64, Complex64),
    pub eps_path: Vec<(f64, f64)>,
    /// `(Theta, Xi)` per node of `eps_path`.
    pub trajectory: Vec<(Complex64, Complex64)>,
    /// `(Theta, Xi)` at `eps = inf`.
    pub final_point: (Complex64, Complex64),
}

impl BranchPointRecord {
    /// `sqrt(Theta)` at `eps = inf`. The principal root keeps the sign of
    /// `Im Theta`, so the `sign = +1` member lies in the upper half-plane.
    pub fn final_omega(&self) -> Complex64 {
        principal_sqrt(self.final_point.0)
    }
}

fn eps_at(spec: &PathSpec, e: f64) -> LinkingParams {
    let (a, b) = spec.point(e);
    LinkingParams::real(a, b)
}

/// Follow a branch point from `eps0` to `end`, then solve at `eps = inf`.
///
/// The nominal nodes are geometric in `eps`. Each step uses a secant
/// predictor in `log eps`; a step whose Newton correction is large compared
/// with the predicted move, or which fails, is halved.
pub fn trace_branch_point(id: BranchPointId, spec: &PathSpec, stack: &LayerStack) -> Result<BranchPointRecord> {
    trace_branch_point_partial(id, spec, stack).map_err(|f| f.error)
}

/// What a failed trace reached before giving up.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTrace {
    pub error: Error,
    pub eps_path: Vec<(f64, f64)>,
    pub trajectory: Vec<(Complex64, Complex64)>,
}

/// [`trace_branch_point`], keeping the nodes reached when it fails.
pub fn trace_branch_point_partial(
    id: BranchPointId,
    spec: &PathSpec,
    stack: &LayerStack,
) -> std::result::Result<BranchPointRecord, PartialTrace> {
    let bare = |error| PartialTrace { error, eps_path: Vec::new(), trajectory: Vec::new() };
    if !(spec.eps0 > 0.0 && spec.end > spec.eps0 && spec.nodes >= 2) {
        return Err(bare(Error::InvalidArgument("path needs 0 < eps0 < end and at least two nodes".into())));
    }
    let seeds = perturb_seed(id, spec.eps0, stack, spec.factor).map_err(bare)?;
    let e0 = eps_at(spec, spec.eps0);
    let fail = |e: f64| {
        let (a, b) = spec.point(e);
        Error::TraceFailed { eps1: a, eps2: b }
    };
    let mut polished = Vec::new();
    for s in seeds {
        if let Ok((w, k)) = newton_branch_point(s.0, s.1, e0, stack) {
            polished.push((s, w, k));
        }
    }
    let pick = polished
        .iter()
        .copied()
        .find(|(_, w, _)| if spec.sign > 0 { w.im > 0.0 } else { w.im < 0.0 })
        .ok_or_else(|| bare(fail(spec.eps0)))?;
    let (seed, mut w, mut kk) = pick;
    let mut eps_path = vec![spec.point(spec.eps0)];
    let mut traj = vec![(w, kk)];
    let (l0, l1) = (spec.eps0.ln(), spec.end.ln());
    let nominal = (l1 - l0) / (spec.nodes - 1) as f64;
    let mut l = l0;
    let mut prev: Option<(f64, Complex64, Complex64)> = None;
    let mut step = nominal;
    let min_step = nominal / 4096.0;
    while l < l1 - 1e-12 {
        let dl = step.min(l1 - l);
        let ln = l + dl;
        let (wg, kg) = match prev {
            Some((lp, wp, kp)) => {
                let t = dl / (l - lp);
                (w + (w - wp) * t, kk + (kk - kp) * t)
            }
            None => (w, kk),
        };
        let e = ln.exp();
        let ok = match newton_branch_point(wg, kg, eps_at(spec, e), stack) {
            Ok((wn, kn)) => {
                let moved = (wg - w).norm() + (kg - kk).norm();
                let corr = (wn - wg).norm() + (kn - kg).norm();
                let allow = 0.1 * moved + 1e-3 * dl * (1.0 + w.norm() + kk.norm()) + 1e-9 * (1.0 + wn.norm());
                (prev.is_none() || corr <= allow).then_some((wn, kn))
            }
            Err(_) => None,
        };
        match ok {
            Some((wn, kn)) => {
                prev = Some((l, w, kk));
                l = ln;
                w = wn;
                kk = kn;
                // keep the nominal grid when possible
                let off = ((l - l0) / nominal).round() * nominal + l0;
                if (l - off).abs() < 1e-9 {
                    step = nominal;
                } else {
                    step = (2.0 * step).min(nominal);
                }
                eps_path.push(spec.point(e));
                traj.push((w, kk));
            }
            None => {
                step *= 0.5;
                if step < min_step {
                    return Err(PartialTrace { error: fail(l.exp()), eps_path, trajectory: traj });
                }
            }
        }
    }
    let fin = match newton_branch_point(w, kk, LinkingParams::Infinite, stack) {
        Ok(f) => f,
        Err(_) => return Err(PartialTrace { error: fail(spec.end), eps_path, trajectory: traj }),
    };
    Ok(BranchPointRecord { id, path: *spec, seed, eps_path, trajectory: traj, final_point: fin })
}
