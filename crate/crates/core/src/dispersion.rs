//! Dispersion determinant, its partial derivatives, reference roots and
//! branch continuation over the complex frequency plane.
//!
//! Two forms of the determinant are provided. [`det_d`] and [`det_d_eps`]
//! are the literal 4x4 determinants in the basis `sin(alpha_2 y), cos(alpha_2 y)`
//! of the middle layer. They change sign with `alpha_2`. The *regular*
//! determinant [`det_regular`] uses the basis `cos(alpha_2 (y - H1))`,
//! `sin(alpha_2 (y - H1)) / alpha_2` instead; every entry is then an entire
//! function of `(W, K)`, the value is exactly independent of the root
//! branches and real for real arguments. The two are related by
//!
//! ```text
//! det_d           =  alpha_2 * det_regular(W, K, Infinite)
//! det_d_eps(eps)  = -alpha_2 * det_regular(W, K, eps)
//! ```
//!
//! so they share zeros (away from `alpha_2 = 0`) and branch points. Both
//! functions are evaluated through this relation: expanding the literal
//! entries directly cancels terms of size `exp(|Im alpha_2| (H1 + H2))` down
//! to `exp(|Im alpha_2| h2)`. [`DispersionMatrix::det`] still expands the
//! literal entries.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jet::{det4, det4_c, Jet};
use crate::medium::{principal_sqrt, LayerStack, LinkingParams};
use crate::trig::layer_trig;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which matrix of the family a [`DispersionMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// Ideal interfaces.
    Full,
    /// Decoupled layers.
    D0,
    /// Mass term of the first interface.
    D1,
    /// Mass term of the second interface.
    D2,
    /// `D0 + eps1 D1 + eps2 D2`.
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionMatrix {
    pub entries: [[Complex64; 4]; 4],
    pub kind: MatrixKind,
}

impl DispersionMatrix {
    /// Literal matrix at `(W, K)` using principal roots for `alpha_j`.
    /// `eps` is only read for [`MatrixKind::Combined`]; `Infinite` there
    /// yields the full matrix.
    pub fn build(kind: MatrixKind, w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> Self {
        let a = alphas(w, kk, stack);
        Self::build_with_alphas(kind, a, eps, stack)
    }

    /// Same as [`build`](Self::build) with explicitly chosen root branches.
    pub fn build_with_alphas(kind: MatrixKind, a: [Complex64; 3], eps: LinkingParams, stack: &LayerStack) -> Self {
        let [hb1, hb2, _] = stack.bounds();
        let h3 = stack.thicknesses()[2];
        let [r1, r2, r3] = stack.densities();
        let [a1, a2, a3] = a;
        let (s1, c1) = ((a1 * hb1).sin(), (a1 * hb1).cos());
        let (s21, c21) = ((a2 * hb1).sin(), (a2 * hb1).cos());
        let (s22, c22) = ((a2 * hb2).sin(), (a2 * hb2).cos());
        let (s3, c3) = ((a3 * h3).sin(), (a3 * h3).cos());
        let row_p1 = [-r1 * c1, r2 * s21, r2 * c21, ZERO];
        let row_v1 = [a1 * s1, a2 * c21, -a2 * s21, ZERO];
        let row_p2 = [ZERO, r2 * s22, r2 * c22, -r3 * c3];
        let row_v2 = [ZERO, a2 * c22, -a2 * s22, -a3 * s3];
        let zero_row = [ZERO; 4];
        let d0 = [[a1 * s1, ZERO, ZERO, ZERO], row_v1, [ZERO, ZERO, ZERO, -a3 * s3], row_v2];
        let d1 = [row_p1, zero_row, zero_row, zero_row];
        let d2 = [zero_row, zero_row, row_p2.map(|x| -x), zero_row];
        let entries = match kind {
            MatrixKind::Full => [row_p1, row_v1, row_p2, row_v2],
            MatrixKind::D0 => d0,
            MatrixKind::D1 => d1,
            MatrixKind::D2 => d2,
            MatrixKind::Combined => match eps {
                LinkingParams::Infinite => [row_p1, row_v1, row_p2, row_v2],
                LinkingParams::Finite { eps1, eps2 } => {
                    let mut m = d0;
                    for c in 0..4 {
                        m[0][c] += eps1 * d1[0][c];
                        m[2][c] += eps2 * d2[2][c];
                    }
                    m
                }
            },
        };
        let kind = match (kind, eps) {
            (MatrixKind::Combined, LinkingParams::Infinite) => MatrixKind::Full,
            _ => kind,
        };
        DispersionMatrix { entries, kind }
    }

    pub fn det(&self) -> Complex64 {
        det4_c(&self.entries)
    }

    /// Largest absolute entry, used to scale null-space residuals.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[Complex64; 4]) -> [Complex64; 4] {
        let mut out = [ZERO; 4];
        for (r, row) in self.entries.iter().enumerate() {
            out[r] = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        out
    }
}

pub(crate) fn alphas(w: Complex64, kk: Complex64, stack: &LayerStack) -> [Complex64; 3] {
    [0, 1, 2].map(|j| principal_sqrt(stack.radicand(w, kk, j)))
}

/// Determinant of the ideal-interface matrix at `(omega, k)`.
pub fn det_d(omega: Complex64, k: Complex64, stack: &LayerStack) -> Complex64 {
    let (w, kk) = (omega * omega, k * k);
    alphas(w, kk, stack)[1] * det_regular(w, kk, LinkingParams::Infinite, stack)
}

/// Determinant of `D0 + eps1 D1 + eps2 D2`; `Infinite` dispatches to
/// [`det_d`] at `(sqrt W, sqrt K)`.
pub fn det_d_eps(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> Complex64 {
    match eps {
        LinkingParams::Infinite => det_d(principal_sqrt(w), principal_sqrt(kk), stack),
        _ => -alphas(w, kk, stack)[1] * det_regular(w, kk, eps, stack),
    }
}

/// Value and partial derivatives of the regular determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub d: Complex64,
    pub d_w: Complex64,
    pub d_k: Complex64,
    pub d_ww: Complex64,
    pub d_wk: Complex64,
    pub d_kk: Complex64,
    /// Product of the row scale factors; residuals are judged against it.
    pub scale: f64,
}

impl Partials {
    /// Residual tolerance `1e-11 (1 + scale)`.
    pub fn tolerance(&self) -> f64 {
        1e-11 * (1.0 + self.scale)
    }
}

fn regular_matrix(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> [[Jet; 4]; 4] {
    let h = stack.thicknesses();
    let c = stack.speeds();
    let [r1, r2, r3] = stack.densities();
    let mut ce = [Jet::default(); 3];
    let mut s0 = [Jet::default(); 3];
    let mut s1 = [Jet::default(); 3];
    for j in 0..3 {
        let zj = stack.radicand(w, kk, j);
        let z = Jet::affine(zj, 1.0 / (c[j] * c[j]), -1.0);
        let t = layer_trig(zj, h[j]);
        ce[j] = z.compose(t.c.f, t.c.d1, t.c.d2);
        s0[j] = z.compose(t.s0.f, t.s0.d1, t.s0.d2);
        s1[j] = z.compose(t.s1.f, t.s1.d1, t.s1.d2);
    }
    let zero = Jet::default();
    let one = Jet::real(1.0);
    // columns: A, P = u(H1+), Q = u'(H1+), F
    let mut m = [
        [ce[0] * (-r1), Jet::real(r2), zero, zero],
        [s1[0], zero, one, zero],
        [zero, ce[1] * (-r2), s0[1] * (-r2), ce[2] * r3],
        [zero, -s1[1], ce[1], -s1[2]],
    ];
    if let LinkingParams::Finite { eps1, eps2 } = eps {
        m[0] = [
            s1[0] - ce[0].scale(eps1 * r1),
            Jet::constant(eps1 * r2),
            zero,
            zero,
        ];
        m[2] = [
            zero,
            ce[1].scale(-eps2 * r2),
            s0[1].scale(-eps2 * r2),
            ce[2].scale(eps2 * r3) - s1[2],
        ];
    }
    m
}

/// Regular determinant with first and second partials in `(W, K)`.
///
/// Rows are divided by their largest entry before the expansion and the
/// product of those factors is multiplied back, so large `|Im alpha| h`
/// does not lose precision in the cancellations.
pub fn det_partials(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> Partials {
    let mut m = regular_matrix(w, kk, eps, stack);
    let mut scale = 1.0;
    for row in m.iter_mut() {
        let s = row.iter().map(|x| x.v.norm()).fold(0.0, f64::max);
        if s > 0.0 && s.is_finite() {
            let inv = Complex64::new(1.0 / s, 0.0);
            for x in row.iter_mut() {
                *x = x.scale(inv);
            }
            scale *= s;
        }
    }
    let d = det4(&m).scale(Complex64::new(scale, 0.0));
    Partials { d: d.v, d_w: d.w, d_k: d.k, d_ww: d.ww, d_wk: d.wk, d_kk: d.kk, scale }
}

/// Regular determinant value.
pub fn det_regular(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> Complex64 {
    det_partials(w, kk, eps, stack).d
}

/// Regular 4x4 matrix values (columns `A, u(H1+), u'(H1+), F`).
pub(crate) fn regular_values(w: Complex64, kk: Complex64, eps: LinkingParams, stack: &LayerStack) -> [[Complex64; 4]; 4] {
    regular_matrix(w, kk, eps, stack).map(|row| row.map(|x| x.v))
}

/// 1-D Newton in `K` at fixed `W` on the regular determinant.
pub fn newton_k(w: Complex64, k0: Complex64, eps: LinkingParams, stack: &LayerStack, max_iter: usize) -> Result<Complex64> {
    let mut kk = k0;
    for _ in 0..max_iter {
        let p = det_partials(w, kk, eps, stack);
        if p.d == ZERO {
            return Ok(kk);
        }
        if p.d_k == ZERO || !p.d_k.is_finite() {
            return Err(Error::SingularJacobian);
        }
        let step = p.d / p.d_k;
        kk -= step;
        if step.norm() <= 1e-14 * (1.0 + kk.norm()) {
            let q = det_partials(w, kk, eps, stack);
            if q.d.norm() <= q.tolerance() {
                return Ok(kk);
            }
        }
    }
    let q = det_partials(w, kk, eps, stack);
    if q.d.norm() <= q.tolerance() {
        Ok(kk)
    } else {
        Err(Error::NoConvergence)
    }
}

/// Number of eigenvalues `K_n > kk` of the ideal waveguide at real `W`.
///
/// The transverse problem is a Sturm-Liouville problem for `rho u`, so the
/// count follows from the zeros of the solution launched from `y = 0` with
/// `u = 1, u' = 0`, plus one if the Pruefer angle at `y = H3` has passed
/// the next Neumann position.
pub fn count_above(w: f64, kk: f64, stack: &LayerStack) -> usize {
    let h = stack.thicknesses();
    let c = stack.speeds();
    let rho = stack.densities();
    let (mut u, mut du) = (1.0f64, 0.0f64);
    let mut zeros = 0usize;
    for j in 0..3 {
        if j > 0 {
            u *= rho[j - 1] / rho[j];
        }
        let z = w / (c[j] * c[j]) - kk;
        let t = layer_trig(Complex64::new(z, 0.0), h[j]);
        let (cf, s0, s1) = (t.c.f.re, t.s0.f.re, t.s1.f.re);
        let u_end = u * cf + du * s0;
        let du_end = -u * s1 + du * cf;
        zeros += if z > 0.0 {
            let a = z.sqrt();
            let phi = (du / a).atan2(u);
            let half = std::f64::consts::FRAC_PI_2;
            let pi = std::f64::consts::PI;
            let upper = ((a * h[j] - phi - half) / pi).floor();
            let lower = ((-phi - half) / pi).floor();
            (upper - lower) as usize
        } else {
            usize::from(u * u_end < 0.0 || (u_end == 0.0 && u != 0.0))
        };
        u = u_end;
        du = du_end;
    }
    zeros + usize::from(u * du < 0.0)
}

/// The `n`-th eigenvalue (0 = largest) of the ideal waveguide at real `W`,
/// isolated by bisection on [`count_above`] and polished by Newton.
pub fn eigenvalue_at_real_w(w: f64, n: usize, stack: &LayerStack) -> Result<f64> {
    let c = stack.speeds();
    let mut hi = c.iter().map(|cj| w / (cj * cj)).fold(f64::MIN, f64::max) + 1.0;
    let mut lo = hi - 1.0;
    let mut width = 1.0;
    while count_above(w, lo, stack) <= n {
        width *= 2.0;
        lo = hi - width;
        if width > 1e12 {
            return Err(Error::RootCountShortfall { found: count_above(w, lo, stack), wanted: n + 1 });
        }
    }
    // invariant: count(lo) >= n + 1, count(hi) <= n
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_above(w, mid, stack) > n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let guess = 0.5 * (lo + hi);
    let wc = Complex64::new(w, 0.0);
    match newton_k(wc, Complex64::new(guess, 0.0), LinkingParams::Infinite, stack, 8) {
        Ok(k) if (k.re - guess).abs() <= 1e-6 * (1.0 + guess.abs()) => Ok(k.re),
        _ => Ok(guess),
    }
}

/// Roots `k` of the dispersion relation at a reference frequency in the
/// upper half-plane.
///
/// `k_window = (lo, hi)` bounds `Im k` of the accepted roots. For purely
/// imaginary `omega0` all roots lie on the positive imaginary `k` axis and
/// are found by counting; otherwise the roots at `i |omega0|` are continued
/// along the straight segment to `omega0`. Roots are sorted by `|k|`.
pub fn find_roots_at_reference(
    omega0: Complex64,
    k_window: (f64, f64),
    n_max: usize,
    stack: &LayerStack,
) -> Result<Vec<Complex64>> {
    if omega0.im <= 0.0 {
        return Err(Error::InvalidArgument("reference frequency must have positive imaginary part".into()));
    }
    let (lo, hi) = k_window;
    if !(lo < hi) || hi <= 0.0 {
        return Err(Error::RootCountShortfall { found: 0, wanted: n_max });
    }
    let lo = lo.max(0.0);
    let on_axis = omega0.re.abs() <= 1e-14 * omega0.norm();
    let omega_ref = if on_axis { Complex64::new(0.0, omega0.im) } else { Complex64::new(0.0, omega0.norm()) };
    let w = (omega_ref * omega_ref).re;
    // K in [-hi^2, -lo^2]
    let k_top = -lo * lo;
    let k_bottom = -hi * hi;
    let first = count_above(w, k_top, stack);
    let available = count_above(w, k_bottom, stack).saturating_sub(first);
    if available < n_max {
        return Err(Error::RootCountShortfall { found: available, wanted: n_max });
    }
    let mut ks = Vec::with_capacity(n_max);
    for n in first..first + n_max {
        let kk = eigenvalue_at_real_w(w, n, stack)?;
        ks.push(principal_sqrt(Complex64::new(kk, 0.0)));
    }
    if !on_axis {
        let path = segment(omega_ref, omega0, 0.05);
        let seeds: Vec<_> = ks.iter().map(|&k| (omega_ref, k)).collect();
        let table = continue_branches(&seeds, &path, stack, &ContinuationOptions::default())?;
        ks = table.k.iter().map(|b| *b.last().unwrap()).collect();
    }
    ks.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    Ok(ks)
}

/// Seeds `(i im0, k_n)` for the first `n` branches on the imaginary axis,
/// widening the `|k|` window until it holds `n` roots.
pub fn imaginary_axis_seeds(im0: f64, n: usize, stack: &LayerStack) -> Result<Vec<(Complex64, Complex64)>> {
    let omega0 = Complex64::new(0.0, im0);
    let mut hi = 8.0 * (1.0 + im0);
    let roots = loop {
        match find_roots_at_reference(omega0, (0.0, hi), n, stack) {
            Err(Error::RootCountShortfall { .. }) if hi < 1e6 => hi *= 2.0,
            other => break other?,
        }
    };
    // sorted by |k|; on the imaginary axis that is the eigenvalue order
    Ok(roots.into_iter().map(|k| (omega0, k)).collect())
}

/// Branches on the line `Im omega = im`, `0 <= Re omega <= omega_max`,
/// reached from `i im0` down the imaginary axis. Nodes are spaced by at
/// most `step`; the table starts at `omega = i im`.
pub fn horizontal_diagram(
    im: f64,
    omega_max: f64,
    n: usize,
    step: f64,
    im0: f64,
    stack: &LayerStack,
    opts: &ContinuationOptions,
) -> Result<BranchTable> {
    if !(im >= 0.0 && omega_max > 0.0 && step > 0.0 && im0 > im) {
        return Err(Error::InvalidArgument("need 0 <= im < im0, omega_max > 0 and step > 0".into()));
    }
    let seeds = imaginary_axis_seeds(im0, n, stack)?;
    let corner = Complex64::new(0.0, im);
    let descent = polyline(&[seeds[0].0, corner], step);
    let start = descent.len() - 1;
    let mut path = descent;
    path.extend(segment(corner, Complex64::new(omega_max, im), step).into_iter().skip(1));
    let table = continue_branches(&seeds, &path, stack, opts)?;
    Ok(table.slice(start, path.len()))
}

/// Equally spaced nodes from `a` to `b` (inclusive) with spacing at most `step`.
pub fn segment(a: Complex64, b: Complex64, step: f64) -> Vec<Complex64> {
    let n = (((b - a).norm() / step).ceil() as usize).max(1);
    (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect()
}

/// Polyline through the given vertices with spacing at most `step`.
pub fn polyline(vertices: &[Complex64], step: f64) -> Vec<Complex64> {
    let mut out = vec![vertices[0]];
    for pair in vertices.windows(2) {
        if pair[0] == pair[1] {
            continue;
        }
        out.extend(segment(pair[0], pair[1], step).into_iter().skip(1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchLabel {
    Type1,
    Type2,
    Type3,
    Type23,
    Unclassified,
}

impl BranchLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchLabel::Type1 => "1",
            BranchLabel::Type2 => "2",
            BranchLabel::Type3 => "3",
            BranchLabel::Type23 => "2-3",
            BranchLabel::Unclassified => "unclassified",
        }
    }
}

/// Branches `k_n(omega)` sampled along a contour.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTable {
    pub nodes: Vec<Complex64>,
    /// `k[branch][node]`.
    pub k: Vec<Vec<Complex64>>,
    /// `K = k^2`, as solved.
    pub kk: Vec<Vec<Complex64>>,
    pub labels: Vec<Option<BranchLabel>>,
}

impl BranchTable {
    pub fn n_branches(&self) -> usize {
        self.k.len()
    }

    pub fn w(&self, node: usize) -> Complex64 {
        self.nodes[node] * self.nodes[node]
    }

    /// Restrict to the node range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> BranchTable {
        BranchTable {
            nodes: self.nodes[start..end].to_vec(),
            k: self.k.iter().map(|b| b[start..end].to_vec()).collect(),
            kk: self.kk.iter().map(|b| b[start..end].to_vec()).collect(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationOptions {
    /// Levels of step halving allowed between two contour nodes.
    pub max_halvings: u32,
    pub newton_iterations: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions { max_halvings: 10, newton_iterations: 12 }
    }
}

enum StepFailure {
    Stall,
    Collision(usize, usize),
}

/// Advance all branches from `w0` to `w1` in one Newton step each, with a
/// tangent predictor. Fails if any branch does not converge, if a correction
/// is large compared with the predicted move or with the distance to another
/// branch, or if two branches coincide.
fn try_step(
    kk: &[Complex64],
    w0: Complex64,
    w1: Complex64,
    stack: &LayerStack,
    opts: &ContinuationOptions,
) -> std::result::Result<Vec<Complex64>, StepFailure> {
    let n = kk.len();
    let mut pred = Vec::with_capacity(n);
    for &k0 in kk {
        let p = det_partials(w0, k0, LinkingParams::Infinite, stack);
        if p.d_k == ZERO {
            return Err(StepFailure::Stall);
        }
        pred.push(k0 - p.d_w / p.d_k * (w1 - w0));
    }
    let mut out = Vec::with_capacity(n);
    for (b, &kp) in pred.iter().enumerate() {
        let k_new = newton_k(w1, kp, LinkingParams::Infinite, stack, opts.newton_iterations)
            .map_err(|_| StepFailure::Stall)?;
        let corr = (k_new - kp).norm();
        let moved = (kp - kk[b]).norm();
        let gap = pred
            .iter()
            .enumerate()
            .filter(|&(o, _)| o != b)
            .map(|(_, &q)| (q - kp).norm())
            .fold(f64::INFINITY, f64::min);
        let slack = 1e-9 * (1.0 + k_new.norm());
        if corr > 0.3 * moved + slack || corr > 0.25 * gap {
            return Err(StepFailure::Stall);
        }
        out.push(k_new);
    }
    for a in 0..n {
        for b in a + 1..n {
            if (out[a] - out[b]).norm() <= 1e-9 * (1.0 + out[a].norm()) {
                return Err(StepFailure::Collision(a, b));
            }
        }
    }
    Ok(out)
}

fn advance(
    kk: &[Complex64],
    w0: Complex64,
    w1: Complex64,
    stack: &LayerStack,
    opts: &ContinuationOptions,
    depth: u32,
) -> std::result::Result<Vec<Complex64>, StepFailure> {
    match try_step(kk, w0, w1, stack, opts) {
        Ok(v) => Ok(v),
        Err(e) if depth >= opts.max_halvings => Err(e),
        Err(_) => {
            let wm = 0.5 * (w0 + w1);
            let mid = advance(kk, w0, wm, stack, opts, depth + 1)?;
            advance(&mid, wm, w1, stack, opts, depth + 1)
        }
    }
}

fn is_axis(omega: Complex64) -> bool {
    omega.im == 0.0 || omega.re == 0.0
}

/// Pick the root of `K` for the branch: principal on the real and imaginary
/// frequency axes, nearest to the previous value elsewhere.
fn pick_k(omega: Complex64, kk: Complex64, prev: Complex64) -> Complex64 {
    let r = principal_sqrt(kk);
    if is_axis(omega) {
        r
    } else if (r - prev).norm() <= (r + prev).norm() {
        r
    } else {
        -r
    }
}

/// Continue each seed `(omega0, k)` along `contour` (which must start at
/// `omega0`). Branch identity is kept by continuation, never by sorting.
pub fn continue_branches(
    seeds: &[(Complex64, Complex64)],
    contour: &[Complex64],
    stack: &LayerStack,
    opts: &ContinuationOptions,
) -> Result<BranchTable> {
    if contour.is_empty() {
        return Err(Error::InvalidArgument("empty contour".into()));
    }
    let start = contour[0];
    if seeds.iter().any(|(om, _)| (om - start).norm() > 1e-12 * (1.0 + start.norm())) {
        return Err(Error::InvalidArgument("contour must start at the seed frequency".into()));
    }
    let w_first = start * start;
    let mut kk: Vec<Complex64> = Vec::with_capacity(seeds.len());
    for &(_, k) in seeds {
        let polished = newton_k(w_first, k * k, LinkingParams::Infinite, stack, 30)
            .map_err(|_| Error::ContinuationStall { node: 0, re_omega: start.re, im_omega: start.im })?;
        kk.push(polished);
    }
    let mut k_rows: Vec<Vec<Complex64>> = seeds.iter().map(|&(_, k)| vec![k]).collect();
    let mut kk_rows: Vec<Vec<Complex64>> = kk.iter().map(|&x| vec![x]).collect();
    // keep the seed's own sign choice at the first node
    for (b, &(_, k)) in seeds.iter().enumerate() {
        k_rows[b][0] = pick_k(Complex64::new(1.0, 1.0), kk[b], k);
    }
    for j in 1..contour.len() {
        let (w0, w1) = (contour[j - 1] * contour[j - 1], contour[j] * contour[j]);
        let next = advance(&kk, w0, w1, stack, opts, 0).map_err(|e| match e {
            StepFailure::Stall => {
                Error::ContinuationStall { node: j, re_omega: contour[j].re, im_omega: contour[j].im }
            }
            StepFailure::Collision(a, b) => Error::BranchCollision { node: j, a, b },
        })?;
        for (b, &x) in next.iter().enumerate() {
            let prev = k_rows[b][j - 1];
            k_rows[b].push(pick_k(contour[j], x, prev));
            kk_rows[b].push(x);
        }
        kk = next;
    }
    let labels = vec![None; seeds.len()];
    Ok(BranchTable { nodes: contour.to_vec(), k: k_rows, kk: kk_rows, labels })
}

/// Finite-difference weights for the first derivative at `x0` from the
/// stencil `xs` (Fornberg's recursion).
fn fd_weights(x0: Complex64, xs: &[Complex64]) -> Vec<Complex64> {
    let n = xs.len();
    let m = 1;
    let mut c = vec![vec![ZERO; m + 1]; n];
    let mut c1 = Complex64::new(1.0, 0.0);
    let mut c4 = xs[0] - x0;
    c[0][0] = Complex64::new(1.0, 0.0);
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = Complex64::new(1.0, 0.0);
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Group velocity `(dk/domega)^-1` by a centred finite difference along the
/// branch samples (five-point where available, three-point next to the
/// ends). The derivative is taken as `dK/dW` on the samples, which is smooth
/// through cut-off, and converted with `dk/domega = (omega/k) dK/dW`.
pub fn group_velocity_fd(table: &BranchTable, branch: usize, node: usize) -> Result<f64> {
    let n = table.nodes.len();
    if branch >= table.n_branches() {
        return Err(Error::MissingBranch(branch));
    }
    if node == 0 || node + 1 >= n {
        return Err(Error::EdgeNode);
    }
    let half = if node >= 2 && node + 2 < n { 2 } else { 1 };
    let idx: Vec<usize> = (node - half..=node + half).collect();
    let ws: Vec<Complex64> = idx.iter().map(|&i| table.w(i)).collect();
    let wts = fd_weights(table.w(node), &ws);
    let dkk_dw: Complex64 = idx.iter().zip(&wts).map(|(&i, c)| c * table.kk[branch][i]).sum();
    let k = table.k[branch][node];
    let omega = table.nodes[node];
    if k == ZERO {
        return Err(Error::Cutoff);
    }
    let v = (k / omega) / dkk_dw;
    Ok(v.re)
}

/// Options for [`classify_branch`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    /// Width in `Re omega` of each local slope fit.
    pub width: f64,
    /// Only nodes with `Re omega` in this range are used.
    pub band: (f64, f64),
    /// A local slope `s` matches hypothesis `h` when `|ln(s/h)| < tol`.
    pub tol: f64,
    /// Fraction of Type 1 windows above which the branch is Type 1.
    pub dominance: f64,
    /// Fraction of windows that may fall outside every hypothesis.
    pub max_unmatched: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { width: 2.0, band: (4.0, 29.0), tol: 0.7, dominance: 0.5, max_unmatched: 0.25 }
    }
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Label a branch sampled along `Im omega = const` by the least-squares
/// slope of `Re K` against `Re W`.
///
/// Slopes are fitted on consecutive windows of fixed width in `Re omega` and
/// each is matched to the nearest of `c_1^-2, c_2^-2, c_3^-2`. A branch
/// dominated by family 1 is Type 1; otherwise a single family gives Type 2
/// or Type 3 and a mix of 2 and 3 gives Type 2-3. Mixes of family 1 with
/// only one of the others are unclassified.
pub fn classify_branch(
    nodes: &[Complex64],
    kk: &[Complex64],
    speeds: [f64; 3],
    opts: &ClassifyOptions,
) -> Result<BranchLabel> {
    if kk.len() != nodes.len() {
        return Err(Error::Unclassified);
    }
    let idx: Vec<usize> =
        (0..nodes.len()).filter(|&i| nodes[i].re >= opts.band.0 && nodes[i].re <= opts.band.1).collect();
    if idx.len() < 3 {
        return Err(Error::Unclassified);
    }
    let hyp = speeds.map(|c| 1.0 / (c * c));
    let mut counts = [0usize; 3];
    let mut windows = 0usize;
    let mut unmatched = 0usize;
    let mut start = 0;
    while start + 1 < idx.len() {
        let mut end = start + 1;
        while end + 1 < idx.len() && nodes[idx[end]].re - nodes[idx[start]].re < opts.width {
            end += 1;
        }
        // fold a short tail into the last window
        if end + 1 < idx.len() && nodes[idx[idx.len() - 1]].re - nodes[idx[end]].re < 0.5 * opts.width {
            end = idx.len() - 1;
        }
        let xs: Vec<f64> = idx[start..=end].iter().map(|&i| (nodes[i] * nodes[i]).re).collect();
        let ys: Vec<f64> = idx[start..=end].iter().map(|&i| kk[i].re).collect();
        let s = ls_slope(&xs, &ys);
        windows += 1;
        let best = if s > 0.0 {
            (0..3).map(|j| (j, (s / hyp[j]).ln().abs())).min_by(|a, b| a.1.total_cmp(&b.1))
        } else {
            None
        };
        match best {
            Some((j, d)) if d < opts.tol => counts[j] += 1,
            _ => unmatched += 1,
        }
        start = end;
    }
    if unmatched as f64 > opts.max_unmatched * windows as f64 {
        return Err(Error::Unclassified);
    }
    let matched = (windows - unmatched) as f64;
    if counts[0] as f64 > opts.dominance * matched {
        return Ok(BranchLabel::Type1);
    }
    match (counts[0] > 0, counts[1] > 0, counts[2] > 0) {
        (false, true, false) => Ok(BranchLabel::Type2),
        (false, false, true) => Ok(BranchLabel::Type3),
        (_, true, true) => Ok(BranchLabel::Type23),
        _ => Err(Error::Unclassified),
    }
}

impl BranchTable {
    /// Label every branch from the nodes lying on `Im omega = im`.
    /// Branches that fit no hypothesis are stored as `Unclassified`.
    pub fn classify(&mut self, im: f64, speeds: [f64; 3], opts: &ClassifyOptions) {
        let sel: Vec<usize> = (0..self.nodes.len()).filter(|&i| (self.nodes[i].im - im).abs() < 1e-9).collect();
        let nodes: Vec<Complex64> = sel.iter().map(|&i| self.nodes[i]).collect();
        self.labels = self
            .kk
            .iter()
            .map(|row| {
                let kk: Vec<Complex64> = sel.iter().map(|&i| row[i]).collect();
                Some(classify_branch(&nodes, &kk, speeds, opts).unwrap_or(BranchLabel::Unclassified))
            })
            .collect();
    }
}
