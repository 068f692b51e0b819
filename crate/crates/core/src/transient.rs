//! Transient signals as sums of modal frequency integrals,
//!
//! ```text
//! u~(t) = sum_n  int  f^(omega) P_n(omega) U_n(omega, y0) exp(i k_n L - i omega t) d omega,
//! ```
//!
//! evaluated along contours that may leave the real axis for a flat top at
//! `Im omega = Omega`. Raising the contour over the exciting band damps the
//! slow modes and leaves the fast (precursor) part of the signal.

use num_complex::Complex64;

use crate::dispersion::{continue_branches, count_above, imaginary_axis_seeds, polyline, BranchTable, ContinuationOptions};
use crate::error::{Error, Result};
use crate::medium::LayerStack;
use crate::modes::{amplitude_p, eval_profile, solve_coefficients};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Gaussian excitation spectrum `exp(-(omega - center)^2 / width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationSpectrum {
    pub center: f64,
    pub width: f64,
}

impl Default for ExcitationSpectrum {
    fn default() -> Self {
        ExcitationSpectrum { center: 12.0, width: 16.0 }
    }
}

impl ExcitationSpectrum {
    /// Analytic continuation of the `Re omega > 0` branch.
    pub fn eval(&self, omega: Complex64) -> Complex64 {
        let d = omega - self.center;
        (-d * d / self.width).exp()
    }

    /// The spectrum on the real axis, even in `omega`.
    pub fn eval_real(&self, omega: f64) -> f64 {
        let d = omega.abs() - self.center;
        (-d * d / self.width).exp()
    }

    /// Real interval where the spectrum exceeds `threshold` (relative to its
    /// peak), clipped at zero.
    pub fn band(&self, threshold: f64) -> (f64, f64) {
        let r = (-self.width * threshold.ln()).sqrt();
        ((self.center - r).max(0.0), self.center + r)
    }
}

/// Grid resolution rule: at most `2 pi / (samples (slowness L + t_max))`
/// between nodes, so that `exp(i k L - i omega t)` is resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacingPolicy {
    /// Bound on `|dk/domega|` over the contour.
    pub slowness: f64,
    pub distance: f64,
    pub t_max: f64,
    pub samples: f64,
}

impl Default for SpacingPolicy {
    fn default() -> Self {
        SpacingPolicy { slowness: 1.0, distance: 10.0, t_max: 15.0, samples: 20.0 }
    }
}

impl SpacingPolicy {
    pub fn max_step(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.samples * (self.slowness * self.distance + self.t_max))
    }
}

/// Geometry of a contour: real axis from `omega_min` to `band.0`, up to
/// `Im omega = rise`, along the flat top to `band.1`, back down and along
/// the real axis to `omega_max`. `rise = 0` is the real segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub rise: f64,
    pub band: (f64, f64),
    pub omega_min: f64,
    pub omega_max: f64,
}

impl ContourSpec {
    /// The three contours of the reference experiment: `a` on the real
    /// axis, `b` raised to 1 and `c` raised to 3 over the exciting band.
    pub fn preset(name: &str) -> Result<Self> {
        let rise = match name {
            "a" => 0.0,
            "b" => 1.0,
            "c" => 3.0,
            other => return Err(Error::InvalidArgument(format!("unknown contour preset '{other}'"))),
        };
        Ok(ContourSpec { rise, band: (1.0, 30.0), omega_min: 0.05, omega_max: 32.5 })
    }

    pub fn vertices(&self) -> Vec<Complex64> {
        let r = |x: f64| Complex64::new(x, 0.0);
        if self.rise == 0.0 {
            return vec![r(self.omega_min), r(self.omega_max)];
        }
        let (lo, hi) = self.band;
        vec![
            r(self.omega_min),
            r(lo),
            Complex64::new(lo, self.rise),
            Complex64::new(hi, self.rise),
            r(hi),
            r(self.omega_max),
        ]
    }
}

/// Quadrature nodes and weights along a piecewise-linear contour.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyContour {
    pub spec: ContourSpec,
    pub nodes: Vec<Complex64>,
    pub weights: Vec<Complex64>,
}

const GL_X: [f64; 8] = [
    -0.9602898564975363,
    -0.7966664774136267,
    -0.525_532_409_916_329,
    -0.1834346424956498,
    0.1834346424956498,
    0.525_532_409_916_329,
    0.7966664774136267,
    0.9602898564975363,
];
const GL_W: [f64; 8] = [
    0.1012285362903763,
    0.2223810344533745,
    0.3137066458778873,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

/// Cut-off frequencies (`K_n = 0`) of the ideal waveguide in `(0, omega_max)`.
pub fn cutoff_frequencies(stack: &LayerStack, omega_max: f64) -> Vec<f64> {
    fn split(lo: f64, hi: f64, nlo: usize, nhi: usize, stack: &LayerStack, out: &mut Vec<f64>) {
        if nhi == nlo {
            return;
        }
        if hi - lo <= 1e-13 * hi {
            out.extend(std::iter::repeat(0.5 * (lo + hi)).take(nhi - nlo));
            return;
        }
        let mid = 0.5 * (lo + hi);
        let nm = count_above(mid, 0.0, stack);
        split(lo, mid, nlo, nm, stack, out);
        split(mid, hi, nm, nhi, stack, out);
    }
    let w_max = omega_max * omega_max;
    let steps = 200;
    let mut out = Vec::new();
    let mut prev = (1e-12, count_above(1e-12, 0.0, stack));
    for i in 1..=steps {
        let w = w_max * i as f64 / steps as f64;
        let n = count_above(w, 0.0, stack);
        split(prev.0, w, prev.1, n, stack, &mut out);
        prev = (w, n);
    }
    out.into_iter().map(f64::sqrt).collect()
}

/// Gauss-Legendre panels on `[a, b]`, optionally through the map
/// `tau -> tau^2 (3 - 2 tau)` that clusters nodes at both ends, where
/// cut-off square-root singularities sit.
fn panels(a: Complex64, b: Complex64, max_step: f64, graded: bool, nodes: &mut Vec<Complex64>, weights: &mut Vec<Complex64>) {
    let len = (b - a).norm();
    if len == 0.0 {
        return;
    }
    // average node spacing at most max_step; a graded piece gets two extra panels
    let mut n = (len / (8.0 * max_step)).ceil() as usize;
    if graded {
        n += 2;
    }
    let n = n.max(1);
    for p in 0..n {
        let mid = (p as f64 + 0.5) / n as f64;
        let half = 0.5 / n as f64;
        for i in 0..8 {
            let tau = mid + half * GL_X[i];
            let (phi, dphi) = if graded { (tau * tau * (3.0 - 2.0 * tau), 6.0 * tau * (1.0 - tau)) } else { (tau, 1.0) };
            nodes.push(a + (b - a) * phi);
            weights.push((b - a) * (GL_W[i] * half * dphi));
        }
    }
}

/// Build the quadrature for `spec`. Real segments are split at the given
/// cut-off frequencies and graded towards them.
pub fn build_contour(spec: &ContourSpec, policy: &SpacingPolicy, cutoffs: &[f64]) -> Result<FrequencyContour> {
    if !(spec.rise >= 0.0) || !(spec.omega_min > 0.0) || !(spec.omega_max > spec.omega_min) {
        return Err(Error::InvalidArgument("contour needs rise >= 0 and 0 < omega_min < omega_max".into()));
    }
    if spec.rise > 0.0 && !(spec.omega_min <= spec.band.0 && spec.band.0 < spec.band.1 && spec.band.1 <= spec.omega_max) {
        return Err(Error::InvalidArgument("flat top must lie inside [omega_min, omega_max]".into()));
    }
    let step = policy.max_step();
    let verts = spec.vertices();
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in verts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.im == 0.0 && b.im == 0.0 {
            let mut cuts: Vec<f64> = cutoffs.iter().copied().filter(|&c| c > a.re && c < b.re).collect();
            cuts.sort_by(f64::total_cmp);
            let mut pts = vec![a.re];
            pts.extend(cuts);
            pts.push(b.re);
            for q in pts.windows(2) {
                let graded = q[0] != a.re || q[1] != b.re;
                panels(q[0].into(), q[1].into(), step, graded, &mut nodes, &mut weights);
            }
        } else {
            panels(a, b, step, false, &mut nodes, &mut weights);
        }
    }
    Ok(FrequencyContour { spec: *spec, nodes, weights })
}

/// Track `n_branches` branches from `omega0 = i * im0` to the contour nodes:
/// down the imaginary axis, along the real axis to the contour start, then
/// node by node. Returns the table restricted to the contour nodes.
pub fn track_branches(
    contour: &FrequencyContour,
    n_branches: usize,
    im0: f64,
    stack: &LayerStack,
    opts: &ContinuationOptions,
) -> Result<BranchTable> {
    let seeds = imaginary_axis_seeds(im0, n_branches, stack)?;
    let omega0 = seeds[0].0;
    let first = contour.nodes[0];
    let mut path = polyline(&[omega0, Complex64::new(0.0, 0.0), Complex64::new(first.re, 0.0)], 0.1);
    if first.im != 0.0 {
        path.push(first);
    }
    let approach = path.len();
    // the first contour node is the end of the approach path
    if (path[approach - 1] - first).norm() > 0.0 {
        path.push(first);
    }
    let start = path.len() - 1;
    path.extend(contour.nodes.iter().skip(1).copied());
    let table = continue_branches(&seeds, &path, stack, opts)?;
    Ok(table.slice(start, path.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthCheck {
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub spectrum: ExcitationSpectrum,
    /// Nodes where `|f^| < threshold` are skipped.
    pub threshold: f64,
    /// Per selected branch, the real-axis peak of `|f^ P U exp(i k L)|`;
    /// the integrand may not exceed `factor` times it anywhere.
    pub growth: Option<(GrowthCheck, Vec<f64>)>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { spectrum: ExcitationSpectrum::default(), threshold: 1e-8, growth: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub t: Vec<f64>,
    pub u_complex: Vec<Complex64>,
    pub u: Vec<f64>,
    pub distance: f64,
    pub y0: f64,
    pub subset: Vec<usize>,
    pub rise: f64,
}

/// `f^ P U exp(i k L)` for every node of one branch (zero where skipped).
pub fn branch_integrand(
    table: &BranchTable,
    branch: usize,
    distance: f64,
    y0: f64,
    stack: &LayerStack,
    opts: &SynthesisOptions,
) -> Result<Vec<Complex64>> {
    let peak = 1.0;
    let mut out = Vec::with_capacity(table.nodes.len());
    for (j, &omega) in table.nodes.iter().enumerate() {
        let f = opts.spectrum.eval(omega);
        if f.norm() < opts.threshold * peak {
            out.push(ZERO);
            continue;
        }
        let k = table.k[branch][j];
        let prof = solve_coefficients(omega, k, stack)?;
        let amp = amplitude_p(&prof, y0)?;
        let u = eval_profile(&prof, y0)?;
        out.push(f * amp * u * (Complex64::new(0.0, distance) * k).exp());
    }
    Ok(out)
}

/// Sum of the modal integrals of `subset` over `contour` at the times `t`.
pub fn synthesize(
    contour: &FrequencyContour,
    table: &BranchTable,
    subset: &[usize],
    distance: f64,
    y0: f64,
    t: &[f64],
    stack: &LayerStack,
    opts: &SynthesisOptions,
) -> Result<Signal> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("empty mode subset".into()));
    }
    if let Some(&b) = subset.iter().find(|&&b| b >= table.n_branches()) {
        return Err(Error::MissingBranch(b));
    }
    if table.nodes.len() != contour.nodes.len() {
        return Err(Error::InvalidArgument("branch table does not match the contour".into()));
    }
    stack.layer_at(y0)?;
    if contour.nodes.iter().all(|&w| opts.spectrum.eval(w).norm() < opts.threshold) {
        return Err(Error::BandEmpty);
    }
    let mut integrands = Vec::with_capacity(subset.len());
    for (slot, &b) in subset.iter().enumerate() {
        let g = branch_integrand(table, b, distance, y0, stack, opts)?;
        if let Some((check, peaks)) = &opts.growth {
            if let Some(j) = g.iter().position(|x| x.norm() > check.factor * peaks[slot]) {
                return Err(Error::GrowthViolation { node: j, branch: b });
            }
        }
        integrands.push(g);
    }
    // fixed accumulation order: node, then branch
    let mut acc = vec![ZERO; t.len()];
    for (j, (&omega, &wgt)) in contour.nodes.iter().zip(&contour.weights).enumerate() {
        let g: Complex64 = integrands.iter().map(|row| row[j]).sum::<Complex64>() * wgt;
        if g == ZERO {
            continue;
        }
        let mi = Complex64::new(0.0, -1.0) * omega;
        for (a, &tt) in acc.iter_mut().zip(t) {
            *a += g * (mi * tt).exp();
        }
    }
    Ok(Signal {
        t: t.to_vec(),
        u: acc.iter().map(|z| z.re).collect(),
        u_complex: acc,
        distance,
        y0,
        subset: subset.to_vec(),
        rise: contour.spec.rise,
    })
}

/// `dk/domega` at a node from the table (centred differences in `W`).
fn dk_domega(table: &BranchTable, branch: usize, node: usize) -> Result<Complex64> {
    let n = table.nodes.len();
    if node == 0 || node + 1 >= n {
        return Err(Error::EdgeNode);
    }
    let (a, b) = (node - 1, node + 1);
    let (ka, kb) = (table.k[branch][a], table.k[branch][b]);
    let (oa, ob) = (table.nodes[a], table.nodes[b]);
    let (o, k) = (table.nodes[node], table.k[branch][node]);
    // second-order accurate on uneven nodes
    let h1 = o - oa;
    let h2 = ob - o;
    Ok(ka * (-h2 / (h1 * (h1 + h2))) + k * ((h2 - h1) / (h1 * h2)) + kb * (h1 / (h2 * (h1 + h2))))
}

/// `t - L Re(dk/domega)`: the rate at which `log|exp(i k L - i omega t)|`
/// grows with `Im omega`. Negative means the contour may rise here.
pub fn shiftability(table: &BranchTable, branch: usize, node: usize, distance: f64, t: f64) -> Result<f64> {
    if branch >= table.n_branches() {
        return Err(Error::MissingBranch(branch));
    }
    Ok(t - distance * dk_domega(table, branch, node)?.re)
}

/// Decay rate `Im k - Im omega / v` of a precursor travelling at speed `v`.
pub fn precursor_decay(omega: Complex64, k: Complex64, v: f64) -> f64 {
    k.im - omega.im / v
}

/// Relative RMS of `a - b` against `b` over `t in [t0, t1]`.
pub fn relative_rms(t: &[f64], a: &[f64], b: &[f64], t0: f64, t1: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&tt, &x), &y) in t.iter().zip(a).zip(b) {
        if tt >= t0 && tt <= t1 {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    (num / den).sqrt()
}

/// Uniform time grid `0, dt, ..., t_max`.
pub fn time_grid(t_max: f64, dt: f64) -> Vec<f64> {
    let n = (t_max / dt).round() as usize;
    (0..=n).map(|i| i as f64 * dt).collect()
}

/// Real-axis peak of `|f^ P U exp(i k L)|` per branch, for the growth check.
pub fn real_axis_peaks(table: &BranchTable, subset: &[usize], distance: f64, y0: f64, stack: &LayerStack, opts: &SynthesisOptions) -> Result<Vec<f64>> {
    subset
        .iter()
        .map(|&b| {
            let g = branch_integrand(table, b, distance, y0, stack, opts)?;
            Ok(g.iter().map(|x| x.norm()).fold(0.0, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    // uniform strip of depth 1, c = 1, rho = 1: k_n = sqrt(omega^2 - (n pi)^2)
    fn uniform_k(n: usize, omega: Complex64) -> Complex64 {
        let z = omega * omega - (n as f64 * PI).powi(2);
        let k = z.sqrt();
        if k.im < 0.0 || (k.im == 0.0 && k.re < 0.0) {
            -k
        } else {
            k
        }
    }

    fn uniform_table(nodes: &[Complex64], n: usize) -> BranchTable {
        let k: Vec<Vec<Complex64>> = (0..n).map(|b| nodes.iter().map(|&o| uniform_k(b, o)).collect()).collect();
        let kk = k.iter().map(|r| r.iter().map(|x| x * x).collect()).collect();
        BranchTable { nodes: nodes.to_vec(), k, kk, labels: vec![None; n] }
    }

    // composite Simpson on [a, b] of g(s), n even
    fn simpson(a: f64, b: f64, n: usize, g: impl Fn(f64) -> Complex64) -> Complex64 {
        let h = (b - a) / n as f64;
        let mut acc = g(a) + g(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += g(a + h * i as f64) * w;
        }
        acc * (h / 3.0)
    }

    // independent real-axis evaluation of one uniform mode at y0 = H, with
    // omega = cut +- s^2 around the cut-off to remove the 1/k singularity
    fn uniform_oracle(n: usize, t: f64, distance: f64, lo: f64, hi: f64) -> Complex64 {
        let f = ExcitationSpectrum::default();
        let pu = |k: Complex64| if n == 0 { 1.0 / (2.0 * Complex64::i() * k) } else { 1.0 / (Complex64::i() * k) };
        let g = |w: f64| {
            let k = uniform_k(n, c(w, 0.0));
            pu(k) * f.eval_real(w) * (Complex64::i() * (k * distance - w * t)).exp()
        };
        if n == 0 {
            return simpson(lo, hi, 200_000, g);
        }
        let cut = n as f64 * PI;
        let left = simpson(0.0, (cut - lo).sqrt(), 20_000, |s: f64| g(cut - s.max(1e-6).powi(2)) * (2.0 * s.max(1e-6)));
        let right = simpson(0.0, (hi - cut).sqrt(), 200_000, |s: f64| g(cut + s.max(1e-6).powi(2)) * (2.0 * s.max(1e-6)));
        left + right
    }

    fn real_contour(rise: f64) -> FrequencyContour {
        let spec = ContourSpec { rise, ..ContourSpec::preset("a").unwrap() };
        build_contour(&spec, &SpacingPolicy::default(), &[PI, 2.0 * PI]).unwrap()
    }

    #[test]
    fn spectrum_peak_and_decay() {
        let f = ExcitationSpectrum::default();
        assert_eq!(f.eval_real(12.0), 1.0);
        assert!((f.eval(c(12.0, 0.0)) - 1.0).norm() < 1e-15);
        let mut prev = 1.0;
        for i in 1..100 {
            let v = f.eval_real(12.0 + 0.2 * i as f64);
            assert!(v < prev);
            assert!((f.eval_real(12.0 - 0.2 * i as f64) - v).abs() < 1e-15 || 12.0 - 0.2 * i as f64 <= 0.0);
            prev = v;
        }
        let (lo, hi) = f.band(1e-8);
        assert!((f.eval_real(hi) - 1e-8).abs() < 1e-15);
        assert!((0.0..12.0).contains(&lo));
        assert!((f.eval(c(7.0, 0.0)).re - f.eval_real(7.0)).abs() < 1e-15);
    }

    #[test]
    fn flat_contour_is_a_real_segment() {
        let q = real_contour(0.0);
        assert!(q.nodes.iter().all(|w| w.im == 0.0 && w.re > 0.05 && w.re < 32.5));
        assert!(q.nodes.windows(2).all(|p| p[1].re > p[0].re));
        let total: Complex64 = q.weights.iter().sum();
        assert!((total - (32.5 - 0.05)).norm() < 1e-12);
    }

    #[test]
    fn raised_contour_has_flat_top() {
        let q = build_contour(&ContourSpec::preset("c").unwrap(), &SpacingPolicy::default(), &[]).unwrap();
        let top = q.nodes.iter().filter(|w| (w.im - 3.0).abs() < 1e-12).count();
        assert!(top > 100);
        assert!(q.nodes.iter().all(|w| w.im >= 0.0 && w.im <= 3.0));
        // weights integrate 1 from start to end
        let total: Complex64 = q.weights.iter().sum();
        assert!((total - (32.5 - 0.05)).norm() < 1e-10);
    }

    #[test]
    fn node_count_scales_with_distance() {
        let spec = ContourSpec::preset("a").unwrap();
        let p1 = SpacingPolicy { distance: 10.0, t_max: 0.0, ..Default::default() };
        let p2 = SpacingPolicy { distance: 20.0, t_max: 0.0, ..Default::default() };
        let n1 = build_contour(&spec, &p1, &[]).unwrap().nodes.len() as f64;
        let n2 = build_contour(&spec, &p2, &[]).unwrap().nodes.len() as f64;
        assert!((n2 / n1 - 2.0).abs() < 0.02, "{n1} {n2}");
    }

    #[test]
    fn bad_contours_rejected() {
        let mut s = ContourSpec::preset("b").unwrap();
        s.band = (1.0, 40.0);
        assert!(build_contour(&s, &SpacingPolicy::default(), &[]).is_err());
        assert!(ContourSpec::preset("z").is_err());
    }

    #[test]
    fn quadrature_follows_cauchy() {
        // an entire integrand gives the same integral on every contour
        let g = |w: Complex64| (-(w - 12.0) * (w - 12.0) / 16.0 + Complex64::i() * w * 3.0).exp();
        let sum = |q: &FrequencyContour| q.nodes.iter().zip(&q.weights).map(|(&w, &h)| g(w) * h).sum::<Complex64>();
        let a = sum(&build_contour(&ContourSpec::preset("a").unwrap(), &SpacingPolicy::default(), &[]).unwrap());
        for name in ["b", "c"] {
            let b = sum(&build_contour(&ContourSpec::preset(name).unwrap(), &SpacingPolicy::default(), &[]).unwrap());
            assert!((a - b).norm() < 1e-12 * a.norm().max(1.0), "{name}: {a} {b}");
        }
        let oracle = simpson(0.05, 32.5, 100_000, |w| g(c(w, 0.0)));
        assert!((a - oracle).norm() < 1e-10 * oracle.norm());
    }

    #[test]
    fn uniform_modes_match_oracle() {
        let stack = LayerStack::uniform(1.0, 1.0, 1.0).unwrap();
        let q = real_contour(0.0);
        let table = uniform_table(&q.nodes, 2);
        let t = [0.0, 5.0, 10.0, 12.5];
        let opts = SynthesisOptions::default();
        for n in 0..2 {
            let sig = synthesize(&q, &table, &[n], 10.0, 1.0, &t, &stack, &opts).unwrap();
            for (i, &tt) in t.iter().enumerate() {
                let want = uniform_oracle(n, tt, 10.0, 0.05, 32.5);
                let scale = 1e-3_f64.max(want.norm());
                assert!((sig.u_complex[i] - want).norm() < 1e-6 * scale, "n={n} t={tt}: {} vs {want}", sig.u_complex[i]);
                assert_eq!(sig.u[i], sig.u_complex[i].re);
            }
        }
    }

    #[test]
    fn raised_contour_reproduces_real_axis_sum() {
        let stack = LayerStack::uniform(1.0, 1.0, 1.0).unwrap();
        let t = time_grid(15.0, 0.5);
        let opts = SynthesisOptions::default();
        let qa = real_contour(0.0);
        let ua = synthesize(&qa, &uniform_table(&qa.nodes, 3), &[0, 1, 2], 10.0, 1.0, &t, &stack, &opts).unwrap();
        for rise in [1.0, 3.0] {
            let qb = real_contour(rise);
            let ub = synthesize(&qb, &uniform_table(&qb.nodes, 3), &[0, 1, 2], 10.0, 1.0, &t, &stack, &opts).unwrap();
            let peak = ua.u_complex.iter().map(|z| z.norm()).fold(0.0, f64::max);
            // late times on the higher contour cancel terms of size exp(rise t)
            let t_end = if rise > 1.0 { 12.0 } else { 15.0 };
            for ((a, b), _) in ua.u_complex.iter().zip(&ub.u_complex).zip(&t).filter(|(_, &tt)| tt <= t_end) {
                assert!((a - b).norm() < 1e-6 * peak, "rise {rise}: {a} {b}");
            }
        }
    }

    #[test]
    fn halving_the_spacing_changes_little() {
        let stack = LayerStack::uniform(1.0, 1.0, 1.0).unwrap();
        let t = time_grid(15.0, 0.25);
        let opts = SynthesisOptions::default();
        let spec = ContourSpec::preset("b").unwrap();
        let run = |samples: f64| {
            let q = build_contour(&spec, &SpacingPolicy { samples, ..Default::default() }, &[PI, 2.0 * PI]).unwrap();
            synthesize(&q, &uniform_table(&q.nodes, 3), &[0, 1, 2], 10.0, 1.0, &t, &stack, &opts).unwrap()
        };
        let (a, b) = (run(20.0), run(40.0));
        let peak = b.u_complex.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (x, y) in a.u_complex.iter().zip(&b.u_complex) {
            assert!((x - y).norm() < 1e-4 * peak);
        }
    }

    #[test]
    fn synthesis_errors() {
        let stack = LayerStack::uniform(1.0, 1.0, 1.0).unwrap();
        let q = real_contour(0.0);
        let table = uniform_table(&q.nodes, 2);
        let t = [0.0, 1.0];
        let opts = SynthesisOptions::default();
        assert_eq!(synthesize(&q, &table, &[0, 2], 10.0, 1.0, &t, &stack, &opts).unwrap_err(), Error::MissingBranch(2));
        assert!(synthesize(&q, &table, &[], 10.0, 1.0, &t, &stack, &opts).is_err());
        assert_eq!(synthesize(&q, &table, &[0], 10.0, 2.0, &t, &stack, &opts).unwrap_err(), Error::OutOfRange(2.0));
        let far = SynthesisOptions { spectrum: ExcitationSpectrum { center: 200.0, width: 16.0 }, ..Default::default() };
        assert_eq!(synthesize(&q, &table, &[0], 10.0, 1.0, &t, &stack, &far).unwrap_err(), Error::BandEmpty);

        // the wrong sheet above the axis grows like exp(Im k L)
        let peaks = real_axis_peaks(&table, &[1], 10.0, 1.0, &stack, &opts).unwrap();
        let qc = real_contour(3.0);
        let mut tc = uniform_table(&qc.nodes, 2);
        let guarded = SynthesisOptions { growth: Some((GrowthCheck { factor: 10.0 }, peaks)), ..Default::default() };
        assert!(synthesize(&qc, &tc, &[1], 10.0, 1.0, &t, &stack, &guarded).is_ok());
        for (j, w) in qc.nodes.iter().enumerate() {
            if w.im > 0.0 {
                tc.k[1][j] = -tc.k[1][j];
            }
        }
        let err = synthesize(&qc, &tc, &[1], 10.0, 1.0, &t, &stack, &guarded).unwrap_err();
        assert!(matches!(err, Error::GrowthViolation { branch: 1, .. }), "{err:?}");
    }

    #[test]
    fn shiftability_follows_group_velocity() {
        let q = real_contour(0.0);
        let table = uniform_table(&q.nodes, 2);
        let mid = q.nodes.len() / 2;
        // v_gr = 1: shiftable when L / t > 1
        assert!(shiftability(&table, 0, mid, 10.0, 5.0).unwrap() < 0.0);
        assert!(shiftability(&table, 0, mid, 10.0, 20.0).unwrap() > 0.0);
        assert!((shiftability(&table, 0, mid, 10.0, 5.0).unwrap() + 5.0).abs() < 1e-9);
        // n = 1 is slower than c everywhere, so L / t below c forbids rising
        for j in (1..q.nodes.len() - 1).filter(|&j| q.nodes[j].re > 15.0).step_by(37) {
            assert!(shiftability(&table, 1, j, 10.0, 10.5).unwrap() > 0.0);
        }
        assert_eq!(shiftability(&table, 0, 0, 10.0, 5.0), Err(Error::EdgeNode));
        assert_eq!(shiftability(&table, 5, mid, 10.0, 5.0), Err(Error::MissingBranch(5)));
    }

    #[test]
    fn precursor_decay_signs() {
        assert_eq!(precursor_decay(c(5.0, 0.0), c(3.0, 0.0), 3.0), 0.0);
        let (w, k) = (c(8.0, 1.5), c(2.0, 0.9));
        let a = precursor_decay(w, k, 3.0);
        assert!((precursor_decay(w.conj(), k.conj(), 3.0) + a).abs() < 1e-15);
    }

    #[test]
    fn relative_rms_basics() {
        let t = time_grid(1.0, 0.1);
        assert_eq!(t.len(), 11);
        let a: Vec<f64> = t.iter().map(|x| x.sin()).collect();
        let b: Vec<f64> = a.iter().map(|x| 1.1 * x).collect();
        assert!((relative_rms(&t, &b, &a, 0.0, 1.0) - 0.1).abs() < 1e-12);
    }
}
