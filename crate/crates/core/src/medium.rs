//! Layer geometry, material constants and the transverse wavenumbers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three fluid layers stacked between Neumann walls at `y = 0` and `y = H3`.
///
/// Layer 1 occupies `[0, H1]`, layer 2 `[H1, H2]` and layer 3 `[H2, H3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStack {
    #[serde(rename = "H1")]
    pub h1_top: f64,
    #[serde(rename = "H2")]
    pub h2_top: f64,
    #[serde(rename = "H3")]
    pub h3_top: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    preset: Option<String>,
    #[serde(rename = "H1")]
    h1: Option<f64>,
    #[serde(rename = "H2")]
    h2: Option<f64>,
    #[serde(rename = "H3")]
    h3: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    c3: Option<f64>,
    rho1: Option<f64>,
    rho2: Option<f64>,
    rho3: Option<f64>,
}

impl LayerStack {
    pub fn new(bounds: [f64; 3], speeds: [f64; 3], densities: [f64; 3]) -> Result<Self> {
        let s = LayerStack {
            h1_top: bounds[0],
            h2_top: bounds[1],
            h3_top: bounds[2],
            c1: speeds[0],
            c2: speeds[1],
            c3: speeds[2],
            rho1: densities[0],
            rho2: densities[1],
            rho3: densities[2],
        };
        s.validate()?;
        Ok(s)
    }

    /// The configuration used throughout the numerical examples:
    /// H = (1, 2, 2.6), c = (1, 1.7, 3.2), rho = (15, 1, 1).
    pub fn reference() -> Self {
        LayerStack::new([1.0, 2.0, 2.6], [1.0, 1.7, 3.2], [15.0, 1.0, 1.0])
            .expect("reference stack is valid")
    }

    /// A homogeneous waveguide of the given depth split into three equal layers.
    pub fn uniform(depth: f64, c: f64, rho: f64) -> Result<Self> {
        LayerStack::new([depth / 3.0, 2.0 * depth / 3.0, depth], [c; 3], [rho; 3])
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "reference" => Ok(Self::reference()),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }

    /// Parse a TOML configuration. Either `preset = "reference"` or all nine
    /// keys `H1..H3, c1..c3, rho1..rho3`; explicit keys override a preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let base = match cfg.preset.as_deref() {
            Some(name) => Some(Self::preset(name)?),
            None => None,
        };
        let pick = |v: Option<f64>, from: fn(&LayerStack) -> f64, key: &str| -> Result<f64> {
            match (v, base.as_ref()) {
                (Some(x), _) => Ok(x),
                (None, Some(b)) => Ok(from(b)),
                (None, None) => Err(Error::Config(format!("missing key '{key}'"))),
            }
        };
        LayerStack::new(
            [
                pick(cfg.h1, |s| s.h1_top, "H1")?,
                pick(cfg.h2, |s| s.h2_top, "H2")?,
                pick(cfg.h3, |s| s.h3_top, "H3")?,
            ],
            [
                pick(cfg.c1, |s| s.c1, "c1")?,
                pick(cfg.c2, |s| s.c2, "c2")?,
                pick(cfg.c3, |s| s.c3, "c3")?,
            ],
            [
                pick(cfg.rho1, |s| s.rho1, "rho1")?,
                pick(cfg.rho2, |s| s.rho2, "rho2")?,
                pick(cfg.rho3, |s| s.rho3, "rho3")?,
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.h1_top, self.h2_top, self.h3_top, self.c1, self.c2, self.c3, self.rho1,
            self.rho2, self.rho3,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidStack("non-finite parameter".into()));
        }
        if !(0.0 < self.h1_top && self.h1_top < self.h2_top && self.h2_top < self.h3_top) {
            return Err(Error::InvalidStack(format!(
                "boundaries must satisfy 0 < H1 < H2 < H3, got ({}, {}, {})",
                self.h1_top, self.h2_top, self.h3_top
            )));
        }
        if self.speeds().iter().any(|&c| c <= 0.0) {
            return Err(Error::InvalidStack("sound speeds must be positive".into()));
        }
        if self.densities().iter().any(|&r| r <= 0.0) {
            return Err(Error::InvalidStack("densities must be positive".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> [f64; 3] {
        [self.h1_top, self.h2_top, self.h3_top]
    }

    pub fn thicknesses(&self) -> [f64; 3] {
        [self.h1_top, self.h2_top - self.h1_top, self.h3_top - self.h2_top]
    }

    pub fn speeds(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }

    pub fn densities(&self) -> [f64; 3] {
        [self.rho1, self.rho2, self.rho3]
    }

    pub fn depth(&self) -> f64 {
        self.h3_top
    }

    /// Zero-based layer index for `y`, with interfaces belonging to the upper layer.
    pub fn layer_at(&self, y: f64) -> Result<usize> {
        if !(0.0..=self.h3_top).contains(&y) {
            return Err(Error::OutOfRange(y));
        }
        Ok(if y < self.h1_top {
            0
        } else if y < self.h2_top {
            1
        } else {
            2
        })
    }

    /// `W/c_j^2 - K` for the zero-based layer `j`, the square of `alpha_j`.
    pub fn radicand(&self, w: Complex64, kk: Complex64, j: usize) -> Complex64 {
        let c = self.speeds()[j];
        clean_zero(w / (c * c) - kk)
    }
}

/// Linking parameters of the interfaces. `Infinite` recovers ideal
/// continuity of pressure and normal velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkingParams {
    Finite { eps1: Complex64, eps2: Complex64 },
    Infinite,
}

impl LinkingParams {
    pub fn real(eps1: f64, eps2: f64) -> Self {
        LinkingParams::Finite { eps1: Complex64::new(eps1, 0.0), eps2: Complex64::new(eps2, 0.0) }
    }

    pub fn decoupled() -> Self {
        Self::real(0.0, 0.0)
    }

    pub fn conj(&self) -> Self {
        match *self {
            LinkingParams::Finite { eps1, eps2 } => {
                LinkingParams::Finite { eps1: eps1.conj(), eps2: eps2.conj() }
            }
            LinkingParams::Infinite => LinkingParams::Infinite,
        }
    }
}

/// A spectral point: frequency and longitudinal wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralVars {
    pub omega: Complex64,
    pub k: Complex64,
}

impl SpectralVars {
    pub fn new(omega: Complex64, k: Complex64) -> Self {
        SpectralVars { omega, k }
    }

    /// Build from `(W, K)` using principal square roots.
    pub fn from_squares(w: Complex64, kk: Complex64) -> Self {
        SpectralVars { omega: principal_sqrt(w), k: principal_sqrt(kk) }
    }

    pub fn w(&self) -> Complex64 {
        self.omega * self.omega
    }

    pub fn kk(&self) -> Complex64 {
        self.k * self.k
    }
}

/// Replace a negative-zero imaginary part by `+0` so that the principal
/// root of a negative real number is `+i`.
pub(crate) fn clean_zero(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        Complex64::new(z.re, 0.0)
    } else {
        z
    }
}

/// Principal square root with the cut on the negative real axis and
/// `sqrt(-x) = +i sqrt(x)`.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    clean_zero(z).sqrt()
}

/// `alpha_j = sqrt(W/c_j^2 - K)` on the principal branch; `layer` is 1-based.
pub fn alpha(w: Complex64, kk: Complex64, layer: usize, stack: &LayerStack) -> Result<Complex64> {
    if !(1..=3).contains(&layer) {
        return Err(Error::InvalidArgument(format!("layer index {layer} not in 1..=3")));
    }
    Ok(principal_sqrt(stack.radicand(w, kk, layer - 1)))
}
