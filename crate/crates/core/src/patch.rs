//! Species and landscape ingredients.
//!
//! A patch characteristic θ maps to a survival probability `s(θ)`, a
//! weight `a(θ)` and a colonisation function `f(x; θ)` of the connectivity
//! `x`. Phase-structured colonisation has the form `s(θ)·f̄(x; θ)` with
//! `f̄` increasing and `f̄(0) = 0`; this is what the equilibrium analysis
//! requires. Dispersal is `D(z, z̃) = exp(−α‖z − z̃‖)` and patch locations
//! live in a box with a uniform density, integrated by a midpoint rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::Theta;

/// Map from patch characteristics to a scalar (survival, weight, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMap {
    /// One value per finite-chain state.
    PerState(Vec<f64>),
    /// The characteristic itself; the natural survival map for the
    /// Beta-jump chain whose state *is* the survival probability.
    Identity,
    Constant(f64),
}

impl ThetaMap {
    pub fn eval(&self, theta: Theta) -> f64 {
        match (self, theta) {
            (ThetaMap::PerState(v), Theta::State(i)) => v[i],
            (ThetaMap::PerState(_), Theta::Level(x)) => {
                panic!("per-state map evaluated at continuous level {x}")
            }
            (ThetaMap::Identity, Theta::Level(x)) => x,
            (ThetaMap::Identity, Theta::State(i)) => {
                panic!("identity map evaluated at finite state {i}")
            }
            (ThetaMap::Constant(c), _) => *c,
        }
    }

    /// The constant value when the map does not depend on θ.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ThetaMap::Constant(c) => Some(*c),
            _ => None,
        }
    }
}

/// Colonisation function catalogue.
///
/// The two phase forms compose with survival as `s(θ)·f̄(x; θ)` and are
/// concave in `x`, so they admit the full equilibrium analysis. The
/// target-patch form scales connectivity by `b(θ)` before the cap. The
/// saturating quadratic (`β x² / (γ + β x²)`) is not concave near zero
/// and is provided for simulation only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Colonisation {
    /// `f(x; θ) = s(θ)·(1 − e^{−x})`
    PhaseExponential,
    /// `f(x; θ) = s(θ)·min(b(θ)·x, 1)`
    PhaseLinearCapped { b: ThetaMap },
    /// `f(x) = β x² / (γ + β x²)`; simulation only (Allee-like, non-concave).
    Hanski { beta: f64, gamma: f64 },
}

/// Survival, weight and colonisation of a patch as functions of its
/// characteristic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchTraits {
    pub survival: ThetaMap,
    pub weight: ThetaMap,
    pub colonisation: Colonisation,
}

impl PatchTraits {
    /// Constant-area phase-exponential traits: `a ≡ ā`, `f̄(x) = 1 − e^{−x}`.
    pub fn phase_exponential(survival: ThetaMap, a_bar: f64) -> Self {
        Self {
            survival,
            weight: ThetaMap::Constant(a_bar),
            colonisation: Colonisation::PhaseExponential,
        }
    }

    /// Two-state pulsed-dispersal setup: state 1 survives with `s1` and
    /// weight `a1`; state 2 is unsuitable (`s = 0`, colonisation 0) but
    /// contributes weight `a2 > a1` while its doomed population disperses.
    pub fn pulsed_two_state(s1: f64, a1: f64, a2: f64) -> Self {
        Self {
            survival: ThetaMap::PerState(vec![s1, 0.0]),
            weight: ThetaMap::PerState(vec![a1, a2]),
            colonisation: Colonisation::PhaseExponential,
        }
    }

    pub fn survival_at(&self, theta: Theta) -> f64 {
        self.survival.eval(theta)
    }

    pub fn weight_at(&self, theta: Theta) -> f64 {
        self.weight.eval(theta)
    }

    /// Whether colonisation factors as `s(θ)·f̄(x; θ)`.
    pub fn is_phase(&self) -> bool {
        !matches!(self.colonisation, Colonisation::Hanski { .. })
    }

    /// Whether `f̄(·; θ)` is concave for every θ (no Allee-like effect).
    pub fn is_concave(&self) -> bool {
        !matches!(self.colonisation, Colonisation::Hanski { .. })
    }

    /// Colonisation probability `f(x; θ)`.
    pub fn colonisation_at(&self, x: f64, theta: Theta) -> f64 {
        debug_assert!(x >= 0.0, "connectivity must be non-negative, got {x}");
        match &self.colonisation {
            Colonisation::PhaseExponential => {
                self.survival_at(theta) * (1.0 - (-x).exp())
            }
            Colonisation::PhaseLinearCapped { b } => {
                self.survival_at(theta) * (b.eval(theta) * x).min(1.0)
            }
            Colonisation::Hanski { beta, gamma } => {
                let bx2 = beta * x * x;
                bx2 / (gamma + bx2)
            }
        }
    }

    /// Phase factor `f̄(x; θ)`; requires a phase-structured catalogue entry.
    pub fn fbar(&self, x: f64, theta: Theta) -> Result<f64> {
        match &self.colonisation {
            Colonisation::PhaseExponential => Ok(1.0 - (-x).exp()),
            Colonisation::PhaseLinearCapped { b } => Ok((b.eval(theta) * x).min(1.0)),
            Colonisation::Hanski { .. } => Err(Error::NotPhaseStructured),
        }
    }

    /// `f̄′(0; θ)`, the slope of the phase factor at zero connectivity.
    pub fn fbar_deriv0(&self, theta: Theta) -> Result<f64> {
        match &self.colonisation {
            Colonisation::PhaseExponential => Ok(1.0),
            Colonisation::PhaseLinearCapped { b } => Ok(b.eval(theta)),
            Colonisation::Hanski { .. } => Err(Error::NotPhaseStructured),
        }
    }

    /// θ-independent phase factor, when there is one. Sampled-chain
    /// analysis and the fast equilibrium path require it.
    pub fn shared_fbar(&self) -> Option<SharedFbar> {
        match &self.colonisation {
            Colonisation::PhaseExponential => Some(SharedFbar::Exponential),
            Colonisation::PhaseLinearCapped { b } => {
                b.as_constant().map(|slope| SharedFbar::LinearCapped { slope })
            }
            Colonisation::Hanski { .. } => None,
        }
    }
}

/// A θ-independent phase factor `f̄(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SharedFbar {
    Exponential,
    LinearCapped { slope: f64 },
}

impl SharedFbar {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SharedFbar::Exponential => 1.0 - (-x).exp(),
            SharedFbar::LinearCapped { slope } => (slope * x).min(1.0),
        }
    }

    pub fn deriv0(&self) -> f64 {
        match *self {
            SharedFbar::Exponential => 1.0,
            SharedFbar::LinearCapped { slope } => slope,
        }
    }
}

/// Exponential-distance dispersal kernel `D(z, z̃) = exp(−α‖z − z̃‖)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersalKernel {
    pub alpha: f64,
}

impl DispersalKernel {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 {
            Ok(Self { alpha })
        } else {
            Err(Error::Invalid(format!("dispersal decay must be positive, got {alpha}")))
        }
    }

    /// Kernel between two points of the same dimension.
    pub fn eval(&self, z: &[f64], w: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), w.len());
        let dist2: f64 = z.iter().zip(w).map(|(a, b)| (a - b) * (a - b)).sum();
        (-self.alpha * dist2.sqrt()).exp()
    }

    /// One-dimensional shortcut used on quadrature grids.
    #[inline]
    pub fn eval1(&self, z: f64, w: f64) -> f64 {
        (-self.alpha * (z - w).abs()).exp()
    }
}

/// Box-shaped patch-location domain with the uniform density ζ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialDomain {
    /// Lower/upper bound per coordinate.
    pub bounds: Vec<(f64, f64)>,
}

impl SpatialDomain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Invalid("domain needs at least one coordinate".into()));
        }
        for &(lo, hi) in &bounds {
            if hi <= lo || lo.is_nan() || hi.is_nan() {
                return Err(Error::Invalid(format!("degenerate bounds ({lo}, {hi})")));
            }
        }
        Ok(Self { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|&(lo, hi)| hi - lo).product()
    }

    pub fn diameter(&self) -> f64 {
        self.bounds
            .iter()
            .map(|&(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(&self.bounds)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    /// Uniform density value (0 outside the box).
    pub fn zeta(&self, z: &[f64]) -> f64 {
        if self.contains(z) {
            1.0 / self.volume()
        } else {
            0.0
        }
    }

    /// Draw a location uniformly from the box.
    pub fn sample(&self, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        use rand::Rng;
        self.bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..hi))
            .collect()
    }

    /// Midpoint-rule quadrature grid; one-dimensional domains only.
    pub fn build_grid(&self, n_nodes: usize) -> Result<Grid> {
        build_grid(self, n_nodes)
    }
}

/// Quadrature grid: nodes `z_k`, weights `w_k` and density values `ζ(z_k)`
/// with `Σ ζ(z_k)·w_k = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `ζ(z_k)·w_k` per node, the quadrature mass.
    pub fn masses(&self) -> Vec<f64> {
        self.zeta
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| z * w)
            .collect()
    }

    /// `Σ_k h(z_k)·ζ(z_k)·w_k`.
    pub fn integrate(&self, h: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(self.masses())
            .map(|(&z, m)| h(z) * m)
            .sum()
    }
}

/// Midpoint-rule grid over a one-dimensional box.
pub fn build_grid(domain: &SpatialDomain, n_nodes: usize) -> Result<Grid> {
    if domain.dim() != 1 {
        return Err(Error::UnsupportedDimension { dim: domain.dim() });
    }
    if n_nodes < 2 {
        return Err(Error::Invalid(format!("grid needs at least 2 nodes, got {n_nodes}")));
    }
    let (lo, hi) = domain.bounds[0];
    let h = (hi - lo) / n_nodes as f64;
    let nodes: Vec<f64> = (0..n_nodes).map(|k| lo + (k as f64 + 0.5) * h).collect();
    let weights = vec![h; n_nodes];
    let zeta = vec![1.0 / (hi - lo); n_nodes];
    Ok(Grid { nodes, weights, zeta })
}

/// Dispersal between two locations; exposed as a free function to mirror
/// the kernel contract.
pub fn dispersal(z: &[f64], w: &[f64], kernel: &DispersalKernel) -> f64 {
    kernel.eval(z, w)
}
