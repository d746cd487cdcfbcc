//! Large-n mean-field occupancy recursion and its equilibrium.
//!
//! `q_t(θ, z)` is the probability that a patch at `z` with characteristic
//! `θ` is occupied at time `t`. With the landscape stationary, the
//! recursion runs over the dual chain `P*`:
//!
//! ```text
//! ψ_t(z)      = ∫ D(z, z̃) (Σ_j a(j) q_t(j, z̃) π_j) ζ(z̃) dz̃
//! q_{t+1}(i,z) = Σ_j [ s(j) q_t(j,z) + f(ψ_t(z); j)(1 − q_t(j,z)) ] P*_ij
//! ```
//!
//! Holding the connectivity profile fixed at φ, the inner recursion
//! contracts at rate `sup s` to a fixed point `q^φ_∞`, which is also a
//! truncated series of dual-path expectations. The operator
//! `(Hφ)(z) = ∫ D(z, z̃) Σ_j a(j) q^φ_∞(j, z̃) π_j ζ(z̃) dz̃` is monotone
//! and concave on the positive cone; fixed-point iteration from a
//! strictly positive start either collapses to zero or converges to the
//! unique positive equilibrium.
//!
//! Everything is computed on a finite working basis: the chain's states
//! for a finite landscape, or a Monte Carlo particle set with an
//! empirical dual matrix (time-reversed stationary path segments) for a
//! sampled landscape.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::landscape::{FiniteChain, Landscape, SampledChain, Theta};
use crate::patch::{DispersalKernel, Grid, PatchTraits, SharedFbar};
use crate::rng::{stream_rng, streams};

/// Default series truncation.
pub const DEFAULT_TRUNCATION: usize = 1000;
/// Accepted series tail without an explicit override.
pub const TAIL_TOLERANCE: f64 = 1e-8;
/// Sup-norm tolerance of the inner fixed-point recursion.
pub const INNER_TOL: f64 = 1e-10;

/// Monte Carlo discretisation settings for sampled landscapes.
#[derive(Clone, Copy, Debug)]
pub struct McSettings {
    /// Particle count of the θ-support.
    pub particles: usize,
    /// Sample paths for moments and the empirical dual.
    pub paths: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self { particles: 200, paths: 1000, seed: 0 }
    }
}

/// Occupancy probabilities on the working support × quadrature grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyField {
    /// Rows: θ-support, columns: grid nodes.
    pub q: DMatrix<f64>,
}

impl OccupancyField {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if q.iter().any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v)) {
            return Err(Error::Invalid("occupancy entries must lie in [0,1]".into()));
        }
        Ok(Self { q })
    }

    pub fn constant(support: usize, nodes: usize, value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Invalid(format!("occupancy {value} outside [0,1]")));
        }
        Ok(Self { q: DMatrix::from_element(support, nodes, value) })
    }

    pub fn support_len(&self) -> usize {
        self.q.nrows()
    }

    pub fn nodes_len(&self) -> usize {
        self.q.ncols()
    }

    pub fn sup_norm(&self) -> f64 {
        self.q.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn sup_diff(&self, other: &Self) -> f64 {
        (&self.q - &other.q).abs().max()
    }

    /// Entrywise `self ≤ other` within `tol`.
    pub fn le(&self, other: &Self, tol: f64) -> bool {
        self.q.iter().zip(other.q.iter()).all(|(a, b)| *a <= *b + tol)
    }
}

/// Discretised connectivity profile ψ on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityProfile {
    pub psi: DVector<f64>,
}

// ─── Working basis ───────────────────────────────────────────────────────

/// Finite working representation of (chain ⊗ traits) for mean-field
/// computations: support values with stationary weights, survival and
/// weight vectors, forward and dual transition matrices.
#[derive(Clone, Debug)]
pub struct LandscapeBasis {
    pub support: Vec<Theta>,
    pub pi: DVector<f64>,
    pub s: DVector<f64>,
    pub a: DVector<f64>,
    pub p_forward: DMatrix<f64>,
    pub p_star: DMatrix<f64>,
    /// Exact linear algebra (finite chain) versus Monte Carlo particles.
    pub exact: bool,
    pub traits: PatchTraits,
}

impl LandscapeBasis {
    pub fn from_finite(chain: &FiniteChain, traits: &PatchTraits) -> Result<Self> {
        let m = chain.len();
        let support: Vec<Theta> = (0..m).map(Theta::State).collect();
        let s = DVector::from_fn(m, |j, _| traits.survival_at(support[j]));
        let a = DVector::from_fn(m, |j, _| traits.weight_at(support[j]));
        let p_star = chain.dual()?.into_matrix();
        Ok(Self {
            support,
            pi: chain.stationary().clone(),
            s,
            a,
            p_forward: chain.transition().clone(),
            p_star,
            exact: true,
            traits: traits.clone(),
        })
    }

    /// Particle discretisation of a sampled chain. The support is drawn
    /// from the stationary reference with uniform weights; the dual matrix
    /// resamples time-reversed transitions from the long stationary run
    /// (reversing a stationary path realises the dual chain), matching on
    /// nearest reference values.
    pub fn from_sampled(chain: &SampledChain, traits: &PatchTraits, mc: &McSettings) -> Result<Self> {
        if mc.particles < 2 {
            return Err(Error::MissingDual(format!(
                "particle support needs at least 2 particles, got {}",
                mc.particles
            )));
        }
        if mc.paths == 0 {
            return Err(Error::MissingDual("empirical dual needs at least one path".into()));
        }
        let reference = chain.stationary_reference();
        let samples = reference.samples();

        let mut rng = stream_rng(mc.seed, &[streams::PARTICLES]);
        let mut particles: Vec<f64> = (0..mc.particles)
            .map(|_| samples[rng.random_range(0..samples.len())])
            .collect();
        particles.sort_by(|x, y| x.partial_cmp(y).unwrap());

        // Reference values sorted with their time positions, for
        // nearest-value neighbourhoods.
        let mut by_value: Vec<(f64, u32)> =
            samples.iter().copied().zip(0..samples.len() as u32).collect();
        by_value.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());

        let m = particles.len();
        let mut p_star = DMatrix::zeros(m, m);
        let mut p_forward = DMatrix::zeros(m, m);
        for (j, &x) in particles.iter().enumerate() {
            let neighbours = nearest_positions(&by_value, x, mc.paths);
            let mut star_count = 0usize;
            let mut fwd_count = 0usize;
            for &pos in &neighbours {
                let pos = pos as usize;
                if pos > 0 {
                    let k = snap_to_particle(&particles, samples[pos - 1]);
                    p_star[(j, k)] += 1.0;
                    star_count += 1;
                }
                if pos + 1 < samples.len() {
                    let k = snap_to_particle(&particles, samples[pos + 1]);
                    p_forward[(j, k)] += 1.0;
                    fwd_count += 1;
                }
            }
            if star_count == 0 || fwd_count == 0 {
                return Err(Error::MissingDual(format!(
                    "no usable reference transitions near particle {x}"
                )));
            }
            for k in 0..m {
                p_star[(j, k)] /= star_count as f64;
                p_forward[(j, k)] /= fwd_count as f64;
            }
        }

        let support: Vec<Theta> = particles.iter().map(|&x| Theta::Level(x)).collect();
        let s = DVector::from_fn(m, |j, _| traits.survival_at(support[j]));
        let a = DVector::from_fn(m, |j, _| traits.weight_at(support[j]));
        Ok(Self {
            support,
            pi: DVector::from_element(m, 1.0 / m as f64),
            s,
            a,
            p_forward,
            p_star,
            exact: false,
            traits: traits.clone(),
        })
    }

    pub fn from_landscape(
        landscape: &Landscape,
        traits: &PatchTraits,
        mc: &McSettings,
    ) -> Result<Self> {
        match landscape {
            Landscape::Finite(chain) => Self::from_finite(chain, traits),
            Landscape::Sampled(chain) => Self::from_sampled(chain, traits, mc),
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn sup_survival(&self) -> f64 {
        self.s.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    fn colonisation(&self, x: f64, j: usize) -> f64 {
        self.traits.colonisation_at(x, self.support[j])
    }
}

/// The `count` reference positions whose values are closest to `x`.
fn nearest_positions(by_value: &[(f64, u32)], x: f64, count: usize) -> Vec<u32> {
    let n = by_value.len();
    let count = count.min(n);
    let start = by_value.partition_point(|&(v, _)| v < x);
    let (mut lo, mut hi) = (start, start); // [lo, hi) window
    while hi - lo < count {
        let take_left = if lo == 0 {
            false
        } else if hi == n {
            true
        } else {
            (x - by_value[lo - 1].0) <= (by_value[hi].0 - x)
        };
        if take_left {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    by_value[lo..hi].iter().map(|&(_, pos)| pos).collect()
}

/// Index of the particle nearest to `v` in a sorted particle list.
fn snap_to_particle(particles: &[f64], v: f64) -> usize {
    let i = particles.partition_point(|&p| p < v);
    if i == 0 {
        0
    } else if i == particles.len() {
        particles.len() - 1
    } else if (v - particles[i - 1]) <= (particles[i] - v) {
        i - 1
    } else {
        i
    }
}

// ─── Kernel quadrature ───────────────────────────────────────────────────

/// Dispersal kernel discretised on the grid: matrix `D(z_k, z_l)` and the
/// quadrature masses `ζ_l w_l`.
#[derive(Clone, Debug)]
pub(crate) struct KernelGrid {
    pub kmat: DMatrix<f64>,
    pub masses: DVector<f64>,
}

impl KernelGrid {
    pub fn new(kernel: &DispersalKernel, grid: &Grid) -> Self {
        let k = grid.len();
        let kmat = DMatrix::from_fn(k, k, |r, c| kernel.eval1(grid.nodes[r], grid.nodes[c]));
        let masses = DVector::from_vec(grid.masses());
        Self { kmat, masses }
    }

    /// `Σ_l D(z_k, z_l) ω_l ζ_l w_l` for every node `z_k`.
    pub fn apply(&self, omega: &DVector<f64>) -> DVector<f64> {
        &self.kmat * omega.component_mul(&self.masses)
    }
}

/// `Σ_j a(j) q(j, ·) π_j` per grid node: the weighted occupancy profile.
fn weighted_profile(q: &OccupancyField, basis: &LandscapeBasis) -> DVector<f64> {
    q.q.transpose() * basis.a.component_mul(&basis.pi)
}

/// Connectivity profile of a field:
/// `ψ(z_k) = Σ_l D(z_k, z_l) [Σ_j a(j) q(j, z_l) π_j] ζ_l w_l`.
pub fn psi_of_field(
    q: &OccupancyField,
    basis: &LandscapeBasis,
    kernel: &DispersalKernel,
    grid: &Grid,
) -> ConnectivityProfile {
    let kg = KernelGrid::new(kernel, grid);
    ConnectivityProfile { psi: kg.apply(&weighted_profile(q, basis)) }
}

/// The ψ quadrature evaluated at an arbitrary location.
pub fn psi_at(
    z: f64,
    q: &OccupancyField,
    basis: &LandscapeBasis,
    kernel: &DispersalKernel,
    grid: &Grid,
) -> f64 {
    let omega = weighted_profile(q, basis);
    grid.nodes
        .iter()
        .zip(grid.masses())
        .zip(omega.iter())
        .map(|((&zl, m), &o)| kernel.eval1(z, zl) * o * m)
        .sum()
}

/// One step of the occupancy recursion.
pub fn recursion_step(
    q: &OccupancyField,
    basis: &LandscapeBasis,
    kernel: &DispersalKernel,
    grid: &Grid,
) -> OccupancyField {
    let psi = psi_of_field(q, basis, kernel, grid);
    recursion_step_with_psi(q, &psi, basis)
}

fn recursion_step_with_psi(
    q: &OccupancyField,
    psi: &ConnectivityProfile,
    basis: &LandscapeBasis,
) -> OccupancyField {
    let (m, k) = (q.support_len(), q.nodes_len());
    let mut inner = DMatrix::zeros(m, k);
    for l in 0..k {
        let psi_l = psi.psi[l];
        for j in 0..m {
            let qjl = q.q[(j, l)];
            inner[(j, l)] = basis.s[j] * qjl + basis.colonisation(psi_l, j) * (1.0 - qjl);
        }
    }
    OccupancyField { q: &basis.p_star * inner }
}

/// Iterate the recursion `steps` times; returns the final field and the
/// sup-norm change at each step.
pub fn iterate_recursion(
    q0: &OccupancyField,
    steps: usize,
    basis: &LandscapeBasis,
    kernel: &DispersalKernel,
    grid: &Grid,
) -> (OccupancyField, Vec<f64>) {
    let kg = KernelGrid::new(kernel, grid);
    let mut q = q0.clone();
    let mut deltas = Vec::with_capacity(steps);
    for _ in 0..steps {
        let psi = ConnectivityProfile { psi: kg.apply(&weighted_profile(&q, basis)) };
        let next = recursion_step_with_psi(&q, &psi, basis);
        deltas.push(next.sup_diff(&q));
        q = next;
    }
    (q, deltas)
}

// ─── Inner fixed point q^φ_∞ ─────────────────────────────────────────────

/// Method for the inner fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QPhiMethod {
    /// Iterate the inner recursion to sup-norm tolerance 1e-10.
    InnerIteration,
    /// Truncated dual-path series.
    Series,
}

/// Solver for the inner fixed point `q^φ_∞` at a held connectivity
/// profile. Construction validates phase structure and `sup s < 1` and
/// precomputes conditional dual survival moments when the phase factor
/// does not depend on θ.
#[derive(Debug)]
pub struct QPhiSolver<'a> {
    basis: &'a LandscapeBasis,
    truncation: usize,
    tail_bound: f64,
    shared: Option<SharedFbar>,
    /// `c_m(j) = E{Π_{n=1}^m s(θ*_n) | θ*_0 = j}` for m = 1..truncation.
    cond_moments: Option<Vec<DVector<f64>>>,
}

impl<'a> QPhiSolver<'a> {
    pub fn new(basis: &'a LandscapeBasis, truncation: usize, allow_tail: bool) -> Result<Self> {
        if !basis.traits.is_phase() {
            return Err(Error::NotPhaseStructured);
        }
        let sup_s = basis.sup_survival();
        if sup_s >= 1.0 {
            return Err(Error::SupSurvivalOne { sup_s });
        }
        let tail_bound = sup_s.powi(truncation as i32) / (1.0 - sup_s);
        if tail_bound > TAIL_TOLERANCE && !allow_tail {
            return Err(Error::TruncationTail { bound: tail_bound, truncation });
        }
        let shared = basis.traits.shared_fbar();
        let cond_moments = shared.is_some().then(|| {
            let mut out = Vec::with_capacity(truncation);
            let mut c = &basis.p_star * &basis.s;
            out.push(c.clone());
            for _ in 1..truncation {
                c = &basis.p_star * c.component_mul(&basis.s);
                out.push(c.clone());
            }
            out
        });
        Ok(Self { basis, truncation, tail_bound, shared, cond_moments })
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Unconditional dual survival moments `ν_m = Σ_j π_j c_m(j)`.
    pub fn nu(&self) -> Option<Vec<f64>> {
        self.cond_moments
            .as_ref()
            .map(|cs| cs.iter().map(|c| c.dot(&self.basis.pi)).collect())
    }

    /// a-weighted moments `γ_m = Σ_j a_j π_j c_m(j)`.
    pub fn gamma(&self) -> Option<Vec<f64>> {
        let aw = self.basis.a.component_mul(&self.basis.pi);
        self.cond_moments.as_ref().map(|cs| cs.iter().map(|c| c.dot(&aw)).collect())
    }

    /// `q^φ_∞(·)` for one held connectivity value.
    pub fn column(&self, phi_val: f64, method: QPhiMethod) -> Result<DVector<f64>> {
        let m = self.basis.len();
        match method {
            QPhiMethod::InnerIteration => {
                let f: DVector<f64> =
                    DVector::from_fn(m, |j, _| self.basis.colonisation(phi_val, j));
                let mut v = DVector::zeros(m);
                let max_iter = 2_000_000usize;
                for _ in 0..max_iter {
                    let inner = self.basis.s.component_mul(&v)
                        + f.component_mul(&DVector::from_fn(m, |j, _| 1.0 - v[j]));
                    let next = &self.basis.p_star * inner;
                    let delta = (&next - &v).abs().max();
                    v = next;
                    if delta < INNER_TOL {
                        return Ok(v);
                    }
                }
                Err(Error::MaxIterExceeded { max_iter, residual: f64::NAN })
            }
            QPhiMethod::Series => {
                if let (Some(shared), Some(cs)) = (self.shared, self.cond_moments.as_ref()) {
                    // f̄ independent of θ: q = Σ_m f̄φ (1 − f̄φ)^{m−1} c_m.
                    let fb = shared.eval(phi_val);
                    let mut weight = fb;
                    let mut acc = DVector::zeros(m);
                    for c in cs {
                        if weight == 0.0 {
                            break;
                        }
                        acc += c * weight;
                        weight *= 1.0 - fb;
                    }
                    Ok(acc)
                } else {
                    // General series: w_1 = P* f, w_{m+1} = P* ((s − f) ⊙ w_m).
                    let f: DVector<f64> =
                        DVector::from_fn(m, |j, _| self.basis.colonisation(phi_val, j));
                    let d = &self.basis.s - &f;
                    let mut w = &self.basis.p_star * &f;
                    let mut acc = w.clone();
                    for _ in 1..self.truncation {
                        w = &self.basis.p_star * d.component_mul(&w);
                        acc += &w;
                    }
                    Ok(acc)
                }
            }
        }
    }

    /// Full field over a per-node profile.
    pub fn field(&self, phi: &[f64], method: QPhiMethod) -> Result<OccupancyField> {
        let m = self.basis.len();
        let mut q = DMatrix::zeros(m, phi.len());
        for (l, &p) in phi.iter().enumerate() {
            q.set_column(l, &self.column(p, method)?);
        }
        Ok(OccupancyField { q })
    }
}

/// The inner fixed point `q^φ_∞` for a connectivity profile given per
/// grid node.
pub fn q_phi_infinity(
    phi: &[f64],
    basis: &LandscapeBasis,
    method: QPhiMethod,
    truncation: usize,
    allow_tail: bool,
) -> Result<OccupancyField> {
    QPhiSolver::new(basis, truncation, allow_tail)?.field(phi, method)
}

/// The operator `H`: connectivity profile generated by the inner fixed
/// point of `phi`. The integrand is evaluated at the integration
/// variable.
pub fn h_operator(
    phi: &[f64],
    basis: &LandscapeBasis,
    kernel: &DispersalKernel,
    grid: &Grid,
    method: QPhiMethod,
    truncation: usize,
    allow_tail: bool,
) -> Result<Vec<f64>> {
    let solver = QPhiSolver::new(basis, truncation, allow_tail)?;
    let field = solver.field(phi, method)?;
    let kg = KernelGrid::new(kernel, grid);
    Ok(kg.apply(&weighted_profile(&field, basis)).iter().copied().collect())
}

// ─── Stationary survival moments ─────────────────────────────────────────

/// Forward stationary moments of the survival products:
/// `weighted[m−1] = E[a(θ_{m+1}) Π_{n=1}^m s(θ_n)]` and
/// `unweighted[m−1] = E[Π_{n=1}^m s(θ_n)]`, m = 1..m_max.
#[derive(Clone, Debug)]
pub struct MomentEstimate {
    pub weighted: Vec<f64>,
    pub unweighted: Vec<f64>,
    /// Monte Carlo standard errors (sampled chains only).
    pub weighted_se: Option<Vec<f64>>,
    pub unweighted_se: Option<Vec<f64>>,
}

/// Compute the stationary survival moments: exact matrix recursion for
/// finite chains, Monte Carlo over `mc.paths` stationary paths otherwise.
pub fn moment_sequence(
    landscape: &Landscape,
    traits: &PatchTraits,
    m_max: usize,
    mc: &McSettings,
) -> Result<MomentEstimate> {
    match landscape {
        Landscape::Finite(chain) => Ok(moment_sequence_finite(chain, traits, m_max)),
        Landscape::Sampled(chain) => Ok(moment_sequence_sampled(chain, traits, m_max, mc)),
    }
}

pub fn moment_sequence_finite(
    chain: &FiniteChain,
    traits: &PatchTraits,
    m_max: usize,
) -> MomentEstimate {
    let m = chain.len();
    let s = DVector::from_fn(m, |j, _| traits.survival_at(Theta::State(j)));
    let a = DVector::from_fn(m, |j, _| traits.weight_at(Theta::State(j)));
    let p = chain.transition();
    // v_m(j) = E[Π_{n=1}^m s(θ_n) 𝟙(θ_m = j)]; v_1 = π ⊙ s.
    let mut v = chain.stationary().component_mul(&s);
    let mut weighted = Vec::with_capacity(m_max);
    let mut unweighted = Vec::with_capacity(m_max);
    for step in 0..m_max {
        unweighted.push(v.sum());
        let moved = (v.transpose() * p).transpose();
        weighted.push(moved.dot(&a));
        if step + 1 < m_max {
            v = moved.component_mul(&s);
        }
    }
    MomentEstimate { weighted, unweighted, weighted_se: None, unweighted_se: None }
}

pub fn moment_sequence_sampled(
    chain: &SampledChain,
    traits: &PatchTraits,
    m_max: usize,
    mc: &McSettings,
) -> MomentEstimate {
    let paths = mc.paths.max(1);
    let mut w_sum = vec![0.0f64; m_max];
    let mut w_sq = vec![0.0f64; m_max];
    let mut u_sum = vec![0.0f64; m_max];
    let mut u_sq = vec![0.0f64; m_max];
    for p in 0..paths {
        let mut rng = stream_rng(mc.seed, &[streams::MOMENTS, p as u64]);
        // θ_1 from the stationary reference, then forward steps.
        let mut th = chain.sample_stationary(&mut rng);
        let mut prod = traits.survival_at(Theta::Level(th));
        for m in 0..m_max {
            th = chain.step_level(th, &mut rng);
            let w = traits.weight_at(Theta::Level(th)) * prod;
            w_sum[m] += w;
            w_sq[m] += w * w;
            u_sum[m] += prod;
            u_sq[m] += prod * prod;
            prod *= traits.survival_at(Theta::Level(th));
        }
    }
    let n = paths as f64;
    let finish = |sum: Vec<f64>, sq: Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        let means: Vec<f64> = sum.iter().map(|v| v / n).collect();
        let ses: Vec<f64> = sq
            .iter()
            .zip(&means)
            .map(|(&q, &m)| {
                if paths > 1 {
                    (((q / n - m * m).max(0.0)) / (n - 1.0)).sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect();
        (means, ses)
    };
    let (weighted, weighted_se) = finish(w_sum, w_sq);
    let (unweighted, unweighted_se) = finish(u_sum, u_sq);
    MomentEstimate {
        weighted,
        unweighted,
        weighted_se: Some(weighted_se),
        unweighted_se: Some(unweighted_se),
    }
}

// ─── Equilibrium ─────────────────────────────────────────────────────────

/// Options for the equilibrium fixed-point iteration.
#[derive(Clone, Copy, Debug)]
pub struct EquilibriumOptions {
    /// Sup-norm stopping tolerance of the outer iteration.
    pub tol: f64,
    pub max_iter: usize,
    pub truncation: usize,
    pub allow_tail: bool,
    pub method: QPhiMethod,
    pub mc: McSettings,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 20_000,
            truncation: DEFAULT_TRUNCATION,
            allow_tail: false,
            method: QPhiMethod::Series,
            mc: McSettings::default(),
        }
    }
}

/// Equilibrium of the mean-field recursion.
#[derive(Clone, Debug)]
pub struct Equilibrium {
    /// Fixed point of `H` on the grid nodes.
    pub phi_star: Vec<f64>,
    /// Limiting occupancy `Σ_j q*(j, z) π_j` per node.
    pub occupancy: Vec<f64>,
    /// `Σ_j a(j) q*(j, z) π_j` per node; the quantity ordered by
    /// moment-sequence dominance.
    pub weighted_occupancy: Vec<f64>,
    pub q_star: OccupancyField,
    pub iterations: usize,
    pub residual: f64,
    /// The iteration collapsed to the zero fixed point.
    pub extinct: bool,
    pub tail_bound: f64,
    shared: Option<SharedFbar>,
    nu: Option<Vec<f64>>,
    kernel: DispersalKernel,
    grid: Grid,
}

impl Equilibrium {
    /// Nyström extension of the fixed point to an arbitrary location.
    pub fn phi_at(&self, z: f64) -> f64 {
        self.grid
            .nodes
            .iter()
            .zip(self.grid.masses())
            .zip(&self.weighted_occupancy)
            .map(|((&zl, m), &o)| self.kernel.eval1(z, zl) * o * m)
            .sum()
    }

    /// Limiting occupancy at an arbitrary location. Available when the
    /// phase factor is θ-independent.
    pub fn occupancy_at(&self, z: f64) -> Option<f64> {
        let (shared, nu) = (self.shared?, self.nu.as_ref()?);
        if self.extinct {
            return Some(0.0);
        }
        Some(series_value(shared.eval(self.phi_at(z)), nu))
    }
}

/// `Σ_m f̄φ (1 − f̄φ)^{m−1} coeff_m`.
fn series_value(fb: f64, coeffs: &[f64]) -> f64 {
    let mut weight = fb;
    let mut acc = 0.0;
    for &c in coeffs {
        if weight == 0.0 {
            break;
        }
        acc += weight * c;
        weight *= 1.0 - fb;
    }
    acc
}

/// Compute the mean-field equilibrium by fixed-point iteration of `H`
/// from the strictly positive start `H(1)`.
pub fn equilibrium(
    landscape: &Landscape,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    grid: &Grid,
    opts: &EquilibriumOptions,
) -> Result<Equilibrium> {
    equilibrium_impl(landscape, traits, kernel, grid, opts, None)
}

/// Same iteration from an explicit start profile (uniqueness checks).
pub fn equilibrium_from_start(
    landscape: &Landscape,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    grid: &Grid,
    opts: &EquilibriumOptions,
    phi0: &[f64],
) -> Result<Equilibrium> {
    equilibrium_impl(landscape, traits, kernel, grid, opts, Some(phi0))
}

fn equilibrium_impl(
    landscape: &Landscape,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    grid: &Grid,
    opts: &EquilibriumOptions,
    phi0: Option<&[f64]>,
) -> Result<Equilibrium> {
    if !traits.is_phase() {
        return Err(Error::NotPhaseStructured);
    }
    if !traits.is_concave() {
        return Err(Error::AssumptionViolated {
            name: 'H',
            detail: "equilibrium analysis requires a concave phase factor".into(),
        });
    }
    let basis = LandscapeBasis::from_landscape(landscape, traits, &opts.mc)?;
    let solver = QPhiSolver::new(&basis, opts.truncation, opts.allow_tail)?;
    let kg = KernelGrid::new(kernel, grid);
    let shared = basis.traits.shared_fbar();

    // For a θ-independent phase factor, H reduces to a per-node series in
    // the forward moments γ_m; the paper's recipe. Exact moments for
    // finite chains, frozen Monte Carlo moments for sampled chains.
    let moments = match (&shared, landscape) {
        (Some(_), Landscape::Finite(chain)) => {
            Some(moment_sequence_finite(chain, traits, opts.truncation))
        }
        (Some(_), Landscape::Sampled(chain)) => {
            Some(moment_sequence_sampled(chain, traits, opts.truncation, &opts.mc))
        }
        (None, _) => None,
    };

    // ω^φ per node, the integrand of H.
    let omega_of = |phi: &[f64]| -> Result<DVector<f64>> {
        match (&shared, &moments) {
            (Some(sh), Some(mm)) => Ok(DVector::from_iterator(
                phi.len(),
                phi.iter().map(|&p| series_value(sh.eval(p), &mm.weighted)),
            )),
            _ => {
                let field = solver.field(phi, opts.method)?;
                Ok(weighted_profile(&field, &basis))
            }
        }
    };

    let start: Vec<f64> = match phi0 {
        Some(p) => {
            if p.len() != grid.len() {
                return Err(Error::Invalid(format!(
                    "start profile has {} nodes, grid has {}",
                    p.len(),
                    grid.len()
                )));
            }
            p.to_vec()
        }
        None => {
            let ones = vec![1.0; grid.len()];
            kg.apply(&omega_of(&ones)?).iter().copied().collect()
        }
    };

    // Below this scale a small residual cannot distinguish a positive
    // fixed point from a still-decaying trajectory; keep iterating until
    // the extinction threshold decides.
    const AMBIGUOUS_SCALE: f64 = 1e-6;
    let mut phi = DVector::from_vec(start);
    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut extinct = false;
    while iterations < opts.max_iter {
        let phi_slice: Vec<f64> = phi.iter().copied().collect();
        let next = kg.apply(&omega_of(&phi_slice)?);
        residual = (&next - &phi).abs().max();
        phi = next;
        iterations += 1;
        if phi.amax() < 1e-12 {
            extinct = true;
            converged = true;
            break;
        }
        if residual < opts.tol && phi.amax() >= AMBIGUOUS_SCALE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::MaxIterExceeded { max_iter: opts.max_iter, residual });
    }

    let phi_star: Vec<f64> = if extinct {
        vec![0.0; grid.len()]
    } else {
        phi.iter().copied().collect()
    };
    let q_star = if extinct {
        OccupancyField::constant(basis.len(), grid.len(), 0.0)?
    } else {
        solver.field(&phi_star, opts.method)?
    };
    let occupancy: Vec<f64> = (q_star.q.transpose() * &basis.pi).iter().copied().collect();
    let weighted_occupancy: Vec<f64> = if extinct {
        vec![0.0; grid.len()]
    } else {
        omega_of(&phi_star)?.iter().copied().collect()
    };

    // Unweighted moments for pointwise occupancy extension.
    let nu = moments.as_ref().map(|mm| mm.unweighted.clone());
    Ok(Equilibrium {
        phi_star,
        occupancy,
        weighted_occupancy,
        q_star,
        iterations,
        residual,
        extinct,
        tail_bound: solver.tail_bound(),
        shared,
        nu,
        kernel: *kernel,
        grid: grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::FiniteChain;
    use crate::patch::{SpatialDomain, ThetaMap};
    use approx::assert_abs_diff_eq;

    fn single_state(s: f64, a: f64) -> (Landscape, PatchTraits) {
        let chain = FiniteChain::new(
            vec!["only".into()],
            DMatrix::from_row_slice(1, 1, &[1.0]),
            vec![1.0],
        )
        .unwrap();
        let traits = PatchTraits::phase_exponential(ThetaMap::Constant(s), a);
        (Landscape::Finite(chain), traits)
    }

    fn paper_grid() -> (DispersalKernel, Grid) {
        let domain = SpatialDomain::interval(0.0, 10.0).unwrap();
        (DispersalKernel::new(1.0).unwrap(), domain.build_grid(500).unwrap())
    }

    fn basis_of(landscape: &Landscape, traits: &PatchTraits) -> LandscapeBasis {
        LandscapeBasis::from_landscape(landscape, traits, &McSettings::default()).unwrap()
    }

    #[test]
    fn psi_zero_field_is_zero() {
        let (landscape, traits) = single_state(0.5, 10.0);
        let (kernel, grid) = paper_grid();
        let basis = basis_of(&landscape, &traits);
        let q = OccupancyField::constant(1, grid.len(), 0.0).unwrap();
        let psi = psi_of_field(&q, &basis, &kernel, &grid);
        assert!(psi.psi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psi_closed_form_midpoint_accuracy() {
        // q ≡ 1, a ≡ 10, uniform ζ on [0,10], α = 1:
        // ψ(5) = ∫ e^{−|5−u|} du = 2(1 − e^{−5}).
        let (landscape, traits) = single_state(0.5, 10.0);
        let (kernel, grid) = paper_grid();
        let basis = basis_of(&landscape, &traits);
        let q = OccupancyField::constant(1, grid.len(), 1.0).unwrap();
        let expected = 2.0 * (1.0 - (-5.0f64).exp());
        let at5 = psi_at(5.0, &q, &basis, &kernel, &grid);
        assert_abs_diff_eq!(at5, expected, epsilon = 1e-4);
        assert_abs_diff_eq!(expected, 1.98652, epsilon = 1e-5);
    }

    #[test]
    fn psi_single_node_self_weight() {
        let (landscape, traits) = single_state(0.5, 10.0);
        let kernel = DispersalKernel::new(1.0).unwrap();
        let grid = Grid { nodes: vec![5.0], weights: vec![1.0], zeta: vec![1.0] };
        let basis = basis_of(&landscape, &traits);
        let q = OccupancyField::constant(1, 1, 1.0).unwrap();
        let psi = psi_of_field(&q, &basis, &kernel, &grid);
        assert_abs_diff_eq!(psi.psi[0], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn recursion_keeps_absorbing_states() {
        let (landscape, traits) = single_state(0.5, 10.0);
        let (kernel, grid) = paper_grid();
        let basis = basis_of(&landscape, &traits);
        let zero = OccupancyField::constant(1, grid.len(), 0.0).unwrap();
        let next = recursion_step(&zero, &basis, &kernel, &grid);
        assert_eq!(next.sup_norm(), 0.0);

        let (landscape, traits) = single_state(1.0, 10.0);
        let basis = basis_of(&landscape, &traits);
        let one = OccupancyField::constant(1, grid.len(), 1.0).unwrap();
        let next = recursion_step(&one, &basis, &kernel, &grid);
        assert!(next.q.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn recursion_matches_scalar_reduction() {
        // Single state, single node with unit mass: the recursion is the
        // scalar map q' = s·q + s·f̄(ā q)·(1 − q).
        let (landscape, traits) = single_state(0.5, 10.0);
        let kernel = DispersalKernel::new(1.0).unwrap();
        let grid = Grid { nodes: vec![0.0], weights: vec![1.0], zeta: vec![1.0] };
        let basis = basis_of(&landscape, &traits);
        let mut q = OccupancyField::constant(1, 1, 0.3).unwrap();
        let mut scalar = 0.3f64;
        for _ in 0..20 {
            q = recursion_step(&q, &basis, &kernel, &grid);
            let fbar = 1.0 - (-10.0 * scalar).exp();
            scalar = 0.5 * scalar + 0.5 * fbar * (1.0 - scalar);
            assert_abs_diff_eq!(q.q[(0, 0)], scalar, epsilon = 1e-12);
        }
    }

    #[test]
    fn q_phi_scalar_fixed_point() {
        // Single state, s = 0.5: q = f̄(c)/(1 + f̄(c)).
        let (landscape, traits) = single_state(0.5, 10.0);
        let basis = basis_of(&landscape, &traits);
        let solver = QPhiSolver::new(&basis, 2000, false).unwrap();
        for c in [0.0f64, 0.3, 1.0, 2.5] {
            let fbar = 1.0 - (-c).exp();
            let expected = fbar / (1.0 + fbar);
            let inner = solver.column(c, QPhiMethod::InnerIteration).unwrap();
            let series = solver.column(c, QPhiMethod::Series).unwrap();
            assert_abs_diff_eq!(inner[0], expected, epsilon = 1e-9);
            assert_abs_diff_eq!(series[0], expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn q_phi_zero_profile_is_zero() {
        let (landscape, traits) = single_state(0.5, 10.0);
        let basis = basis_of(&landscape, &traits);
        let field = q_phi_infinity(&[0.0, 0.0], &basis, QPhiMethod::Series, 500, false).unwrap();
        assert_eq!(field.sup_norm(), 0.0);
    }

    #[test]
    fn q_phi_requires_contraction_and_phase() {
        let (landscape, _) = single_state(0.5, 10.0);
        let hanski = PatchTraits {
            survival: ThetaMap::Constant(0.5),
            weight: ThetaMap::Constant(10.0),
            colonisation: crate::patch::Colonisation::Hanski { beta: 1.0, gamma: 1.0 },
        };
        let basis = basis_of(&landscape, &hanski);
        match QPhiSolver::new(&basis, 100, false) {
            Err(Error::NotPhaseStructured) => {}
            other => panic!("expected NotPhaseStructured, got {other:?}"),
        }

        let (landscape, traits) = single_state(1.0, 10.0);
        let basis = basis_of(&landscape, &traits);
        match QPhiSolver::new(&basis, 100, false) {
            Err(Error::SupSurvivalOne { .. }) => {}
            other => panic!("expected SupSurvivalOne, got {other:?}"),
        }
    }

    #[test]
    fn q_phi_truncation_tail_guard() {
        let (landscape, traits) = single_state(0.99, 10.0);
        let basis = basis_of(&landscape, &traits);
        match QPhiSolver::new(&basis, 100, false) {
            Err(Error::TruncationTail { .. }) => {}
            other => panic!("expected TruncationTail, got {other:?}"),
        }
        assert!(QPhiSolver::new(&basis, 100, true).is_ok());
    }

    #[test]
    fn inner_and_series_agree_on_random_three_state_chains() {
        use rand::Rng;
        let mut rng = stream_rng(2024, &[55]);
        for trial in 0..20 {
            let mut rows = Vec::new();
            for _ in 0..3 {
                let mut row: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
                let sum: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= sum);
                rows.push(row);
            }
            let chain = FiniteChain::from_rows(&rows).unwrap();
            let traits = PatchTraits {
                survival: ThetaMap::PerState(
                    (0..3).map(|_| rng.random_range(0.1..0.9)).collect(),
                ),
                weight: ThetaMap::Constant(5.0),
                // Per-state b exercises the general (θ-dependent) series.
                colonisation: crate::patch::Colonisation::PhaseLinearCapped {
                    b: ThetaMap::PerState((0..3).map(|_| rng.random_range(0.2..2.0)).collect()),
                },
            };
            let basis = LandscapeBasis::from_finite(&chain, &traits).unwrap();
            let phi: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
            let inner = q_phi_infinity(&phi, &basis, QPhiMethod::InnerIteration, 1000, false)
                .unwrap();
            let series = q_phi_infinity(&phi, &basis, QPhiMethod::Series, 1000, false).unwrap();
            let diff = inner.sup_diff(&series);
            assert!(diff < 1e-8, "trial {trial}: inner/series disagree by {diff}");
        }
    }

    #[test]
    fn moment_sequence_constant_and_static() {
        // Constant s = σ0, constant a = ā: term m = ā·σ0^m.
        let (landscape, traits) = single_state(0.5, 10.0);
        let est = moment_sequence(&landscape, &traits, 8, &McSettings::default()).unwrap();
        for (m, w) in est.weighted.iter().enumerate() {
            assert_abs_diff_eq!(*w, 10.0 * 0.5f64.powi(m as i32 + 1), epsilon = 1e-12);
        }

        // Static chain (P = I) freezes θ0: term m = 0.5(0.2^m + 0.8^m).
        let chain = FiniteChain::new(
            vec!["lo".into(), "hi".into()],
            DMatrix::identity(2, 2),
            vec![0.5, 0.5],
        )
        .unwrap();
        let traits = PatchTraits::phase_exponential(
            ThetaMap::PerState(vec![0.2, 0.8]),
            1.0,
        );
        let est = moment_sequence_finite(&chain, &traits, 6);
        for (idx, w) in est.weighted.iter().enumerate() {
            let m = idx as i32 + 1;
            let expected = 0.5 * (0.2f64.powi(m) + 0.8f64.powi(m));
            assert_abs_diff_eq!(*w, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(est.unweighted[idx], expected, epsilon = 1e-12);
        }
        // Non-increasing when a ≡ 1 and s ≤ 1.
        assert!(est.weighted.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn equilibrium_single_node_matches_bisection_oracle() {
        // Single state + single unit-mass node: φ* solves
        // φ = ā f̄(φ)/(1 + f̄(φ)); solved independently by bisection.
        let (landscape, traits) = single_state(0.5, 10.0);
        let kernel = DispersalKernel::new(1.0).unwrap();
        let grid = Grid { nodes: vec![0.0], weights: vec![1.0], zeta: vec![1.0] };
        let opts = EquilibriumOptions { tol: 1e-12, ..Default::default() };
        let eq = equilibrium(&landscape, &traits, &kernel, &grid, &opts).unwrap();
        assert!(!eq.extinct);

        let g = |phi: f64| {
            let fb = 1.0 - (-phi).exp();
            10.0 * fb / (1.0 + fb) - phi
        };
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let phi_oracle = 0.5 * (lo + hi);
        let fb = 1.0 - (-phi_oracle).exp();
        assert_abs_diff_eq!(eq.phi_star[0], phi_oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(eq.occupancy[0], fb / (1.0 + fb), epsilon = 1e-6);
    }

    #[test]
    fn equilibrium_subcritical_is_extinct() {
        // Single node: product = r_S·r(M) = ā·s/(1−s)·1 = 0.5 < 1 for ā = 0.5.
        let (landscape, traits) = single_state(0.5, 0.5);
        let kernel = DispersalKernel::new(1.0).unwrap();
        let grid = Grid { nodes: vec![0.0], weights: vec![1.0], zeta: vec![1.0] };
        let eq = equilibrium(
            &landscape,
            &traits,
            &kernel,
            &grid,
            &EquilibriumOptions::default(),
        )
        .unwrap();
        assert!(eq.extinct);
        assert!(eq.occupancy.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equilibrium_profile_is_center_heavy() {
        let (landscape, traits) = single_state(0.5, 10.0);
        let (kernel, grid) = paper_grid();
        let eq = equilibrium(
            &landscape,
            &traits,
            &kernel,
            &grid,
            &EquilibriumOptions::default(),
        )
        .unwrap();
        assert!(!eq.extinct);
        let centre = eq.occupancy_at(5.0).unwrap();
        let edge = eq.occupancy_at(0.0).unwrap();
        assert!(centre > edge, "centre {centre} vs edge {edge}");
        // Nyström extension agrees with the node values.
        let mid = grid.len() / 2;
        assert_abs_diff_eq!(
            eq.occupancy_at(grid.nodes[mid]).unwrap(),
            eq.occupancy[mid],
            epsilon = 1e-9
        );
    }

    #[test]
    fn field_entries_bounded_by_sup_survival_after_one_step() {
        let chain = FiniteChain::from_rows(&[vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let traits = PatchTraits::phase_exponential(ThetaMap::PerState(vec![0.6, 0.85]), 8.0);
        let basis = LandscapeBasis::from_finite(&chain, &traits).unwrap();
        let (kernel, grid) = paper_grid();
        let q0 = OccupancyField::constant(2, grid.len(), 0.0).unwrap();
        let (q, _) = iterate_recursion(&q0, 30, &basis, &kernel, &grid);
        assert!(q.q.iter().all(|&v| v <= 0.85 + 1e-12));
    }
}
