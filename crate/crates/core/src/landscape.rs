//! Markov-chain machinery for patch characteristics.
//!
//! Two kinds of landscape dynamics are supported. A [`FiniteChain`] is a
//! chain on finitely many labelled states given by a row-stochastic matrix
//! `P` with stationary vector `π`; everything about it (stationary law,
//! dual kernel, reversibility, mixing) is handled with exact linear
//! algebra. A [`SampledChain`] is a sampler-defined chain on `[0,1]`, the
//! disturbance/recovery survival process
//!
//! ```text
//! s_{t+1} = s_t (1 - L_{t+1})        with probability p(s_t)
//! s_{t+1} = s_t + (1 - s_t) R_{t+1}  otherwise
//! ```
//!
//! with `L ~ F_L`, `R ~ F_R` Beta jumps; its stationary law is only
//! available as an empirical long-run reference.
//!
//! The dual transition matrix `P*` (time reversal at stationarity)
//! satisfies `π_i P_ij = π_j P*_ji` and coincides with `P` exactly for
//! reversible chains.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use serde::de::Error as DeError;
use serde::ser::Error as SerError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, streams, tag_bytes};

/// Tolerance on row sums of a stochastic matrix.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on the stationarity residual ‖πP − π‖∞.
pub const STATIONARY_TOL: f64 = 1e-10;

/// A patch characteristic: either a state of a finite chain or a point of
/// the continuous state space `[0,1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Theta {
    State(usize),
    Level(f64),
}

impl Theta {
    /// Finite-chain state index. Panics on a continuous characteristic.
    pub fn state(self) -> usize {
        match self {
            Theta::State(i) => i,
            Theta::Level(x) => panic!("expected a finite-chain state, got level {x}"),
        }
    }

    /// Continuous characteristic in `[0,1]`. Panics on a finite state.
    pub fn level(self) -> f64 {
        match self {
            Theta::Level(x) => x,
            Theta::State(i) => panic!("expected a continuous level, got state {i}"),
        }
    }
}

// ─── Finite chains ───────────────────────────────────────────────────────

/// Finite-state Markov chain with validated stationary distribution.
#[derive(Clone, Debug)]
pub struct FiniteChain {
    states: Vec<String>,
    p: DMatrix<f64>,
    pi: DVector<f64>,
}

/// Dual (time-reversed) transition matrix of a finite chain.
#[derive(Clone, Debug)]
pub struct DualKernel {
    p_star: DMatrix<f64>,
}

impl DualKernel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p_star
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.p_star
    }
}

fn check_row_stochastic(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(Error::Invalid(format!(
            "transition matrix must be square and non-empty, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    for i in 0..p.nrows() {
        let mut sum = 0.0;
        for j in 0..p.ncols() {
            let v = p[(i, j)];
            if v < 0.0 || v.is_nan() {
                return Err(Error::Invalid(format!("P[{i}][{j}] = {v} is negative or NaN")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Invalid(format!("row {i} of P sums to {sum}, not 1")));
        }
    }
    Ok(())
}

impl FiniteChain {
    /// Build a chain from labelled states, transition matrix and stationary
    /// vector. All invariants (row sums, πP = π, Σπ = 1) are checked.
    pub fn new(states: Vec<String>, p: DMatrix<f64>, pi: Vec<f64>) -> Result<Self> {
        check_row_stochastic(&p)?;
        if states.len() != p.nrows() {
            return Err(Error::Invalid(format!(
                "{} state labels for a {}-state matrix",
                states.len(),
                p.nrows()
            )));
        }
        if pi.len() != p.nrows() {
            return Err(Error::Invalid(format!(
                "pi has length {}, expected {}",
                pi.len(),
                p.nrows()
            )));
        }
        let mut pi = DVector::from_vec(pi);
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 || pi.iter().any(|&x| x < 0.0 || x.is_nan()) {
            return Err(Error::Invalid(format!("pi is not a probability vector (sum {total})")));
        }
        pi /= total;
        let residual = (pi.transpose() * &p - pi.transpose()).abs().max();
        if residual > STATIONARY_TOL {
            return Err(Error::Invalid(format!(
                "pi is not stationary for P: residual {residual:e}"
            )));
        }
        Ok(Self { states, p, pi })
    }

    /// Build from a transition matrix alone; the stationary distribution is
    /// computed, so the chain must have a unique closed communicating class.
    pub fn from_matrix(states: Vec<String>, p: DMatrix<f64>) -> Result<Self> {
        let pi = stationary_distribution(&p)?;
        Self::new(states, p, pi)
    }

    /// Convenience constructor with numeric labels.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let p = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        let states = (0..m).map(|i| i.to_string()).collect();
        Self::from_matrix(states, p)
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.pi
    }

    /// Dual transition matrix with respect to the stationary distribution.
    pub fn dual(&self) -> Result<DualKernel> {
        dual_kernel(&self.p, &self.pi)
    }

    /// Detailed balance `π_i P_ij = π_j P_ji` within `tol`.
    pub fn is_reversible(&self, tol: f64) -> bool {
        is_reversible(&self.p, &self.pi, tol)
    }

    pub fn diagnose(&self) -> ChainDiagnosis {
        check_irreducible_aperiodic(&self.p)
    }

    /// One transition from state `i`.
    pub fn step_state(&self, i: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for j in 0..self.len() {
            acc += self.p[(i, j)];
            if u < acc {
                return j;
            }
        }
        self.len() - 1
    }

    /// Draw a state from the stationary distribution.
    pub fn sample_stationary(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for j in 0..self.len() {
            acc += self.pi[j];
            if u < acc {
                return j;
            }
        }
        self.len() - 1
    }

    /// Path of length `t + 1` starting at `theta0`, deterministic in `seed`.
    pub fn sample_path(&self, theta0: usize, t: usize, seed: u64) -> Vec<usize> {
        let mut rng = stream_rng(seed, &[streams::PATH]);
        let mut path = Vec::with_capacity(t + 1);
        let mut state = theta0;
        path.push(state);
        for _ in 0..t {
            state = self.step_state(state, &mut rng);
            path.push(state);
        }
        path
    }

    /// Total-variation distance between the empirical law of `θ_t` over
    /// `n_samples` independent paths from `theta0` and the stationary
    /// distribution.
    pub fn tv_distance_to_stationary(
        &self,
        theta0: usize,
        t: usize,
        n_samples: usize,
        seed: u64,
    ) -> f64 {
        let mut counts = vec![0usize; self.len()];
        for k in 0..n_samples {
            let mut rng = stream_rng(seed, &[streams::TV_SAMPLES, k as u64]);
            let mut state = theta0;
            for _ in 0..t {
                state = self.step_state(state, &mut rng);
            }
            counts[state] += 1;
        }
        let n = n_samples as f64;
        0.5 * counts
            .iter()
            .enumerate()
            .map(|(j, &c)| (c as f64 / n - self.pi[j]).abs())
            .sum::<f64>()
    }
}

/// Stationary distribution of a row-stochastic matrix.
///
/// Direct linear solve of the augmented system `(Pᵀ − I; 1ᵀ) π = e` for
/// small matrices, power iteration above 2000 states. Fails with
/// [`Error::NotIrreducible`] when the chain has more than one closed
/// communicating class, in which case π is not unique.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_row_stochastic(p)?;
    let diag = check_irreducible_aperiodic(p);
    if diag.closed_classes > 1 {
        return Err(Error::NotIrreducible {
            closed_classes: diag.closed_classes,
        });
    }
    let m = p.nrows();
    let mut pi = if m <= 2000 {
        // (Pᵀ − I) with the last equation replaced by the normalisation Σπ = 1.
        let mut a = p.transpose() - DMatrix::<f64>::identity(m, m);
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(m);
        b[m - 1] = 1.0;
        match a.lu().solve(&b) {
            Some(x) => x,
            None => power_stationary(p),
        }
    } else {
        power_stationary(p)
    };
    for x in pi.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi /= total;
    let residual = (pi.transpose() * p - pi.transpose()).abs().max();
    if residual > STATIONARY_TOL {
        // Periodic or badly conditioned chains can defeat the direct solve
        // rounding; refine with averaged power iterations.
        let refined = power_stationary(p);
        let r2 = (refined.transpose() * p - refined.transpose()).abs().max();
        if r2 > STATIONARY_TOL {
            return Err(Error::Invalid(format!(
                "stationary solve residual {residual:e} exceeds {STATIONARY_TOL:e}"
            )));
        }
        return Ok(refined.iter().copied().collect());
    }
    Ok(pi.iter().copied().collect())
}

fn power_stationary(p: &DMatrix<f64>) -> DVector<f64> {
    let m = p.nrows();
    // Damping handles periodic chains: π is invariant for (P + I)/2 iff it
    // is invariant for P, and the damped chain is aperiodic.
    let mut v = DVector::from_element(m, 1.0 / m as f64);
    for _ in 0..200_000 {
        let mut next = (v.transpose() * p).transpose();
        next = 0.5 * &next + 0.5 * &v;
        let delta = (&next - &v).abs().max();
        v = next;
        if delta < 1e-15 {
            break;
        }
    }
    let total: f64 = v.iter().sum();
    v / total
}

/// Dual transition matrix: `P*_ji = π_i P_ij / π_j`.
pub fn dual_kernel(p: &DMatrix<f64>, pi: &DVector<f64>) -> Result<DualKernel> {
    check_row_stochastic(p)?;
    let m = p.nrows();
    for j in 0..m {
        if pi[j] < 1e-12 {
            return Err(Error::ZeroMassState { state: j });
        }
    }
    let mut p_star = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..m {
            p_star[(j, i)] = pi[i] * p[(i, j)] / pi[j];
        }
    }
    Ok(DualKernel { p_star })
}

/// Detailed balance `max_{i,j} |π_i P_ij − π_j P_ji| ≤ tol`.
pub fn is_reversible(p: &DMatrix<f64>, pi: &DVector<f64>, tol: f64) -> bool {
    let m = p.nrows();
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            worst = worst.max((pi[i] * p[(i, j)] - pi[j] * p[(j, i)]).abs());
        }
    }
    worst <= tol
}

/// Communicating-class and periodicity report for a finite chain.
#[derive(Clone, Debug)]
pub struct ChainDiagnosis {
    /// Communicating classes (strongly connected components), each a sorted
    /// list of state indices.
    pub classes: Vec<Vec<usize>>,
    /// Number of classes with no transition leaving them.
    pub closed_classes: usize,
    pub irreducible: bool,
    /// Period of the chain when irreducible.
    pub period: Option<usize>,
    /// Irreducible and aperiodic; the finite-state stand-in for positive
    /// Harris recurrence.
    pub positive_harris_surrogate: bool,
}

/// Classify the communicating structure of `p` and compute the period.
pub fn check_irreducible_aperiodic(p: &DMatrix<f64>) -> ChainDiagnosis {
    let m = p.nrows();
    let mut graph = DiGraph::<(), ()>::with_capacity(m, m * m / 4);
    let nodes: Vec<_> = (0..m).map(|_| graph.add_node(())).collect();
    for i in 0..m {
        for j in 0..m {
            if p[(i, j)] > 0.0 {
                graph.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = tarjan_scc(&graph);
    let mut classes: Vec<Vec<usize>> = sccs
        .iter()
        .map(|c| {
            let mut ids: Vec<usize> = c.iter().map(|n| n.index()).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    classes.sort();

    let mut class_of = vec![0usize; m];
    for (k, class) in classes.iter().enumerate() {
        for &i in class {
            class_of[i] = k;
        }
    }
    let mut closed = vec![true; classes.len()];
    for i in 0..m {
        for j in 0..m {
            if p[(i, j)] > 0.0 && class_of[i] != class_of[j] {
                closed[class_of[i]] = false;
            }
        }
    }
    let closed_classes = closed.iter().filter(|&&c| c).count();
    let irreducible = classes.len() == 1;
    let period = irreducible.then(|| chain_period(p));
    let positive_harris_surrogate = irreducible && period == Some(1);
    ChainDiagnosis {
        classes,
        closed_classes,
        irreducible,
        period,
        positive_harris_surrogate,
    }
}

/// Period via BFS levels: gcd over edges (u→v) of level(u) + 1 − level(v).
fn chain_period(p: &DMatrix<f64>) -> usize {
    let m = p.nrows();
    let mut level = vec![i64::MIN; m];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    let mut g: i64 = 0;
    while let Some(u) = queue.pop_front() {
        for v in 0..m {
            if p[(u, v)] > 0.0 {
                if level[v] == i64::MIN {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    g = gcd(g, (level[u] + 1 - level[v]).abs());
                }
            }
        }
    }
    if g == 0 {
        // A chain with no return cycles inside the explored graph; by
        // convention report the state count (pure cycle).
        m.max(1)
    } else {
        g as usize
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// ─── Sampled chains on [0,1] ─────────────────────────────────────────────

/// Disturbance probability as a function of the current survival level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PFunction {
    /// `clamp(slope · (x − knee), 0, 1)`; the hockey-stick form used with
    /// the Beta-jump chain (slope 10, knee 0.9 makes p(1) = 1).
    RampClamp { slope: f64, knee: f64 },
    /// Constant disturbance probability.
    Constant(f64),
}

impl PFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            PFunction::RampClamp { slope, knee } => (slope * (x - knee)).clamp(0.0, 1.0),
            PFunction::Constant(c) => c.clamp(0.0, 1.0),
        }
    }
}

/// Law of a relative jump on [0,1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JumpLaw {
    Beta { alpha: f64, beta: f64 },
    /// Degenerate point mass; handy for edge cases such as L ≡ 1.
    Point(f64),
}

#[derive(Clone, Copy, Debug)]
enum JumpSampler {
    /// Beta(1, β): inverse CDF 1 − U^{1/β}.
    OneMinusPow { inv_beta: f64 },
    /// Beta(α, 1): inverse CDF U^{1/α}.
    Pow { inv_alpha: f64 },
    /// General Beta via the gamma-ratio method.
    General(rand_distr::Beta<f64>),
    Point(f64),
}

impl JumpSampler {
    fn build(law: JumpLaw) -> Result<Self> {
        match law {
            JumpLaw::Beta { alpha, beta } => {
                if !(alpha > 0.0 && beta > 0.0) {
                    return Err(Error::Invalid(format!(
                        "Beta parameters must be positive, got ({alpha}, {beta})"
                    )));
                }
                if alpha == 1.0 {
                    Ok(JumpSampler::OneMinusPow { inv_beta: 1.0 / beta })
                } else if beta == 1.0 {
                    Ok(JumpSampler::Pow { inv_alpha: 1.0 / alpha })
                } else {
                    let d = rand_distr::Beta::new(alpha, beta)
                        .map_err(|e| Error::Invalid(format!("Beta({alpha},{beta}): {e}")))?;
                    Ok(JumpSampler::General(d))
                }
            }
            JumpLaw::Point(c) => {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::Invalid(format!("point jump {c} outside [0,1]")));
                }
                Ok(JumpSampler::Point(c))
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            JumpSampler::OneMinusPow { inv_beta } => {
                let u: f64 = rng.random();
                1.0 - u.powf(inv_beta)
            }
            JumpSampler::Pow { inv_alpha } => {
                let u: f64 = rng.random();
                u.powf(inv_alpha)
            }
            JumpSampler::General(d) => d.sample(rng).clamp(0.0, 1.0),
            JumpSampler::Point(c) => c,
        }
    }
}

/// Canonical parameterisation of the Beta-jump survival chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaJumpParams {
    #[serde(rename = "aL")]
    pub a_l: f64,
    #[serde(rename = "bL")]
    pub b_l: f64,
    #[serde(rename = "aR")]
    pub a_r: f64,
    #[serde(rename = "bR")]
    pub b_r: f64,
    #[serde(default = "default_p_slope")]
    pub p_slope: f64,
    #[serde(default = "default_p_knee")]
    pub p_knee: f64,
}

fn default_p_slope() -> f64 {
    10.0
}

fn default_p_knee() -> f64 {
    0.9
}

impl BetaJumpParams {
    /// Frequent large drops, uniform recovery: L ~ Beta(1, 0.1), R ~ Beta(1, 1).
    pub fn heavy_drops() -> Self {
        Self { a_l: 1.0, b_l: 0.1, a_r: 1.0, b_r: 1.0, p_slope: 10.0, p_knee: 0.9 }
    }

    /// Uniform drops, slow recovery: L ~ Beta(1, 1), R ~ Beta(1, 20).
    pub fn slow_recovery() -> Self {
        Self { a_l: 1.0, b_l: 1.0, a_r: 1.0, b_r: 20.0, p_slope: 10.0, p_knee: 0.9 }
    }
}

/// Number of retained steps in the stationary reference run.
pub const REFERENCE_STEPS: usize = 1_000_000;
/// Burn-in discarded before the reference run.
pub const REFERENCE_BURNIN: usize = 10_000;
/// Default bin count for empirical distributions on [0,1].
pub const DEFAULT_BINS: usize = 100;

/// Empirical stand-in for the stationary law of a sampled chain: one long
/// run with fixed internal seed, so every consumer sees the same reference.
#[derive(Clone, Debug)]
pub struct StationaryReference {
    samples: Vec<f64>,
}

impl StationaryReference {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn histogram(&self, bins: usize) -> Vec<f64> {
        let mut h = vec![0.0; bins];
        for &x in &self.samples {
            let idx = ((x * bins as f64) as usize).min(bins - 1);
            h[idx] += 1.0;
        }
        let n = self.samples.len() as f64;
        for v in &mut h {
            *v /= n;
        }
        h
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }
}

/// Sampler-defined Markov chain on `[0,1]` (the Beta-jump survival process).
#[derive(Clone, Debug)]
pub struct SampledChain {
    params: Option<BetaJumpParams>,
    p: PFunction,
    drop_law: JumpLaw,
    rise_law: JumpLaw,
    drop: JumpSampler,
    rise: JumpSampler,
    reference: OnceLock<Arc<StationaryReference>>,
}

impl SampledChain {
    /// The canonical Beta-jump chain; this is the only form that
    /// round-trips through the JSON chain schema.
    pub fn beta_jump(params: BetaJumpParams) -> Result<Self> {
        let drop_law = JumpLaw::Beta { alpha: params.a_l, beta: params.b_l };
        let rise_law = JumpLaw::Beta { alpha: params.a_r, beta: params.b_r };
        Ok(Self {
            params: Some(params),
            p: PFunction::RampClamp { slope: params.p_slope, knee: params.p_knee },
            drop_law,
            rise_law,
            drop: JumpSampler::build(drop_law)?,
            rise: JumpSampler::build(rise_law)?,
            reference: OnceLock::new(),
        })
    }

    /// Fully general constructor for edge cases (p ≡ 0, L ≡ 1, ...).
    pub fn from_parts(p: PFunction, drop_law: JumpLaw, rise_law: JumpLaw) -> Result<Self> {
        Ok(Self {
            params: None,
            p,
            drop_law,
            rise_law,
            drop: JumpSampler::build(drop_law)?,
            rise: JumpSampler::build(rise_law)?,
            reference: OnceLock::new(),
        })
    }

    pub fn params(&self) -> Option<&BetaJumpParams> {
        self.params.as_ref()
    }

    pub fn disturbance(&self) -> &PFunction {
        &self.p
    }

    /// One transition of the survival process; the output stays in [0,1].
    pub fn step_level(&self, s: f64, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        let next = if u < self.p.eval(s) {
            s * (1.0 - self.drop.sample(rng))
        } else {
            s + (1.0 - s) * self.rise.sample(rng)
        };
        next.clamp(0.0, 1.0)
    }

    /// Path of length `t + 1` starting at `theta0`, deterministic in `seed`.
    pub fn sample_path(&self, theta0: f64, t: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, &[streams::PATH]);
        let mut path = Vec::with_capacity(t + 1);
        let mut s = theta0.clamp(0.0, 1.0);
        path.push(s);
        for _ in 0..t {
            s = self.step_level(s, &mut rng);
            path.push(s);
        }
        path
    }

    /// Stable tag identifying this chain's parameterisation.
    fn spec_tag(&self) -> u64 {
        fn push(bytes: &mut Vec<u8>, x: f64) {
            bytes.extend_from_slice(&x.to_bits().to_le_bytes());
        }
        let mut bytes = Vec::with_capacity(64);
        match self.p {
            PFunction::RampClamp { slope, knee } => {
                bytes.push(0);
                push(&mut bytes, slope);
                push(&mut bytes, knee);
            }
            PFunction::Constant(c) => {
                bytes.push(1);
                push(&mut bytes, c);
            }
        }
        for law in [self.drop_law, self.rise_law] {
            match law {
                JumpLaw::Beta { alpha, beta } => {
                    bytes.push(2);
                    push(&mut bytes, alpha);
                    push(&mut bytes, beta);
                }
                JumpLaw::Point(c) => {
                    bytes.push(3);
                    push(&mut bytes, c);
                }
            }
        }
        tag_bytes(&bytes)
    }

    /// Long-run empirical reference for the stationary law: 10^6 retained
    /// steps after a 10^4 burn-in, fixed internal seed. Computed once and
    /// shared.
    pub fn stationary_reference(&self) -> Arc<StationaryReference> {
        self.reference
            .get_or_init(|| {
                let mut rng = stream_rng(self.spec_tag(), &[streams::REFERENCE]);
                let mut s = 0.5;
                for _ in 0..REFERENCE_BURNIN {
                    s = self.step_level(s, &mut rng);
                }
                let mut samples = Vec::with_capacity(REFERENCE_STEPS);
                for _ in 0..REFERENCE_STEPS {
                    s = self.step_level(s, &mut rng);
                    samples.push(s);
                }
                Arc::new(StationaryReference { samples })
            })
            .clone()
    }

    /// Draw approximately from the stationary law (uniform over the
    /// reference reservoir).
    pub fn sample_stationary(&self, rng: &mut ChaCha8Rng) -> f64 {
        let reference = self.stationary_reference();
        let idx = rng.random_range(0..reference.samples.len());
        reference.samples[idx]
    }

    /// Total-variation distance between the binned empirical law of `θ_t`
    /// over `n_samples` paths from `theta0` and the binned stationary
    /// reference.
    pub fn tv_distance_to_stationary(
        &self,
        theta0: f64,
        t: usize,
        n_samples: usize,
        bins: usize,
        seed: u64,
    ) -> f64 {
        let reference = self.stationary_reference().histogram(bins);
        let mut h = vec![0.0; bins];
        for k in 0..n_samples {
            let mut rng = stream_rng(seed, &[streams::TV_SAMPLES, k as u64]);
            let mut s = theta0;
            for _ in 0..t {
                s = self.step_level(s, &mut rng);
            }
            let idx = ((s * bins as f64) as usize).min(bins - 1);
            h[idx] += 1.0;
        }
        let n = n_samples as f64;
        0.5 * h
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a / n - b).abs())
            .sum::<f64>()
    }
}

// ─── Unified landscape ───────────────────────────────────────────────────

/// Landscape dynamics: a finite chain or a sampled chain on [0,1].
#[derive(Clone, Debug)]
pub enum Landscape {
    Finite(FiniteChain),
    Sampled(SampledChain),
}

impl Landscape {
    pub fn as_finite(&self) -> Option<&FiniteChain> {
        match self {
            Landscape::Finite(c) => Some(c),
            Landscape::Sampled(_) => None,
        }
    }

    pub fn as_sampled(&self) -> Option<&SampledChain> {
        match self {
            Landscape::Sampled(c) => Some(c),
            Landscape::Finite(_) => None,
        }
    }

    pub fn sample_stationary(&self, rng: &mut ChaCha8Rng) -> Theta {
        match self {
            Landscape::Finite(c) => Theta::State(c.sample_stationary(rng)),
            Landscape::Sampled(c) => Theta::Level(c.sample_stationary(rng)),
        }
    }

    pub fn step_theta(&self, theta: Theta, rng: &mut ChaCha8Rng) -> Theta {
        match self {
            Landscape::Finite(c) => Theta::State(c.step_state(theta.state(), rng)),
            Landscape::Sampled(c) => Theta::Level(c.step_level(theta.level(), rng)),
        }
    }

    pub fn sample_path(&self, theta0: Theta, t: usize, seed: u64) -> Vec<Theta> {
        match self {
            Landscape::Finite(c) => c
                .sample_path(theta0.state(), t, seed)
                .into_iter()
                .map(Theta::State)
                .collect(),
            Landscape::Sampled(c) => c
                .sample_path(theta0.level(), t, seed)
                .into_iter()
                .map(Theta::Level)
                .collect(),
        }
    }
}

// ─── JSON schema ─────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LandscapeRepr {
    Finite {
        states: Vec<String>,
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pi: Option<Vec<f64>>,
    },
    BetaJump { beta_jump: BetaJumpParams },
}

impl Serialize for Landscape {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = match self {
            Landscape::Finite(c) => LandscapeRepr::Finite {
                states: c.states.clone(),
                p: (0..c.len())
                    .map(|i| (0..c.len()).map(|j| c.p[(i, j)]).collect())
                    .collect(),
                pi: Some(c.pi.iter().copied().collect()),
            },
            Landscape::Sampled(c) => match c.params {
                Some(params) => LandscapeRepr::BetaJump { beta_jump: params },
                None => {
                    return Err(S::Error::custom(
                        "only canonical beta_jump sampled chains serialize to JSON",
                    ))
                }
            },
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Landscape {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = LandscapeRepr::deserialize(deserializer)?;
        match repr {
            LandscapeRepr::Finite { states, p, pi } => {
                let m = p.len();
                if p.iter().any(|row| row.len() != m) {
                    return Err(D::Error::custom("P must be square"));
                }
                let matrix = DMatrix::from_fn(m, m, |i, j| p[i][j]);
                let chain = match pi {
                    Some(pi) => FiniteChain::new(states, matrix, pi),
                    None => FiniteChain::from_matrix(states, matrix),
                }
                .map_err(D::Error::custom)?;
                Ok(Landscape::Finite(chain))
            }
            LandscapeRepr::BetaJump { beta_jump } => Ok(Landscape::Sampled(
                SampledChain::beta_jump(beta_jump).map_err(D::Error::custom)?,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cycle3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    }

    #[test]
    fn stationary_symmetric_two_state() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_hand_solved_two_state() {
        // πP = π with P = [[3/4,1/4],[1/2,1/2]] solves to π = (2/3, 1/3).
        let p = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.5, 0.5]);
        let pi = stationary_distribution(&p).unwrap();
        assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_cycle_uniform() {
        let pi = stationary_distribution(&cycle3()).unwrap();
        for &mass in &pi {
            assert_abs_diff_eq!(mass, 1.0 / 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn stationary_rejects_reducible() {
        let p = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.5, 0.0, 0.0, //
                0.5, 0.5, 0.0, 0.0, //
                0.0, 0.0, 0.2, 0.8, //
                0.0, 0.0, 0.3, 0.7,
            ],
        );
        match stationary_distribution(&p) {
            Err(Error::NotIrreducible { closed_classes }) => assert_eq!(closed_classes, 2),
            other => panic!("expected NotIrreducible, got {other:?}"),
        }
    }

    #[test]
    fn dual_of_two_state_is_itself() {
        let chain = FiniteChain::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        let dual = chain.dual().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    dual.matrix()[(i, j)],
                    chain.transition()[(i, j)],
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn dual_of_cycle_is_transpose() {
        let chain = FiniteChain::from_matrix(
            vec!["a".into(), "b".into(), "c".into()],
            cycle3(),
        )
        .unwrap();
        let dual = chain.dual().unwrap();
        let expected = cycle3().transpose();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(dual.matrix()[(i, j)], expected[(i, j)], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn dual_rejects_zero_mass() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]);
        let pi = DVector::from_vec(vec![1.0, 0.0]);
        match dual_kernel(&p, &pi) {
            Err(Error::ZeroMassState { state }) => assert_eq!(state, 1),
            other => panic!("expected ZeroMassState, got {other:?}"),
        }
    }

    #[test]
    fn two_state_chains_are_reversible() {
        let chain = FiniteChain::from_rows(&[vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        assert!(chain.is_reversible(1e-12));
    }

    #[test]
    fn cycle_is_not_reversible_identity_is() {
        let chain =
            FiniteChain::from_matrix(vec!["a".into(), "b".into(), "c".into()], cycle3()).unwrap();
        assert!(!chain.is_reversible(1e-9));
        let ident = FiniteChain::new(
            vec!["a".into(), "b".into()],
            DMatrix::identity(2, 2),
            vec![0.3, 0.7],
        )
        .unwrap();
        assert!(ident.is_reversible(0.0));
    }

    #[test]
    fn diagnosis_examples() {
        let d = check_irreducible_aperiodic(&DMatrix::from_row_slice(
            2,
            2,
            &[0.9, 0.1, 0.2, 0.8],
        ));
        assert!(d.irreducible);
        assert_eq!(d.period, Some(1));
        assert!(d.positive_harris_surrogate);

        let d = check_irreducible_aperiodic(&cycle3());
        assert!(d.irreducible);
        assert_eq!(d.period, Some(3));
        assert!(!d.positive_harris_surrogate);

        let block = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.5, 0.0, 0.0, //
                0.5, 0.5, 0.0, 0.0, //
                0.0, 0.0, 0.2, 0.8, //
                0.0, 0.0, 0.3, 0.7,
            ],
        );
        let d = check_irreducible_aperiodic(&block);
        assert!(!d.irreducible);
        assert_eq!(d.classes.len(), 2);
        assert_eq!(d.closed_classes, 2);
    }

    #[test]
    fn identity_path_is_constant() {
        let chain = FiniteChain::new(
            vec!["a".into(), "b".into()],
            DMatrix::identity(2, 2),
            vec![0.0, 1.0],
        )
        .unwrap();
        assert_eq!(chain.sample_path(1, 5, 7), vec![1; 6]);
    }

    #[test]
    fn paths_are_seed_deterministic() {
        let chain = FiniteChain::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        assert_eq!(chain.sample_path(0, 50, 9), chain.sample_path(0, 50, 9));
        assert_ne!(chain.sample_path(0, 50, 9), chain.sample_path(0, 50, 10));
    }

    #[test]
    fn certain_drop_kills_path() {
        // p ≡ 1 with L ≡ 1 sends any state to 0 at the first step.
        let chain = SampledChain::from_parts(
            PFunction::Constant(1.0),
            JumpLaw::Point(1.0),
            JumpLaw::Beta { alpha: 1.0, beta: 1.0 },
        )
        .unwrap();
        let path = chain.sample_path(0.7, 4, 3);
        assert_eq!(path, vec![0.7, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn no_disturbance_is_monotone() {
        let chain = SampledChain::from_parts(
            PFunction::Constant(0.0),
            JumpLaw::Beta { alpha: 1.0, beta: 0.1 },
            JumpLaw::Beta { alpha: 1.0, beta: 1.0 },
        )
        .unwrap();
        let path = chain.sample_path(0.1, 200, 11);
        assert!(path.windows(2).all(|w| w[1] >= w[0]));
        assert!(path.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn beta_jump_sawtooth_has_rare_large_drops() {
        // Heavy-drop parameterisation: positive but uncommon crashes.
        let chain = SampledChain::beta_jump(BetaJumpParams::heavy_drops()).unwrap();
        let path = chain.sample_path(0.5, 2000, 42);
        assert!(path.iter().all(|&s| (0.0..=1.0).contains(&s)));
        let drops = path
            .windows(2)
            .filter(|w| w[0] - w[1] > 0.5)
            .count() as f64
            / 2000.0;
        assert!(drops > 0.0, "expected some large drops");
        assert!(drops < 0.2, "drops too frequent: {drops}");
    }

    #[test]
    fn tv_identity_chain_is_zero() {
        let chain = FiniteChain::new(
            vec!["a".into(), "b".into()],
            DMatrix::identity(2, 2),
            vec![1.0, 0.0],
        )
        .unwrap();
        for t in 0..4 {
            assert_eq!(chain.tv_distance_to_stationary(0, t, 500, 5), 0.0);
        }
    }

    #[test]
    fn tv_one_step_mixing() {
        let chain = FiniteChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let d = chain.tv_distance_to_stationary(0, 1, 200_000, 5);
        assert!(d < 0.005, "one-step mixing TV {d}");
    }

    #[test]
    fn tv_decays_at_second_eigenvalue_rate() {
        // Exact law: TV(t) = |e_0 Pᵗ − π|_TV = (1/3)·(1/4)ᵗ. The empirical
        // estimate must track it and drop below 0.01 by t = 20.
        let chain = FiniteChain::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        let start = DVector::from_vec(vec![1.0, 0.0]);
        let mut previous = f64::INFINITY;
        for t in [1usize, 3, 6] {
            let mut exact_row = start.clone();
            for _ in 0..t {
                exact_row = (exact_row.transpose() * chain.transition()).transpose();
            }
            let exact: f64 = 0.5
                * (0..2)
                    .map(|j| (exact_row[j] - chain.stationary()[j]).abs())
                    .sum::<f64>();
            let expected = (1.0 / 3.0) * 0.25f64.powi(t as i32);
            assert_abs_diff_eq!(exact, expected, epsilon = 1e-12);
            let empirical = chain.tv_distance_to_stationary(0, t, 200_000, 5);
            assert!((empirical - exact).abs() < 0.01);
            assert!(exact < previous);
            previous = exact;
        }
        assert!(chain.tv_distance_to_stationary(0, 20, 200_000, 5) < 0.01);
    }

    #[test]
    fn sampled_chain_stays_in_unit_interval_long_run() {
        let chain = SampledChain::beta_jump(BetaJumpParams::slow_recovery()).unwrap();
        let reference = chain.stationary_reference();
        assert_eq!(reference.samples().len(), REFERENCE_STEPS);
        assert!(reference.samples().iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn landscape_json_round_trip() {
        let chain = FiniteChain::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        let json = serde_json::to_string(&Landscape::Finite(chain)).unwrap();
        assert!(json.contains("\"P\""));
        let back: Landscape = serde_json::from_str(&json).unwrap();
        let c = back.as_finite().unwrap();
        assert_abs_diff_eq!(c.stationary()[0], 2.0 / 3.0, epsilon = 1e-10);

        let json = r#"{"beta_jump":{"aL":1.0,"bL":0.1,"aR":1.0,"bR":1.0,"p_slope":10.0,"p_knee":0.9}}"#;
        let back: Landscape = serde_json::from_str(json).unwrap();
        let params = back.as_sampled().unwrap().params().unwrap();
        assert_eq!(params.b_l, 0.1);
        let round = serde_json::to_string(&back).unwrap();
        assert!(round.contains("beta_jump"));
    }
}
