//! Persistence criterion and lifespan analysis.
//!
//! The species/landscape factor is the series over the forward chain
//!
//! ```text
//! r_S = Σ_{m≥1} E[ f̄′(0; θ_0) (Π_{n=0}^{m−1} s(θ_n)) a(θ_m) ]
//! ```
//!
//! and the spatial factor is the spectral radius `r(M)` of the dispersal
//! operator `(Mφ)(z) = ∫ D(z, z̃) φ(z̃) ζ(z̃) dz̃`. The recursion has only
//! the zero fixed point when `r_S·r(M) ≤ 1` and a unique positive one
//! when `r_S·r(M) > 1`. Under the product-form landscape measure the
//! threshold operator `A` factorises, `r(A) = r_S·r(M)`, which doubles as
//! a cross-check of the dual-chain series construction.
//!
//! A local population's lifespan has tail `E[Π_{n=0}^{m−1} s(θ_n)]`;
//! termwise dominance of the weighted moment sequence orders equilibrium
//! occupancy (stochastic-ordering comparison), and the static landscape
//! maximises the tail among chains sharing a stationary law.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{FiniteChain, Landscape, SampledChain, Theta};
use crate::meanfield::{
    equilibrium, moment_sequence, EquilibriumOptions, KernelGrid, LandscapeBasis, McSettings,
    DEFAULT_TRUNCATION,
};
use crate::patch::{DispersalKernel, Grid, PatchTraits, SpatialDomain};
use crate::rng::{stream_rng, streams};

/// Relative tolerance of the spectral-radius power iteration.
pub const POWER_RTOL: f64 = 1e-10;
/// Iteration cap of the power iteration.
pub const POWER_MAX_ITER: usize = 100_000;

/// A possibly Monte Carlo scalar estimate.
#[derive(Clone, Copy, Debug)]
pub struct McValue {
    pub value: f64,
    pub se: Option<f64>,
}

// ─── r_S ─────────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug)]
pub struct RsOptions {
    pub truncation: usize,
    /// Also count the m = 0 term `E[f̄′(0;θ_0) a(θ_0)]`, reproducing the
    /// constant-area restatement of the series (index shifted by one).
    pub include_m0: bool,
    pub mc: McSettings,
}

impl Default for RsOptions {
    fn default() -> Self {
        Self { truncation: DEFAULT_TRUNCATION, include_m0: false, mc: McSettings::default() }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RsEstimate {
    pub value: f64,
    pub se: Option<f64>,
    pub tail_bound: f64,
    pub truncation: usize,
}

/// The species/landscape interaction series over the forward chain.
pub fn r_s(landscape: &Landscape, traits: &PatchTraits, opts: &RsOptions) -> Result<RsEstimate> {
    match landscape {
        Landscape::Finite(chain) => r_s_finite(chain, traits, opts),
        Landscape::Sampled(chain) => r_s_sampled(chain, traits, opts),
    }
}

fn r_s_finite(chain: &FiniteChain, traits: &PatchTraits, opts: &RsOptions) -> Result<RsEstimate> {
    let m = chain.len();
    let s = DVector::from_fn(m, |j, _| traits.survival_at(Theta::State(j)));
    let a = DVector::from_fn(m, |j, _| traits.weight_at(Theta::State(j)));
    let mut fb0 = DVector::zeros(m);
    for j in 0..m {
        fb0[j] = traits.fbar_deriv0(Theta::State(j))?;
    }
    let pi = chain.stationary();
    let p = chain.transition();

    let mut value = if opts.include_m0 {
        pi.component_mul(&fb0).dot(&a)
    } else {
        0.0
    };
    // u_m = (π ⊙ f̄′ ⊙ s)·(P diag(s))^{m−1} P; term_m = u_m·a.
    let mut u = pi.component_mul(&fb0).component_mul(&s);
    for _ in 1..=opts.truncation {
        let moved = (u.transpose() * p).transpose();
        value += moved.dot(&a);
        u = moved.component_mul(&s);
    }

    let sup_s = s.iter().fold(0.0f64, |acc, &v| acc.max(v));
    let sup_rest = fb0.amax() * a.amax();
    let tail_bound = if sup_s < 1.0 {
        sup_rest * sup_s.powi(opts.truncation as i32 + 1) / (1.0 - sup_s)
    } else {
        f64::INFINITY
    };
    Ok(RsEstimate { value, se: None, tail_bound, truncation: opts.truncation })
}

fn r_s_sampled(chain: &SampledChain, traits: &PatchTraits, opts: &RsOptions) -> Result<RsEstimate> {
    let paths = opts.mc.paths.max(1);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for path in 0..paths {
        let mut rng = stream_rng(opts.mc.seed, &[streams::MOMENTS, path as u64]);
        let mut th = chain.sample_stationary(&mut rng);
        let fb0 = traits.fbar_deriv0(Theta::Level(th))?;
        let mut total = if opts.include_m0 {
            fb0 * traits.weight_at(Theta::Level(th))
        } else {
            0.0
        };
        let mut prod = 1.0;
        for _ in 1..=opts.truncation {
            prod *= traits.survival_at(Theta::Level(th));
            th = chain.step_level(th, &mut rng);
            total += fb0 * prod * traits.weight_at(Theta::Level(th));
        }
        sum += total;
        sum_sq += total * total;
    }
    let n = paths as f64;
    let mean = sum / n;
    let se = if paths > 1 {
        Some((((sum_sq / n - mean * mean).max(0.0)) / (n - 1.0)).sqrt())
    } else {
        None
    };
    Ok(RsEstimate { value: mean, se, tail_bound: f64::NAN, truncation: opts.truncation })
}

// ─── Spectral radii ──────────────────────────────────────────────────────

/// Leading eigenvalue of a non-negative matrix by power iteration with
/// all-ones start.
pub(crate) fn power_iteration(mat: &DMatrix<f64>, rtol: f64, max_iter: usize) -> Result<f64> {
    let n = mat.nrows();
    let mut v = DVector::from_element(n, 1.0);
    let mut lambda_prev = f64::INFINITY;
    let mut last_delta = f64::INFINITY;
    for _ in 0..max_iter {
        let w = mat * &v;
        let lambda = w.amax();
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let w = w / lambda;
        let v_delta = (&w - &v).abs().max();
        last_delta = ((lambda - lambda_prev) / lambda).abs();
        if last_delta < rtol && v_delta < rtol {
            return Ok(lambda);
        }
        lambda_prev = lambda;
        v = w;
    }
    Err(Error::NoConvergence { max_iter, last_delta })
}

/// Spectral radius of the dispersal operator discretised on the grid:
/// matrix `M_kl = D(z_k, z_l) ζ(z_l) w_l`.
pub fn spectral_radius_m(kernel: &DispersalKernel, grid: &Grid) -> Result<f64> {
    let kg = KernelGrid::new(kernel, grid);
    let k = grid.len();
    let mut mat = kg.kmat.clone();
    for c in 0..k {
        let mass = kg.masses[c];
        for r in 0..k {
            mat[(r, c)] *= mass;
        }
    }
    power_iteration(&mat, POWER_RTOL, POWER_MAX_ITER)
}

/// Spectral radius of the threshold operator `A`: the dispersal matrix
/// weighted by the θ-collapsed dual-chain series
/// `Σ_j a(j) π_j Σ_{m≥1} E[f′(0; θ*_m) Π_{n=1}^{m−1} s(θ*_n) | θ*_0 = j]`.
pub fn spectral_radius_a(
    chain: &FiniteChain,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    grid: &Grid,
    truncation: usize,
) -> Result<f64> {
    let basis = LandscapeBasis::from_finite(chain, traits)?;
    let m = basis.len();
    // f′(0; θ) = s(θ)·f̄′(0; θ) under the phase structure.
    let mut g = DVector::zeros(m);
    for j in 0..m {
        g[j] = basis.s[j] * traits.fbar_deriv0(basis.support[j])?;
    }
    let mut w = &basis.p_star * &g;
    let mut series = w.clone();
    for _ in 1..truncation {
        w = &basis.p_star * basis.s.component_mul(&w);
        series += &w;
    }
    let weight = basis.a.component_mul(&basis.pi).dot(&series);

    let kg = KernelGrid::new(kernel, grid);
    let k = grid.len();
    let mut mat = kg.kmat.clone();
    for c in 0..k {
        let mass = kg.masses[c] * weight;
        for r in 0..k {
            mat[(r, c)] *= mass;
        }
    }
    power_iteration(&mat, POWER_RTOL, POWER_MAX_ITER)
}

// ─── Verdict ─────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Extinct,
    Persistent,
}

#[derive(Clone, Copy, Debug)]
pub struct PersistenceOptions {
    pub grid_nodes: usize,
    pub truncation: usize,
    pub mc: McSettings,
}

impl Default for PersistenceOptions {
    fn default() -> Self {
        Self { grid_nodes: 500, truncation: DEFAULT_TRUNCATION, mc: McSettings::default() }
    }
}

/// Persistence verdict and its ingredients.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PersistenceReport {
    /// The displayed series (sum from m = 1); this is what the dichotomy
    /// theorem uses.
    pub r_s: f64,
    /// The index-shifted constant-area restatement (adds the m = 0 term);
    /// reported alongside, never silently substituted.
    pub r_s_with_m0: f64,
    pub r_m: f64,
    pub product: f64,
    pub verdict: Verdict,
    pub truncation: usize,
    /// Geometric bound on the discarded series tail (finite chains).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
    /// Monte Carlo error of r_S (sampled chains).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_s_stderr: Option<f64>,
}

/// Check Assumptions (G), (H), (I), (J) and evaluate the persistence
/// criterion `r_S · r(M)`.
pub fn persistence_verdict(
    landscape: &Landscape,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    domain: &SpatialDomain,
    opts: &PersistenceOptions,
) -> Result<PersistenceReport> {
    // (G) phase structure and (H) concavity come from the catalogue entry.
    if !traits.is_phase() {
        return Err(Error::AssumptionViolated {
            name: 'G',
            detail: "colonisation does not factor as s(θ)·f̄(x;θ)".into(),
        });
    }
    if !traits.is_concave() {
        return Err(Error::AssumptionViolated {
            name: 'H',
            detail: "phase factor is not concave".into(),
        });
    }
    // (I) sup s < 1 over the support (stationary reference for sampled chains).
    let sup_s = match landscape {
        Landscape::Finite(chain) => (0..chain.len())
            .map(|j| traits.survival_at(Theta::State(j)))
            .fold(0.0f64, f64::max),
        Landscape::Sampled(chain) => {
            let reference = chain.stationary_reference();
            reference
                .samples()
                .iter()
                .map(|&x| traits.survival_at(Theta::Level(x)))
                .fold(0.0f64, f64::max)
        }
    };
    if sup_s >= 1.0 {
        return Err(Error::AssumptionViolated {
            name: 'I',
            detail: format!("sup survival = {sup_s} on the support"),
        });
    }
    // (J): some state with stationary mass, positive weight and a dual
    // transition out of the uncolonisable set. Checked exactly for finite
    // chains; sampled chains only need a non-degenerate weight map.
    match landscape {
        Landscape::Finite(chain) => {
            let dual = chain.dual()?.into_matrix();
            let m = chain.len();
            let uncolonisable: Vec<bool> = (0..m)
                .map(|j| {
                    let th = Theta::State(j);
                    traits.survival_at(th) == 0.0
                        || traits.colonisation_at(1.0, th) == 0.0
                })
                .collect();
            let ok = (0..m).any(|j| {
                let mass_out: f64 = (0..m)
                    .filter(|&k| !uncolonisable[k])
                    .map(|k| dual[(j, k)])
                    .sum();
                chain.stationary()[j] > 0.0
                    && traits.weight_at(Theta::State(j)) > 0.0
                    && mass_out > 0.0
            });
            if !ok {
                return Err(Error::AssumptionViolated {
                    name: 'J',
                    detail: "no state with positive weight and dual escape from the uncolonisable set".into(),
                });
            }
        }
        Landscape::Sampled(_) => {
            if traits.weight.as_constant() == Some(0.0) {
                return Err(Error::AssumptionViolated {
                    name: 'J',
                    detail: "weight map is identically zero".into(),
                });
            }
        }
    }

    let grid = domain.build_grid(opts.grid_nodes)?;
    let r_m = spectral_radius_m(kernel, &grid)?;
    let rs_opts = RsOptions { truncation: opts.truncation, include_m0: false, mc: opts.mc };
    let rs = r_s(landscape, traits, &rs_opts)?;
    let rs_m0 = r_s(
        landscape,
        traits,
        &RsOptions { include_m0: true, ..rs_opts },
    )?;
    let product = rs.value * r_m;
    Ok(PersistenceReport {
        r_s: rs.value,
        r_s_with_m0: rs_m0.value,
        r_m,
        product,
        verdict: if product > 1.0 { Verdict::Persistent } else { Verdict::Extinct },
        truncation: opts.truncation,
        tail_bound: rs.tail_bound.is_finite().then_some(rs.tail_bound),
        r_s_stderr: rs.se,
    })
}

// ─── Lifespan ────────────────────────────────────────────────────────────

/// `P(lifespan ≥ m) = E[Π_{n=0}^{m−1} s(θ_n)]`; `tail(0) = 1`.
pub fn lifespan_tail(
    landscape: &Landscape,
    traits: &PatchTraits,
    m: usize,
    mc: &McSettings,
) -> McValue {
    if m == 0 {
        return McValue { value: 1.0, se: None };
    }
    match landscape {
        Landscape::Finite(chain) => {
            McValue { value: lifespan_tails_finite(chain, traits, m)[m], se: None }
        }
        Landscape::Sampled(chain) => {
            let (tails, ses) = lifespan_tails_sampled(chain, traits, m, mc);
            McValue { value: tails[m], se: Some(ses[m]) }
        }
    }
}

/// Exact tails for m = 0..=m_max via `v_1 = π ⊙ s`, `v_{k+1} = (v_k P) ⊙ s`.
pub fn lifespan_tails_finite(chain: &FiniteChain, traits: &PatchTraits, m_max: usize) -> Vec<f64> {
    let m = chain.len();
    let s = DVector::from_fn(m, |j, _| traits.survival_at(Theta::State(j)));
    let p = chain.transition();
    let mut tails = Vec::with_capacity(m_max + 1);
    tails.push(1.0);
    let mut v = chain.stationary().component_mul(&s);
    for _ in 1..=m_max {
        tails.push(v.sum());
        v = (v.transpose() * p).transpose().component_mul(&s);
    }
    tails
}

/// Monte Carlo tails (and standard errors) for m = 0..=m_max.
pub fn lifespan_tails_sampled(
    chain: &SampledChain,
    traits: &PatchTraits,
    m_max: usize,
    mc: &McSettings,
) -> (Vec<f64>, Vec<f64>) {
    let paths = mc.paths.max(1);
    let mut sums = vec![0.0f64; m_max + 1];
    let mut sqs = vec![0.0f64; m_max + 1];
    for path in 0..paths {
        let mut rng = stream_rng(mc.seed, &[streams::MOMENTS, path as u64]);
        let mut th = chain.sample_stationary(&mut rng);
        let mut prod = 1.0;
        sums[0] += 1.0;
        sqs[0] += 1.0;
        for m in 1..=m_max {
            prod *= traits.survival_at(Theta::Level(th));
            th = chain.step_level(th, &mut rng);
            sums[m] += prod;
            sqs[m] += prod * prod;
        }
    }
    let n = paths as f64;
    let means: Vec<f64> = sums.iter().map(|v| v / n).collect();
    let ses: Vec<f64> = sqs
        .iter()
        .zip(&means)
        .map(|(&q, &mean)| {
            if paths > 1 {
                (((q / n - mean * mean).max(0.0)) / (n - 1.0)).sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();
    (means, ses)
}

#[derive(Clone, Copy, Debug)]
pub struct LifespanReport {
    /// `Σ_{m≥0} P(lifespan ≥ m)`, truncated.
    pub expected: f64,
    pub se: Option<f64>,
    pub truncation: usize,
    /// Bound on the discarded tail, `(sup s)^{M+1}/(1 − sup s)`.
    pub truncation_bound: f64,
}

/// Expected lifespan of a local population.
pub fn expected_lifespan(
    landscape: &Landscape,
    traits: &PatchTraits,
    truncation: usize,
    mc: &McSettings,
) -> LifespanReport {
    let (expected, se, sup_s) = match landscape {
        Landscape::Finite(chain) => {
            let tails = lifespan_tails_finite(chain, traits, truncation);
            let sup_s = (0..chain.len())
                .map(|j| traits.survival_at(Theta::State(j)))
                .fold(0.0f64, f64::max);
            (tails.iter().sum::<f64>(), None, sup_s)
        }
        Landscape::Sampled(chain) => {
            let (tails, ses) = lifespan_tails_sampled(chain, traits, truncation, mc);
            // Path totals share draws across m; sum the per-m errors as a
            // conservative envelope.
            let se = ses.iter().skip(1).sum::<f64>();
            let sup_s = chain
                .stationary_reference()
                .samples()
                .iter()
                .map(|&x| traits.survival_at(Theta::Level(x)))
                .fold(0.0f64, f64::max);
            (tails.iter().sum::<f64>(), Some(se), sup_s)
        }
    };
    let truncation_bound = if sup_s < 1.0 {
        sup_s.powi(truncation as i32 + 1) / (1.0 - sup_s)
    } else {
        f64::INFINITY
    };
    LifespanReport { expected, se, truncation, truncation_bound }
}

// ─── Static bound (Hölder) ───────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct StaticBoundRow {
    pub m: usize,
    /// `E[Π_{n=0}^m s(θ_n)]`
    pub product_moment: f64,
    /// `E[s(θ_0)^{m+1}]`
    pub power_moment: f64,
    pub product_se: Option<f64>,
    pub power_se: Option<f64>,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct StaticBoundReport {
    pub rows: Vec<StaticBoundRow>,
    pub all_hold: bool,
}

/// Verify `E[Π_{n=0}^m s(θ_n)] ≤ E[s(θ_0)^{m+1}]` for m = 0..=m_max
/// (exact for finite chains, 3-SE slack for sampled chains).
pub fn static_bound_check(
    landscape: &Landscape,
    traits: &PatchTraits,
    m_max: usize,
    mc: &McSettings,
) -> StaticBoundReport {
    let rows = match landscape {
        Landscape::Finite(chain) => {
            let tails = lifespan_tails_finite(chain, traits, m_max + 1);
            let pi = chain.stationary();
            (0..=m_max)
                .map(|m| {
                    let lhs = tails[m + 1];
                    let rhs: f64 = (0..chain.len())
                        .map(|j| pi[j] * traits.survival_at(Theta::State(j)).powi(m as i32 + 1))
                        .sum();
                    StaticBoundRow {
                        m,
                        product_moment: lhs,
                        power_moment: rhs,
                        product_se: None,
                        power_se: None,
                        holds: lhs <= rhs + 1e-12,
                    }
                })
                .collect::<Vec<_>>()
        }
        Landscape::Sampled(chain) => {
            let paths = mc.paths.max(2);
            let mut lhs_sum = vec![0.0f64; m_max + 1];
            let mut lhs_sq = vec![0.0f64; m_max + 1];
            let mut rhs_sum = vec![0.0f64; m_max + 1];
            let mut rhs_sq = vec![0.0f64; m_max + 1];
            for path in 0..paths {
                let mut rng = stream_rng(mc.seed, &[streams::MOMENTS, path as u64]);
                let mut th = chain.sample_stationary(&mut rng);
                let s0 = traits.survival_at(Theta::Level(th));
                let mut prod = 1.0;
                let mut s0_pow = 1.0;
                for m in 0..=m_max {
                    prod *= traits.survival_at(Theta::Level(th));
                    th = chain.step_level(th, &mut rng);
                    s0_pow *= s0;
                    lhs_sum[m] += prod;
                    lhs_sq[m] += prod * prod;
                    rhs_sum[m] += s0_pow;
                    rhs_sq[m] += s0_pow * s0_pow;
                }
            }
            let n = paths as f64;
            (0..=m_max)
                .map(|m| {
                    let lhs = lhs_sum[m] / n;
                    let rhs = rhs_sum[m] / n;
                    let lse = (((lhs_sq[m] / n - lhs * lhs).max(0.0)) / (n - 1.0)).sqrt();
                    let rse = (((rhs_sq[m] / n - rhs * rhs).max(0.0)) / (n - 1.0)).sqrt();
                    StaticBoundRow {
                        m,
                        product_moment: lhs,
                        power_moment: rhs,
                        product_se: Some(lse),
                        power_se: Some(rse),
                        holds: lhs <= rhs + 3.0 * (lse + rse),
                    }
                })
                .collect::<Vec<_>>()
        }
    };
    let all_hold = rows.iter().all(|r| r.holds);
    StaticBoundReport { rows, all_hold }
}

// ─── Stochastic-ordering comparison ──────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    Equal,
    FirstDominates,
    SecondDominates,
    Incomparable,
}

#[derive(Clone, Debug)]
pub struct CompareOptions {
    pub m_max: usize,
    /// Slack allowed when asserting the equilibrium ordering.
    pub ordering_tol: f64,
    pub eq: EquilibriumOptions,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { m_max: 50, ordering_tol: 1e-8, eq: EquilibriumOptions::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub seq1: Vec<f64>,
    pub seq2: Vec<f64>,
    pub dominance: Dominance,
    /// Equilibrium `Σ_j a(j) q*(j,z) π_j` per node, when computed.
    pub weighted1: Option<Vec<f64>>,
    pub weighted2: Option<Vec<f64>>,
    /// Whether the dominance-predicted ordering holds at every node.
    pub ordering_holds: Option<bool>,
    pub max_violation: Option<f64>,
}

impl ComparisonReport {
    /// CSV rendering of the termwise comparison:
    /// `m, seq1, seq2, dominance` with a per-row flag (`1` where the
    /// first sequence is at least the second, `-1` the reverse, `0` tied).
    pub fn csv(&self) -> String {
        let mut out = String::from("m,seq1,seq2,dominance\n");
        for (idx, (a, b)) in self.seq1.iter().zip(&self.seq2).enumerate() {
            let flag = if (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0) {
                0
            } else if a > b {
                1
            } else {
                -1
            };
            out.push_str(&format!("{},{},{},{}\n", idx + 1, a, b, flag));
        }
        out
    }
}

/// Compare two landscape dynamics sharing the same traits: termwise
/// moment-sequence dominance, then the predicted equilibrium ordering.
/// Incomparable sequences are reported without asserting any ordering.
pub fn compare_landscapes(
    first: &Landscape,
    second: &Landscape,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    grid: &Grid,
    opts: &CompareOptions,
) -> Result<ComparisonReport> {
    let est1 = moment_sequence(first, traits, opts.m_max, &opts.eq.mc)?;
    let est2 = moment_sequence(second, traits, opts.m_max, &opts.eq.mc)?;
    let seq1 = est1.weighted.clone();
    let seq2 = est2.weighted.clone();

    let scale = seq1
        .iter()
        .chain(&seq2)
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let term_tol = |m: usize| -> f64 {
        let se1 = est1.weighted_se.as_ref().map_or(0.0, |s| s[m]);
        let se2 = est2.weighted_se.as_ref().map_or(0.0, |s| s[m]);
        1e-12 * scale.max(1.0) + 3.0 * (se1 + se2)
    };
    let mut first_ge = true;
    let mut second_ge = true;
    let mut strictly_differs = false;
    for m in 0..opts.m_max {
        let tol = term_tol(m);
        if seq2[m] > seq1[m] + tol {
            first_ge = false;
        }
        if seq1[m] > seq2[m] + tol {
            second_ge = false;
        }
        if (seq1[m] - seq2[m]).abs() > tol {
            strictly_differs = true;
        }
    }
    let dominance = match (first_ge, second_ge, strictly_differs) {
        (true, true, _) => Dominance::Equal,
        (true, false, _) => Dominance::FirstDominates,
        (false, true, _) => Dominance::SecondDominates,
        (false, false, _) => Dominance::Incomparable,
    };

    if dominance == Dominance::Incomparable {
        return Ok(ComparisonReport {
            seq1,
            seq2,
            dominance,
            weighted1: None,
            weighted2: None,
            ordering_holds: None,
            max_violation: None,
        });
    }

    let eq1 = equilibrium(first, traits, kernel, grid, &opts.eq)?;
    let eq2 = equilibrium(second, traits, kernel, grid, &opts.eq)?;
    let (hi, lo): (&[f64], &[f64]) = match dominance {
        Dominance::SecondDominates => (&eq2.weighted_occupancy, &eq1.weighted_occupancy),
        _ => (&eq1.weighted_occupancy, &eq2.weighted_occupancy),
    };
    let mut max_violation = 0.0f64;
    for (h, l) in hi.iter().zip(lo) {
        max_violation = max_violation.max(l - h);
    }
    let ordering_holds = match dominance {
        Dominance::Equal => {
            let dev = eq1
                .weighted_occupancy
                .iter()
                .zip(&eq2.weighted_occupancy)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            max_violation = dev;
            dev <= opts.ordering_tol
        }
        _ => max_violation <= opts.ordering_tol,
    };
    Ok(ComparisonReport {
        seq1,
        seq2,
        dominance,
        weighted1: Some(eq1.weighted_occupancy),
        weighted2: Some(eq2.weighted_occupancy),
        ordering_holds: Some(ordering_holds),
        max_violation: Some(max_violation),
    })
}
