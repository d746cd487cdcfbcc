//! Exact finite-n simulation of the metapopulation.
//!
//! Conditional on the current occupancy and characteristics, patch `i`
//! is occupied at `t + 1` with probability
//! `s(θ_i)·X_i + f(conn_i; θ_i)·(1 − X_i)` where the connectivity is
//! `conn_i = n⁻¹ Σ_j X_j · D(z_i, z_j) · a(θ_j)` (the self term `j = i`
//! is included; its weight is O(1/n)). Characteristics then move one step
//! of the landscape chain, independently across patches.
//!
//! Randomness is drawn from per-patch, per-step ChaCha streams keyed by
//! `(seed, substream, t, i)`, so concurrent and serial execution produce
//! bit-identical trajectories.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::landscape::{Landscape, Theta};
use crate::patch::{DispersalKernel, PatchTraits, SpatialDomain};
use crate::rng::{stream_rng, streams};

/// Full state of a finite metapopulation at one time index.
#[derive(Clone, Debug)]
pub struct MetapopState {
    pub t: u64,
    /// Occupancy indicators X_i.
    pub occupied: Vec<bool>,
    /// Patch characteristics θ_i.
    pub theta: Vec<Theta>,
    /// Static patch locations z_i.
    pub locations: Vec<Vec<f64>>,
}

impl MetapopState {
    pub fn n(&self) -> usize {
        self.occupied.len()
    }

    /// Fraction of occupied patches.
    pub fn occupancy_fraction(&self) -> f64 {
        self.occupied.iter().filter(|&&x| x).count() as f64 / self.n() as f64
    }
}

/// Draw an initial state: locations i.i.d. from the domain density,
/// characteristics i.i.d. from the stationary law, occupancy Bernoulli
/// with success probability `q0(θ, z)`.
pub fn init_metapop(
    n: usize,
    domain: &SpatialDomain,
    landscape: &Landscape,
    q0: impl Fn(Theta, &[f64]) -> f64,
    seed: u64,
) -> Result<MetapopState> {
    if n == 0 {
        return Err(Error::Invalid("metapopulation needs at least one patch".into()));
    }
    let mut locations = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut occupied = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng_z = stream_rng(seed, &[streams::LOCATION, i as u64]);
        let z = domain.sample(&mut rng_z);
        let mut rng_theta = stream_rng(seed, &[streams::THETA_INIT, i as u64]);
        let th = landscape.sample_stationary(&mut rng_theta);
        let mut rng_x = stream_rng(seed, &[streams::OCCUPANCY_INIT, i as u64]);
        use rand::Rng;
        let u: f64 = rng_x.random();
        occupied.push(u < q0(th, &z));
        theta.push(th);
        locations.push(z);
    }
    Ok(MetapopState { t: 0, occupied, theta, locations })
}

/// Connectivity felt at patch `i`: `n⁻¹ Σ_j X_j · D(z_i, z_j) · a(θ_j)`,
/// the sum running over all patches including `j = i`.
pub fn connectivity(
    state: &MetapopState,
    i: usize,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
) -> f64 {
    let n = state.n() as f64;
    let zi = &state.locations[i];
    let mut acc = 0.0;
    for j in 0..state.n() {
        if state.occupied[j] {
            let dn = kernel.eval(zi, &state.locations[j]) / n;
            acc += dn * traits.weight_at(state.theta[j]);
        }
    }
    acc
}

fn occupancy_update(
    state: &MetapopState,
    i: usize,
    conn: f64,
    traits: &PatchTraits,
    seed: u64,
) -> bool {
    let theta = state.theta[i];
    let p = if state.occupied[i] {
        traits.survival_at(theta)
    } else {
        traits.colonisation_at(conn, theta)
    };
    let mut rng = stream_rng(seed, &[streams::OCCUPANCY_STEP, state.t, i as u64]);
    use rand::Rng;
    let u: f64 = rng.random();
    u < p
}

fn theta_update(state: &MetapopState, i: usize, landscape: &Landscape, seed: u64) -> Theta {
    let mut rng = stream_rng(seed, &[streams::THETA_STEP, state.t, i as u64]);
    landscape.step_theta(state.theta[i], &mut rng)
}

/// One transition of the metapopulation. Occupancies update first,
/// conditionally on the current characteristics; characteristics then
/// take one chain step. Patch updates are independent and run in
/// parallel.
pub fn step(
    state: &MetapopState,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    landscape: &Landscape,
    seed: u64,
) -> MetapopState {
    let n = state.n();
    let next: Vec<(bool, Theta)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let conn = if state.occupied[i] {
                0.0 // survival branch; connectivity unused
            } else {
                connectivity(state, i, traits, kernel)
            };
            (
                occupancy_update(state, i, conn, traits, seed),
                theta_update(state, i, landscape, seed),
            )
        })
        .collect();
    MetapopState {
        t: state.t + 1,
        occupied: next.iter().map(|&(x, _)| x).collect(),
        theta: next.iter().map(|&(_, th)| th).collect(),
        locations: state.locations.clone(),
    }
}

/// Per-patch occupancy statistics for a run.
#[derive(Clone, Debug)]
pub struct OccupancySummary {
    /// Time-average occupancy of each patch over the recorded steps.
    pub proportions: Vec<f64>,
    /// Batch-means standard error of each proportion.
    pub stderr: Vec<f64>,
    pub locations: Vec<Vec<f64>>,
    /// Number of occupied patches at each recorded step.
    pub step_counts: Vec<u32>,
    pub recorded_steps: usize,
    pub burn_in: usize,
}

/// Number of batches used by the batch-means standard error.
pub const BATCH_COUNT: usize = 100;

/// Run the chain for `burn_in + t_steps` transitions and average occupancy
/// over the last `t_steps` of them (states at t = burn_in+1 .. burn_in+t_steps).
///
/// This is the fast path: the scaled kernel matrix `D(z_i, z_j)/n` is
/// prebuilt once. It consumes exactly the same random streams as repeated
/// [`step`] calls, so trajectories agree bit for bit.
pub fn run_occupancy(
    state: &MetapopState,
    t_steps: usize,
    burn_in: usize,
    traits: &PatchTraits,
    kernel: &DispersalKernel,
    landscape: &Landscape,
    seed: u64,
) -> Result<OccupancySummary> {
    if t_steps == 0 {
        return Err(Error::Invalid("run needs at least one recorded step".into()));
    }
    let n = state.n();
    let nf = n as f64;
    // D(z_i, z_j) / n, row-major.
    let mut dn = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            dn[i * n + j] = kernel.eval(&state.locations[i], &state.locations[j]) / nf;
        }
    }

    let mut occupied = state.occupied.clone();
    let mut theta = state.theta.clone();

    let batches = BATCH_COUNT.min(t_steps);
    let batch_size = t_steps / batches;
    let counted = batches * batch_size;
    let mut batch_sums = vec![0.0f64; batches * n];
    let mut totals = vec![0.0f64; n];
    let mut step_counts = Vec::with_capacity(t_steps);

    let mut weights = vec![0.0f64; n];

    for rec in 0..burn_in + t_steps {
        let t = state.t + rec as u64;
        for ((w, &occ), &th) in weights.iter_mut().zip(&occupied).zip(&theta) {
            *w = if occ { traits.weight_at(th) } else { 0.0 };
        }
        let dn_ref = &dn;
        let weights_ref = &weights;
        let theta_ref = &theta;
        let occupied_ref = &occupied;
        let next_occupied: Vec<bool> = (0..n)
            .into_par_iter()
            .map(|i| {
                let p = if occupied_ref[i] {
                    traits.survival_at(theta_ref[i])
                } else {
                    let row = &dn_ref[i * n..(i + 1) * n];
                    let mut conn = 0.0;
                    for j in 0..n {
                        if occupied_ref[j] {
                            conn += row[j] * weights_ref[j];
                        }
                    }
                    traits.colonisation_at(conn, theta_ref[i])
                };
                let mut rng = stream_rng(seed, &[streams::OCCUPANCY_STEP, t, i as u64]);
                use rand::Rng;
                let u: f64 = rng.random();
                u < p
            })
            .collect();
        let next_theta: Vec<Theta> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, &[streams::THETA_STEP, t, i as u64]);
                landscape.step_theta(theta_ref[i], &mut rng)
            })
            .collect();
        occupied = next_occupied;
        theta = next_theta;

        if rec >= burn_in {
            let k = rec - burn_in;
            let mut count = 0u32;
            for i in 0..n {
                if occupied[i] {
                    totals[i] += 1.0;
                    count += 1;
                    if k < counted {
                        batch_sums[(k / batch_size) * n + i] += 1.0;
                    }
                }
            }
            step_counts.push(count);
        }
    }

    let steps_f = t_steps as f64;
    let proportions: Vec<f64> = totals.iter().map(|&s| s / steps_f).collect();
    let bs = batch_size as f64;
    let bf = batches as f64;
    let stderr: Vec<f64> = (0..n)
        .map(|i| {
            if batches < 2 {
                return f64::NAN;
            }
            let means: Vec<f64> = (0..batches).map(|b| batch_sums[b * n + i] / bs).collect();
            let grand = means.iter().sum::<f64>() / bf;
            let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (bf - 1.0);
            (var / bf).sqrt()
        })
        .collect();

    Ok(OccupancySummary {
        proportions,
        stderr,
        locations: state.locations.clone(),
        step_counts,
        recorded_steps: t_steps,
        burn_in,
    })
}

/// `n⁻¹ Σ_i X_i · h(θ_i, z_i)`, the occupied-patch empirical functional.
pub fn empirical_functional(state: &MetapopState, h: impl Fn(Theta, &[f64]) -> f64) -> f64 {
    let n = state.n() as f64;
    state
        .occupied
        .iter()
        .zip(&state.theta)
        .zip(&state.locations)
        .filter(|((&x, _), _)| x)
        .map(|((_, &th), z)| h(th, z))
        .sum::<f64>()
        / n
}
