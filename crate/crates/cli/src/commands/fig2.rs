//! `metapopsim fig2`: simulated per-patch occupancy proportions for each
//! patch count overlaid on the limiting mean-field occupancy curve.

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use metapop_core::meanfield::{equilibrium, Equilibrium, EquilibriumOptions};
use metapop_core::sim::{init_metapop, run_occupancy, OccupancySummary};

use super::{derived_seed, RunContext};
use crate::output::{write_columns_csv, write_json, write_manifest, write_patch_csv, write_text};
use crate::svg::{Marker, Plot};

/// Steps used when the full paper-scale run is requested.
const FULL_STEPS: usize = 100_000;

#[derive(Serialize)]
struct SeriesStats {
    n_patches: usize,
    t_steps: usize,
    median_abs_gap: f64,
    mean_limit_minus_sim: f64,
    max_stderr: f64,
}

#[derive(Serialize)]
struct Fig2Stats {
    t_steps: usize,
    full_scale: bool,
    series: Vec<SeriesStats>,
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

pub fn cmd_fig2(ctx: &RunContext, full: bool) -> Result<()> {
    let config = &ctx.config;
    let full_scale = full || config.full_steps;
    let t_steps = if full_scale { FULL_STEPS.max(config.t_steps) } else { config.t_steps };

    let grid = config.domain.build_grid(config.grid_nodes)?;
    let opts = EquilibriumOptions {
        truncation: config.series_truncation,
        allow_tail: config.allow_truncation_tail,
        mc: config.mc_settings(),
        ..Default::default()
    };
    let eq: Equilibrium =
        equilibrium(&config.landscape, &config.traits, &config.kernel, &grid, &opts)?;

    let summaries: Vec<(usize, OccupancySummary)> = config
        .fig2_patch_counts
        .par_iter()
        .map(|&n| -> Result<(usize, OccupancySummary)> {
            let seed = derived_seed(config.seed, &format!("fig2-n{n}"));
            let q0 = config.q0_constant;
            let state = init_metapop(n, &config.domain, &config.landscape, |_, _| q0, seed)?;
            let summary = run_occupancy(
                &state,
                t_steps,
                config.burn_in,
                &config.traits,
                &config.kernel,
                &config.landscape,
                seed,
            )?;
            Ok((n, summary))
        })
        .collect::<Result<Vec<_>>>()?;

    write_columns_csv(&ctx.path("limit.csv"), &["z", "occupancy"], &[&grid.nodes, &eq.occupancy])?;

    let mut outputs = vec!["limit.csv".to_string(), "fig2.svg".to_string(), "fig2_stats.json".to_string()];
    let mut stats = Vec::new();
    let mut plot = Plot::new("patch occupancy: simulation vs mean-field limit", "z", "occupancy")
        .line(
            "limiting occupancy",
            "black",
            grid.nodes.iter().copied().zip(eq.occupancy.iter().copied()).collect(),
        );
    let palette = ["steelblue", "firebrick", "darkgreen", "darkorange"];
    let markers = [Marker::Circle, Marker::Triangle, Marker::Circle, Marker::Triangle];

    for (idx, (n, summary)) in summaries.iter().enumerate() {
        let name = format!("sim_n{n}.csv");
        write_patch_csv(
            &ctx.path(&name),
            &summary.locations,
            &summary.proportions,
            &summary.stderr,
        )?;
        outputs.push(name);

        let gaps: Vec<f64> = summary
            .locations
            .iter()
            .zip(&summary.proportions)
            .map(|(z, &p)| {
                let limit = eq.occupancy_at(z[0]).unwrap_or(f64::NAN);
                (p - limit).abs()
            })
            .collect();
        let tendency = summary
            .locations
            .iter()
            .zip(&summary.proportions)
            .map(|(z, &p)| eq.occupancy_at(z[0]).unwrap_or(f64::NAN) - p)
            .sum::<f64>()
            / *n as f64;
        stats.push(SeriesStats {
            n_patches: *n,
            t_steps,
            median_abs_gap: median(gaps),
            mean_limit_minus_sim: tendency,
            max_stderr: summary.stderr.iter().cloned().fold(0.0, f64::max),
        });

        plot = plot.scatter(
            &format!("simulated, n={n}"),
            palette[idx % palette.len()],
            markers[idx % markers.len()],
            summary
                .locations
                .iter()
                .zip(&summary.proportions)
                .map(|(z, &p)| (z[0], p))
                .collect(),
        );
    }

    write_text(&ctx.path("fig2.svg"), &plot.render())?;
    let stats = Fig2Stats { t_steps, full_scale, series: stats };
    write_json(&ctx.path("fig2_stats.json"), &stats)?;
    let output_refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_manifest(ctx.out_dir(), "fig2", config, &output_refs)?;

    for series in &stats.series {
        println!(
            "fig2: n={} median |sim − limit| = {:.5}, mean(limit − sim) = {:+.5}, max SE {:.5}",
            series.n_patches, series.median_abs_gap, series.mean_limit_minus_sim, series.max_stderr
        );
    }
    // The over-estimation tendency of the limit is asserted only at the
    // full 10^5-step scale; at desk scale it is reported.
    if full_scale {
        for series in &stats.series {
            if series.mean_limit_minus_sim < 0.0 {
                bail!(
                    "over-estimation tendency violated at n={}: mean(limit − sim) = {}",
                    series.n_patches,
                    series.mean_limit_minus_sim
                );
            }
        }
    }
    Ok(())
}
