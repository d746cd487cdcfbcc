//! `metapopsim equilibrium`: mean-field fixed point and limiting
//! occupancy profile, plus the persistence report.

use anyhow::Result;
use serde::Serialize;

use metapop_core::meanfield::{equilibrium, EquilibriumOptions};
use metapop_core::persistence::{persistence_verdict, PersistenceOptions};

use super::RunContext;
use crate::output::{write_columns_csv, write_json, write_manifest};

#[derive(Serialize)]
struct EquilibriumJson<'a> {
    phi_star: &'a [f64],
    occupancy: &'a [f64],
    iterations: usize,
    residual: f64,
    extinct: bool,
    tail_bound: f64,
}

pub fn cmd_equilibrium(ctx: &RunContext) -> Result<()> {
    let config = &ctx.config;
    let grid = config.domain.build_grid(config.grid_nodes)?;
    let opts = EquilibriumOptions {
        truncation: config.series_truncation,
        allow_tail: config.allow_truncation_tail,
        mc: config.mc_settings(),
        ..Default::default()
    };
    let eq = equilibrium(&config.landscape, &config.traits, &config.kernel, &grid, &opts)?;

    let report = persistence_verdict(
        &config.landscape,
        &config.traits,
        &config.kernel,
        &config.domain,
        &PersistenceOptions {
            grid_nodes: config.grid_nodes,
            truncation: config.series_truncation,
            mc: config.mc_settings(),
        },
    )?;

    write_json(
        &ctx.path("equilibrium.json"),
        &EquilibriumJson {
            phi_star: &eq.phi_star,
            occupancy: &eq.occupancy,
            iterations: eq.iterations,
            residual: eq.residual,
            extinct: eq.extinct,
            tail_bound: eq.tail_bound,
        },
    )?;
    write_json(&ctx.path("persistence.json"), &report)?;
    write_columns_csv(
        &ctx.path("occupancy.csv"),
        &["z", "occupancy", "phi"],
        &[&grid.nodes, &eq.occupancy, &eq.phi_star],
    )?;

    // Full θ-resolved fixed-point field.
    let mut writer = csv::Writer::from_path(ctx.path("q_star.csv"))?;
    writer.write_record(["theta_index", "z", "q"])?;
    for j in 0..eq.q_star.support_len() {
        for (l, &z) in grid.nodes.iter().enumerate() {
            writer.write_record([
                j.to_string(),
                z.to_string(),
                eq.q_star.q[(j, l)].to_string(),
            ])?;
        }
    }
    writer.flush()?;

    write_manifest(
        ctx.out_dir(),
        "equilibrium",
        config,
        &["equilibrium.json", "persistence.json", "occupancy.csv", "q_star.csv"],
    )?;
    println!(
        "equilibrium: {} in {} iterations (residual {:.2e}), r_S·r(M) = {:.4} -> {}",
        if eq.extinct { "extinct" } else { "persistent profile" },
        eq.iterations,
        eq.residual,
        report.product,
        ctx.out_dir().display()
    );
    Ok(())
}
