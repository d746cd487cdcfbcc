//! `metapopsim persistence`: the threshold report alone.

use anyhow::Result;

use metapop_core::persistence::{persistence_verdict, PersistenceOptions};

use super::RunContext;
use crate::output::{write_json, write_manifest};

pub fn cmd_persistence(ctx: &RunContext) -> Result<()> {
    let config = &ctx.config;
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
    write_json(&ctx.path("persistence.json"), &report)?;
    write_manifest(ctx.out_dir(), "persistence", config, &["persistence.json"])?;
    println!(
        "persistence: r_S = {:.6}, r(M) = {:.6}, product = {:.6} -> {:?}",
        report.r_s, report.r_m, report.product, report.verdict
    );
    Ok(())
}
