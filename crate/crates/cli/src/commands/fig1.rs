//! `metapopsim fig1`: two survival-process sample paths (heavy drops with
//! uniform recovery; uniform drops with slow recovery), CSV plus one SVG
//! per panel.

use anyhow::Result;

use metapop_core::landscape::{BetaJumpParams, SampledChain};

use super::{derived_seed, RunContext};
use crate::output::{write_columns_csv, write_manifest, write_text};
use crate::svg::Plot;

fn panel_label(params: &BetaJumpParams) -> String {
    format!(
        "L~Beta({},{}), R~Beta({},{})",
        params.a_l, params.b_l, params.a_r, params.b_r
    )
}

pub fn cmd_fig1(ctx: &RunContext) -> Result<()> {
    let config = &ctx.config;
    let left_params = config.fig1_left.unwrap_or_else(BetaJumpParams::heavy_drops);
    let right_params = config.fig1_right.unwrap_or_else(BetaJumpParams::slow_recovery);
    let steps = config.fig1_steps;

    let left_chain = SampledChain::beta_jump(left_params)?;
    let right_chain = SampledChain::beta_jump(right_params)?;
    let left = left_chain.sample_path(0.5, steps, derived_seed(config.seed, "fig1-left"));
    let right = right_chain.sample_path(0.5, steps, derived_seed(config.seed, "fig1-right"));

    let t_axis: Vec<f64> = (0..=steps).map(|t| t as f64).collect();
    write_columns_csv(
        &ctx.path("fig1.csv"),
        &["t", "s_left", "s_right"],
        &[&t_axis, &left, &right],
    )?;

    for (name, params, path) in [
        ("fig1_left.svg", &left_params, &left),
        ("fig1_right.svg", &right_params, &right),
    ] {
        let points: Vec<(f64, f64)> =
            t_axis.iter().copied().zip(path.iter().copied()).collect();
        let svg = Plot::new(&panel_label(params), "t", "survival probability")
            .line("", "black", points)
            .render();
        write_text(&ctx.path(name), &svg)?;
    }
    write_manifest(
        ctx.out_dir(),
        "fig1",
        config,
        &["fig1.csv", "fig1_left.svg", "fig1_right.svg"],
    )?;
    println!("fig1: {} steps per panel -> {}", steps, ctx.out_dir().display());
    Ok(())
}
