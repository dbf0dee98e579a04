//! Plot data for visual diagnostics, written as CSV tables.
//!
//! | file | rows | columns |
//! |---|---|---|
//! | `forcing_vs_state.csv` | K | time, x̂, ĝ, case-2 ĥ |
//! | `derivative_fit.csv` | K | time, dx̂/dt, f(x̂; θ̂, ĝ) |
//! | `h0_surface.csv` | grid | state grid, ĥ₀ (one or two state coordinates) |
//! | `h1_predictions.csv` | K − lag | time, x̂, lagged ĝ, ĝ, ĥ₀, ĥ₁ |
//! | `timeseries.csv` | K | time, data, x̂, model solution with ĝ |
//!
//! K is the number of time points left after trimming half a block at
//! each end.

use std::path::Path;

use lackfit_core::diagnose::{fit_case2, fit_case3, PipelineFit, ResolvedTestConfig};
use lackfit_core::dynsys::{integrate, DynamicalSystem, TimeSeries};
use nalgebra::DMatrix;

use crate::csvio::{numbered, write_table};
use crate::error::AppError;
use crate::run::{pipeline_for, RunReport};

/// Grid points per axis for the `ĥ₀` surface.
const SURFACE_POINTS: usize = 41;

/// Row counts of the written tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlotSummary {
    pub trimmed_points: usize,
    pub lagged_points: usize,
    pub surface_points: usize,
}

fn header(parts: &[Vec<String>]) -> Vec<String> {
    parts.concat()
}

fn one(s: &str) -> Vec<String> {
    vec![s.to_string()]
}

/// Model rate with the fitted forcing, and `dx̂/dt`, at `times`.
fn derivative_rows(fit: &PipelineFit, system: &DynamicalSystem, times: &[f64]) -> Vec<Vec<f64>> {
    let theta = &fit.gradient.theta;
    fit.with_curve(|c| {
        let d = c.dim();
        let (mut x, mut dx, mut f) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let mut g = vec![0.0; fit.forcing.g.outputs()];
        times
            .iter()
            .map(|&t| {
                c.state(t, &mut x);
                c.derivative(t, &mut dx);
                fit.forcing.g.eval_into(t, 0, &mut g);
                system.forced_rate(&x, t, theta, &g, &mut f);
                let mut row = vec![t];
                row.extend_from_slice(&dx);
                row.extend_from_slice(&f);
                row
            })
            .collect()
    })
}

fn surface_grid(x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = x.ncols();
    if d > 2 {
        return None;
    }
    let axes: Vec<Vec<f64>> = x
        .column_iter()
        .map(|c| {
            let (lo, hi) = (c.min(), c.max());
            (0..SURFACE_POINTS)
                .map(|i| lo + (hi - lo) * i as f64 / (SURFACE_POINTS - 1) as f64)
                .collect()
        })
        .collect();
    Some(if d == 1 {
        DMatrix::from_column_slice(SURFACE_POINTS, 1, &axes[0])
    } else {
        DMatrix::from_fn(SURFACE_POINTS * SURFACE_POINTS, 2, |i, j| {
            if j == 0 {
                axes[0][i / SURFACE_POINTS]
            } else {
                axes[1][i % SURFACE_POINTS]
            }
        })
    })
}

/// Writes all plot tables for a fitted run into `dir`.
pub fn export_plots(
    dir: &Path,
    report: &RunReport,
    data: &TimeSeries,
) -> Result<PlotSummary, AppError> {
    std::fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    let cfg = &report.config;
    let pipeline = pipeline_for(cfg, data.times())?;
    let resolved: ResolvedTestConfig = cfg
        .test
        .resolve(pipeline.times(), pipeline.forcing_basis().support_width())?;
    let times = pipeline.times();
    let n = times.len();
    let tt = &times[resolved.trim..n - resolved.trim];
    let fit = &report.fit;
    let x = fit.states(tt);
    let g = fit.forcing_values(tt);
    let d = x.ncols();
    let k = tt.len();
    let system = cfg.model_system();
    let scatter = &cfg.scatter;

    let h2 = fit_case2(&x, &g, scatter)?.fitted();
    write_table(
        &dir.join("forcing_vs_state.csv"),
        &header(&[one("time"), numbered("x", d), one("g"), one("h")]),
        (0..k).map(|i| {
            let mut r = vec![tt[i]];
            r.extend(x.row(i).iter());
            r.push(g[i]);
            r.push(h2[i]);
            r
        }),
    )?;

    write_table(
        &dir.join("derivative_fit.csv"),
        &header(&[one("time"), numbered("dxhat", d), numbered("rate", d)]),
        derivative_rows(fit, &system, tt),
    )?;

    let lag = resolved.lag;
    let c3 = fit_case3(&x, &g, scatter, lag)?;
    let mut surface_points = 0;
    if let Some(grid) = surface_grid(&x) {
        let h0 = c3.h0.predict(&grid)?;
        surface_points = grid.nrows();
        write_table(
            &dir.join("h0_surface.csv"),
            &header(&[numbered("x", d), one("h0")]),
            (0..grid.nrows()).map(|i| {
                let mut r: Vec<f64> = grid.row(i).iter().copied().collect();
                r.push(h0[(i, 0)]);
                r
            }),
        )?;
    }
    let h1 = c3.h1.fitted().column(0).clone_owned();
    write_table(
        &dir.join("h1_predictions.csv"),
        &header(&[
            one("time"),
            numbered("x", d),
            one("g_lag"),
            one("g"),
            one("h0"),
            one("h1"),
        ]),
        (lag..k).map(|i| {
            let mut r = vec![tt[i]];
            r.extend(x.row(i).iter());
            r.extend([g[i - lag], g[i], c3.h0_all[i], h1[i - lag]]);
            r
        }),
    )?;

    // model solution started from the smooth, with the fitted forcing
    let full = fit.states(&times[..1]);
    let x0: Vec<f64> = full.row(0).iter().copied().collect();
    let solution = integrate(
        &system,
        &fit.gradient.theta,
        &x0,
        times,
        Some(&fit.forcing.g),
        1e-2,
    )
    .ok();
    let m = data.dim();
    write_table(
        &dir.join("timeseries.csv"),
        &header(&[
            one("time"),
            numbered("y", m),
            numbered("xhat", d),
            numbered("solution", d),
        ]),
        (0..k).map(|i| {
            let j = i + resolved.trim;
            let mut r = vec![tt[i]];
            r.extend_from_slice(data.row(j));
            r.extend(x.row(i).iter());
            match &solution {
                Some(s) => r.extend_from_slice(s.row(j)),
                None => r.extend(std::iter::repeat_n(f64::NAN, d)),
            }
            r
        }),
    )?;

    Ok(PlotSummary {
        trimmed_points: k,
        lagged_points: k - lag,
        surface_points,
    })
}
