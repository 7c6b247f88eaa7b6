//! Subcommand implementations. Each returns the process exit code: 0 for
//! success / all checks passed, 2 for a failed certificate or periodicity
//! test; operational errors bubble up as `Err` and exit 1.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use rps_core::analysis::{
    default_pullback_depth, distributional_periodicity_test, moment_probe,
    pathwise_periodicity_test, pullback, Evolve,
};
use rps_core::certificates::{
    certify_finite_delay, certify_reflection, certify_infinite_delay, grid_states_1d, Certificate,
    GridResolution,
};
use rps_core::coupling::{BuildOptions, CouplingMetric};
use rps_core::delay::{simulate_delay, simulate_delay_coupled, SegmentState};
use rps_core::noise::NoiseGrid;
use rps_core::sde::{simulate, simulate_reflection_coupled};

use crate::build::{self, BuiltModel};
use crate::config::{defaults, ExperimentConfig};
use crate::output::{resolve, write_csv, write_json, FileHeader};

fn grid_resolution(cfg: &ExperimentConfig) -> GridResolution {
    GridResolution { points: cfg.grid_points(), refine_rounds: 2 }
}

fn constant_segment(cfg: &ExperimentConfig, model: &rps_core::DelayModel, value: &[f64]) -> Result<SegmentState> {
    let h = cfg.step();
    let m = model.window_steps(h)?;
    Ok(SegmentState::constant(0, h, m, value, model.norm_kind())?)
}

/// Builds the certificate for the configured model class.
pub fn certificate(cfg: &ExperimentConfig) -> Result<Certificate> {
    let grid = grid_resolution(cfg);
    let digest = cfg.digest();
    match cfg.model.class.as_str() {
        "sde" => {
            let params = build::hh_params(cfg)?;
            let metric = build::metric(cfg)?;
            let model = match build::model(cfg)? {
                BuiltModel::Sde(m) => m,
                _ => unreachable!(),
            };
            let drift = model.drift().clone();
            let dim = Evolve::dim(&model);
            let t_grid: Vec<f64> =
                (0..64).map(|i| cfg.model.period * i as f64 / 64.0).collect();
            let lo = cfg.model.params.x_min.unwrap_or(-4.0);
            let hi = cfg.model.params.x_max.unwrap_or(4.0);
            let states = grid_states_1d(64, (lo, hi));
            Ok(certify_reflection(
                move |t, x, out| drift(t, x, out),
                dim,
                &params,
                &metric,
                &t_grid,
                &states,
                digest,
            )?)
        }
        "delay-finite" => {
            let rates = build::rate_triple(cfg)?;
            Ok(certify_finite_delay(&rates, cfg.r0(), grid, digest)?)
        }
        "delay-infinite" => {
            let rates = build::rate_triple(cfg)?;
            Ok(certify_infinite_delay(&rates, cfg.alpha0(), grid, digest)?)
        }
        other => bail!("unknown model class {other:?}"),
    }
}

pub fn cmd_certify(cfg: &ExperimentConfig, out: &str) -> Result<i32> {
    let cert = certificate(cfg)?;
    let path = resolve(cfg.output.dir.as_deref(), out);
    write_json(&path, &cert)?;
    for check in &cert.checks {
        println!(
            "check {:>5}: {} (margin {})",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.margin
        );
    }
    println!(
        "per-period decay {} -> {}",
        cert.per_period_decay,
        path.display()
    );
    Ok(if cert.all_passed() { 0 } else { 2 })
}

pub fn cmd_phi(k1: f64, k2: f64, l: f64, out: &str, out_dir: Option<&str>) -> Result<i32> {
    let metric = CouplingMetric::build(k1, k2, l, BuildOptions::default())?;
    let header = FileHeader { seed: 0, digest: "-" };
    let extra = vec![
        ("C_star", format!("{}", metric.c_star())),
        ("C_upper_star", format!("{}", metric.c_upper_star())),
        ("r_max", format!("{}", metric.r_max())),
    ];
    let path = resolve(out_dir, out);
    let grid = metric.grid().to_vec();
    let phi = metric.phi_values().to_vec();
    let dphi = metric.phi_prime_values().to_vec();
    write_csv(
        &path,
        &header,
        &extra,
        &["r", "phi", "phi_prime"],
        (0..grid.len()).map(move |i| vec![grid[i], phi[i], dphi[i]]),
    )?;
    println!(
        "phi table: C_* = {}, C^* = {}, r_max = {} -> {}",
        metric.c_star(),
        metric.c_upper_star(),
        metric.r_max(),
        path.display()
    );
    Ok(0)
}

/// Noise stream covering [lo, hi] on the config grid.
fn noise_over(cfg: &ExperimentConfig, lo: f64, hi: f64, stream: u64, dim: usize) -> Result<NoiseGrid> {
    let h = cfg.step();
    let len = ((hi - lo) / h).round() as usize + 2;
    Ok(NoiseGrid::new(cfg.seed(), stream, lo, h, len, dim)?)
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &str) -> Result<i32> {
    let s = cfg.anchor();
    let t = s + cfg.horizon();
    let header = FileHeader { seed: cfg.seed(), digest: &cfg.digest() };
    let path = resolve(cfg.output.dir.as_deref(), out);
    match build::model(cfg)? {
        BuiltModel::Sde(model) => {
            let w = noise_over(cfg, s, t, 0, Evolve::dim(&model))?;
            let run = simulate(&model, s, t, &cfg.x0(), &w)?;
            let dim = run.dim;
            let n = run.n_points();
            let stride = (n / 4096).max(1);
            let columns: Vec<String> = std::iter::once("time".to_string())
                .chain((0..dim).map(|k| format!("x{k}")))
                .collect();
            let cols: Vec<&str> = columns.iter().map(|c| c.as_str()).collect();
            write_csv(
                &path,
                &header,
                &[],
                &cols,
                (0..n).step_by(stride).map(|k| {
                    let mut row = vec![run.time(k)];
                    row.extend_from_slice(run.state(k));
                    row
                }),
            )?;
        }
        BuiltModel::Delay(model) => {
            let w = noise_over(cfg, s - model.memory().window(), t, 0, Evolve::dim(&model))?;
            let h = cfg.step();
            let steps = ((t - s) / h).round() as usize;
            let stride = (steps / 4096).max(1);
            let times: Vec<f64> = (0..=steps).step_by(stride).map(|k| s + k as f64 * h).collect();
            let xi = constant_segment(cfg, &model, &cfg.x0())?;
            let outp = simulate_delay(&model, s, t, &xi, &w, &times)?;
            let dim = Evolve::dim(&model);
            let columns: Vec<String> = std::iter::once("time".to_string())
                .chain((0..dim).map(|k| format!("x{k}")))
                .collect();
            let cols: Vec<&str> = columns.iter().map(|c| c.as_str()).collect();
            write_csv(
                &path,
                &header,
                &[],
                &cols,
                outp.segments.iter().map(|seg| {
                    let mut row = vec![seg.anchor_time()];
                    row.extend_from_slice(seg.at_lag_steps(0));
                    row
                }),
            )?;
        }
    }
    println!("path -> {}", path.display());
    Ok(0)
}

pub fn cmd_couple(cfg: &ExperimentConfig, out: &str) -> Result<i32> {
    let s = cfg.anchor();
    let t = s + cfg.horizon();
    let h = cfg.step();
    let header = FileHeader { seed: cfg.seed(), digest: &cfg.digest() };
    let path = resolve(cfg.output.dir.as_deref(), out);
    match build::model(cfg)? {
        BuiltModel::Sde(model) => {
            let metric = build::metric(cfg)?;
            let w = noise_over(cfg, s, t, 0, Evolve::dim(&model))?;
            let steps = ((t - s) / h).round() as usize;
            let stride = (steps / 4096).max(1);
            let run = simulate_reflection_coupled(
                &model,
                s,
                t,
                &cfg.x0(),
                &cfg.y0(),
                &w,
                cfg.eps_couple(),
                stride,
                Some(&metric),
            )?;
            let dim = run.dim;
            let columns: Vec<String> = std::iter::once("time".to_string())
                .chain((0..dim).map(|k| format!("x{k}")))
                .chain((0..dim).map(|k| format!("y{k}")))
                .chain(["z_norm".to_string(), "phi_z".to_string(), "coupled".to_string()])
                .collect();
            let cols: Vec<&str> = columns.iter().map(|c| c.as_str()).collect();
            let times = run.times();
            let phi_z = run.phi_z.clone().unwrap();
            let extra = vec![
                ("eps_couple", format!("{}", run.eps_couple)),
                (
                    "coupled_at_step",
                    run.coupled_at.map_or("none".to_string(), |k| format!("{k}")),
                ),
            ];
            write_csv(
                &path,
                &header,
                &extra,
                &cols,
                (0..times.len()).map(|i| {
                    let mut row = vec![times[i]];
                    row.extend_from_slice(run.x_state(i));
                    row.extend_from_slice(run.y_state(i));
                    row.push(run.z_norms[i]);
                    row.push(phi_z[i]);
                    let coupled = run.coupled_at.is_some_and(|k| run.recorded_steps[i] >= k);
                    row.push(if coupled { 1.0 } else { 0.0 });
                    row
                }),
            )?;
            println!(
                "coupled run -> {} (coupled at step {:?})",
                path.display(),
                run.coupled_at
            );
        }
        BuiltModel::Delay(model) => {
            let w = noise_over(cfg, s - model.memory().window(), t, 0, Evolve::dim(&model))?;
            let steps = ((t - s) / h).round() as usize;
            let stride = (steps / 4096).max(1);
            let xi = constant_segment(cfg, &model, &cfg.x0())?;
            let eta = constant_segment(cfg, &model, &cfg.y0())?;
            let run = simulate_delay_coupled(&model, s, t, &xi, &eta, &w, stride)?;
            let start = run.start_index;
            let step = run.step;
            write_csv(
                &path,
                &header,
                &[],
                &["time", "lambda_norm"],
                run.lambda_norms
                    .iter()
                    .map(move |&(k, nrm)| vec![(start + k as i64) as f64 * step, nrm])
                    .collect::<Vec<_>>()
                    .into_iter(),
            )?;
            println!("synchronous coupling -> {}", path.display());
        }
    }
    Ok(0)
}

/// Pull-back depth: configured value or derived from the certificate decay.
pub fn depth(cfg: &ExperimentConfig) -> Result<usize> {
    if let Some(k) = cfg.run.pullback_depth {
        if k < 2 {
            bail!("run.pullback_depth: must be >= 2, got {k}");
        }
        return Ok(k);
    }
    let cert = certificate(cfg)?;
    Ok(default_pullback_depth(
        cert.per_period_decay,
        defaults::PULLBACK_TARGET,
        defaults::PULLBACK_CAP,
    ))
}

pub fn cmd_pullback(cfg: &ExperimentConfig, out: &str) -> Result<i32> {
    let k = depth(cfg)?;
    let t = cfg.anchor();
    let tau = cfg.model.period;
    let header = FileHeader { seed: cfg.seed(), digest: &cfg.digest() };
    let path = resolve(cfg.output.dir.as_deref(), out);
    let (gaps, ratio) = match build::model(cfg)? {
        BuiltModel::Sde(model) => {
            let w = noise_over(cfg, t - k as f64 * tau, t, 0, Evolve::dim(&model))?;
            let pb = pullback(&model, t, &cfg.x0(), k, &w)?;
            (pb.cauchy_gaps, pb.fitted_ratio)
        }
        BuiltModel::Delay(model) => {
            let w = noise_over(
                cfg,
                t - k as f64 * tau - model.memory().window(),
                t,
                0,
                Evolve::dim(&model),
            )?;
            let xi = constant_segment(cfg, &model, &cfg.x0())?;
            let pb = pullback(&model, t, &xi, k, &w)?;
            (pb.cauchy_gaps, pb.fitted_ratio)
        }
    };
    let extra = vec![
        ("depth", format!("{k}")),
        ("fitted_ratio", ratio.map_or("none".to_string(), |r| format!("{r}"))),
    ];
    write_csv(
        &path,
        &header,
        &extra,
        &["k", "gap"],
        gaps.iter().enumerate().map(|(i, &g)| vec![(i + 1) as f64, g]),
    )?;
    println!(
        "pull-back depth {k}: fitted ratio {} -> {}",
        ratio.map_or("n/a".to_string(), |r| format!("{r:.6}")),
        path.display()
    );
    Ok(0)
}

pub fn cmd_periodicity(cfg: &ExperimentConfig, mode: &str, shift: Option<f64>, out: &str) -> Result<i32> {
    let t = cfg.anchor();
    let tau = cfg.model.period;
    let shift = shift.unwrap_or(tau);
    let h = cfg.step();
    let path = resolve(cfg.output.dir.as_deref(), out);
    let report = match mode {
        "dist" => {
            let k = depth(cfg)?;
            let n = cfg.ensemble();
            match build::model(cfg)? {
                BuiltModel::Sde(model) => distributional_periodicity_test(
                    &model,
                    t,
                    &cfg.x0(),
                    k,
                    n,
                    shift,
                    h,
                    cfg.seed(),
                )?,
                BuiltModel::Delay(model) => {
                    let xi = constant_segment(cfg, &model, &cfg.x0())?;
                    distributional_periodicity_test(&model, t, &xi, k, n, shift, h, cfg.seed())?
                }
            }
        }
        "path" => match build::model(cfg)? {
            BuiltModel::Delay(model) => {
                let k = depth(cfg)?;
                let xi = constant_segment(cfg, &model, &cfg.x0())?;
                pathwise_periodicity_test(&model, t, &xi, k, h, cfg.seed(), 0)?
            }
            BuiltModel::Sde(_) => {
                bail!("pathwise periodicity applies to the functional (delay) classes")
            }
        },
        other => bail!("unknown mode {other:?} (expected dist or path)"),
    };
    write_json(&path, &report)?;
    println!(
        "periodicity ({mode}): statistic {} vs resolution {} -> {} ({})",
        report.statistic,
        report.resolution,
        if report.pass { "pass" } else { "FAIL" },
        path.display()
    );
    Ok(if report.pass { 0 } else { 2 })
}

pub fn cmd_probe(cfg: &ExperimentConfig, out: &str) -> Result<i32> {
    let s = cfg.anchor();
    let horizon = cfg.horizon();
    let n = cfg.ensemble();
    let h = cfg.step();
    let header = FileHeader { seed: cfg.seed(), digest: &cfg.digest() };
    let path = resolve(cfg.output.dir.as_deref(), out);
    let probe = match build::model(cfg)? {
        BuiltModel::Sde(model) => {
            moment_probe(&model, s, horizon, &cfg.x0(), n, defaults::PROBES, h, cfg.seed())?
        }
        BuiltModel::Delay(model) => {
            let xi = constant_segment(cfg, &model, &cfg.x0())?;
            moment_probe(&model, s, horizon, &xi, n, defaults::PROBES, h, cfg.seed())?
        }
    };
    let extra = vec![
        ("max_mean_square", format!("{}", probe.max_mean_square)),
        ("trend_flag", format!("{}", probe.trend_flag)),
    ];
    write_csv(
        &path,
        &header,
        &extra,
        &["probe_time", "mean_square", "stderr"],
        probe.probes.iter().map(|&(t, m, se)| vec![t, m, se]),
    )?;
    println!(
        "probe: max E|X|^2 = {}, blow-up flag = {} -> {}",
        probe.max_mean_square,
        probe.trend_flag,
        path.display()
    );
    Ok(0)
}

/// Loads, applies flag overrides, and revalidates.
pub fn load_config(path: &Path, seed: Option<u64>, out_dir: Option<&str>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = crate::config::parse_config(&text)?;
    if let Some(seed) = seed {
        cfg.run.seed = Some(seed);
    }
    if let Some(dir) = out_dir {
        cfg.output.dir = Some(dir.to_string());
    }
    Ok(cfg)
}

pub fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    if let Some(dir) = &cfg.output.dir {
        std::fs::create_dir_all(dir).map_err(|e| anyhow!("creating output dir {dir}: {e}"))?;
    }
    Ok(())
}
