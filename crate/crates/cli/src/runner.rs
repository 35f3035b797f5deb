//! Experiment dispatch: one config in, CSV outputs plus a manifest out.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use gaussflow_core::density::{
    check_exponential_condition, corollary23_bound, density_via_inverse, entropy_bound_thm33,
    entropy_via_duality, lp_norm_via_duality, pushforward_kde, simulate_endpoints,
    theorem22_bound, EndpointMode,
};
use gaussflow_core::error::GaussFlowError;
use gaussflow_core::fields::DerivMode;
use gaussflow_core::mollify::{ou_identity_residuals, MollifyConfig};
use gaussflow_core::quadrature::GaussianIntegrator;
use gaussflow_core::rng::{CounterRng, Stream};
use gaussflow_core::sde::{
    flow_composition_residual, integrate_flow, BrownianPath, TimeGrid,
};
use gaussflow_core::stability::{
    cauchy_diagnostic, log_distance_functional, lusin_lipschitz_ratio, maximal_function,
    maximal_lp_ratio, SampleGrid, StabilityParams,
};

use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;

/// Exit disposition of a run: 0 on success, 2 when a condition-violated
/// report was produced (the outputs are still written).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    ConditionViolated,
}

impl RunStatus {
    pub fn code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::ConditionViolated => 2,
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(dir.join(name), text).with_context(|| format!("writing {name}"))?;
    Ok(())
}

fn parse_bool(cfg: &ExperimentConfig, key: &str, default: bool) -> Result<bool> {
    match cfg.get(key) {
        None => Ok(default),
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => bail!("key `{key}`: expected true/false, got `{other}`"),
    }
}

fn time_grid(cfg: &ExperimentConfig) -> Result<TimeGrid> {
    TimeGrid::new(cfg.f64("grid.t")?, cfg.usize("grid.steps")?).map_err(|e| anyhow!("{e}"))
}

fn integrator(cfg: &ExperimentConfig, dim: usize, seed: u64) -> Result<GaussianIntegrator> {
    let order = cfg.usize_or("quad.order", 64)?;
    let mc = cfg.usize_or("quad.mc-samples", 1 << 16)?;
    Ok(GaussianIntegrator::new(dim, order, mc, seed))
}

fn gamma_sample(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let rng = CounterRng::new(seed, Stream::Initial, 0);
    (0..count)
        .map(|k| {
            let mut x = vec![0.0; dim];
            rng.gaussian_point(k as u64, &mut x);
            x
        })
        .collect()
}

fn eval_lattice(cfg: &ExperimentConfig, dim: usize) -> Result<(Vec<f64>, f64)> {
    let min = cfg.f64_or("eval.min", -2.0)?;
    let max = cfg.f64_or("eval.max", 2.0)?;
    let step = cfg.f64_or("eval.step", 0.1)?;
    if !(step > 0.0) || max <= min {
        bail!("eval lattice needs step > 0 and max > min");
    }
    let per_axis: Vec<f64> = {
        let n = ((max - min) / step).round() as usize;
        (0..=n).map(|k| min + k as f64 * step).collect()
    };
    let mut points = Vec::new();
    match dim {
        1 => points.extend(per_axis.iter().copied()),
        2 => {
            for &x in &per_axis {
                for &y in &per_axis {
                    points.push(x);
                    points.push(y);
                }
            }
        }
        _ => bail!("eval lattices support d <= 2, got {dim}"),
    }
    Ok((points, step))
}

/// Run one experiment into `out_dir`; writes the manifest last.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunStatus> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let start = Instant::now();
    let mode = cfg.require("mode")?;
    let (outputs, status) = match mode {
        "simulate" => run_simulate(cfg, out_dir)?,
        "mollify-check" => run_mollify_check(cfg, out_dir)?,
        "density" => run_density(cfg, out_dir)?,
        "bounds" => run_bounds(cfg, out_dir)?,
        "stability" => run_stability(cfg, out_dir)?,
        "maximal" => run_maximal(cfg, out_dir)?,
        "lemma21-check" => run_lemma21(cfg, out_dir)?,
        "flow-check" => run_flow_check(cfg, out_dir)?,
        "strong-order" => run_strong_order(cfg, out_dir)?,
        other => bail!("unknown mode `{other}`"),
    };
    let mut manifest = RunManifest::new(cfg.text(), cfg.seed()?, start.elapsed().as_millis());
    for name in &outputs {
        manifest.record_output(out_dir, name)?;
    }
    manifest.write(out_dir)?;
    Ok(status)
}

pub fn expected_mode(cfg: &ExperimentConfig, want: &str) -> Result<()> {
    let mode = cfg.require("mode")?;
    if mode != want {
        bail!("this subcommand runs mode `{want}`, but the config says `{mode}`");
    }
    Ok(())
}

fn run_simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let grid = time_grid(cfg)?;
    let x = cfg.f64_list("simulate.x")?;
    let path_index = cfg.u64_or("simulate.path-index", 0)?;
    let accumulate = parse_bool(cfg, "simulate.accumulate", true)?;
    let path = BrownianPath::sample(grid, ens.noise_dim(), cfg.seed()?, path_index);
    let traj = integrate_flow(&ens, &x, &path, accumulate)?;

    let mut header = vec!["t".to_string()];
    for i in 1..=ens.dim() {
        header.push(format!("x_{i}"));
    }
    header.push("ito_sum".into());
    header.push("phi_sum".into());
    let mut rows = Vec::new();
    for k in 0..=grid.steps() {
        let mut row = vec![fmt_f(grid.time(k))];
        for v in traj.state(k) {
            row.push(fmt_f(*v));
        }
        row.push(fmt_f(traj.ito_cumsum().map_or(f64::NAN, |c| c[k])));
        row.push(fmt_f(traj.phi_cumsum().map_or(f64::NAN, |c| c[k])));
        rows.push(row);
    }
    write_csv(dir, "trajectory.csv", &header, &rows)?;
    Ok((vec!["trajectory.csv".into()], RunStatus::Ok))
}

fn run_mollify_check(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let epsilons = cfg.f64_list_or("mollify.epsilons", &[1.0, 0.5, 0.125])?;
    let n_points = cfg.usize_or("mollify.points", 20)?;
    let quad_order = cfg.usize_or("mollify.quad-order", 32)?;
    let seed = cfg.seed()?;
    let points = gamma_sample(ens.dim(), n_points, seed);

    let mut header = vec!["field".to_string(), "epsilon".to_string()];
    for i in 1..=ens.dim() {
        header.push(format!("x_{i}"));
    }
    header.push("jac_residual".into());
    header.push("div_residual".into());
    let mut rows = Vec::new();
    let mut fields = vec![("drift".to_string(), ens.drift().clone())];
    for (j, a) in ens.diffusions().iter().enumerate() {
        fields.push((format!("diffusion.{j}"), a.clone()));
    }
    for &eps in &epsilons {
        let mcfg = MollifyConfig::new(eps)
            .map_err(|e| anyhow!("{e}"))?
            .with_quad_order(quad_order);
        for (name, spec) in &fields {
            for x in &points {
                let (jr, dr) = ou_identity_residuals(spec, &mcfg, x)?;
                let mut row = vec![name.clone(), fmt_f(eps)];
                row.extend(x.iter().map(|v| fmt_f(*v)));
                row.push(fmt_f(jr));
                row.push(fmt_f(dr));
                rows.push(row);
            }
        }
    }
    write_csv(dir, "residuals.csv", &header, &rows)?;
    Ok((vec!["residuals.csv".into()], RunStatus::Ok))
}

fn run_density(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let op = cfg.require("density.op")?;
    let seed = cfg.seed()?;
    match op {
        "lp" | "entropy" => {
            let grid = time_grid(cfg)?;
            let p = cfg.f64_or("p", 2.0)?;
            let paths = cfg.usize_or("mc.paths", 1000)?;
            let initials = cfg.usize_or("mc.initials", 1)?;
            let quad = integrator(cfg, ens.dim(), seed)?;
            let rep = if op == "lp" {
                lp_norm_via_duality(&ens, grid, p, paths, initials, seed)?
            } else {
                entropy_via_duality(&ens, grid, paths, initials, seed)?
            };
            let mut status = RunStatus::Ok;
            let (estimate, se, bound) = if op == "lp" {
                (
                    rep.lp_estimate,
                    rep.lp_standard_error,
                    theorem22_bound(&ens, p, grid.horizon(), &quad)?,
                )
            } else {
                let bound = match entropy_bound_thm33(&ens, grid.horizon(), &quad) {
                    Ok(rep) => rep.bound,
                    Err(GaussFlowError::ConditionViolated(_)) => {
                        status = RunStatus::ConditionViolated;
                        f64::INFINITY
                    }
                    Err(e) => return Err(e.into()),
                };
                (rep.entropy_estimate, rep.entropy_standard_error, bound)
            };
            let header: Vec<String> = ["op", "p", "t", "estimate", "standard_error", "bound", "lambda_p_t"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            let rows = vec![vec![
                op.to_string(),
                fmt_f(rep.p),
                fmt_f(grid.horizon()),
                fmt_f(estimate),
                fmt_f(se),
                fmt_f(bound),
                fmt_f(rep.lambda_p_t),
            ]];
            write_csv(dir, "moments.csv", &header, &rows)?;
            Ok((vec!["moments.csv".into()], status))
        }
        "kde" | "inverse" => {
            let grid = time_grid(cfg)?;
            let (eval, _) = eval_lattice(cfg, ens.dim())?;
            let path_index = cfg.u64_or("density.path-index", 0)?;
            let est = if op == "kde" {
                let samples = cfg.usize_or("density.samples", 10_000)?;
                let mode = match cfg.get("density.mode").unwrap_or("per-omega") {
                    "per-omega" => EndpointMode::PerOmega { path_index },
                    "annealed" => EndpointMode::Annealed {
                        n_paths: cfg.usize_or("mc.paths", 100)?,
                    },
                    other => bail!("density.mode `{other}` (want per-omega or annealed)"),
                };
                let endpoints = simulate_endpoints(&ens, grid, mode, samples, seed)?;
                let bandwidth = match cfg.get("density.bandwidth") {
                    Some(_) => Some(cfg.f64("density.bandwidth")?),
                    None => None,
                };
                pushforward_kde(&endpoints, ens.dim(), &eval, bandwidth)?
            } else {
                let path = BrownianPath::sample(grid, ens.noise_dim(), seed, path_index);
                let tol = match cfg.get("density.trip-tolerance") {
                    Some(_) => Some(cfg.f64("density.trip-tolerance")?),
                    None => None,
                };
                density_via_inverse(&ens, &eval, &path, grid.steps(), tol)?
            };
            if est.excluded > 0 {
                eprintln!(
                    "warning: {} evaluation point(s) excluded by the round-trip tolerance",
                    est.excluded
                );
            }
            let mut header: Vec<String> = (1..=ens.dim()).map(|i| format!("y_{i}")).collect();
            header.push("k".into());
            header.push("method".into());
            let method = match est.method {
                gaussflow_core::density::DensityMethod::Kde { .. } => "kde",
                gaussflow_core::density::DensityMethod::InverseFlow => "inverse-flow",
            };
            let mut rows = Vec::new();
            for i in 0..est.len() {
                let mut row: Vec<String> = est.point(i).iter().map(|v| fmt_f(*v)).collect();
                row.push(fmt_f(est.values[i]));
                row.push(method.to_string());
                rows.push(row);
            }
            write_csv(dir, "density.csv", &header, &rows)?;
            Ok((vec!["density.csv".into()], RunStatus::Ok))
        }
        other => bail!("unknown density.op `{other}`"),
    }
}

fn run_bounds(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let op = cfg.require("bounds.op")?;
    let seed = cfg.seed()?;
    let quad = integrator(cfg, ens.dim(), seed)?;
    match op {
        "theorem22" | "corollary23" => {
            let p = cfg.f64_or("p", 2.0)?;
            let t = cfg.f64("t")?;
            let value = if op == "theorem22" {
                theorem22_bound(&ens, p, t, &quad)?
            } else {
                corollary23_bound(&ens, p, t, &quad)?
            };
            let header: Vec<String> = ["op", "p", "t", "value"].iter().map(|s| s.to_string()).collect();
            let rows = vec![vec![op.to_string(), fmt_f(p), fmt_f(t), fmt_f(value)]];
            write_csv(dir, "bounds.csv", &header, &rows)?;
            Ok((vec!["bounds.csv".into()], RunStatus::Ok))
        }
        "entropy33" => {
            let t = cfg.f64("t")?;
            let header: Vec<String> = ["t", "t0", "lambda", "c1", "c2", "levels", "bound"]
                .iter()
                .map(|s| s.to_string())
                .collect();
            match entropy_bound_thm33(&ens, t, &quad) {
                Ok(rep) => {
                    let rows = vec![vec![
                        fmt_f(t),
                        fmt_f(rep.t0),
                        fmt_f(rep.lambda_t0),
                        fmt_f(rep.c1),
                        fmt_f(rep.c2),
                        rep.levels.to_string(),
                        fmt_f(rep.bound),
                    ]];
                    write_csv(dir, "entropy_bound.csv", &header, &rows)?;
                    Ok((vec!["entropy_bound.csv".into()], RunStatus::Ok))
                }
                Err(GaussFlowError::ConditionViolated(msg)) => {
                    eprintln!("condition violated: {msg}");
                    let rows = vec![vec![
                        fmt_f(t),
                        fmt_f(f64::NAN),
                        fmt_f(f64::INFINITY),
                        fmt_f(f64::NAN),
                        fmt_f(f64::NAN),
                        "0".to_string(),
                        fmt_f(f64::INFINITY),
                    ]];
                    write_csv(dir, "entropy_bound.csv", &header, &rows)?;
                    Ok((vec!["entropy_bound.csv".into()], RunStatus::ConditionViolated))
                }
                Err(e) => Err(e.into()),
            }
        }
        "condition" => {
            let lambda0 = cfg.f64("lambda0")?;
            let rep = check_exponential_condition(&ens, lambda0, &quad)?;
            let header: Vec<String> = ["lambda0", "value", "finite"].iter().map(|s| s.to_string()).collect();
            let rows = vec![vec![
                fmt_f(rep.lambda0),
                fmt_f(rep.value),
                rep.finite.to_string(),
            ]];
            write_csv(dir, "condition.csv", &header, &rows)?;
            if rep.finite {
                Ok((vec!["condition.csv".into()], RunStatus::Ok))
            } else {
                eprintln!(
                    "condition violated: the exponential integral diverges at lambda0 = {lambda0}"
                );
                Ok((vec!["condition.csv".into()], RunStatus::ConditionViolated))
            }
        }
        other => bail!("unknown bounds.op `{other}`"),
    }
}

fn stability_params(cfg: &ExperimentConfig, sigma: f64) -> Result<StabilityParams> {
    let mut params = StabilityParams::new(
        sigma,
        cfg.f64_or("stability.r", 4.0)?,
        cfg.usize_or("mc.paths", 100)?,
        cfg.usize_or("mc.initials", 10)?,
        cfg.seed()?,
    );
    params.q = cfg.f64_or("q", 2.0)?;
    params.alpha = cfg.f64_or("alpha", 2.0)?;
    params.lambda_paths = cfg.usize_or("lambda.paths", 256)?;
    params.lambda_initials = cfg.usize_or("lambda.initials", 8)?;
    params.quad_order = cfg.usize_or("quad.order", 32)?;
    Ok(params)
}

fn run_stability(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let op = cfg.require("stability.op")?;
    match op {
        "log-distance" => {
            let ens = cfg.ensemble()?;
            let hat = cfg.hat_ensemble()?;
            let grid = time_grid(cfg)?;
            let params = stability_params(cfg, cfg.f64("sigma")?)?;
            let rep = log_distance_functional(&ens, &hat, grid, &params)?;
            let header: Vec<String> = [
                "sigma", "r", "t", "q", "lhs", "standard_error", "gr_mass", "gradient_terms",
                "sigma2_group", "sigma1_group", "lambda_p_t", "fitted_constant", "alpha",
                "alpha_moment",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            let rows = vec![vec![
                fmt_f(rep.sigma),
                fmt_f(rep.ball_radius),
                fmt_f(rep.horizon),
                fmt_f(rep.q),
                fmt_f(rep.lhs),
                fmt_f(rep.lhs_standard_error),
                fmt_f(rep.gr_mass),
                fmt_f(rep.gradient_terms),
                fmt_f(rep.sigma2_group),
                fmt_f(rep.sigma1_group),
                fmt_f(rep.lambda_p_t),
                fmt_f(rep.fitted_constant),
                fmt_f(rep.alpha),
                fmt_f(rep.alpha_moment),
            ]];
            write_csv(dir, "stability.csv", &header, &rows)?;
            Ok((vec!["stability.csv".into()], RunStatus::Ok))
        }
        "cauchy" => {
            let ens = cfg.ensemble()?;
            let grid = time_grid(cfg)?;
            let params = stability_params(cfg, 1.0)?;
            let mollify_order = cfg.usize_or("mollify.quad-order", 32)?;
            let pairs_raw = cfg.require("cauchy.pairs")?;
            let mut pairs = Vec::new();
            for tok in pairs_raw.split(',') {
                let (n, k) = tok
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| anyhow!("cauchy.pairs entries look like `n:k`, got `{tok}`"))?;
                pairs.push((n.trim().parse::<u32>()?, k.trim().parse::<u32>()?));
            }
            let header: Vec<String> =
                ["n", "k", "sigma_nk", "log_functional", "alpha_moment", "gr_mass"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
            let mut rows = Vec::new();
            for (n, k) in pairs {
                let diag = cauchy_diagnostic(&ens, n, k, grid, &params, mollify_order)?;
                rows.push(vec![
                    n.to_string(),
                    k.to_string(),
                    fmt_f(diag.sigma_nk),
                    fmt_f(diag.log_functional),
                    fmt_f(diag.alpha_moment),
                    fmt_f(diag.report.gr_mass),
                ]);
            }
            write_csv(dir, "cauchy.csv", &header, &rows)?;
            Ok((vec!["cauchy.csv".into()], RunStatus::Ok))
        }
        "lusin" => {
            let ens = cfg.ensemble()?;
            let spec = ens.drift().clone();
            let radius = cfg.f64_or("lattice.radius", 3.0)?;
            let dxs = cfg.f64_list_or("lattice.dx", &[0.05])?;
            let max_r = cfg.f64_or("stability.r", 1.0)?;
            let pairs = cfg.usize_or("pairs", 10_000)?;
            let header: Vec<String> =
                ["field", "dx", "r", "pairs", "max_ratio", "p99_ratio", "degenerate"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
            let mut rows = Vec::new();
            for dx in dxs {
                let stats = lusin_lipschitz_ratio(&spec, radius, dx, max_r, pairs, cfg.seed()?)?;
                rows.push(vec![
                    spec.family_id(),
                    fmt_f(dx),
                    fmt_f(max_r),
                    stats.pairs.to_string(),
                    fmt_f(stats.max),
                    fmt_f(stats.p99),
                    stats.degenerate.to_string(),
                ]);
            }
            write_csv(dir, "ratios.csv", &header, &rows)?;
            Ok((vec!["ratios.csv".into()], RunStatus::Ok))
        }
        "lp-ratio" => {
            let ens = cfg.ensemble()?;
            let spec = ens.drift().clone();
            let radius = cfg.f64_or("lattice.radius", 3.0)?;
            let dxs = cfg.f64_list_or("lattice.dx", &[0.1, 0.05, 0.025])?;
            let max_r = cfg.f64_or("stability.r", 1.0)?;
            let p = cfg.f64_or("p", 2.0)?;
            let inner_r = cfg.f64_or("lattice.r", 1.0)?;
            let header: Vec<String> = ["dx", "r", "p", "ratio"].iter().map(|s| s.to_string()).collect();
            let mut rows = Vec::new();
            for dx in dxs {
                let grid = SampleGrid::from_scalar_fn(spec.dim(), radius, dx, |x| {
                    spec.eval(x).map(|v| gaussflow_core::numerics::euclid_norm(&v)).unwrap_or(f64::NAN)
                })?;
                let ratio = maximal_lp_ratio(&grid, max_r, p, inner_r)?;
                rows.push(vec![fmt_f(dx), fmt_f(inner_r), fmt_f(p), fmt_f(ratio)]);
            }
            write_csv(dir, "lp_ratio.csv", &header, &rows)?;
            Ok((vec!["lp_ratio.csv".into()], RunStatus::Ok))
        }
        other => bail!("unknown stability.op `{other}`"),
    }
}

fn run_maximal(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let spec = ens.drift().clone();
    let radius = cfg.f64_or("lattice.radius", 3.0)?;
    let dx = cfg.f64_or("lattice.dx", 0.05)?;
    let max_r = cfg.f64_or("maximal.r", 1.0)?;
    let grid = SampleGrid::from_scalar_fn(spec.dim(), radius, dx, |x| {
        spec.eval(x)
            .map(|v| gaussflow_core::numerics::euclid_norm(&v))
            .unwrap_or(f64::NAN)
    })?;
    let maximal = maximal_function(&grid, max_r)?;
    let mut header: Vec<String> = (1..=spec.dim()).map(|i| format!("x_{i}")).collect();
    header.push("f".into());
    header.push("m_r_f".into());
    let mut rows = Vec::new();
    for linear in maximal.interior_indices() {
        let mut row: Vec<String> = grid.point(linear).iter().map(|v| fmt_f(*v)).collect();
        row.push(fmt_f(grid.value(linear)));
        row.push(fmt_f(maximal.value(linear)));
        rows.push(row);
    }
    write_csv(dir, "maximal.csv", &header, &rows)?;
    Ok((vec!["maximal.csv".into()], RunStatus::Ok))
}

fn run_lemma21(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let n_points = cfg.usize_or("points", 1000)?;
    let seed = cfg.seed()?;
    let points = gamma_sample(ens.dim(), n_points, seed);
    let mut header = vec!["deriv_mode".to_string()];
    for i in 1..=ens.dim() {
        header.push(format!("x_{i}"));
    }
    header.push("residual".into());
    let mut rows = Vec::new();
    for (mode, label) in [
        (DerivMode::Analytic, "analytic"),
        (DerivMode::FiniteDifference, "finite-difference"),
    ] {
        for x in &points {
            let residual = ens.lemma21_residual(x, mode)?;
            let mut row = vec![label.to_string()];
            row.extend(x.iter().map(|v| fmt_f(*v)));
            row.push(fmt_f(residual));
            rows.push(row);
        }
    }
    write_csv(dir, "lemma21.csv", &header, &rows)?;
    Ok((vec!["lemma21.csv".into()], RunStatus::Ok))
}

fn run_flow_check(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let grid = time_grid(cfg)?;
    let seed = cfg.seed()?;
    let splits_raw = cfg.get("splits").unwrap_or("30:70,50:50");
    let mut splits = Vec::new();
    for tok in splits_raw.split(',') {
        let (s, t) = tok
            .trim()
            .split_once(':')
            .ok_or_else(|| anyhow!("splits entries look like `s:t`, got `{tok}`"))?;
        splits.push((s.trim().parse::<usize>()?, t.trim().parse::<usize>()?));
    }
    let x = gamma_sample(ens.dim(), 1, seed).pop().unwrap();
    let path = BrownianPath::sample(grid, ens.noise_dim(), seed, 0);
    let header: Vec<String> = ["s_steps", "t_steps", "residual"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (s, t) in splits {
        let r = flow_composition_residual(&ens, &x, &path, s, t)?;
        rows.push(vec![s.to_string(), t.to_string(), fmt_f(r)]);
    }
    write_csv(dir, "flow.csv", &header, &rows)?;
    Ok((vec!["flow.csv".into()], RunStatus::Ok))
}

fn run_strong_order(cfg: &ExperimentConfig, dir: &Path) -> Result<(Vec<String>, RunStatus)> {
    let ens = cfg.ensemble()?;
    let seed = cfg.seed()?;
    let x = cfg.f64_list("simulate.x")?;
    let coarse_pows: Vec<f64> = cfg.f64_list_or("order.levels", &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0])?;
    let fine_pow = cfg.usize_or("order.reference-pow", 18)?;
    let n_paths = cfg.usize_or("mc.paths", 128)?;
    let horizon = cfg.f64_or("grid.t", 1.0)?;

    // reference: Euler-Maruyama on the 2^fine_pow grid of the same path
    let mut errs: Vec<Vec<f64>> = vec![Vec::new(); coarse_pows.len()];
    for p in 0..n_paths {
        let fine = BrownianPath::sample(
            TimeGrid::new(horizon, 1usize << fine_pow).map_err(|e| anyhow!("{e}"))?,
            ens.noise_dim(),
            seed,
            p as u64,
        );
        let reference = integrate_flow(&ens, &x, &fine, false)?;
        let ref_end = reference.end_state().to_vec();
        for (i, pow) in coarse_pows.iter().enumerate() {
            let pow = *pow as usize;
            if pow >= fine_pow {
                bail!("order.levels must stay below order.reference-pow");
            }
            let coarse = fine.coarsen(1usize << (fine_pow - pow)).map_err(|e| anyhow!("{e}"))?;
            let end = integrate_flow(&ens, &x, &coarse, false)?.end_state().to_vec();
            let err: f64 = end
                .iter()
                .zip(&ref_end)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            errs[i].push(err);
        }
    }
    let header: Vec<String> = ["h", "rms_error"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    let mut log_h = Vec::new();
    let mut log_e = Vec::new();
    for (i, pow) in coarse_pows.iter().enumerate() {
        let h = horizon / (1u64 << (*pow as u32)) as f64;
        let rms = (errs[i].iter().sum::<f64>() / errs[i].len() as f64).sqrt();
        log_h.push(h.ln());
        log_e.push(rms.ln());
        rows.push(vec![fmt_f(h), fmt_f(rms)]);
    }
    let slope = gaussflow_core::numerics::ls_slope(&log_h, &log_e);
    rows.push(vec!["slope".to_string(), fmt_f(slope)]);
    write_csv(dir, "strong_order.csv", &header, &rows)?;
    Ok((vec!["strong_order.csv".into()], RunStatus::Ok))
}

/// Verify an existing run and reproduce it in a scratch directory.
pub fn replay(manifest_path: &Path) -> Result<RunStatus> {
    let manifest = RunManifest::load(manifest_path)?;
    if manifest.artifact_version != crate::manifest::ARTIFACT_VERSION {
        bail!(
            "refusing replay: manifest was written by version {}, this binary is {}",
            manifest.artifact_version,
            crate::manifest::ARTIFACT_VERSION
        );
    }
    let dir = manifest_path
        .parent()
        .ok_or_else(|| anyhow!("manifest has no parent directory"))?;
    for (name, recorded) in &manifest.outputs {
        let actual = crate::manifest::sha256_file(&dir.join(name))?;
        if &actual != recorded {
            bail!("checksum mismatch for `{name}`: recorded {recorded}, found {actual}");
        }
    }
    let cfg = ExperimentConfig::parse(&manifest.config_text)?;
    let scratch = std::env::temp_dir().join(format!(
        "gaussflow-replay-{}-{}",
        std::process::id(),
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap()
            .as_nanos()
    ));
    let status = execute(&cfg, &scratch)?;
    for (name, recorded) in &manifest.outputs {
        let fresh = crate::manifest::sha256_file(&scratch.join(name))?;
        if &fresh != recorded {
            bail!("replay diverged on `{name}`: recorded {recorded}, reproduced {fresh}");
        }
    }
    let _ = std::fs::remove_dir_all(&scratch);
    Ok(status)
}

/// The `fields list` table.
pub fn print_fields_table() {
    println!(
        "{:<12} {:<36} {:<28} {:<44} {}",
        "family", "parameters", "growth constant", "smoothness", "singular set"
    );
    for info in gaussflow_core::fields::builtin_families() {
        println!(
            "{:<12} {:<36} {:<28} {:<44} {}",
            info.id, info.arity, info.growth, info.smoothness, info.singular_set
        );
    }
    println!();
    println!("custom fields are registered programmatically through the library API");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_density_run_writes_unit_table() {
        let dir = std::env::temp_dir().join(format!("gaussflow-test-{}", std::process::id()));
        let cfg = ExperimentConfig::parse(
            "mode = density\ndensity.op = inverse\ndim = 1\n\
             drift.family = constant\ndrift.params = 0\n\
             diffusion.0.family = constant\ndiffusion.0.params = 0\n\
             grid.t = 1\ngrid.steps = 50\nseed = 1\n\
             eval.min = -1\neval.max = 1\neval.step = 0.5\n",
        )
        .unwrap();
        let status = execute(&cfg, &dir).unwrap();
        assert_eq!(status, RunStatus::Ok);
        let text = std::fs::read_to_string(dir.join("density.csv")).unwrap();
        for line in text.lines().skip(1) {
            let k: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert_eq!(k, 1.0);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
