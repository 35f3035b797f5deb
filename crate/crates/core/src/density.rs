//! Pathwise Radon-Nikodym densities, push-forward density estimation, and
//! the analytic L^p / entropy bounds.
//!
//! Everything is phrased against the standard Gaussian reference measure.
//! The pathwise factor is kept in log space: along a trajectory with
//! density accumulators,
//! `log Ktilde_t = -(sum_j int delta(A_j)(X) dw^j) - int Phi(X) ds`,
//! so all derived densities stay strictly positive by construction.

use rayon::prelude::*;

use crate::error::{GaussFlowError, Result};
use crate::fields::{DerivMode, FieldEnsemble};
use crate::numerics::{dot, euclid_dist, euclid_norm, fd_step, mean_and_se, pairwise_mean};
use crate::quadrature::GaussianIntegrator;
use crate::rng::{CounterRng, Stream};
use crate::sde::{BrownianPath, FlowStepper, TimeGrid, Trajectory};

/// Numeric proxy for a divergent Gaussian integral.
pub const OVERFLOW_PROXY: f64 = 1e300;
/// Cap accepted for Lambda_{T0} during the horizon search.
pub const LAMBDA_CAP: f64 = 1e6;
/// Smallest admissible horizon before the search gives up.
pub const MIN_T0: f64 = 9.5367431640625e-7; // 2^-20
/// Largest L^(2^N) tower the desk-scale quadrature supports.
pub const MAX_LEVELS: u32 = 8;

/// The pathwise factor Ktilde along one trajectory, in log space.
#[derive(Clone, Debug)]
pub struct PathDensityRecord {
    log_tilde_k: Vec<f64>,
    grid: TimeGrid,
}

impl PathDensityRecord {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn log_tilde_k(&self, k: usize) -> f64 {
        self.log_tilde_k[k]
    }

    /// Strictly positive by construction.
    pub fn tilde_k(&self, k: usize) -> f64 {
        self.log_tilde_k[k].exp()
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_tilde_k
    }
}

/// Read the density factor off a trajectory's accumulators.
pub fn tilde_density(traj: &Trajectory) -> Result<PathDensityRecord> {
    let (ito, phi) = match (traj.ito_cumsum(), traj.phi_cumsum()) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(GaussFlowError::InvalidInput(
                "trajectory carries no density accumulators".into(),
            ))
        }
    };
    let log_tilde_k: Vec<f64> = ito.iter().zip(phi).map(|(a, b)| -(a + b)).collect();
    Ok(PathDensityRecord {
        log_tilde_k,
        grid: traj.grid(),
    })
}

/// Stratonovich-form cross-check of the density exponent: midpoint
/// evaluation of the divergence against the increments plus the
/// Riemann sum of delta(Atilde_0). Agrees with the Ito form to O(h).
pub fn tilde_density_stratonovich(
    ens: &FieldEnsemble,
    traj: &Trajectory,
    path: &BrownianPath,
) -> Result<Vec<f64>> {
    let n = traj.grid().steps();
    let h = traj.grid().dt();
    let d = ens.dim();
    let mut log_vals = Vec::with_capacity(n + 1);
    log_vals.push(0.0);
    let mut acc = 0.0;
    let mut mid = vec![0.0; d];
    for k in 0..n {
        let xk = traj.state(k);
        let xk1 = traj.state(k + 1);
        for i in 0..d {
            mid[i] = 0.5 * (xk[i] + xk1[i]);
        }
        let dw = path.increment(k);
        for (j, dwj) in dw.iter().enumerate() {
            acc -= ens.diffusion(j).gauss_divergence(&mid, DerivMode::Auto)? * dwj;
        }
        acc -= strat_drift_divergence(ens, xk)? * h;
        log_vals.push(acc);
    }
    Ok(log_vals)
}

/// delta(Atilde_0)(x) for the composite Stratonovich drift, divergence by
/// central differences of the corrected drift.
fn strat_drift_divergence(ens: &FieldEnsemble, x: &[f64]) -> Result<f64> {
    let v = ens.strat_drift(x, DerivMode::Auto)?;
    let d = ens.dim();
    let h = fd_step(x);
    let mut div = 0.0;
    let mut xp = x.to_vec();
    for k in 0..d {
        xp[k] = x[k] + h;
        let plus = ens.strat_drift(&xp, DerivMode::Auto)?[k];
        xp[k] = x[k] - h;
        let minus = ens.strat_drift(&xp, DerivMode::Auto)?[k];
        xp[k] = x[k];
        div += (plus - minus) / (2.0 * h);
    }
    Ok(dot(x, &v) - div)
}

/// Monte Carlo moment estimates through the duality identity
/// `int E[K_t^p] dgamma = int E[Ktilde_t^{1-p}] dgamma` together with the
/// entropy identity `E int K |log K| dgamma = E int |log Ktilde(x)| dgamma`.
#[derive(Clone, Debug)]
pub struct MomentReport {
    pub p: f64,
    /// Estimate of ||K_T||_{L^p(P x gamma)} at the final grid time.
    pub lp_estimate: f64,
    pub lp_standard_error: f64,
    pub entropy_estimate: f64,
    pub entropy_standard_error: f64,
    /// Running sup of the L^p estimate over the dyadic checkpoint times.
    pub lambda_p_t: f64,
}

fn checkpoint_indices(steps: usize) -> Vec<usize> {
    let mut cps: Vec<usize> = (1..=8).map(|k| (k * steps).div_ceil(8)).collect();
    cps.dedup();
    cps.retain(|&k| k >= 1 && k <= steps);
    cps
}

fn duality_moment_report(
    ens: &FieldEnsemble,
    grid: TimeGrid,
    p: f64,
    n_paths: usize,
    n_initials: usize,
    seed: u64,
) -> Result<MomentReport> {
    if p <= 1.0 {
        return Err(GaussFlowError::InvalidInput(format!(
            "duality moment estimator needs p > 1, got {p}"
        )));
    }
    if n_paths == 0 || n_initials == 0 {
        return Err(GaussFlowError::InvalidInput(
            "Monte Carlo sizes must be positive".into(),
        ));
    }
    let d = ens.dim();
    let m = ens.noise_dim();
    let cps = checkpoint_indices(grid.steps());
    let initial_rng = CounterRng::new(seed, Stream::Initial, 0);

    // One row of log Ktilde checkpoints per (path, initial) sample, in
    // sample order; the reduction below is pairwise over that order.
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<f64>>> {
            let path = BrownianPath::sample(grid, m, seed, i as u64);
            let mut block = Vec::with_capacity(n_initials);
            let mut x = vec![0.0; d];
            for j in 0..n_initials {
                let sample_key = (i * n_initials + j) as u64;
                initial_rng.gaussian_point(sample_key, &mut x);
                let mut stepper = FlowStepper::new(ens, &x, &path, true)?;
                let mut row = Vec::with_capacity(cps.len());
                let mut next_cp = 0;
                for k in 0..grid.steps() {
                    stepper.advance()?;
                    if next_cp < cps.len() && k + 1 == cps[next_cp] {
                        row.push(stepper.log_tilde_k());
                        next_cp += 1;
                    }
                }
                block.push(row);
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let last = cps.len() - 1;
    let lp_vals: Vec<f64> = rows.iter().map(|r| ((1.0 - p) * r[last]).exp()).collect();
    let ent_vals: Vec<f64> = rows.iter().map(|r| r[last].abs()).collect();

    let (lp_mean, lp_mean_se) = mean_and_se(&lp_vals);
    let (ent_mean, ent_se) = mean_and_se(&ent_vals);
    let lp_estimate = lp_mean.powf(1.0 / p);
    // delta method for the 1/p power
    let lp_se = if lp_mean > 0.0 {
        lp_estimate / (p * lp_mean) * lp_mean_se
    } else {
        0.0
    };

    let mut lambda = f64::NEG_INFINITY;
    for (c, _) in cps.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().map(|r| ((1.0 - p) * r[c]).exp()).collect();
        lambda = lambda.max(pairwise_mean(&vals).powf(1.0 / p));
    }

    Ok(MomentReport {
        p,
        lp_estimate,
        lp_standard_error: lp_se,
        entropy_estimate: ent_mean,
        entropy_standard_error: ent_se,
        lambda_p_t: lambda,
    })
}

/// ||K_T||_p through the inverse-factor duality, with initial points drawn
/// from gamma_d by the seeded generator.
pub fn lp_norm_via_duality(
    ens: &FieldEnsemble,
    grid: TimeGrid,
    p: f64,
    n_paths: usize,
    n_initials: usize,
    seed: u64,
) -> Result<MomentReport> {
    duality_moment_report(ens, grid, p, n_paths, n_initials, seed)
}

/// E int K |log K| dgamma via the same sample set (the L^p fields of the
/// report are computed at p = 2).
pub fn entropy_via_duality(
    ens: &FieldEnsemble,
    grid: TimeGrid,
    n_paths: usize,
    n_initials: usize,
    seed: u64,
) -> Result<MomentReport> {
    duality_moment_report(ens, grid, 2.0, n_paths, n_initials, seed)
}

/// How the push-forward sample is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndpointMode {
    /// One fixed path (by index), an ensemble of initial points: the
    /// per-omega density of the almost-sure statements.
    PerOmega { path_index: u64 },
    /// Pool over (path, initial) pairs.
    Annealed { n_paths: usize },
}

/// Push initial gamma_d samples through the flow; returns endpoints as a
/// flat (count x d) array.
pub fn simulate_endpoints(
    ens: &FieldEnsemble,
    grid: TimeGrid,
    mode: EndpointMode,
    n_initials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = ens.dim();
    let m = ens.noise_dim();
    let initial_rng = CounterRng::new(seed, Stream::Initial, 0);
    let (n_paths, fixed_index) = match mode {
        EndpointMode::PerOmega { path_index } => (1usize, Some(path_index)),
        EndpointMode::Annealed { n_paths } => (n_paths, None),
    };
    let blocks: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let path_index = fixed_index.unwrap_or(i as u64);
            let path = BrownianPath::sample(grid, m, seed, path_index);
            let mut out = Vec::with_capacity(n_initials * d);
            let mut x = vec![0.0; d];
            for j in 0..n_initials {
                let sample_key = (i * n_initials + j) as u64;
                initial_rng.gaussian_point(sample_key, &mut x);
                let mut stepper = FlowStepper::new(ens, &x, &path, false)?;
                stepper.run()?;
                out.extend_from_slice(stepper.state());
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DensityMethod {
    Kde { bandwidth: f64 },
    InverseFlow,
}

/// Density values of the push-forward with respect to gamma_d at a set of
/// evaluation points. Excluded points (inverse-flow round trips beyond
/// tolerance) carry NaN and are counted.
#[derive(Clone, Debug)]
pub struct DensityEstimate {
    pub dim: usize,
    /// Flat (count x d) evaluation points.
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub method: DensityMethod,
    pub excluded: usize,
}

impl DensityEstimate {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
}

/// gamma_d volume of a lattice cell times the density ratio, summed: the
/// mass of the estimate over its evaluation lattice.
pub fn gamma_mass(estimate: &DensityEstimate, cell_volume: f64) -> f64 {
    let d = estimate.dim;
    let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
    let terms: Vec<f64> = (0..estimate.len())
        .filter(|&i| estimate.values[i].is_finite())
        .map(|i| {
            let y = estimate.point(i);
            estimate.values[i] * norm * (-0.5 * dot(y, y)).exp() * cell_volume
        })
        .collect();
    terms.iter().sum()
}

/// Silverman's bandwidth on the pushed-forward sample.
fn silverman_bandwidth(endpoints: &[f64], dim: usize) -> f64 {
    let n = endpoints.len() / dim;
    let mut var_sum = 0.0;
    for axis in 0..dim {
        let vals: Vec<f64> = (0..n).map(|i| endpoints[i * dim + axis]).collect();
        let mean = pairwise_mean(&vals);
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        var_sum += var;
    }
    let sigma = (var_sum / dim as f64).sqrt();
    let d = dim as f64;
    sigma * (4.0 / ((d + 2.0) * n as f64)).powf(1.0 / (d + 4.0))
}

/// Gaussian-kernel density of the endpoint sample divided by the gamma_d
/// density at each evaluation point.
pub fn pushforward_kde(
    endpoints: &[f64],
    dim: usize,
    eval_points: &[f64],
    bandwidth: Option<f64>,
) -> Result<DensityEstimate> {
    if dim == 0 || endpoints.len() % dim != 0 || eval_points.len() % dim != 0 {
        return Err(GaussFlowError::InvalidInput(
            "endpoint/eval arrays must be multiples of the dimension".into(),
        ));
    }
    let n = endpoints.len() / dim;
    if n < 100 {
        return Err(GaussFlowError::InvalidInput(format!(
            "kernel density estimation needs at least 100 samples, got {n}"
        )));
    }
    let h = bandwidth.unwrap_or_else(|| silverman_bandwidth(endpoints, dim));
    if !(h > 0.0) {
        return Err(GaussFlowError::InvalidInput(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    let count = eval_points.len() / dim;
    let values: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let y = &eval_points[i * dim..(i + 1) * dim];
            let mut acc = 0.0;
            for s in 0..n {
                let x = &endpoints[s * dim..(s + 1) * dim];
                let dist2: f64 = y
                    .iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                acc += (-dist2 / (2.0 * h * h)).exp();
            }
            // divide by n h^d and by the gamma density; the (2 pi)^{d/2}
            // factors cancel.
            acc / (n as f64 * h.powi(dim as i32)) * (0.5 * dot(y, y)).exp()
        })
        .collect();
    Ok(DensityEstimate {
        dim,
        points: eval_points.to_vec(),
        values,
        method: DensityMethod::Kde { bandwidth: h },
        excluded: 0,
    })
}

/// K_t(y) = [Ktilde_t(X_t^{-1}(y))]^{-1}: run the dual flow from y to get
/// the preimage, then the forward flow from the preimage accumulating the
/// density factor. Round trips farther than `trip_tolerance` from y are
/// flagged and excluded (NaN value).
pub fn density_via_inverse(
    ens: &FieldEnsemble,
    eval_points: &[f64],
    path: &BrownianPath,
    horizon_index: usize,
    trip_tolerance: Option<f64>,
) -> Result<DensityEstimate> {
    let d = ens.dim();
    if eval_points.len() % d != 0 {
        return Err(GaussFlowError::InvalidInput(
            "eval array must be a multiple of the dimension".into(),
        ));
    }
    let tol = trip_tolerance.unwrap_or_else(|| 10.0 * path.grid().dt().sqrt());
    let count = eval_points.len() / d;
    let results: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let y = &eval_points[i * d..(i + 1) * d];
            let dual = crate::sde::integrate_dual(ens, y, path, horizon_index)?;
            let preimage = dual.end_state();
            let mut stepper = FlowStepper::new(ens, preimage, path, true)?;
            for _ in 0..horizon_index {
                stepper.advance()?;
            }
            let residual = euclid_dist(stepper.state(), y);
            if residual > tol {
                return Ok(f64::NAN);
            }
            // K = 1 / Ktilde = exp(-log Ktilde)
            Ok((-stepper.log_tilde_k()).exp())
        })
        .collect::<Result<Vec<_>>>()?;
    let excluded = results.iter().filter(|v| !v.is_finite()).count();
    Ok(DensityEstimate {
        dim: d,
        points: eval_points.to_vec(),
        values: results,
        method: DensityMethod::InverseFlow,
        excluded,
    })
}

/// The L^p density bound
/// `[int exp(p t [2|delta(A_0)| + sum_j (|A_j|^2 + |grad A_j|^2
///   + 2(p-1)|delta(A_j)|^2)]) dgamma]^{(p-1)/(p(2p-1))}`,
/// infinite when the integral exceeds the overflow proxy.
pub fn theorem22_bound(
    ens: &FieldEnsemble,
    p: f64,
    t: f64,
    quad: &GaussianIntegrator,
) -> Result<f64> {
    if p <= 1.0 {
        return Err(GaussFlowError::InvalidInput(format!("bound needs p > 1, got {p}")));
    }
    // the exponent is (p t / (p - 1)) PhiTilde_{p-1}
    let scale = p * t / (p - 1.0);
    let integral = quad.expect(|x| {
        let pt = ens
            .phi_tilde(x, p - 1.0, DerivMode::Auto)
            .unwrap_or(f64::INFINITY);
        (scale * pt).exp()
    });
    if !integral.is_finite() || integral > OVERFLOW_PROXY {
        return Ok(f64::INFINITY);
    }
    Ok(integral.powf((p - 1.0) / (p * (2.0 * p - 1.0))))
}

/// The companion bound for the inverse factor: exponent (p+1) t with
/// coefficient 2p on |delta(A_j)|^2 and outer power 1/(2p+1).
pub fn corollary23_bound(
    ens: &FieldEnsemble,
    p: f64,
    t: f64,
    quad: &GaussianIntegrator,
) -> Result<f64> {
    if p <= 1.0 {
        return Err(GaussFlowError::InvalidInput(format!("bound needs p > 1, got {p}")));
    }
    let scale = (p + 1.0) * t / p;
    let integral = quad.expect(|x| {
        let pt = ens.phi_tilde(x, p, DerivMode::Auto).unwrap_or(f64::INFINITY);
        (scale * pt).exp()
    });
    if !integral.is_finite() || integral > OVERFLOW_PROXY {
        return Ok(f64::INFINITY);
    }
    Ok(integral.powf(1.0 / (2.0 * p + 1.0)))
}

/// Lambda_{T0}: the sixth root of
/// `int exp(4 T0 [|A_0| + e|delta(A_0)|
///   + sum_j (4|A_j|^2 + |grad A_j|^2 + 2 e^2 |delta(A_j)|^2)]) dgamma`.
pub fn lambda_t0(ens: &FieldEnsemble, t0: f64, quad: &GaussianIntegrator) -> f64 {
    let e = std::f64::consts::E;
    let integral = quad.expect(|x| {
        let mut acc = match (ens.drift().eval(x), ens.drift().gauss_divergence(x, DerivMode::Auto)) {
            (Ok(a0), Ok(d0)) => euclid_norm(&a0) + e * d0.abs(),
            _ => return f64::INFINITY,
        };
        for a in ens.diffusions() {
            let (v, jac, delta) = match (
                a.eval(x),
                a.jacobian(x, DerivMode::Auto),
                a.gauss_divergence(x, DerivMode::Auto),
            ) {
                (Ok(v), Ok(j), Ok(dl)) => (v, j, dl),
                _ => return f64::INFINITY,
            };
            let frob = jac.frobenius();
            acc += 4.0 * dot(&v, &v) + frob * frob + 2.0 * e * e * delta * delta;
        }
        (4.0 * t0 * acc).exp()
    });
    if !integral.is_finite() || integral > OVERFLOW_PROXY {
        f64::INFINITY
    } else {
        integral.powf(1.0 / 6.0)
    }
}

/// Constants and value of the entropy bound
/// `2 (C_1 T)^{1/2} Lambda_{T0} + C_2 T Lambda_{T0}^2`.
#[derive(Clone, Copy, Debug)]
pub struct BoundReport {
    pub t0: f64,
    pub lambda_t0: f64,
    pub c1: f64,
    pub c2: f64,
    /// N = ceil(T / T0), the depth of the L^(2^N) tower.
    pub levels: u32,
    pub bound: f64,
}

/// Bisect for the largest admissible T0 <= T (Lambda finite and below the
/// cap), then evaluate the L^(2^N) norms. Errors: no admissible horizon
/// down to 2^-20 (the integrability condition fails), or N > 8.
pub fn entropy_bound_thm33(
    ens: &FieldEnsemble,
    t: f64,
    quad: &GaussianIntegrator,
) -> Result<BoundReport> {
    if !(t > 0.0) {
        return Err(GaussFlowError::InvalidInput(format!("horizon must be positive, got {t}")));
    }
    let admissible = |t0: f64| -> Option<f64> {
        let l = lambda_t0(ens, t0, quad);
        (l.is_finite() && l <= LAMBDA_CAP).then_some(l)
    };
    let (t0, lam) = if let Some(l) = admissible(t) {
        (t, l)
    } else {
        let mut lo = 0.0;
        let mut hi = t;
        let mut lam_lo = None;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            match admissible(mid) {
                Some(l) => {
                    lo = mid;
                    lam_lo = Some(l);
                }
                None => hi = mid,
            }
        }
        match lam_lo {
            Some(l) if lo >= MIN_T0 => (lo, l),
            _ => {
                return Err(GaussFlowError::ConditionViolated(format!(
                    "no admissible T0 in [{MIN_T0:e}, {t}]: the exponential integrability condition fails"
                )))
            }
        }
    };

    // unique N with (N-1) T0 < T <= N T0
    let mut levels = (t / t0).ceil() as u32;
    if levels > 1 && (levels - 1) as f64 * t0 >= t {
        levels -= 1;
    }
    if levels > MAX_LEVELS {
        return Err(GaussFlowError::DeskScaleLimit {
            n: levels,
            max: MAX_LEVELS,
        });
    }
    let power = 2u32.pow(levels);
    let e = std::f64::consts::E;

    let c1 = quad
        .lp_norm_powi(power, |x| {
            let mut acc = 0.0;
            for a in ens.diffusions() {
                let v = a.eval(x).unwrap_or_else(|_| vec![f64::INFINITY]);
                let delta = a.gauss_divergence(x, DerivMode::Auto).unwrap_or(f64::INFINITY);
                acc += 2.0 * (dot(&v, &v) + e * e * delta * delta);
            }
            acc
        });
    let c2 = quad.lp_norm_powi(power, |x| {
        let a0 = ens.drift().eval(x).unwrap_or_else(|_| vec![f64::INFINITY]);
        let d0 = ens
            .drift()
            .gauss_divergence(x, DerivMode::Auto)
            .unwrap_or(f64::INFINITY);
        let mut acc = euclid_norm(&a0) + e * d0.abs();
        for a in ens.diffusions() {
            let v = a.eval(x).unwrap_or_else(|_| vec![f64::INFINITY]);
            let jac_frob = a
                .jacobian(x, DerivMode::Auto)
                .map(|j| j.frobenius())
                .unwrap_or(f64::INFINITY);
            acc += 1.5 * dot(&v, &v) + jac_frob * jac_frob;
        }
        acc
    });

    let bound = 2.0 * (c1 * t).sqrt() * lam + c2 * t * lam * lam;
    Ok(BoundReport {
        t0,
        lambda_t0: lam,
        c1,
        c2,
        levels,
        bound,
    })
}

/// The exponential integrability condition: value and finiteness flag of
/// `int exp[lambda0 (|delta(A_0)| + sum_j (|delta(A_j)|^2 + |grad A_j|^2))] dgamma`.
#[derive(Clone, Copy, Debug)]
pub struct ConditionReport {
    pub lambda0: f64,
    pub value: f64,
    pub finite: bool,
}

pub fn check_exponential_condition(
    ens: &FieldEnsemble,
    lambda0: f64,
    quad: &GaussianIntegrator,
) -> Result<ConditionReport> {
    if !(lambda0 > 0.0) {
        return Err(GaussFlowError::InvalidInput(format!(
            "lambda0 must be positive, got {lambda0}"
        )));
    }
    let value = quad.expect(|x| {
        let d0 = match ens.drift().gauss_divergence(x, DerivMode::Auto) {
            Ok(v) => v.abs(),
            Err(_) => return f64::INFINITY,
        };
        let mut acc = d0;
        for a in ens.diffusions() {
            let delta = match a.gauss_divergence(x, DerivMode::Auto) {
                Ok(v) => v,
                Err(_) => return f64::INFINITY,
            };
            let frob = match a.jacobian(x, DerivMode::Auto) {
                Ok(j) => j.frobenius(),
                Err(_) => return f64::INFINITY,
            };
            acc += delta * delta + frob * frob;
        }
        (lambda0 * acc).exp()
    });
    let finite = value.is_finite() && value <= OVERFLOW_PROXY;
    Ok(ConditionReport {
        lambda0,
        value,
        finite,
    })
}
