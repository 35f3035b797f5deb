//! The local maximal-function toolkit and the logarithmic stability
//! machinery: the G_R-restricted log-distance functional, its norm
//! bracket, and the Cauchy diagnostic for mollified coefficient families.

use rayon::prelude::*;

use crate::error::{GaussFlowError, Result};
use crate::fields::{DerivMode, FieldEnsemble, FieldSpec};
use crate::mollify::{mollify_ensemble, MollifyConfig};
use crate::numerics::{euclid_norm, mean_and_se, pairwise_mean};
use crate::quadrature::GaussianIntegrator;
use crate::rng::{CounterRng, Stream};
use crate::sde::{coupled_sup_statistics, BrownianPath, TimeGrid};

/// Pair sampling stays clear of declared singular sets by this radius.
pub const SINGULAR_EXCLUSION: f64 = 1e-6;

/// Scalar samples on the cubic lattice (k * spacing)_{|k_i| <= extent},
/// which covers the ball B(extent * spacing).
#[derive(Clone, Debug)]
pub struct SampleGrid {
    dim: usize,
    extent: i64,
    spacing: f64,
    values: Vec<f64>,
}

impl SampleGrid {
    pub fn from_scalar_fn(
        dim: usize,
        radius: f64,
        spacing: f64,
        f: impl Fn(&[f64]) -> f64 + Sync,
    ) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(GaussFlowError::InvalidInput(format!(
                "sample grids support dimensions 1..=3, got {dim}"
            )));
        }
        if !(spacing > 0.0) || !(radius >= spacing) {
            return Err(GaussFlowError::InvalidInput(format!(
                "need spacing > 0 and radius >= spacing, got ({radius}, {spacing})"
            )));
        }
        let extent = (radius / spacing + 1e-9).floor() as i64;
        let side = (2 * extent + 1) as usize;
        let count = side.pow(dim as u32);
        let values: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|linear| {
                let mut x = [0.0f64; 3];
                decode(linear, dim, extent, &mut x);
                for v in x.iter_mut().take(dim) {
                    *v *= spacing;
                }
                f(&x[..dim])
            })
            .collect();
        Ok(SampleGrid {
            dim,
            extent,
            spacing,
            values,
        })
    }

    /// Frobenius norm of the field Jacobian on the lattice, analytic where
    /// available and central differences elsewhere (the integrable
    /// singularities of the built-in families stay finite this way).
    pub fn from_gradient_norm(spec: &FieldSpec, radius: f64, spacing: f64) -> Result<Self> {
        Self::from_scalar_fn(spec.dim(), radius, spacing, |x| {
            spec.jacobian(x, DerivMode::Auto)
                .map(|j| j.frobenius())
                .unwrap_or(f64::NAN)
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Realized box radius extent * spacing.
    pub fn radius(&self) -> f64 {
        self.extent as f64 * self.spacing
    }

    pub fn extent(&self) -> i64 {
        self.extent
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, linear: usize) -> f64 {
        self.values[linear]
    }

    pub fn point(&self, linear: usize) -> Vec<f64> {
        let mut x = [0.0f64; 3];
        decode(linear, self.dim, self.extent, &mut x);
        let mut out = x[..self.dim].to_vec();
        for v in &mut out {
            *v *= self.spacing;
        }
        out
    }

    fn lattice_coords(&self, linear: usize) -> [i64; 3] {
        let side = (2 * self.extent + 1) as usize;
        let mut rem = linear;
        let mut out = [0i64; 3];
        for slot in out.iter_mut().take(self.dim) {
            *slot = (rem % side) as i64 - self.extent;
            rem /= side;
        }
        out
    }

    fn linear_index(&self, coords: &[i64]) -> usize {
        let side = (2 * self.extent + 1) as usize;
        let mut acc = 0usize;
        let mut stride = 1usize;
        for &c in coords.iter().take(self.dim) {
            acc += (c + self.extent) as usize * stride;
            stride *= side;
        }
        acc
    }
}

fn decode(linear: usize, dim: usize, extent: i64, out: &mut [f64; 3]) {
    let side = (2 * extent + 1) as usize;
    let mut rem = linear;
    for slot in out.iter_mut().take(dim) {
        *slot = ((rem % side) as i64 - extent) as f64;
        rem /= side;
    }
}

/// M_R f on the lattice interior (points whose R-ball lies inside the
/// sampled box): the discrete sup over radii {dx, 2dx, ..., R} of lattice
/// ball averages of |f|. Non-interior points carry NaN.
#[derive(Clone, Debug)]
pub struct MaximalField {
    pub radius: f64,
    dim: usize,
    extent: i64,
    spacing: f64,
    values: Vec<f64>,
}

impl MaximalField {
    pub fn value(&self, linear: usize) -> f64 {
        self.values[linear]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_interior(&self, linear: usize) -> bool {
        self.values[linear].is_finite()
    }

    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i].is_finite())
            .collect()
    }

    pub fn point(&self, linear: usize) -> Vec<f64> {
        let side = (2 * self.extent + 1) as usize;
        let mut rem = linear;
        let mut out = vec![0.0; self.dim];
        for slot in out.iter_mut() {
            *slot = ((rem % side) as i64 - self.extent) as f64 * self.spacing;
            rem /= side;
        }
        out
    }
}

/// Integer offsets grouped into shells: shell k holds offsets whose
/// Euclidean lattice norm lies in (k-1, k], so ball k is the union of
/// shells 1..=k. The zero offset sits in shell 1.
fn shell_offsets(dim: usize, max_k: usize) -> Vec<Vec<Vec<i64>>> {
    let mut shells = vec![Vec::new(); max_k];
    let bound = max_k as i64;
    let mut coords = vec![-bound; dim];
    loop {
        let norm2: i64 = coords.iter().map(|c| c * c).sum();
        let norm = (norm2 as f64).sqrt();
        if norm <= max_k as f64 + 1e-12 {
            let k = if norm2 == 0 { 1 } else { norm.ceil() as usize };
            if k <= max_k {
                shells[k - 1].push(coords.clone());
            }
        }
        let mut axis = 0;
        loop {
            if axis == dim {
                return shells;
            }
            coords[axis] += 1;
            if coords[axis] <= bound {
                break;
            }
            coords[axis] = -bound;
            axis += 1;
        }
    }
}

/// Discrete local maximal function over radii {dx, 2dx, ..., R}.
pub fn maximal_function(grid: &SampleGrid, radius: f64) -> Result<MaximalField> {
    let dx = grid.spacing();
    if radius < dx {
        return Err(GaussFlowError::InvalidInput(format!(
            "maximal radius {radius} is below the lattice spacing {dx}"
        )));
    }
    if radius > grid.radius() - dx + 1e-12 {
        return Err(GaussFlowError::InvalidInput(format!(
            "maximal radius {radius} too large for the sampled box of radius {}",
            grid.radius()
        )));
    }
    let max_k = (radius / dx + 1e-9).floor() as usize;
    let shells = shell_offsets(grid.dim(), max_k);
    let interior_extent = ((grid.radius() - radius) / dx + 1e-9).floor() as i64;

    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|linear| {
            let coords = grid.lattice_coords(linear);
            if coords
                .iter()
                .take(grid.dim())
                .any(|c| c.abs() > interior_extent)
            {
                return f64::NAN;
            }
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut best = f64::NEG_INFINITY;
            let mut neighbor = [0i64; 3];
            for shell in &shells {
                for offset in shell {
                    for i in 0..grid.dim() {
                        neighbor[i] = coords[i] + offset[i];
                    }
                    sum += grid.value(grid.linear_index(&neighbor[..grid.dim()])).abs();
                    count += 1;
                }
                if count > 0 {
                    best = best.max(sum / count as f64);
                }
            }
            best
        })
        .collect();

    Ok(MaximalField {
        radius,
        dim: grid.dim(),
        extent: grid.extent(),
        spacing: dx,
        values,
    })
}

/// Ratio of lattice sums `int_{B(r)} (M_R f)^p dx / int_{B(r+R)} |f|^p dx`
/// (the Lebesgue cell volumes cancel).
pub fn maximal_lp_ratio(grid: &SampleGrid, radius: f64, p: f64, r: f64) -> Result<f64> {
    if p <= 1.0 {
        return Err(GaussFlowError::InvalidInput(format!("needs p > 1, got {p}")));
    }
    if r + radius > grid.radius() + 1e-12 {
        return Err(GaussFlowError::InvalidInput(format!(
            "B(r + R) with r = {r}, R = {radius} exceeds the sampled box of radius {}",
            grid.radius()
        )));
    }
    let maximal = maximal_function(grid, radius)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for linear in 0..grid.len() {
        let x = grid.point(linear);
        let norm = euclid_norm(&x);
        if norm <= r && maximal.is_interior(linear) {
            num += maximal.value(linear).powf(p);
        }
        if norm <= r + radius {
            den += grid.value(linear).abs().powf(p);
        }
    }
    if den == 0.0 {
        return Err(GaussFlowError::InvalidInput(
            "denominator vanishes: |f| is zero on the outer ball".into(),
        ));
    }
    Ok(num / den)
}

/// Statistics of |f(x) - f(y)| / (|x - y| (M_R|grad f|(x) + M_R|grad f|(y)))
/// over sampled interior pairs with |x - y| <= R.
#[derive(Clone, Copy, Debug)]
pub struct RatioStats {
    pub max: f64,
    pub p99: f64,
    pub pairs: usize,
    /// Pairs with vanishing denominator but nonzero numerator; these live
    /// on the singular set and should not occur off it.
    pub degenerate: usize,
}

pub fn lusin_lipschitz_ratio(
    spec: &FieldSpec,
    radius: f64,
    spacing: f64,
    max_r: f64,
    pair_count: usize,
    seed: u64,
) -> Result<RatioStats> {
    let grad = SampleGrid::from_gradient_norm(spec, radius, spacing)?;
    let maximal = maximal_function(&grad, max_r)?;
    let interior = maximal.interior_indices();
    if interior.len() < 2 {
        return Err(GaussFlowError::InvalidInput(
            "no interior lattice points: enlarge the box or shrink R".into(),
        ));
    }
    let rng = CounterRng::new(seed, Stream::Pairs, 0);
    let mut ratios = Vec::with_capacity(pair_count);
    let mut degenerate = 0usize;
    let mut attempts = 0u64;
    let max_attempts = 200 * pair_count as u64 + 1000;
    while ratios.len() < pair_count && attempts < max_attempts {
        let ia = interior[(rng.word(2 * attempts) % interior.len() as u64) as usize];
        let ib = interior[(rng.word(2 * attempts + 1) % interior.len() as u64) as usize];
        attempts += 1;
        if ia == ib {
            continue;
        }
        let xa = maximal.point(ia);
        let xb = maximal.point(ib);
        if euclid_norm(&xa) <= SINGULAR_EXCLUSION || euclid_norm(&xb) <= SINGULAR_EXCLUSION {
            continue;
        }
        let dist = euclid_norm(&xa.iter().zip(&xb).map(|(a, b)| a - b).collect::<Vec<_>>());
        if dist > max_r || dist == 0.0 {
            continue;
        }
        let fa = spec.eval(&xa)?;
        let fb = spec.eval(&xb)?;
        let num = euclid_norm(&fa.iter().zip(&fb).map(|(a, b)| a - b).collect::<Vec<_>>());
        let den = dist * (maximal.value(ia) + maximal.value(ib));
        if den == 0.0 {
            if num == 0.0 {
                ratios.push(0.0);
            } else {
                degenerate += 1;
            }
            continue;
        }
        ratios.push(num / den);
    }
    if ratios.is_empty() {
        return Err(GaussFlowError::InvalidInput(
            "pair sampling produced no admissible pairs".into(),
        ));
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let p99_idx = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    Ok(RatioStats {
        max: *sorted.last().unwrap(),
        p99: sorted[p99_idx],
        pairs: ratios.len(),
        degenerate,
    })
}

/// Monte Carlo and quadrature inputs for the stability functional.
#[derive(Clone, Copy, Debug)]
pub struct StabilityParams {
    pub sigma: f64,
    /// Trajectories must stay in B(R) to count (the G_R membership).
    pub ball_radius: f64,
    /// Norm index q > 1; p is its conjugate.
    pub q: f64,
    /// Exponent of the sup-distance moment carried along.
    pub alpha: f64,
    pub n_paths: usize,
    pub n_initials: usize,
    pub seed: u64,
    /// Monte Carlo sizes for the Lambda_{p,T} duality runs.
    pub lambda_paths: usize,
    pub lambda_initials: usize,
    pub quad_order: usize,
}

impl StabilityParams {
    pub fn new(sigma: f64, ball_radius: f64, n_paths: usize, n_initials: usize, seed: u64) -> Self {
        StabilityParams {
            sigma,
            ball_radius,
            q: 2.0,
            alpha: 2.0,
            n_paths,
            n_initials,
            seed,
            lambda_paths: 256,
            lambda_initials: 8,
            quad_order: 32,
        }
    }
}

/// The estimated log-distance functional with its right-hand-side bracket.
#[derive(Clone, Copy, Debug)]
pub struct StabilityReport {
    pub sigma: f64,
    pub ball_radius: f64,
    pub horizon: f64,
    pub q: f64,
    /// E int_{G_R} log(sup |X - X_hat|^2 / sigma^2 + 1) dgamma.
    pub lhs: f64,
    pub lhs_standard_error: f64,
    /// gamma-mass of the membership set G_R.
    pub gr_mass: f64,
    /// ||grad A_0||_{L^q} + (sum ||grad A_i||^2_{L^{2q}})^{1/2}
    ///   + sum ||grad A_i||^2_{L^{2q}}.
    pub gradient_terms: f64,
    /// sigma^{-2} sum ||A_i - A_hat_i||^2_{L^{2q}}.
    pub sigma2_group: f64,
    /// sigma^{-1} [||A_0 - A_hat_0||_{L^q} + (sum ||A_i - A_hat_i||^2_{L^{2q}})^{1/2}].
    pub sigma1_group: f64,
    /// sup over checkpoint times of the two L^p density norms.
    pub lambda_p_t: f64,
    /// lhs / (Lambda * bracket sum): the empirical stand-in for the
    /// unspecified constants, reported rather than asserted.
    pub fitted_constant: f64,
    pub alpha: f64,
    /// E int sup_t |X - X_hat|^alpha dgamma over the full sample.
    pub alpha_moment: f64,
}

/// Estimate the log-distance functional of a coupled pair and assemble the
/// right-hand-side norm bracket by gamma-quadrature.
pub fn log_distance_functional(
    ens_a: &FieldEnsemble,
    ens_b: &FieldEnsemble,
    grid: TimeGrid,
    params: &StabilityParams,
) -> Result<StabilityReport> {
    if !(params.sigma > 0.0) || !(params.ball_radius > 0.0) {
        return Err(GaussFlowError::InvalidInput(
            "sigma and ball radius must be positive".into(),
        ));
    }
    if !(params.q > 1.0) {
        return Err(GaussFlowError::InvalidInput(format!(
            "q must exceed 1, got {}",
            params.q
        )));
    }
    let d = ens_a.dim();
    let m = ens_a.noise_dim();
    let sigma2 = params.sigma * params.sigma;
    let initial_rng = CounterRng::new(params.seed, Stream::Initial, 0);

    // (log term, membership, alpha moment) per (path, initial) sample
    let rows: Vec<(f64, f64, f64)> = (0..params.n_paths)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64, f64)>> {
            let path = BrownianPath::sample(grid, m, params.seed, i as u64);
            let mut block = Vec::with_capacity(params.n_initials);
            let mut x = vec![0.0; d];
            for j in 0..params.n_initials {
                let key = (i * params.n_initials + j) as u64;
                initial_rng.gaussian_point(key, &mut x);
                let stats = coupled_sup_statistics(ens_a, ens_b, &x, &path)?;
                let member = stats.sup_norm_a <= params.ball_radius
                    && stats.sup_norm_b <= params.ball_radius;
                let log_term = if member {
                    (stats.sup_distance * stats.sup_distance / sigma2).ln_1p()
                } else {
                    0.0
                };
                block.push((
                    log_term,
                    member as u8 as f64,
                    stats.sup_distance.powf(params.alpha),
                ));
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let log_terms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let members: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let moments: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let (lhs, lhs_se) = mean_and_se(&log_terms);
    let gr_mass = pairwise_mean(&members);
    let alpha_moment = pairwise_mean(&moments);

    // Norm bracket by quadrature.
    let quad = GaussianIntegrator::new(d, params.quad_order, 1 << 14, params.seed);
    let q = params.q;
    let frob = |spec: &FieldSpec, x: &[f64]| -> f64 {
        spec.jacobian(x, DerivMode::Auto)
            .map(|j| j.frobenius())
            .unwrap_or(f64::INFINITY)
    };
    let grad_a0 = quad.lq_norm(q, |x| frob(ens_a.drift(), x));
    let mut sum_grad_sq = 0.0;
    for a in ens_a.diffusions() {
        sum_grad_sq += quad.lq_norm(2.0 * q, |x| frob(a, x)).powi(2);
    }
    let gradient_terms = grad_a0 + sum_grad_sq.sqrt() + sum_grad_sq;

    let diff_norm = |a: &FieldSpec, b: &FieldSpec, order: f64| -> f64 {
        quad.lq_norm(order, |x| {
            let va = a.eval(x).unwrap_or_else(|_| vec![f64::INFINITY]);
            let vb = b.eval(x).unwrap_or_else(|_| vec![f64::INFINITY]);
            euclid_norm(&va.iter().zip(&vb).map(|(p, r)| p - r).collect::<Vec<_>>())
        })
    };
    let mut sum_diff_sq = 0.0;
    for (a, b) in ens_a.diffusions().iter().zip(ens_b.diffusions()) {
        sum_diff_sq += diff_norm(a, b, 2.0 * q).powi(2);
    }
    let drift_diff = diff_norm(ens_a.drift(), ens_b.drift(), q);
    let sigma2_group = sum_diff_sq / sigma2;
    let sigma1_group = (drift_diff + sum_diff_sq.sqrt()) / params.sigma;

    // Lambda_{p,T} with p conjugate to q, over both ensembles.
    let p = q / (q - 1.0);
    let rep_a = crate::density::lp_norm_via_duality(
        ens_a,
        grid,
        p,
        params.lambda_paths,
        params.lambda_initials,
        params.seed ^ 0x5eed_1a3b,
    )?;
    let rep_b = crate::density::lp_norm_via_duality(
        ens_b,
        grid,
        p,
        params.lambda_paths,
        params.lambda_initials,
        params.seed ^ 0x5eed_1a3b,
    )?;
    let lambda_p_t = rep_a.lambda_p_t.max(rep_b.lambda_p_t);

    let bracket = gradient_terms + sigma2_group + sigma1_group;
    let fitted_constant = if bracket > 0.0 && lambda_p_t > 0.0 {
        lhs / (lambda_p_t * bracket)
    } else {
        f64::NAN
    };

    Ok(StabilityReport {
        sigma: params.sigma,
        ball_radius: params.ball_radius,
        horizon: grid.horizon(),
        q,
        lhs,
        lhs_standard_error: lhs_se,
        gr_mass,
        gradient_terms,
        sigma2_group,
        sigma1_group,
        lambda_p_t,
        fitted_constant,
        alpha: params.alpha,
        alpha_moment,
    })
}

/// One entry of the mollified-family Cauchy table.
#[derive(Clone, Debug)]
pub struct CauchyDiagnostic {
    pub n: u32,
    pub k: u32,
    /// sigma_{n,k} = ||A_0^n - A_0^k||_{L^q}
    ///   + (sum_i ||A_i^n - A_i^k||^2_{L^{2q}})^{1/2}.
    pub sigma_nk: f64,
    /// The log-distance functional at sigma = sigma_{n,k}.
    pub log_functional: f64,
    pub alpha: f64,
    /// E int sup_t |X^n - X^k|^alpha dgamma.
    pub alpha_moment: f64,
    pub report: StabilityReport,
}

/// Build A^{1/n} and A^{1/k}, measure their distance sigma_{n,k} by
/// quadrature, and run the log-distance functional with that sigma.
pub fn cauchy_diagnostic(
    base: &FieldEnsemble,
    n: u32,
    k: u32,
    grid: TimeGrid,
    params: &StabilityParams,
    mollify_quad_order: usize,
) -> Result<CauchyDiagnostic> {
    if n == k {
        return Err(GaussFlowError::InvalidInput(
            "the Cauchy pair needs distinct indices".into(),
        ));
    }
    if n < 2 || k < 2 {
        return Err(GaussFlowError::InvalidInput(
            "mollification indices must be >= 2".into(),
        ));
    }
    let cfg_n = MollifyConfig::one_over(n)?.with_quad_order(mollify_quad_order);
    let cfg_k = MollifyConfig::one_over(k)?.with_quad_order(mollify_quad_order);
    let ens_n = mollify_ensemble(base, &cfg_n)?;
    let ens_k = mollify_ensemble(base, &cfg_k)?;

    let d = base.dim();
    let quad = GaussianIntegrator::new(d, params.quad_order, 1 << 14, params.seed);
    let q = params.q;
    let diff_norm = |a: &FieldSpec, b: &FieldSpec, order: f64| -> f64 {
        quad.lq_norm(order, |x| {
            let va = a.eval(x).unwrap_or_else(|_| vec![f64::INFINITY]);
            let vb = b.eval(x).unwrap_or_else(|_| vec![f64::INFINITY]);
            euclid_norm(&va.iter().zip(&vb).map(|(p, r)| p - r).collect::<Vec<_>>())
        })
    };
    let mut sum_sq = 0.0;
    for (a, b) in ens_n.diffusions().iter().zip(ens_k.diffusions()) {
        sum_sq += diff_norm(a, b, 2.0 * q).powi(2);
    }
    let sigma_nk = (diff_norm(ens_n.drift(), ens_k.drift(), q) + sum_sq.sqrt())
        .max(f64::MIN_POSITIVE);

    let mut run = *params;
    run.sigma = sigma_nk;
    let report = log_distance_functional(&ens_n, &ens_k, grid, &run)?;
    Ok(CauchyDiagnostic {
        n,
        k,
        sigma_nk,
        log_functional: report.lhs,
        alpha: report.alpha,
        alpha_moment: report.alpha_moment,
        report,
    })
}
