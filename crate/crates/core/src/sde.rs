//! Time grids, Brownian paths, Euler-Maruyama integration of the flow
//! equation, common-noise coupling, and the dual (inverse) flow.
//!
//! One scheme drives everything: explicit Euler-Maruyama on the Ito form.
//! Stratonovich dynamics are handled by converting the drift, and the dual
//! flow runs the same stepper on time-reversed increments, so there is a
//! single source of discretisation bias.

use crate::error::{GaussFlowError, Result};
use crate::fields::{DerivMode, FieldEnsemble};
use crate::numerics::{euclid_dist, euclid_norm};
use crate::rng::{CounterRng, Stream};

/// Abort threshold for the state norm. Linear-growth coefficients cannot
/// reach it; hitting it signals a misconfigured custom field.
pub const BLOW_UP_GUARD: f64 = 1e12;

/// A uniform grid storing (dt, steps); the realized horizon is exactly
/// `dt * steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(GaussFlowError::InvalidInput(format!(
                "time grid needs horizon > 0 and steps >= 1, got ({horizon}, {steps})"
            )));
        }
        Ok(TimeGrid {
            dt: horizon / steps as f64,
            steps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }
}

/// Discretised driving noise: an N x m matrix of increments, each entry a
/// pure function of (seed, path index, step, component).
#[derive(Clone, Debug)]
pub struct BrownianPath {
    increments: Vec<f64>,
    grid: TimeGrid,
    noise_dim: usize,
    seed: u64,
    path_index: u64,
}

impl BrownianPath {
    /// Draw a path from the counter-based generator. Identical inputs
    /// reproduce bit-identical increments.
    pub fn sample(grid: TimeGrid, noise_dim: usize, seed: u64, path_index: u64) -> Self {
        let rng = CounterRng::new(seed, Stream::Brownian, path_index);
        let sqrt_dt = grid.dt().sqrt();
        let n = grid.steps();
        let mut increments = vec![0.0; n * noise_dim];
        for (idx, slot) in increments.iter_mut().enumerate() {
            *slot = sqrt_dt * rng.normal(idx as u64);
        }
        BrownianPath {
            increments,
            grid,
            noise_dim,
            seed,
            path_index,
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn seed_lineage(&self) -> (u64, u64) {
        (self.seed, self.path_index)
    }

    /// Increments of step k, one entry per noise component.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.noise_dim..(k + 1) * self.noise_dim]
    }

    /// Total displacement w_T per component.
    pub fn total(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.noise_dim];
        for k in 0..self.grid.steps() {
            for (a, dw) in acc.iter_mut().zip(self.increment(k)) {
                *a += dw;
            }
        }
        acc
    }

    /// Block-sum the increments to a coarser grid; the coarse path is the
    /// restriction of the same Brownian path, which is what strong
    /// convergence studies need.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        if factor == 0 || self.grid.steps() % factor != 0 {
            return Err(GaussFlowError::InvalidInput(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.grid.steps()
            )));
        }
        let coarse_steps = self.grid.steps() / factor;
        let m = self.noise_dim;
        let mut increments = vec![0.0; coarse_steps * m];
        for k in 0..coarse_steps {
            for sub in 0..factor {
                let fine = self.increment(k * factor + sub);
                for j in 0..m {
                    increments[k * m + j] += fine[j];
                }
            }
        }
        Ok(BrownianPath {
            increments,
            grid: TimeGrid {
                dt: self.grid.dt() * factor as f64,
                steps: coarse_steps,
            },
            noise_dim: m,
            seed: self.seed,
            path_index: self.path_index,
        })
    }

    /// The shifted path theta_{t_k0} w, i.e. increments from step k0 on.
    pub fn shifted(&self, k0: usize) -> Result<BrownianPath> {
        if k0 > self.grid.steps() {
            return Err(GaussFlowError::InvalidInput(format!(
                "shift index {k0} beyond {} steps",
                self.grid.steps()
            )));
        }
        Ok(BrownianPath {
            increments: self.increments[k0 * self.noise_dim..].to_vec(),
            grid: TimeGrid {
                dt: self.grid.dt(),
                steps: self.grid.steps() - k0,
            },
            noise_dim: self.noise_dim,
            seed: self.seed,
            path_index: self.path_index,
        })
    }
}

/// The reversed driving noise for the dual flow over [0, t_K]: the derived
/// increments are the negated reversal of the forward ones,
/// `dw_hat_k = -dw_{K-1-k}`.
#[derive(Clone, Debug)]
pub struct DualPath {
    reversed: BrownianPath,
    horizon_index: usize,
}

impl DualPath {
    pub fn new(forward: &BrownianPath, horizon_index: usize) -> Result<Self> {
        let n = forward.grid().steps();
        if horizon_index == 0 || horizon_index > n {
            return Err(GaussFlowError::InvalidInput(format!(
                "dual horizon index {horizon_index} must lie in 1..={n}"
            )));
        }
        let m = forward.noise_dim();
        let mut increments = vec![0.0; horizon_index * m];
        for k in 0..horizon_index {
            let src = forward.increment(horizon_index - 1 - k);
            for j in 0..m {
                increments[k * m + j] = -src[j];
            }
        }
        Ok(DualPath {
            reversed: BrownianPath {
                increments,
                grid: TimeGrid {
                    dt: forward.grid().dt(),
                    steps: horizon_index,
                },
                noise_dim: m,
                seed: forward.seed,
                path_index: forward.path_index,
            },
            horizon_index,
        })
    }

    pub fn reversed(&self) -> &BrownianPath {
        &self.reversed
    }

    pub fn horizon_index(&self) -> usize {
        self.horizon_index
    }
}

/// The flow state along a grid, with optional along-path accumulators for
/// the pathwise density: the Ito sum `sum_j int delta(A_j)(X) dw^j` and the
/// Riemann sum `int Phi(X) ds`, both left-point.
#[derive(Clone, Debug)]
pub struct Trajectory {
    states: Vec<f64>,
    dim: usize,
    grid: TimeGrid,
    ito_cumsum: Option<Vec<f64>>,
    phi_cumsum: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn initial(&self) -> &[f64] {
        self.state(0)
    }

    pub fn end_state(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    pub fn sup_norm(&self) -> f64 {
        (0..=self.grid.steps())
            .map(|k| euclid_norm(self.state(k)))
            .fold(0.0, f64::max)
    }

    pub fn has_density_accumulators(&self) -> bool {
        self.ito_cumsum.is_some()
    }

    pub fn ito_cumsum(&self) -> Option<&[f64]> {
        self.ito_cumsum.as_deref()
    }

    pub fn phi_cumsum(&self) -> Option<&[f64]> {
        self.phi_cumsum.as_deref()
    }
}

/// Single-trajectory Euler-Maruyama stepper with reusable buffers.
/// `X_{k+1} = X_k + sum_j A_j(X_k) dw_k^j + A_0(X_k) h`; when density
/// accumulation is on, the Ito and Riemann sums are advanced with the
/// left-point rule before each state update.
pub struct FlowStepper<'a> {
    ens: &'a FieldEnsemble,
    path: &'a BrownianPath,
    state: Vec<f64>,
    next: Vec<f64>,
    field_buf: Vec<f64>,
    k: usize,
    ito: f64,
    phi: f64,
    accumulate: bool,
    /// Negate the drift (dual flow).
    negate_drift: bool,
    use_dual_drift: bool,
}

impl<'a> FlowStepper<'a> {
    pub fn new(
        ens: &'a FieldEnsemble,
        x: &[f64],
        path: &'a BrownianPath,
        accumulate: bool,
    ) -> Result<Self> {
        Self::with_mode(ens, x, path, accumulate, false, false)
    }

    fn with_mode(
        ens: &'a FieldEnsemble,
        x: &[f64],
        path: &'a BrownianPath,
        accumulate: bool,
        negate_drift: bool,
        use_dual_drift: bool,
    ) -> Result<Self> {
        if x.len() != ens.dim() {
            return Err(GaussFlowError::dim(ens.dim(), x.len()));
        }
        if path.noise_dim() != ens.noise_dim() {
            return Err(GaussFlowError::dim(ens.noise_dim(), path.noise_dim()));
        }
        Ok(FlowStepper {
            ens,
            path,
            state: x.to_vec(),
            next: vec![0.0; x.len()],
            field_buf: vec![0.0; x.len()],
            k: 0,
            ito: 0.0,
            phi: 0.0,
            accumulate,
            negate_drift,
            use_dual_drift,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn ito_sum(&self) -> f64 {
        self.ito
    }

    pub fn phi_sum(&self) -> f64 {
        self.phi
    }

    /// log K~ at the current time (zero until the first step).
    pub fn log_tilde_k(&self) -> f64 {
        -(self.ito + self.phi)
    }

    pub fn advance(&mut self) -> Result<()> {
        let k = self.k;
        debug_assert!(k < self.path.grid().steps());
        let d = self.state.len();
        let h = self.path.grid().dt();
        let dw = self.path.increment(k);

        if self.accumulate {
            let mut ito_step = 0.0;
            for (j, dwj) in dw.iter().enumerate() {
                ito_step +=
                    self.ens.diffusion(j).gauss_divergence(&self.state, DerivMode::Auto)? * dwj;
            }
            self.ito += ito_step;
            self.phi += self.ens.phi_functional(&self.state, DerivMode::Auto)? * h;
        }

        // drift term
        if self.use_dual_drift {
            let drift = self.ens.dual_drift(&self.state, DerivMode::Auto)?;
            for i in 0..d {
                self.next[i] = self.state[i] - drift[i] * h;
            }
        } else {
            self.ens.drift().eval_into(&self.state, &mut self.field_buf)?;
            let sign = if self.negate_drift { -1.0 } else { 1.0 };
            for i in 0..d {
                self.next[i] = self.state[i] + sign * self.field_buf[i] * h;
            }
        }
        // diffusion terms
        for (j, dwj) in dw.iter().enumerate() {
            self.ens
                .diffusion(j)
                .eval_into(&self.state, &mut self.field_buf)?;
            for i in 0..d {
                self.next[i] += self.field_buf[i] * dwj;
            }
        }

        let norm = euclid_norm(&self.next);
        if !norm.is_finite() || norm > BLOW_UP_GUARD {
            return Err(GaussFlowError::BlowUp {
                step: k,
                guard: BLOW_UP_GUARD,
            });
        }
        std::mem::swap(&mut self.state, &mut self.next);
        self.k += 1;
        Ok(())
    }

    /// Run the stepper to the end of the path.
    pub fn run(&mut self) -> Result<()> {
        while self.k < self.path.grid().steps() {
            self.advance()?;
        }
        Ok(())
    }
}

/// Integrate the flow from `x`, storing all grid states.
pub fn integrate_flow(
    ens: &FieldEnsemble,
    x: &[f64],
    path: &BrownianPath,
    accumulate_density: bool,
) -> Result<Trajectory> {
    let n = path.grid().steps();
    let d = ens.dim();
    let mut stepper = FlowStepper::new(ens, x, path, accumulate_density)?;
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x);
    let mut ito = accumulate_density.then(|| {
        let mut v = Vec::with_capacity(n + 1);
        v.push(0.0);
        v
    });
    let mut phi = accumulate_density.then(|| {
        let mut v = Vec::with_capacity(n + 1);
        v.push(0.0);
        v
    });
    for _ in 0..n {
        stepper.advance()?;
        states.extend_from_slice(stepper.state());
        if let Some(v) = ito.as_mut() {
            v.push(stepper.ito_sum());
        }
        if let Some(v) = phi.as_mut() {
            v.push(stepper.phi_sum());
        }
    }
    Ok(Trajectory {
        states,
        dim: d,
        grid: path.grid(),
        ito_cumsum: ito,
        phi_cumsum: phi,
    })
}

/// Two ensembles driven by the same Brownian increments.
pub fn integrate_coupled(
    ens_a: &FieldEnsemble,
    ens_b: &FieldEnsemble,
    x: &[f64],
    path: &BrownianPath,
) -> Result<(Trajectory, Trajectory)> {
    if ens_a.dim() != ens_b.dim() || ens_a.noise_dim() != ens_b.noise_dim() {
        return Err(GaussFlowError::InvalidInput(
            "coupled ensembles must share (d, m)".into(),
        ));
    }
    Ok((
        integrate_flow(ens_a, x, path, false)?,
        integrate_flow(ens_b, x, path, false)?,
    ))
}

/// Streaming statistics of a coupled pair: discrete sup of the distance and
/// of the two state norms over the grid. Avoids storing trajectories in
/// large Monte Carlo loops.
#[derive(Clone, Copy, Debug)]
pub struct CoupledSupStats {
    pub sup_distance: f64,
    pub sup_norm_a: f64,
    pub sup_norm_b: f64,
}

pub fn coupled_sup_statistics(
    ens_a: &FieldEnsemble,
    ens_b: &FieldEnsemble,
    x: &[f64],
    path: &BrownianPath,
) -> Result<CoupledSupStats> {
    if ens_a.dim() != ens_b.dim() || ens_a.noise_dim() != ens_b.noise_dim() {
        return Err(GaussFlowError::InvalidInput(
            "coupled ensembles must share (d, m)".into(),
        ));
    }
    let mut a = FlowStepper::new(ens_a, x, path, false)?;
    let mut b = FlowStepper::new(ens_b, x, path, false)?;
    let mut stats = CoupledSupStats {
        sup_distance: 0.0,
        sup_norm_a: euclid_norm(x),
        sup_norm_b: euclid_norm(x),
    };
    for _ in 0..path.grid().steps() {
        a.advance()?;
        b.advance()?;
        stats.sup_distance = stats.sup_distance.max(euclid_dist(a.state(), b.state()));
        stats.sup_norm_a = stats.sup_norm_a.max(euclid_norm(a.state()));
        stats.sup_norm_b = stats.sup_norm_b.max(euclid_norm(b.state()));
    }
    Ok(stats)
}

/// Integrate the dual flow `dY = sum_j A_j(Y) dw_hat^j - A_hat_0(Y) ds` over
/// [0, t_K] with reversed increments; the endpoint approximates the inverse
/// flow X_{t_K}^{-1}(x).
pub fn integrate_dual(
    ens: &FieldEnsemble,
    x: &[f64],
    path: &BrownianPath,
    horizon_index: usize,
) -> Result<Trajectory> {
    let dual = DualPath::new(path, horizon_index)?;
    let n = dual.reversed().grid().steps();
    let d = ens.dim();
    let mut stepper = FlowStepper::with_mode(ens, x, dual.reversed(), false, false, true)?;
    let mut states = Vec::with_capacity((n + 1) * d);
    states.extend_from_slice(x);
    for _ in 0..n {
        stepper.advance()?;
        states.extend_from_slice(stepper.state());
    }
    Ok(Trajectory {
        states,
        dim: d,
        grid: dual.reversed().grid(),
        ito_cumsum: None,
        phi_cumsum: None,
    })
}

/// The flow-property residual
/// `|X_{s+t}(x) - X_t(theta_s w, X_s(x))|` on grid times. The Euler
/// recursion is literally the composition, so this is zero to rounding.
pub fn flow_composition_residual(
    ens: &FieldEnsemble,
    x: &[f64],
    path: &BrownianPath,
    s_index: usize,
    t_index: usize,
) -> Result<f64> {
    let n = path.grid().steps();
    if s_index + t_index > n {
        return Err(GaussFlowError::InvalidInput(format!(
            "split ({s_index}, {t_index}) exceeds {n} grid steps"
        )));
    }
    let mut direct = FlowStepper::new(ens, x, path, false)?;
    for _ in 0..s_index + t_index {
        direct.advance()?;
    }

    let mut first = FlowStepper::new(ens, x, path, false)?;
    for _ in 0..s_index {
        first.advance()?;
    }
    let mid = first.state().to_vec();
    let shifted = path.shifted(s_index)?;
    let mut second = FlowStepper::new(ens, &mid, &shifted, false)?;
    for _ in 0..t_index {
        second.advance()?;
    }
    Ok(euclid_dist(direct.state(), second.state()))
}
