//! Ornstein-Uhlenbeck smoothing `P_eps`, smooth cutoffs `phi_eps`, and the
//! mollified coefficient family `A^eps = phi_eps P_eps A`.
//!
//! `P_eps A(x) = E[ A(e^{-eps} x + sqrt(1 - e^{-2 eps}) Y) ]` with Y standard
//! Gaussian, evaluated by tensor Gauss-Hermite quadrature for d <= 3 and by
//! seeded Monte Carlo above that, so mollified fields are deterministic
//! functions of their config.

use nalgebra::DMatrix;

use crate::error::{GaussFlowError, Result};
use crate::fields::{DerivMode, FieldEnsemble, FieldSpec};
use crate::numerics::{dot, euclid_norm, fd_step};
use crate::quadrature::{QuadratureRule, DEFAULT_MC_SAMPLES, DEFAULT_QUAD_ORDER, TENSOR_DIM_LIMIT};

/// Smoothing parameters. The epsilon range (0, 1] is the one on which the
/// mollifier inequalities hold.
#[derive(Clone, Copy, Debug)]
pub struct MollifyConfig {
    pub epsilon: f64,
    /// Gauss-Hermite nodes per axis for d <= 3.
    pub quad_order: usize,
    /// Monte Carlo samples for d > 3.
    pub mc_samples: usize,
    pub seed: u64,
}

impl MollifyConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(GaussFlowError::InvalidInput(format!(
                "mollification epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        Ok(MollifyConfig {
            epsilon,
            quad_order: DEFAULT_QUAD_ORDER,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        })
    }

    /// The sequence eps_n = 1/n used by the convergence experiments.
    pub fn one_over(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(GaussFlowError::InvalidInput("mollification index must be >= 1".into()));
        }
        Self::new(1.0 / n as f64)
    }

    pub fn with_quad_order(mut self, order: usize) -> Self {
        self.quad_order = order;
        self
    }

    pub fn with_mc(mut self, samples: usize, seed: u64) -> Self {
        self.mc_samples = samples;
        self.seed = seed;
        self
    }
}

/// Smooth cutoff: 1 on |x| <= 1/eps, 0 on |x| >= 1/eps + 2, quintic
/// smoothstep across the width-2 shell. The slope bound |grad phi| <= 15/16
/// comes from the smoothstep maximum 15/8 over the half-width.
pub fn cutoff(cfg: &MollifyConfig, x: &[f64]) -> (f64, Vec<f64>) {
    cutoff_with_gradient(cfg.epsilon, x)
}

fn cutoff_with_gradient(epsilon: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let r = euclid_norm(x);
    let (value, slope) = cutoff_radial(epsilon, r);
    let mut grad = vec![0.0; x.len()];
    if slope != 0.0 && r > 0.0 {
        for (g, xi) in grad.iter_mut().zip(x) {
            *g = slope * xi / r;
        }
    }
    (value, grad)
}

pub(crate) fn cutoff_value(epsilon: f64, x: &[f64]) -> f64 {
    cutoff_radial(epsilon, euclid_norm(x)).0
}

/// (value, d value / d r) of the radial cutoff profile.
fn cutoff_radial(epsilon: f64, r: f64) -> (f64, f64) {
    let lo = 1.0 / epsilon;
    let hi = lo + 2.0;
    if r <= lo {
        (1.0, 0.0)
    } else if r >= hi {
        (0.0, 0.0)
    } else {
        let s = (r - lo) / 2.0;
        let q = ((6.0 * s - 15.0) * s + 10.0) * s * s * s;
        let dq = 30.0 * s * s * (1.0 - s) * (1.0 - s) / 2.0;
        (1.0 - q, -dq)
    }
}

/// A reusable P_eps operator for one dimension/config.
#[derive(Clone, Debug)]
pub struct OuSmoother {
    epsilon: f64,
    decay: f64,
    spread: f64,
    rule: QuadratureRule,
}

impl OuSmoother {
    pub fn new(dim: usize, cfg: &MollifyConfig) -> Result<Self> {
        if cfg.quad_order == 0 || cfg.mc_samples == 0 {
            return Err(GaussFlowError::InvalidInput(
                "quadrature order and MC sample count must be positive".into(),
            ));
        }
        MollifyConfig::new(cfg.epsilon)?;
        let rule = if dim <= TENSOR_DIM_LIMIT {
            QuadratureRule::tensor_gauss_hermite(dim, cfg.quad_order)
        } else {
            QuadratureRule::monte_carlo(dim, cfg.mc_samples, cfg.seed)
        };
        Ok(OuSmoother {
            epsilon: cfg.epsilon,
            decay: (-cfg.epsilon).exp(),
            spread: (1.0 - (-2.0 * cfg.epsilon).exp()).sqrt(),
            rule,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    fn shift_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = self.decay * x[i] + self.spread * y[i];
        }
    }

    /// P_eps A(x).
    pub fn apply(&self, spec: &FieldSpec, x: &[f64]) -> Result<Vec<f64>> {
        let d = spec.dim();
        if x.len() != d {
            return Err(GaussFlowError::dim(d, x.len()));
        }
        let mut out = vec![0.0; d];
        let mut shifted = vec![0.0; d];
        let mut val = vec![0.0; d];
        for (y, w) in self.rule.points() {
            self.shift_into(x, y, &mut shifted);
            spec.eval_into(&shifted, &mut val)?;
            for i in 0..d {
                out[i] += w * val[i];
            }
        }
        Ok(out)
    }

    /// P_eps f(x) for a scalar observable.
    pub fn apply_scalar(&self, f: impl Fn(&[f64]) -> Result<f64>, x: &[f64]) -> Result<f64> {
        let d = self.rule.dim();
        let mut shifted = vec![0.0; d];
        let mut acc = 0.0;
        for (y, w) in self.rule.points() {
            self.shift_into(x, y, &mut shifted);
            acc += w * f(&shifted)?;
        }
        Ok(acc)
    }

    /// P_eps(grad A)(x), entrywise smoothing of the Jacobian.
    pub fn apply_jacobian(&self, spec: &FieldSpec, x: &[f64], mode: DerivMode) -> Result<DMatrix<f64>> {
        let d = spec.dim();
        let mut acc = DMatrix::zeros(d, d);
        let mut shifted = vec![0.0; d];
        for (y, w) in self.rule.points() {
            self.shift_into(x, y, &mut shifted);
            let jac = spec.jacobian(&shifted, mode)?;
            let dst = acc.as_mut_slice();
            for (slot, v) in dst.iter_mut().zip(jac.entries.as_slice()) {
                *slot += w * v;
            }
        }
        Ok(acc)
    }
}

/// The mollified field `A^eps = phi_eps P_eps A` with its quadrature rule
/// frozen at construction.
#[derive(Clone, Debug)]
pub struct MollifiedField {
    base: FieldSpec,
    smoother: OuSmoother,
}

const MAX_STACK_DIM: usize = 8;

impl MollifiedField {
    pub fn new(base: FieldSpec, cfg: &MollifyConfig) -> Result<Self> {
        let smoother = OuSmoother::new(base.dim(), cfg)?;
        Ok(MollifiedField { base, smoother })
    }

    pub fn base(&self) -> &FieldSpec {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.smoother.epsilon
    }

    pub fn smoother(&self) -> &OuSmoother {
        &self.smoother
    }

    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        let phi = cutoff_value(self.smoother.epsilon, x);
        if phi == 0.0 {
            out.fill(0.0);
            return;
        }
        if d <= MAX_STACK_DIM {
            let mut shifted = [0.0; MAX_STACK_DIM];
            let mut val = [0.0; MAX_STACK_DIM];
            self.accumulate(x, &mut shifted[..d], &mut val[..d], out);
        } else {
            let mut shifted = vec![0.0; d];
            let mut val = vec![0.0; d];
            self.accumulate(x, &mut shifted, &mut val, out);
        }
        for v in out.iter_mut() {
            *v *= phi;
        }
    }

    #[inline]
    fn accumulate(&self, x: &[f64], shifted: &mut [f64], val: &mut [f64], out: &mut [f64]) {
        use crate::fields::FieldKind;
        out.fill(0.0);
        let rule = &self.smoother.rule;
        // dedicated loops for the families that dominate the SDE stepping;
        // the general path dispatches per quadrature node
        match self.base.kind() {
            FieldKind::PowerAlpha { alpha, direction } if x.len() == 1 => {
                let cx = self.smoother.decay * x[0];
                let s = self.smoother.spread;
                let mut acc = 0.0;
                for (y, w) in rule.points() {
                    let z = cx + s * y[0];
                    let scale = if *alpha == 0.5 {
                        (z * z).sqrt().sqrt()
                    } else {
                        (z * z).powf(0.5 * *alpha)
                    };
                    acc += w * scale;
                }
                out[0] = acc * direction[0];
            }
            FieldKind::Constant { value } => {
                let mut wsum = 0.0;
                for (_, w) in rule.points() {
                    wsum += w;
                }
                for (o, v) in out.iter_mut().zip(value) {
                    *o = wsum * v;
                }
            }
            _ => {
                for (y, w) in rule.points() {
                    self.smoother.shift_into(x, y, shifted);
                    self.base
                        .eval_into(shifted, val)
                        .expect("mollified base dimension fixed at construction");
                    for i in 0..out.len() {
                        out[i] += w * val[i];
                    }
                }
            }
        }
    }

    /// Product rule: grad A^eps = (P_eps A) (x) grad(phi)^T + phi e^{-eps} P_eps(grad A).
    pub(crate) fn jacobian_analytic(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = x.len();
        let (phi, grad_phi) = cutoff_with_gradient(self.smoother.epsilon, x);
        let mut jac = DMatrix::zeros(d, d);
        if phi != 0.0 {
            jac = self.smoother.apply_jacobian(&self.base, x, DerivMode::Auto)? * (phi * self.smoother.decay);
        }
        if grad_phi.iter().any(|&g| g != 0.0) {
            let pa = self.smoother.apply(&self.base, x)?;
            for i in 0..d {
                for j in 0..d {
                    jac[(i, j)] += pa[i] * grad_phi[j];
                }
            }
        }
        Ok(jac)
    }

    /// Exact commutation identity:
    /// delta(A^eps) = phi e^{eps} P_eps(delta A) - <grad phi, P_eps A>.
    pub(crate) fn gauss_divergence(&self, x: &[f64]) -> Result<f64> {
        let (phi, grad_phi) = cutoff_with_gradient(self.smoother.epsilon, x);
        let mut acc = 0.0;
        if phi != 0.0 {
            let smoothed_div = self
                .smoother
                .apply_scalar(|y| self.base.gauss_divergence(y, DerivMode::Auto), x)?;
            acc += phi * self.smoother.epsilon.exp() * smoothed_div;
        }
        if grad_phi.iter().any(|&g| g != 0.0) {
            let pa = self.smoother.apply(&self.base, x)?;
            acc -= dot(&grad_phi, &pa);
        }
        Ok(acc)
    }
}

/// P_eps A(x) as a one-off call.
pub fn ou_apply(spec: &FieldSpec, cfg: &MollifyConfig, x: &[f64]) -> Result<Vec<f64>> {
    OuSmoother::new(spec.dim(), cfg)?.apply(spec, x)
}

/// Mollify a single field, declaring growth C (1 + sqrt(d)) for base growth C.
pub fn mollify_field(spec: &FieldSpec, cfg: &MollifyConfig) -> Result<FieldSpec> {
    let dim = spec.dim();
    let growth = spec.growth_constant() * (1.0 + (dim as f64).sqrt());
    let field = MollifiedField::new(spec.clone(), cfg)?;
    Ok(FieldSpec::mollified(field, dim, growth))
}

/// Mollify every member of an ensemble with the same config.
pub fn mollify_ensemble(ens: &FieldEnsemble, cfg: &MollifyConfig) -> Result<FieldEnsemble> {
    let drift = mollify_field(ens.drift(), cfg)?;
    let diffusions = ens
        .diffusions()
        .iter()
        .map(|a| mollify_field(a, cfg))
        .collect::<Result<Vec<_>>>()?;
    FieldEnsemble::new(drift, diffusions)
}

/// Residuals of the commutation identities
/// `grad P_eps A = e^{-eps} P_eps(grad A)` and
/// `delta(P_eps A) = e^{eps} P_eps(delta A)`,
/// with the left sides evaluated by finite differences of the quadrature
/// operator and the right sides by quadrature of analytic derivatives.
pub fn ou_identity_residuals(
    spec: &FieldSpec,
    cfg: &MollifyConfig,
    x: &[f64],
) -> Result<(f64, f64)> {
    let d = spec.dim();
    if x.len() != d {
        return Err(GaussFlowError::dim(d, x.len()));
    }
    if !spec.has_analytic_jacobian(x) {
        return Err(GaussFlowError::Capability(format!(
            "ou_identity_residuals needs an analytic Jacobian for `{}`",
            spec.family_id()
        )));
    }
    let sm = OuSmoother::new(d, cfg)?;

    // Finite-difference Jacobian of y -> P_eps A(y).
    let h = fd_step(x);
    let mut fd_jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    for j in 0..d {
        xp[j] = x[j] + h;
        let plus = sm.apply(spec, &xp)?;
        xp[j] = x[j] - h;
        let minus = sm.apply(spec, &xp)?;
        xp[j] = x[j];
        for i in 0..d {
            fd_jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    let rhs_jac = sm.apply_jacobian(spec, x, DerivMode::Analytic)? * sm.decay;
    let jac_residual = (&fd_jac - &rhs_jac)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));

    let pa = sm.apply(spec, x)?;
    let lhs_div = dot(x, &pa) - fd_jac.trace();
    let rhs_div = cfg.epsilon.exp()
        * sm.apply_scalar(|y| spec.gauss_divergence(y, DerivMode::Analytic), x)?;
    Ok((jac_residual, (lhs_div - rhs_div).abs()))
}

/// Worst margins (LHS - RHS, positive means violation beyond quadrature
/// tolerance) of the four mollifier inequalities over a point sample.
#[derive(Clone, Copy, Debug)]
pub struct Lemma32Report {
    /// |delta(A^eps)| vs P_eps(|A| + e |delta A|)
    pub divergence: f64,
    /// |A^eps|^2 vs P_eps(|A|^2)
    pub value_sq: f64,
    /// |grad A^eps|^2 vs P_eps(2(|A|^2 + |grad A|^2))
    pub jacobian_sq: f64,
    /// |delta(A^eps)|^2 vs P_eps(2(|A|^2 + e^2 |delta A|^2))
    pub divergence_sq: f64,
}

impl Lemma32Report {
    pub fn worst(&self) -> f64 {
        self.divergence
            .max(self.value_sq)
            .max(self.jacobian_sq)
            .max(self.divergence_sq)
    }
}

pub fn lemma32_check(
    spec: &FieldSpec,
    cfg: &MollifyConfig,
    sample: &[Vec<f64>],
) -> Result<Lemma32Report> {
    let d = spec.dim();
    let sm = OuSmoother::new(d, cfg)?;
    let molly = mollify_field(spec, cfg)?;
    let e = std::f64::consts::E;
    let mut report = Lemma32Report {
        divergence: f64::NEG_INFINITY,
        value_sq: f64::NEG_INFINITY,
        jacobian_sq: f64::NEG_INFINITY,
        divergence_sq: f64::NEG_INFINITY,
    };
    let norm_sq = |y: &[f64]| -> Result<f64> {
        let v = spec.eval(y)?;
        Ok(dot(&v, &v))
    };
    for x in sample {
        if x.len() != d {
            return Err(GaussFlowError::dim(d, x.len()));
        }
        let delta_eps = molly.gauss_divergence(x, DerivMode::Analytic)?;
        let value = molly.eval(x)?;
        let jac = molly.jacobian(x, DerivMode::Analytic)?;
        let frob = jac.frobenius();

        let rhs_div = sm.apply_scalar(
            |y| {
                Ok(euclid_norm(&spec.eval(y)?)
                    + e * spec.gauss_divergence(y, DerivMode::Analytic)?.abs())
            },
            x,
        )?;
        report.divergence = report.divergence.max(delta_eps.abs() - rhs_div);

        let rhs_val = sm.apply_scalar(&norm_sq, x)?;
        report.value_sq = report.value_sq.max(dot(&value, &value) - rhs_val);

        let rhs_jac = sm.apply_scalar(
            |y| {
                let j = spec.jacobian(y, DerivMode::Analytic)?;
                let f = j.frobenius();
                Ok(2.0 * (norm_sq(y)? + f * f))
            },
            x,
        )?;
        report.jacobian_sq = report.jacobian_sq.max(frob * frob - rhs_jac);

        let rhs_div_sq = sm.apply_scalar(
            |y| {
                let dv = spec.gauss_divergence(y, DerivMode::Analytic)?;
                Ok(2.0 * (norm_sq(y)? + e * e * dv * dv))
            },
            x,
        )?;
        report.divergence_sq = report.divergence_sq.max(delta_eps * delta_eps - rhs_div_sq);
    }
    Ok(report)
}
