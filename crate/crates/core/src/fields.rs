//! Vector-field calculus with respect to the standard Gaussian measure:
//! evaluation, Jacobians, the Gaussian divergence
//! `delta(A)(x) = <x, A(x)> - div A(x)`, drift corrections, and the scalar
//! functionals entering the density bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GaussFlowError, Result};
use crate::mollify::MollifiedField;
use crate::numerics::{dot, euclid_norm, fd_step};

/// Radius below which singular families refuse analytic derivatives.
pub const SINGULAR_RADIUS: f64 = 1e-12;

/// How derivative quantities are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivMode {
    /// Closed-form derivatives; errors when the family has none.
    Analytic,
    /// Central differences with step `max(1,|x|) * eps_machine^(1/3)`.
    FiniteDifference,
    /// Analytic when available, finite differences otherwise.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    FiniteDifference,
}

/// A d x d Jacobian with entry (i, j) = dA^i / dx_j.
#[derive(Clone, Debug)]
pub struct Jacobian {
    pub entries: DMatrix<f64>,
    pub provenance: Provenance,
}

impl Jacobian {
    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// Frobenius norm |M| = sqrt(sum M_ij^2).
    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// <M, M*> = sum_ik M_ik M_ki = tr(M^2).
    pub fn self_transpose_product(&self) -> f64 {
        let m = &self.entries;
        let d = m.nrows();
        let mut acc = 0.0;
        for i in 0..d {
            for k in 0..d {
                acc += m[(i, k)] * m[(k, i)];
            }
        }
        acc
    }

    /// Matrix-vector product (∇A) v.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.entries.nrows();
        let mut out = vec![0.0; d];
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.entries[(i, j)] * v[j];
            }
            out[i] = acc;
        }
        out
    }
}

/// A custom field registered programmatically.
pub struct CustomField {
    pub name: String,
    pub eval: Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    pub jacobian: Option<Box<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>>,
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomField({})", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum FieldKind {
    /// A(x) = c.
    Constant { value: Vec<f64> },
    /// A(x) = M x.
    Linear { matrix: DMatrix<f64> },
    /// d = 2 only: A(x) = (-x_2, x_1).
    Rotation,
    /// A(x) = |x|^alpha u for a fixed unit vector u, alpha in (0, 1).
    /// The gradient blows up at 0 like |x|^(alpha-1); it lies in
    /// W^{1,p}_loc iff p(1 - alpha) < d.
    PowerAlpha { alpha: f64, direction: Vec<f64> },
    /// Radial drift with modulus r log(1/r), capped smoothly at r >= 1/e
    /// where the modulus attains its maximum with zero slope.
    Osgood,
    /// Componentwise A^i(x) = a sin(k x_i).
    Sine { amplitude: f64, frequency: f64 },
    Custom(Arc<CustomField>),
    /// phi_eps * P_eps A, built by the mollify module.
    Mollified(Arc<MollifiedField>),
}

/// A vector field on R^d together with its declared linear-growth
/// constant C: |A(x)| <= C (1 + |x|).
#[derive(Clone, Debug)]
pub struct FieldSpec {
    kind: FieldKind,
    dim: usize,
    growth: f64,
}

const INV_E: f64 = 0.36787944117144233; // e^{-1}

impl FieldSpec {
    pub fn constant(value: Vec<f64>) -> Self {
        let growth = euclid_norm(&value);
        let dim = value.len();
        FieldSpec {
            kind: FieldKind::Constant { value },
            dim,
            growth,
        }
    }

    pub fn linear(matrix: DMatrix<f64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols(), "linear field needs a square matrix");
        let dim = matrix.nrows();
        let growth = matrix.iter().map(|v| v * v).sum::<f64>().sqrt();
        FieldSpec {
            kind: FieldKind::Linear { matrix },
            dim,
            growth,
        }
    }

    /// Scalar multiple of the identity, a common test case.
    pub fn linear_scalar(dim: usize, lambda: f64) -> Self {
        Self::linear(DMatrix::identity(dim, dim) * lambda)
    }

    pub fn rotation() -> Self {
        FieldSpec {
            kind: FieldKind::Rotation,
            dim: 2,
            growth: 1.0,
        }
    }

    pub fn power_alpha(dim: usize, alpha: f64, direction: Option<Vec<f64>>) -> Result<Self> {
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(GaussFlowError::InvalidInput(format!(
                "power-alpha exponent must lie in (0,1), got {alpha}"
            )));
        }
        let mut u = direction.unwrap_or_else(|| {
            let mut e1 = vec![0.0; dim];
            e1[0] = 1.0;
            e1
        });
        if u.len() != dim {
            return Err(GaussFlowError::dim(dim, u.len()));
        }
        let norm = euclid_norm(&u);
        if norm == 0.0 {
            return Err(GaussFlowError::InvalidInput(
                "power-alpha direction must be nonzero".into(),
            ));
        }
        for v in &mut u {
            *v /= norm;
        }
        Ok(FieldSpec {
            kind: FieldKind::PowerAlpha { alpha, direction: u },
            dim,
            growth: 1.0,
        })
    }

    pub fn osgood(dim: usize) -> Self {
        FieldSpec {
            kind: FieldKind::Osgood,
            dim,
            growth: INV_E,
        }
    }

    pub fn sine(dim: usize, amplitude: f64, frequency: f64) -> Self {
        FieldSpec {
            kind: FieldKind::Sine { amplitude, frequency },
            dim,
            growth: amplitude.abs() * (dim as f64).sqrt(),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim])
    }

    pub fn custom(dim: usize, growth: f64, custom: CustomField) -> Self {
        FieldSpec {
            kind: FieldKind::Custom(Arc::new(custom)),
            dim,
            growth,
        }
    }

    pub(crate) fn mollified(field: MollifiedField, dim: usize, growth: f64) -> Self {
        FieldSpec {
            kind: FieldKind::Mollified(Arc::new(field)),
            dim,
            growth,
        }
    }

    /// Construct a built-in family from its registry id and parameter
    /// vector, as used by configs.
    pub fn from_family(id: &str, dim: usize, params: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(GaussFlowError::InvalidInput("dimension must be >= 1".into()));
        }
        let arity_err = |want: usize| {
            GaussFlowError::InvalidInput(format!(
                "family `{id}` in dimension {dim} takes {want} parameter(s), got {}",
                params.len()
            ))
        };
        match id {
            "constant" => {
                if params.len() != dim {
                    return Err(arity_err(dim));
                }
                Ok(Self::constant(params.to_vec()))
            }
            "linear" => {
                if params.len() != dim * dim {
                    return Err(arity_err(dim * dim));
                }
                Ok(Self::linear(DMatrix::from_row_slice(dim, dim, params)))
            }
            "rotation" => {
                if dim != 2 {
                    return Err(GaussFlowError::InvalidInput(
                        "rotation field is defined in dimension 2".into(),
                    ));
                }
                if !params.is_empty() {
                    return Err(arity_err(0));
                }
                Ok(Self::rotation())
            }
            "power-alpha" => {
                if params.len() == 1 {
                    Self::power_alpha(dim, params[0], None)
                } else if params.len() == 1 + dim {
                    Self::power_alpha(dim, params[0], Some(params[1..].to_vec()))
                } else {
                    Err(arity_err(1))
                }
            }
            "osgood" => {
                if !params.is_empty() {
                    return Err(arity_err(0));
                }
                Ok(Self::osgood(dim))
            }
            "sine" => {
                if params.len() != 2 {
                    return Err(arity_err(2));
                }
                Ok(Self::sine(dim, params[0], params[1]))
            }
            other => Err(GaussFlowError::InvalidInput(format!(
                "unknown field family `{other}`"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth
    }

    pub fn kind(&self) -> &FieldKind {
        &self.kind
    }

    pub fn family_id(&self) -> String {
        match &self.kind {
            FieldKind::Constant { .. } => "constant".into(),
            FieldKind::Linear { .. } => "linear".into(),
            FieldKind::Rotation => "rotation".into(),
            FieldKind::PowerAlpha { alpha, .. } => format!("power-alpha({alpha})"),
            FieldKind::Osgood => "osgood".into(),
            FieldKind::Sine { .. } => "sine".into(),
            FieldKind::Custom(c) => format!("custom({})", c.name),
            FieldKind::Mollified(m) => {
                format!("mollified({}, eps={})", m.base().family_id(), m.epsilon())
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(GaussFlowError::dim(self.dim, x.len()));
        }
        Ok(())
    }

    /// Evaluate A(x) into `out` without allocating.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            FieldKind::Constant { value } => out.copy_from_slice(value),
            FieldKind::Linear { matrix } => {
                for i in 0..self.dim {
                    let mut acc = 0.0;
                    for j in 0..self.dim {
                        acc += matrix[(i, j)] * x[j];
                    }
                    out[i] = acc;
                }
            }
            FieldKind::Rotation => {
                out[0] = -x[1];
                out[1] = x[0];
            }
            FieldKind::PowerAlpha { alpha, direction } => {
                let norm_sq: f64 = x.iter().map(|v| v * v).sum();
                // |x|^alpha; alpha = 1/2 is the common case and two square
                // roots beat powf by an order of magnitude in the SDE loop
                let scale = if *alpha == 0.5 {
                    norm_sq.sqrt().sqrt()
                } else {
                    norm_sq.powf(0.5 * *alpha)
                };
                for i in 0..self.dim {
                    out[i] = scale * direction[i];
                }
            }
            FieldKind::Osgood => {
                let r = euclid_norm(x);
                if r == 0.0 {
                    out.fill(0.0);
                } else if r <= INV_E {
                    let modulus = (1.0 / r).ln();
                    for i in 0..self.dim {
                        out[i] = x[i] * modulus;
                    }
                } else {
                    let scale = INV_E / r;
                    for i in 0..self.dim {
                        out[i] = x[i] * scale;
                    }
                }
            }
            FieldKind::Sine { amplitude, frequency } => {
                for i in 0..self.dim {
                    out[i] = amplitude * (frequency * x[i]).sin();
                }
            }
            FieldKind::Custom(c) => (c.eval)(x, out),
            FieldKind::Mollified(m) => m.eval_into(x, out),
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    /// Whether the family has closed-form first derivatives at `x`.
    pub fn has_analytic_jacobian(&self, x: &[f64]) -> bool {
        match &self.kind {
            FieldKind::Constant { .. }
            | FieldKind::Linear { .. }
            | FieldKind::Rotation
            | FieldKind::Sine { .. } => true,
            FieldKind::PowerAlpha { .. } | FieldKind::Osgood => {
                euclid_norm(x) >= SINGULAR_RADIUS
            }
            FieldKind::Custom(c) => c.jacobian.is_some(),
            FieldKind::Mollified(m) => m.base().has_analytic_jacobian(x),
        }
    }

    fn jacobian_analytic(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        match &self.kind {
            FieldKind::Constant { .. } => Ok(DMatrix::zeros(d, d)),
            FieldKind::Linear { matrix } => Ok(matrix.clone()),
            FieldKind::Rotation => {
                let mut m = DMatrix::zeros(2, 2);
                m[(0, 1)] = -1.0;
                m[(1, 0)] = 1.0;
                Ok(m)
            }
            FieldKind::Sine { amplitude, frequency } => {
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    m[(i, i)] = amplitude * frequency * (frequency * x[i]).cos();
                }
                Ok(m)
            }
            FieldKind::PowerAlpha { alpha, direction } => {
                let r = euclid_norm(x);
                if r < SINGULAR_RADIUS {
                    return Err(GaussFlowError::Capability(format!(
                        "power-alpha Jacobian is singular at |x| = {r:e}"
                    )));
                }
                let scale = alpha * r.powf(alpha - 2.0);
                let mut m = DMatrix::zeros(d, d);
                for i in 0..d {
                    for j in 0..d {
                        m[(i, j)] = scale * direction[i] * x[j];
                    }
                }
                Ok(m)
            }
            FieldKind::Osgood => {
                let r = euclid_norm(x);
                if r < SINGULAR_RADIUS {
                    return Err(GaussFlowError::Capability(format!(
                        "osgood Jacobian is singular at |x| = {r:e}"
                    )));
                }
                let mut m = DMatrix::zeros(d, d);
                if r <= INV_E {
                    let modulus = (1.0 / r).ln();
                    for i in 0..d {
                        for j in 0..d {
                            m[(i, j)] = -x[i] * x[j] / (r * r);
                            if i == j {
                                m[(i, j)] += modulus;
                            }
                        }
                    }
                } else {
                    for i in 0..d {
                        for j in 0..d {
                            m[(i, j)] = -INV_E * x[i] * x[j] / (r * r * r);
                            if i == j {
                                m[(i, j)] += INV_E / r;
                            }
                        }
                    }
                }
                Ok(m)
            }
            FieldKind::Custom(c) => match &c.jacobian {
                Some(j) => Ok(j(x)),
                None => Err(GaussFlowError::Capability(format!(
                    "custom field `{}` has no registered Jacobian",
                    c.name
                ))),
            },
            FieldKind::Mollified(m) => m.jacobian_analytic(x),
        }
    }

    fn jacobian_fd(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        let h = fd_step(x);
        let mut m = DMatrix::zeros(d, d);
        let mut xp = x.to_vec();
        let mut plus = vec![0.0; d];
        let mut minus = vec![0.0; d];
        for j in 0..d {
            xp[j] = x[j] + h;
            self.eval_into(&xp, &mut plus)?;
            xp[j] = x[j] - h;
            self.eval_into(&xp, &mut minus)?;
            xp[j] = x[j];
            for i in 0..d {
                m[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        Ok(m)
    }

    pub fn jacobian(&self, x: &[f64], mode: DerivMode) -> Result<Jacobian> {
        self.check_dim(x)?;
        match mode {
            DerivMode::Analytic => Ok(Jacobian {
                entries: self.jacobian_analytic(x)?,
                provenance: Provenance::Analytic,
            }),
            DerivMode::FiniteDifference => Ok(Jacobian {
                entries: self.jacobian_fd(x)?,
                provenance: Provenance::FiniteDifference,
            }),
            DerivMode::Auto => match self.jacobian_analytic(x) {
                Ok(entries) => Ok(Jacobian {
                    entries,
                    provenance: Provenance::Analytic,
                }),
                Err(GaussFlowError::Capability(_)) => Ok(Jacobian {
                    entries: self.jacobian_fd(x)?,
                    provenance: Provenance::FiniteDifference,
                }),
                Err(e) => Err(e),
            },
        }
    }

    /// Component Hessians H^i with H^i[(j, k)] = d^2 A^i / dx_j dx_k.
    /// Only the smooth closed-form families provide these.
    pub fn hessian_analytic(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.check_dim(x)?;
        let d = self.dim;
        match &self.kind {
            FieldKind::Constant { .. } | FieldKind::Linear { .. } | FieldKind::Rotation => {
                Ok(vec![DMatrix::zeros(d, d); d])
            }
            FieldKind::Sine { amplitude, frequency } => {
                let mut hs = vec![DMatrix::zeros(d, d); d];
                for i in 0..d {
                    hs[i][(i, i)] = -amplitude * frequency * frequency * (frequency * x[i]).sin();
                }
                Ok(hs)
            }
            _ => Err(GaussFlowError::Capability(format!(
                "family `{}` has no analytic Hessian",
                self.family_id()
            ))),
        }
    }

    /// Gaussian divergence delta(A)(x) = <x, A(x)> - tr(grad A)(x).
    pub fn gauss_divergence(&self, x: &[f64], mode: DerivMode) -> Result<f64> {
        self.check_dim(x)?;
        if mode != DerivMode::FiniteDifference {
            match self.gauss_divergence_closed(x) {
                Ok(v) => return Ok(v),
                Err(GaussFlowError::Capability(msg)) => {
                    if mode == DerivMode::Analytic {
                        return Err(GaussFlowError::Capability(msg));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let jac = self.jacobian(x, DerivMode::FiniteDifference)?;
        let mut a = vec![0.0; self.dim];
        self.eval_into(x, &mut a)?;
        Ok(dot(x, &a) - jac.trace())
    }

    fn gauss_divergence_closed(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            FieldKind::Constant { value } => Ok(dot(x, value)),
            FieldKind::Linear { matrix } => {
                let mut quad = 0.0;
                for i in 0..self.dim {
                    let mut acc = 0.0;
                    for j in 0..self.dim {
                        acc += matrix[(i, j)] * x[j];
                    }
                    quad += x[i] * acc;
                }
                Ok(quad - matrix.trace())
            }
            FieldKind::Rotation => Ok(x[0] * (-x[1]) + x[1] * x[0]),
            FieldKind::Sine { amplitude, frequency } => {
                let mut acc = 0.0;
                for &xi in x {
                    acc += xi * amplitude * (frequency * xi).sin()
                        - amplitude * frequency * (frequency * xi).cos();
                }
                Ok(acc)
            }
            FieldKind::PowerAlpha { alpha, direction } => {
                let r = euclid_norm(x);
                if r < SINGULAR_RADIUS {
                    return Err(GaussFlowError::Capability(
                        "power-alpha divergence is singular near 0".into(),
                    ));
                }
                let ux = dot(direction, x);
                Ok(ux * (r.powf(*alpha) - alpha * r.powf(alpha - 2.0)))
            }
            FieldKind::Osgood => {
                let r = euclid_norm(x);
                if r < SINGULAR_RADIUS {
                    return Err(GaussFlowError::Capability(
                        "osgood divergence is singular near 0".into(),
                    ));
                }
                let d = self.dim as f64;
                if r <= INV_E {
                    let modulus = (1.0 / r).ln();
                    Ok(r * r * modulus - (d * modulus - 1.0))
                } else {
                    Ok(INV_E * r - INV_E * (d - 1.0) / r)
                }
            }
            FieldKind::Mollified(m) => m.gauss_divergence(x),
            FieldKind::Custom(_) => {
                let jac = self.jacobian(x, DerivMode::Auto)?;
                if jac.provenance == Provenance::FiniteDifference {
                    return Err(GaussFlowError::Capability(
                        "custom field divergence requires finite differences".into(),
                    ));
                }
                let mut a = vec![0.0; self.dim];
                self.eval_into(x, &mut a)?;
                Ok(dot(x, &a) - jac.trace())
            }
        }
    }
}

/// (grad B)(x) . A(x), the directional derivative of B along A. This is
/// the implementation of the Lie-derivative correction appearing in the
/// drift conversions; the bracket reading would vanish identically for
/// the self-correction term.
pub fn directional_derivative(
    b: &FieldSpec,
    a: &FieldSpec,
    x: &[f64],
    mode: DerivMode,
) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(GaussFlowError::dim(b.dim(), a.dim()));
    }
    let jac = b.jacobian(x, mode)?;
    let av = a.eval(x)?;
    Ok(jac.apply(&av))
}

/// Pointwise diagnostics consumed by the CSV dumps.
#[derive(Clone, Copy, Debug)]
pub struct ScalarDiagnostics {
    /// delta(A_0)(x).
    pub delta: f64,
    /// Phi(x) = delta(A_0) + 1/2 sum |A_j|^2 + 1/2 sum <grad A_j, (grad A_j)*>.
    pub phi: f64,
    /// The nonnegative exponent integrand of the L^p bound.
    pub phi_tilde_r: f64,
    pub r: f64,
}

/// The coefficient family (A_0; A_1..A_m) of the flow equation.
#[derive(Clone, Debug)]
pub struct FieldEnsemble {
    drift: FieldSpec,
    diffusions: Vec<FieldSpec>,
}

impl FieldEnsemble {
    pub fn new(drift: FieldSpec, diffusions: Vec<FieldSpec>) -> Result<Self> {
        let d = drift.dim();
        for (j, a) in diffusions.iter().enumerate() {
            if a.dim() != d {
                return Err(GaussFlowError::InvalidInput(format!(
                    "diffusion {j} has dimension {}, drift has {d}",
                    a.dim()
                )));
            }
        }
        Ok(FieldEnsemble { drift, diffusions })
    }

    pub fn deterministic(drift: FieldSpec) -> Self {
        FieldEnsemble {
            drift,
            diffusions: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    /// Number of driving Brownian components; zero means a deterministic ODE.
    pub fn noise_dim(&self) -> usize {
        self.diffusions.len()
    }

    pub fn drift(&self) -> &FieldSpec {
        &self.drift
    }

    pub fn diffusions(&self) -> &[FieldSpec] {
        &self.diffusions
    }

    pub fn diffusion(&self, j: usize) -> &FieldSpec {
        &self.diffusions[j]
    }

    /// Largest declared growth constant across the member fields.
    pub fn growth_constant(&self) -> f64 {
        self.diffusions
            .iter()
            .map(|a| a.growth_constant())
            .fold(self.drift.growth_constant(), f64::max)
    }

    /// Stratonovich-corrected drift A_0 - 1/2 sum (grad A_j) A_j.
    pub fn strat_drift(&self, x: &[f64], mode: DerivMode) -> Result<Vec<f64>> {
        self.corrected_drift(x, mode, 0.5)
    }

    /// Dual-flow drift A_0 - sum (grad A_j) A_j.
    pub fn dual_drift(&self, x: &[f64], mode: DerivMode) -> Result<Vec<f64>> {
        self.corrected_drift(x, mode, 1.0)
    }

    fn corrected_drift(&self, x: &[f64], mode: DerivMode, weight: f64) -> Result<Vec<f64>> {
        let mut out = self.drift.eval(x)?;
        for a in &self.diffusions {
            let lie = directional_derivative(a, a, x, mode)?;
            for i in 0..out.len() {
                out[i] -= weight * lie[i];
            }
        }
        Ok(out)
    }

    /// Phi(x) = delta(A_0) + 1/2 sum_j |A_j|^2 + 1/2 sum_j tr((grad A_j)^2).
    pub fn phi_functional(&self, x: &[f64], mode: DerivMode) -> Result<f64> {
        let mut acc = self.drift.gauss_divergence(x, mode)?;
        for a in &self.diffusions {
            let v = a.eval(x)?;
            let jac = a.jacobian(x, mode)?;
            acc += 0.5 * dot(&v, &v) + 0.5 * jac.self_transpose_product();
        }
        Ok(acc)
    }

    /// The exponent integrand
    /// `2r|delta(A_0)| + r sum_j (|A_j|^2 + |grad A_j|^2 + 2r|delta(A_j)|^2)`,
    /// nonnegative and monotone in r.
    pub fn phi_tilde(&self, x: &[f64], r: f64, mode: DerivMode) -> Result<f64> {
        if r < 0.0 {
            return Err(GaussFlowError::InvalidInput(format!(
                "phi_tilde requires r >= 0, got {r}"
            )));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let mut acc = 2.0 * r * self.drift.gauss_divergence(x, mode)?.abs();
        for a in &self.diffusions {
            let v = a.eval(x)?;
            let jac = a.jacobian(x, mode)?;
            let delta = a.gauss_divergence(x, mode)?;
            let frob = jac.frobenius();
            acc += r * (dot(&v, &v) + frob * frob + 2.0 * r * delta * delta);
        }
        Ok(acc)
    }

    pub fn scalar_diagnostics(&self, x: &[f64], r: f64, mode: DerivMode) -> Result<ScalarDiagnostics> {
        Ok(ScalarDiagnostics {
            delta: self.drift.gauss_divergence(x, mode)?,
            phi: self.phi_functional(x, mode)?,
            phi_tilde_r: self.phi_tilde(x, r, mode)?,
            r,
        })
    }

    /// |LHS - RHS| of the divergence identity
    /// `1/2 sum_j L_{A_j} delta(A_j) + delta(Atilde_0) = Phi`.
    pub fn lemma21_residual(&self, x: &[f64], mode: DerivMode) -> Result<f64> {
        let lhs = match mode {
            DerivMode::Analytic => self.lemma21_lhs_analytic(x)?,
            _ => self.lemma21_lhs_fd(x)?,
        };
        let rhs = self.phi_functional(
            x,
            if mode == DerivMode::Analytic {
                DerivMode::Analytic
            } else {
                DerivMode::FiniteDifference
            },
        )?;
        Ok((lhs - rhs).abs())
    }

    fn lemma21_lhs_analytic(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        // 1/2 sum_j <grad delta(A_j), A_j>
        let mut lie_sum = 0.0;
        for a in &self.diffusions {
            let v = a.eval(x)?;
            let jac = a.jacobian(x, DerivMode::Analytic)?;
            let hess = a.hessian_analytic(x)?;
            // grad_k delta(A) = A^k + sum_i x_i J_ik - sum_i H^i_ik
            let mut grad_delta = vec![0.0; d];
            for k in 0..d {
                let mut g = v[k];
                for i in 0..d {
                    g += x[i] * jac.entries[(i, k)];
                    g -= hess[i][(i, k)];
                }
                grad_delta[k] = g;
            }
            lie_sum += dot(&grad_delta, &v);
        }

        // delta(Atilde_0) = <x, Atilde_0> - div(A_0) + 1/2 sum_j div((grad A_j) A_j)
        let strat = self.strat_drift(x, DerivMode::Analytic)?;
        let drift_jac = self.drift.jacobian(x, DerivMode::Analytic)?;
        let mut div_strat = drift_jac.trace();
        for a in &self.diffusions {
            let v = a.eval(x)?;
            let jac = a.jacobian(x, DerivMode::Analytic)?;
            let hess = a.hessian_analytic(x)?;
            // div((grad A) A) = sum_ik H^i_ik A^k + tr((grad A)^2)
            let mut div_lie = jac.self_transpose_product();
            for i in 0..d {
                for k in 0..d {
                    div_lie += hess[i][(i, k)] * v[k];
                }
            }
            div_strat -= 0.5 * div_lie;
        }
        Ok(0.5 * lie_sum + dot(x, &strat) - div_strat)
    }

    fn lemma21_lhs_fd(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        let h = fd_step(x);
        // 1/2 sum_j <grad delta(A_j), A_j> with nested central differences.
        let mut lie_sum = 0.0;
        for a in &self.diffusions {
            let v = a.eval(x)?;
            let mut grad_delta = vec![0.0; d];
            let mut xp = x.to_vec();
            for k in 0..d {
                xp[k] = x[k] + h;
                let dp = a.gauss_divergence(&xp, DerivMode::FiniteDifference)?;
                xp[k] = x[k] - h;
                let dm = a.gauss_divergence(&xp, DerivMode::FiniteDifference)?;
                xp[k] = x[k];
                grad_delta[k] = (dp - dm) / (2.0 * h);
            }
            lie_sum += dot(&grad_delta, &v);
        }
        // delta(Atilde_0) with the composite corrected drift.
        let strat = self.strat_drift(x, DerivMode::FiniteDifference)?;
        let mut div_strat = 0.0;
        let mut xp = x.to_vec();
        for k in 0..d {
            xp[k] = x[k] + h;
            let p = self.strat_drift(&xp, DerivMode::FiniteDifference)?[k];
            xp[k] = x[k] - h;
            let m = self.strat_drift(&xp, DerivMode::FiniteDifference)?[k];
            xp[k] = x[k];
            div_strat += (p - m) / (2.0 * h);
        }
        Ok(0.5 * lie_sum + dot(x, &strat) - div_strat)
    }
}

/// Registry metadata for the built-in families, surfaced by the CLI.
#[derive(Clone, Copy, Debug)]
pub struct FamilyInfo {
    pub id: &'static str,
    pub arity: &'static str,
    pub growth: &'static str,
    pub smoothness: &'static str,
    pub singular_set: &'static str,
}

pub fn builtin_families() -> &'static [FamilyInfo] {
    &[
        FamilyInfo {
            id: "constant",
            arity: "d components",
            growth: "|c|",
            smoothness: "C^inf",
            singular_set: "none",
        },
        FamilyInfo {
            id: "linear",
            arity: "d*d row-major entries",
            growth: "|M|_F",
            smoothness: "C^inf",
            singular_set: "none",
        },
        FamilyInfo {
            id: "rotation",
            arity: "none (d = 2)",
            growth: "1",
            smoothness: "C^inf",
            singular_set: "none",
        },
        FamilyInfo {
            id: "power-alpha",
            arity: "alpha [, d direction components]",
            growth: "1",
            smoothness: "Hoelder-alpha at 0, C^inf elsewhere; W^{1,p}_loc iff p(1-alpha) < d",
            singular_set: "{0}",
        },
        FamilyInfo {
            id: "osgood",
            arity: "none",
            growth: "1/e (bounded, modulus r log(1/r))",
            smoothness: "C^1 away from 0, log-Lipschitz at 0",
            singular_set: "{0}",
        },
        FamilyInfo {
            id: "sine",
            arity: "amplitude, frequency",
            growth: "|amplitude| sqrt(d)",
            smoothness: "C^inf",
            singular_set: "none",
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussianIntegrator;
    use crate::rng::{CounterRng, Stream};
    use approx::assert_abs_diff_eq;

    fn cubed_field() -> FieldSpec {
        FieldSpec::custom(
            1,
            30.0, // honest only on a bounded window; tests stay inside it
            CustomField {
                name: "cubed".into(),
                eval: Box::new(|x, out| out[0] = x[0] * x[0] * x[0]),
                jacobian: None,
            },
        )
    }

    #[test]
    fn eval_examples() {
        let c = FieldSpec::constant(vec![3.0]);
        assert_eq!(c.eval(&[2.0]).unwrap(), vec![3.0]);

        let id2 = FieldSpec::linear_scalar(2, 1.0);
        assert_eq!(id2.eval(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);

        let rot = FieldSpec::rotation();
        assert_eq!(rot.eval(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn eval_dimension_mismatch_is_an_input_error() {
        let c = FieldSpec::constant(vec![1.0, 2.0]);
        assert!(matches!(
            c.eval(&[0.0]),
            Err(GaussFlowError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn jacobian_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let lin = FieldSpec::linear(m.clone());
        let jac = lin.jacobian(&[0.3, -0.7], DerivMode::Analytic).unwrap();
        assert_eq!(jac.entries, m);
        assert_eq!(jac.provenance, Provenance::Analytic);

        let c = FieldSpec::constant(vec![5.0, -1.0]);
        let jz = c.jacobian(&[1.0, 1.0], DerivMode::Analytic).unwrap();
        assert!(jz.entries.iter().all(|&v| v == 0.0));

        // d = 1, A(x) = x^3 at x = 2 -> 12 by central differences.
        let jac = cubed_field().jacobian(&[2.0], DerivMode::FiniteDifference).unwrap();
        assert!((jac.entries[(0, 0)] - 12.0).abs() / 12.0 < 1e-6);
        assert_eq!(jac.provenance, Provenance::FiniteDifference);
    }

    #[test]
    fn analytic_jacobian_of_custom_without_registration_is_capability_error() {
        let err = cubed_field().jacobian(&[1.0], DerivMode::Analytic).unwrap_err();
        assert!(matches!(err, GaussFlowError::Capability(_)));
    }

    #[test]
    fn gauss_divergence_examples() {
        // d=1, A = 3 constant, x = 2 -> <x, c> = 6
        let c = FieldSpec::constant(vec![3.0]);
        assert_eq!(c.gauss_divergence(&[2.0], DerivMode::Analytic).unwrap(), 6.0);

        // d=2, A(x) = x -> |x|^2 - d = 0 at (1,1)
        let id2 = FieldSpec::linear_scalar(2, 1.0);
        assert_eq!(id2.gauss_divergence(&[1.0, 1.0], DerivMode::Analytic).unwrap(), 0.0);

        // d=1, A(x) = x^3 at x=2 -> x^4 - 3x^2 = 4 via finite differences
        let v = cubed_field()
            .gauss_divergence(&[2.0], DerivMode::FiniteDifference)
            .unwrap();
        assert!((v - 4.0).abs() < 1e-5, "{v}");
    }

    #[test]
    fn rotation_divergence_is_exactly_zero() {
        let rot = FieldSpec::rotation();
        let rng = CounterRng::new(7, Stream::Initial, 0);
        let mut x = [0.0; 2];
        for k in 0..200 {
            rng.gaussian_point(k, &mut x);
            assert_eq!(rot.gauss_divergence(&x, DerivMode::Analytic).unwrap(), 0.0);
        }
    }

    #[test]
    fn power_alpha_at_origin_and_near_singularity() {
        let f = FieldSpec::power_alpha(2, 0.5, None).unwrap();
        assert_eq!(f.eval(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let err = f.jacobian(&[0.0, 1e-13], DerivMode::Analytic).unwrap_err();
        assert!(matches!(err, GaussFlowError::Capability(_)));
        // Off the singular set the analytic Jacobian matches finite differences.
        let x = [0.4, -0.3];
        let ja = f.jacobian(&x, DerivMode::Analytic).unwrap();
        let jf = f.jacobian(&x, DerivMode::FiniteDifference).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(ja.entries[(i, j)], jf.entries[(i, j)], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn osgood_is_c1_across_the_cap_radius() {
        let f = FieldSpec::osgood(2);
        let r0 = INV_E;
        let dir = [0.6, 0.8];
        let inside: Vec<f64> = dir.iter().map(|v| v * (r0 - 1e-9)).collect();
        let outside: Vec<f64> = dir.iter().map(|v| v * (r0 + 1e-9)).collect();
        let vi = f.eval(&inside).unwrap();
        let vo = f.eval(&outside).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(vi[i], vo[i], epsilon = 1e-7);
        }
        let ji = f.jacobian(&inside, DerivMode::Analytic).unwrap();
        let jo = f.jacobian(&outside, DerivMode::Analytic).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(ji.entries[(i, j)], jo.entries[(i, j)], epsilon = 1e-6);
            }
        }
        // analytic matches finite differences on both sides
        for x in [&inside, &outside] {
            let ja = f.jacobian(x, DerivMode::Analytic).unwrap();
            let jf = f.jacobian(x, DerivMode::FiniteDifference).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert_abs_diff_eq!(ja.entries[(i, j)], jf.entries[(i, j)], epsilon = 1e-5);
                }
            }
        }
    }

    #[test]
    fn declared_linear_growth_holds_on_samples() {
        let fields = vec![
            FieldSpec::constant(vec![2.0, -1.0]),
            FieldSpec::linear(DMatrix::from_row_slice(2, 2, &[0.5, -1.5, 2.0, 0.1])),
            FieldSpec::rotation(),
            FieldSpec::power_alpha(2, 0.5, None).unwrap(),
            FieldSpec::osgood(2),
            FieldSpec::sine(2, 1.3, 2.0),
        ];
        let rng = CounterRng::new(11, Stream::Initial, 1);
        let mut z = [0.0; 2];
        for f in &fields {
            let c = f.growth_constant();
            for k in 0..500 {
                rng.gaussian_point(k, &mut z);
                // spread magnitudes up to |x| ~ 1e3
                let scale = 10f64.powf((k % 7) as f64 / 2.0);
                let x = [z[0] * scale, z[1] * scale];
                let norm = euclid_norm(&f.eval(&x).unwrap());
                assert!(
                    norm <= c * (1.0 + euclid_norm(&x)) + 1e-12,
                    "{}: |A| = {norm} at |x| = {}",
                    f.family_id(),
                    euclid_norm(&x)
                );
            }
        }
    }

    #[test]
    fn directional_derivative_examples() {
        // B constant -> zero vector
        let b = FieldSpec::constant(vec![4.0]);
        let a = FieldSpec::linear_scalar(1, 1.0);
        assert_eq!(directional_derivative(&b, &a, &[2.0], DerivMode::Analytic).unwrap(), vec![0.0]);

        // d=1, A=B=x at x=3 -> 3
        let id = FieldSpec::linear_scalar(1, 1.0);
        assert_eq!(
            directional_derivative(&id, &id, &[3.0], DerivMode::Analytic).unwrap(),
            vec![3.0]
        );

        // d=1, A=B=sin x at pi/4 -> cos(pi/4) sin(pi/4) = 1/2, via finite differences
        let s = FieldSpec::sine(1, 1.0, 1.0);
        let v = directional_derivative(&s, &s, &[std::f64::consts::FRAC_PI_4], DerivMode::FiniteDifference)
            .unwrap();
        assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn strat_and_dual_drift_examples() {
        // all-constant diffusions leave the drift unchanged
        let ens = FieldEnsemble::new(
            FieldSpec::sine(1, 0.7, 1.0),
            vec![FieldSpec::constant(vec![2.0])],
        )
        .unwrap();
        let x = [0.9];
        let a0 = ens.drift().eval(&x).unwrap();
        assert_eq!(ens.strat_drift(&x, DerivMode::Analytic).unwrap(), a0);
        assert_eq!(ens.dual_drift(&x, DerivMode::Analytic).unwrap(), a0);

        // d=m=1, A1 = x, A0 = 0: strat = -x/2, dual = -x
        let ens = FieldEnsemble::new(
            FieldSpec::zero(1),
            vec![FieldSpec::linear_scalar(1, 1.0)],
        )
        .unwrap();
        assert_eq!(ens.strat_drift(&[3.0], DerivMode::Analytic).unwrap(), vec![-1.5]);
        assert_eq!(ens.dual_drift(&[3.0], DerivMode::Analytic).unwrap(), vec![-3.0]);

        // d=m=1, A1 = sin x, A0 = 0 at pi/4: strat correction -1/4
        let ens = FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::sine(1, 1.0, 1.0)]).unwrap();
        let v = ens
            .strat_drift(&[std::f64::consts::FRAC_PI_4], DerivMode::Analytic)
            .unwrap();
        assert_abs_diff_eq!(v[0], -0.25, epsilon = 1e-12);

        // d=m=1, A1 = 1, A0 = -x at x=2: zero correction
        let ens = FieldEnsemble::new(
            FieldSpec::linear_scalar(1, -1.0),
            vec![FieldSpec::constant(vec![1.0])],
        )
        .unwrap();
        assert_eq!(ens.dual_drift(&[2.0], DerivMode::Analytic).unwrap(), vec![-2.0]);
    }

    #[test]
    fn phi_functional_examples() {
        let zero = FieldEnsemble::new(FieldSpec::zero(2), vec![FieldSpec::zero(2)]).unwrap();
        assert_eq!(zero.phi_functional(&[0.3, 1.0], DerivMode::Analytic).unwrap(), 0.0);

        let rot = FieldEnsemble::deterministic(FieldSpec::rotation());
        assert_eq!(rot.phi_functional(&[1.2, -0.4], DerivMode::Analytic).unwrap(), 0.0);

        // d=m=1, A0=-x, A1=1 at x=0: (1 - x^2) + 1/2 = 1.5
        let ou = FieldEnsemble::new(
            FieldSpec::linear_scalar(1, -1.0),
            vec![FieldSpec::constant(vec![1.0])],
        )
        .unwrap();
        assert_eq!(ou.phi_functional(&[0.0], DerivMode::Analytic).unwrap(), 1.5);
    }

    #[test]
    fn phi_tilde_examples_and_monotonicity() {
        let ens = FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::constant(vec![2.0])]).unwrap();
        // r = 0 -> 0
        assert_eq!(ens.phi_tilde(&[1.0], 0.0, DerivMode::Analytic).unwrap(), 0.0);
        // c^2 + 2 c^2 x^2 at c=2, x=1, r=1 -> 4 + 8 = 12 = 3 c^2
        assert_abs_diff_eq!(
            ens.phi_tilde(&[1.0], 1.0, DerivMode::Analytic).unwrap(),
            12.0,
            epsilon = 1e-12
        );
        // negative r is an input error
        assert!(ens.phi_tilde(&[1.0], -0.1, DerivMode::Analytic).is_err());

        // monotone nondecreasing in r, sampled
        let mixed = FieldEnsemble::new(
            FieldSpec::sine(1, 0.8, 1.3),
            vec![FieldSpec::linear_scalar(1, 0.6)],
        )
        .unwrap();
        let rng = CounterRng::new(3, Stream::Initial, 5);
        for k in 0..100 {
            let x = [rng.normal(2 * k)];
            let r1 = rng.uniform(2 * k + 1) * 2.0;
            let r2 = r1 + 0.5;
            let p1 = mixed.phi_tilde(&x, r1, DerivMode::Analytic).unwrap();
            let p2 = mixed.phi_tilde(&x, r2, DerivMode::Analytic).unwrap();
            assert!(p1 >= 0.0 && p2 >= p1);
        }
    }

    #[test]
    fn lemma21_residual_examples() {
        // zero fields -> 0
        let zero = FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::zero(1)]).unwrap();
        assert!(zero.lemma21_residual(&[0.7], DerivMode::Analytic).unwrap() < 1e-14);

        // constant diffusions + linear drift: both sides closed-form
        let ens = FieldEnsemble::new(
            FieldSpec::linear(DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, -0.5])),
            vec![
                FieldSpec::constant(vec![1.0, 0.0]),
                FieldSpec::constant(vec![0.4, -0.2]),
            ],
        )
        .unwrap();
        let rng = CounterRng::new(17, Stream::Initial, 2);
        let mut x = [0.0; 2];
        for k in 0..10 {
            rng.gaussian_point(k, &mut x);
            assert!(ens.lemma21_residual(&x, DerivMode::Analytic).unwrap() <= 1e-6);
        }

        // d=m=1, A1 = sin x, A0 = 0 at x=1: nested finite differences
        let sine = FieldEnsemble::new(FieldSpec::zero(1), vec![FieldSpec::sine(1, 1.0, 1.0)]).unwrap();
        let res = sine.lemma21_residual(&[1.0], DerivMode::FiniteDifference).unwrap();
        assert!(res <= 1e-4, "residual {res}");
        // and the analytic route is much tighter
        let res_an = sine.lemma21_residual(&[1.0], DerivMode::Analytic).unwrap();
        assert!(res_an <= 1e-12, "residual {res_an}");
    }

    #[test]
    fn integration_by_parts_against_quadrature() {
        // <grad phi, A> integrates to phi * delta(A) against gamma_d, with
        // phi = polynomial * radial smoothstep cutoff (plateau far out, so
        // the quadrature sees a smooth integrand).
        let quad1 = GaussianIntegrator::new(1, 48, 0, 0);
        let quad2 = GaussianIntegrator::new(2, 48, 0, 0);
        let cut = |r: f64| -> (f64, f64) {
            // value and radial slope of the plateau cutoff at radius r
            let (lo, width) = (6.0, 2.0);
            if r <= lo {
                (1.0, 0.0)
            } else if r >= lo + width {
                (0.0, 0.0)
            } else {
                let s = (r - lo) / width;
                let q = 6.0 * s.powi(5) - 15.0 * s.powi(4) + 10.0 * s.powi(3);
                let dq = (30.0 * s.powi(4) - 60.0 * s.powi(3) + 30.0 * s.powi(2)) / width;
                (1.0 - q, -dq)
            }
        };
        // phi(x) = (x_1^3 - 2 x_1) * cut(|x|)
        let phi = |x: &[f64]| -> f64 {
            let r = euclid_norm(x);
            (x[0].powi(3) - 2.0 * x[0]) * cut(r).0
        };
        let grad_phi = |x: &[f64]| -> Vec<f64> {
            let r = euclid_norm(x);
            let (c, dc) = cut(r);
            let p = x[0].powi(3) - 2.0 * x[0];
            let mut g = vec![0.0; x.len()];
            g[0] = (3.0 * x[0] * x[0] - 2.0) * c;
            if r > 0.0 && dc != 0.0 {
                for i in 0..x.len() {
                    g[i] += p * dc * x[i] / r;
                }
            }
            g
        };
        let fields1 = vec![
            FieldSpec::constant(vec![1.4]),
            FieldSpec::linear_scalar(1, -0.8),
            FieldSpec::sine(1, 0.9, 1.1),
        ];
        for a in &fields1 {
            let lhs = quad1.expect(|x| dot(&grad_phi(x), &a.eval(x).unwrap()));
            let rhs = quad1.expect(|x| phi(x) * a.gauss_divergence(x, DerivMode::Analytic).unwrap());
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-7);
        }
        let fields2 = vec![
            FieldSpec::rotation(),
            FieldSpec::linear(DMatrix::from_row_slice(2, 2, &[0.3, -0.9, 0.5, -0.2])),
        ];
        for a in &fields2 {
            let lhs = quad2.expect(|x| dot(&grad_phi(x), &a.eval(x).unwrap()));
            let rhs = quad2.expect(|x| phi(x) * a.gauss_divergence(x, DerivMode::Analytic).unwrap());
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-7);
        }
    }

    #[test]
    fn scalar_diagnostics_bundle_the_functionals() {
        let ens = FieldEnsemble::new(
            FieldSpec::linear_scalar(1, -1.0),
            vec![FieldSpec::constant(vec![1.0])],
        )
        .unwrap();
        let d = ens.scalar_diagnostics(&[0.0], 1.0, DerivMode::Analytic).unwrap();
        assert_eq!(d.delta, 1.0); // (1 - x^2) at 0
        assert_eq!(d.phi, 1.5);
        // 2r|delta(A_0)| + r(|A_1|^2 + 2r delta(A_1)^2) = 2 + 1 + 0 at x = 0
        assert_eq!(d.phi_tilde_r, 3.0);
        assert_eq!(d.r, 1.0);
    }

    #[test]
    fn from_family_checks_arity() {
        assert!(FieldSpec::from_family("constant", 2, &[1.0]).is_err());
        assert!(FieldSpec::from_family("linear", 2, &[1.0, 0.0, 0.0, 1.0]).is_ok());
        assert!(FieldSpec::from_family("rotation", 3, &[]).is_err());
        assert!(FieldSpec::from_family("power-alpha", 1, &[0.5]).is_ok());
        assert!(FieldSpec::from_family("power-alpha", 1, &[1.5]).is_err());
        assert!(FieldSpec::from_family("nope", 1, &[]).is_err());
    }

    #[test]
    fn ensemble_requires_shared_dimension() {
        let err = FieldEnsemble::new(FieldSpec::zero(2), vec![FieldSpec::zero(1)]);
        assert!(err.is_err());
    }
}
