//! Sparse linear decoder: sigmoid hidden layer, affine reconstruction.
//!
//! Objective over `N` patch columns `P`:
//!
//! ```text
//! s  = σ(W1ᵀ P + b1)
//! P̃  = W2ᵀ s + b2
//! J  = c · Σ‖P̃ − P‖² + β · Σ_j KL(ρ ‖ ρ̂_j) + λ · (‖W1‖² + ‖W2‖²)
//! ```
//!
//! with `c = 1/N` ([`LossScale::Mean`]) or `c = 1` ([`LossScale::Sum`]) and
//! `ρ̂_j` the mean activation of hidden unit `j` over the batch.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::optim::{Lbfgs, Termination};
use crate::patchpipe::PatchMatrix;

/// Clamp applied to mean activations before the KL term.
pub const RHO_HAT_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossScale {
    /// Reconstruction error averaged over patches.
    #[default]
    Mean,
    /// Reconstruction error summed over patches.
    Sum,
}

impl FromStr for LossScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(LossScale::Mean),
            "sum" => Ok(LossScale::Sum),
            other => Err(Error::UnknownStrategy {
                kind: "loss scale",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for LossScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossScale::Mean => "mean",
            LossScale::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    /// Target mean activation.
    pub rho: f64,
    /// Sparsity penalty weight.
    pub beta: f64,
    /// Weight decay.
    pub lambda: f64,
    /// Optimizer iterations.
    pub epochs: usize,
    pub seed: i64,
    pub loss_scale: LossScale,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rho: 0.035,
            beta: 5.0,
            lambda: 3e-3,
            epochs: 400,
            seed: 0,
            loss_scale: LossScale::Mean,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho {} must lie in (0, 1)",
                self.rho
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta {} must be non-negative",
                self.beta
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda {} must be non-negative",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    /// Forward weights, `d×h`; column `j` is filter `j`.
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    /// Backward weights, `h×d`.
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Gradients of the objective, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl DecoderModel {
    pub fn new(
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
    ) -> Result<Self> {
        let (d, h) = w1.shape();
        if b1.len() != h || w2.shape() != (h, d) || b2.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "w1 {}x{}, b1 {}, w2 {}x{}, b2 {}",
                d,
                h,
                b1.len(),
                w2.nrows(),
                w2.ncols(),
                b2.len()
            )));
        }
        let m = Self { w1, b1, w2, b2 };
        if !m.params().iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite model parameter".into()));
        }
        Ok(m)
    }

    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            w1: DMatrix::zeros(d, h),
            b1: DVector::zeros(h),
            w2: DMatrix::zeros(h, d),
            b2: DVector::zeros(d),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn param_count(&self) -> usize {
        2 * self.input_dim() * self.hidden() + self.input_dim() + self.hidden()
    }

    /// Flattens parameters as `[w1, b1, w2, b2]`, matrices column-major.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(self.b1.as_slice());
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(self.b2.as_slice());
        v
    }

    pub fn set_params(&mut self, v: &[f64]) {
        let (d, h) = (self.input_dim(), self.hidden());
        assert_eq!(v.len(), self.param_count());
        let (w1, rest) = v.split_at(d * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(d * h);
        self.w1.as_mut_slice().copy_from_slice(w1);
        self.b1.as_mut_slice().copy_from_slice(b1);
        self.w2.as_mut_slice().copy_from_slice(w2);
        self.b2.as_mut_slice().copy_from_slice(b2);
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend_from_slice(self.w1.as_slice());
        v.extend_from_slice(self.b1.as_slice());
        v.extend_from_slice(self.w2.as_slice());
        v.extend_from_slice(self.b2.as_slice());
        v
    }
}

/// Logistic function without overflow for large `|z|`.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Weights uniform on `[-r, r]` with `r = √(6/(d+h+1))`, biases zero.
pub fn init_model(d: usize, h: usize, seed: i64) -> DecoderModel {
    let r = (6.0 / (d + h + 1) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut m = DecoderModel::zeros(d, h);
    for v in m.w1.iter_mut().chain(m.w2.iter_mut()) {
        *v = rng.random_range(-r..=r);
    }
    m
}

fn check_dim(m: &DecoderModel, data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() != m.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "patch dimension {} vs model input dimension {}",
            data.nrows(),
            m.input_dim()
        )));
    }
    Ok(())
}

fn responses_of(m: &DecoderModel, data: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = m.w1.tr_mul(data);
    for mut col in z.column_iter_mut() {
        col += &m.b1;
    }
    z.apply(|v| *v = sigmoid(*v));
    z
}

/// Hidden responses `σ(W1ᵀP + b1)`, one column per patch.
pub fn forward_responses(m: &DecoderModel, patches: &PatchMatrix) -> Result<DMatrix<f64>> {
    check_dim(m, patches.data())?;
    Ok(responses_of(m, patches.data()))
}

/// Affine reconstruction `W2ᵀs + b2`.
pub fn reconstruct(m: &DecoderModel, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if s.nrows() != m.hidden() {
        return Err(Error::DimensionMismatch(format!(
            "{} response rows vs {} hidden units",
            s.nrows(),
            m.hidden()
        )));
    }
    let mut out = m.w2.tr_mul(s);
    for mut col in out.column_iter_mut() {
        col += &m.b2;
    }
    Ok(out)
}

fn kl(rho: f64, rho_hat: f64) -> f64 {
    rho * (rho / rho_hat).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).ln()
}

/// Objective value and its exact gradient.
pub fn objective_and_gradient(
    m: &DecoderModel,
    patches: &PatchMatrix,
    cfg: &TrainingConfig,
) -> Result<(f64, Gradients)> {
    check_dim(m, patches.data())?;
    if patches.count() == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(objective_impl(m, patches.data(), cfg))
}

fn objective_impl(m: &DecoderModel, data: &DMatrix<f64>, cfg: &TrainingConfig) -> (f64, Gradients) {
    let n = data.ncols() as f64;
    let scale = match cfg.loss_scale {
        LossScale::Mean => 1.0 / n,
        LossScale::Sum => 1.0,
    };
    let s = responses_of(m, data);
    let mut resid = m.w2.tr_mul(&s);
    for (mut col, x) in resid.column_iter_mut().zip(data.column_iter()) {
        col += &m.b2;
        col -= x;
    }
    let recon = scale * resid.norm_squared();

    let mut rho_hat = s.column_mean();
    rho_hat.apply(|v| *v = v.clamp(RHO_HAT_CLAMP, 1.0 - RHO_HAT_CLAMP));
    let sparsity = cfg.beta * rho_hat.iter().map(|&r| kl(cfg.rho, r)).sum::<f64>();
    let decay = cfg.lambda * (m.w1.norm_squared() + m.w2.norm_squared());
    let value = recon + sparsity + decay;

    // Output delta: dJ/dP̃.
    let delta_out = resid * (2.0 * scale);
    let mut grad_w2 = &m.w2 * (2.0 * cfg.lambda);
    grad_w2 += &s * delta_out.transpose();
    let grad_b2 = row_sums(&delta_out);

    // dJ/ds, then through the sigmoid.
    let mut delta_hidden = &m.w2 * &delta_out;
    let kl_grad: DVector<f64> =
        rho_hat.map(|r| cfg.beta * (-cfg.rho / r + (1.0 - cfg.rho) / (1.0 - r)) / n);
    for (mut col, s_col) in delta_hidden.column_iter_mut().zip(s.column_iter()) {
        col += &kl_grad;
        col.zip_apply(&s_col, |d, a| *d *= a * (1.0 - a));
    }
    let mut grad_w1 = &m.w1 * (2.0 * cfg.lambda);
    grad_w1 += data * delta_hidden.transpose();
    let grad_b1 = row_sums(&delta_hidden);

    (
        value,
        Gradients {
            w1: grad_w1,
            b1: grad_b1,
            w2: grad_w2,
            b2: grad_b2,
        },
    )
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(m.nrows());
    for col in m.column_iter() {
        out += col;
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainedDecoder {
    pub model: DecoderModel,
    /// Objective before training and after each optimizer iteration.
    pub trace: Vec<f64>,
    pub termination: Termination,
}

impl TrainedDecoder {
    pub fn final_objective(&self) -> f64 {
        *self
            .trace
            .last()
            .expect("trace holds the initial objective")
    }
}

/// Full-batch L-BFGS minimization for `cfg.epochs` iterations from
/// `init_model(d, h, cfg.seed)`. Stops early only on convergence or when no
/// further decrease is possible.
pub fn train_decoder(
    patches: &PatchMatrix,
    h: usize,
    cfg: &TrainingConfig,
) -> Result<TrainedDecoder> {
    cfg.validate()?;
    if patches.count() == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if h == 0 {
        return Err(Error::InvalidArgument(
            "hidden width must be positive".into(),
        ));
    }
    let data = patches.data();
    let mut model = init_model(patches.dim(), h, cfg.seed);
    let mut scratch = model.clone();
    let mut objective = |x: &[f64], grad: &mut [f64]| {
        scratch.set_params(x);
        let (value, g) = objective_impl(&scratch, data, cfg);
        let (w1, rest) = grad.split_at_mut(g.w1.len());
        let (b1, rest) = rest.split_at_mut(g.b1.len());
        let (w2, b2) = rest.split_at_mut(g.w2.len());
        w1.copy_from_slice(g.w1.as_slice());
        b1.copy_from_slice(g.b1.as_slice());
        w2.copy_from_slice(g.w2.as_slice());
        b2.copy_from_slice(g.b2.as_slice());
        value
    };
    let mut params = model.params();
    let report = Lbfgs::default().minimize(&mut objective, &mut params, cfg.epochs);
    if report.termination == Termination::NonFinite {
        return Err(Error::TrainingDiverged {
            iteration: report.iterations(),
        });
    }
    model.set_params(&params);
    log::info!(
        "decoder h={}: objective {:.6e} -> {:.6e} in {} iterations ({:?})",
        h,
        report.trace[0],
        report.trace[report.trace.len() - 1],
        report.iterations(),
        report.termination
    );
    Ok(TrainedDecoder {
        model,
        trace: report.trace,
        termination: report.termination,
    })
}
