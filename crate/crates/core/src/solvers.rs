//! Closed-form ridge regression and joint gradient training of learned
//! attention with its regression weights.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteData(what.into()))
    }
}

fn check_rows(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {} rows vs {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

/// Ridge weights, inputs × outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: DMatrix<f64>,
    pub lambda: f64,
}

/// Normal equations of one design/target pair, reusable across λ values.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    gram: DMatrix<f64>,
    xty: DMatrix<f64>,
}

impl RidgeSystem {
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::ShapeMismatch("ridge fit needs at least one row".into()));
        }
        check_rows(x, y, "ridge fit")?;
        check_finite(x, "ridge inputs")?;
        check_finite(y, "ridge targets")?;
        Ok(Self {
            gram: x.tr_mul(x),
            xty: x.tr_mul(y),
        })
    }

    /// Solves `(XᵀX + λI) W = XᵀY` by Cholesky factorization.
    pub fn solve(&self, lambda: f64) -> Result<RidgeModel> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Range(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let p = self.gram.nrows();
        let mut system = self.gram.clone();
        for i in 0..p {
            system[(i, i)] += lambda;
        }
        let chol = match factor(&system, lambda == 0.0) {
            Some(c) => c,
            None if lambda > 0.0 => {
                for i in 0..p {
                    system[(i, i)] += 1e-10;
                }
                factor(&system, false).ok_or_else(|| {
                    Error::SingularSystem(format!("factorization failed at lambda {lambda}"))
                })?
            }
            None => {
                return Err(Error::SingularSystem(
                    "XᵀX is singular and lambda = 0".into(),
                ))
            }
        };
        let weights = chol.solve(&self.xty);
        check_finite(&weights, "ridge weights")?;
        Ok(RidgeModel { weights, lambda })
    }
}

fn factor(system: &DMatrix<f64>, strict: bool) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(system.clone())?;
    if strict {
        // Rounding can leave tiny positive pivots on a rank-deficient Gram matrix.
        let scale = system.diagonal().max().max(f64::MIN_POSITIVE);
        let l = chol.l_dirty();
        if (0..l.nrows()).any(|i| l[(i, i)].powi(2) <= 1e-12 * scale) {
            return None;
        }
    }
    Some(chol)
}

/// Minimizes `‖Y − XW‖²_F + λ‖W‖²_F` exactly.
pub fn ridge_fit(x: &DMatrix<f64>, y: &DMatrix<f64>, lambda: f64) -> Result<RidgeModel> {
    RidgeSystem::new(x, y)?.solve(lambda)
}

pub fn ridge_predict(model: &RidgeModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.weights.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} input columns, model expects {}",
            x.ncols(),
            model.weights.nrows()
        )));
    }
    Ok(x * &model.weights)
}

/// `‖Y − XW‖²_F + λ‖W‖²_F`.
pub fn ridge_objective(
    weights: &DMatrix<f64>,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
) -> Result<f64> {
    if x.ncols() != weights.nrows() || y.ncols() != weights.ncols() {
        return Err(Error::ShapeMismatch("ridge objective".into()));
    }
    check_rows(x, y, "ridge objective")?;
    let resid = y - x * weights;
    Ok(resid.norm_squared() + lambda * weights.norm_squared())
}

/// Adaptive-moment optimizer settings for the learned-attention model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Relative objective change over `convergence_window` epochs.
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian initialization of the attention matrix.
    pub init_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            max_epochs: 2000,
            convergence_tol: 1e-6,
            convergence_window: 10,
            seed: 0,
            init_scale: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be >= 1");
        }
        if self.convergence_window < 1 {
            return bad("convergence_window must be >= 1");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon <= 0.0 {
            return bad("epsilon must be > 0");
        }
        Ok(())
    }
}

/// Learned attention `A` (task features × stimulus features) and regression
/// weights `W_s` (stimulus features × outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModel {
    pub attention: DMatrix<f64>,
    pub weights: DMatrix<f64>,
    pub lambda: f64,
    pub lambda_a: f64,
    pub converged: bool,
    pub epochs: usize,
    /// `(epoch, objective)` every `convergence_window` epochs.
    pub checkpoints: Vec<(usize, f64)>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl AttentionModel {
    /// Attention weights `σ(tA)` for one task vector.
    pub fn task_attention(&self, task: &[f64]) -> Result<Vec<f64>> {
        if task.len() != self.attention.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "task vector of length {}, attention expects {}",
                task.len(),
                self.attention.nrows()
            )));
        }
        let t = DVector::from_column_slice(task);
        Ok((self.attention.tr_mul(&t)).iter().map(|&v| sigmoid(v)).collect())
    }
}

/// `(σ(tA) ⊗ s) W_s` for one trial.
pub fn attention_predict(model: &AttentionModel, task: &[f64], stimulus: &[f64]) -> Result<Vec<f64>> {
    let a = model.task_attention(task)?;
    if stimulus.len() != a.len() {
        return Err(Error::ShapeMismatch(format!(
            "stimulus of length {}, model expects {}",
            stimulus.len(),
            a.len()
        )));
    }
    let z = DVector::from_iterator(a.len(), a.iter().zip(stimulus).map(|(x, y)| x * y));
    Ok(model.weights.tr_mul(&z).iter().copied().collect())
}

/// Row-stacked version of [`attention_predict`].
pub fn attention_predict_rows(
    model: &AttentionModel,
    task_rows: &DMatrix<f64>,
    stimulus_rows: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_shapes(
        &model.attention,
        &model.weights,
        stimulus_rows,
        task_rows,
        None,
    )?;
    let (_, z) = gated_inputs(&model.attention, stimulus_rows, task_rows);
    Ok(z * &model.weights)
}

fn check_shapes(
    attention: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
    y: Option<&DMatrix<f64>>,
) -> Result<()> {
    check_rows(xs, xt, "stimulus vs task rows")?;
    if attention.nrows() != xt.ncols()
        || attention.ncols() != xs.ncols()
        || weights.nrows() != xs.ncols()
    {
        return Err(Error::ShapeMismatch(format!(
            "A {}x{}, W {}x{}, X_s {}x{}, X_t {}x{}",
            attention.nrows(),
            attention.ncols(),
            weights.nrows(),
            weights.ncols(),
            xs.nrows(),
            xs.ncols(),
            xt.nrows(),
            xt.ncols()
        )));
    }
    if let Some(y) = y {
        check_rows(xs, y, "inputs vs targets")?;
        if y.ncols() != weights.ncols() {
            return Err(Error::ShapeMismatch("targets vs weights".into()));
        }
    }
    Ok(())
}

// (gate = σ(X_t A), gated stimulus = gate ⊗ X_s)
fn gated_inputs(
    attention: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let gate = (xt * attention).map(sigmoid);
    let z = gate.component_mul(xs);
    (gate, z)
}

/// `‖Y − σ(X_t A) ⊗ X_s · W_s‖²_F + λ‖W_s‖²_F + λ_A‖A‖²_F`.
pub fn attention_objective(
    attention: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    lambda_a: f64,
) -> Result<f64> {
    check_shapes(attention, weights, xs, xt, Some(y))?;
    let (_, z) = gated_inputs(attention, xs, xt);
    let resid = z * weights - y;
    Ok(resid.norm_squared() + lambda * weights.norm_squared() + lambda_a * attention.norm_squared())
}

/// Objective value with analytic gradients with respect to `A` and `W_s`.
pub fn attention_gradients(
    attention: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    lambda_a: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    check_shapes(attention, weights, xs, xt, Some(y))?;
    Ok(gradients_unchecked(attention, weights, xs, xt, y, lambda, lambda_a))
}

fn gradients_unchecked(
    attention: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    lambda_a: f64,
) -> (f64, DMatrix<f64>, DMatrix<f64>) {
    let (gate, z) = gated_inputs(attention, xs, xt);
    let resid = &z * weights - y;
    let value = resid.norm_squared()
        + lambda * weights.norm_squared()
        + lambda_a * attention.norm_squared();
    let grad_w = (z.tr_mul(&resid) + weights * lambda) * 2.0;
    let grad_z = (&resid * weights.transpose()) * 2.0;
    let grad_pre = grad_z
        .component_mul(xs)
        .component_mul(&gate.map(|g| g * (1.0 - g)));
    let grad_a = xt.tr_mul(&grad_pre) + attention * (2.0 * lambda_a);
    (value, grad_a, grad_w)
}

struct Adam {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
}

impl Adam {
    fn new(shape: (usize, usize)) -> Self {
        Self {
            m: DMatrix::zeros(shape.0, shape.1),
            v: DMatrix::zeros(shape.0, shape.1),
        }
    }

    // Bias correction folded into the step size.
    fn step(&mut self, param: &mut DMatrix<f64>, grad: &DMatrix<f64>, step: f64, cfg: &SolverConfig) {
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        for ((p, g), (m, v)) in param
            .iter_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() + cfg.epsilon);
        }
    }
}

/// Full-batch adaptive-moment training of `A` and `W_s` from a seeded
/// Gaussian `A` and zero `W_s`. Returns the lowest-objective iterate seen;
/// `converged` is false when the epoch cap was hit first.
pub fn attention_fit(
    xs: &DMatrix<f64>,
    xt: &DMatrix<f64>,
    y: &DMatrix<f64>,
    lambda: f64,
    lambda_a: f64,
    config: &SolverConfig,
) -> Result<AttentionModel> {
    config.validate()?;
    for (v, name) in [(lambda, "lambda"), (lambda_a, "lambda_A")] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Range(format!("{name} must be finite and >= 0")));
        }
    }
    check_finite(xs, "stimulus rows")?;
    check_finite(xt, "task rows")?;
    check_finite(y, "targets")?;
    let (f_s, f_t, m) = (xs.ncols(), xt.ncols(), y.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_scale).map_err(|e| Error::Config(e.to_string()))?;
    let mut attention = DMatrix::from_fn(f_t, f_s, |_, _| normal.sample(&mut rng));
    let mut weights = DMatrix::zeros(f_s, m);
    check_shapes(&attention, &weights, xs, xt, Some(y))?;

    let mut adam_a = Adam::new(attention.shape());
    let mut adam_w = Adam::new(weights.shape());
    let mut best = (f64::INFINITY, attention.clone(), weights.clone());
    let mut trace: Vec<f64> = Vec::with_capacity(config.max_epochs + 1);
    let mut checkpoints = Vec::new();
    let mut converged = false;
    let mut epochs = 0;
    let window = config.convergence_window;

    for epoch in 0..=config.max_epochs {
        let (value, grad_a, grad_w) =
            gradients_unchecked(&attention, &weights, xs, xt, y, lambda, lambda_a);
        if !value.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if value < best.0 {
            best = (value, attention.clone(), weights.clone());
        }
        trace.push(value);
        if epoch % window == 0 {
            checkpoints.push((epoch, value));
        }
        if epoch >= window {
            let prev = trace[epoch - window];
            if (prev - value).abs() <= config.convergence_tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if epoch == config.max_epochs {
            break;
        }
        let t = (epoch + 1) as i32;
        let step = config.learning_rate * (1.0 - config.beta2.powi(t)).sqrt()
            / (1.0 - config.beta1.powi(t));
        adam_a.step(&mut attention, &grad_a, step, config);
        adam_w.step(&mut weights, &grad_w, step, config);
        epochs = epoch + 1;
    }

    Ok(AttentionModel {
        attention: best.1,
        weights: best.2,
        lambda,
        lambda_a,
        converged,
        epochs,
        checkpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_design_recovers_targets() {
        let x = DMatrix::<f64>::identity(4, 4);
        let y = DMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64);
        let m = ridge_fit(&x, &y, 0.0).unwrap();
        assert_eq!(m.weights, y);
        let row = ridge_predict(&m, &x.rows(2, 1).into_owned()).unwrap();
        assert_eq!(row, y.rows(2, 1).into_owned());
    }

    #[test]
    fn scalar_shrinkage() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let m = ridge_fit(&one, &one, 1.0).unwrap();
        assert_abs_diff_eq!(m.weights[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn singular_without_regularization() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DMatrix::from_element(3, 1, 1.0);
        assert!(matches!(ridge_fit(&x, &y, 0.0), Err(Error::SingularSystem(_))));
        assert!(ridge_fit(&x, &y, 1e-3).is_ok());
        let mut bad = x.clone();
        bad[(0, 0)] = f64::NAN;
        assert!(matches!(ridge_fit(&bad, &y, 1.0), Err(Error::NonFiniteData(_))));
    }

    #[test]
    fn prediction_linearity_and_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 8, 3);
        let y = random(&mut rng, 8, 2);
        let m = ridge_fit(&x, &y, 0.1).unwrap();
        let probe = random(&mut rng, 5, 3);
        let a = ridge_predict(&m, &(&probe * 2.5)).unwrap();
        let b = ridge_predict(&m, &probe).unwrap() * 2.5;
        for (u, v) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
        assert!(ridge_predict(&m, &DMatrix::zeros(2, 3)).unwrap().iter().all(|v| *v == 0.0));
        assert!(ridge_predict(&m, &DMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn objective_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, 10, 3);
        let y = random(&mut rng, 10, 2);
        let zero = DMatrix::zeros(3, 2);
        assert_abs_diff_eq!(
            ridge_objective(&zero, &x, &y, 1.0).unwrap(),
            y.norm_squared(),
            epsilon = 1e-12
        );
        let m = ridge_fit(&x, &y, 0.7).unwrap();
        let best = ridge_objective(&m.weights, &x, &y, 0.7).unwrap();
        for _ in 0..10 {
            let w = &m.weights + random(&mut rng, 3, 2) * 1e-3;
            assert!(ridge_objective(&w, &x, &y, 0.7).unwrap() >= best);
        }
        let ident = DMatrix::<f64>::identity(3, 3);
        let perfect = ridge_fit(&ident, &ident, 0.0).unwrap();
        assert_eq!(ridge_objective(&perfect.weights, &ident, &ident, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn weight_norm_shrinks_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&mut rng, 12, 4);
        let y = random(&mut rng, 12, 3);
        let sys = RidgeSystem::new(&x, &y).unwrap();
        let norms: Vec<f64> = [1e-3, 1e-1, 1.0, 10.0, 1e3]
            .iter()
            .map(|&l| sys.solve(l).unwrap().weights.norm())
            .collect();
        assert!(norms.windows(2).all(|w| w[0] >= w[1]));
    }

    fn toy_model(a: DMatrix<f64>, w: DMatrix<f64>) -> AttentionModel {
        AttentionModel {
            attention: a,
            weights: w,
            lambda: 0.0,
            lambda_a: 0.0,
            converged: true,
            epochs: 0,
            checkpoints: vec![],
        }
    }

    #[test]
    fn attention_forward_by_hand() {
        // t = [1, -1], A = [[0.5, 0], [0, 1]] -> tA = [0.5, -1]
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        let w = DMatrix::from_row_slice(2, 1, &[2.0, -3.0]);
        let model = toy_model(a, w);
        let s = [4.0, 1.0];
        let g0 = 1.0 / (1.0 + (-0.5f64).exp());
        let g1 = 1.0 / (1.0 + 1.0f64.exp());
        let expected = g0 * 4.0 * 2.0 + g1 * 1.0 * -3.0;
        let p = attention_predict(&model, &[1.0, -1.0], &s).unwrap();
        assert_abs_diff_eq!(p[0], expected, epsilon = 1e-14);

        let zero = toy_model(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 1, &[2.0, -3.0]));
        let p = attention_predict(&zero, &[7.0, 9.0], &s).unwrap();
        assert_abs_diff_eq!(p[0], 0.5 * (4.0 * 2.0 - 3.0), epsilon = 1e-14);
        assert_eq!(attention_predict(&zero, &[7.0, 9.0], &[0.0, 0.0]).unwrap(), vec![0.0]);
        assert!(attention_predict(&zero, &[7.0], &s).is_err());
    }

    #[test]
    fn zero_learning_rate_keeps_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = random(&mut rng, 6, 3);
        let xt = random(&mut rng, 6, 2);
        let y = random(&mut rng, 6, 4);
        let cfg = SolverConfig {
            learning_rate: 0.0,
            max_epochs: 1,
            seed: 42,
            ..Default::default()
        };
        let m = attention_fit(&xs, &xt, &y, 1.0, 1.0, &cfg).unwrap();
        let mut init_rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(0.0, 0.01).unwrap();
        let init = DMatrix::from_fn(2, 3, |_, _| normal.sample(&mut init_rng));
        assert_eq!(m.attention, init);
        assert!(m.weights.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn fit_is_reproducible_and_seed_sensitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = random(&mut rng, 10, 3);
        let xt = random(&mut rng, 10, 2);
        let y = random(&mut rng, 10, 4);
        let cfg = SolverConfig {
            learning_rate: 0.01,
            max_epochs: 200,
            ..Default::default()
        };
        let a = attention_fit(&xs, &xt, &y, 0.1, 0.1, &cfg).unwrap();
        let b = attention_fit(&xs, &xt, &y, 0.1, 0.1, &cfg).unwrap();
        assert_eq!(a, b);
        let c = attention_fit(&xs, &xt, &y, 0.1, 0.1, &SolverConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.attention, c.attention);
    }

    #[test]
    fn diverges_loudly() {
        let xs = DMatrix::from_element(2, 1, 1e200);
        let xt = DMatrix::from_element(2, 1, 1.0);
        let y = DMatrix::from_element(2, 1, 1e200);
        let cfg = SolverConfig {
            learning_rate: 1.0,
            max_epochs: 5,
            ..Default::default()
        };
        assert!(matches!(
            attention_fit(&xs, &xt, &y, 1.0, 1.0, &cfg),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { max_epochs: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
    }
}
