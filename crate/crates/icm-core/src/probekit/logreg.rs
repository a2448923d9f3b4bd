//! Binary logistic regression by full-batch gradient descent with
//! backtracking line search.
//!
//! Objective (positive class encoded +1, the other -1, bias unregularized):
//!
//! ```text
//! J(w, b) = (l2 / 2) ||w||^2 + sum_i log(1 + exp(-y_i (w . x_i + b)))
//! ```
//!
//! Converged means the gradient infinity-norm dropped below `tol` within
//! `max_iter` iterations; probes that stop at the iteration cap still carry
//! usable coefficients and accuracies.

use ndarray::{Array1, Array2};

use crate::actstore::ProbeDataset;
use crate::scalar::{fl, Scalar};

use super::{fit_scaler, sigmoid, ProbeError, ProbeModel, ScalerStats};

#[derive(Debug, Clone, Copy)]
pub struct LogRegOptions<F> {
    pub max_iter: usize,
    pub tol: F,
    pub l2: F,
    /// Class treated as +1; defaults to the larger of the two class ids.
    pub positive_class: Option<u32>,
}

impl<F: Scalar> Default for LogRegOptions<F> {
    fn default() -> Self {
        LogRegOptions {
            max_iter: 1000,
            tol: fl(1e-6),
            l2: fl(1.0),
            positive_class: None,
        }
    }
}

/// Loss curve of one fit; exposed for the monotonicity property.
#[derive(Debug, Clone)]
pub struct FitTrace<F> {
    pub losses: Vec<F>,
    pub grad_inf_norm: F,
}

/// Regularized negative log-likelihood and its gradient.
pub fn loss_and_gradient<F: Scalar>(
    x: &Array2<F>,
    y_pm: &[F],
    w: &Array1<F>,
    b: F,
    l2: F,
) -> (F, Array1<F>, F) {
    let z = x.dot(w);
    let mut loss = F::zero();
    let mut resid = Array1::<F>::zeros(y_pm.len());
    for i in 0..y_pm.len() {
        let m = y_pm[i] * (z[i] + b);
        loss += stable_log1p_exp_neg(m);
        // d/dz log1p(exp(-y z)) = -y * sigmoid(-y z)
        resid[i] = -y_pm[i] * sigmoid(-m);
    }
    let half = fl::<F>(0.5);
    loss += half * l2 * w.dot(w);
    let grad_w = x.t().dot(&resid) + &(w * l2);
    let grad_b = resid.sum();
    (loss, grad_w, grad_b)
}

/// log(1 + exp(-m)) without overflow.
fn stable_log1p_exp_neg<F: Scalar>(m: F) -> F {
    if m >= F::zero() {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

fn loss_only<F: Scalar>(x: &Array2<F>, y_pm: &[F], w: &Array1<F>, b: F, l2: F) -> F {
    let z = x.dot(w);
    let mut loss = F::zero();
    for i in 0..y_pm.len() {
        loss += stable_log1p_exp_neg(y_pm[i] * (z[i] + b));
    }
    loss + fl::<F>(0.5) * l2 * w.dot(w)
}

/// Fit on a dataset whose features are already standardized with `scaler`.
/// Fills train/test accuracy via the raw/standardized-equivalent decision.
pub fn fit_logreg<F: Scalar>(
    dataset: &ProbeDataset<F>,
    scaler: &ScalerStats<F>,
    opts: &LogRegOptions<F>,
) -> Result<ProbeModel<F>, ProbeError> {
    let (model, _) = fit_logreg_traced(dataset, scaler, opts)?;
    Ok(model)
}

pub fn fit_logreg_traced<F: Scalar>(
    dataset: &ProbeDataset<F>,
    scaler: &ScalerStats<F>,
    opts: &LogRegOptions<F>,
) -> Result<(ProbeModel<F>, FitTrace<F>), ProbeError> {
    let (x_train, y_train) = dataset.split_rows(true);
    let (x_test, y_test) = dataset.split_rows(false);
    if x_train.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFiniteFeatures);
    }
    let mut classes: Vec<u32> = y_train.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() != 2 {
        return Err(ProbeError::SingleClassDataset(classes.len()));
    }
    let positive = match opts.positive_class {
        Some(p) => {
            if !classes.contains(&p) {
                return Err(ProbeError::PositiveClassAbsent(p));
            }
            p
        }
        None => classes[1],
    };

    let encode = |labels: &[u32]| -> Vec<F> {
        labels
            .iter()
            .map(|&c| if c == positive { F::one() } else { -F::one() })
            .collect()
    };
    let y_pm = encode(&y_train);

    let d = x_train.ncols();
    let mut w = Array1::<F>::zeros(d);
    let mut b = F::zero();
    let mut losses = Vec::with_capacity(opts.max_iter + 1);
    let mut converged = false;
    let mut n_iterations = 0;
    let mut step = F::one();
    let armijo = fl::<F>(1e-4);
    let mut grad_inf = F::infinity();

    let (mut loss, mut grad_w, mut grad_b) = loss_and_gradient(&x_train, &y_pm, &w, b, opts.l2);
    losses.push(loss);

    for iter in 0..opts.max_iter {
        grad_inf = grad_w
            .iter()
            .fold(grad_b.abs(), |acc, &g| acc.max(g.abs()));
        if grad_inf < opts.tol {
            converged = true;
            n_iterations = iter;
            break;
        }
        let g_sq = grad_w.dot(&grad_w) + grad_b * grad_b;
        // Grow the step back after successful iterations, then backtrack.
        step = (step + step).min(fl(1e4));
        let mut accepted = false;
        for _ in 0..60 {
            let w_try = &w - &(&grad_w * step);
            let b_try = b - step * grad_b;
            let loss_try = loss_only(&x_train, &y_pm, &w_try, b_try, opts.l2);
            if loss_try <= loss - armijo * step * g_sq {
                w = w_try;
                b = b_try;
                accepted = true;
                break;
            }
            step = step * fl(0.5);
        }
        n_iterations = iter + 1;
        if !accepted {
            // Step underflowed; gradient is numerically flat.
            converged = grad_inf < opts.tol;
            break;
        }
        let (l, gw, gb) = loss_and_gradient(&x_train, &y_pm, &w, b, opts.l2);
        loss = l;
        grad_w = gw;
        grad_b = gb;
        losses.push(loss);
    }
    if !converged && grad_inf < opts.tol {
        converged = true;
    }

    let mut model = ProbeModel {
        layer_id: dataset.layer_id.clone(),
        timestep: dataset.timestep,
        scaler: scaler.clone(),
        weights_std: w,
        bias_std: b,
        positive_class: positive,
        train_accuracy: F::zero(),
        test_accuracy: F::zero(),
        converged,
        n_iterations,
    };
    model.train_accuracy = accuracy_std(&model, &x_train, &y_train);
    model.test_accuracy = accuracy_std(&model, &x_test, &y_test);
    Ok((
        model,
        FitTrace {
            losses,
            grad_inf_norm: grad_inf,
        },
    ))
}

/// Convenience: fit the scaler on the train split, standardize everything,
/// and fit the probe. This is the per-cell unit of the score grid.
pub fn fit_probe<F: Scalar>(
    dataset: &ProbeDataset<F>,
    opts: &LogRegOptions<F>,
) -> Result<ProbeModel<F>, ProbeError> {
    let (x_train, _) = dataset.split_rows(true);
    let scaler = fit_scaler(&x_train)?;
    let mut std_ds = dataset.clone();
    std_ds.features = scaler.transform(&dataset.features);
    fit_logreg(&std_ds, &scaler, opts)
}

fn accuracy_std<F: Scalar>(model: &ProbeModel<F>, x_std: &Array2<F>, labels: &[u32]) -> F {
    if labels.is_empty() {
        return F::zero();
    }
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let z = model.decision_std(&x_std.row(i).to_owned());
        let predicted_positive = z >= F::zero();
        if predicted_positive == (label == model.positive_class) {
            correct += 1;
        }
    }
    fl::<F>(correct as f64 / labels.len() as f64)
}

/// Accuracy of a probe on raw (unstandardized) rows.
/// Ties on the decision boundary go to the positive class.
pub fn evaluate_probe<F: Scalar>(
    model: &ProbeModel<F>,
    features_raw: &Array2<F>,
    labels: &[u32],
) -> Result<F, ProbeError> {
    if labels.is_empty() || features_raw.nrows() == 0 {
        return Err(ProbeError::EmptySplit);
    }
    if features_raw.ncols() != model.dim() {
        return Err(ProbeError::DimensionMismatch {
            expected: model.dim(),
            got: features_raw.ncols(),
        });
    }
    let (w, b) = super::rescale_weights(model);
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let z = features_raw.row(i).dot(&w) + b;
        let predicted_positive = z >= F::zero();
        if predicted_positive == (label == model.positive_class) {
            correct += 1;
        }
    }
    Ok(fl::<F>(correct as f64 / labels.len() as f64))
}
