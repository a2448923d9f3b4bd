//! Linear probes over pooled activations.
//!
//! The probe pipeline mirrors a StandardScaler + LogisticRegression stack:
//! standardize per dimension, fit an L2-regularized binary logistic
//! regression by full-batch gradient descent with backtracking line search,
//! then map the coefficients back to raw activation space and normalize to
//! obtain a unit steering direction.

mod logreg;

use ndarray::{Array1, Array2, Axis};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{fl, Scalar};
use crate::types::LayerId;

pub use logreg::{
    evaluate_probe, fit_logreg, fit_logreg_traced, fit_probe, loss_and_gradient, FitTrace,
    LogRegOptions,
};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("need at least 2 samples to fit a scaler, got {0}")]
    TooFewSamples(usize),
    #[error("training split must contain exactly 2 classes, found {0}")]
    SingleClassDataset(usize),
    #[error("features contain non-finite values")]
    NonFiniteFeatures,
    #[error("dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("split contains no rows")]
    EmptySplit,
    #[error("weight vector is zero; no steering direction exists")]
    DegenerateWeights,
    #[error("positive class {0} not present in the data")]
    PositiveClassAbsent(u32),
    #[error("serialization: {0}")]
    Serde(String),
}

/// Per-dimension standardization statistics.
///
/// `scale` is the sample standard deviation; zero-variance dimensions are
/// clamped to 1 so standardization leaves them at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats<F> {
    pub mean: Vec<F>,
    pub scale: Vec<F>,
}

impl<F: Scalar> ScalerStats<F> {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardize a feature matrix: `(x - mean) / scale` per column.
    pub fn transform(&self, x: &Array2<F>) -> Array2<F> {
        assert_eq!(x.ncols(), self.dim(), "scaler dimension mismatch");
        let mut out = x.clone();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn transform_vec(&self, x: &Array1<F>) -> Array1<F> {
        assert_eq!(x.len(), self.dim(), "scaler dimension mismatch");
        Array1::from_iter(
            x.iter()
                .enumerate()
                .map(|(j, &v)| (v - self.mean[j]) / self.scale[j]),
        )
    }
}

/// Column means and sample standard deviations of a feature matrix.
pub fn fit_scaler<F: Scalar>(features: &Array2<F>) -> Result<ScalerStats<F>, ProbeError> {
    let n = features.nrows();
    if n < 2 {
        return Err(ProbeError::TooFewSamples(n));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFiniteFeatures);
    }
    let mean = features.mean_axis(Axis(0)).expect("n >= 2");
    let denom = fl::<F>((n - 1) as f64);
    let mut scale = Vec::with_capacity(features.ncols());
    for (j, col) in features.axis_iter(Axis(1)).enumerate() {
        let m = mean[j];
        let var = col.iter().map(|&v| (v - m) * (v - m)).sum::<F>() / denom;
        let sd = var.sqrt();
        scale.push(if sd > F::zero() { sd } else { F::one() });
    }
    Ok(ScalerStats {
        mean: mean.to_vec(),
        scale,
    })
}

/// A fitted binary probe for one (layer, timestep) cell.
#[derive(Debug, Clone)]
pub struct ProbeModel<F> {
    pub layer_id: LayerId,
    pub timestep: usize,
    pub scaler: ScalerStats<F>,
    /// Coefficients in standardized feature space.
    pub weights_std: Array1<F>,
    pub bias_std: F,
    pub positive_class: u32,
    pub train_accuracy: F,
    pub test_accuracy: F,
    pub converged: bool,
    pub n_iterations: usize,
}

impl<F: Scalar> ProbeModel<F> {
    pub fn dim(&self) -> usize {
        self.weights_std.len()
    }

    /// Decision value in standardized space: `w . x_std + b`.
    pub fn decision_std(&self, x_std: &Array1<F>) -> F {
        self.weights_std.dot(x_std) + self.bias_std
    }

    /// Decision value on a raw (unstandardized) vector, via the rescaled
    /// coefficients. Agrees with the standardized pipeline.
    pub fn decision_raw(&self, x_raw: &Array1<F>) -> Result<F, ProbeError> {
        if x_raw.len() != self.dim() {
            return Err(ProbeError::DimensionMismatch {
                expected: self.dim(),
                got: x_raw.len(),
            });
        }
        let (w, b) = rescale_weights(self);
        Ok(w.dot(x_raw) + b)
    }
}

/// Map standardized coefficients back to raw feature space:
/// `w_raw[j] = w_std[j] / scale[j]`,
/// `b_raw = b_std - sum_j w_std[j] * mean[j] / scale[j]`.
///
/// The raw-space decision function equals the standardize-then-score
/// pipeline exactly (in exact arithmetic).
pub fn rescale_weights<F: Scalar>(model: &ProbeModel<F>) -> (Array1<F>, F) {
    let d = model.dim();
    let mut w = Array1::zeros(d);
    let mut shift = F::zero();
    for j in 0..d {
        let scaled = model.weights_std[j] / model.scaler.scale[j];
        w[j] = scaled;
        shift += scaled * model.scaler.mean[j];
    }
    (w, model.bias_std - shift)
}

/// Timestep tag of a steering vector: a concrete probe step, or a single
/// distilled vector covering all steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SteeringTimestep {
    Step(usize),
    All,
}

impl Serialize for SteeringTimestep {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SteeringTimestep::Step(t) => serializer.serialize_u64(*t as u64),
            SteeringTimestep::All => serializer.serialize_str("ALL"),
        }
    }
}

impl<'de> Deserialize<'de> for SteeringTimestep {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(deserializer)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_u64()
                .map(|t| SteeringTimestep::Step(t as usize))
                .ok_or_else(|| serde::de::Error::custom("negative timestep")),
            serde_json::Value::String(s) if s == "ALL" => Ok(SteeringTimestep::All),
            other => Err(serde::de::Error::custom(format!(
                "timestep must be an integer or \"ALL\", got {other}"
            ))),
        }
    }
}

/// Unit-norm raw-space steering direction for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector<F> {
    pub layer_id: LayerId,
    pub timestep: SteeringTimestep,
    pub direction: Vec<F>,
    pub positive_class: u32,
}

impl<F: Scalar> SteeringVector<F> {
    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn norm(&self) -> F {
        self.direction
            .iter()
            .map(|&v| v * v)
            .sum::<F>()
            .sqrt()
    }
}

/// Normalize the rescaled probe weights into a steering direction.
/// The bias is dropped; only the orientation of the separating hyperplane
/// is kept.
pub fn steering_vector<F: Scalar>(model: &ProbeModel<F>) -> Result<SteeringVector<F>, ProbeError> {
    let (w, _) = rescale_weights(model);
    let norm = w.iter().map(|&v| v * v).sum::<F>().sqrt();
    if norm == F::zero() || !norm.is_finite() {
        return Err(ProbeError::DegenerateWeights);
    }
    Ok(SteeringVector {
        layer_id: model.layer_id.clone(),
        timestep: SteeringTimestep::Step(model.timestep),
        direction: w.iter().map(|&v| v / norm).collect(),
        positive_class: model.positive_class,
    })
}

/// Class and probability for a raw activation vector.
/// The class is the positive class iff the probability is >= 0.5.
pub fn predict<F: Scalar>(
    model: &ProbeModel<F>,
    raw: &Array1<F>,
    negative_class: u32,
) -> Result<(u32, F), ProbeError> {
    let z = model.decision_raw(raw)?;
    let p = sigmoid(z);
    let class = if p >= fl(0.5) {
        model.positive_class
    } else {
        negative_class
    };
    Ok((class, p))
}

pub(crate) fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

// ---------------------------------------------------------------------------
// JSON serialization (full precision; f64 on the wire)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ProbeModelJson {
    layer_id: LayerId,
    timestep: usize,
    scaler: ScalerStats<f64>,
    weights_std: Vec<f64>,
    bias_std: f64,
    positive_class: u32,
    train_accuracy: f64,
    test_accuracy: f64,
    converged: bool,
    n_iterations: usize,
}

impl<F: Scalar> ProbeModel<F> {
    pub fn to_json(&self) -> Result<String, ProbeError> {
        let dto = ProbeModelJson {
            layer_id: self.layer_id.clone(),
            timestep: self.timestep,
            scaler: ScalerStats {
                mean: self.scaler.mean.iter().map(|v| v.to_f64().unwrap()).collect(),
                scale: self.scaler.scale.iter().map(|v| v.to_f64().unwrap()).collect(),
            },
            weights_std: self.weights_std.iter().map(|v| v.to_f64().unwrap()).collect(),
            bias_std: self.bias_std.to_f64().unwrap(),
            positive_class: self.positive_class,
            train_accuracy: self.train_accuracy.to_f64().unwrap(),
            test_accuracy: self.test_accuracy.to_f64().unwrap(),
            converged: self.converged,
            n_iterations: self.n_iterations,
        };
        serde_json::to_string_pretty(&dto).map_err(|e| ProbeError::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        let dto: ProbeModelJson =
            serde_json::from_str(text).map_err(|e| ProbeError::Serde(e.to_string()))?;
        Ok(ProbeModel {
            layer_id: dto.layer_id,
            timestep: dto.timestep,
            scaler: ScalerStats {
                mean: dto.scaler.mean.iter().map(|&v| fl(v)).collect(),
                scale: dto.scaler.scale.iter().map(|&v| fl(v)).collect(),
            },
            weights_std: dto.weights_std.iter().map(|&v| fl(v)).collect(),
            bias_std: fl(dto.bias_std),
            positive_class: dto.positive_class,
            train_accuracy: fl(dto.train_accuracy),
            test_accuracy: fl(dto.test_accuracy),
            converged: dto.converged,
            n_iterations: dto.n_iterations,
        })
    }
}

impl<F: Scalar + Serialize + DeserializeOwned> SteeringVector<F> {
    pub fn to_json(&self) -> Result<String, ProbeError> {
        serde_json::to_string_pretty(self).map_err(|e| ProbeError::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, ProbeError> {
        serde_json::from_str(text).map_err(|e| ProbeError::Serde(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn model_with(
        weights_std: Array1<f64>,
        bias_std: f64,
        mean: Vec<f64>,
        scale: Vec<f64>,
    ) -> ProbeModel<f64> {
        ProbeModel {
            layer_id: LayerId::new("mid.0.attn.self"),
            timestep: 3,
            scaler: ScalerStats { mean, scale },
            weights_std,
            bias_std,
            positive_class: 1,
            train_accuracy: 0.0,
            test_accuracy: 0.0,
            converged: true,
            n_iterations: 1,
        }
    }

    #[test]
    fn scaler_two_point_column() {
        let x = array![[0.0f64], [2.0]];
        let s = fit_scaler(&x).unwrap();
        assert_abs_diff_eq!(s.mean[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.scale[0], 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn scaler_constant_column_clamps_to_one() {
        let x = array![[5.0f64, 1.0], [5.0, 3.0], [5.0, 5.0]];
        let s = fit_scaler(&x).unwrap();
        assert_eq!(s.scale[0], 1.0);
        let z = s.transform(&x);
        for i in 0..3 {
            assert_eq!(z[[i, 0]], 0.0);
        }
    }

    #[test]
    fn standardize_then_fit_is_idempotent() {
        let mut rng = crate::rng::stream(11, "scaler", 0);
        use rand::Rng;
        let x = Array2::<f64>::from_shape_fn((200, 6), |_| rng.random::<f64>() * 4.0 - 2.0);
        let s = fit_scaler(&x).unwrap();
        let z = s.transform(&x);
        let s2 = fit_scaler(&z).unwrap();
        for j in 0..6 {
            assert_abs_diff_eq!(s2.mean[j], 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(s2.scale[j], 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let x = array![[1.0f64, 2.0]];
        assert!(matches!(fit_scaler(&x), Err(ProbeError::TooFewSamples(1))));
    }

    #[test]
    fn rescale_simple_division() {
        let m = model_with(array![2.0], 0.0, vec![0.0], vec![4.0]);
        let (w, b) = rescale_weights(&m);
        assert_eq!(w[0], 0.5);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn rescale_passes_clamped_constant_feature_through() {
        let m = model_with(array![3.0, 1.5], 0.25, vec![0.0, 0.0], vec![1.0, 1.0]);
        let (w, b) = rescale_weights(&m);
        assert_eq!(w[0], 3.0);
        assert_eq!(w[1], 1.5);
        assert_eq!(b, 0.25);
    }

    #[test]
    fn raw_and_standardized_decisions_agree() {
        // Random model + random raw inputs: both pipelines must agree in
        // sign everywhere and in value to 1e-6 relative.
        let mut rng = crate::rng::stream(3, "equiv", 0);
        use rand::Rng;
        let d = 16;
        let m = model_with(
            Array1::from_shape_fn(d, |_| rng.random::<f64>() * 2.0 - 1.0),
            rng.random::<f64>() - 0.5,
            (0..d).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect(),
            (0..d).map(|_| rng.random::<f64>() * 3.0 + 0.1).collect(),
        );
        for _ in 0..1000 {
            let x = Array1::from_shape_fn(d, |_| rng.random::<f64>() * 20.0 - 10.0);
            let via_std = m.decision_std(&m.scaler.transform_vec(&x));
            let via_raw = m.decision_raw(&x).unwrap();
            let rel = (via_std - via_raw).abs() / via_std.abs().max(1e-9);
            assert!(rel < 1e-6, "{via_std} vs {via_raw}");
            assert_eq!(via_std > 0.0, via_raw > 0.0);
        }
    }

    #[test]
    fn steering_vector_normalizes() {
        let m = model_with(array![3.0, 4.0], 0.7, vec![0.0, 0.0], vec![1.0, 1.0]);
        let s = steering_vector(&m).unwrap();
        assert_abs_diff_eq!(s.direction[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(s.direction[1], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn steering_vector_hand_computed_rescale() {
        // weights_std = (1, 1), scale = (2, 1), mean = 0
        // -> raw (0.5, 1) -> direction (0.4472, 0.8944).
        let m = model_with(array![1.0, 1.0], 0.0, vec![0.0, 0.0], vec![2.0, 1.0]);
        let s = steering_vector(&m).unwrap();
        assert_abs_diff_eq!(s.direction[0], 0.4472135954999579, epsilon = 1e-9);
        assert_abs_diff_eq!(s.direction[1], 0.8944271909999159, epsilon = 1e-9);
    }

    #[test]
    fn zero_weights_are_degenerate() {
        let m = model_with(array![0.0, 0.0], 0.5, vec![1.0, 2.0], vec![1.0, 1.0]);
        assert!(matches!(
            steering_vector(&m),
            Err(ProbeError::DegenerateWeights)
        ));
    }

    #[test]
    fn steering_direction_invariant_to_positive_rescaling() {
        let m1 = model_with(array![0.3, -0.9, 0.2], 0.0, vec![0.0; 3], vec![1.0; 3]);
        let mut m2 = m1.clone();
        m2.weights_std.mapv_inplace(|v| v * 73.5);
        let s1 = steering_vector(&m1).unwrap();
        let s2 = steering_vector(&m2).unwrap();
        for (a, b) in s1.direction.iter().zip(&s2.direction) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn predict_on_boundary_is_half() {
        let m = model_with(array![1.0], 0.0, vec![0.0], vec![1.0]);
        let (_, p) = predict(&m, &array![0.0], 0).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn predict_far_from_boundary_saturates() {
        // Boundary point + 10 * direction under large weights.
        let m = model_with(array![50.0], 0.0, vec![0.0], vec![1.0]);
        let (class, p) = predict(&m, &array![10.0], 0).unwrap();
        assert_eq!(class, 1);
        assert!(p > 0.99);
    }

    #[test]
    fn predict_dimension_mismatch() {
        let m = model_with(array![1.0, 2.0], 0.0, vec![0.0; 2], vec![1.0; 2]);
        assert!(matches!(
            predict(&m, &array![1.0], 0),
            Err(ProbeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn probe_model_json_roundtrip() {
        let m = model_with(
            array![0.123456789012345, -2.5],
            0.375,
            vec![1.0, -1.0],
            vec![2.0, 0.5],
        );
        let text = m.to_json().unwrap();
        let back = ProbeModel::<f64>::from_json(&text).unwrap();
        assert_eq!(m.weights_std, back.weights_std);
        assert_eq!(m.scaler, back.scaler);
        assert_eq!(m.bias_std, back.bias_std);
    }

    #[test]
    fn steering_timestep_json_forms() {
        let v = SteeringVector::<f64> {
            layer_id: LayerId::new("mid.0.attn.self"),
            timestep: SteeringTimestep::All,
            direction: vec![1.0],
            positive_class: 1,
        };
        let text = v.to_json().unwrap();
        assert!(text.contains("\"ALL\""));
        let back = SteeringVector::<f64>::from_json(&text).unwrap();
        assert_eq!(back.timestep, SteeringTimestep::All);
        let v2 = SteeringVector::<f64> {
            timestep: SteeringTimestep::Step(17),
            ..v
        };
        let text2 = v2.to_json().unwrap();
        let back2 = SteeringVector::<f64>::from_json(&text2).unwrap();
        assert_eq!(back2.timestep, SteeringTimestep::Step(17));
    }
}
