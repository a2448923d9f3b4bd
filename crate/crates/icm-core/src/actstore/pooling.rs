//! Spatial pooling of raw activation tensors.
//!
//! Average pooling over all spatial tokens is the default representation;
//! the patches mode instead keeps `k` raw token rows sampled without
//! replacement, for the scalability comparison.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

use super::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingMode {
    Mean,
    Patches { k: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pooled<F> {
    Mean(Array1<F>),
    Patches(Vec<Array1<F>>),
}

impl<F: Scalar> Pooled<F> {
    pub fn into_vectors(self) -> Vec<Array1<F>> {
        match self {
            Pooled::Mean(v) => vec![v],
            Pooled::Patches(vs) => vs,
        }
    }
}

/// Pool a token-by-channel activation matrix.
///
/// Mean mode returns the arithmetic column mean. Patches mode returns `k`
/// rows sampled uniformly without replacement; the selection is a pure
/// function of the seed.
pub fn pool_activation<F: Scalar>(
    raw: &Array2<F>,
    mode: PoolingMode,
) -> Result<Pooled<F>, StoreError> {
    let rows = raw.nrows();
    if rows == 0 {
        return Err(StoreError::EmptyTensor);
    }
    match mode {
        PoolingMode::Mean => {
            let mean = raw.mean_axis(Axis(0)).expect("nonempty by check above");
            Ok(Pooled::Mean(mean))
        }
        PoolingMode::Patches { k, seed } => {
            if k > rows {
                return Err(StoreError::PatchCountExceedsTokens { k, rows });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picks = rand::seq::index::sample(&mut rng, rows, k);
            let out = picks
                .into_iter()
                .map(|i| raw.row(i).to_owned())
                .collect();
            Ok(Pooled::Patches(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mean_of_two_rows() {
        let raw = array![[1.0f64, 3.0], [3.0, 5.0]];
        let Pooled::Mean(v) = pool_activation(&raw, PoolingMode::Mean).unwrap() else {
            panic!("expected mean");
        };
        assert_eq!(v, array![2.0, 4.0]);
    }

    #[test]
    fn mean_of_single_row_is_identity() {
        let raw = array![[0.25f32, -1.5, 7.0]];
        let Pooled::Mean(v) = pool_activation(&raw, PoolingMode::Mean).unwrap() else {
            panic!("expected mean");
        };
        assert_eq!(v, array![0.25f32, -1.5, 7.0]);
    }

    #[test]
    fn empty_tensor_rejected() {
        let raw = Array2::<f64>::zeros((0, 4));
        assert!(matches!(
            pool_activation(&raw, PoolingMode::Mean),
            Err(StoreError::EmptyTensor)
        ));
    }

    #[test]
    fn patches_are_input_rows_and_reproducible() {
        let raw = Array2::<f32>::from_shape_fn((64, 6), |(i, j)| (i * 31 + j * 7) as f32 * 0.125);
        let mode = PoolingMode::Patches { k: 10, seed: 7 };
        let Pooled::Patches(first) = pool_activation(&raw, mode).unwrap() else {
            panic!("expected patches");
        };
        assert_eq!(first.len(), 10);
        // Membership: every patch is bit-identical to some input row.
        for patch in &first {
            let found = (0..64).any(|i| {
                raw.row(i)
                    .iter()
                    .zip(patch.iter())
                    .all(|(a, b)| a.to_bits() == b.to_bits())
            });
            assert!(found, "patch not found among input rows");
        }
        // Multiset reproducibility across runs.
        let Pooled::Patches(second) = pool_activation(&raw, mode).unwrap() else {
            panic!("expected patches");
        };
        assert_eq!(first, second);
        // Without replacement: all distinct rows.
        let mut keys: Vec<Vec<u32>> = first
            .iter()
            .map(|p| p.iter().map(|v| v.to_bits()).collect())
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 10);
    }

    #[test]
    fn patch_count_exceeding_rows_rejected() {
        let raw = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            pool_activation(&raw, PoolingMode::Patches { k: 4, seed: 0 }),
            Err(StoreError::PatchCountExceedsTokens { k: 4, rows: 3 })
        ));
    }

    #[test]
    fn mean_matches_bruteforce_on_large_random_matrix() {
        // Brute-force per-column sum / row-count as the independent oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        use rand::Rng;
        let raw = Array2::<f64>::from_shape_fn((4096, 512), |_| rng.random::<f64>() * 2.0 - 1.0);
        let Pooled::Mean(v) = pool_activation(&raw, PoolingMode::Mean).unwrap() else {
            panic!("expected mean");
        };
        for j in 0..512 {
            let mut acc = 0.0f64;
            for i in 0..4096 {
                acc += raw[[i, j]];
            }
            let oracle = acc / 4096.0;
            let rel = (v[j] - oracle).abs() / oracle.abs().max(1e-12);
            assert!(rel < 1e-6, "column {j}: {} vs {}", v[j], oracle);
        }
    }
}
