//! Finite-difference verification of the training gradient.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::training::{batch_loss, batch_loss_grad, TrainingSequence};
use super::transformer::SequenceModel;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-4;

/// Below this magnitude both gradients count as zero and the absolute
/// difference is reported instead of a ratio.
const ZERO_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(parameter index, analytic, numeric)` for every probed parameter.
    pub probes: Vec<(usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < ZERO_FLOOR {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compares the analytic gradient with central differences on `n_probes`
/// parameters drawn without replacement (all of them if fewer exist).
pub fn gradient_check(model: &SequenceModel, batch: &[TrainingSequence], n_probes: usize, seed: u64) -> Result<GradCheck> {
    let (_, grad) = batch_loss_grad(model, batch)?;
    let n = model.params().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = sample(&mut rng, n, n_probes.min(n)).into_vec();
    check_indices(model, batch, &grad, &indices)
}

/// Same as [`gradient_check`] but on caller-chosen parameter indices.
pub fn gradient_check_at(model: &SequenceModel, batch: &[TrainingSequence], indices: &[usize]) -> Result<GradCheck> {
    let (_, grad) = batch_loss_grad(model, batch)?;
    check_indices(model, batch, &grad, indices)
}

fn check_indices(model: &SequenceModel, batch: &[TrainingSequence], grad: &[f64], indices: &[usize]) -> Result<GradCheck> {
    let mut probe = model.clone();
    let mut probes = Vec::with_capacity(indices.len());
    let mut max_rel_error: f64 = 0.0;
    for &i in indices {
        if i >= grad.len() {
            return Err(Error::Shape(format!("parameter index {i} out of range")));
        }
        let original = probe.params()[i];
        probe.params_mut()[i] = original + FD_STEP;
        let up = batch_loss(&probe, batch)?;
        probe.params_mut()[i] = original - FD_STEP;
        let down = batch_loss(&probe, batch)?;
        probe.params_mut()[i] = original;
        let numeric = (up - down) / (2.0 * FD_STEP);
        max_rel_error = max_rel_error.max(relative_error(grad[i], numeric));
        probes.push((i, grad[i], numeric));
    }
    Ok(GradCheck { max_rel_error, probes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;

    fn cfg(layers: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: 8,
            context_length: 12,
            prediction_length: 3,
            embed_dim: 8,
            num_layers: layers,
            num_heads: 2,
            seed: 5,
            ..ModelConfig::default()
        }
    }

    fn batch() -> Vec<TrainingSequence> {
        vec![
            TrainingSequence::new(vec![2, 4, 6, 7, 3, 5, 2, 1], 5).unwrap(),
            TrainingSequence::new(vec![7, 7, 6, 2, 3, 4, 5, 6, 7, 1], 6).unwrap(),
        ]
    }

    #[test]
    fn two_layer_gradient_matches_finite_differences() {
        let m = SequenceModel::new(cfg(2)).unwrap();
        let report = gradient_check(&m, &batch(), 300, 1).unwrap();
        assert!(report.max_rel_error < 1e-3, "{}", report.max_rel_error);
    }

    #[test]
    fn linear_gradient_matches_finite_differences() {
        let m = SequenceModel::new(cfg(0)).unwrap();
        let report = gradient_check(&m, &batch(), 300, 2).unwrap();
        assert!(report.max_rel_error < 1e-5, "{}", report.max_rel_error);
    }

    #[test]
    fn unused_embedding_row_has_zero_gradient() {
        // token 0 (PAD) never appears in the batch
        let m = SequenceModel::new(cfg(2)).unwrap();
        let row: Vec<usize> = m.layout().embedding_row(0, 8).collect();
        let report = gradient_check_at(&m, &batch(), &row).unwrap();
        for (_, analytic, numeric) in report.probes {
            assert_eq!(analytic, 0.0);
            assert_eq!(numeric, 0.0);
        }
    }
}
