//! The pre-processor: score an image against every learned conductance row,
//! pick the top-k matches, combine them into a context vector and blend that
//! context back into the image to form a template of the same shape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::snn::SnnModel;

/// Pre-processor knobs. `blend_weight` is the context share of the convex
/// blend; `invert_context` flips the combined conductances back to image
/// polarity (dark pixels spike faster, so learned rows encode inverted
/// intensity); `score_inverted_input` applies the same flip to the scoring
/// input so selection compares like with like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextParams {
    pub blend_weight: f64,
    pub top_k: usize,
    pub invert_context: bool,
    pub score_inverted_input: bool,
}

impl Default for ContextParams {
    fn default() -> Self {
        ContextParams {
            blend_weight: 0.5,
            top_k: 5,
            invert_context: true,
            score_inverted_input: true,
        }
    }
}

impl ContextParams {
    pub fn validate(&self, neuron_count: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.blend_weight) {
            return Err(Error::Config("context: blend weight must be in [0, 1]".into()));
        }
        if self.top_k == 0 || self.top_k > neuron_count {
            return Err(Error::Config(format!(
                "context: top_k {} outside 1..={neuron_count}",
                self.top_k
            )));
        }
        Ok(())
    }
}

/// Pre-processor output: an image-shaped vector in [0, 1] plus the neurons
/// and scores that produced it.
#[derive(Debug, Clone)]
pub struct ContextTemplate {
    pub values: Vec<f32>,
    pub source_neurons: Vec<usize>,
    pub score_vector: Vec<f32>,
}

fn check_image(model: &SnnModel, image: &[f32]) -> Result<()> {
    if image.len() != model.input_len() {
        return Err(Error::Shape {
            expected: model.input_len(),
            got: image.len(),
        });
    }
    if let Some(v) = image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("image intensity {v} outside [0, 1]")));
    }
    Ok(())
}

/// Score an image against every neuron: `L[j] = dot(g_row_j, image)`.
/// Pixel intensities are used directly, without spike conversion.
pub fn score(model: &SnnModel, image: &[f32]) -> Result<Vec<f32>> {
    check_image(model, image)?;
    Ok((0..model.neuron_count())
        .map(|j| {
            model
                .g_row(j)
                .iter()
                .zip(image)
                .map(|(&g, &x)| g as f64 * x as f64)
                .sum::<f64>() as f32
        })
        .collect())
}

/// Indices of the `k` largest scores, ordered by descending score with ties
/// broken by ascending neuron index.
pub fn top_k_select(scores: &[f32], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Config(format!(
            "top_k: k {k} outside 1..={}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

/// Min-max rescale to [0, 1]; a constant vector maps to all 0.5.
fn min_max_rescale(values: &mut [f32]) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi > lo {
        let span = hi - lo;
        for v in values.iter_mut() {
            *v = (*v - lo) / span;
        }
    } else {
        values.fill(0.5);
    }
}

/// Element-wise sum of the selected conductance rows, min-max normalized to
/// [0, 1] so it shares a scale with pixel intensities.
pub fn combine_contexts(model: &SnnModel, indices: &[usize]) -> Result<Vec<f32>> {
    if indices.is_empty() {
        return Err(Error::Config("combine_contexts: no neurons selected".into()));
    }
    let mut sum = vec![0.0f32; model.input_len()];
    for &j in indices {
        if j >= model.neuron_count() {
            return Err(Error::Config(format!(
                "combine_contexts: neuron {j} outside 0..{}",
                model.neuron_count()
            )));
        }
        for (acc, &g) in sum.iter_mut().zip(model.g_row(j)) {
            *acc += g;
        }
    }
    min_max_rescale(&mut sum);
    Ok(sum)
}

/// Build a template: select top-k contexts, blend
/// `(1 - w) * image + w * context` and min-max rescale to [0, 1]. The output
/// always has the input dimension, so downstream classifiers need no
/// architectural change.
pub fn extract_template(
    model: &SnnModel,
    image: &[f32],
    params: &ContextParams,
) -> Result<ContextTemplate> {
    params.validate(model.neuron_count())?;
    check_image(model, image)?;
    let scores = if params.score_inverted_input {
        let inverted: Vec<f32> = image.iter().map(|&v| 1.0 - v).collect();
        score(model, &inverted)?
    } else {
        score(model, image)?
    };
    let selected = top_k_select(&scores, params.top_k)?;
    let mut context = combine_contexts(model, &selected)?;
    if params.invert_context {
        for v in context.iter_mut() {
            *v = 1.0 - *v;
        }
    }
    let w = params.blend_weight as f32;
    let mut values: Vec<f32> = image
        .iter()
        .zip(&context)
        .map(|(&x, &c)| (1.0 - w) * x + w * c)
        .collect();
    min_max_rescale(&mut values);
    Ok(ContextTemplate {
        values,
        source_neurons: selected,
        score_vector: scores,
    })
}

/// Euclidean distance between the combined contexts selected by two images,
/// using the given pre-processor parameters for selection.
pub fn context_distance_with(
    model: &SnnModel,
    image_a: &[f32],
    image_b: &[f32],
    params: &ContextParams,
) -> Result<f64> {
    params.validate(model.neuron_count())?;
    let select = |image: &[f32]| -> Result<Vec<f32>> {
        check_image(model, image)?;
        let scores = if params.score_inverted_input {
            let inverted: Vec<f32> = image.iter().map(|&v| 1.0 - v).collect();
            score(model, &inverted)?
        } else {
            score(model, image)?
        };
        combine_contexts(model, &top_k_select(&scores, params.top_k)?)
    };
    let ca = select(image_a)?;
    let cb = select(image_b)?;
    Ok(ca
        .iter()
        .zip(&cb)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

/// [`context_distance_with`] using raw-intensity scoring, matching the plain
/// scoring definition.
pub fn context_distance(model: &SnnModel, image_a: &[f32], image_b: &[f32], k: usize) -> Result<f64> {
    context_distance_with(
        model,
        image_a,
        image_b,
        &ContextParams {
            top_k: k,
            score_inverted_input: false,
            ..ContextParams::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{SnnHyperparams, SnnModel};
    use rand::Rng;

    fn model_with_rows(rows: Vec<Vec<f32>>) -> SnnModel {
        let d = rows.len();
        let n = rows[0].len();
        let mut model = SnnModel::new(d, n, SnnHyperparams::default(), 1).unwrap();
        model.set_conductances(rows.into_iter().flatten().collect());
        model
    }

    fn random_model(d: usize, n: usize, seed: u64) -> SnnModel {
        let mut rng = crate::rng::stream_rng(seed, 0);
        model_with_rows(
            (0..d)
                .map(|_| (0..n).map(|_| rng.random::<f32>()).collect())
                .collect(),
        )
    }

    #[test]
    fn zero_image_scores_zero() {
        let model = random_model(5, 16, 1);
        let scores = score(&model, &vec![0.0; 16]).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn one_hot_image_reads_single_conductance() {
        let model = random_model(5, 16, 2);
        let mut image = vec![0.0f32; 16];
        image[7] = 1.0;
        let scores = score(&model, &image).unwrap();
        for j in 0..5 {
            assert!((scores[j] - model.g_row(j)[7]).abs() < 1e-6);
        }
    }

    #[test]
    fn score_matches_naive_matvec() {
        let model = random_model(9, 40, 3);
        let mut rng = crate::rng::stream_rng(4, 0);
        let image: Vec<f32> = (0..40).map(|_| rng.random::<f32>()).collect();
        let scores = score(&model, &image).unwrap();
        for j in 0..9 {
            let mut acc = 0.0f64;
            for i in 0..40 {
                acc += model.g_row(j)[i] as f64 * image[i] as f64;
            }
            assert!(
                ((scores[j] as f64 - acc) / acc.max(1e-9)).abs() < 1e-6,
                "neuron {j}"
            );
        }
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_select(&[3.0, 1.0, 3.0, 2.0], 2).unwrap(), vec![0, 2]);
        let all = top_k_select(&[1.0, 5.0, 2.0], 3).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0], 1);
        assert!(top_k_select(&[1.0], 0).is_err());
        assert!(top_k_select(&[1.0], 2).is_err());
    }

    #[test]
    fn top_k_matches_sort_oracle() {
        let mut rng = crate::rng::stream_rng(5, 0);
        for _ in 0..200 {
            let d = rng.random_range(1..50);
            let scores: Vec<f32> = (0..d)
                .map(|_| (rng.random_range(0..8) as f32) * 0.5)
                .collect();
            let k = rng.random_range(1..=d);
            let got = top_k_select(&scores, k).unwrap();
            let mut oracle: Vec<usize> = (0..d).collect();
            oracle.sort_by(|&a, &b| {
                scores[b]
                    .partial_cmp(&scores[a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            oracle.truncate(k);
            assert_eq!(got, oracle);
        }
    }

    #[test]
    fn selection_invariant_under_positive_scaling() {
        let model = random_model(12, 30, 6);
        let mut rng = crate::rng::stream_rng(7, 0);
        let image: Vec<f32> = (0..30).map(|_| rng.random::<f32>()).collect();
        let base: std::collections::BTreeSet<usize> =
            top_k_select(&score(&model, &image).unwrap(), 4).unwrap().into_iter().collect();
        for lambda in [0.25f32, 0.5, 0.9] {
            let scaled: Vec<f32> = image.iter().map(|&v| v * lambda).collect();
            let sel: std::collections::BTreeSet<usize> =
                top_k_select(&score(&model, &scaled).unwrap(), 4).unwrap().into_iter().collect();
            assert_eq!(sel, base, "lambda {lambda}");
        }
    }

    #[test]
    fn combine_normalizes_and_handles_duplicates() {
        let row = vec![0.2f32, 0.4, 0.8, 0.6];
        let model = model_with_rows(vec![row.clone(), row.clone()]);
        let single = combine_contexts(&model, &[0]).unwrap();
        let double = combine_contexts(&model, &[0, 1]).unwrap();
        // Min-max normalization removes the x2.
        for (a, b) in single.iter().zip(&double) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(single[0], 0.0);
        assert_eq!(single[2], 1.0);
    }

    #[test]
    fn constant_context_maps_to_half() {
        let model = model_with_rows(vec![vec![0.7f32; 8]]);
        let ctx = combine_contexts(&model, &[0]).unwrap();
        assert!(ctx.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn zero_weight_blend_is_rescaled_input() {
        let model = random_model(6, 20, 8);
        let mut rng = crate::rng::stream_rng(9, 0);
        let image: Vec<f32> = (0..20).map(|_| rng.random_range(0.1..0.9)).collect();
        let params = ContextParams {
            blend_weight: 0.0,
            top_k: 3,
            ..ContextParams::default()
        };
        let template = extract_template(&model, &image, &params).unwrap();
        let mut expected = image.clone();
        min_max_rescale(&mut expected);
        assert_eq!(template.values, expected);
    }

    #[test]
    fn full_weight_blend_is_context_only() {
        let model = random_model(6, 20, 10);
        let image = vec![0.3f32; 20];
        let params = ContextParams {
            blend_weight: 1.0,
            top_k: 2,
            invert_context: false,
            score_inverted_input: false,
        };
        let template = extract_template(&model, &image, &params).unwrap();
        let mut expected = combine_contexts(&model, &template.source_neurons).unwrap();
        min_max_rescale(&mut expected);
        assert_eq!(template.values, expected);
    }

    #[test]
    fn template_shape_and_range_contract() {
        let model = random_model(10, 48, 11);
        let mut rng = crate::rng::stream_rng(12, 0);
        for _ in 0..20 {
            let image: Vec<f32> = (0..48).map(|_| rng.random::<f32>()).collect();
            let template = extract_template(&model, &image, &ContextParams::default()).unwrap();
            assert_eq!(template.values.len(), 48);
            assert_eq!(template.source_neurons.len(), 5);
            assert_eq!(template.score_vector.len(), 10);
            assert!(template.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let unique: std::collections::BTreeSet<_> =
                template.source_neurons.iter().collect();
            assert_eq!(unique.len(), 5);
        }
    }

    #[test]
    fn extraction_is_pure() {
        let model = random_model(8, 32, 13);
        let image = vec![0.4f32; 32];
        let a = extract_template(&model, &image, &ContextParams::default()).unwrap();
        let b = extract_template(&model, &image, &ContextParams::default()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.source_neurons, b.source_neurons);
    }

    #[test]
    fn distance_is_zero_for_identical_and_symmetric() {
        let model = random_model(10, 24, 14);
        let mut rng = crate::rng::stream_rng(15, 0);
        let a: Vec<f32> = (0..24).map(|_| rng.random::<f32>()).collect();
        let b: Vec<f32> = (0..24).map(|_| rng.random::<f32>()).collect();
        assert_eq!(context_distance(&model, &a, &a, 3).unwrap(), 0.0);
        let ab = context_distance(&model, &a, &b, 3).unwrap();
        let ba = context_distance(&model, &b, &a, 3).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let model = random_model(4, 16, 16);
        assert!(matches!(
            score(&model, &[0.1; 8]),
            Err(Error::Shape { expected: 16, got: 8 })
        ));
    }
}
