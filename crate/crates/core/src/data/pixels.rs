use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LabeledImages;
use crate::tensor::Tensor;

/// Observed training values for every pixel position (and channel).
///
/// Values are stored position-major: all `N` samples of position 0, then position 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDistribution {
    shape: Vec<usize>,
    samples_per_position: usize,
    values: Vec<f32>,
}

impl PixelDistribution {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn positions(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn samples_per_position(&self) -> usize {
        self.samples_per_position
    }

    /// The multiset of training values at flat position `pos`.
    pub fn values_at(&self, pos: usize) -> &[f32] {
        let n = self.samples_per_position;
        &self.values[pos * n..(pos + 1) * n]
    }
}

/// Returns `None` for an empty training set.
pub fn build_pixel_distribution(train: &LabeledImages) -> Option<PixelDistribution> {
    if train.is_empty() {
        return None;
    }
    let n = train.len();
    let positions = train.image_len();
    let mut values = vec![0.0; n * positions];
    for i in 0..n {
        for (pos, &v) in train.image(i).iter().enumerate() {
            values[pos * n + i] = v;
        }
    }
    Some(PixelDistribution {
        shape: train.image_shape().to_vec(),
        samples_per_position: n,
        values,
    })
}

/// Draws each pixel independently from the training values observed at that position.
pub fn sample_rc_init(dist: &PixelDistribution, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dist.samples_per_position;
    let data = (0..dist.positions())
        .map(|pos| dist.values_at(pos)[rng.random_range(0..n)])
        .collect();
    Tensor::new(dist.shape.clone(), data).expect("distribution shape")
}

/// Uniform noise on `[0, 1]`.
pub fn sample_uniform_init(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random::<f32>()).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn set(images: Vec<f32>, n: usize) -> LabeledImages {
        LabeledImages::new(images, vec![0; n], vec![1, 2, 2], Split::Train).unwrap()
    }

    #[test]
    fn degenerate_position_always_samples_its_value() {
        let mut imgs = Vec::new();
        for i in 0..20 {
            imgs.extend_from_slice(&[0.0, i as f32 / 20.0, 0.5, 1.0]);
        }
        let dist = build_pixel_distribution(&set(imgs, 20)).unwrap();
        for seed in 0..50 {
            let s = sample_rc_init(&dist, seed);
            assert_eq!(s.data()[0], 0.0);
            assert_eq!(s.data()[3], 1.0);
        }
    }

    #[test]
    fn single_image_set_reproduces_the_image() {
        let img = vec![0.1, 0.2, 0.3, 0.4];
        let dist = build_pixel_distribution(&set(img.clone(), 1)).unwrap();
        assert_eq!(sample_rc_init(&dist, 9).data(), img.as_slice());
    }

    #[test]
    fn empty_set_has_no_distribution() {
        let empty = LabeledImages::new(vec![], vec![], vec![1, 2, 2], Split::Train).unwrap();
        assert!(build_pixel_distribution(&empty).is_none());
    }

    #[test]
    fn sampled_mean_matches_training_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 300;
        let imgs: Vec<f32> = (0..n * 4).map(|_| rng.random::<f32>().powi(2)).collect();
        let data = set(imgs, n);
        let dist = build_pixel_distribution(&data).unwrap();
        let pos = 1;
        let train: Vec<f64> = (0..n).map(|i| data.image(i)[pos] as f64).collect();
        let mean = train.iter().sum::<f64>() / n as f64;
        let var = train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let draws = 1000;
        let sampled: f64 = (0..draws)
            .map(|s| sample_rc_init(&dist, 1000 + s as u64).data()[pos] as f64)
            .sum::<f64>()
            / draws as f64;
        let sigma = (var / draws as f64).sqrt();
        assert!((sampled - mean).abs() <= 3.0 * sigma, "{sampled} vs {mean} (sigma {sigma})");
    }

    #[test]
    fn uniform_init_is_in_unit_box() {
        let t = sample_uniform_init(&[1, 28, 28], 3);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
