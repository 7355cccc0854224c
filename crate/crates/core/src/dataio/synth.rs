use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, SampleRecord};
use crate::error::{Error, Result};

pub const MIN_TOKENS: u32 = 3;
pub const MAX_TOKENS: u32 = 60;

/// Parameters of the Gaussian class-mixture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_samples: usize,
    pub text_dim: usize,
    pub image_dim: usize,
    pub num_classes: usize,
    /// Pairwise distance between class means, in noise standard deviations.
    pub separation: f64,
    /// Noise std is `1 + length_noise · token_count / 60`.
    pub length_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Argument("num_samples must be >= 1".into()));
        }
        if self.text_dim < 2 || self.image_dim < 2 {
            return Err(Error::Argument("embedding dims must be >= 2".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Argument("num_classes must be >= 2".into()));
        }
        if self.num_classes > self.text_dim.min(self.image_dim) {
            return Err(Error::Argument(format!(
                "num_classes ({}) cannot exceed the smaller embedding dim ({})",
                self.num_classes,
                self.text_dim.min(self.image_dim)
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Argument("separation must be finite and >= 0".into()));
        }
        if !(self.length_noise >= 0.0 && self.length_noise.is_finite()) {
            return Err(Error::Argument("length_noise must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Class mean in a `dim`-dimensional modality: `separation/√2 · e_c`, so
    /// every pair of means is exactly `separation` apart.
    pub fn class_mean(&self, class: usize, dim: usize) -> Vec<f64> {
        let mut mu = vec![0.0; dim];
        mu[class] = self.separation / std::f64::consts::SQRT_2;
        mu
    }

    pub fn noise_std(&self, token_count: u32) -> f64 {
        1.0 + self.length_noise * token_count as f64 / MAX_TOKENS as f64
    }
}

fn draw(rng: &mut ChaCha8Rng, mean: &[f64], std: f64) -> Vec<f32> {
    mean.iter()
        .map(|&m| {
            let z: f64 = rng.sample(StandardNormal);
            (m + std * z) as f32
        })
        .collect()
}

/// Balanced synthetic dataset: sample `i` has label `i mod K`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let text_means: Vec<_> = (0..spec.num_classes)
        .map(|c| spec.class_mean(c, spec.text_dim))
        .collect();
    let image_means: Vec<_> = (0..spec.num_classes)
        .map(|c| spec.class_mean(c, spec.image_dim))
        .collect();
    let records = (0..spec.num_samples)
        .map(|i| {
            let label = i % spec.num_classes;
            let token_count = rng.random_range(MIN_TOKENS..=MAX_TOKENS);
            let std = spec.noise_std(token_count);
            let text_emb = draw(&mut rng, &text_means[label], std);
            let image_emb = draw(&mut rng, &image_means[label], std);
            SampleRecord {
                id: format!("syn{i:06}"),
                text_emb,
                image_emb,
                label,
                token_count,
            }
        })
        .collect();
    let label_names = (0..spec.num_classes).map(|c| format!("class_{c}")).collect();
    Dataset::new(spec.text_dim, spec.image_dim, label_names, records)
}

/// Out-of-distribution probes: centred on the centroid of the class means,
/// pushed `distance` noise-stds along a random direction orthogonal to every
/// class mean, plus unit noise. Samples closer than `distance` to any class
/// mean (in either modality) are redrawn. Labels are set to 0.
pub fn gen_out_of_distribution(
    spec: &SyntheticSpec,
    count: usize,
    distance: f64,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    let k = spec.num_classes;
    if spec.text_dim <= k || spec.image_dim <= k {
        return Err(Error::Argument(
            "embedding dims must exceed num_classes to leave an orthogonal direction".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = |rng: &mut ChaCha8Rng, dim: usize| -> Vec<f32> {
        let means: Vec<Vec<f64>> = (0..k).map(|c| spec.class_mean(c, dim)).collect();
        let centroid: Vec<f64> = (0..dim)
            .map(|j| means.iter().map(|m| m[j]).sum::<f64>() / k as f64)
            .collect();
        loop {
            let mut dir: Vec<f64> = (0..dim)
                .map(|j| if j < k { 0.0 } else { rng.sample(StandardNormal) })
                .collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            dir.iter_mut().for_each(|x| *x *= distance / norm);
            let base: Vec<f64> = centroid.iter().zip(&dir).map(|(c, d)| c + d).collect();
            let x = draw(rng, &base, 1.0);
            let far = means.iter().all(|m| {
                m.iter()
                    .zip(&x)
                    .map(|(a, &b)| (a - b as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    >= distance
            });
            if far {
                return x;
            }
        }
    };
    let records = (0..count)
        .map(|i| {
            let token_count = rng.random_range(MIN_TOKENS..=MAX_TOKENS);
            SampleRecord {
                id: format!("ood{i:06}"),
                text_emb: probe(&mut rng, spec.text_dim),
                image_emb: probe(&mut rng, spec.image_dim),
                label: 0,
                token_count,
            }
        })
        .collect();
    let label_names = (0..k).map(|c| format!("class_{c}")).collect();
    Dataset::new(spec.text_dim, spec.image_dim, label_names, records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            num_samples: 2000,
            text_dim: 6,
            image_dim: 4,
            num_classes: 2,
            separation: 3.0,
            length_noise: 0.0,
            seed: 17,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_synthetic(&spec()).unwrap(), gen_synthetic(&spec()).unwrap());
        let mut other = spec();
        other.seed = 18;
        assert_ne!(gen_synthetic(&spec()).unwrap(), gen_synthetic(&other).unwrap());
    }

    #[test]
    fn means_are_separation_apart() {
        let s = spec();
        let a = s.class_mean(0, 6);
        let b = s.class_mean(1, 6);
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_means_converge() {
        let s = spec();
        let d = gen_synthetic(&s).unwrap();
        for c in 0..2 {
            let members: Vec<_> = d.records().iter().filter(|r| r.label == c).collect();
            let n = members.len() as f64;
            let mu = s.class_mean(c, 6);
            for (j, &m) in mu.iter().enumerate() {
                let mean = members.iter().map(|r| r.text_emb[j] as f64).sum::<f64>() / n;
                assert!((mean - m).abs() < 3.0 / n.sqrt(), "class {c} dim {j}");
            }
        }
    }

    #[test]
    fn token_counts_in_range() {
        let d = gen_synthetic(&spec()).unwrap();
        assert!(d
            .records()
            .iter()
            .all(|r| (MIN_TOKENS..=MAX_TOKENS).contains(&r.token_count)));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec();
        s.separation = -1.0;
        assert!(gen_synthetic(&s).is_err());
        let mut s = spec();
        s.text_dim = 1;
        assert!(gen_synthetic(&s).is_err());
        let mut s = spec();
        s.num_classes = 5;
        assert!(gen_synthetic(&s).is_err());
    }

    #[test]
    fn ood_probes_are_far_from_every_mean() {
        let s = spec();
        let ood = gen_out_of_distribution(&s, 50, 6.0, 1).unwrap();
        for r in ood.records() {
            for c in 0..2 {
                let mu = s.class_mean(c, 6);
                let d = mu
                    .iter()
                    .zip(&r.text_emb)
                    .map(|(a, &b)| (a - b as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(d >= 6.0);
            }
        }
    }
}
