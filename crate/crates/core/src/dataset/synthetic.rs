use rand::Rng;
use rand_distr::StandardNormal;

use super::{LabeledSet, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, derive_rng};

/// Gaussian blobs with unit covariance, one per class.
///
/// Class means are drawn at random and then scaled so that the closest pair
/// sits exactly `separation` apart. Samples are interleaved by class:
/// sample `i` has label `i % classes`.
pub fn gen_synthetic(classes: usize, dim: usize, per_class: usize, separation: f64, seed: u64) -> Result<LabeledSet> {
    if classes < 2 {
        return Err(Error::arg(format!("need at least 2 classes, got {classes}")));
    }
    if dim == 0 || per_class == 0 {
        return Err(Error::arg("dimension and per-class count must be positive"));
    }
    if !(separation.is_finite() && separation > 0.0) {
        return Err(Error::arg(format!("separation must be positive, got {separation}")));
    }

    let mut rng = derive_rng(seed, &[rng::TAG_SYNTH]);
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(classes);
    // Redraw on the measure-zero event of coincident means.
    let min_dist = loop {
        means.clear();
        for _ in 0..classes {
            means.push((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        }
        let d = min_pairwise_distance(&means);
        if d > 1e-9 {
            break d;
        }
    };
    let scale = separation / min_dist;
    for m in &mut means {
        m.iter_mut().for_each(|v| *v *= scale);
    }

    let mut samples = Vec::with_capacity(classes * per_class);
    for _ in 0..per_class {
        for (label, mean) in means.iter().enumerate() {
            let x: Vec<f64> = mean
                .iter()
                .map(|&mu| mu + rng.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push(Sample::new(x, label));
        }
    }
    LabeledSet::new(samples, dim, classes)
}

fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}
