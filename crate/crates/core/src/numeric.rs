//! Shared numeric helpers.

/// `ln Σ exp(v)` with max-subtraction.
///
/// Returns `-inf` when every value is `-inf` (and for an empty slice).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_distance_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `1 - cos(a, b)` clamped to `[0, 2]`. A zero vector has cosine similarity 0
/// with everything, so its distance to any vector is 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot(a, b) / (na * nb)).clamp(0.0, 2.0)
}

/// Projects `v` onto the L2 ball of radius `radius`.
///
/// Vectors already within a relative `1e-12` of the radius are returned as-is,
/// which makes the projection exactly idempotent under floating point.
pub fn clip_l2(v: &[f64], radius: f64) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm > radius * (1.0 + 1e-12) {
        let scale = radius / norm;
        v.iter().map(|x| x * scale).collect()
    } else {
        v.to_vec()
    }
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// Weights are max-subtracted before exponentiation, so arbitrarily large
/// magnitudes are fine as long as at least one entry is finite.
pub fn sample_log_weights<R: rand::Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    debug_assert!(!log_weights.is_empty());
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    // Rounding can leave a sliver past the last bucket; give it to the last
    // index with positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Index of the smallest score; ties go to the lowest index.
pub(crate) fn argmin_first(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s < best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax_first(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in scores.into_iter().enumerate() {
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}
