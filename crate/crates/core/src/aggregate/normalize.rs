/// An image-level vector after the final normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSignature {
    pub image_id: String,
    pub values: Vec<f64>,
    /// Set when the vector was zero and could not be normalized.
    pub degenerate: bool,
}

/// `a ← |a|^α sign(a)` componentwise.
pub fn power_law(psi: &[f64], alpha: f64) -> Vec<f64> {
    psi.iter().map(|a| a.abs().powf(alpha).copysign(*a)).collect()
}

/// Scales to unit Euclidean norm. A zero vector is returned unchanged with the flag set.
pub fn l2_normalize(psi: Vec<f64>) -> (Vec<f64>, bool) {
    let norm = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        (psi.into_iter().map(|v| v / norm).collect(), false)
    } else {
        (vec![0.0; psi.len()], true)
    }
}
