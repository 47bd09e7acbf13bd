//! Attention regularizer applied to the untrimmed stream.
//!
//! `loss4 = Σⱼ Σₙ (v₁ⱼₙ − v₁ⱼ₍ₙ₊₁₎)⁴ + Σⱼ Σₙ (v₂ⱼₙ − v₂ⱼ₍ₙ₊₁₎)⁴ + Σⱼ (‖V₁ⱼ‖₁ + ‖V₂ⱼ‖₁)`
//!
//! over the three spatial vectors (length `G`) and the three temporal vectors
//! (length `G − 1`). For softmax outputs each L1 norm is exactly one, so the
//! L1 part contributes the constant 6 and no gradient.

use crate::attention::CHANNELS;
use crate::error::{Error, Result};
use crate::numeric::l1_norm;

/// The two parts of `loss4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss4Terms {
    /// Sum of fourth powers of adjacent differences.
    pub variation: f64,
    /// Sum of L1 norms.
    pub l1: f64,
}

impl Loss4Terms {
    pub fn total(&self) -> f64 {
        self.variation + self.l1
    }
}

pub fn quartic_variation(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[0] - w[1]).powi(4)).sum()
}

pub fn loss4_terms<V: AsRef<[f64]>>(
    spatial: &[V],
    temporal: &[V],
    frames: usize,
) -> Result<Loss4Terms> {
    if spatial.len() != CHANNELS || temporal.len() != CHANNELS {
        return Err(Error::dim(format!(
            "expected {CHANNELS} spatial and {CHANNELS} temporal vectors, got {} and {}",
            spatial.len(),
            temporal.len()
        )));
    }
    if frames < 2 {
        return Err(Error::dim("G must be at least 2"));
    }
    let mut terms = Loss4Terms {
        variation: 0.0,
        l1: 0.0,
    };
    for (vectors, want) in [(spatial, frames), (temporal, frames - 1)] {
        for v in vectors {
            let v = v.as_ref();
            if v.len() != want {
                return Err(Error::dim(format!(
                    "attention vector of length {}, expected {want}",
                    v.len()
                )));
            }
            terms.variation += quartic_variation(v);
            terms.l1 += l1_norm(v);
        }
    }
    Ok(terms)
}

pub fn loss4<V: AsRef<[f64]>>(spatial: &[V], temporal: &[V], frames: usize) -> Result<f64> {
    Ok(loss4_terms(spatial, temporal, frames)?.total())
}

/// Gradient of one vector's contribution (variation + L1) w.r.t. its entries.
pub fn loss4_vector_gradient(v: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = v.iter().map(|x| x.signum()).collect();
    for n in 0..v.len().saturating_sub(1) {
        let d = v[n] - v[n + 1];
        let cube = 4.0 * d * d * d;
        g[n] += cube;
        g[n + 1] -= cube;
    }
    g
}

/// Gradient of the L1 part alone.
pub fn l1_vector_gradient(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.signum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_check;

    #[test]
    fn uniform_is_six() {
        let g = 7;
        let spatial = vec![vec![1.0 / g as f64; g]; 3];
        let temporal = vec![vec![1.0 / (g - 1) as f64; g - 1]; 3];
        let value = loss4(&spatial, &temporal, g).unwrap();
        assert!((value - 6.0).abs() <= 1e-12, "{value}");
    }

    #[test]
    fn one_hot_with_two_frames_is_nine() {
        let spatial = vec![vec![1.0, 0.0]; 3];
        let temporal = vec![vec![1.0]; 3];
        assert_eq!(loss4(&spatial, &temporal, 2).unwrap(), 9.0);
    }

    #[test]
    fn reversal_symmetric_but_not_permutation_invariant() {
        let v = [0.5, 0.3, 0.2];
        let rev = [0.2, 0.3, 0.5];
        let swapped = [0.3, 0.5, 0.2];
        assert!((quartic_variation(&v) - quartic_variation(&rev)).abs() < 1e-15);
        // (0.2^4 + 0.1^4) versus (0.2^4 + 0.3^4)
        assert!((quartic_variation(&v) - 0.0017).abs() < 1e-15);
        assert!((quartic_variation(&swapped) - 0.0097).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        let spatial = vec![vec![0.5, 0.5]; 3];
        let temporal = vec![vec![0.5, 0.5]; 3];
        assert!(matches!(
            loss4(&spatial, &temporal, 2),
            Err(Error::Dimension(_))
        ));
        assert!(loss4(&spatial[..2], &temporal[..2], 3).is_err());
    }

    #[test]
    fn vector_gradient_matches_differences() {
        let v = [0.1, 0.4, 0.05, 0.3, 0.15];
        let f = |x: &[f64]| quartic_variation(x) + l1_norm(x);
        let err = finite_diff_check(f, &v, &loss4_vector_gradient(&v), 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
