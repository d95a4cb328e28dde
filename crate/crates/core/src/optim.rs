//! Optimizer steps: Adagrad for sparse embeddings, Adam for dense weights.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Denominator guard in both optimizers.
pub const EPS: f64 = 1e-8;

/// In-place Adagrad step: `acc += g^2; v -= lr * g / (sqrt(acc) + eps)`.
pub fn adagrad_step<S: Scalar>(vector: &mut [S], accumulator: &mut [S], grad: &[S], lr: S) {
    debug_assert_eq!(vector.len(), grad.len());
    debug_assert_eq!(accumulator.len(), grad.len());
    let eps = S::from_f64_lossy(EPS);
    for ((v, a), &g) in vector.iter_mut().zip(accumulator.iter_mut()).zip(grad) {
        *a = *a + g * g;
        *v = *v - lr * g / (a.sqrt() + eps);
    }
}

/// Adam state for one contiguous block of dense parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![S::zero(); len],
            v: vec![S::zero(); len],
            t: 0,
        }
    }

    /// Bias-corrected Adam step (beta1 = 0.9, beta2 = 0.999).
    pub fn step(&mut self, params: &mut [S], grad: &[S], lr: S) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(params.len(), grad.len());
        let b1 = S::from_f64_lossy(0.9);
        let b2 = S::from_f64_lossy(0.999);
        let eps = S::from_f64_lossy(EPS);
        self.t += 1;
        let t = self.t as i32;
        let corr1 = S::one() - b1.powi(t);
        let corr2 = S::one() - b2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
            let m_hat = self.m[i] / corr1;
            let v_hat = self.v[i] / corr2;
            params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adagrad_zero_gradient_is_noop() {
        let mut v = vec![0.5f64, -0.25];
        let mut a = vec![0.0f64, 0.0];
        adagrad_step(&mut v, &mut a, &[0.0, 0.0], 0.1);
        assert_eq!(v, vec![0.5, -0.25]);
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn adagrad_first_step_closed_form() {
        // From a zero accumulator: delta = -lr * g / (|g| + eps).
        let g = [0.3f64, -0.7, 1.2];
        let lr = 0.05;
        let mut v = vec![0.0f64; 3];
        let mut a = vec![0.0f64; 3];
        adagrad_step(&mut v, &mut a, &g, lr);
        for i in 0..3 {
            let expect = -lr * g[i] / (g[i].abs() + EPS);
            assert!((v[i] - expect).abs() < 1e-12);
            assert!((a[i] - g[i] * g[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn adagrad_matches_scalar_reference() {
        // Independent scalar-loop oracle over a random gradient sequence.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dim = 5;
        let lr = 0.05f64;
        let mut v = vec![0.0f64; dim];
        let mut a = vec![0.0f64; dim];
        let mut ref_v = v.clone();
        let mut ref_a = a.clone();
        for _ in 0..10 {
            let g: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            adagrad_step(&mut v, &mut a, &g, lr);
            for i in 0..dim {
                ref_a[i] += g[i] * g[i];
                ref_v[i] -= lr * g[i] / (ref_a[i].sqrt() + EPS);
            }
        }
        for i in 0..dim {
            assert!((v[i] - ref_v[i]).abs() < 1e-6);
            assert!((a[i] - ref_a[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_first_step_moves_against_gradient() {
        let mut p = vec![1.0f32, -1.0];
        let mut st = AdamState::new(2);
        st.step(&mut p, &[0.5, -0.5], 0.001);
        assert!(p[0] < 1.0);
        assert!(p[1] > -1.0);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 4;
        let lr = 0.01f64;
        let mut p = vec![0.1f64; n];
        let mut st = AdamState::new(n);
        let (mut m, mut v) = (vec![0.0f64; n], vec![0.0f64; n]);
        let mut ref_p = p.clone();
        for t in 1..=20 {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            st.step(&mut p, &g, lr);
            for i in 0..n {
                m[i] = 0.9 * m[i] + 0.1 * g[i];
                v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
                let mh = m[i] / (1.0 - 0.9f64.powi(t));
                let vh = v[i] / (1.0 - 0.999f64.powi(t));
                ref_p[i] -= lr * mh / (vh.sqrt() + EPS);
            }
        }
        for i in 0..n {
            assert!((p[i] - ref_p[i]).abs() < 1e-9);
        }
    }
}
