use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Moment estimates and hyperparameters for Adam over a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step_count: u64,
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n_params: usize, learning_rate: T) -> Self {
        AdamState {
            step_count: 0,
            first_moment: vec![T::zero(); n_params],
            second_moment: vec![T::zero(); n_params],
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Scalar>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    let n = params.len();
    for (op, len) in [("adam grads", grads.len()), ("adam first moment", state.first_moment.len()), ("adam second moment", state.second_moment.len())] {
        if len != n {
            return Err(Error::LengthMismatch { op, expected: n, actual: len });
        }
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("adam gradient"));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    for i in 0..n {
        let g = grads[i];
        let m = b1 * state.first_moment[i] + (T::one() - b1) * g;
        let v = b2 * state.second_moment[i] + (T::one() - b2) * g * g;
        state.first_moment[i] = m;
        state.second_moment[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        params[i] = params[i] - state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
