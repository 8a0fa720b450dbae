use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter of one store.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, p)| vec![0.0; p.values().len()])
            .collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected ADAM update. Gradients are read, not cleared.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Tape(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                params.len()
            )));
        }
        let ids: Vec<_> = params.ids().collect();
        if let Some(&missing) = ids.iter().find(|&&id| params.get(id).grad().is_none()) {
            return Err(Error::Tape(format!(
                "adam step before any backward: `{}` has no gradient",
                params.name(missing)
            )));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, id) in ids.into_iter().enumerate() {
            let (values, grad) = params.get_mut(id).values_and_grad_mut();
            let grad = grad.expect("checked above");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..values.len() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Shape4, Tensor4};

    fn scalar_store(theta: f64, grad: Option<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.insert("theta", Tensor4::scalar(theta)).unwrap();
        if let Some(g) = grad {
            s.get_mut(id).grad_mut_or_zero()[0] = g;
        }
        s
    }

    #[test]
    fn step_without_gradient_fails() {
        let mut s = scalar_store(0.0, None);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let err = st.step(&mut s).unwrap_err();
        assert!(err.to_string().contains("before any backward"));
        assert_eq!(st.steps(), 0);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor4::filled(Shape4::new(1, 2, 2, 2), 0.3)).unwrap();
        let id = s.id("w").unwrap();
        s.get_mut(id).grad_mut_or_zero();
        let before = s.clone();
        let mut st = AdamState::new(&s, AdamConfig::default());
        st.step(&mut s).unwrap();
        assert_eq!(st.steps(), 1);
        assert_eq!(s.get(id).values(), before.get(id).values());
    }

    #[test]
    fn single_step_hand_value() {
        let mut s = scalar_store(0.0, Some(1.0));
        let mut st = AdamState::new(&s, AdamConfig::default());
        st.step(&mut s).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        let theta = s.by_name("theta").unwrap().values()[0];
        assert!((theta - (-0.01 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((theta + 0.00999999990).abs() < 1e-12);
    }
}
