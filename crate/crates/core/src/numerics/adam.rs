use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::{NumericsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        Self {
            config,
            m: ParamSet::zeros_like(params),
            v: ParamSet::zeros_like(params),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Gradients are validated before anything
/// is written, so a rejected step leaves both `params` and `state` intact.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
    params.check_same_shape(grads)?;
    params.check_same_shape(&state.m)?;
    if let Some(bad) = grads
        .arrays
        .iter()
        .find(|a| a.data.iter().any(|v| !v.is_finite()))
    {
        return Err(NumericsError::NonFiniteGradient {
            name: bad.name.clone(),
        });
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as f64;
    let c1 = 1.0 - beta1.powf(t);
    let c2 = 1.0 - beta2.powf(t);
    for (((p, g), m), v) in params
        .arrays
        .iter_mut()
        .zip(&grads.arrays)
        .zip(state.m.arrays.iter_mut())
        .zip(state.v.arrays.iter_mut())
    {
        for (((pv, &gv), mv), vv) in p
            .data
            .iter_mut()
            .zip(&g.data)
            .zip(m.data.iter_mut())
            .zip(v.data.iter_mut())
        {
            *mv = beta1 * *mv + (1.0 - beta1) * gv;
            *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        if p.data.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteParameter {
                name: p.name.clone(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ParamArray;

    fn scalar(v: f64) -> ParamSet {
        ParamSet {
            arrays: vec![ParamArray {
                name: "x".into(),
                shape: vec![1],
                data: vec![v],
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut p = scalar(0.5);
        let mut st = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &scalar(0.0), &mut st).unwrap();
        assert_eq!(p.arrays[0].data[0], 0.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_is_a_unit_bias_corrected_move() {
        // m_hat = 1, v_hat = 1 at t = 1, so the move is lr / (1 + eps).
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p, AdamConfig::with_lr(3e-5));
        adam_step(&mut p, &scalar(1.0), &mut st).unwrap();
        let want = -3e-5 / (1.0 + 1e-8);
        assert!((p.arrays[0].data[0] - want).abs() < 1e-18);
    }

    #[test]
    fn quadratic_descent_is_monotone() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(&p, AdamConfig::with_lr(1e-2));
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let x = p.arrays[0].data[0];
            adam_step(&mut p, &scalar(2.0 * x), &mut st).unwrap();
            let now = p.arrays[0].data[0].abs();
            assert!(now < prev, "{now} !< {prev}");
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_the_array() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &scalar(f64::NAN), &mut st).unwrap_err();
        assert!(matches!(err, NumericsError::NonFiniteGradient { ref name } if name == "x"));
        assert_eq!(st.step, 0);
        assert_eq!(p.arrays[0].data[0], 1.0);
    }
}
