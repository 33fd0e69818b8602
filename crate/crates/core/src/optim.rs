//! Nadam (Adam with Nesterov momentum and a warm-up momentum schedule) and
//! shuffled mini-batch training on one owner's data.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Network, ParameterVector};
use crate::rng::StreamId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule_decay: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            schedule_decay: 0.004,
            batch_size: 32,
            local_epochs: 1,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(self.schedule_decay >= 0.0 && self.schedule_decay.is_finite()) {
            return Err(Error::config("schedule decay must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Moment estimates carried between Nadam steps.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    /// Running product of the momentum schedule `mu_1 * ... * mu_t`.
    pub momentum_schedule_product: f64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            momentum_schedule_product: 1.0,
        }
    }
}

const MAX_STEPS: u64 = 1 << 52;

fn momentum_at(t: u64, hyper: &TrainHyper) -> f64 {
    hyper.beta1 * (1.0 - 0.5 * 0.96f64.powf(t as f64 * hyper.schedule_decay))
}

/// One Nadam update applied in place.
pub fn nadam_update(
    state: &mut OptimizerState,
    params: &mut [f64],
    grad: &[f64],
    hyper: &TrainHyper,
) -> Result<()> {
    if params.len() != grad.len() || state.first_moment.len() != params.len() {
        return Err(Error::input("optimizer state, parameters and gradient differ in length"));
    }
    if state.step_count >= MAX_STEPS {
        return Err(Error::Numeric("optimizer step limit reached".into()));
    }
    if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("gradient entry {pos} is not finite")));
    }

    let t = state.step_count + 1;
    let mu_t = momentum_at(t, hyper);
    let mu_next = momentum_at(t + 1, hyper);
    let schedule = state.momentum_schedule_product * mu_t;
    let schedule_next = schedule * mu_next;
    let v_correction = 1.0 - hyper.beta2.powf(t as f64);

    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grad)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
        *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
        let g_hat = g / (1.0 - schedule);
        let m_hat = *m / (1.0 - schedule_next);
        let v_hat = *v / v_correction;
        let m_bar = (1.0 - mu_t) * g_hat + mu_next * m_hat;
        *p -= hyper.learning_rate * m_bar / (v_hat.sqrt() + hyper.epsilon);
    }

    state.step_count = t;
    state.momentum_schedule_product = schedule;
    Ok(())
}

/// Value-in/value-out form of [`nadam_update`].
pub fn nadam_step(
    state: &OptimizerState,
    params: &ParameterVector,
    grad: &ParameterVector,
    hyper: &TrainHyper,
) -> Result<(ParameterVector, OptimizerState)> {
    let mut state = state.clone();
    let mut values = params.as_slice().to_vec();
    nadam_update(&mut state, &mut values, grad.as_slice(), hyper)?;
    Ok((ParameterVector::new(values)?, state))
}

/// `local_epochs` passes of shuffled mini-batch Nadam over `data`.
///
/// Optimizer moments start from zero on every call. All randomness comes
/// from `stream`, so the result is a pure function of the arguments.
pub fn train_local(
    network: &Network,
    data: &Dataset,
    hyper: &TrainHyper,
    stream: StreamId,
) -> Result<Network> {
    if data.n_features() != network.input_dim() {
        return Err(Error::input(format!(
            "dataset has {} features, model expects {}",
            data.n_features(),
            network.input_dim()
        )));
    }
    if hyper.batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    let mut net = network.clone();
    if hyper.local_epochs == 0 {
        return Ok(net);
    }

    let mut rng = stream.rng();
    let mut state = OptimizerState::new(net.params().len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rows: Vec<&[u8]> = Vec::with_capacity(hyper.batch_size);
    let mut labels: Vec<u8> = Vec::with_capacity(hyper.batch_size);

    for _ in 0..hyper.local_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            rows.clear();
            labels.clear();
            for &i in batch {
                rows.push(data.row(i));
                labels.push(data.labels()[i]);
            }
            let grad = net.gradient(&rows, &labels)?;
            nadam_update(
                &mut state,
                net.params_mut().as_mut_slice(),
                grad.as_slice(),
                hyper,
            )?;
        }
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::model::{init_network, ModelConfig};
    use crate::rng::Purpose;

    fn scalar(v: f64) -> ParameterVector {
        ParameterVector::new(vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let hyper = TrainHyper::default();
        let params = ParameterVector::new(vec![0.3, -1.2]).unwrap();
        let (next, state) =
            nadam_step(&OptimizerState::new(2), &params, &ParameterVector::zeros(2), &hyper)
                .unwrap();
        assert_eq!(next, params);
        assert_eq!(state.first_moment, vec![0.0, 0.0]);
        assert_eq!(state.second_moment, vec![0.0, 0.0]);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn positive_gradient_decreases_parameter() {
        let (next, _) = nadam_step(
            &OptimizerState::new(1),
            &scalar(1.0),
            &scalar(1.0),
            &TrainHyper::default(),
        )
        .unwrap();
        assert!(next.as_slice()[0] < 1.0);
    }

    #[test]
    fn second_moment_recursion() {
        let hyper = TrainHyper::default();
        let (p1, s1) = nadam_step(&OptimizerState::new(1), &scalar(1.0), &scalar(1.0), &hyper)
            .unwrap();
        let (_, s2) = nadam_step(&s1, &p1, &scalar(1.0), &hyper).unwrap();
        let b2 = hyper.beta2;
        assert!((s2.second_moment[0] - (b2 * (1.0 - b2) + (1.0 - b2))).abs() < 1e-15);
        let mu1 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.004));
        let mu2 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.008));
        assert!((s2.momentum_schedule_product - mu1 * mu2).abs() < 1e-15);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // Fresh state, g = 1: m = 0.1, v = 0.001.
        let hyper = TrainHyper::default();
        let (p, _) = nadam_step(&OptimizerState::new(1), &scalar(0.0), &scalar(1.0), &hyper)
            .unwrap();
        let mu1 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.004));
        let mu2 = 0.9 * (1.0 - 0.5 * 0.96f64.powf(0.008));
        let m_bar = (1.0 - mu1) / (1.0 - mu1) + mu2 * 0.1 / (1.0 - mu1 * mu2);
        let v_hat: f64 = 0.001 / (1.0 - 0.999);
        let expected = -0.002 * m_bar / (v_hat.sqrt() + 1e-7);
        assert!((p.as_slice()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut state = OptimizerState::new(1);
        let mut p = [0.0];
        assert!(matches!(
            nadam_update(&mut state, &mut p, &[f64::NAN], &TrainHyper::default()),
            Err(Error::Numeric(_))
        ));
    }

    fn separable() -> Dataset {
        let spec = SyntheticSpec {
            n_samples: 50,
            n_features: 8,
            prevalence: 0.4,
            feature_density: 0.5,
            signal_features: 4,
        };
        generate_synthetic(&spec, 2).unwrap()
    }

    fn full_loss(net: &Network, data: &Dataset) -> f64 {
        let rows: Vec<&[u8]> = data.rows().collect();
        net.batch_loss(&rows, data.labels()).unwrap()
    }

    #[test]
    fn training_reduces_loss() {
        let data = separable();
        let net = init_network(&ModelConfig::neural_net(8).unwrap(), 1);
        let hyper = TrainHyper {
            local_epochs: 100,
            ..TrainHyper::default()
        };
        let trained = train_local(&net, &data, &hyper, StreamId::root(0, Purpose::Train)).unwrap();
        assert!(full_loss(&trained, &data) < full_loss(&net, &data));
    }

    #[test]
    fn zero_epochs_returns_input() {
        let data = separable();
        let net = init_network(&ModelConfig::neural_net(8).unwrap(), 1);
        let hyper = TrainHyper {
            local_epochs: 0,
            ..TrainHyper::default()
        };
        let out = train_local(&net, &data, &hyper, StreamId::root(0, Purpose::Train)).unwrap();
        assert_eq!(out, net);
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable();
        let net = init_network(&ModelConfig::neural_net(8).unwrap(), 1);
        let hyper = TrainHyper {
            local_epochs: 3,
            batch_size: 7,
            ..TrainHyper::default()
        };
        let id = StreamId::new(4, 2, Purpose::Train, 1);
        let a = train_local(&net, &data, &hyper, id).unwrap();
        let b = train_local(&net, &data, &hyper, id).unwrap();
        assert_eq!(a.params().as_slice(), b.params().as_slice());
    }

    #[test]
    fn training_checks_dimension() {
        let net = init_network(&ModelConfig::neural_net(5).unwrap(), 1);
        assert!(train_local(&net, &separable(), &TrainHyper::default(), StreamId::root(0, Purpose::Train)).is_err());
    }
}
