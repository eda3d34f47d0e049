use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::network::{Network, NetworkSpec};
use super::params::ParamSet;
use super::Result;

/// A network together with its optimiser state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainable {
    pub net: Network,
    pub adam: AdamState,
}

impl Trainable {
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, adam: AdamConfig, rng: &mut R) -> Result<Self> {
        let net = Network::new(spec, rng)?;
        let adam = AdamState::new(net.params(), adam);
        Ok(Self { net, adam })
    }

    pub fn step(&mut self, grads: &ParamSet) -> Result<()> {
        adam_step(self.net.params_mut(), grads, &mut self.adam)
    }
}
