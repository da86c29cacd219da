//! Checkpoint serialization: a single JSON document holding the architecture,
//! normalization, named parameter tensors, batch-norm running statistics, and
//! the training history. Floats round-trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::encode::EncoderNorm;
use crate::surrogate::network::{BnState, Network, Parameters};
use crate::surrogate::spec::NetworkSpec;
use crate::surrogate::train::EpochStats;
use crate::surrogate::Surrogate;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: NetworkSpec,
    pub norm: EncoderNorm,
    pub tensors: Vec<NamedTensor>,
    pub bn_running: BnState,
    pub train_seed: u64,
    pub training_window: (usize, usize),
    pub history: Vec<EpochStats>,
}

impl Checkpoint {
    pub fn from_model(model: &Surrogate, train_seed: u64, history: Vec<EpochStats>) -> Checkpoint {
        let tensors = model
            .network
            .param_slots()
            .iter()
            .map(|slot| NamedTensor {
                name: slot.name.clone(),
                shape: slot.shape.clone(),
                data: model.params.0[slot.offset..slot.offset + slot.len].to_vec(),
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            spec: model.network.spec.clone(),
            norm: model.norm,
            tensors,
            bn_running: model.bn.clone(),
            train_seed,
            training_window: model.training_window,
            history,
        }
    }

    pub fn into_model(self) -> Result<Surrogate> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.norm.validate()?;
        let network = Network::build(self.spec)?;
        let mut params = Parameters(vec![0.0; network.n_params()]);
        if self.tensors.len() != network.param_slots().len() {
            return Err(Error::config(format!(
                "checkpoint has {} tensors, network expects {}",
                self.tensors.len(),
                network.param_slots().len()
            )));
        }
        for (tensor, slot) in self.tensors.iter().zip(network.param_slots()) {
            if tensor.name != slot.name || tensor.shape != slot.shape {
                return Err(Error::config(format!(
                    "checkpoint tensor {} {:?} does not match expected {} {:?}",
                    tensor.name, tensor.shape, slot.name, slot.shape
                )));
            }
            if tensor.data.len() != slot.len {
                return Err(Error::config(format!(
                    "tensor {} has {} values, expected {}",
                    tensor.name,
                    tensor.data.len(),
                    slot.len
                )));
            }
            params.0[slot.offset..slot.offset + slot.len].copy_from_slice(&tensor.data);
        }
        if !params.all_finite() {
            return Err(Error::config("checkpoint contains non-finite parameters"));
        }
        let expected_bn = network.fresh_bn().stats.len();
        if self.bn_running.stats.len() != expected_bn {
            return Err(Error::config(format!(
                "checkpoint has {} batch-norm states, network expects {expected_bn}",
                self.bn_running.stats.len()
            )));
        }
        Ok(Surrogate {
            network,
            params,
            bn: self.bn_running,
            norm: self.norm,
            training_window: self.training_window,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::ControlPulse;
    use crate::rng::{substream, StreamKind};
    use rand::Rng;

    #[test]
    fn save_load_forward_is_bit_identical() {
        let spec = NetworkSpec::general(12);
        let network = Network::build(spec).unwrap();
        let params = network.init_params(11);
        let bn = network.fresh_bn();
        let model = Surrogate {
            network,
            params,
            bn,
            norm: EncoderNorm { eps_scale: 2.4 },
            training_window: (10, 12),
        };

        let mut rng = substream(13, StreamKind::ProbePulse, 0, 0);
        let pulses: Vec<ControlPulse> = (0..6)
            .map(|_| {
                let eps = (0..12).map(|_| rng.gen_range(-2.4..1.27)).collect();
                ControlPulse::new(eps, 0.2645).unwrap()
            })
            .collect();
        let before = model.predict(&pulses).unwrap();

        let dir = std::env::temp_dir().join("qtwin-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt.json");
        Checkpoint::from_model(&model, 11, vec![]).save(&path).unwrap();
        let restored = Checkpoint::load(&path).unwrap().into_model().unwrap();
        let after = restored.predict(&pulses).unwrap();
        for ((a, b), (c, d)) in before.iter().zip(&after) {
            assert_eq!(a.to_bits(), c.to_bits());
            assert_eq!(b.to_bits(), d.to_bits());
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupted_shape_is_rejected() {
        let spec = NetworkSpec::reduced(10);
        let network = Network::build(spec).unwrap();
        let params = network.init_params(1);
        let bn = network.fresh_bn();
        let model = Surrogate {
            network,
            params,
            bn,
            norm: EncoderNorm { eps_scale: 1.0 },
            training_window: (5, 10),
        };
        let mut ckpt = Checkpoint::from_model(&model, 1, vec![]);
        ckpt.tensors[0].shape = vec![1, 2, 3];
        assert!(ckpt.into_model().is_err());
    }
}
