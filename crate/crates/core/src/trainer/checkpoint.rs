use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::model::{read_container, write_container, ModelError, ModelState};

/// Model state plus the training context it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub train_config: TrainConfig,
    pub step: u64,
    /// Evaluation loss at `step`; `+inf` when there was no evaluation data.
    pub best_eval_loss: f64,
}

#[derive(Serialize, Deserialize)]
struct Extra {
    train_config: TrainConfig,
    step: u64,
    /// IEEE-754 bits, so infinities and the exact value survive JSON.
    best_eval_loss_bits: u64,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, out: W) -> Result<(), TrainError> {
        let extra = Extra { train_config: self.train_config.clone(), step: self.step, best_eval_loss_bits: self.best_eval_loss.to_bits() };
        let extra = serde_json::to_value(extra).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        write_container(out, &self.state, &extra)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self, TrainError> {
        let (state, extra) = read_container(input)?;
        let extra: Extra = serde_json::from_value(extra).map_err(|e| ModelError::Checkpoint(format!("training fields: {e}")))?;
        Ok(Self {
            state,
            train_config: extra.train_config,
            step: extra.step,
            best_eval_loss: f64::from_bits(extra.best_eval_loss_bits),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
