//! Run checkpoint: everything needed to continue a run bit-identically.
//!
//! Layout, integers little-endian:
//!
//! | field       | type                                        |
//! |-------------|---------------------------------------------|
//! | magic       | `b"SYLLRUN\0"`                              |
//! | version     | u32 (= 1)                                   |
//! | header len  | u64                                         |
//! | header      | UTF-8 JSON (config, counters, bandit, scaler, random streams) |
//! | params      | u64 count + f64 values (θ, or `[μ_φ, ρ_φ, μ_ψ, ρ_ψ]`) |
//! | rms         | u64 count + f64 values (optimiser mean square) |
//! | momentum    | u64 count + f64 values                      |
//!
//! Readers accept any version up to their own and ignore unknown header
//! fields.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::EvalReport;
use super::run::{Params, Trainer};
use crate::bandit::Bandit;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_f64s, read_u32, write_f64s};
use crate::nn::{Layout, NetSpec, RmsProp};
use crate::rng::{derive_seed, Rng};
use crate::scaler::RewardScaler;
use crate::tasks::Curriculum;
use crate::variational::VariationalState;

pub const MAGIC: &[u8; 8] = b"SYLLRUN\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VariationalMeta {
    groups: Vec<Range<usize>>,
    samples: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: RunConfig,
    net: NetSpec,
    round: u64,
    cum_input_steps: u64,
    evals_done: u64,
    last_eval: Option<EvalReport>,
    threshold_reached_at: Option<u64>,
    draw_counts: Vec<[u64; 3]>,
    bandit: Option<Bandit>,
    scaler: RewardScaler,
    sched_rng: Rng,
    noise_rng: Rng,
    variational: Option<VariationalMeta>,
}

impl Trainer {
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            net: self.spec.clone(),
            round: self.round,
            cum_input_steps: self.cum_input_steps,
            evals_done: self.evals_done,
            last_eval: self.last_eval.clone(),
            threshold_reached_at: self.threshold_reached_at,
            draw_counts: self.curriculum.counts().to_vec(),
            bandit: self.bandit.clone(),
            scaler: self.scaler.clone(),
            sched_rng: self.sched_rng.clone(),
            noise_rng: self.noise_rng.clone(),
            variational: match &self.params {
                Params::Variational(s) => Some(VariationalMeta {
                    groups: s.groups.clone(),
                    samples: s.samples,
                }),
                Params::Point(_) => None,
            },
        };
        let json = serde_json::to_vec(&header)?;
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_all(&VERSION.to_le_bytes())?;
            w.write_all(&(json.len() as u64).to_le_bytes())?;
            w.write_all(&json)?;
            write_f64s(&mut w, &self.params.to_vector())?;
            write_f64s(&mut w, &self.opt.mean_square)?;
            write_f64s(&mut w, &self.opt.momentum)?;
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Rebuilds a trainer from a checkpoint. The curriculum is rebuilt from
    /// the stored config, so n-gram corpora must still be readable.
    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(
            File::open(path)
                .map_err(|e| Error::Checkpoint(format!("opening {}: {e}", path.display())))?,
        );
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a run checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version > VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version} is newer than supported {VERSION}"
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json)?;
        let params = read_f64s(&mut r)?;
        let mean_square = read_f64s(&mut r)?;
        let momentum = read_f64s(&mut r)?;

        let config = h.config;
        let suite = config.curriculum.build(config.seed)?;
        let mut curriculum = Curriculum::new(
            suite,
            config.batch_size,
            derive_seed(config.seed, &[super::run::SEED_DATA]),
        )?;
        curriculum.set_counts(h.draw_counts)?;
        let layout = Layout::new(&h.net);
        let params = match h.variational {
            None => {
                if params.len() != layout.total {
                    return Err(Error::Checkpoint("parameter count mismatch".into()));
                }
                Params::Point(params)
            }
            Some(meta) => {
                let n = layout.total;
                let g = meta.groups.len();
                let mut s = VariationalState {
                    mu_phi: vec![0.0; n],
                    rho_phi: vec![0.0; n],
                    mu_psi: vec![0.0; g],
                    rho_psi: vec![0.0; g],
                    groups: meta.groups,
                    samples: meta.samples,
                };
                s.set_vector(&params)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?;
                Params::Variational(s)
            }
        };
        let expected = params.to_vector().len();
        if mean_square.len() != expected || momentum.len() != expected {
            return Err(Error::Checkpoint("optimiser state size mismatch".into()));
        }
        let opt = RmsProp {
            config: config.optimizer.clone(),
            mean_square,
            momentum,
        };
        Ok(Trainer {
            config,
            curriculum,
            spec: h.net,
            layout,
            params,
            opt,
            bandit: h.bandit,
            scaler: h.scaler,
            sched_rng: h.sched_rng,
            noise_rng: h.noise_rng,
            round: h.round,
            cum_input_steps: h.cum_input_steps,
            evals_done: h.evals_done,
            last_eval: h.last_eval,
            threshold_reached_at: h.threshold_reached_at,
        })
    }
}
