use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{learning_rate_at, loss_combined, AdamW, Batch, TrainingConfig};
use crate::binio::{len_u32, read_file, write_file, ByteReader, ByteWriter};
use crate::embedding::{EmbeddingProvider, EmbeddingVector, PromptTemplate};
use crate::encoder::{
    backward, encode_checkpoint, forward, init_params, sample_points, EncoderConfig, EncoderGradients, EncoderParams,
};
use crate::error::{Error, Result};
use crate::proxy::{RepeatFactorSampler, TripletSet, VocabularyList};

/// Triplets with their caption text embeddings resolved.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub triplets: TripletSet,
    /// Unit text embedding per caption index.
    pub text: Vec<EmbeddingVector>,
}

impl TrainingData {
    /// Embeds every caption through `template` and normalizes all
    /// embeddings.
    pub fn new(
        mut triplets: TripletSet,
        vocab: &VocabularyList,
        template: &PromptTemplate,
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self> {
        if triplets.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let text = vocab
            .captions()
            .iter()
            .map(|c| provider.embed_text(&template.fill(c))?.normalize())
            .collect::<Result<Vec<_>>>()?;
        for rec in &mut triplets.records {
            if rec.caption_index >= text.len() {
                return Err(Error::InvalidParameter(format!(
                    "record {} has caption index {} outside a vocabulary of {}",
                    rec.instance_id,
                    rec.caption_index,
                    text.len()
                )));
            }
            rec.image_embedding = rec.image_embedding.normalize()?;
            if rec.image_embedding.dim() != text[0].dim() {
                return Err(Error::DimensionMismatch {
                    expected: text[0].dim(),
                    actual: rec.image_embedding.dim(),
                });
            }
        }
        Ok(Self { triplets, text })
    }

    fn labels(&self) -> Vec<usize> {
        self.triplets.records.iter().map(|r| r.caption_index).collect()
    }
}

/// Combined loss of a batch whose `points` are already sampled, and its
/// gradient with respect to every encoder parameter. Per-sample results are
/// reduced in batch order.
pub fn batch_objective(
    params: &EncoderParams,
    batch: &Batch,
    config: &TrainingConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<(f64, EncoderGradients)> {
    if batch.points.len() != batch.len() {
        return Err(Error::DimensionMismatch {
            expected: batch.len(),
            actual: batch.points.len(),
        });
    }
    let run_forward = || -> Vec<Result<_>> {
        match pool {
            Some(_) => batch.points.par_iter().map(|p| forward(params, p)).collect(),
            None => batch.points.iter().map(|p| forward(params, p)).collect(),
        }
    };
    let outputs = match pool {
        Some(pool) => pool.install(run_forward),
        None => run_forward(),
    }
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (embeddings, caches): (Vec<_>, Vec<_>) = outputs.into_iter().unzip();
    let loss = loss_combined(batch, &embeddings, config)?;
    let grads: Vec<EmbeddingVector> = loss.grad.into_iter().map(EmbeddingVector::new).collect::<Result<_>>()?;
    let run_backward = || -> Vec<Result<EncoderGradients>> {
        let pairs: Vec<_> = caches.iter().zip(&grads).collect();
        match pool {
            Some(_) => pairs.par_iter().map(|(c, g)| backward(params, c, g)).collect(),
            None => pairs.iter().map(|(c, g)| backward(params, c, g)).collect(),
        }
    };
    let per_sample = match pool {
        Some(pool) => pool.install(run_backward),
        None => run_backward(),
    };
    let mut total = EncoderGradients::zeros(params.config());
    for g in per_sample {
        total.add_assign(&g?);
    }
    Ok((loss.value, total))
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub params: EncoderParams,
    pub optimizer: AdamW,
    /// Index of the next step to run.
    pub step: usize,
    pub seed: u64,
    pub total_steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub steps: Vec<StepLog>,
    /// `(epoch, mean loss)` over the steps run in this invocation.
    pub epoch_means: Vec<(usize, f64)>,
    pub steps_per_epoch: usize,
    pub total_steps: usize,
    /// SHA-256 of the `ENC1` encoding of the final parameters.
    pub checkpoint_digest: String,
}

impl TrainingReport {
    pub fn initial_loss(&self) -> Option<f64> {
        self.steps.first().map(|s| s.loss)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    /// Tab-separated lines: `step <i> <lr> <loss>`, `epoch <e> <mean>`, then
    /// `checkpoint_sha256 <hex>`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# kind\tindex\tlr\tloss\n");
        for s in &self.steps {
            let _ = writeln!(out, "step\t{}\t{}\t{}", s.step, s.lr, s.loss);
        }
        for (e, mean) in &self.epoch_means {
            let _ = writeln!(out, "epoch\t{e}\t\t{mean}");
        }
        let _ = writeln!(out, "checkpoint_sha256\t{}", self.checkpoint_digest);
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub state: TrainingState,
    pub report: TrainingReport,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_seed(seed: u64, step: usize, slot: usize) -> u64 {
    mix(mix(seed ^ 0x5a5a_0001).wrapping_add(step as u64) ^ mix(slot as u64))
}

pub fn checkpoint_digest(params: &EncoderParams) -> String {
    hex::encode(Sha256::digest(encode_checkpoint(params)))
}

/// Runs the optimization from scratch, or from `resume`, until the schedule
/// ends or `stop_after` total steps have been taken.
pub fn train(
    data: &TrainingData,
    config: &TrainingConfig,
    resume: Option<TrainingState>,
    stop_after: Option<usize>,
) -> Result<TrainingOutcome> {
    config.validate()?;
    let labels = data.labels();
    let mut sampler = RepeatFactorSampler::new(&labels, config.repeat_threshold, mix(config.seed ^ 0x5a5a_0002))?;
    let n = config.batch_size;
    let steps_per_epoch = sampler.epoch_len().div_ceil(n);
    let total_steps = config.total_steps.unwrap_or(config.total_epochs * steps_per_epoch);

    let mut state = match resume {
        Some(state) => {
            if state.seed != config.seed || state.total_steps != total_steps {
                return Err(Error::Config(format!(
                    "resume state was made with seed {} and {} total steps; config has seed {} and {} total steps",
                    state.seed, state.total_steps, config.seed, total_steps
                )));
            }
            if *state.params.config() != config.encoder {
                return Err(Error::Config(
                    "resume state encoder shape differs from the config".into(),
                ));
            }
            state
        }
        None => {
            let params = init_params(config.seed, config.encoder)?;
            let optimizer = AdamW::new(&params, config.beta1, config.beta2, config.epsilon, config.weight_decay);
            TrainingState {
                params,
                optimizer,
                step: 0,
                seed: config.seed,
                total_steps,
            }
        }
    };
    let end = stop_after.unwrap_or(total_steps).min(total_steps);
    for _ in 0..state.step * n {
        sampler.next();
    }
    let pool = if config.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?,
        )
    } else {
        None
    };

    let mut steps = Vec::new();
    while state.step < end {
        let step = state.step;
        let picks: Vec<usize> = sampler.by_ref().take(n).collect();
        let records = &data.triplets.records;
        let points = picks
            .iter()
            .enumerate()
            .map(|(slot, &r)| {
                sample_points(
                    &records[r].point_proxy,
                    config.encoder.num_points,
                    sample_seed(config.seed, step, slot),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = Batch::new(
            points,
            picks
                .iter()
                .map(|&r| data.text[records[r].caption_index].clone())
                .collect(),
            picks.iter().map(|&r| records[r].image_embedding.clone()).collect(),
            picks.iter().map(|&r| records[r].caption_index).collect(),
        )?;
        let (loss, grads) = batch_objective(&state.params, &batch, config, pool.as_ref())?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        let lr = learning_rate_at(step, total_steps, config.warmup_iters, config.learning_rate);
        state.optimizer.step(&mut state.params, &grads, lr);
        if !state.params.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        log::debug!("step {step} lr {lr:.6e} loss {loss:.6}");
        steps.push(StepLog { step, lr, loss });
        state.step += 1;
    }

    let mut epoch_means: Vec<(usize, f64, usize)> = Vec::new();
    for s in &steps {
        let e = s.step / steps_per_epoch;
        match epoch_means.last_mut() {
            Some((last, sum, count)) if *last == e => {
                *sum += s.loss;
                *count += 1;
            }
            _ => epoch_means.push((e, s.loss, 1)),
        }
    }
    let report = TrainingReport {
        steps,
        epoch_means: epoch_means.into_iter().map(|(e, sum, c)| (e, sum / c as f64)).collect(),
        steps_per_epoch,
        total_steps,
        checkpoint_digest: checkpoint_digest(&state.params),
    };
    Ok(TrainingOutcome { state, report })
}

const STATE_MAGIC: &[u8; 4] = b"TST1";

/// `TST1`: magic, u64 seed, u64 total steps, u64 next step, u64 optimizer
/// update count, u32 encoder header `[hidden1, hidden2, hidden3, embed_dim,
/// num_points]`, then parameters, first moments and second moments as f64 in
/// tensor order.
pub fn encode_state(state: &TrainingState) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(STATE_MAGIC);
    buf.put_u64(state.seed);
    buf.put_u64(state.total_steps as u64);
    buf.put_u64(state.step as u64);
    buf.put_u64(state.optimizer.t);
    let c = state.params.config();
    for v in [c.hidden1, c.hidden2, c.hidden3, c.embed_dim, c.num_points] {
        buf.put_u32(len_u32(v));
    }
    for t in state.params.tensors() {
        t.iter().for_each(|&v| buf.put_f64(v));
    }
    for moments in [&state.optimizer.m, &state.optimizer.v] {
        for t in moments {
            t.iter().for_each(|&v| buf.put_f64(v));
        }
    }
    buf
}

/// Rebuilds a state; optimizer hyperparameters come from `config`.
pub fn decode_state(bytes: &[u8], config: &TrainingConfig) -> Result<TrainingState> {
    let mut r = ByteReader::new(bytes, "training state");
    r.expect_magic(STATE_MAGIC)?;
    let seed = r.u64()?;
    let total_steps = r.u64()? as usize;
    let step = r.u64()? as usize;
    let t = r.u64()?;
    let enc = EncoderConfig {
        hidden1: r.u32()? as usize,
        hidden2: r.u32()? as usize,
        hidden3: r.u32()? as usize,
        embed_dim: r.u32()? as usize,
        num_points: r.u32()? as usize,
    };
    enc.validate()
        .map_err(|e| Error::format("training state", e.to_string()))?;
    let mut params = EncoderParams::zeros(enc);
    for tensor in params.tensors_mut() {
        for v in tensor.iter_mut() {
            *v = r.f64()?;
        }
    }
    let mut optimizer = AdamW::new(&params, config.beta1, config.beta2, config.epsilon, config.weight_decay);
    optimizer.t = t;
    for moments in [&mut optimizer.m, &mut optimizer.v] {
        for tensor in moments.iter_mut() {
            for v in tensor.iter_mut() {
                *v = r.f64()?;
            }
        }
    }
    r.finish()?;
    Ok(TrainingState {
        params,
        optimizer,
        step,
        seed,
        total_steps,
    })
}

pub fn write_state(path: &Path, state: &TrainingState) -> Result<()> {
    write_file(path, &encode_state(state))
}

pub fn read_state(path: &Path, config: &TrainingConfig) -> Result<TrainingState> {
    decode_state(&read_file(path)?, config)
}
