//! The training protocol: shuffled mini-batches, an epoch loop with
//! validation tracking, per-epoch checkpointing, and bit-exact resume.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, peek_dtype, save_checkpoint, Checkpoint, CheckpointMeta, OptimizerState,
    MODW_VERSION,
};

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datastore::{Dataset, Split, FRAME_LEN};
use crate::error::{Error, Result};
use crate::nn::{softmax_xent, DType, ModelGraph, Real, SgdMomentum, Tensor};

/// Training protocol parameters. Defaults encode the reference recipe:
/// mini-batches of 256, twelve epochs, SGDM at lr 0.01 / momentum 0.9.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Scalar width the CLI dispatches on; the generic train path ignores it.
    pub precision: DType,
    /// Write `last.modw` every this many epochs (and always at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            epochs: 12,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 1,
            precision: DType::F32,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument("checkpoint_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// One epoch's record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

/// Per-epoch training curve plus the best-validation bookmark.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// Epoch with the highest validation accuracy (earliest on ties).
    pub fn best_epoch(&self) -> Option<&EpochStats> {
        self.epochs.iter().fold(None, |best: Option<&EpochStats>, e| match best {
            Some(b) if b.val_accuracy >= e.val_accuracy => Some(b),
            _ => Some(e),
        })
    }

    /// Flat text table, one row per epoch.
    pub fn to_text_table(&self) -> String {
        let mut out = String::from("# epoch\ttrain_loss\tval_loss\tval_accuracy\tseconds\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.1}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.seconds
            ));
        }
        out
    }
}

/// Result of [`resume`]: `epochs_run == 0` means the checkpoint had already
/// reached the configured epoch count and nothing was trained.
pub struct ResumeOutcome<F> {
    pub model: ModelGraph<F>,
    pub history: TrainHistory,
    pub epochs_run: usize,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The seeded per-epoch shuffle: a true permutation of the training indices.
pub(crate) fn epoch_order(train_indices: &[usize], seed: u64, epoch: usize) -> Vec<usize> {
    let mut order = train_indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(epoch as u64)));
    order.shuffle(&mut rng);
    order
}

/// Per-epoch dropout stream, independent of the shuffle stream.
fn epoch_dropout_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix(epoch as u64 ^ 0x00D0_97A1_57超错)))
}

/// Map global class indices to positions in the dataset's class list.
fn label_table(ds: &Dataset) -> Vec<Option<usize>> {
    let mut table = vec![None; crate::siggen::ModulationClass::ALL.len()];
    for (pos, class) in ds.manifest.classes.iter().enumerate() {
        table[class.index()] = Some(pos);
    }
    table
}

fn assemble_batch<F: Real>(
    ds: &Dataset,
    indices: &[usize],
    labels_of: &[Option<usize>],
) -> Result<(Tensor<F>, Vec<usize>)> {
    let nb = indices.len();
    let mut data = Vec::with_capacity(nb * 2 * FRAME_LEN);
    let mut labels = Vec::with_capacity(nb);
    for &idx in indices {
        let frame = &ds.frames[idx];
        data.extend(frame.iq.iter().map(|&v| F::from_f64(v)));
        let label = labels_of[frame.meta.class.index()].ok_or_else(|| {
            Error::UnknownClass(format!(
                "frame class {} missing from dataset class list",
                frame.meta.class.name()
            ))
        })?;
        labels.push(label);
    }
    let x = Tensor::from_vec(&[nb, 2, FRAME_LEN], data)?;
    Ok((x, labels))
}

/// Inference-mode mean loss and accuracy over the given frames.
pub fn eval_loss_and_accuracy<F: Real>(
    model: &ModelGraph<F>,
    ds: &Dataset,
    indices: &[usize],
    batch_size: usize,
) -> Result<(f64, f64)> {
    let labels_of = label_table(ds);
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let (x, labels) = assemble_batch::<F>(ds, chunk, &labels_of)?;
        let logits = model.forward_infer(x)?;
        let (loss, _) = softmax_xent(&logits, &labels)?;
        loss_sum += loss.to_f64() * chunk.len() as f64;
        let c = logits.shape()[1];
        for (row, &label) in labels.iter().enumerate() {
            let class_row = &logits.data()[row * c..(row + 1) * c];
            let pred = class_row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if pred == label {
                correct += 1;
            }
        }
    }
    let n = indices.len().max(1) as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

fn check_trainable(model: &ModelGraph<impl Real>, ds: &Dataset) -> Result<()> {
    if model.num_classes != ds.manifest.classes.len() {
        return Err(Error::InvalidArgument(format!(
            "model predicts {} classes but dataset has {}",
            model.num_classes,
            ds.manifest.classes.len()
        )));
    }
    for frame in ds.frames.iter().take(64) {
        let p = frame.power();
        if (p - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "dataset frames are not unit-power normalized (found power {p}); \
                 call Dataset::normalize_all before training"
            )));
        }
    }
    Ok(())
}

fn write_checkpoints<F: Real>(
    out_dir: &Path,
    model: &ModelGraph<F>,
    meta: &CheckpointMeta,
    opt: &SgdMomentum<F>,
    history: &TrainHistory,
    epoch: usize,
    is_best: bool,
    cadence: usize,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let last = epoch == history.epochs.last().map(|e| e.epoch).unwrap_or(epoch);
    if epoch % cadence == 0 || last {
        save_checkpoint(&out_dir.join("last.modw"), model, meta, Some((opt, epoch, history)))?;
    }
    if is_best {
        save_checkpoint(&out_dir.join("best.modw"), model, meta, Some((opt, epoch, history)))?;
    }
    std::fs::write(out_dir.join("history.txt"), history.to_text_table())?;
    Ok(())
}

fn run_epochs<F: Real>(
    model: &mut ModelGraph<F>,
    opt: &mut SgdMomentum<F>,
    ds: &Dataset,
    cfg: &TrainConfig,
    meta: &CheckpointMeta,
    history: &mut TrainHistory,
    start_epoch: usize,
    out_dir: Option<&Path>,
) -> Result<()> {
    let train_idx = ds.split_indices(Split::Train)?;
    let val_idx = ds.split_indices(Split::Val)?;
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidArgument(
            "dataset needs non-empty TRAIN and VAL splits".into(),
        ));
    }
    let labels_of = label_table(ds);
    let mut best_acc = history
        .epochs
        .iter()
        .map(|e| e.val_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);

    for epoch in start_epoch..cfg.epochs {
        let t0 = Instant::now();
        let order = epoch_order(&train_idx, cfg.seed, epoch);
        let mut dropout_rng = epoch_dropout_rng(cfg.seed, epoch);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = assemble_batch::<F>(ds, chunk, &labels_of)?;
            let (logits, cache) = model.forward_train(x, &mut dropout_rng)?;
            let (loss, dlogits) = softmax_xent(&logits, &labels)?;
            model.backward(cache, dlogits)?;
            opt.step(model)?;
            loss_sum += loss.to_f64() * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        let (val_loss, val_accuracy) =
            eval_loss_and_accuracy(model, ds, &val_idx, cfg.batch_size)?;

        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            val_accuracy,
            seconds: t0.elapsed().as_secs_f64(),
        });
        if let Some(dir) = out_dir {
            let is_best = val_accuracy > best_acc;
            write_checkpoints(dir, model, meta, opt, history, epoch + 1, is_best, cfg.checkpoint_every)?;
        }
        best_acc = best_acc.max(val_accuracy);
    }
    Ok(())
}

/// Provenance block for checkpoints written during training.
pub fn checkpoint_meta(model: &ModelGraph<impl Real>, ds: &Dataset) -> CheckpointMeta {
    CheckpointMeta {
        model_id: model.id.clone(),
        num_classes: model.num_classes,
        classes: ds.manifest.classes.clone(),
        train_dataset_id: ds.manifest.dataset_id.clone(),
        train_profile: ds.manifest.profile.clone(),
    }
}

/// Train `model` on the dataset's TRAIN split with per-epoch validation.
///
/// The dataset must be partitioned and unit-power normalized. Checkpoints
/// (`last.modw`, `best.modw`, `history.txt`) are written under `out_dir`
/// when given.
pub fn train<F: Real>(
    model: &mut ModelGraph<F>,
    ds: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_trainable(model, ds)?;
    let meta = checkpoint_meta(model, ds);
    let mut opt = SgdMomentum::new(cfg.learning_rate, cfg.momentum)?;
    let mut history = TrainHistory::default();
    run_epochs(model, &mut opt, ds, cfg, &meta, &mut history, 0, out_dir)?;
    Ok(history)
}

/// Continue training from a checkpoint written by [`train`].
///
/// Restores parameters, running statistics, optimizer velocities, and the
/// epoch counter; in 64-bit mode the continuation is bit-identical to an
/// uninterrupted run. Resuming a checkpoint that already reached
/// `cfg.epochs` is a no-op with `epochs_run == 0`.
pub fn resume<F: Real>(
    ckpt_path: &Path,
    ds: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<ResumeOutcome<F>> {
    cfg.validate()?;
    let ckpt = load_checkpoint::<F>(ckpt_path)?;
    let mut model = ckpt.model;
    check_trainable(&model, ds)?;
    if ckpt.meta.classes != ds.manifest.classes {
        return Err(Error::InvalidArgument(
            "checkpoint was trained on a different class list".into(),
        ));
    }
    let opt_state = ckpt.optimizer.ok_or_else(|| {
        Error::StructuralMismatch("checkpoint has no optimizer section; cannot resume".into())
    })?;
    let start = opt_state.epochs_done;
    if start >= cfg.epochs {
        return Ok(ResumeOutcome { model, history: opt_state.history, epochs_run: 0 });
    }
    let mut opt = SgdMomentum::new(cfg.learning_rate, cfg.momentum)?;
    opt.load_velocities(opt_state.velocities);
    let mut history = opt_state.history;
    let meta = checkpoint_meta(&model, ds);
    run_epochs(&mut model, &mut opt, ds, cfg, &meta, &mut history, start, out_dir)?;
    let epochs_run = cfg.epochs - start;
    Ok(ResumeOutcome { model, history, epochs_run })
}

/// Batch sizes an epoch over `n` frames produces (final partial batch is
/// processed, not dropped).
pub fn batch_plan(n: usize, batch_size: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n / batch_size + 1);
    let mut left = n;
    while left >= batch_size {
        out.push(batch_size);
        left -= batch_size;
    }
    if left > 0 {
        out.push(left);
    }
    out
}
