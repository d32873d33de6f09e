use std::time::Instant;

use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::report::{ConfusionMatrix, EpochRecord, RunReport};
use crate::corpus::{Corpus, Scheme};
use crate::embeddings::{featurize, make_batches, EmbeddingTable, FeaturizedExample};
use crate::error::{Error, Result};
use crate::models::{build_model, model_to_bytes, predict, TrainedModel};
use crate::nncore::{clip_gradients, derive_seed, l2_penalty, l2_penalty_backward, Optimizer, Purpose, RngStream};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

fn check_scheme(model: &TrainedModel, scheme: Scheme) -> Result<()> {
    if scheme.num_classes() != model.num_classes() {
        return Err(Error::MixedSchemes(format!(
            "corpus is {scheme} but the model has {} classes",
            model.num_classes()
        )));
    }
    Ok(())
}

pub(crate) fn evaluate_featurized(
    model: &TrainedModel,
    table: &EmbeddingTable,
    data: &[FeaturizedExample],
) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    let (predicted, _) = predict(model, table, data)?;
    let truth: Vec<usize> = data.iter().map(|e| e.label).collect();
    let confusion = ConfusionMatrix::from_pairs(model.num_classes(), &truth, &predicted);
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        confusion,
    })
}

/// Accuracy and confusion matrix (rows true, columns predicted).
pub fn evaluate(model: &TrainedModel, table: &EmbeddingTable, corpus: &Corpus) -> Result<Evaluation> {
    check_scheme(model, corpus.scheme())?;
    if corpus.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    evaluate_featurized(model, table, &featurize(corpus, table, model.max_len)?)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct FitOutput {
    last: TrainedModel,
    best: TrainedModel,
    best_epoch: usize,
    best_dev: f64,
    history: Vec<EpochRecord>,
    epoch_seconds: Vec<f64>,
}

fn check_corpus(config: &ExperimentConfig, name: &'static str, c: &Corpus) -> Result<()> {
    if c.scheme() != config.scheme {
        return Err(Error::MixedSchemes(format!(
            "{name} corpus is {} but the config targets {}",
            c.scheme(),
            config.scheme
        )));
    }
    if c.is_empty() {
        return Err(Error::Empty(name));
    }
    Ok(())
}

/// The epoch loop. With a dev set the best-dev snapshot is kept (earliest
/// epoch on ties); without one `best` is the last epoch.
fn fit_loop(
    config: &ExperimentConfig,
    table: &EmbeddingTable,
    train_x: &[FeaturizedExample],
    dev_x: Option<&[FeaturizedExample]>,
) -> Result<FitOutput> {
    let spec = config.model_spec();
    let mut model = build_model(&spec, table.dim(), config.max_len, config.seed)?.with_embedding(table);
    model.fingerprint.config_hash = config.hash();
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate());
    let mut dropout_rng = RngStream::new(config.seed, Purpose::Dropout);

    let mut history = Vec::with_capacity(config.epochs + 1);
    let mut epoch_seconds = Vec::with_capacity(config.epochs);
    let record = |m: &TrainedModel, epoch: usize, train_loss: Option<f64>| -> Result<EpochRecord> {
        let train_accuracy = if config.eval_train {
            Some(evaluate_featurized(m, table, train_x)?.accuracy)
        } else {
            None
        };
        let dev_accuracy = match dev_x {
            Some(d) => Some(evaluate_featurized(m, table, d)?.accuracy),
            None => None,
        };
        Ok(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            dev_accuracy,
        })
    };
    history.push(record(&model, 0, None)?);
    let mut best_epoch = 0;
    let mut best_dev = history[0].dev_accuracy.unwrap_or(0.0);
    let mut best = dev_x.map(|_| model.clone());

    for epoch in 1..=config.epochs {
        let t0 = Instant::now();
        let batches = make_batches(train_x, config.batch_size, true, derive_seed(config.seed, epoch as u64));
        let mut loss_sum = 0.0f64;
        for (b, batch) in batches.iter().enumerate() {
            model.zero_grad();
            let labels: Vec<usize> = batch.iter().map(|e| e.label).collect();
            let inputs = model.inputs(batch, table);
            let (logits, cache) = model.forward(&inputs, true, &mut dropout_rng)?;
            let out = model.loss(&logits, &labels)?;
            let penalty = l2_penalty(&model.params(), spec.l2_lambda);
            let loss = out.loss as f64 + penalty;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss {loss} at epoch {epoch}, batch {b}")));
            }
            loss_sum += loss * batch.len() as f64;
            model.backward(&cache, &out.grad)?;
            let mut params = model.params_mut();
            l2_penalty_backward(&mut params, spec.l2_lambda);
            clip_gradients(&mut params, config.max_grad_norm)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
            optimizer
                .step(&mut params)
                .map_err(|e| Error::NonFinite(format!("epoch {epoch}, batch {b}: {e}")))?;
        }
        epoch_seconds.push(t0.elapsed().as_secs_f64());
        let rec = record(&model, epoch, Some(loss_sum / train_x.len() as f64))?;
        log::debug!("epoch {epoch}: {rec:?}");
        if let Some(dev_acc) = rec.dev_accuracy {
            if dev_acc > best_dev {
                best_dev = dev_acc;
                best_epoch = epoch;
                best = Some(model.clone());
            }
        }
        history.push(rec);
    }
    let best = match best {
        Some(b) => b,
        None => {
            best_epoch = config.epochs;
            model.clone()
        }
    };
    Ok(FitOutput {
        last: model,
        best,
        best_epoch,
        best_dev,
        history,
        epoch_seconds,
    })
}

/// Trains for `config.epochs` on `train` alone, with no checkpoint
/// selection. Returns the last-epoch model and the per-epoch history.
pub fn fit(config: &ExperimentConfig, table: &EmbeddingTable, train: &Corpus) -> Result<(TrainedModel, Vec<EpochRecord>)> {
    config.validate()?;
    check_corpus(config, "train corpus", train)?;
    let train_x = featurize(train, table, config.max_len)?;
    let out = fit_loop(config, table, &train_x, None)?;
    Ok((out.last, out.history))
}

/// Trains with best-dev checkpointing and evaluates the checkpoint on test.
///
/// Epoch 0 is the untrained model; later epochs shuffle with the seed
/// derived from `(seed, epoch)`, then for each minibatch run forward and
/// backward, add the L2 term, clip at `max_grad_norm` and step.
pub fn train_run(
    config: &ExperimentConfig,
    table: &EmbeddingTable,
    train: &Corpus,
    dev: &Corpus,
    test: &Corpus,
) -> Result<(TrainedModel, RunReport)> {
    let started = Instant::now();
    config.validate()?;
    check_corpus(config, "dev corpus", dev)?;
    check_corpus(config, "train corpus", train)?;
    check_corpus(config, "test corpus", test)?;
    let spec = config.model_spec();
    let train_x = featurize(train, table, config.max_len)?;
    let dev_x = featurize(dev, table, config.max_len)?;
    let test_x = featurize(test, table, config.max_len)?;

    let out = fit_loop(config, table, &train_x, Some(&dev_x))?;
    let test_eval = evaluate_featurized(&out.best, table, &test_x)?;
    let report = RunReport {
        model_kind: spec.kind.to_string(),
        num_classes: spec.num_classes,
        seed: config.seed,
        config_hash: format!("{:016x}", config.hash()),
        config: config.echo(),
        train_size: train.len(),
        dev_size: dev.len(),
        test_size: test.len(),
        history: out.history,
        best_epoch: out.best_epoch,
        best_dev_accuracy: out.best_dev,
        test_accuracy: test_eval.accuracy,
        test_confusion: test_eval.confusion,
        snapshot_hash: sha256_hex(&model_to_bytes(&out.best)),
        final_hash: sha256_hex(&model_to_bytes(&out.last)),
        infusion: None,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        epoch_seconds: out.epoch_seconds,
    };
    Ok((out.best, report))
}
