use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use xdistill::corpus::{load_labeled, load_parallel, load_paraphrase, load_sts, preprocess, split};
use xdistill::encoder::embed;
use xdistill::eval::{
    accuracy_from_cosines, mean_cosine_similarity, pairwise_cosines, pearson, spearman, time_inference,
};
use xdistill::teacher::{
    read_embedding_file, read_teacher_file, toy_teacher, write_embedding_file, write_teacher_file,
};
use xdistill::trainer::{load_checkpoint, save_checkpoint, train, Checkpoint};
use xdistill::tsne::{render_scatter, run_tsne};
use xdistill::{
    EncoderConfig, EvalReport, EvalTask, Layout2D, ParallelCorpus, TextFormat, TrainingConfig, TsneConfig, Vocab,
};

use crate::{
    BuildVocabArgs, Command, EmbedArgs, EncoderArgs, EvalArgs, EvalParaphraseArgs, EvalStsArgs, FormatArg,
    PreprocessArgs, ToyTeacherArgs, TrainArgs, TsneArgs,
};

pub(crate) fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => run_preprocess(a),
        Command::BuildVocab(a) => run_build_vocab(a),
        Command::ToyTeacher(a) => run_toy_teacher(a),
        Command::Train(a) => run_train(a),
        Command::Embed(a) => run_embed(a),
        Command::EvalParaphrase(a) => run_eval_paraphrase(a),
        Command::EvalSts(a) => run_eval_sts(a),
        Command::Tsne(a) => run_tsne_plot(a),
    }
}

fn load_corpus(path: &Path, format: Option<FormatArg>) -> Result<ParallelCorpus> {
    let format = format
        .map(TextFormat::from)
        .unwrap_or_else(|| TextFormat::from_path(path));
    let corpus = load_parallel(path, format)?;
    info!("loaded {} pairs from {}", corpus.len(), path.display());
    Ok(corpus)
}

fn encoder_config(args: &EncoderArgs, vocab: &Vocab, seed: u64) -> EncoderConfig {
    EncoderConfig {
        vocab_size: vocab.size(),
        dim: args.dim,
        n_layers: args.layers,
        n_heads: args.heads,
        ffn_mult: args.ffn_mult,
        max_len: args.max_len,
        seed,
    }
}

fn run_preprocess(a: PreprocessArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.format)?;
    let cleaned = preprocess(&corpus, a.min_chars, a.max_chars)?;
    info!("kept {} of {} pairs", cleaned.len(), corpus.len());
    match (a.val_fraction, a.val_out) {
        (Some(fraction), Some(val_out)) => {
            let (train_part, val_part) = split(&cleaned, fraction, a.seed)?;
            train_part.write_tsv(&a.out)?;
            val_part.write_tsv(&val_out)?;
            info!(
                "split into {} training and {} held-out pairs",
                train_part.len(),
                val_part.len()
            );
        }
        _ => cleaned.write_tsv(&a.out)?,
    }
    Ok(())
}

fn run_build_vocab(a: BuildVocabArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.format)?;
    let vocab = Vocab::build(&corpus.texts(a.side.into()), a.max_size, a.min_freq)?;
    vocab.save(&a.out)?;
    info!("wrote {} tokens to {}", vocab.size(), a.out.display());
    Ok(())
}

fn run_toy_teacher(a: ToyTeacherArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.format)?;
    let vocab = Vocab::load(&a.vocab)?;
    let config = encoder_config(&a.encoder, &vocab, a.seed);
    let table = toy_teacher(&config, &vocab, &corpus)?;
    write_teacher_file(&a.out, &table)?;
    info!(
        "wrote {}x{} teacher rows to {}",
        table.count(),
        table.dim(),
        a.out.display()
    );
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, a.format)?;
    let teacher = read_teacher_file(&a.teacher, corpus.len())
        .with_context(|| format!("teacher file {} does not match the corpus", a.teacher.display()))?;
    let vocab = Vocab::load(&a.vocab)?;
    let enc = encoder_config(&a.encoder, &vocab, a.seed);
    let cfg = TrainingConfig {
        loss: a.loss.into(),
        epochs: a.epochs,
        batch_size: a.batch_size,
        base_lr: a.lr,
        warmup_ratio: a.warmup_ratio,
        weight_decay: a.weight_decay,
        betas: (a.beta1, a.beta2),
        eps: a.adam_eps,
        scale: a.scale,
        max_len: a.encoder.max_len,
        seed: a.seed,
        shuffle: !a.no_shuffle,
    };
    let mut log = match &a.log {
        Some(path) => Some(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => None,
    };
    let mut log_error = None;
    let ckpt = train(&corpus, &teacher, &vocab, &enc, &cfg, |record| {
        if record.step % 100 == 0 {
            info!(
                "step {} epoch {} lr {:e} loss {:.6}",
                record.step, record.epoch, record.lr, record.loss
            );
        }
        if let Some(out) = log.as_mut() {
            if let Err(e) = writeln!(out, "{}", record.to_log_line()) {
                log_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e).context("writing the training log");
    }
    if let Some(mut out) = log {
        out.flush().context("writing the training log")?;
    }
    save_checkpoint(&a.out, &ckpt)?;
    info!(
        "trained {} steps, final loss {:.6}; checkpoint at {}",
        ckpt.meta.steps,
        ckpt.meta.final_loss,
        a.out.display()
    );
    Ok(())
}

fn load_student(checkpoint: &Path, vocab: &Path) -> Result<(Checkpoint, Vocab)> {
    let ckpt = load_checkpoint(checkpoint)?;
    let vocab = Vocab::load(vocab)?;
    ckpt.check_vocab(&vocab)?;
    Ok((ckpt, vocab))
}

/// Column `column` of every line; each line must have it.
fn read_column(path: &Path, column: usize) -> Result<Vec<String>> {
    let content = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut texts = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        match line.split('\t').nth(column) {
            Some(text) => texts.push(text.to_string()),
            None => bail!("{}:{}: no column {column}", path.display(), i + 1),
        }
    }
    if texts.is_empty() {
        bail!("{} has no lines", path.display());
    }
    Ok(texts)
}

fn run_embed(a: EmbedArgs) -> Result<()> {
    let (ckpt, vocab) = load_student(&a.checkpoint, &a.vocab)?;
    let texts = read_column(&a.input, a.column)?;
    let emb = embed(&ckpt.params, &vocab, &texts, ckpt.config.max_len)?;
    write_embedding_file(&a.out, &emb)?;
    info!("wrote {}x{} embeddings to {}", emb.count(), emb.dim(), a.out.display());
    Ok(())
}

fn emit(report: &EvalReport, path: Option<&Path>) -> Result<()> {
    let line = report.to_json_line();
    println!("{line}");
    if let Some(path) = path {
        fs::write(path, format!("{line}\n")).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn embed_pairs(common: &EvalArgs, a: &[String], b: &[String]) -> Result<(Vec<f64>, f64, f64)> {
    let (ckpt, vocab) = load_student(&common.checkpoint, &common.vocab)?;
    let max_len = ckpt.config.max_len;
    let ea = embed(&ckpt.params, &vocab, a, max_len)?;
    let eb = embed(&ckpt.params, &vocab, b, max_len)?;
    let cosines = pairwise_cosines(&ea, &eb)?;
    let mcs = mean_cosine_similarity(&ea, &eb)?;
    let all: Vec<&str> = a.iter().chain(b).map(String::as_str).collect();
    let seconds = time_inference(&ckpt.params, &vocab, &all, max_len, common.repeats)?;
    Ok((cosines, mcs, seconds))
}

fn run_eval_paraphrase(a: EvalParaphraseArgs) -> Result<()> {
    let pairs = load_paraphrase(&a.common.pairs)?;
    let (cosines, mcs, seconds) = embed_pairs(&a.common, &pairs.text_a, &pairs.text_b)?;
    let report = EvalReport {
        task: EvalTask::Paraphrase,
        mcs: Some(mcs),
        accuracy: Some(accuracy_from_cosines(&cosines, &pairs.labels, a.threshold)?),
        pearson_r: None,
        spearman_rho: None,
        inference_seconds: seconds,
        n_items: cosines.len(),
    };
    emit(&report, a.common.report.as_deref())
}

fn run_eval_sts(a: EvalStsArgs) -> Result<()> {
    let sts = load_sts(&a.common.pairs)?;
    let text_a: Vec<String> = sts.items.iter().map(|p| p.text_a.clone()).collect();
    let text_b: Vec<String> = sts.items.iter().map(|p| p.text_b.clone()).collect();
    let gold: Vec<f64> = sts.items.iter().map(|p| p.score).collect();
    let (cosines, _, seconds) = embed_pairs(&a.common, &text_a, &text_b)?;
    let report = EvalReport {
        task: EvalTask::Sts,
        mcs: None,
        accuracy: None,
        pearson_r: Some(pearson(&cosines, &gold)?),
        spearman_rho: Some(spearman(&cosines, &gold)?),
        inference_seconds: seconds,
        n_items: cosines.len(),
    };
    emit(&report, a.common.report.as_deref())
}

fn run_tsne_plot(a: TsneArgs) -> Result<()> {
    let emb = read_embedding_file(&a.embeddings)?;
    let labeled = load_labeled(&a.labels)?;
    if emb.count() != labeled.items.len() {
        return Err(xdistill::Error::Alignment {
            expected: labeled.items.len(),
            found: emb.count(),
        })
        .context("embedding rows must match the labeled sentences");
    }
    let config = TsneConfig {
        perplexity: a.perplexity,
        iterations: a.iterations,
        learning_rate: a.learning_rate,
        early_exaggeration: a.early_exaggeration,
        seed: a.seed,
    };
    let points = run_tsne(&emb, &config)?;
    let layout = Layout2D::new(points, labeled.labels())?;
    render_scatter(&layout, &labeled.label_names, &a.out)?;
    info!(
        "plotted {} points in {} classes to {}",
        layout.len(),
        labeled.label_names.len(),
        a.out.display()
    );
    Ok(())
}
