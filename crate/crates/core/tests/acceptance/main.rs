//! Acceptance criteria AC-1 through AC-9. Prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

mod oracles;

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use xdistill::corpus::{split, ParallelCorpus};
use xdistill::encoder::{backward, embed, forward};
use xdistill::eval::{mean_cosine_similarity, paraphrase_accuracy, pearson, spearman, PARAPHRASE_THRESHOLD};
use xdistill::losses::{mnr_loss, mse_loss};
use xdistill::synthetic::{bilingual_corpus, SyntheticConfig};
use xdistill::teacher::{read_teacher_file, toy_teacher, write_teacher_file};
use xdistill::trainer::{load_checkpoint, lr_at, save_checkpoint, train};
use xdistill::tsne::{joint_probabilities, nearest_neighbor_accuracy, run_tsne};
use xdistill::{
    EmbeddingBatch, EncoderConfig, EncoderParams, Layout2D, LossKind, TeacherTable, TokenSeq, TrainingConfig,
    TsneConfig, Vocab,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

fn ac1_gradients() -> Outcome {
    let config = EncoderConfig {
        vocab_size: 50,
        dim: 8,
        n_layers: 1,
        n_heads: 1,
        ffn_mult: 4,
        max_len: 8,
        seed: 17,
    };
    let params = EncoderParams::<f64>::init(&config).map_err(|e| e.to_string())?;
    let batch: Vec<TokenSeq> = [vec![3u32, 11, 11, 42, 7], vec![9, 2], vec![49]]
        .into_iter()
        .map(|ids| TokenSeq::from_ids(ids).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let weights = Array2::from_shape_fn((batch.len(), config.dim), |_| rng.random_range(-1.0..1.0));
    let objective = |p: &EncoderParams<f64>| (forward(p, &batch).unwrap().0.vectors() * &weights).sum();
    let (_, cache) = forward(&params, &batch).unwrap();
    let grads = backward(&params, &cache, &weights).unwrap();

    let eps = 1e-5;
    let mut worst_encoder: f64 = 0.0;
    let n_tensors = params.tensors().len();
    for (ti, (_, analytic)) in grads.tensors().into_iter().enumerate() {
        let (mut max_err, mut max_mag): (f64, f64) = (0.0, 0.0);
        for (k, &exact) in analytic.iter().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][k] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][k] -= eps;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * eps);
            max_err = max_err.max((numeric - exact).abs());
            max_mag = max_mag.max(numeric.abs());
        }
        worst_encoder = worst_encoder.max(max_err / max_mag.max(1e-8));
    }

    let eps = 1e-6;
    let mut worst_loss: f64 = 0.0;
    for _ in 0..5 {
        let t = EmbeddingBatch::from_rows(&random_rows(&mut rng, 4, 8)).unwrap();
        let s = random_rows(&mut rng, 4, 8);
        for kind in [LossKind::Mse, LossKind::Mnr] {
            let value = |rows: &[Vec<f64>]| {
                let sb = EmbeddingBatch::from_rows(rows).unwrap();
                match kind {
                    LossKind::Mse => mse_loss(&t, &sb).unwrap(),
                    LossKind::Mnr => mnr_loss(&t, &sb, 20.0).unwrap(),
                }
            };
            let analytic = value(&s).grad_student;
            let (mut max_err, mut max_mag): (f64, f64) = (0.0, 0.0);
            for i in 0..4 {
                for j in 0..8 {
                    let mut plus = s.clone();
                    plus[i][j] += eps;
                    let mut minus = s.clone();
                    minus[i][j] -= eps;
                    let numeric = (value(&plus).value - value(&minus).value) / (2.0 * eps);
                    max_err = max_err.max((numeric - analytic[[i, j]]).abs());
                    max_mag = max_mag.max(numeric.abs());
                }
            }
            worst_loss = worst_loss.max(max_err / max_mag.max(1e-8));
        }
    }
    check(
        worst_encoder < 1e-3 && worst_loss < 1e-4,
        format!(
            "{n_tensors} encoder tensors, worst rel err {worst_encoder:.2e} (< 1e-3); losses {worst_loss:.2e} (< 1e-4)"
        ),
    )
}

struct ClosedLoop {
    train: ParallelCorpus,
    held_out: ParallelCorpus,
    student_vocab: Vocab,
    student_config: EncoderConfig,
    teacher_train: TeacherTable,
    teacher_held_out: TeacherTable,
}

const TEACHER_SEED: u64 = 1001;
const STUDENT_SEED: u64 = 2002;

fn closed_loop_setup() -> ClosedLoop {
    let corpus = bilingual_corpus(&SyntheticConfig {
        pairs: 2000,
        seed: 7,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let (train, held_out) = split(&corpus, 0.1, 3).unwrap();
    assert_eq!(held_out.len(), 200);
    let teacher_vocab = Vocab::build(&corpus.targets(), 1000, 1).unwrap();
    let student_vocab = Vocab::build(&train.sources(), 1000, 1).unwrap();
    let base = EncoderConfig {
        vocab_size: teacher_vocab.size(),
        dim: 32,
        n_layers: 2,
        n_heads: 4,
        ffn_mult: 4,
        max_len: 16,
        seed: TEACHER_SEED,
    };
    let teacher_train = toy_teacher(&base, &teacher_vocab, &train).unwrap();
    let teacher_held_out = toy_teacher(&base, &teacher_vocab, &held_out).unwrap();
    let student_config = EncoderConfig {
        vocab_size: student_vocab.size(),
        seed: STUDENT_SEED,
        ..base
    };
    ClosedLoop {
        train,
        held_out,
        student_vocab,
        student_config,
        teacher_train,
        teacher_held_out,
    }
}

fn table_i(loss: LossKind) -> TrainingConfig {
    TrainingConfig {
        loss,
        epochs: 5,
        max_len: 16,
        seed: 5,
        ..TrainingConfig::default()
    }
}

fn ac2_mse_distillation(setup: &ClosedLoop) -> Outcome {
    let cfg = table_i(LossKind::Mse);
    let ckpt = train(
        &setup.train,
        &setup.teacher_train,
        &setup.student_vocab,
        &setup.student_config,
        &cfg,
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    let student = embed(
        &ckpt.params,
        &setup.student_vocab,
        &setup.held_out.sources(),
        cfg.max_len,
    )
    .unwrap();
    let mcs = mean_cosine_similarity(&student, &setup.teacher_held_out.embeddings).unwrap();
    check(
        mcs >= 0.90,
        format!(
            "held-out mean cosine {mcs:.4} (>= 0.90) after {} steps",
            ckpt.meta.steps
        ),
    )
}

fn ac3_mnr_retrieval(setup: &ClosedLoop) -> Outcome {
    let cfg = TrainingConfig {
        batch_size: 8,
        scale: 20.0,
        ..table_i(LossKind::Mnr)
    };
    let ckpt = train(
        &setup.train,
        &setup.teacher_train,
        &setup.student_vocab,
        &setup.student_config,
        &cfg,
        |_| {},
    )
    .map_err(|e| e.to_string())?;
    let student = embed(
        &ckpt.params,
        &setup.student_vocab,
        &setup.held_out.sources(),
        cfg.max_len,
    )
    .unwrap();
    let teacher = &setup.teacher_held_out.embeddings;
    let (mut hits, mut anchors) = (0usize, 0usize);
    let n = setup.held_out.len();
    for start in (0..n).step_by(8) {
        let end = (start + 8).min(n);
        for i in start..end {
            let t: Vec<f64> = teacher.row(i).iter().map(|&v| v as f64).collect();
            let sims: Vec<f64> = (start..end)
                .map(|j| oracles::cos(&t, &student.row(j).iter().map(|&v| v as f64).collect::<Vec<_>>()))
                .collect();
            let best = (0..sims.len()).max_by(|&a, &b| sims[a].total_cmp(&sims[b])).unwrap();
            hits += usize::from(best == i - start);
            anchors += 1;
        }
    }
    let rate = hits as f64 / anchors as f64;
    check(
        rate >= 0.90,
        format!("positive ranked first for {hits}/{anchors} anchors ({rate:.3}, >= 0.90)"),
    )
}

fn ac4_loss_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let (mut mnr_err, mut mse_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let b = rng.random_range(2..=16);
        let d = rng.random_range(2..=32);
        let t = random_rows(&mut rng, b, d);
        let s = random_rows(&mut rng, b, d);
        let scale = rng.random_range(1.0..=20.0);
        let (tb, sb) = (
            EmbeddingBatch::from_rows(&t).unwrap(),
            EmbeddingBatch::from_rows(&s).unwrap(),
        );
        mnr_err = mnr_err.max((mnr_loss(&tb, &sb, scale).unwrap().value - oracles::mnr(&t, &s, scale)).abs());
        mse_err = mse_err.max((mse_loss(&tb, &sb).unwrap().value - oracles::mse(&t, &s)).abs());
    }
    check(
        mnr_err < 1e-10 && mse_err < 1e-12,
        format!("max |mnr - oracle| {mnr_err:.1e} (< 1e-10), max |mse - oracle| {mse_err:.1e} (< 1e-12)"),
    )
}

fn ac5_correlation_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (mut p_err, mut s_err): (f64, f64) = (0.0, 0.0);
    for trial in 0..100 {
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if trial % 2 == 0 {
                rng.random_range(0..8) as f64
            } else {
                rng.random_range(-5.0..5.0)
            }
        };
        let x: Vec<f64> = (0..100).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v + draw(&mut rng)).collect();
        p_err = p_err.max((pearson(&x, &y).unwrap() - oracles::pearson(&x, &y)).abs());
        s_err = s_err.max((spearman(&x, &y).unwrap() - oracles::spearman(&x, &y)).abs());
    }
    let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap();
    let rho = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap();
    check(
        p_err < 1e-12 && s_err < 1e-12 && r == 0.5 && rho == -0.5,
        format!("pearson err {p_err:.1e}, spearman err {s_err:.1e} (< 1e-12); examples r={r}, rho={rho}"),
    )
}

fn ac6_threshold() -> Outcome {
    // second vectors chosen so cos is 0.79, 0.80 and 0.81 with the first
    let unit = |c: f64| vec![c, (1.0 - c * c).sqrt()];
    let a = EmbeddingBatch::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
    let b = EmbeddingBatch::from_rows(&[unit(0.79), vec![4.0, 3.0], unit(0.81)]).unwrap();
    let labels = [0u8, 1, 1];
    let acc = paraphrase_accuracy(&a, &b, &labels, PARAPHRASE_THRESHOLD).unwrap();
    check(
        acc == 1.0,
        format!("cosines 0.79/0.80/0.81 -> (0, 1, 1), accuracy {acc}"),
    )
}

fn ac7_tsne() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let noise = Normal::new(0.0, 0.1).unwrap();
    // centers at (5 / sqrt 2) e_k are 5 apart pairwise
    let offset = 5.0 / 2f64.sqrt();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in 0..3 {
        for _ in 0..50 {
            rows.push(
                (0..16)
                    .map(|k| if k == class { offset } else { 0.0 } + noise.sample(&mut rng))
                    .collect(),
            );
            labels.push(class);
        }
    }
    let x = EmbeddingBatch::<f64>::from_rows(&rows).unwrap();
    let p = joint_probabilities(&x, 15.0).map_err(|e| e.to_string())?;
    let n = p.nrows();
    let mut invariants = (p.sum() - 1.0).abs() <= 1e-9;
    for i in 0..n {
        invariants &= p[[i, i]] == 0.0;
        for j in 0..n {
            invariants &= p[[i, j]] >= 0.0 && (p[[i, j]] - p[[j, i]]).abs() <= 1e-9;
        }
    }
    let config = TsneConfig {
        perplexity: 15.0,
        iterations: 1000,
        seed: 7,
        ..TsneConfig::default()
    };
    let y = run_tsne(&x, &config).map_err(|e| e.to_string())?;
    let acc = nearest_neighbor_accuracy(&Layout2D::new(y, labels).unwrap());
    let secs = start.elapsed().as_secs_f64();
    check(
        acc >= 0.95 && invariants,
        format!(
            "1-NN accuracy {acc:.3} (>= 0.95), P invariants {}, {secs:.1}s",
            if invariants { "hold" } else { "violated" }
        ),
    )
}

fn ac8_determinism(dir: &Path) -> Outcome {
    let corpus = bilingual_corpus(&SyntheticConfig {
        pairs: 120,
        seed: 8,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let tv = Vocab::build(&corpus.targets(), 1000, 1).unwrap();
    let sv = Vocab::build(&corpus.sources(), 1000, 1).unwrap();
    let base = EncoderConfig {
        vocab_size: tv.size(),
        dim: 16,
        n_layers: 2,
        n_heads: 2,
        ffn_mult: 2,
        max_len: 16,
        seed: 1,
    };
    let teacher = toy_teacher(&base, &tv, &corpus).unwrap();
    let sc = EncoderConfig {
        vocab_size: sv.size(),
        seed: 2,
        ..base
    };
    let cfg = TrainingConfig {
        epochs: 2,
        max_len: 16,
        ..TrainingConfig::default()
    };
    let a = train(&corpus, &teacher, &sv, &sc, &cfg, |_| {}).map_err(|e| e.to_string())?;
    let b = train(&corpus, &teacher, &sv, &sc, &cfg, |_| {}).unwrap();
    let same_training = a.to_bytes() == b.to_bytes();

    let ckpt_path = dir.join("student.ckpt");
    save_checkpoint(&ckpt_path, &a).unwrap();
    let back = load_checkpoint(&ckpt_path).unwrap();
    let ckpt_round_trip = back.to_bytes() == a.to_bytes() && back.params == a.params;

    let teacher_path = dir.join("teacher.bin");
    write_teacher_file(&teacher_path, &teacher).unwrap();
    let t_back = read_teacher_file(&teacher_path, corpus.len()).unwrap();
    let bits = |t: &TeacherTable| t.embeddings.vectors().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let teacher_round_trip = bits(&t_back) == bits(&teacher);

    let seqs = sv.encode_batch(&corpus.sources()[..10], 16).unwrap();
    let (padded, _) = forward(&a.params, &seqs).unwrap();
    let unpadded: Vec<TokenSeq> = seqs
        .iter()
        .map(|s| TokenSeq::from_ids(s.real_ids().to_vec()).unwrap())
        .collect();
    let (plain, _) = forward(&a.params, &unpadded).unwrap();
    let pad_exact = padded
        .vectors()
        .iter()
        .zip(plain.vectors().iter())
        .all(|(x, y)| x.to_bits() == y.to_bits());

    check(
        same_training && ckpt_round_trip && teacher_round_trip && pad_exact,
        format!(
            "repeat training identical {same_training}, checkpoint round trip {ckpt_round_trip}, teacher round trip {teacher_round_trip}, padding exact {pad_exact}"
        ),
    )
}

fn ac9_schedule() -> Outcome {
    let (total, ratio, base) = (1000, 0.1, 5e-5);
    let points = [(0, 0.0), (50, 2.5e-5), (100, 5e-5), (550, 2.5e-5), (1000, 0.0)];
    let mut worst: f64 = 0.0;
    for (step, expected) in points {
        worst = worst.max((lr_at(step, total, ratio, base) - expected).abs());
    }
    check(
        worst <= 1e-15,
        format!("max deviation {worst:.1e} over steps 0/50/100/550/1000 (<= 1e-15)"),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut failed = 0;
    let mut report = |name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{name} PASS: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("{name} FAIL: {detail} [{secs:.1}s]");
            }
        }
    };
    let t = Instant::now();
    report("AC-1", t, ac1_gradients());
    let t = Instant::now();
    let setup = closed_loop_setup();
    report("AC-2", t, ac2_mse_distillation(&setup));
    let t = Instant::now();
    report("AC-3", t, ac3_mnr_retrieval(&setup));
    let t = Instant::now();
    report("AC-4", t, ac4_loss_oracles());
    let t = Instant::now();
    report("AC-5", t, ac5_correlation_oracles());
    let t = Instant::now();
    report("AC-6", t, ac6_threshold());
    let t = Instant::now();
    report("AC-7", t, ac7_tsne());
    let t = Instant::now();
    report("AC-8", t, ac8_determinism(dir.path()));
    let t = Instant::now();
    report("AC-9", t, ac9_schedule());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
