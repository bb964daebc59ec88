//! Subcommand implementations.

use std::fs;
use std::io::BufRead;
use std::path::Path;

use vigil_core::checkpoint;
use vigil_core::embeddings::{build_embedding_matrix, VecFile};
use vigil_core::error::{Error, Result};
use vigil_core::layers::EmbeddingTable;
use vigil_core::metrics::{percent, EvalReport};
use vigil_core::model::Model;
use vigil_core::rng::RngState;
use vigil_core::text::dataset::{self, CLASS_NAMES};
use vigil_core::text::vocab::{EncodedBatch, Vocabulary};
use vigil_core::text::{preprocess, Lexicon};
use vigil_core::train::{evaluate, fit, history_csv, stratified_split};
use vigil_core::util::write_atomic;
use vigil_core::verify;

use crate::config::RunConfig;

const VOCAB_FILE: &str = "vocab.txt";
const LEXICON_FILE: &str = "lexicon.txt";

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let rows = dataset::read_csv(&cfg.dataset)?;
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "dataset {} has no rows",
            cfg.dataset.display()
        )));
    }
    let labels = dataset::require_labels(&rows)?;
    let lexicon = cfg.lexicon.as_deref().map(Lexicon::load).transpose()?;

    let tokens: Vec<Vec<String>> = rows
        .iter()
        .map(|r| preprocess(&r.text, lexicon.as_ref()))
        .collect();

    let (train_idx, val_idx) = stratified_split(&labels, cfg.val_fraction, cfg.train.seed)?;
    log::info!(
        "{} rows: {} train / {} validation",
        rows.len(),
        train_idx.len(),
        val_idx.len()
    );

    // Vocabulary comes from the training split only.
    let train_tokens: Vec<Vec<String>> =
        train_idx.iter().map(|&i| tokens[i].clone()).collect();
    let vocab = Vocabulary::build(&train_tokens, cfg.min_frequency)?;
    log::info!("vocabulary: {} entries", vocab.len());

    let all = EncodedBatch::encode(&tokens, Some(&labels), &vocab, cfg.spec.max_len)?;
    let train_batch = all.select(&train_idx);
    let val_batch = all.select(&val_idx);

    let mut rng = RngState::new(cfg.train.seed);
    let mut emb_rng = rng.split();
    let table: EmbeddingTable<f32> = match &cfg.vectors {
        Some(path) => {
            let vec_file = VecFile::parse(path)?;
            let build = build_embedding_matrix(
                &vec_file,
                &vocab,
                cfg.spec.embed_dim,
                cfg.spec.embeddings_trainable,
                &mut emb_rng,
            )?;
            println!(
                "embeddings: {}/{} tokens covered ({:.1}%)",
                build.found,
                vocab.len().saturating_sub(2),
                build.coverage * 100.0
            );
            build.table
        }
        None => EmbeddingTable::random(
            vocab.len(),
            cfg.spec.embed_dim,
            cfg.spec.embeddings_trainable,
            &mut emb_rng,
        ),
    };

    let mut model = Model::build(cfg.spec.clone(), table, &mut rng)?;
    println!(
        "model: {} with {} trainable parameters",
        cfg.spec.kind.display_name(),
        model.param_count()
    );

    let result = fit(&mut model, &train_batch, &val_batch, &cfg.train)?;
    let epochs_run = result.history.len();
    println!(
        "trained {epochs_run} epoch(s); best validation macro-F1 {} at epoch {}{}",
        percent(result.best_macro_f1),
        result.best_epoch,
        if result.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );

    fs::create_dir_all(&cfg.out_dir)?;
    let ckpt_dir = cfg.out_dir.join("checkpoint");
    checkpoint::save(&model, &ckpt_dir)?;
    vocab.save(&ckpt_dir.join(VOCAB_FILE))?;
    if let Some(src) = &cfg.lexicon {
        fs::copy(src, ckpt_dir.join(LEXICON_FILE))?;
    }
    write_atomic(
        &cfg.out_dir.join("history.csv"),
        history_csv(&result.history).as_bytes(),
    )?;

    let final_report = evaluate(&model, &all)?;
    write_atomic(
        &cfg.out_dir.join("report.txt"),
        format!("{final_report}\n").as_bytes(),
    )?;
    write_atomic(
        &cfg.out_dir.join("report.csv"),
        report_csv(&final_report).as_bytes(),
    )?;
    println!("\nfull-dataset evaluation of the best checkpoint:");
    println!("{final_report}");
    println!(
        "\n{:<18} {}",
        cfg.spec.kind.display_name(),
        percent(final_report.macro_f1)
    );
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

/// Checkpoint directory plus the vocabulary and optional lexicon stored
/// alongside the weights.
pub struct LoadedModel {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub lexicon: Option<Lexicon>,
}

pub fn load_model(ckpt_dir: &Path) -> Result<LoadedModel> {
    let model: Model<f32> = checkpoint::load(ckpt_dir)?;
    let vocab = Vocabulary::load(&ckpt_dir.join(VOCAB_FILE))?;
    if vocab.len() != model.vocab_size() {
        return Err(Error::Config(format!(
            "vocabulary has {} entries but checkpoint embeds {}",
            vocab.len(),
            model.vocab_size()
        )));
    }
    let lexicon_path = ckpt_dir.join(LEXICON_FILE);
    let lexicon = lexicon_path
        .exists()
        .then(|| Lexicon::load(&lexicon_path))
        .transpose()?;
    Ok(LoadedModel {
        model,
        vocab,
        lexicon,
    })
}

pub fn cmd_eval(ckpt_dir: &Path, dataset_path: &Path, out_dir: &Path) -> Result<()> {
    let loaded = load_model(ckpt_dir)?;
    let rows = dataset::read_csv(dataset_path)?;
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "dataset {} has no rows",
            dataset_path.display()
        )));
    }
    let labels = dataset::require_labels(&rows)?;
    let tokens: Vec<Vec<String>> = rows
        .iter()
        .map(|r| preprocess(&r.text, loaded.lexicon.as_ref()))
        .collect();
    let batch = EncodedBatch::encode(
        &tokens,
        Some(&labels),
        &loaded.vocab,
        loaded.model.spec().max_len,
    )?;

    let report = evaluate(&loaded.model, &batch)?;
    println!("{report}");
    println!(
        "\n{:<18} {}",
        loaded.model.spec().kind.display_name(),
        percent(report.macro_f1)
    );
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("eval_report.csv");
    write_atomic(&csv_path, report_csv(&report).as_bytes())?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

pub fn cmd_predict(ckpt_dir: &Path, input: Option<&Path>) -> Result<()> {
    let loaded = load_model(ckpt_dir)?;
    let texts: Vec<String> = match input {
        Some(path) => dataset::read_csv(path)?
            .into_iter()
            .map(|r| r.text)
            .collect(),
        None => {
            let stdin = std::io::stdin();
            let mut lines = Vec::new();
            for line in stdin.lock().lines() {
                lines.push(line?);
            }
            lines
        }
    };

    let stdout = std::io::stdout();
    let mut w = csv::Writer::from_writer(stdout.lock());
    w.write_record(["text", "label", "p_clean", "p_offensive", "p_hate"])
        .map_err(io_of_csv)?;
    if !texts.is_empty() {
        let tokens: Vec<Vec<String>> = texts
            .iter()
            .map(|t| preprocess(t, loaded.lexicon.as_ref()))
            .collect();
        let batch =
            EncodedBatch::encode(&tokens, None, &loaded.vocab, loaded.model.spec().max_len)?;
        let preds = loaded.model.predict(&batch)?;
        for (text, p) in texts.iter().zip(&preds) {
            w.write_record([
                text.as_str(),
                &p.label.to_string(),
                &format!("{:.6}", p.probs[0]),
                &format!("{:.6}", p.probs[1]),
                &format!("{:.6}", p.probs[2]),
            ])
            .map_err(io_of_csv)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_verify(sabotage: Option<&str>) -> i32 {
    let started = std::time::Instant::now();
    let results = verify::run_all(sabotage);
    println!("{:<28} {:<6} detail", "check", "status");
    let mut failures = Vec::new();
    for r in &results {
        println!(
            "{:<28} {:<6} {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        if !r.passed {
            failures.push(r.name);
        }
    }
    println!(
        "{} checks in {:.1}s",
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failures.is_empty() {
        0
    } else {
        eprintln!("error: verify: failed checks: {}", failures.join(", "));
        1
    }
}

fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("name,value\n");
    out.push_str(&format!("total,{}\n", report.total));
    out.push_str(&format!("accuracy,{}\n", report.accuracy));
    out.push_str(&format!("macro_f1,{}\n", report.macro_f1));
    out.push_str(&format!("micro_f1,{}\n", report.micro_f1));
    out.push_str(&format!("weighted_f1,{}\n", report.weighted_f1));
    for (c, s) in report.per_class.iter().enumerate() {
        let name = CLASS_NAMES[c];
        out.push_str(&format!("precision_{name},{}\n", s.precision));
        out.push_str(&format!("recall_{name},{}\n", s.recall));
        out.push_str(&format!("f1_{name},{}\n", s.f1));
        out.push_str(&format!("support_{name},{}\n", s.support));
    }
    for (g, row) in report.confusion.iter().enumerate() {
        for (p, v) in row.iter().enumerate() {
            out.push_str(&format!(
                "confusion_{}_{},{v}\n",
                CLASS_NAMES[g], CLASS_NAMES[p]
            ));
        }
    }
    out
}

fn io_of_csv(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
