use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, ensure, Context, Result};
use rand::RngCore;
use serde::Serialize;

use grounding_core::analysis::{self, NuanceDictionary};
use grounding_core::checks;
use grounding_core::corpus::{
    build_vocab, from_jsonl, import_release, make_examples_with, make_test_variants, split_dataset,
    to_jsonl, token_counts, ImportConfig, Transcript, Vocabulary,
};
use grounding_core::model::{evaluate, train, ModelConfig, ModelFile};
use grounding_core::rng;
use grounding_core::synth;
use grounding_core::world::{draw_shared_count, generate_world};
use grounding_server::{serve, AppState, ServerConfig, SystemClock};

use crate::{
    AnalyzeArgs, Cli, Command, EvalArgs, GenerateArgs, ImportArgs, SelfcheckArgs, ServeArgs,
    SplitArgs, SynthArgs, TrainArgs, VocabArgs,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Generate(a) => generate(a, g.seed),
        Command::Synth(a) => synth_cmd(a, g.seed),
        Command::Serve(a) => serve_cmd(a, g.seed),
        Command::Import(a) => import(a, g.json),
        Command::Split(a) => split(a, g.seed, g.json),
        Command::Vocab(a) => vocab(a, g.json),
        Command::Analyze(a) => analyze(a, g.json),
        Command::Train(a) => train_cmd(a, g.seed, g.json),
        Command::Eval(a) => eval(a, g.seed, g.json),
        Command::Selfcheck(a) => selfcheck(a, g.seed, g.json),
    }
}

fn read_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_jsonl(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_output(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, contents),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .context("writing stdout"),
    }
}

/// Print `value` as JSON when asked, otherwise the plain-text lines.
fn report<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).expect("report serializes")
        );
    } else {
        println!("{}", text());
    }
}

fn generate(a: &GenerateArgs, seed: u64) -> Result<()> {
    if let Some(k) = a.num_shared {
        ensure!(
            (4..=6).contains(&k),
            "--num-shared must be 4, 5 or 6, got {k}"
        );
    }
    let mut out = String::new();
    for i in 0..a.count as u64 {
        let mut r = rng::seeded(rng::derive_seed(seed, i));
        let k = a.num_shared.unwrap_or_else(|| draw_shared_count(&mut r));
        let w = generate_world(k, r.next_u64())?;
        out.push_str(&serde_json::to_string(&w)?);
        out.push('\n');
    }
    write_output(a.out.as_deref(), &out)
}

fn synth_cmd(a: &SynthArgs, seed: u64) -> Result<()> {
    write_output(a.out.as_deref(), &to_jsonl(&synth::corpus(a.count, seed)))
}

fn serve_cmd(a: &ServeArgs, seed: u64) -> Result<()> {
    ensure!(a.tick_ms > 0, "--tick-ms must be positive");
    if let Some(ui) = &a.ui {
        ensure!(ui.is_dir(), "--ui {} is not a directory", ui.display());
    }
    let mut config = ServerConfig::new(a.store.clone(), seed);
    config.ui_dir = a.ui.clone();
    config.tick_interval = Duration::from_millis(a.tick_ms);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let state = AppState::new(config, Arc::new(SystemClock))
            .with_context(|| format!("opening store {}", a.store.display()))?;
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port))
            .await
            .with_context(|| format!("binding {}:{}", a.host, a.port))?;
        eprintln!("listening on ws://{}/ws", listener.local_addr()?);
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

#[derive(Serialize)]
struct ImportSummary {
    dialogues: usize,
    by_shared: std::collections::BTreeMap<usize, usize>,
    skipped: Vec<String>,
}

fn import(a: &ImportArgs, json: bool) -> Result<()> {
    let (x, y) = a
        .view_center
        .split_once(',')
        .context("--view-center must be X,Y")?;
    let config = ImportConfig {
        view_center: (x.trim().parse()?, y.trim().parse()?),
        view_radius: a.view_radius,
        skip_invalid: a.skip_invalid,
    };
    let imported = import_release(&a.release, &config)?;
    write_file(&a.out, &to_jsonl(&imported.transcripts))?;
    let mut by_shared = std::collections::BTreeMap::new();
    for t in &imported.transcripts {
        *by_shared.entry(t.num_shared).or_insert(0) += 1;
    }
    let summary = ImportSummary {
        dialogues: imported.transcripts.len(),
        by_shared,
        skipped: imported.skipped,
    };
    report(json, &summary, || {
        let per_k: Vec<String> = summary
            .by_shared
            .iter()
            .map(|(k, n)| format!("k={k}: {n}"))
            .collect();
        format!(
            "imported {} dialogues ({}), skipped {}",
            summary.dialogues,
            per_k.join(", "),
            summary.skipped.len()
        )
    });
    Ok(())
}

#[derive(Serialize)]
struct SplitSummary {
    train: usize,
    valid: usize,
    test: usize,
}

fn split(a: &SplitArgs, seed: u64, json: bool) -> Result<()> {
    let all = read_transcripts(&a.input)?;
    let s = split_dataset(&all, seed);
    for (name, part) in [("train", &s.train), ("valid", &s.valid), ("test", &s.test)] {
        write_file(&a.out.join(format!("{name}.jsonl")), &to_jsonl(part))?;
    }
    let summary = SplitSummary {
        train: s.train.len(),
        valid: s.valid.len(),
        test: s.test.len(),
    };
    report(json, &summary, || {
        format!(
            "train {}, valid {}, test {}",
            summary.train, summary.valid, summary.test
        )
    });
    Ok(())
}

fn vocab(a: &VocabArgs, json: bool) -> Result<()> {
    let train = read_transcripts(&a.input)?;
    let v = Vocabulary::from_counts(&token_counts(&train), a.min_count);
    write_file(&a.out, &serde_json::to_string_pretty(&v)?)?;
    report(
        json,
        &serde_json::json!({ "tokens": v.len(), "min_count": a.min_count }),
        || format!("{} tokens (min count {})", v.len(), a.min_count),
    );
    Ok(())
}

fn analyze(a: &AnalyzeArgs, json: bool) -> Result<()> {
    let transcripts = read_transcripts(&a.input)?;
    let dictionaries = match &a.dictionaries {
        Some(dir) => {
            NuanceDictionary::load_dir(dir).with_context(|| format!("loading {}", dir.display()))?
        }
        None => NuanceDictionary::shipped(),
    };
    let ranges = analysis::ranges_for(&transcripts);
    let r = analysis::analyze(&transcripts, &dictionaries, &ranges);
    write_file(&a.report, &serde_json::to_string_pretty(&r)?)?;
    if let Some(dir) = &a.plots {
        for (name, svg) in analysis::plots(&r, &ranges) {
            write_file(&dir.join(name), &svg)?;
        }
    }
    report(json, &r, || {
        let mut lines = Vec::new();
        let row = |label: String, g: &analysis::GroupStats| {
            format!(
                "{label}: {} dialogues, {:.2} tokens/utterance, {:.2} turns, success {:.3}, {} types, top-decile {:.3}",
                g.dialogues,
                g.avg_tokens_per_utterance,
                g.avg_turns_per_dialogue,
                g.success_rate,
                g.unique_tokens,
                g.top_decile_occupancy
            )
        };
        for (k, g) in &r.stats.by_shared {
            lines.push(row(format!("k={k}"), g));
        }
        lines.push(row("all".into(), &r.stats.overall));
        for (cat, rate) in &r.nuance.per_100_utterances {
            lines.push(format!("{cat}: {rate:.2} per 100 utterances"));
        }
        lines.push(format!(
            "selections {}: darker {:.3}, larger {:.3}",
            r.bias.selections, r.bias.darker_share, r.bias.larger_share
        ));
        lines.join("\n")
    });
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: u64, json: bool) -> Result<()> {
    let mut config = ModelConfig::new(a.variant, seed);
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { config.$f = v; })* };
    }
    set!(epochs, batch_size, hidden, dropout, lr, grad_clip, init_range);
    config.validate().map_err(anyhow::Error::msg)?;

    let train_t = read_transcripts(&a.data.join("train.jsonl"))?;
    let valid_t = read_transcripts(&a.data.join("valid.jsonl"))?;
    let vocab_path = a.data.join("vocab.json");
    let vocab: Vocabulary = if vocab_path.exists() {
        serde_json::from_str(&fs::read_to_string(&vocab_path)?)
            .with_context(|| format!("parsing {}", vocab_path.display()))?
    } else {
        build_vocab(&train_t)
    };
    // one attribute range for all splits so observations agree
    let mut all = train_t.clone();
    all.extend(valid_t.iter().cloned());
    let ranges = analysis::ranges_for(&all);
    let train_ex = make_examples_with(&train_t, &vocab, &ranges).examples;
    let valid_ex = make_examples_with(&valid_t, &vocab, &ranges).examples;
    tracing::info!(
        train = train_ex.len(),
        valid = valid_ex.len(),
        vocab = vocab.len(),
        "training {}",
        a.variant
    );
    let outcome = train(&train_ex, &valid_ex, vocab.len(), &config)?;
    for e in &outcome.log {
        tracing::info!(
            epoch = e.epoch,
            train_loss = e.train_loss,
            valid_loss = e.valid_loss,
            valid_accuracy = e.valid_accuracy
        );
    }
    let file = ModelFile::new(&config, &vocab, &outcome);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    file.save(&a.out)?;
    let best = outcome.log.iter().find(|e| e.epoch == outcome.best_epoch);
    report(
        json,
        &serde_json::json!({
            "variant": a.variant,
            "seed": seed,
            "best_epoch": outcome.best_epoch,
            "best_valid_loss": outcome.best_valid_loss,
            "best_valid_accuracy": best.map(|e| e.valid_accuracy),
        }),
        || {
            format!(
                "{} seed {seed}: best epoch {} valid loss {:.4} accuracy {:.4}",
                a.variant,
                outcome.best_epoch,
                outcome.best_valid_loss,
                best.map_or(f64::NAN, |e| e.valid_accuracy)
            )
        },
    );
    Ok(())
}

fn model_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x == "json" || x == "bin" || x == "model")
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn eval(a: &EvalArgs, seed: u64, json: bool) -> Result<()> {
    let paths = model_paths(&a.models)?;
    if paths.is_empty() {
        bail!("no model files in {}", a.models.display());
    }
    let files = paths
        .iter()
        .map(|p| ModelFile::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let vocab = &files[0].vocab;
    if let Some(i) = files.iter().position(|f| &f.vocab != vocab) {
        bail!(
            "{} uses a different vocabulary from {}",
            paths[i].display(),
            paths[0].display()
        );
    }
    let test_t = read_transcripts(&a.data.join("test.jsonl"))?;
    let ranges = analysis::ranges_for(&test_t);
    let full = make_examples_with(&test_t, vocab, &ranges).examples;
    ensure!(!full.is_empty(), "test split has no examples");
    let tests = make_test_variants(&full, seed);
    let models: Vec<_> = files.iter().map(ModelFile::trained).collect();
    let r = evaluate(&models, &tests);
    write_file(&a.report, &serde_json::to_string_pretty(&r)?)?;
    report(json, &r, || {
        let mut lines = vec![format!(
            "test examples: full {}, uncorrelated {}, success-only {}",
            r.full_size, r.uncorrelated_size, r.success_only_size
        )];
        for v in &r.variants {
            lines.push(format!(
                "{}: full {:.2} ± {:.2} over {} seeds; best seed {} uncorrelated {:.2} success-only {:.2}",
                v.variant,
                100.0 * v.full_mean,
                100.0 * v.full_std,
                v.seeds.len(),
                v.best_seed,
                100.0 * v.uncorrelated,
                100.0 * v.success_only
            ));
        }
        for t in &r.ttests {
            lines.push(format!("{} vs {}: p = {:.3e}", t.a, t.b, t.p_value));
        }
        lines.join("\n")
    });
    Ok(())
}

fn selfcheck(a: &SelfcheckArgs, seed: u64, json: bool) -> Result<()> {
    let results = vec![
        checks::worlds(a.worlds_per_k, seed),
        checks::engine(a.logs, seed),
        checks::transcripts(200, seed),
        checks::random_baseline(a.baseline_dialogues, seed),
        checks::gradients(seed),
    ];
    report(json, &results, || {
        results
            .iter()
            .map(|c| {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                format!("{tag} {} ({} ms): {}", c.name, c.elapsed_ms, c.detail)
            })
            .collect::<Vec<_>>()
            .join("\n")
    });
    let failed = results.iter().filter(|c| !c.passed).count();
    ensure!(failed == 0, "{failed} check(s) failed");
    Ok(())
}
