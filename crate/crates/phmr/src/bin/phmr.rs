//! Thin command-line front end. Every verb loads the same TOML config,
//! applies `--set` overrides, and calls into the library; outputs land
//! under `out_dir/<config hash>/`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use phmr::analysis::{frequency_pole_classifier, pole_percentages, word_frequency_report};
use phmr::config::{AppConfig, SplitKind};
use phmr::corpus::io::{read_corpus, read_sidecar, write_corpus, write_sidecar};
use phmr::corpus::{build_mpp_split, corpus_statistics, split_corpus, CorpusSplit};
use phmr::mbti::Axis;
use phmr::metrics;
use phmr::model::predictor::PredictorModel;
use phmr::syngen::generate_corpus;
use phmr::train::{
    ablation_suite, export_predicted_profiles, load_predicted_profiles, persist_predictor_run,
    persist_prm_run, predict_profiles, predict_profiles_aggregated, prepare, rule_baseline,
    save_predicted_profiles, stage_two, train_predictor, train_prm, BaselineKind, CorpusData,
    PersonalitySource, RunManifest,
};
use phmr::{Error, Result};

#[derive(Parser)]
#[command(
    name = "phmr",
    version,
    about = "Personality-aware multimodal reasoning toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; built-in defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config entry, e.g. --set train.epochs=5 (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (episodes, visual sidecar, gold traces)
    Gen(Common),
    /// Carve the corpus into train/validation/test id lists
    Split(Common),
    /// Train the reasoner with the configured personality source
    Train(Common),
    /// Report stored run metrics next to the rule baselines
    Eval(Common),
    /// Modality-by-personality ablation grid with paired significance
    Ablate(Common),
    /// Train the personality predictor and export predicted profiles
    PredictPersonality(Common),
    /// Two-stage pipeline: gold reasoner, predictor, retrain on predictions
    Stage2(Common),
    /// Corpus statistics, pole shares, and word-frequency reports
    Report(Common),
}

fn main() {
    let cli = Cli::parse();
    let (verb, common) = match &cli.command {
        Command::Gen(c) => ("gen", c),
        Command::Split(c) => ("split", c),
        Command::Train(c) => ("train", c),
        Command::Eval(c) => ("eval", c),
        Command::Ablate(c) => ("ablate", c),
        Command::PredictPersonality(c) => ("predict-personality", c),
        Command::Stage2(c) => ("stage2", c),
        Command::Report(c) => ("report", c),
    };
    if let Err(e) = run(verb, common) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(verb: &str, common: &Common) -> Result<()> {
    let mut cfg = match &common.config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    cfg.apply_overrides(&common.set)?;
    let run_dir = cfg.run_dir()?;
    std::fs::create_dir_all(&run_dir)?;
    // keep the resolved config next to everything it produced
    std::fs::write(run_dir.join("config.toml"), cfg.to_toml()?)?;
    println!("run directory: {}", run_dir.display());

    match verb {
        "gen" => gen(&cfg),
        "split" => split(&cfg),
        "train" => train(&cfg),
        "eval" => eval(&cfg),
        "ablate" => ablate(&cfg),
        "predict-personality" => predict_personality(&cfg),
        "stage2" => stage2(&cfg),
        "report" => report(&cfg),
        _ => unreachable!("clap only admits known verbs"),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn gen(cfg: &AppConfig) -> Result<()> {
    let generated = generate_corpus(&cfg.generator)?;
    let episodes_path = cfg.resolve(&cfg.corpus.episodes)?;
    let sidecar_path = cfg.resolve(&cfg.corpus.sidecar)?;
    let traces_path = cfg.resolve(&cfg.corpus.traces)?;
    ensure_parent(&episodes_path)?;
    ensure_parent(&sidecar_path)?;
    ensure_parent(&traces_path)?;
    write_corpus(&episodes_path, &generated.episodes)?;
    write_sidecar(&sidecar_path, &generated.records)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&traces_path)?),
        &generated.traces,
    )?;
    let stats = corpus_statistics(&generated.episodes)?;
    println!(
        "wrote {} episodes to {}",
        stats.n_episodes,
        episodes_path.display()
    );
    println!(
        "  avg utterances {:.2}, behaviors {:.2}, clip seconds {:.1}",
        stats.avg_utterances, stats.avg_behaviors, stats.avg_clip_seconds
    );
    println!("  visual sidecar: {}", sidecar_path.display());
    println!("  gold traces:    {}", traces_path.display());
    Ok(())
}

fn load_split(cfg: &AppConfig) -> Result<CorpusSplit> {
    let path = cfg.resolve(&cfg.corpus.split)?;
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Config(format!(
            "cannot read split {} (run `phmr split` first): {e}",
            path.display()
        ))
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn load_corpus(cfg: &AppConfig) -> Result<CorpusData> {
    let episodes = read_corpus(&cfg.resolve(&cfg.corpus.episodes)?)?;
    let sidecar_path = cfg.resolve(&cfg.corpus.sidecar)?;
    let records = if sidecar_path.exists() {
        read_sidecar(&sidecar_path)?
    } else {
        Default::default()
    };
    Ok(CorpusData::new(episodes, records))
}

fn split(cfg: &AppConfig) -> Result<()> {
    let episodes = read_corpus(&cfg.resolve(&cfg.corpus.episodes)?)?;
    let section = &cfg.split;
    let split = match section.kind {
        SplitKind::Random => {
            let [a, b, c] = section.ratio;
            split_corpus(&episodes, (a, b, c), section.seed)?
        }
        SplitKind::HeldOutTest => {
            let ids_path = section.held_out_ids.as_ref().ok_or_else(|| {
                Error::Config("split.kind=held_out_test needs split.held_out_ids".into())
            })?;
            let text = std::fs::read_to_string(cfg.resolve(ids_path)?)?;
            let ids: BTreeSet<String> = serde_json::from_str(&text)?;
            build_mpp_split(&episodes, &ids, section.seed)?
        }
    };
    let path = cfg.resolve(&cfg.corpus.split)?;
    ensure_parent(&path)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(&path)?),
        &split,
    )?;
    println!(
        "split {} / {} / {} written to {}",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        path.display()
    );
    Ok(())
}

fn train(cfg: &AppConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let split = load_split(cfg)?;
    let profiles = match cfg.train.personality_source {
        PersonalitySource::Predicted => {
            let path = cfg.resolve(&cfg.predictor.profiles)?;
            Some(load_predicted_profiles(&path)?)
        }
        _ => None,
    };
    let mut trained = train_prm(
        &corpus,
        &split,
        &cfg.model,
        &cfg.encoder,
        &cfg.train,
        profiles.as_ref(),
    )?;
    let data = prepare(&corpus, &split, &cfg.encoder, None, cfg.train.vocab_size)?;
    let dir = persist_prm_run(&cfg.run_dir()?.join("reasoner"), &mut trained, &data)?;
    println!("reasoner run saved to {}", dir.display());
    print_manifest(&trained.manifest);
    Ok(())
}

fn fmt_metrics(s: &phmr::metrics::MetricSet) -> String {
    let mut parts = Vec::new();
    if let Some(v) = s.accuracy {
        parts.push(format!("accuracy {v:.4}"));
    }
    if let Some(v) = s.hamming_loss {
        parts.push(format!("hamming {v:.4}"));
    }
    if let Some(v) = s.ranking_loss {
        parts.push(format!("ranking {v:.4}"));
    }
    if let Some(v) = s.average_precision {
        parts.push(format!("AP {v:.4}"));
    }
    parts.join(", ")
}

fn print_manifest(m: &RunManifest) {
    println!(
        "  {} on {} train / {} val / {} test ({} parameters)",
        m.model_kind, m.n_train, m.n_validation, m.n_test, m.n_parameters
    );
    for o in &m.per_seed {
        match o {
            phmr::train::SeedOutcome::Completed {
                seed,
                best_epoch,
                epochs_run,
                test,
                ..
            } => println!(
                "  seed {seed}: best epoch {best_epoch}/{epochs_run}, test {}",
                fmt_metrics(test)
            ),
            phmr::train::SeedOutcome::Diverged { seed, epoch } => {
                println!("  seed {seed}: diverged at epoch {epoch}")
            }
        }
    }
    println!("  mean test: {}", fmt_metrics(&m.mean_test));
    println!("  wall: {:.1}s", m.wall_seconds);
}

fn eval(cfg: &AppConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let split = load_split(cfg)?;
    let by_id: std::collections::BTreeMap<&str, &phmr::corpus::ClipEpisode> =
        corpus.episodes.iter().map(|e| (e.id.as_str(), e)).collect();
    let test: Vec<&phmr::corpus::ClipEpisode> = split
        .test
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Corpus(format!("split id {id} not in corpus")))
        })
        .collect::<Result<_>>()?;
    let gold: Vec<usize> = test.iter().map(|e| e.gold).collect();
    let owned: Vec<phmr::corpus::ClipEpisode> = test.iter().map(|e| (*e).clone()).collect();
    println!("rule baselines on {} test episodes:", owned.len());
    for kind in [
        BaselineKind::Longest,
        BaselineKind::Shortest,
        BaselineKind::Random,
    ] {
        let preds = rule_baseline(kind, &owned, cfg.split.seed);
        let acc = metrics::accuracy(&preds, &gold)?;
        println!("  {kind:?}: accuracy {acc:.4}");
    }

    let base = cfg.run_dir()?.join("reasoner");
    let mut found = false;
    if base.is_dir() {
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&base)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let manifest = RunManifest::load(&dir.join("manifest.json"))?;
            println!("stored run {}:", dir.display());
            print_manifest(&manifest);
            let completed: Vec<(u64, phmr::metrics::MetricSet)> = manifest
                .per_seed
                .iter()
                .filter_map(|o| match o {
                    phmr::train::SeedOutcome::Completed { seed, test, .. } => {
                        Some((*seed, test.clone()))
                    }
                    phmr::train::SeedOutcome::Diverged { .. } => None,
                })
                .collect();
            if !completed.is_empty() {
                let (seeds, sets): (Vec<u64>, Vec<phmr::metrics::MetricSet>) =
                    completed.into_iter().unzip();
                let report = phmr::metrics::EvalReport::from_per_seed(manifest.n_test, seeds, sets)?;
                let (header, row) = report.to_csv();
                std::fs::write(dir.join("eval.csv"), format!("{header}\n{row}\n"))?;
            }
            found = true;
        }
    }
    if !found {
        println!("no stored reasoner runs under {}", base.display());
    }
    Ok(())
}

fn ablate(cfg: &AppConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let split = load_split(cfg)?;
    let report = ablation_suite(&corpus, &split, &cfg.model, &cfg.encoder, &cfg.train)?;
    let dir = cfg.run_dir()?.join("ablation");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("ablation.csv"), report.to_csv())?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(dir.join("ablation.json"))?),
        &report,
    )?;
    print!("{}", report.to_csv());
    println!("ablation grid written to {}", dir.display());
    Ok(())
}

fn predict_personality(cfg: &AppConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let split = load_split(cfg)?;
    let mut trained = train_predictor(
        &corpus,
        &split,
        &cfg.model,
        &cfg.encoder,
        &cfg.predictor_train,
        &cfg.predictor.inputs,
    )?;
    let data = prepare(
        &corpus,
        &split,
        &cfg.encoder,
        None,
        cfg.predictor_train.vocab_size,
    )?;
    let run_dir = cfg.run_dir()?;
    let dir = persist_predictor_run(&run_dir.join("predictor"), &mut trained, &data.vocab)?;
    println!("predictor run saved to {}", dir.display());
    print_manifest(&trained.manifest);

    let best = trained
        .best_seed()
        .ok_or_else(|| Error::Config("every predictor seed diverged".into()))?;
    let store = trained.seeds[best].store.as_ref().expect("best seed store");
    let model = PredictorModel::bind(store, &trained.resolved_model)?;
    let profiles = if cfg.predictor.aggregate {
        let pool: Vec<usize> = data
            .train_idx
            .iter()
            .chain(&data.val_idx)
            .copied()
            .collect();
        predict_profiles_aggregated(
            &model,
            store,
            &corpus,
            &data,
            &pool,
            &cfg.predictor.inputs,
            cfg.predictor.threshold,
        )?
    } else {
        let all: Vec<usize> = (0..corpus.episodes.len()).collect();
        predict_profiles(
            &model,
            store,
            &corpus,
            &data,
            &all,
            &cfg.predictor.inputs,
            cfg.predictor.threshold,
        )?
    };
    let bundle = cfg.resolve(&cfg.predictor.profiles)?;
    ensure_parent(&bundle)?;
    let out = bundle.parent().expect("bundle path has a parent");
    let (types_path, scores_path) = export_predicted_profiles(out, &profiles)?;
    save_predicted_profiles(&bundle, &profiles)?;
    println!("predicted profiles: {}", types_path.display());
    println!("predicted scores:   {}", scores_path.display());
    println!("profile bundle:     {}", bundle.display());
    Ok(())
}

fn stage2(cfg: &AppConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let split = load_split(cfg)?;
    let mut prm_cfg = cfg.train.clone();
    prm_cfg.personality_source = PersonalitySource::Gold;
    let outcome = stage_two(
        &corpus,
        &split,
        &cfg.model,
        &cfg.encoder,
        &prm_cfg,
        &cfg.predictor_train,
        &cfg.predictor.inputs,
        None,
    )?;
    let run_dir = cfg.run_dir()?;
    let dir = run_dir.join("stage2");
    std::fs::create_dir_all(&dir)?;
    outcome.gold.manifest.save(&dir.join("gold_manifest.json"))?;
    outcome
        .predicted
        .manifest
        .save(&dir.join("predicted_manifest.json"))?;
    outcome
        .predictor
        .manifest
        .save(&dir.join("predictor_manifest.json"))?;
    export_predicted_profiles(&dir, &outcome.profiles)?;
    save_predicted_profiles(&dir.join("profiles.json"), &outcome.profiles)?;
    println!("gold reasoner:");
    print_manifest(&outcome.gold.manifest);
    println!("reasoner retrained on predicted profiles:");
    print_manifest(&outcome.predicted.manifest);
    println!(
        "accuracy gap (gold minus predicted): {:.4}",
        outcome.accuracy_gap
    );
    println!("stage-2 artifacts in {}", dir.display());
    Ok(())
}

fn report(cfg: &AppConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    let split_path = cfg.resolve(&cfg.corpus.split)?;
    let dir = cfg.run_dir()?.join("report");
    std::fs::create_dir_all(&dir)?;

    let stats = corpus_statistics(&corpus.episodes)?;
    let shares = pole_percentages(&corpus.episodes)?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(dir.join("stats.json"))?),
        &serde_json::json!({ "statistics": stats, "pole_percentages": shares }),
    )?;
    println!(
        "{} episodes, {:.1}s clips, {:.2} utterances and {:.2} behaviors each",
        stats.n_episodes, stats.avg_clip_seconds, stats.avg_utterances, stats.avg_behaviors
    );
    for (k, axis) in Axis::ALL.iter().enumerate() {
        let [a, b] = axis.letters();
        println!(
            "  {a}/{b}: {:.1}% / {:.1}%",
            shares.shares[k][0] * 100.0,
            shares.shares[k][1] * 100.0
        );
    }
    if let Ok(report) = frequency_pole_classifier(&corpus.episodes, Axis::EI) {
        println!(
            "  frequency classifier recovers E/I for {}/{} characters",
            report.n_correct, report.n_characters
        );
    }

    let freq = word_frequency_report(&corpus.episodes, cfg.report.top_k);
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(dir.join("word_frequencies.json"))?),
        &freq,
    )?;
    serde_json::to_writer_pretty(
        std::io::BufWriter::new(std::fs::File::create(dir.join("word_cloud.json"))?),
        &freq.word_cloud(),
    )?;
    // per-split statistics when a split exists
    if split_path.is_file() {
        let split: CorpusSplit = serde_json::from_str(&std::fs::read_to_string(&split_path)?)?;
        let sections = [
            ("train", &split.train),
            ("validation", &split.validation),
            ("test", &split.test),
        ];
        let by_id: std::collections::BTreeMap<&str, &phmr::corpus::ClipEpisode> =
            corpus.episodes.iter().map(|e| (e.id.as_str(), e)).collect();
        let mut per_split = serde_json::Map::new();
        for (name, ids) in sections {
            let eps: Vec<phmr::corpus::ClipEpisode> = ids
                .iter()
                .filter_map(|id| by_id.get(id.as_str()).map(|e| (*e).clone()))
                .collect();
            if !eps.is_empty() {
                per_split.insert(
                    name.to_string(),
                    serde_json::to_value(corpus_statistics(&eps)?)?,
                );
            }
        }
        serde_json::to_writer_pretty(
            std::io::BufWriter::new(std::fs::File::create(dir.join("split_stats.json"))?),
            &per_split,
        )?;
    }
    println!("reports written to {}", dir.display());
    Ok(())
}
