//! Generate a small synthetic corpus, inspect one episode, verify the gold
//! traces against the stored answers, and round-trip everything through the
//! on-disk formats (JSONL episodes + binary visual sidecar + JSON traces).

use phmr::corpus::io::{read_corpus, read_sidecar, write_corpus, write_sidecar};
use phmr::corpus::corpus_statistics;
use phmr::syngen::{generate_corpus, AnswerRule, GeneratorConfig};
use phmr::Result;

fn main() -> Result<()> {
    let cfg = GeneratorConfig::new(200, 8, AnswerRule::PersonalityDependent, 7);
    let generated = generate_corpus(&cfg)?;

    let stats = corpus_statistics(&generated.episodes)?;
    println!("generated {} episodes", stats.n_episodes);
    println!("  avg clip length     {:.1}s", stats.avg_clip_seconds);
    println!("  avg utterances      {:.2}", stats.avg_utterances);
    println!("  avg behaviors       {:.2}", stats.avg_behaviors);
    println!("  avg personalities   {:.2}", stats.avg_related_personalities);
    println!("  avg option tokens   {:.2}", stats.avg_option_tokens);

    println!("\nlatent cast:");
    for (tag, t) in &generated.traces.cast {
        println!("  {tag}: {t}");
    }

    let ep = &generated.episodes[0];
    println!("\nepisode {} (target {}):", ep.id, ep.target_person);
    for u in &ep.utterances {
        println!("  [{:5.1}-{:5.1}] {}: {}", u.span.start, u.span.end, u.speaker, u.text);
    }
    println!("  present span [{:.1}, {:.1}]", ep.present_span.start, ep.present_span.end);
    for (i, o) in ep.options.iter().enumerate() {
        let mark = if i == ep.gold { '*' } else { ' ' };
        println!("  {mark} option {i}: {o}");
    }

    // the trace records which single word identifies the gold option
    let trace = &generated.traces.episodes[0];
    println!("  key word: {:?} (axis {:?})", trace.key_word, trace.question_axis);
    assert!(ep.options[ep.gold].contains(&trace.key_word));

    // every trace agrees with its episode's stored answer
    for (ep, tr) in generated.episodes.iter().zip(&generated.traces.episodes) {
        assert_eq!(ep.id, tr.episode_id);
        assert_eq!(ep.gold, tr.gold);
    }
    println!("\nall {} traces agree with the stored gold answers", generated.traces.episodes.len());

    // round-trip through the file formats
    let dir = std::env::temp_dir().join("phmr-example-corpus");
    std::fs::create_dir_all(&dir)?;
    let episodes_path = dir.join("episodes.jsonl");
    let sidecar_path = dir.join("visual.bin");
    write_corpus(&episodes_path, &generated.episodes)?;
    write_sidecar(&sidecar_path, &generated.records)?;
    let episodes = read_corpus(&episodes_path)?;
    let records = read_sidecar(&sidecar_path)?;
    assert_eq!(episodes, generated.episodes);
    assert_eq!(records, generated.records);
    println!("round-trip through {} ok", dir.display());
    Ok(())
}
