//! Sanity-check the answer-free baselines on a corpus whose gold option is
//! always the longest: picking the longest option must be perfect there,
//! picking the shortest must be near zero, and random guessing must sit at
//! chance. On a personality-dependent corpus all three collapse to chance.

use phmr::metrics::accuracy;
use phmr::syngen::{generate_corpus, AnswerRule, GeneratorConfig};
use phmr::train::{rule_baseline, BaselineKind};
use phmr::Result;

fn run(rule: AnswerRule, label: &str) -> Result<()> {
    let cfg = GeneratorConfig::new(1000, 8, rule, 23);
    let generated = generate_corpus(&cfg)?;
    let gold: Vec<usize> = generated.episodes.iter().map(|e| e.gold).collect();
    println!("{label}:");
    for kind in [BaselineKind::Longest, BaselineKind::Shortest, BaselineKind::Random] {
        let preds = rule_baseline(kind, &generated.episodes, 99);
        let acc = accuracy(&preds, &gold)?;
        println!("  {kind:?}: {:.3}", acc);
    }
    Ok(())
}

fn main() -> Result<()> {
    run(AnswerRule::LongestAlways, "gold is always the longest option")?;
    println!();
    run(
        AnswerRule::PersonalityDependent,
        "gold depends on the target's personality (no length cue)",
    )?;
    Ok(())
}
