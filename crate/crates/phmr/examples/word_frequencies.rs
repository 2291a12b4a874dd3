//! Corpus-level lexical analysis: which words mark each personality pole,
//! how balanced the poles are, whether raw frequencies alone recover a
//! character's pole, and how much mutual information the marker words carry.

use phmr::analysis::{
    frequency_pole_classifier, pole_percentages, pole_word_mutual_information,
    word_frequency_report,
};
use phmr::mbti::{Axis, Pole};
use phmr::syngen::{generate_corpus, AnswerRule, GeneratorConfig};
use phmr::Result;

fn main() -> Result<()> {
    let mut cfg = GeneratorConfig::new(600, 8, AnswerRule::PersonalityDependent, 3);
    cfg.personality_signal_strength = 0.9;
    let generated = generate_corpus(&cfg)?;

    let shares = pole_percentages(&generated.episodes)?;
    println!("pole shares over {} characters:", shares.n_persons);
    for (k, axis) in Axis::ALL.iter().enumerate() {
        let [a, b] = axis.letters();
        println!(
            "  {a}/{b}: {:.1}% / {:.1}%",
            shares.shares[k][0] * 100.0,
            shares.shares[k][1] * 100.0
        );
    }

    let report = word_frequency_report(&generated.episodes, 5);
    println!("\ntop dialogue words per pole:");
    for axis in Axis::ALL {
        for pole in [Pole::First, Pole::Second] {
            let letter = axis.letters()[if pole == Pole::First { 0 } else { 1 }];
            let words: Vec<String> = report
                .list(axis, pole)
                .iter()
                .map(|w| format!("{}x{}", w.token, w.count))
                .collect();
            println!("  {letter}: {}", words.join(", "));
        }
    }

    // a word-cloud style flat list, heaviest first
    let cloud = report.word_cloud();
    println!("\nword cloud head: {:?}", &cloud[..4.min(cloud.len())]);

    println!("\ncan dialogue frequencies alone recover each character's pole?");
    for axis in Axis::ALL {
        let r = frequency_pole_classifier(&generated.episodes, axis)?;
        let mi = pole_word_mutual_information(&generated.episodes, axis)?;
        println!(
            "  {}: {}/{} characters correct ({:.0}%), marker-word MI {:.4} nats",
            axis.name(),
            r.n_correct,
            r.n_characters,
            r.accuracy * 100.0,
            mi
        );
    }
    Ok(())
}
