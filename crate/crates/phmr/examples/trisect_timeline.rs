//! Split one episode's timeline into past / present / future around the
//! span of the behavior being predicted. Items overlapping the present are
//! excluded from both sides — the model must never see the moment it is
//! asked about.

use phmr::corpus::{place, trisect, Placement, TimeSpan};
use phmr::syngen::{generate_corpus, AnswerRule, GeneratorConfig};
use phmr::Result;

fn main() -> Result<()> {
    let cfg = GeneratorConfig::new(5, 6, AnswerRule::PersonalityDependent, 11);
    let generated = generate_corpus(&cfg)?;
    let ep = &generated.episodes[0];
    let record = &generated.records[&ep.visual.key];

    println!(
        "episode {}: {:.1}s clip, present span [{:.1}, {:.1}]",
        ep.id, ep.duration, ep.present_span.start, ep.present_span.end
    );

    let parts = trisect(ep, &record.timestamps);
    println!("\npast dialogue:");
    for u in &parts.dialogue_past {
        println!("  [{:5.1}-{:5.1}] {}: {}", u.span.start, u.span.end, u.speaker, u.text);
    }
    println!("future dialogue:");
    for u in &parts.dialogue_future {
        println!("  [{:5.1}-{:5.1}] {}: {}", u.span.start, u.span.end, u.speaker, u.text);
    }
    println!(
        "behaviors: {} past, {} future",
        parts.behavior_past.len(),
        parts.behavior_future.len()
    );
    println!(
        "video frames: {:?} past, {:?} future (of {})",
        parts.video_past,
        parts.video_future,
        record.n_frames()
    );

    // the placement rule itself, on hand-picked spans
    let present = TimeSpan::new(10.0, 12.0)?;
    let cases = [
        (TimeSpan::new(3.0, 10.0)?, Placement::Past),     // touches the boundary
        (TimeSpan::new(12.0, 15.0)?, Placement::Future),  // starts as present ends
        (TimeSpan::new(9.0, 11.0)?, Placement::Excluded), // overlaps
        (TimeSpan::new(11.0, 11.5)?, Placement::Excluded),
    ];
    println!("\nplacement against present [10, 12]:");
    for (span, expected) in cases {
        let got = place(span, present);
        println!("  [{:4.1}, {:4.1}] -> {:?}", span.start, span.end, got);
        assert_eq!(got, expected);
    }

    // nothing assigned to a side may overlap the present span
    for u in parts.dialogue_past.iter().chain(&parts.dialogue_future) {
        assert!(u.span.end <= ep.present_span.start || u.span.start >= ep.present_span.end);
    }
    println!("\nno retained item overlaps the present span");
    Ok(())
}
