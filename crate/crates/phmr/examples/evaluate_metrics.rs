//! The evaluation toolbox on hand-made values: multi-label losses over the
//! 8-label pole representation, set agreement, the paired bootstrap test,
//! and the per-seed report with its CSV rendering.

use std::collections::BTreeSet;

use phmr::mbti::MbtiType;
use phmr::metrics::{
    accuracy, average_precision, hamming_loss, masi, paired_bootstrap, ranking_loss, EvalReport,
    MetricSet,
};
use phmr::Result;

fn main() -> Result<()> {
    // Each type expands to 8 binary labels: (E, I, S, N, T, F, J, P) with
    // exactly one of each opposing pair set.
    let estj = MbtiType::parse("ESTJ")?;
    let estp = MbtiType::parse("ESTP")?;
    println!("ESTJ as labels: {:?}", estj.to_eight_labels());

    // hamming loss counts wrong label slots; one wrong axis flips two slots
    let hl = hamming_loss(&[estj, estp], &[estj, estj])?;
    println!("hamming ESTJ/ESTP vs gold ESTJ/ESTJ: {hl:.4}");
    assert!((hl - 0.125).abs() < 1e-12); // 2 of 16 slots

    // score-based losses take one score per label
    let scores = [[0.9, 0.1, 0.8, 0.2, 0.7, 0.3, 0.6, 0.4]];
    let gold = [estj.to_eight_labels()];
    println!("ranking loss (perfect ordering): {:.4}", ranking_loss(&scores, &gold)?);
    println!("average precision (perfect ordering): {:.4}", average_precision(&scores, &gold)?);

    let flipped = [[0.1, 0.9, 0.2, 0.8, 0.3, 0.7, 0.4, 0.6]];
    println!("ranking loss (inverted ordering): {:.4}", ranking_loss(&flipped, &gold)?);

    // MASI: Jaccard damped by how far the sets are from nesting
    let a: BTreeSet<&str> = ["reads", "plans"].into();
    let b: BTreeSet<&str> = ["reads", "plans", "lists"].into();
    let c: BTreeSet<&str> = ["sings"].into();
    println!("\nmasi(a, a) = {:.4}", masi(&a, &a));
    println!("masi(a, a+1 extra) = {:.4}", masi(&a, &b));
    println!("masi(a, disjoint) = {:.4}", masi(&a, &c));

    // paired bootstrap: does system A beat system B on the same items?
    let gold_idx: Vec<usize> = (0..200).map(|i| i % 4).collect();
    let sys_a: Vec<usize> = gold_idx
        .iter()
        .enumerate()
        .map(|(i, &g)| if i % 10 == 0 { (g + 1) % 4 } else { g }) // 90% right
        .collect();
    let sys_b: Vec<usize> = gold_idx
        .iter()
        .enumerate()
        .map(|(i, &g)| if i % 2 == 0 { (g + 1) % 4 } else { g }) // 50% right
        .collect();
    println!(
        "\nsystem A accuracy {:.2}, system B accuracy {:.2}",
        accuracy(&sys_a, &gold_idx)?,
        accuracy(&sys_b, &gold_idx)?
    );
    let p = paired_bootstrap(&sys_a, &sys_b, &gold_idx, 2000, 13)?;
    println!("paired bootstrap p(A beats B is luck) = {p:.4}");
    let p_self = paired_bootstrap(&sys_a, &sys_a, &gold_idx, 2000, 13)?;
    println!("paired bootstrap vs itself = {p_self:.4}");

    // multi-seed report + CSV
    let per_seed = vec![
        MetricSet { accuracy: Some(0.61), ..Default::default() },
        MetricSet { accuracy: Some(0.64), ..Default::default() },
        MetricSet { accuracy: Some(0.58), ..Default::default() },
    ];
    let report = EvalReport::from_per_seed(500, vec![1, 2, 3], per_seed)?;
    println!("\nmean accuracy over seeds: {:.4}", report.mean.accuracy.unwrap());
    let (header, row) = report.to_csv();
    println!("{header}");
    println!("{row}");
    Ok(())
}
