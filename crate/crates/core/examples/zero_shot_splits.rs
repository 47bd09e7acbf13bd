//! TD, G and TD+G splits: bucket counts for the 30/20/51 class layout, then
//! a materialized split of a small synthetic manifest.
//!
//! cargo run --example zero_shot_splits -- [per_class] [seed]

use mcsa::data::manifest::{DatasetManifest, Dims, SampleRecord};
use mcsa::data::split::{materialize_split, plan_split, SplitMode, SplitPlan};

fn main() -> mcsa::Result<()> {
    let mut args = std::env::args().skip(1);
    let per_class: usize = args
        .next()
        .map_or(10, |a| a.parse().expect("samples per class"));
    let seed: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));

    for mode in [
        SplitMode::Transductive,
        SplitMode::Generalized,
        SplitMode::Combined,
    ] {
        let counts = SplitPlan::reference(mode, seed).counts(per_class);
        println!(
            "{mode}: train {} / test {}",
            counts.train_total, counts.test_total
        );
        for (bucket, c) in &counts.buckets {
            println!(
                "  {bucket:<24} {:>3} classes x {:>3} = {:>4}",
                c.classes, c.per_class, c.total
            );
        }
    }

    // one trimmed class, two seen and two unseen untrimmed classes
    let classes: Vec<String> = ["walk", "run", "jump", "swim", "climb"]
        .map(String::from)
        .to_vec();
    let samples = classes
        .iter()
        .enumerate()
        .flat_map(|(label, name)| {
            (0..per_class).map(move |i| SampleRecord {
                path: format!("features/{name}_{i}.mcsf"),
                label,
                trimmed: label == 0,
                video_id: format!("{name}_{i}"),
                signal_segment: None,
            })
        })
        .collect();
    let manifest = DatasetManifest {
        classes: classes.clone(),
        dims: Dims { s: 4, t: 4, g: 8 },
        samples,
    };
    let plan = plan_split(
        &classes[..1],
        &classes[1..3],
        &classes[3..],
        SplitMode::Combined,
        seed,
    )?;
    let (train, test) = materialize_split(&plan, &manifest)?;
    println!(
        "\ntd+g on {} videos: {} train, {} test",
        manifest.samples.len(),
        train.len(),
        test.len()
    );
    for a in test.iter().take(6) {
        println!("  test {:<12} {}", a.record.video_id, a.bucket.name());
    }
    Ok(())
}
