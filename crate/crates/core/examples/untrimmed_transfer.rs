//! Phase 2: transfer a trimmed-video stream to untrimmed videos.
//!
//! Trains a lower stream on trimmed clips, snapshots its classifier, then
//! trains upper streams on untrimmed clips (signal in a
//! quarter of the frames) with and without the transfer and attention
//! penalties, over several seeds.
//!
//! cargo run --release --example untrimmed_transfer -- [videos_per_class] [iterations] [seeds]

use mcsa::data::{generate_samples, SynthSpec};
use mcsa::trainer::{evaluate, train_lower, train_upper, TrainConfig};
use mcsa::{snapshot, StreamConfig};

fn main() -> mcsa::Result<()> {
    let mut args = std::env::args().skip(1);
    let per_class: usize = args
        .next()
        .map_or(50, |a| a.parse().expect("videos per class"));
    let iterations: usize = args.next().map_or(2000, |a| a.parse().expect("iterations"));
    let seeds: u64 = args.next().map_or(5, |a| a.parse().expect("seeds"));

    let trimmed = SynthSpec::default();
    let model_config = StreamConfig::new(trimmed.s, trimmed.t, trimmed.g, trimmed.classes);
    let lower_config = TrainConfig {
        learning_rate: 0.3,
        max_iterations: 3000,
        ..TrainConfig::default()
    };
    let (lower, lower_report) = train_lower(
        model_config,
        &generate_samples(&trimmed)?,
        &[],
        &lower_config,
    )?;
    println!(
        "lower stream: train accuracy {:.3}",
        lower_report.final_train_acc
    );
    let snap = snapshot(&lower);

    let untrimmed = |seed: u64, videos_per_class: usize, prefix: &str| {
        generate_samples(&SynthSpec {
            videos_per_class,
            signal_fraction: 0.25,
            trimmed: false,
            seed,
            prefix: prefix.into(),
            ..trimmed.clone()
        })
    };

    let (mut with_sum, mut without_sum) = (0.0, 0.0);
    for seed in 0..seeds {
        let train = untrimmed(100 + seed, per_class, "train_")?;
        let test = untrimmed(200 + seed, 40, "test_")?;
        let base = TrainConfig {
            learning_rate: 0.3,
            max_iterations: iterations,
            seed,
            ..TrainConfig::default()
        };
        let plain = TrainConfig {
            lambda_mmd: 0.0,
            lambda_reg: 0.0,
            ..base.clone()
        };
        let (upper, report) = train_upper(model_config, &train, &test, &snap, &base)?;
        let (baseline, _) = train_upper(model_config, &train, &test, &snap, &plain)?;
        let (a, b) = (evaluate(&upper, &test)?, evaluate(&baseline, &test)?);
        with_sum += a;
        without_sum += b;
        let signal = report
            .signal_attention
            .expect("untrimmed samples carry segments");
        println!(
            "seed {seed}: with transfer {a:.3}, without {b:.3}, signal attention {:.4} (uniform {:.4})",
            signal.spatial, signal.spatial_uniform
        );
    }
    let n = seeds as f64;
    println!(
        "mean held-out accuracy: with {:.3}, without {:.3}",
        with_sum / n,
        without_sum / n
    );
    Ok(())
}
