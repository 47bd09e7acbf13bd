//! Phase 1: fit the lower stream on synthetic trimmed videos.
//!
//! cargo run --release --example trimmed_training -- [learning_rate] [iterations]

use mcsa::data::{generate_samples, SynthSpec};
use mcsa::trainer::{evaluate, train_lower, TrainConfig};
use mcsa::StreamConfig;

fn main() -> mcsa::Result<()> {
    let mut args = std::env::args().skip(1);
    let learning_rate: f64 = args
        .next()
        .map_or(1e-4, |a| a.parse().expect("learning rate"));
    let max_iterations: usize = args.next().map_or(5000, |a| a.parse().expect("iterations"));

    let spec = SynthSpec::default();
    let train = generate_samples(&spec)?;
    let held_out = generate_samples(&SynthSpec {
        videos_per_class: 20,
        seed: 1_000,
        prefix: "heldout_".into(),
        ..spec.clone()
    })?;

    let model_config = StreamConfig::new(spec.s, spec.t, spec.g, spec.classes);
    let config = TrainConfig {
        learning_rate,
        max_iterations,
        ..TrainConfig::default()
    };
    let (model, report) = train_lower(model_config, &train, &held_out, &config)?;

    let window = 100.min(report.iterations().max(1));
    let smoothed = report.smoothed_total(window);
    println!(
        "lr {learning_rate}, {max_iterations} iterations, {:.1}s",
        report.wall_seconds
    );
    if let (Some(first), Some(last)) = (smoothed.first(), smoothed.last()) {
        println!("loss (window {window}): {first:.4} -> {last:.4}");
    }
    println!("train accuracy    {:.3}", report.final_train_acc);
    println!("held-out accuracy {:.3}", evaluate(&model, &held_out)?);
    Ok(())
}
