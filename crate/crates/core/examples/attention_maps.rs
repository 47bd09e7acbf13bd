//! Train an upper stream on untrimmed videos and print its six frame-attention
//! vectors for one clip next to the annotated action segment.
//!
//! cargo run --release --example attention_maps -- [lambda_reg] [iterations]

use mcsa::data::{generate_samples, SynthSpec};
use mcsa::trainer::{attention_stats, train_lower, train_upper, TrainConfig};
use mcsa::{forward, snapshot, StreamConfig};

fn main() -> mcsa::Result<()> {
    let mut args = std::env::args().skip(1);
    let lambda_reg: f64 = args.next().map_or(0.1, |a| a.parse().expect("lambda_reg"));
    let iterations: usize = args.next().map_or(2000, |a| a.parse().expect("iterations"));

    let trimmed = SynthSpec::default();
    let model_config = StreamConfig::new(trimmed.s, trimmed.t, trimmed.g, trimmed.classes);
    let fast = TrainConfig {
        learning_rate: 0.3,
        max_iterations: iterations,
        lambda_reg,
        ..TrainConfig::default()
    };
    let (lower, _) = train_lower(model_config, &generate_samples(&trimmed)?, &[], &fast)?;
    let untrimmed = SynthSpec {
        trimmed: false,
        signal_fraction: 0.25,
        seed: 100,
        ..trimmed.clone()
    };
    let data = generate_samples(&untrimmed)?;
    let (upper, report) = train_upper(model_config, &data, &[], &snapshot(&lower), &fast)?;

    let clip = &data[0];
    let segment = clip.signal_segment.expect("untrimmed clips are annotated");
    let out = forward(&upper, clip)?;
    println!(
        "{} (class {}), action in frames {}..{}",
        clip.video_id,
        clip.label,
        segment.offset,
        segment.offset + segment.length
    );
    let names = [
        "spatial sigmoid",
        "spatial tanh",
        "spatial leaky",
        "temporal sigmoid",
        "temporal tanh",
        "temporal leaky",
    ];
    let marks: String = (0..clip.frames())
        .map(|j| if segment.contains(j) { '^' } else { ' ' })
        .collect();
    for (name, v) in names.iter().zip(out.attention()) {
        let bars: String = v
            .weights()
            .iter()
            .map(|w| {
                [' ', '.', ':', '-', '=', '+', '*', '#']
                    [((w * v.len() as f64 * 2.0) as usize).min(7)]
            })
            .collect();
        println!("{name:<17} |{bars}| entropy {:.3}", v.entropy());
    }
    println!("{:<17} |{marks}|", "action");
    let stats = attention_stats(&upper, &data)?;
    let signal = report.signal_attention.expect("annotated");
    println!(
        "mean entropy {:.3}, quartic variation {:.4}, signal-frame attention {:.4} vs uniform {:.4}",
        stats.mean_entropy, stats.mean_variation, signal.spatial, signal.spatial_uniform
    );
    Ok(())
}
