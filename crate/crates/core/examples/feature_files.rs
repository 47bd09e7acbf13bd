//! Write a synthetic dataset to disk as MCSF files plus a manifest, read it
//! back and show what a corrupted file reports.
//!
//! cargo run --example feature_files -- [out_dir]

use mcsa::data::feature_io::{decode_feature, encode_feature, HEADER_LEN};
use mcsa::data::{generate_synthetic, load_dataset, SynthSpec};

fn main() -> mcsa::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| {
        std::env::temp_dir()
            .join("mcsa_features")
            .display()
            .to_string()
    });
    let spec = SynthSpec {
        classes: 3,
        videos_per_class: 4,
        trimmed: false,
        signal_fraction: 0.25,
        ..SynthSpec::default()
    };
    let manifest = generate_synthetic(&spec, &dir)?;
    println!(
        "wrote {} videos of {} classes to {dir}",
        manifest.samples.len(),
        manifest.classes.len()
    );

    let (manifest, samples) = load_dataset(format!("{dir}/manifest.json"))?;
    let first = &samples[0];
    println!(
        "{}: label {} ({}), spatial {}x{}, temporal {}x{}, signal segment {:?}",
        first.video_id,
        first.label,
        manifest.classes[first.label],
        first.spatial.rows(),
        first.spatial.cols(),
        first.temporal.rows(),
        first.temporal.cols(),
        first.signal_segment
    );

    let bytes = encode_feature(first)?;
    println!(
        "{} bytes: {HEADER_LEN}-byte header + {} f32 values",
        bytes.len(),
        (bytes.len() - HEADER_LEN) / 4
    );
    for (what, broken) in [
        ("bad magic", [b"MCSX".as_slice(), &bytes[4..]].concat()),
        ("truncated", bytes[..bytes.len() - 3].to_vec()),
    ] {
        match decode_feature(&broken, "broken") {
            Ok(_) => println!("{what}: unexpectedly decoded"),
            Err(e) => println!("{what}: {e} (exit code {})", e.exit_code()),
        }
    }
    Ok(())
}
