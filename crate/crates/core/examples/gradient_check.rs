//! Finite-difference audit of every objective on a tiny random model.
//!
//! cargo run --release --example gradient_check -- [first_seed] [seeds]

use mcsa::gradcheck::{gradient_check, STEP, TOLERANCE};

fn main() -> mcsa::Result<()> {
    let mut args = std::env::args().skip(1);
    let first: u64 = args.next().map_or(0, |a| a.parse().expect("seed"));
    let count: u64 = args.next().map_or(5, |a| a.parse().expect("seed count"));

    println!("central differences, h = {STEP:e}·(1+|θ|), tolerance {TOLERANCE:e}");
    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "seed", "loss1", "loss2", "loss3", "loss4", "combined"
    );
    for seed in first..first + count {
        let r = gradient_check(seed)?;
        println!(
            "{seed:>5} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e} {:>10.2e} {}",
            r.loss1,
            r.loss2,
            r.loss3,
            r.loss4,
            r.combined,
            if r.combined <= TOLERANCE {
                "ok"
            } else {
                "FAIL"
            }
        );
    }
    Ok(())
}
