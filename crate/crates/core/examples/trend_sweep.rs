//! Runs the strategy comparison over many generator seeds and reports how
//! often the expected ordering holds.
//!
//! cargo run --release -p yesno-core --example trend_sweep -- 100

use yesno_core::synth::{generate, run_trend, SynthConfig, TrendConfig};

fn main() -> yesno_core::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let trend = TrendConfig::default();
    let mut ok = 0;
    for seed in 0..seeds {
        let suite = generate(&SynthConfig { seed, ..SynthConfig::default() });
        let r = run_trend(&suite, &trend, seed)?;
        let (g, m, c, b) = (
            r.gold_only.macro_f1,
            r.merged.macro_f1,
            r.merged_capped.macro_f1,
            r.blended.macro_f1,
        );
        let pass = b >= m && m >= g && (m - c).abs() <= 0.05;
        ok += pass as u64;
        println!(
            "seed {seed:3}  gold {g:.4}  merged {m:.4}  capped {c:.4}  blended {b:.4}  {}",
            if pass { "ok" } else { "FAIL" }
        );
    }
    println!("{ok}/{seeds} seeds satisfy the ordering");
    Ok(())
}
