//! Writes a synthetic two-node deployment with a noise-spike trigger and
//! prints what the generator planted.
//!
//! cargo run --release --example generate_deployment -- [OUT_DIR]

use ambient_agitation::synth::{generate_to_dir, GeneratorConfig, TriggerKind, TriggerRule};

fn main() -> ambient_agitation::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-data/home".into());
    let cfg = GeneratorConfig {
        id: "home".into(),
        seed: 7,
        duration_days: 7.0,
        target_per_week: 14.0,
        rules: vec![TriggerRule::new(TriggerKind::NoiseSpike)],
        ..Default::default()
    };
    let (manifest, truth) = generate_to_dir(&cfg, &out)?;
    println!("manifest: {}", manifest.display());
    println!(
        "{} labels over {:.0} days ({:.1}/week, accepted {}..={})",
        truth.rate.labels, truth.rate.days, truth.rate.per_week, truth.rate.lower, truth.rate.upper
    );
    println!(
        "precursors without an episode: {}",
        truth.unfired_precursors
    );
    for r in truth.records.iter().take(5) {
        println!(
            "  label at {} on {} after {} starting {:?}",
            r.label_time, r.node_id, r.trigger, r.precursor_start
        );
    }
    Ok(())
}
