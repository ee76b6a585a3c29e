//! Loads a deployment manifest, resamples every channel to 1 Hz and prints
//! the quality summary. Without an argument a small synthetic deployment is
//! generated first.
//!
//! cargo run --release --example ingest_quality -- [MANIFEST]

use ambient_agitation::data_model::{AcousticReduction, Deployment};
use ambient_agitation::synth::{generate_to_dir, GeneratorConfig, TriggerKind, TriggerRule};

fn main() -> ambient_agitation::Result<()> {
    let manifest = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let cfg = GeneratorConfig {
                id: "ingest-demo".into(),
                duration_days: 2.0,
                rules: vec![TriggerRule::new(TriggerKind::LightRamp)],
                ..Default::default()
            };
            generate_to_dir(&cfg, "target/example-data/ingest-demo")?.0
        }
    };
    let (deployment, quality) = Deployment::load(&manifest, AcousticReduction::Max)?;
    println!(
        "{}: {} s span, {} nodes, {} labels",
        deployment.id,
        quality.span_seconds,
        deployment.nodes.len(),
        quality.labels
    );
    for (node, channels) in &quality.channels {
        for (channel, q) in channels {
            println!(
                "  {node:>8} {:<12} rows {:>8}  missing {:.4}",
                channel.name(),
                q.rows,
                q.missing_fraction
            );
        }
    }
    for w in &quality.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
