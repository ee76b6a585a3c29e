//! Three homes with different triggers, each model evaluated per home and
//! on the pooled data, printed as a comparison grid.
//!
//! cargo run --release --example compare_deployments

use ambient_agitation::evaluation::{
    collect_observations, run_protocol, ComparisonGrid, ModelKind, ObservationPool, ProtocolConfig,
    COMBINED,
};
use ambient_agitation::synth::{generate, GeneratorConfig, TriggerKind, TriggerRule};

fn main() -> ambient_agitation::Result<()> {
    let mut cfg = ProtocolConfig {
        seed: 42,
        ..Default::default()
    };
    cfg.lstm.hidden = 64;
    let triggers = [
        TriggerKind::NoiseSpike,
        TriggerKind::LightRamp,
        TriggerKind::Sundowning,
    ];
    let pools = triggers
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let synthetic = generate(&GeneratorConfig {
                id: format!("home{}", i + 1),
                seed: 40 + i as u64,
                duration_days: 14.0,
                target_per_week: 14.0,
                rules: vec![TriggerRule::new(kind)],
                ..Default::default()
            })?;
            collect_observations(synthetic.deployment, &cfg)
        })
        .collect::<ambient_agitation::Result<Vec<ObservationPool>>>()?;

    let mut reports = Vec::new();
    for kind in ModelKind::ALL {
        for p in &pools {
            reports.push(run_protocol(&p.deployment_id, &[p], kind, &cfg)?.metrics);
        }
        let all: Vec<&ObservationPool> = pools.iter().collect();
        reports.push(run_protocol(COMBINED, &all, kind, &cfg)?.metrics);
    }
    print!("{}", ComparisonGrid::build(&reports).to_markdown());
    Ok(())
}
