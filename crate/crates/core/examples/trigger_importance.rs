//! Runs the full protocol on a sundowning home and a noise-sensitive home
//! and shows which channel and which feature type the models rely on.
//!
//! cargo run --release --example trigger_importance

use ambient_agitation::evaluation::{
    collect_observations, importance_markdown, run_protocol, ModelKind, ProtocolConfig,
};
use ambient_agitation::synth::{
    generate, DiurnalProfile, GeneratorConfig, TriggerKind, TriggerRule,
};

fn main() -> ambient_agitation::Result<()> {
    let cfg = ProtocolConfig {
        seed: 3,
        ..Default::default()
    };
    // Flat indoor temperature removes the strongest clock proxy; daylight
    // still follows the hour.
    let mut steady = DiurnalProfile::default();
    steady.temperature.amplitude = 0.0;
    for (id, kind, profile) in [
        (
            "noisy-home",
            TriggerKind::NoiseSpike,
            DiurnalProfile::default(),
        ),
        ("sundowning-home", TriggerKind::Sundowning, steady),
    ] {
        let synthetic = generate(&GeneratorConfig {
            id: id.into(),
            seed: 12,
            duration_days: 21.0,
            target_per_week: 14.0,
            profile,
            rules: vec![TriggerRule::new(kind)],
            ..Default::default()
        })?;
        let pool = collect_observations(synthetic.deployment, &cfg)?;
        let outcome = run_protocol(id, &[&pool], ModelKind::Gbt, &cfg)?;
        println!("{}", importance_markdown(&outcome.importance));
        println!(
            "{id}: top channel {:?}, top feature type {:?}\n",
            outcome.importance.top_channel(),
            outcome.importance.top_feature_kind()
        );
    }
    Ok(())
}
