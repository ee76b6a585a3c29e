//! Gradient boosted trees on a synthetic light-ramp deployment: training
//! curve, held-out metrics and split-gain importance per channel.
//!
//! cargo run --release --example gbt_classifier

use ambient_agitation::evaluation::{
    assemble_dataset, collect_observations, compute_metrics, gain_importance, ProtocolConfig,
};
use ambient_agitation::gbt::{fit_gbt, predict_gbt, GbtParams};
use ambient_agitation::synth::{generate, GeneratorConfig, TriggerKind, TriggerRule};

fn main() -> ambient_agitation::Result<()> {
    let cfg = ProtocolConfig {
        seed: 5,
        ..Default::default()
    };
    let deployment = generate(&GeneratorConfig {
        id: "gbt-demo".into(),
        seed: 21,
        duration_days: 14.0,
        target_per_week: 14.0,
        rules: vec![TriggerRule::new(TriggerKind::LightRamp)],
        ..Default::default()
    })?
    .deployment;
    let pool = collect_observations(deployment, &cfg)?;
    let data = assemble_dataset("gbt-demo", &[&pool], &cfg)?;
    let (train, test) = (data.train(), data.test());

    let params = GbtParams {
        n_trees: 60,
        ..Default::default()
    };
    let model = fit_gbt(train.rows.view(), &train.labels, &params, cfg.seed)?;
    for k in [0, 1, 10, 30, 60] {
        println!("round {k:>2}: train log-loss {:.4}", model.train_loss[k]);
    }
    let pred: Vec<u8> = predict_gbt(&model, test.rows.view())?
        .into_iter()
        .map(|p| u8::from(p >= 0.5))
        .collect();
    let m = compute_metrics(&test.labels, &pred)?;
    println!(
        "test: F_w {:.3}, accuracy {:.3}, precision {:.3}, recall {:.3}",
        m.weighted_f1, m.accuracy, m.precision, m.recall
    );
    let (by_channel, _) = gain_importance(&model);
    for g in by_channel {
        println!(
            "  {:<12} gain {:>8.2} in {:>3} splits",
            g.name, g.gain, g.splits
        );
    }
    Ok(())
}
