//! The LSTM on observations viewed as 9 steps of 35 inputs. Five-fold
//! cross-validation on the train half picks the epoch count, then the model
//! is refit on the whole train half and scored once on the test half.
//!
//! cargo run --release --example lstm_classifier

use ambient_agitation::evaluation::{
    assemble_dataset, collect_observations, evaluate_on, train_on, ModelKind, ProtocolConfig,
};
use ambient_agitation::synth::{generate, GeneratorConfig, TriggerKind, TriggerRule};

fn main() -> ambient_agitation::Result<()> {
    let mut cfg = ProtocolConfig {
        seed: 8,
        ..Default::default()
    };
    cfg.lstm.hidden = 64;
    let deployment = generate(&GeneratorConfig {
        id: "lstm-demo".into(),
        seed: 22,
        duration_days: 30.0,
        target_per_week: 14.0,
        rules: vec![TriggerRule::new(TriggerKind::NoiseSpike)],
        ..Default::default()
    })?
    .deployment;
    let pool = collect_observations(deployment, &cfg)?;
    let data = assemble_dataset("lstm-demo", &[&pool], &cfg)?;

    let outcome = train_on(&data, ModelKind::Lstm, &cfg)?;
    for f in &outcome.cv.folds {
        println!(
            "fold {}: best epoch {:>3}, validation F_w {:.3}",
            f.fold, f.best, f.valid_weighted_f1
        );
    }
    println!(
        "refit for {} epochs on {} rows",
        outcome.cv.selected, outcome.train_rows
    );
    if let Some(log) = &outcome.train_log {
        println!(
            "train loss {:.4} -> {:.4}",
            log.train_loss[0],
            log.train_loss[log.train_loss.len() - 1]
        );
    }
    let m = evaluate_on(&outcome.model, &data, cfg.seed)?;
    println!(
        "test: F_w {:.3} (chance {:.3})",
        m.weighted_f1, m.chance_weighted_f1
    );
    Ok(())
}
