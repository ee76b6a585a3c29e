//! Filters and normalizes a synthetic deployment, cuts the 9-window
//! observation before every label plus 3:1 negatives, and writes the
//! 315-column feature table.
//!
//! cargo run --release --example extract_features

use ambient_agitation::features::{
    build_observations, write_feature_csv, ExtractConfig, FeatureTable,
};
use ambient_agitation::signal::{prepare, DEFAULT_FILTER_LEN};
use ambient_agitation::synth::{generate, GeneratorConfig, TriggerKind, TriggerRule};

fn main() -> ambient_agitation::Result<()> {
    let synthetic = generate(&GeneratorConfig {
        id: "features-demo".into(),
        seed: 3,
        duration_days: 5.0,
        target_per_week: 14.0,
        rules: vec![TriggerRule::new(TriggerKind::NoiseSpike)],
        ..Default::default()
    })?;
    let prepared = prepare(synthetic.deployment, DEFAULT_FILTER_LEN, true)?;
    let extract = ExtractConfig::default();
    let set = build_observations(&prepared, 3, 11, &extract)?;
    println!(
        "{} positives, {} negatives ({} candidate negatives rejected)",
        set.report.positives, set.report.negatives, set.report.negative_rejections
    );

    let table = FeatureTable::from_observations(set.all(), extract.diff_mode);
    let layout = extract.geometry.layout();
    println!("{} rows × {} features", table.len(), table.width());
    let row = table.rows.row(0);
    for i in (0..layout.len()).step_by(44) {
        println!("  {:<32} {:>9.3}", layout.name(i), row[i]);
    }
    let path = "target/example-data/features-demo.csv";
    std::fs::create_dir_all("target/example-data").expect("writable target dir");
    write_feature_csv(path, &table)?;
    println!("wrote {path}");
    Ok(())
}
