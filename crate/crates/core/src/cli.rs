//! The `agitation` command: each pipeline stage reads the previous stage's
//! files under the output directory and writes its own.
//!
//! ```text
//! out/data/<id>/            generate
//! out/canonical/<id>/       ingest (+ quality.json)
//! out/features/<name>.csv   features (+ .meta.json)
//! out/models/<model>-<name>.json
//! out/reports/<model>-<name>.{metrics,importance}.{json,md}
//! out/reports/comparison.{json,md}
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data_model::{AcousticReduction, Deployment, QualitySummary};
use crate::error::{Error, Result};
use crate::evaluation::{
    assemble_dataset, collect_observations, config_hash, evaluate_on, importance_markdown,
    metrics_markdown, permutation_importance, read_dataset_csv, split_digest, train_on,
    write_dataset_csv, ComparisonGrid, FeatureScope, ImportanceReport, LabeledDataset,
    LayoutDescriptor, MetricsReport, ModelBundle, ModelKind, ObservationPool, ProtocolConfig,
    COMBINED,
};
use crate::features::{ExtractionReport, FeatureLayout, WINDOW_WIDTH};
use crate::seeds;
use crate::signal::{NormalizationMode, NormalizationStats};
use crate::synth::{generate_to_dir, GeneratorSet};

pub const FEATURES_SCHEMA: &str = "ambient-agitation/features/v1";
pub const QUALITY_SCHEMA: &str = "ambient-agitation/quality/v1";
pub const METRICS_SCHEMA: &str = "ambient-agitation/metrics/v1";
pub const IMPORTANCE_SCHEMA: &str = "ambient-agitation/importance/v1";
pub const REPORT_SCHEMA: &str = "ambient-agitation/comparison/v1";

const DEFAULT_CONFIG: &str = "agitation.toml";

#[derive(Debug, Parser)]
#[command(
    name = "agitation",
    version,
    about = "Agitation prediction from ambient sensor data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub stage: Stage,
    /// Run configuration (TOML). Defaults to ./agitation.toml.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured model kind.
    #[arg(long, global = true)]
    pub model: Option<ModelKind>,
    /// Restricts the stage to these deployment ids.
    #[arg(long, global = true, num_args = 1..)]
    pub deployment: Vec<String>,
    /// Works on the pooled dataset of the selected deployments instead of
    /// each one separately.
    #[arg(long, global = true)]
    pub combined: bool,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Stage {
    /// Write synthetic deployments from the generator config.
    Generate,
    /// Validate raw deployments and write canonical 1 Hz copies.
    Ingest,
    /// Extract observations, split them and write feature tables.
    Features,
    /// Cross-validate on the train half, refit, and save a model bundle.
    Train,
    /// Score a bundle once on the test half.
    Evaluate,
    /// Permutation importance on the test half.
    Importance,
    /// Comparison grid across deployments and the combined run.
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Generate => "generate",
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Importance => "importance",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentEntry {
    pub id: String,
    /// Raw manifest; defaults to the `generate` output for this id.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

/// The TOML run configuration. Relative paths are resolved against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    /// Generator set for `generate`.
    #[serde(default)]
    pub generator: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, rename = "deployment")]
    pub deployments: Vec<DeploymentEntry>,
    /// `protocol.seed` is replaced by the run seed.
    #[serde(default)]
    pub protocol: ProtocolConfig,
}

fn default_model() -> ModelKind {
    ModelKind::Gbt
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn config_err(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config {
            key: crate::error::toml_key(&e, text),
            reason: e.message().to_string(),
        })?;
        cfg.protocol.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for (i, d) in cfg.deployments.iter().enumerate() {
            if d.id.is_empty() || d.id == COMBINED || d.id.contains(['/', '\\', ',']) {
                return Err(config_err(
                    format!("deployment[{i}].id"),
                    format!("invalid id {:?}", d.id),
                ));
            }
            if !seen.insert(d.id.as_str()) {
                return Err(config_err(
                    format!("deployment[{i}].id"),
                    format!("duplicate id {:?}", d.id),
                ));
            }
        }
        Ok(cfg)
    }

    /// Reads the file and checks that every path it names exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("config", format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let must_exist = |key: String, p: &mut PathBuf| {
            *p = base.join(&*p);
            if p.exists() {
                Ok(())
            } else {
                Err(config_err(key, format!("{} does not exist", p.display())))
            }
        };
        if let Some(g) = cfg.generator.as_mut() {
            must_exist("generator".into(), g)?;
        }
        for (i, d) in cfg.deployments.iter_mut().enumerate() {
            if let Some(m) = d.manifest.as_mut() {
                must_exist(format!("deployment[{i}].manifest"), m)?;
            }
        }
        cfg.out = base.join(&cfg.out);
        Ok(cfg)
    }
}

/// Hashed view of the effective configuration: everything but the output
/// location, with paths as written.
#[derive(Serialize)]
struct HashInput<'a> {
    seed: u64,
    model: ModelKind,
    generator: Option<&'a Path>,
    deployments: &'a [DeploymentEntry],
    protocol: &'a ProtocolConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub config_hash: String,
    pub seed: u64,
    pub body: T,
}

/// Sidecar of a feature table: what produced it and how to rescale new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub dataset: String,
    pub deployments: Vec<String>,
    pub rows: usize,
    pub positives: usize,
    pub split_digest: String,
    pub layout: LayoutDescriptor,
    pub normalization_mode: NormalizationMode,
    pub normalization: NormalizationStats,
    pub extraction: Vec<ExtractionReport>,
}

struct Context {
    cfg: RunConfig,
    protocol: ProtocolConfig,
    hash: String,
    out: PathBuf,
    selected: Vec<DeploymentEntry>,
    combined: bool,
    model_override: Option<ModelKind>,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let path = cli
            .config
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CONFIG));
        let mut cfg = RunConfig::load(&path)?;
        // Paths as written, so the hash does not depend on where the config lives.
        let mut raw =
            RunConfig::parse(&std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
            raw.seed = seed;
        }
        if let Some(model) = cli.model {
            cfg.model = model;
            raw.model = model;
        }
        let mut protocol = cfg.protocol.clone();
        protocol.seed = cfg.seed;
        raw.protocol.seed = cfg.seed;
        let hash = config_hash(&HashInput {
            seed: raw.seed,
            model: raw.model,
            generator: raw.generator.as_deref(),
            deployments: &raw.deployments,
            protocol: &raw.protocol,
        })?;
        let out = cli.out.clone().unwrap_or_else(|| cfg.out.clone());
        let selected = if cli.deployment.is_empty() {
            cfg.deployments.clone()
        } else {
            cli.deployment
                .iter()
                .map(|id| {
                    cfg.deployments
                        .iter()
                        .find(|d| &d.id == id)
                        .cloned()
                        .ok_or_else(|| {
                            config_err("deployment", format!("{id:?} is not configured"))
                        })
                })
                .collect::<Result<_>>()?
        };
        Ok(Context {
            cfg,
            protocol,
            hash,
            out,
            selected,
            combined: cli.combined,
            model_override: cli.model,
        })
    }

    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    fn envelope<T>(&self, schema: &str, body: T) -> Envelope<T> {
        Envelope {
            schema: schema.into(),
            config_hash: self.hash.clone(),
            seed: self.seed(),
            body,
        }
    }

    fn dir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.out.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(d)
    }

    /// Dataset names a stage works on.
    fn targets(&self) -> Result<Vec<String>> {
        if self.selected.is_empty() {
            return Err(config_err("deployment", "no deployments configured"));
        }
        Ok(if self.combined {
            vec![COMBINED.to_string()]
        } else {
            self.selected.iter().map(|d| d.id.clone()).collect()
        })
    }

    fn raw_manifest(&self, d: &DeploymentEntry) -> PathBuf {
        d.manifest
            .clone()
            .unwrap_or_else(|| self.out.join("data").join(&d.id).join("manifest.json"))
    }

    fn features_csv(&self, name: &str) -> PathBuf {
        self.out.join("features").join(format!("{name}.csv"))
    }

    fn features_meta(&self, name: &str) -> PathBuf {
        self.out.join("features").join(format!("{name}.meta.json"))
    }

    fn bundle_path(&self, model: ModelKind, name: &str) -> PathBuf {
        self.out.join("models").join(format!("{model}-{name}.json"))
    }

    fn report_path(&self, model: ModelKind, name: &str, ext: &str) -> PathBuf {
        self.out
            .join("reports")
            .join(format!("{model}-{name}.{ext}"))
    }

    /// The dataset with its split checked against the recorded digest.
    fn load_dataset(&self, name: &str, expected_digest: &str) -> Result<LabeledDataset> {
        let mut data = read_dataset_csv(self.features_csv(name), name)?;
        let meta: Envelope<FeatureMeta> = read_json(&self.features_meta(name))?;
        if split_digest(&data.split) != expected_digest || meta.body.split_digest != expected_digest
        {
            return Err(Error::invalid(format!(
                "split of {name} does not match the recorded split digest"
            )));
        }
        data.stats = meta.body.normalization;
        data.extraction = meta.body.extraction;
        Ok(data)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn provenance_md(ctx: &Context, body: String) -> String {
    format!("{body}\n_config {} · seed {}_\n", ctx.hash, ctx.seed())
}

fn generate(ctx: &Context) -> Result<()> {
    let path = ctx
        .cfg
        .generator
        .as_ref()
        .ok_or_else(|| config_err("generator", "required by generate"))?;
    let set = GeneratorSet::read(path)?;
    let wanted: Vec<&str> = ctx.selected.iter().map(|d| d.id.as_str()).collect();
    let mut written = 0;
    for g in &set.deployment {
        if !wanted.is_empty() && !wanted.contains(&g.id.as_str()) {
            continue;
        }
        let (manifest, truth) = generate_to_dir(g, ctx.dir("data")?.join(&g.id))?;
        log::info!(
            "{}: {} labels ({:.1}/week) -> {}",
            g.id,
            truth.rate.labels,
            truth.rate.per_week,
            manifest.display()
        );
        if !truth.rate.within_band {
            log::warn!(
                "{}: {} labels outside the accepted {}..={}",
                g.id,
                truth.rate.labels,
                truth.rate.lower,
                truth.rate.upper
            );
        }
        written += 1;
    }
    if written == 0 {
        return Err(config_err(
            "deployment",
            "no generator entry matches the selected deployments",
        ));
    }
    Ok(())
}

fn ingest(ctx: &Context) -> Result<()> {
    for d in &ctx.selected {
        let (deployment, quality) =
            Deployment::load(ctx.raw_manifest(d), AcousticReduction::default())?;
        for w in &quality.warnings {
            log::warn!("{}: {w}", d.id);
        }
        let dir = ctx.dir("canonical")?.join(&d.id);
        deployment.save(&dir)?;
        write_json(
            &dir.join("quality.json"),
            &ctx.envelope(QUALITY_SCHEMA, quality),
        )?;
    }
    Ok(())
}

fn load_pool(ctx: &Context, d: &DeploymentEntry) -> Result<ObservationPool> {
    let manifest = ctx.out.join("canonical").join(&d.id).join("manifest.json");
    let (deployment, _): (Deployment, QualitySummary) =
        Deployment::load(&manifest, AcousticReduction::default())?;
    collect_observations(deployment, &ctx.protocol)
}

fn features(ctx: &Context) -> Result<()> {
    let pools: Vec<ObservationPool> = ctx
        .selected
        .iter()
        .map(|d| load_pool(ctx, d))
        .collect::<Result<_>>()?;
    let dir = ctx.dir("features")?;
    let groups: Vec<(String, Vec<&ObservationPool>)> = if ctx.combined {
        vec![(COMBINED.to_string(), pools.iter().collect())]
    } else {
        pools
            .iter()
            .map(|p| (p.deployment_id.clone(), vec![p]))
            .collect()
    };
    for (name, group) in groups {
        let data = assemble_dataset(&name, &group, &ctx.protocol)?;
        write_dataset_csv(dir.join(format!("{name}.csv")), &data)?;
        let meta = FeatureMeta {
            dataset: name.clone(),
            deployments: group.iter().map(|p| p.deployment_id.clone()).collect(),
            rows: data.len(),
            positives: data.table.labels.iter().filter(|&&y| y == 1).count(),
            split_digest: split_digest(&data.split),
            layout: LayoutDescriptor::new(
                FeatureLayout {
                    n_windows: data.table.width() / WINDOW_WIDTH,
                },
                ctx.protocol.extract.diff_mode,
            ),
            normalization_mode: ctx.protocol.normalization,
            normalization: data.stats.clone(),
            extraction: data.extraction.clone(),
        };
        write_json(
            &ctx.features_meta(&name),
            &ctx.envelope(FEATURES_SCHEMA, meta),
        )?;
    }
    Ok(())
}

fn train(ctx: &Context) -> Result<()> {
    ctx.dir("models")?;
    let model = ctx.cfg.model;
    for name in ctx.targets()? {
        let meta: Envelope<FeatureMeta> = read_json(&ctx.features_meta(&name))?;
        let data = ctx.load_dataset(&name, &meta.body.split_digest)?;
        let outcome = train_on(&data, model, &ctx.protocol)?;
        let bundle = ModelBundle::new(
            outcome,
            &name,
            ctx.hash.clone(),
            ctx.seed(),
            meta.body.layout,
            meta.body.normalization_mode,
            data.stats.clone(),
            &data.split,
        );
        bundle.save(ctx.bundle_path(model, &name))?;
    }
    Ok(())
}

fn load_bundle(ctx: &Context, name: &str) -> Result<(ModelBundle, LabeledDataset)> {
    let bundle = ModelBundle::load(ctx.bundle_path(ctx.cfg.model, name))?;
    let data = ctx.load_dataset(name, &bundle.split_digest)?;
    Ok((bundle, data))
}

fn evaluate(ctx: &Context) -> Result<()> {
    ctx.dir("reports")?;
    for name in ctx.targets()? {
        let (bundle, data) = load_bundle(ctx, &name)?;
        let report = evaluate_on(&bundle.model, &data, ctx.seed())?;
        let md = provenance_md(ctx, metrics_markdown(&report));
        let model = bundle.model_kind;
        write_json(
            &ctx.report_path(model, &name, "metrics.json"),
            &ctx.envelope(METRICS_SCHEMA, report),
        )?;
        write_text(&ctx.report_path(model, &name, "metrics.md"), &md)?;
    }
    Ok(())
}

fn importance(ctx: &Context) -> Result<()> {
    ctx.dir("reports")?;
    for name in ctx.targets()? {
        let (bundle, data) = load_bundle(ctx, &name)?;
        let test = data.test();
        let per_feature = match ctx.protocol.per_feature_importance {
            FeatureScope::All => true,
            FeatureScope::Gbt => bundle.model_kind == ModelKind::Gbt,
            FeatureScope::None => false,
        };
        let report: ImportanceReport = permutation_importance(
            &bundle.model,
            test.rows.view(),
            &test.labels,
            ctx.protocol.importance_repeats,
            seeds::derive(ctx.seed(), "importance"),
            per_feature,
        )?
        .with_context(&name, ctx.seed());
        let md = provenance_md(ctx, importance_markdown(&report));
        let model = bundle.model_kind;
        write_json(
            &ctx.report_path(model, &name, "importance.json"),
            &ctx.envelope(IMPORTANCE_SCHEMA, report),
        )?;
        write_text(&ctx.report_path(model, &name, "importance.md"), &md)?;
    }
    Ok(())
}

fn report(ctx: &Context) -> Result<()> {
    let dir = ctx.dir("reports")?;
    let models = match ctx.model_override {
        Some(m) => vec![m],
        None => ModelKind::ALL.to_vec(),
    };
    let mut names: Vec<String> = ctx.selected.iter().map(|d| d.id.clone()).collect();
    names.push(COMBINED.to_string());
    let mut reports: Vec<MetricsReport> = Vec::new();
    for model in models {
        for name in &names {
            let path = ctx.report_path(model, name, "metrics.json");
            if path.exists() {
                let env: Envelope<MetricsReport> = read_json(&path)?;
                reports.push(env.body);
            }
        }
    }
    if reports.is_empty() {
        return Err(Error::invalid(
            "no metrics reports found; run evaluate first",
        ));
    }
    let grid = ComparisonGrid::build(&reports);
    let md = provenance_md(ctx, grid.to_markdown());
    write_json(
        &dir.join("comparison.json"),
        &ctx.envelope(REPORT_SCHEMA, grid),
    )?;
    write_text(&dir.join("comparison.md"), &md)
}

/// Runs one stage.
pub fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::new(cli)?;
    log::debug!("config {} seed {}", ctx.hash, ctx.seed());
    match cli.stage {
        Stage::Generate => generate(&ctx),
        Stage::Ingest => ingest(&ctx),
        Stage::Features => features(&ctx),
        Stage::Train => train(&ctx),
        Stage::Evaluate => evaluate(&ctx),
        Stage::Importance => importance(&ctx),
        Stage::Report => report(&ctx),
    }
}

/// Exit code 2 for configuration problems, 1 for pipeline failures.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } => 2,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Config { .. } => eprintln!("config error: {e}"),
                _ => eprintln!("error in {}: {e}", cli.stage),
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(text: &str) -> String {
        match RunConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn bad_values_report_dotted_keys() {
        assert_eq!(
            key_of("[protocol.gbt]\nn_trees = \"many\"\n"),
            "protocol.gbt.n_trees"
        );
        assert_eq!(key_of("seed = -1\n"), "seed");
        assert_eq!(key_of("model = \"svm\"\n"), "model");
        assert_eq!(
            key_of("[protocol]\nsplit_fraction = 1.5\n"),
            "protocol.split_fraction"
        );
    }

    #[test]
    fn defaults_fill_a_minimal_config() {
        let cfg = RunConfig::parse("[[deployment]]\nid = \"a\"\n").unwrap();
        assert_eq!(cfg.model, ModelKind::Gbt);
        assert_eq!(cfg.out, PathBuf::from("out"));
        assert_eq!(cfg.protocol, ProtocolConfig::default());
    }
}
