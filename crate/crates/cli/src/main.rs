mod plot;

use std::fs;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sigproof_core::corpus::{load_image, scan_manifest, CorpusManifest, Label, Layout, PreprocessConfig};
use sigproof_core::distances::MetricId;
use sigproof_core::evaluation::{
    run_sweep, save_det_csv, write_results_csv, CellOutcome, ChannelSet, EvalCorpus, Scenario, SweepConfig,
};
use sigproof_core::evidence::{verify, EvidenceConfig, ProbMode, UbmIndex, WeightSpec};
use sigproof_core::features::{
    extract, featurize_entries, parse_channels, read_feature_file, write_feature_file, Channel, FeatureConfig,
    FeatureSet, FeatureStore,
};
use sigproof_core::synth::{generate, SynthConfig};
use sigproof_core::ubm::{build_ubm, Origin, SelectionRule, UniverseModel, DEFAULT_SIZE};
use sigproof_core::Execution;
use sigproof_service::{ServiceConfig, DEFAULT_PORT};

#[derive(Parser)]
#[command(name = "sigproof", version, about = "Explainable offline signature verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus manifests.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Feature extraction.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Universal background models.
    #[command(subcommand)]
    Ubm(UbmCmd),
    /// Score one questioned signature against references and a UBM.
    Verify(VerifyArgs),
    /// Run an evaluation sweep and write the results CSV.
    Eval(EvalArgs),
    /// Start the HTTP case service.
    Serve(ServeArgs),
    /// Write a seeded synthetic corpus and UBM image set.
    Synth(SynthArgs),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Enumerate a corpus directory into a flat JSON manifest.
    Scan {
        root: PathBuf,
        /// `cedar`, `mcyt`, `flat-json`, or a JSON naming-rule file.
        #[arg(long)]
        layout: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ExtractOpts {
    /// Comma-separated channels.
    #[arg(long, default_value = "g,qt,rl,t1,t2,t3,t4")]
    channels: String,
    /// Feature recipe JSON; defaults to the shipped configuration.
    #[arg(long)]
    feature_config: Option<PathBuf>,
    #[arg(long, default_value_t = sigproof_core::corpus::DEFAULT_CANVAS)]
    canvas: u32,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

impl ExtractOpts {
    fn channels(&self) -> Result<Vec<Channel>> {
        Ok(parse_channels(&self.channels)?)
    }

    fn feature_config(&self) -> Result<FeatureConfig> {
        match &self.feature_config {
            Some(p) => Ok(FeatureConfig::from_json(&fs::read_to_string(p).with_context(|| p.display().to_string())?)?),
            None => Ok(FeatureConfig::checked_in()),
        }
    }

    fn preprocess(&self) -> Result<PreprocessConfig> {
        let pre = PreprocessConfig { canvas: self.canvas };
        pre.validate()?;
        Ok(pre)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Subcommand)]
enum FeaturesCmd {
    /// Extract features for every manifest entry into a JSONL file.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ExtractOpts,
    },
}

#[derive(Subcommand)]
enum UbmCmd {
    /// Select UBM members from an extracted corpus.
    Build {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SIZE)]
        size: usize,
        #[arg(long, default_value = "first-per-writer")]
        rule: SelectionRule,
        #[arg(long, default_value = "g,qt,rl,t1,t2,t3,t4")]
        channels: String,
        #[arg(long, default_value = "real")]
        origin: Origin,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a UBM file's header.
    Info { path: PathBuf },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    questioned: PathBuf,
    #[arg(long = "reference", required = true)]
    references: Vec<PathBuf>,
    #[arg(long)]
    ubm: PathBuf,
    #[arg(long, default_value = "l1")]
    metric: MetricId,
    #[arg(long, default_value = "default-h")]
    weights: WeightSpec,
    #[arg(long, default_value = "oriented")]
    prob_mode: ProbMode,
    /// Accept when the fused score reaches this value.
    #[arg(long)]
    threshold: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG of the evidence curves.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    opts: ExtractOpts,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    ubm: PathBuf,
    /// Sweep configuration JSON; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured reference counts (comma-separated).
    #[arg(long, value_delimiter = ',')]
    n_refs: Option<Vec<usize>>,
    /// Overrides the configured scenarios (`rf`, `sf`).
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<Scenario>>,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<MetricId>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Results CSV; the JSON sidecar is written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Directory for one DET CSV per successful cell.
    #[arg(long)]
    det_dir: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    ubm_dir: Option<PathBuf>,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Built workbench assets served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    writers: usize,
    #[arg(long, default_value_t = 5)]
    genuine: u32,
    #[arg(long, default_value_t = 3)]
    forgeries: u32,
    #[arg(long, default_value_t = 24)]
    ubm_members: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Corpus(CorpusCmd::Scan { root, layout, out }) => corpus_scan(&root, &layout, &out),
        Command::Features(FeaturesCmd::Extract { manifest, out, opts }) => features_extract(&manifest, &out, &opts),
        Command::Ubm(cmd) => ubm(cmd),
        Command::Verify(args) => verify_cmd(args),
        Command::Eval(args) => eval(args),
        Command::Serve(args) => serve(args),
        Command::Synth(args) => synth(args),
    }
}

fn layout(spec: &str) -> Result<Layout> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") && path.is_file() {
        return Ok(Layout::from_rules_file(path)?);
    }
    Ok(spec.parse()?)
}

fn corpus_scan(root: &Path, layout_spec: &str, out: &Path) -> Result<()> {
    let manifest = scan_manifest(root, &layout(layout_spec)?)?;
    manifest.write_flat_json(out)?;
    let genuine = manifest.entries.iter().filter(|e| e.label == Label::Genuine).count();
    eprintln!(
        "{}: {} writers, {genuine} genuine, {} forgeries -> {}",
        manifest.dataset_name,
        manifest.writers().len(),
        manifest.entries.len() - genuine,
        out.display()
    );
    Ok(())
}

fn features_extract(manifest: &Path, out: &Path, opts: &ExtractOpts) -> Result<()> {
    let manifest = CorpusManifest::read_flat_json(manifest)?;
    let start = Instant::now();
    let sets = featurize_entries(
        &manifest.entries,
        &opts.channels()?,
        &opts.preprocess()?,
        &opts.feature_config()?,
        opts.exec(),
    )?;
    write_feature_file(out, &sets)?;
    eprintln!(
        "extracted {} specimens in {:.1}s -> {}",
        sets.len(),
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn load_store(path: &Path) -> Result<FeatureStore> {
    Ok(FeatureStore::new(read_feature_file(path)?)?)
}

fn ubm(cmd: UbmCmd) -> Result<()> {
    match cmd {
        UbmCmd::Build {
            manifest,
            features,
            size,
            rule,
            channels,
            origin,
            out,
        } => {
            let manifest = CorpusManifest::read_flat_json(&manifest)?;
            let store = load_store(&features)?;
            let model = build_ubm(&manifest, &store, size, rule, &parse_channels(&channels)?, origin)?;
            model.save(&out)?;
            eprintln!("UBM of {} members ({}) -> {}", model.size(), model.provenance(), out.display());
        }
        UbmCmd::Info { path } => {
            let model = UniverseModel::load(&path)?;
            let channels: Vec<String> = model.channels().iter().map(|c| c.to_string()).collect();
            println!(
                "{}",
                serde_json::json!({
                    "size": model.size(),
                    "origin": model.origin(),
                    "channels": channels,
                    "provenance": model.provenance(),
                })
            );
        }
    }
    Ok(())
}

fn extract_file(path: &Path, writer: &str, index: u32, opts: &ExtractOpts, cfg: &FeatureConfig) -> Result<FeatureSet> {
    let img = load_image(path)?;
    let pre = sigproof_core::corpus::preprocess(&img, &opts.preprocess()?)?;
    let mut set = extract(&pre, &opts.channels()?, cfg).with_context(|| path.display().to_string())?;
    set.writer_id = writer.into();
    set.specimen_index = index;
    Ok(set)
}

fn verify_cmd(args: VerifyArgs) -> Result<()> {
    let cfg = args.opts.feature_config()?;
    let channels = args.opts.channels()?;
    let ubm = UniverseModel::load(&args.ubm)?;
    let q = extract_file(&args.questioned, "questioned", 0, &args.opts, &cfg)?;
    let refs = args
        .references
        .iter()
        .enumerate()
        .map(|(i, p)| extract_file(p, "reference", i as u32 + 1, &args.opts, &cfg))
        .collect::<Result<Vec<_>>>()?;
    let evidence = EvidenceConfig {
        prob_mode: args.prob_mode,
        decision_threshold: args.threshold,
        ..EvidenceConfig::new(args.metric, channels, args.weights)
    };
    let report = verify(&q, &refs, &ubm, &evidence)?;
    let json = report.to_json()?;
    match &args.out {
        Some(p) => fs::write(p, &json)?,
        None => println!("{json}"),
    }
    if let Some(p) = &args.plot {
        fs::write(p, plot::report_svg(&report))?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut config: SweepConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
        None => SweepConfig::default(),
    };
    if let Some(v) = args.n_refs {
        config.n_refs = v;
    }
    if let Some(v) = args.scenarios {
        config.scenarios = v;
    }
    if let Some(v) = args.metrics {
        config.metrics = v;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if config.channel_sets.is_empty() {
        config.channel_sets = vec![ChannelSet::handcrafted()];
    }
    let manifest = CorpusManifest::read_flat_json(&args.manifest)?;
    let store = load_store(&args.features)?;
    let corpus = EvalCorpus::from_manifest(&manifest, &store)?;
    let ubm = UniverseModel::load(&args.ubm)?;
    if config.ubm_id == SweepConfig::default().ubm_id {
        config.ubm_id = args
            .ubm
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    let index = UbmIndex::new(ubm);
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };

    let result = run_sweep(&config, &corpus, &index, exec);
    write_results_csv(BufWriter::new(fs::File::create(&args.out)?), &result)?;
    fs::write(args.out.with_extension("json"), result.sidecar_json(&index)?)?;
    if let Some(dir) = &args.det_dir {
        fs::create_dir_all(dir)?;
        for cell in &result.cells {
            if let CellOutcome::Done { det, .. } = &cell.outcome {
                let p = &cell.protocol;
                let name = format!(
                    "cell{:03}_{}_{}_{}_n{}_{}.csv",
                    cell.cell,
                    cell.channel_set,
                    p.metric,
                    p.ubm_size.map(|n| n.to_string()).unwrap_or_else(|| "all".into()),
                    p.n_refs,
                    p.scenario
                );
                save_det_csv(&dir.join(name), det)?;
            }
        }
    }
    print!("{}", result.summary());
    let failed = result.cells.iter().filter(|c| c.eer().is_none()).count();
    if failed == result.cells.len() && failed > 0 {
        bail!("every cell failed");
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::new(args.data_dir);
    cfg.ubm_dir = args.ubm_dir;
    cfg.static_dir = args.static_dir;
    let addr = SocketAddr::new(args.host, args.port);
    let rt = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{addr}");
    rt.block_on(sigproof_service::serve(cfg, addr))?;
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let corpus = generate(&SynthConfig {
        writers: args.writers,
        genuine: args.genuine,
        forgeries: args.forgeries,
        ubm_members: args.ubm_members,
        seed: args.seed,
    });
    let layout = corpus.write(&args.out)?;
    eprintln!(
        "{} specimens, {} UBM images -> {} and {}",
        corpus.specimens.len(),
        corpus.ubm.len(),
        layout.corpus_manifest.display(),
        layout.ubm_manifest.display()
    );
    Ok(())
}
