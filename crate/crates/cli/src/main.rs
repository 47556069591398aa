//! `figmine`: ingest a figure corpus, train and apply the classifiers,
//! rank papers, run the analyses and serve the search API.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use figmine_core::alef::{alef_scores, build_graph, read_edges, read_scores, write_scores, AlefParams};
use figmine_core::analysis::{AnalysisOptions, AnalysisReport, BinScheme};
use figmine_core::corpus::{ingest, IngestOptions, Manifest};
use figmine_core::dismantle::{DismantleConfig, FragmentClassifier};
use figmine_core::features::Codebook;
use figmine_core::figtype::{train_codebook, type_dataset, CodebookConfig, FigureTypeClassifier};
use figmine_core::gate::GateModel;
use figmine_core::pipeline::{self, FeatureRow};
use figmine_core::svm::{self, cross_validate, grid_search, holdout_evaluate, ConfusionMatrix, Dataset, EvalReport, SvmModel, SvmParams};
use figmine_core::{synth, FigureLabel};
use figmine_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "figmine", version, about = "Figure mining for scholarly corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter an image directory and write a manifest.
    Ingest {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn whitening and the patch codebook from manifest figures.
    TrainCodebook {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 100)]
        per_image: usize,
        #[arg(long, default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode singleton figures into classifier inputs (JSON lines).
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search, evaluate and train an SVM from features and labels.
    TrainClassifier(TrainClassifierArgs),
    /// Label singleton figures with the figure-type classifier.
    Classify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train the multi-chart gate.
    TrainGate(TrainBinaryArgs),
    /// Train the standalone/auxiliary fragment classifier.
    TrainFragment(TrainBinaryArgs),
    /// Mark multi-chart figures.
    Gate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Split multi-chart figures into child records.
    Dismantle {
        #[arg(long)]
        manifest: PathBuf,
        /// Gate model; when given, figures never gated are gated first.
        #[arg(long)]
        gate: Option<PathBuf>,
        #[arg(long)]
        frag: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score papers from a citation edge list.
    Rank {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 0.85)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Figure densities against impact, written as CSV and JSON.
    Analyze(AnalyzeArgs),
    /// Serve the search API.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Allowed browser origin; repeatable. Without any, all origins are allowed.
        #[arg(long = "cors-origin")]
        cors_origins: Vec<String>,
        #[arg(long)]
        verification_log: Option<PathBuf>,
    },
    /// Write a synthetic labeled image corpus: `images/`, `metadata.jsonl`
    /// and `labels.jsonl` keyed by the ids ingest will assign.
    Synth {
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainClassifierArgs {
    #[arg(long)]
    features: PathBuf,
    /// JSON lines of `{figure_id, label}`.
    #[arg(long)]
    labels: PathBuf,
    /// JSON array of `{kernel, gamma, penalty_c}`; defaults to RBF, γ=0.001, C=1000.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Also report a held-out evaluation on this fraction.
    #[arg(long)]
    holdout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Evaluation report path; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TrainBinaryArgs {
    /// Train on this many generated examples per class.
    #[arg(long, conflicts_with_all = ["manifest", "labels"])]
    synthetic: Option<usize>,
    #[arg(long, requires = "labels")]
    manifest: Option<PathBuf>,
    /// JSON lines of `{figure_id, label}`; `multichart` or `standalone` is the positive class.
    #[arg(long, requires = "manifest")]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.001)]
    gamma: f64,
    #[arg(long, default_value_t = 1000.0)]
    penalty_c: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    report: PathBuf,
    #[arg(long = "exclude-journal")]
    exclude_journals: Vec<String>,
    #[arg(long, default_value_t = figmine_core::analysis::DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed bin size instead of half-percentile bins.
    #[arg(long)]
    bin_size: Option<usize>,
    /// Confusion matrix (or an evaluation report holding one) for the calibration experiment.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    figure_id: String,
    label: String,
}

/// JSON sidecar written next to every model file.
#[derive(Serialize)]
struct ModelSidecar<'a> {
    params: SvmParams,
    classes: &'a [String],
    dim: usize,
    support_vectors: usize,
    metadata: &'a BTreeMap<String, String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn save_model(model: &SvmModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    model.write_to(&mut w)?;
    w.flush()?;
    let sidecar = ModelSidecar {
        params: model.params,
        classes: &model.classes,
        dim: model.dim,
        support_vectors: model.support_vectors.len(),
        metadata: &model.metadata,
    };
    write_json(&sidecar_path(path), &sidecar)
}

fn load_model(path: &Path) -> Result<SvmModel> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    Ok(SvmModel::read_from(r)?)
}

fn load_codebook(path: &Path) -> Result<Codebook> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    Ok(Codebook::read_from(r)?)
}

fn load_scores(path: Option<&Path>) -> Result<HashMap<String, f64>> {
    match path {
        Some(p) => Ok(read_scores(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))?),
        None => Ok(HashMap::new()),
    }
}

fn print_json(value: &impl Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_train_codebook(manifest_dir: &Path, per_image: usize, k: usize, seed: u64, out: &Path) -> Result<()> {
    let m = Manifest::load(manifest_dir)?;
    let store = Manifest::image_store(manifest_dir)?;
    let idx = pipeline::singleton_candidates(&m);
    let images = pipeline::normalized_images(&m, &store, &idx)?;
    if images.is_empty() {
        bail!("no readable singleton figures in {}", manifest_dir.display());
    }
    let cfg = CodebookConfig { per_image, k, seed, ..Default::default() };
    let codebook = train_codebook(&images, &cfg)?;
    let mut w = BufWriter::new(File::create(out)?);
    codebook.write_to(&mut w)?;
    w.flush()?;
    let mut meta = codebook.meta();
    meta.per_image = Some(per_image);
    meta.seed = Some(seed);
    meta.training_patches = Some(images.len() * per_image);
    write_json(&sidecar_path(out), &meta)?;
    log::info!("codebook with {} centroids from {} images", codebook.k(), images.len());
    Ok(())
}

fn cmd_features(manifest_dir: &Path, codebook: &Path, out: &Path) -> Result<()> {
    let m = Manifest::load(manifest_dir)?;
    let store = Manifest::image_store(manifest_dir)?;
    let codebook = load_codebook(codebook)?;
    let rows = pipeline::feature_rows(&m, &store, &codebook, &pipeline::singleton_candidates(&m))?;
    let mut w = BufWriter::new(File::create(out)?);
    for r in &rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    log::info!("{} feature rows", rows.len());
    Ok(())
}

/// Joins feature rows with labels. When every label is a figure type the
/// class list follows the figure-type order, so the model can be used by
/// `classify`.
fn labeled_dataset(features: Vec<FeatureRow>, labels: Vec<LabelRow>) -> Result<Dataset> {
    let by_id: HashMap<String, String> = labels.into_iter().map(|l| (l.figure_id, l.label)).collect();
    let (mut x, mut names) = (Vec::new(), Vec::new());
    for row in features {
        if let Some(label) = by_id.get(&row.figure_id) {
            x.push(row.features);
            names.push(label.clone());
        }
    }
    if x.is_empty() {
        bail!("no feature row has a label");
    }
    let types: Option<Vec<FigureLabel>> =
        names.iter().map(|n| n.parse::<FigureLabel>().ok().filter(FigureLabel::is_singleton)).collect();
    match types {
        Some(t) => Ok(type_dataset(x, &t)?),
        None => Ok(Dataset::from_named(x, &names)),
    }
}

#[derive(Serialize)]
struct TrainingReport {
    grid: Option<svm::GridResult>,
    cross_validation: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    holdout: Option<EvalReport>,
}

fn cmd_train_classifier(a: &TrainClassifierArgs) -> Result<()> {
    let data = labeled_dataset(read_jsonl(&a.features)?, read_jsonl(&a.labels)?)?;
    let grid: Vec<SvmParams> = match &a.grid {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?)).with_context(|| format!("parsing {}", p.display()))?,
        None => vec![SvmParams::rbf(0.001, 1000.0)],
    };
    let searched = if grid.len() > 1 { Some(grid_search(&data, &grid, a.folds, a.seed)?) } else { None };
    let params = searched.as_ref().map(|g| g.best).unwrap_or(grid[0]);
    let cv = cross_validate(&data, &params, a.folds, a.seed)?;
    let holdout = a.holdout.map(|f| holdout_evaluate(&data, &params, f, a.seed)).transpose()?;
    log::info!("{}-fold accuracy {:.4}", a.folds, cv.accuracy);
    let model = svm::train(&data, &params)?;
    save_model(&model, &a.out)?;
    let report = TrainingReport { grid: searched, cross_validation: cv, holdout };
    let path = a.report.clone().unwrap_or_else(|| a.out.with_extension("report.json"));
    write_json(&path, &report)
}

fn binary_samples(a: &TrainBinaryArgs, positive: &str, synthetic: fn(usize, u64) -> Vec<(figmine_core::LumaImage, bool)>) -> Result<Vec<(figmine_core::LumaImage, bool)>> {
    if let Some(n) = a.synthetic {
        return Ok(synthetic(n, a.seed));
    }
    let (Some(dir), Some(labels)) = (&a.manifest, &a.labels) else {
        bail!("pass --synthetic N or --manifest with --labels");
    };
    let m = Manifest::load(dir)?;
    let store = Manifest::image_store(dir)?;
    let mut out = Vec::new();
    for row in read_jsonl::<LabelRow>(labels)? {
        let fig = m.figure(&row.figure_id).with_context(|| format!("unknown figure {}", row.figure_id))?;
        out.push((Manifest::load_luma(&store, fig)?, row.label == positive));
    }
    Ok(out)
}

fn cmd_train_gate(a: &TrainBinaryArgs) -> Result<()> {
    let samples = binary_samples(a, "multichart", synth::gate_corpus)?;
    let gate = GateModel::train(&samples, &SvmParams::rbf(a.gamma, a.penalty_c), &DismantleConfig::default())?;
    save_model(&gate.model, &a.out)
}

fn cmd_train_fragment(a: &TrainBinaryArgs) -> Result<()> {
    let samples = binary_samples(a, "standalone", synth::fragment_corpus)?;
    let frag = FragmentClassifier::train(&samples, 1.0, &SvmParams::rbf(a.gamma, a.penalty_c), &DismantleConfig::default())?;
    save_model(&frag.model, &a.out)
}

fn cmd_gate(manifest_dir: &Path, model: &Path) -> Result<()> {
    let mut m = Manifest::load(manifest_dir)?;
    let store = Manifest::image_store(manifest_dir)?;
    let gate = GateModel::from_model(load_model(model)?)?;
    let s = pipeline::gate_manifest(&mut m, &store, &gate)?;
    m.save(manifest_dir)?;
    print_json(&s)
}

fn cmd_dismantle(manifest_dir: &Path, gate: Option<&Path>, frag: &Path, config: Option<&Path>) -> Result<()> {
    let mut m = Manifest::load(manifest_dir)?;
    let store = Manifest::image_store(manifest_dir)?;
    let cfg: DismantleConfig = match config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => DismantleConfig::default(),
    };
    if let Some(g) = gate {
        if m.originals().any(|f| f.gate_prob.is_none()) {
            let gate = GateModel::from_model(load_model(g)?)?;
            let s = pipeline::gate_manifest(&mut m, &store, &gate)?;
            log::info!("gated {} figures, {} multi-chart", s.processed, s.multichart);
        }
    }
    let frag = FragmentClassifier::from_model(load_model(frag)?)?;
    let s = pipeline::dismantle_manifest(&mut m, &store, &frag, &cfg)?;
    m.save(manifest_dir)?;
    print_json(&s)
}

fn cmd_classify(manifest_dir: &Path, codebook: &Path, model: &Path) -> Result<()> {
    let mut m = Manifest::load(manifest_dir)?;
    let store = Manifest::image_store(manifest_dir)?;
    let clf = FigureTypeClassifier::new(load_codebook(codebook)?, load_model(model)?)?;
    let s = pipeline::classify_manifest(&mut m, &store, &clf)?;
    m.save(manifest_dir)?;
    print_json(&s)
}

fn cmd_rank(edges: &Path, alpha: f64, steps: usize, out: &Path) -> Result<()> {
    let pairs = read_edges(BufReader::new(File::open(edges).with_context(|| format!("opening {}", edges.display()))?))?;
    let graph = build_graph(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    let scores = alef_scores(&graph, &AlefParams { alpha, steps })?;
    let mut w = BufWriter::new(File::create(out)?);
    write_scores(&mut w, &scores)?;
    w.flush()?;
    log::info!("{} papers, {} edges, {} self-loops dropped", graph.node_count(), graph.edge_count(), graph.self_loops_dropped());
    Ok(())
}

fn read_confusion(path: &Path) -> Result<ConfusionMatrix> {
    let v: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let cm = v.get("cross_validation").and_then(|r| r.get("confusion")).or_else(|| v.get("confusion")).unwrap_or(&v);
    Ok(serde_json::from_value(cm.clone()).with_context(|| format!("no confusion matrix in {}", path.display()))?)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let m = Manifest::load(&a.manifest)?;
    let scores = load_scores(a.scores.as_deref())?;
    let opts = AnalysisOptions {
        exclude_journals: a.exclude_journals.clone(),
        scheme: a.bin_size.map(|size| BinScheme::FixedCount { size }).unwrap_or_else(BinScheme::half_percentile),
        trials: a.trials,
        seed: a.seed,
        confusion: a.confusion.as_deref().map(read_confusion).transpose()?,
    };
    let report = AnalysisReport::build(&m, &scores, &opts)?;
    report.write(&a.report)?;
    for c in &report.correlations {
        println!("{} {} excluded={:?}: {}", c.label, c.target.as_str(), c.excluded_journals, c.correlation.display());
    }
    Ok(())
}

fn cmd_synth(per_class: usize, seed: u64, out: &Path) -> Result<()> {
    use figmine_core::corpus::{figure_id_of, MetadataFigure, MetadataRecord, PaperRecord};
    let images_dir = out.join("images");
    std::fs::create_dir_all(&images_dir)?;
    let mut labels = BufWriter::new(File::create(out.join("labels.jsonl"))?);
    let mut meta = BufWriter::new(File::create(out.join("metadata.jsonl"))?);
    let mut papers: Vec<MetadataRecord> = Vec::new();
    for (i, (img, label)) in synth::labeled_corpus(per_class, seed).into_iter().enumerate() {
        let name = format!("img{i:05}.png");
        let path = images_dir.join(&name);
        img.to_gray().save(&path)?;
        let Some(figure_id) = figure_id_of(&std::fs::read(&path)?, &name)? else {
            continue;
        };
        if i % 4 == 0 {
            let p = PaperRecord::new(&format!("paper{:05}", i / 4), "Synthetic", 2010 + (i % 6) as i32, 8);
            papers.push(MetadataRecord { paper: p, figures: Vec::new() });
        }
        let rec = papers.last_mut().expect("paper created above");
        rec.figures.push(MetadataFigure { file: name.clone(), caption: Some(format!("synthetic {label}")) });
        serde_json::to_writer(&mut labels, &LabelRow { figure_id, label: label.to_string() })?;
        labels.write_all(b"\n")?;
    }
    for p in &papers {
        serde_json::to_writer(&mut meta, p)?;
        meta.write_all(b"\n")?;
    }
    labels.flush()?;
    meta.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { images, metadata, out } => {
            let (report, _) = ingest(&IngestOptions { image_dir: images, metadata, out_dir: out })?;
            print_json(&report)
        }
        Command::TrainCodebook { manifest, per_image, k, seed, out } => cmd_train_codebook(&manifest, per_image, k, seed, &out),
        Command::Features { manifest, codebook, out } => cmd_features(&manifest, &codebook, &out),
        Command::TrainClassifier(a) => cmd_train_classifier(&a),
        Command::Classify { manifest, codebook, model } => cmd_classify(&manifest, &codebook, &model),
        Command::TrainGate(a) => cmd_train_gate(&a),
        Command::TrainFragment(a) => cmd_train_fragment(&a),
        Command::Gate { manifest, model } => cmd_gate(&manifest, &model),
        Command::Dismantle { manifest, gate, frag, config } => cmd_dismantle(&manifest, gate.as_deref(), &frag, config.as_deref()),
        Command::Rank { edges, alpha, steps, out } => cmd_rank(&edges, alpha, steps, &out),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Serve { manifest, scores, port, host, cors_origins, verification_log } => {
            let config = ServiceConfig {
                manifest_dir: manifest,
                scores,
                verification_log,
                cors_origins,
                addr: SocketAddr::new(host, port),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(figmine_service::serve(config))?;
            Ok(())
        }
        Command::Synth { per_class, seed, out } => cmd_synth(per_class, seed, &out),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sidecar_appends_extension() {
        assert_eq!(sidecar_path(Path::new("out/gate.bin")), PathBuf::from("out/gate.bin.json"));
    }

    #[test]
    fn type_labels_keep_type_order() {
        let rows = vec![
            FeatureRow { figure_id: "a".into(), features: vec![0.0] },
            FeatureRow { figure_id: "b".into(), features: vec![1.0] },
            FeatureRow { figure_id: "c".into(), features: vec![2.0] },
        ];
        let labels = vec![
            LabelRow { figure_id: "a".into(), label: "table".into() },
            LabelRow { figure_id: "b".into(), label: "equation".into() },
        ];
        let d = labeled_dataset(rows.clone(), labels).unwrap();
        assert_eq!(d.classes, figmine_core::figtype::type_classes());
        assert_eq!(d.labels, vec![4, 0]);
        let other = vec![LabelRow { figure_id: "a".into(), label: "yes".into() }, LabelRow { figure_id: "b".into(), label: "no".into() }];
        assert_eq!(labeled_dataset(rows, other).unwrap().classes, vec!["no", "yes"]);
    }
}
