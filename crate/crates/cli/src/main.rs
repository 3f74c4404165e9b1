use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use stegogeom::devsim::{self, build_universe, decode_coefficients, decompress, encode_coefficients, SourceManifest};
use stegogeom::features::{extract_dctr, read_csv, read_matrix, write_matrix, FeatureMatrix};
use stegogeom::harness::artifacts::{strip_csv_stamp, Artifacts, Stamped};
use stegogeom::harness::curves::quantile_curves;
use stegogeom::harness::{experiment, report, thread_pool, ExperimentConfig};
use stegogeom::metrics::{energy_mmd, l2_cg, nscd_value, MetricKind};
use stegogeom::optimize::{anneal, NscdObjective};
use stegogeom::select::{self, Candidate, StrategyKind};
use stegogeom::stegodet::{self, CostModel};
use stegogeom::subspace::pca_subspace;
use stegogeom::{seeds, Error, Result, SourceId};

#[derive(Parser)]
#[command(name = "stegogeom", version, about = "Training-source relevance for steganalysis under cover-source mismatch")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; falls back to STEGOGEOM_THREADS, then one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write one manifest per grid combination.
    GenUniverse,
    /// Develop the raw inputs of one source into coefficient images.
    Develop {
        #[arg(long)]
        source: u32,
        /// Number of images; defaults to the training split size.
        #[arg(long)]
        count: Option<usize>,
        /// Index of the first image in the source manifest.
        #[arg(long, default_value_t = 0)]
        offset: usize,
        /// Also write 8-bit PGM previews.
        #[arg(long)]
        pgm: bool,
    },
    /// Embed into one coefficient image.
    Embed {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        payload: Option<f64>,
        #[arg(long, value_enum)]
        cost_model: Option<CostArg>,
    },
    /// Extract features from coefficient images into a feature matrix.
    Features {
        /// Coefficient files or directories of them.
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a cover/stego detector.
    Train {
        #[arg(long)]
        covers: PathBuf,
        #[arg(long)]
        stegos: PathBuf,
        #[arg(long, default_value_t = 0)]
        source_id: u32,
    },
    /// Build the universe and its regret matrix.
    RegretMatrix,
    /// Distances between a source and a target feature set.
    Metrics {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Sliding-window regret quantiles from a `metric,regret` CSV.
    Quantiles {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Choose a training source for an operational target.
    Select {
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// `id=path`, where path is a feature matrix or a directory of coefficient images.
        #[arg(long = "candidate", num_args = 1.., required = true)]
        candidates: Vec<String>,
        #[arg(long)]
        target: PathBuf,
    },
    /// Anneal development parameters toward a target.
    Optimize {
        /// Source whose parameters start the search; mid-range parameters otherwise.
        #[arg(long)]
        start_source: Option<u32>,
        #[arg(long)]
        target: PathBuf,
    },
    /// Verify an output directory and print its summary.
    Report,
    /// Run the whole experiment.
    Run {
        /// Skip writing per-source feature matrices.
        #[arg(long)]
        no_features: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Uniform,
    BlockEnergy,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    MinNscd,
    MinMmd,
    MinL2cg,
    MajorityVote,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut c = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn read_file(p: &Path) -> Result<Vec<u8>> {
    std::fs::read(p).map_err(|e| Error::Io { path: p.into(), source: e })
}

fn write_file(p: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(p, bytes).map_err(|e| Error::Io { path: p.into(), source: e })
}

fn coefficient_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let rd = std::fs::read_dir(p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            let mut v: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "sgcf"))
                .collect();
            v.sort();
            files.extend(v);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Error::EmptySet("coefficient images"));
    }
    Ok(files)
}

fn features_of(config: &ExperimentConfig, inputs: &[PathBuf]) -> Result<FeatureMatrix> {
    use rayon::prelude::*;
    let files = coefficient_files(inputs)?;
    let dctr = config.dctr();
    let rows = files
        .par_iter()
        .map(|f| extract_dctr(&decompress(&decode_coefficients(&read_file(f)?)?), &dctr))
        .collect::<Result<Vec<_>>>()?;
    let ids = files.iter().map(|f| f.file_stem().unwrap_or_default().to_string_lossy().into_owned()).collect();
    FeatureMatrix::from_vectors(rows, ids)
}

/// A feature matrix file, or coefficient images to extract on the fly.
fn load_features(config: &ExperimentConfig, p: &Path) -> Result<FeatureMatrix> {
    if p.is_dir() || p.extension().is_some_and(|x| x == "sgcf") {
        features_of(config, &[p.to_path_buf()])
    } else if p.extension().is_some_and(|x| x == "csv") {
        read_csv(p)
    } else {
        read_matrix(p)
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn run(cli: Cli, common: &Common) -> Result<()> {
    let config = load_config(common)?;
    let out = &common.out;
    match cli.command {
        Command::GenUniverse => {
            let mut a = Artifacts::create(out, config.provenance())?;
            let n = config.n_train + config.n_eval + config.n_operational;
            let manifests = build_universe(&config.grid, n, config.seed)?;
            for m in &manifests {
                a.json(&format!("manifests/source_{:04}.json", m.source_id.0), m)?;
            }
            a.json("reports/config.json", &config)?;
            a.stage_done("manifests")?;
            println!("{} manifests written to {}", manifests.len(), out.join("manifests").display());
        }
        Command::Develop { source, count, offset, pgm } => {
            let n = config.n_train + config.n_eval + config.n_operational;
            let manifests = build_universe(&config.grid, n, config.seed)?;
            let m: &SourceManifest = manifests
                .iter()
                .find(|m| m.source_id == SourceId(source))
                .ok_or_else(|| Error::InvalidParameter(format!("no source {source} in a grid of {}", manifests.len())))?;
            let offset = offset.min(m.image_ids.len());
            let count = count.unwrap_or(config.n_train).min(m.image_ids.len() - offset);
            let dir = out.join(format!("images/source_{source:04}"));
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            for (i, &raw_seed) in m.image_ids[offset..offset + count].iter().enumerate() {
                let raw = devsim::synth_raw(raw_seed, config.raw_size)?;
                let dev = devsim::develop(&raw, &m.params)?;
                write_file(&dir.join(format!("{i:04}.sgcf")), &encode_coefficients(&dev.coefficients))?;
                if pgm {
                    write_file(&dir.join(format!("{i:04}.pgm")), &dev.image.to_pgm())?;
                }
            }
            let mut a = Artifacts::create(out, config.provenance())?;
            a.json(&format!("images/source_{source:04}.json"), m)?;
            println!("{count} images written to {}", dir.display());
        }
        Command::Embed { input, output, payload, cost_model } => {
            let cover = decode_coefficients(&read_file(&input)?)?;
            let mut e = config.embed.clone();
            if let Some(p) = payload {
                e.payload = p;
            }
            if let Some(c) = cost_model {
                e.cost_model = match c {
                    CostArg::Uniform => CostModel::Uniform,
                    CostArg::BlockEnergy => CostModel::BlockEnergy,
                };
            }
            let e = e.with_seed(seeds::derive(config.seed, &[seeds::tag::EMBED, e.seed]));
            let o = stegodet::embed(&cover, &e)?;
            write_file(&output, &encode_coefficients(&o.stego))?;
            print_json(&json!({
                "lambda": o.lambda,
                "entropy_bits": o.entropy_bits,
                "target_bits": o.target_bits,
                "changes": o.changes,
            }));
        }
        Command::Features { input, output } => {
            let f = features_of(&config, &input)?;
            write_matrix(&f, &output)?;
            println!("{} x {} features written to {}", f.n(), f.d(), output.display());
        }
        Command::Train { covers, stegos, source_id } => {
            let c = load_features(&config, &covers)?;
            let s = load_features(&config, &stegos)?;
            let (det, diag) = stegodet::train_detector(&c, &s, &config.detector, SourceId(source_id))?;
            std::fs::create_dir_all(out.join("detectors")).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            let stem = out.join(format!("detectors/source_{source_id:04}"));
            stegodet::write_detector(&det, &stem, Some(&config.provenance()))?;
            print_json(&json!({
                "detector": stem.with_extension("json"),
                "threshold": det.threshold,
                "iterations": diag.loss_trace.len(),
                "final_grad_norm": diag.final_grad_norm,
                "low_confidence": diag.low_confidence,
            }));
        }
        Command::RegretMatrix => {
            let mut a = Artifacts::create(out, config.provenance())?;
            a.json("reports/config.json", &config)?;
            let u = experiment::build(&config, &mut a, false)?;
            print_json(&json!({
                "sources": u.regret.len(),
                "max_asymmetry": u.regret.max_asymmetry(),
                "file": out.join("matrices/regret.csv"),
            }));
        }
        Command::Metrics { source, target } => {
            let s = load_features(&config, &source)?;
            let t = load_features(&config, &target)?;
            let ss = pca_subspace(&s, config.variance_threshold)?;
            let ts = pca_subspace(&t, config.variance_threshold)?;
            let v = json!({
                MetricKind::L2Cg.as_str(): l2_cg(&s, &t)?.value,
                MetricKind::EnergyMmd.as_str(): energy_mmd(&s, &t)?.value,
                MetricKind::Nscd.as_str(): nscd_value(&ss, &ts)?.value,
                "source_dim": ss.dim(),
                "target_dim": ts.dim(),
            });
            print_json(&v);
        }
        Command::Quantiles { input, window, output } => {
            let text = String::from_utf8_lossy(&read_file(&input)?).into_owned();
            let mut rd = csv::Reader::from_reader(strip_csv_stamp(&text).as_bytes());
            let (mut m, mut r) = (Vec::new(), Vec::new());
            for rec in rd.records() {
                let rec = rec?;
                let parse = |i: usize| -> Result<f64> {
                    rec.get(i)
                        .and_then(|v| v.trim().parse().ok())
                        .ok_or_else(|| Error::InvalidParameter(format!("bad metric,regret row {:?}", rec)))
                };
                m.push(parse(0)?);
                r.push(parse(1)?);
            }
            let curve = quantile_curves(&m, &r, window.unwrap_or(config.window))?;
            let body = curve.to_csv()?;
            match output {
                Some(p) => write_file(&p, &body)?,
                None => print!("{}", String::from_utf8_lossy(&body)),
            }
        }
        Command::Select { strategy, candidates, target } => {
            let t = load_features(&config, &target)?;
            let mut loaded = Vec::new();
            for c in &candidates {
                let (id, path) = c
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("candidate {c:?} is not of the form id=path")))?;
                let id: u32 = id.parse().map_err(|_| Error::Config(format!("candidate id {id:?} is not an integer")))?;
                let f = load_features(&config, Path::new(path))?;
                let sub = pca_subspace(&f, config.variance_threshold)?;
                loaded.push((SourceId(id), f, sub));
            }
            let chosen = match strategy {
                StrategyArg::MajorityVote => {
                    let refs: Vec<(SourceId, &FeatureMatrix)> = loaded.iter().map(|(i, f, _)| (*i, f)).collect();
                    let clf = select::train_source_classifier(&refs, &config.detector)?;
                    select::majority_vote(&clf, &t, None)?
                }
                other => {
                    let kind = match other {
                        StrategyArg::MinNscd => MetricKind::Nscd,
                        StrategyArg::MinMmd => MetricKind::EnergyMmd,
                        _ => MetricKind::L2Cg,
                    };
                    let cands: Vec<Candidate<'_>> =
                        loaded.iter().map(|(id, f, s)| Candidate { id: *id, features: f, subspace: Some(s) }).collect();
                    select::select_min_metric(&cands, &t, kind)?
                }
            };
            let id = chosen.single().expect("single-source strategy");
            println!("{id}");
            let mut a = Artifacts::create(out, config.provenance())?;
            a.json(
                "reports/selection.json",
                &json!({ "strategy": StrategyKind::from(strategy).as_str(), "chosen": id, "scores": chosen.candidate_scores }),
            )?;
        }
        Command::Optimize { start_source, target } => {
            let campaign = config.anneal.clone().unwrap_or_default();
            let n = config.n_train + config.n_eval + config.n_operational;
            let manifests = build_universe(&config.grid, n, config.seed)?;
            let start = match start_source {
                Some(id) => {
                    manifests
                        .iter()
                        .find(|m| m.source_id == SourceId(id))
                        .ok_or_else(|| Error::InvalidParameter(format!("no source {id}")))?
                        .params
                }
                None => campaign.bounds.midpoint(&manifests[0].params),
            };
            let t = load_features(&config, &target)?;
            let ts = pca_subspace(&t, config.variance_threshold)?;
            let pool = stegogeom::harness::data::fresh_raw_seeds(&config, u64::MAX, campaign.pool_size)
                .iter()
                .map(|&s| devsim::synth_raw(s, config.raw_size))
                .collect::<Result<Vec<_>>>()?;
            let objective = NscdObjective::new(
                &ts,
                &pool,
                campaign.config.batch_size,
                seeds::derive(config.seed, &[seeds::tag::ANNEAL]),
                config.dctr(),
                campaign.bounds.clone(),
            )?
            .with_variance_threshold(config.variance_threshold);
            let trace = anneal(&start, &objective, &campaign.bounds, &campaign.config)?;
            let mut a = Artifacts::create(out, config.provenance())?;
            a.csv("curves/anneal.csv", &trace.to_csv()?)?;
            print_json(&json!({
                "start_nscd": trace.records[0].nscd,
                "best_nscd": trace.best_nscd,
                "best_params": trace.best_params,
                "trace": out.join("curves/anneal.csv"),
            }));
        }
        Command::Report => {
            let config = match &common.config {
                Some(_) => config,
                None => {
                    let p = out.join("reports/config.json");
                    let text = std::fs::read_to_string(&p)
                        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", p.display())))?;
                    let s: Stamped<ExperimentConfig> = serde_json::from_str(&text)
                        .map_err(|e| Error::Config(format!("invalid config file {}: {e}", p.display())))?;
                    s.data
                }
            };
            let r = report::audit(out, &config)?;
            println!("config_hash {} seed {}", r.provenance.config_hash, r.provenance.seed);
            println!("{} artifacts verified; stages: {}", r.files_checked, r.completed_stages.join(", "));
            print!("{}", String::from_utf8_lossy(&stegogeom::harness::summary::summary_csv(&r.summary)?));
        }
        Command::Run { no_features } => {
            let o = experiment::run_with_options(&config, out, !no_features)?;
            print!("{}", String::from_utf8_lossy(&stegogeom::harness::summary::summary_csv(&o.summary)?));
        }
    }
    Ok(())
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::MinNscd => StrategyKind::MinNscd,
            StrategyArg::MinMmd => StrategyKind::MinMmd,
            StrategyArg::MinL2cg => StrategyKind::MinL2cg,
            StrategyArg::MajorityVote => StrategyKind::MajorityVote,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let common = cli.common.clone();
    let pool = match thread_pool(common.threads) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(cli, &common)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
