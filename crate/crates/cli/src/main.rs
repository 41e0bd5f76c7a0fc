use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use divergelab::corpus::{load_corpus, perturb, CorpusFormat, PerturbOptions};
use divergelab::estimators::{cluster_suite, string_plugin_suite};
use divergelab::geometry::{hash_embed_corpus, read_embeddings, write_embeddings, ClusterConfig, KMeansConfig};
use divergelab::metaeval::{quality_report, InfinitePolicy, JudgmentTable};
use divergelab::probing::{probe_accuracy, surface_r2, LabeledCorpus, SurfaceFeature};
use divergelab::report::replicate;
use divergelab::{
    ClusterModel, ClusterSuiteConfig, Corpus, DivergenceReport, EmbeddingMatrix, KnConfig, PerturbationKind, Scheme,
    Stopwords, StringSuiteConfig,
};

mod config;
mod selftest;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Core(divergelab::Error),
    Config { field: &'static str, reason: String },
    Usage(String),
    Io(String),
    Parse(String),
    Failed(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Config { field, reason } => write!(f, "invalid {field}: {reason}"),
            CliError::Usage(m) | CliError::Io(m) | CliError::Parse(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<divergelab::Error> for CliError {
    fn from(e: divergelab::Error) -> Self {
        match e {
            divergelab::Error::InvalidConfig { field, reason } => CliError::Config { field, reason },
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    fn to_json(&self) -> serde_json::Value {
        let (kind, field) = match self {
            CliError::Core(e) => (e.kind(), None),
            CliError::Config { field, .. } => ("invalid_config", Some(*field)),
            CliError::Usage(_) => ("usage", None),
            CliError::Io(_) => ("io", None),
            CliError::Parse(_) => ("parse", None),
            CliError::Failed(_) => ("check_failed", None),
        };
        let mut err = json!({ "kind": kind, "message": self.to_string() });
        if let Some(f) = field {
            err["field"] = json!(f);
        }
        json!({ "error": err })
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "divergelab", version, about = "Divergence metrics between a reference and a generated text corpus")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Stopword list (one word per line). Defaults to $DIVERGELAB_DATA, then the built-in list.
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Tuning {
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    s_string: Option<f64>,
    #[arg(long)]
    s_cluster: Option<f64>,
    /// Number of interior mixture weights on the frontier.
    #[arg(long = "L")]
    grid: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long)]
    unigram_discount: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// whitespace | unicode-word
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    variance_target: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    hash_dim: Option<usize>,
    #[arg(long)]
    hash_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    String,
    Cluster,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FeatureArg {
    StopwordPct,
    PunctuationPct,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score a generated corpus against a reference corpus.
    Divergence {
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[arg(long = "gen")]
        generated: Option<PathBuf>,
        /// jsonl | plain-dir
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long, value_enum, default_value = "both")]
        suite: Suite,
        /// EMB1 embeddings of the reference corpus (otherwise hash embeddings are used).
        #[arg(long)]
        ref_emb: Option<PathBuf>,
        #[arg(long)]
        gen_emb: Option<PathBuf>,
        /// Directory receiving `<suite>.json` and `<suite>_curve.csv`.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write a perturbed copy of a corpus as JSONL.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Write deterministic hash embeddings of a corpus in EMB1 format.
    HashEmbed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Cluster-probing accuracy over a grid of K.
    Probe {
        /// Labeled JSONL with id, text and label.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        train_emb: Option<PathBuf>,
        #[arg(long)]
        test_emb: Option<PathBuf>,
        /// Embeddings the clustering is fitted on (defaults to the training embeddings).
        #[arg(long)]
        fit_emb: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// R² of surface features predicted from cluster membership.
    Surface {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        eval: PathBuf,
        #[arg(long, default_value = "jsonl")]
        format: String,
        #[arg(long)]
        fit_emb: Option<PathBuf>,
        #[arg(long)]
        eval_emb: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        feature: FeatureArg,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Correlate metric scores with human scores.
    Metaeval {
        /// CSV with header system_id,human_score,<metric>...
        #[arg(long)]
        judgments: PathBuf,
        /// Fail on infinite metric values instead of excluding them.
        #[arg(long)]
        strict_infinite: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the brute-force oracle checks.
    Selftest,
}

fn resolve(base: &Option<PathBuf>, t: &Tuning) -> CliResult<RunConfig> {
    let mut c = match base {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = t.$f.clone() { c.$f = v; } )* };
    }
    over!(k, alpha, s_string, s_cluster, grid, order, discount, unigram_discount, seeds, variance_target, max_iter, tolerance, hash_dim, hash_seed, k_grid);
    if let Some(s) = &t.scheme {
        c.scheme = s.parse()?;
    }
    c.validate()?;
    Ok(c)
}

fn parse_format(s: &str) -> CliResult<CorpusFormat> {
    s.parse().map_err(CliError::from)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    write_file(path, &s)
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a PathBuf> {
    p.as_ref().ok_or_else(|| CliError::Usage(format!("{flag} is required here")))
}

fn hash_of(corpus: &Corpus, c: &RunConfig) -> CliResult<EmbeddingMatrix> {
    Ok(hash_embed_corpus(&corpus.tokenize(c.scheme), c.hash_dim, c.hash_seed)?)
}

fn embedding_label(c: &RunConfig) -> String {
    format!("hash(dim={},seed={},scheme={})", c.hash_dim, c.hash_seed, c.scheme)
}

fn kn_config(c: &RunConfig) -> KnConfig {
    KnConfig {
        order: c.order,
        discount: c.discount,
        unigram_discount: c.unigram_discount,
        boundaries: true,
    }
}

fn cluster_config(c: &RunConfig, k: usize, seed: u64) -> ClusterConfig {
    ClusterConfig {
        variance_target: c.variance_target,
        kmeans: KMeansConfig {
            k,
            seed,
            max_iter: c.max_iter,
            tolerance: c.tolerance,
        },
    }
}

fn emit_report(out_dir: &Path, name: &str, report: &DivergenceReport) -> CliResult<()> {
    write_file(&out_dir.join(format!("{name}.json")), &report.to_json())?;
    if let Some(curve) = &report.curve {
        write_file(&out_dir.join(format!("{name}_curve.csv")), &curve.to_csv())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_divergence(
    c: &RunConfig,
    reference: &Option<PathBuf>,
    generated: &Option<PathBuf>,
    format: &str,
    suite: Suite,
    ref_emb: &Option<PathBuf>,
    gen_emb: &Option<PathBuf>,
    out_dir: &Path,
) -> CliResult<serde_json::Value> {
    let format = parse_format(format)?;
    let load = |p: &Option<PathBuf>, flag: &str| -> CliResult<Corpus> { Ok(load_corpus(need(p, flag)?, format)?) };
    let mut written = Vec::new();

    if matches!(suite, Suite::String | Suite::Both) {
        let r = load(reference, "--ref")?;
        let g = load(generated, "--gen")?;
        let cfg = StringSuiteConfig {
            kn: kn_config(c),
            s: c.s_string,
            grid: c.grid,
            scheme: c.scheme,
        };
        let report = string_plugin_suite(&r, &g, &cfg)?;
        emit_report(out_dir, "string", &report)?;
        written.push("string");
    }

    if matches!(suite, Suite::Cluster | Suite::Both) {
        let (re, ge, label) = match (ref_emb, gen_emb) {
            (Some(a), Some(b)) => (
                read_embeddings(a)?,
                read_embeddings(b)?,
                format!("emb1({}, {})", a.display(), b.display()),
            ),
            (None, None) => (
                hash_of(&load(reference, "--ref")?, c)?,
                hash_of(&load(generated, "--gen")?, c)?,
                embedding_label(c),
            ),
            _ => return Err(CliError::Usage("--ref-emb and --gen-emb must be given together".into())),
        };
        let base = ClusterSuiteConfig {
            k: c.k,
            alpha: c.alpha,
            s: c.s_cluster,
            grid: c.grid,
            variance_target: c.variance_target,
            max_iter: c.max_iter,
            tolerance: c.tolerance,
            seed: 0,
        };
        let mut report = replicate(&c.seeds, |seed| cluster_suite(&re, &ge, &ClusterSuiteConfig { seed, ..base }))?;
        report.config.embedding = Some(label);
        emit_report(out_dir, "cluster", &report)?;
        written.push("cluster");
    }

    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(&out_dir.join("run_log.json"), &json!({ "unix_time": stamp, "config": c, "reports": written }))?;
    Ok(json!({ "out_dir": out_dir, "reports": written }))
}

fn stopwords(path: &Option<PathBuf>) -> CliResult<Stopwords> {
    Ok(Stopwords::resolve(path.as_deref())?)
}

fn labeled_embeddings(corpus: &LabeledCorpus, emb: &Option<PathBuf>, c: &RunConfig) -> CliResult<EmbeddingMatrix> {
    let m = match emb {
        Some(p) => read_embeddings(p)?,
        None => hash_of(&corpus.corpus, c)?,
    };
    if m.rows() != corpus.labels.len() {
        return Err(CliError::Core(divergelab::Error::Validation(format!(
            "{} embedding rows for {} labeled documents",
            m.rows(),
            corpus.labels.len()
        ))));
    }
    Ok(m)
}

#[allow(clippy::too_many_arguments)]
fn cmd_probe(
    c: &RunConfig,
    train: &Path,
    test: &Path,
    train_emb: &Option<PathBuf>,
    test_emb: &Option<PathBuf>,
    fit_emb: &Option<PathBuf>,
    out: &Path,
) -> CliResult<serde_json::Value> {
    let train = LabeledCorpus::load_jsonl(train)?;
    let test = LabeledCorpus::load_jsonl(test)?;
    let tr = labeled_embeddings(&train, train_emb, c)?;
    let te = labeled_embeddings(&test, test_emb, c)?;
    let fit = match fit_emb {
        Some(p) => read_embeddings(p)?,
        None => tr.clone(),
    };
    let mut results = Vec::new();
    for &k in &c.k_grid {
        for &seed in &c.seeds {
            let k_eff = k.min(fit.rows());
            let model = ClusterModel::fit(&fit, &cluster_config(c, k_eff, seed))?;
            let r = probe_accuracy(&tr, &train.labels, &te, &test.labels, &model)?;
            results.push(json!({ "K": k, "K_effective": k_eff, "seed": seed, "result": r }));
        }
    }
    let doc = json!({ "schema": "probe/1", "config": c, "results": results });
    write_json(out, &doc)?;
    Ok(json!({ "out": out, "rows": results.len() }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_surface(
    c: &RunConfig,
    sw: &Stopwords,
    fit: &Path,
    eval: &Path,
    format: &str,
    fit_emb: &Option<PathBuf>,
    eval_emb: &Option<PathBuf>,
    feature: FeatureArg,
    out: &Path,
) -> CliResult<serde_json::Value> {
    let format = parse_format(format)?;
    let fit_c = load_corpus(fit, format)?;
    let eval_c = load_corpus(eval, format)?;
    let fe = match fit_emb {
        Some(p) => read_embeddings(p)?,
        None => hash_of(&fit_c, c)?,
    };
    let ee = match eval_emb {
        Some(p) => read_embeddings(p)?,
        None => hash_of(&eval_c, c)?,
    };
    let fd = fit_c.tokenize(c.scheme);
    let ed = eval_c.tokenize(c.scheme);
    let features: Vec<(&str, SurfaceFeature)> = match feature {
        FeatureArg::StopwordPct => vec![("stopword_pct", SurfaceFeature::StopwordPct)],
        FeatureArg::PunctuationPct => vec![("punctuation_pct", SurfaceFeature::PunctuationPct)],
        FeatureArg::Both => vec![
            ("stopword_pct", SurfaceFeature::StopwordPct),
            ("punctuation_pct", SurfaceFeature::PunctuationPct),
        ],
    };
    let mut results = Vec::new();
    for &k in &c.k_grid {
        for &seed in &c.seeds {
            let k_eff = k.min(fe.rows());
            let model = ClusterModel::fit(&fe, &cluster_config(c, k_eff, seed))?;
            for (name, f) in &features {
                let r2 = surface_r2(&fe, &fd, &ee, &ed, &model, *f, sw)?;
                results.push(json!({ "K": k, "K_effective": k_eff, "seed": seed, "feature": name, "r2": r2 }));
            }
        }
    }
    let doc = json!({ "schema": "surface/1", "config": c, "results": results });
    write_json(out, &doc)?;
    Ok(json!({ "out": out, "rows": results.len() }))
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    match &cli.command {
        Command::Divergence {
            reference,
            generated,
            format,
            suite,
            ref_emb,
            gen_emb,
            out_dir,
            tuning,
        } => {
            let c = resolve(&cli.config, tuning)?;
            cmd_divergence(&c, reference, generated, format, *suite, ref_emb, gen_emb, out_dir)
        }
        Command::Perturb {
            input,
            format,
            kind,
            seed,
            out,
            scheme,
        } => {
            let kind: PerturbationKind = kind.parse()?;
            let scheme: Scheme = match scheme {
                Some(s) => s.parse()?,
                None => resolve(&cli.config, &Tuning::default())?.scheme,
            };
            let corpus = load_corpus(input, parse_format(format)?)?;
            let opts = PerturbOptions {
                scheme,
                stopwords: stopwords(&cli.stopwords)?,
            };
            let perturbed = perturb(&corpus, kind, *seed, &opts)?;
            perturbed.write_jsonl(out)?;
            Ok(json!({ "out": out, "documents": perturbed.len(), "kind": kind.name() }))
        }
        Command::HashEmbed {
            input,
            format,
            out,
            tuning,
        } => {
            let c = resolve(&cli.config, tuning)?;
            let corpus = load_corpus(input, parse_format(format)?)?;
            let emb = hash_of(&corpus, &c)?;
            write_embeddings(&emb, out)?;
            Ok(json!({ "out": out, "rows": emb.rows(), "dim": emb.dim() }))
        }
        Command::Probe {
            train,
            test,
            train_emb,
            test_emb,
            fit_emb,
            out,
            tuning,
        } => {
            let c = resolve(&cli.config, tuning)?;
            cmd_probe(&c, train, test, train_emb, test_emb, fit_emb, out)
        }
        Command::Surface {
            fit,
            eval,
            format,
            fit_emb,
            eval_emb,
            feature,
            out,
            tuning,
        } => {
            let c = resolve(&cli.config, tuning)?;
            let sw = stopwords(&cli.stopwords)?;
            cmd_surface(&c, &sw, fit, eval, format, fit_emb, eval_emb, *feature, out)
        }
        Command::Metaeval {
            judgments,
            strict_infinite,
            out,
        } => {
            let policy = if *strict_infinite {
                InfinitePolicy::Reject
            } else {
                InfinitePolicy::Exclude
            };
            let table = JudgmentTable::from_csv(judgments, policy)?;
            let report = quality_report(&table);
            write_json(out, &report)?;
            Ok(json!({ "out": out, "metrics": report.metrics.len() }))
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            for c in &checks {
                println!("{}", serde_json::to_string(c).expect("serializable"));
            }
            if failed.is_empty() {
                Ok(json!({ "checks": checks.len(), "failed": 0 }))
            } else {
                Err(CliError::Failed(format!("failed checks: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
