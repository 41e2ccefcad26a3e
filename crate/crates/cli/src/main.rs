use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use kgmono::capacity::{compute_capacities, CapacityError};
use kgmono::datalog::{parse_program, parse_rule_unchecked, Dataset, Program, Signature};
use kgmono::encoder::encode;
use kgmono::extraction::{
    equivalent_program, full_flat_rules, mine_rules, mine_sound_rules, ExtractionError, PublishedRules, TreeBudget,
    TreeMode, TreeSpace, DEFAULT_SPACE_CAP,
};
use kgmono::gnn::{AggBudget, MessageDirection};
use kgmono::kgdata::{add_dummy_unary, inject_rules, load_split, load_triples, triples_to_string, Split};
use kgmono::rng::sha256_hex;
use kgmono::scoring::ScoringKind;
use kgmono::soundness::{Checker, Verdict};
use kgmono::training::{evaluate, random_model, select_threshold, train, InitSpec, Metrics, TrainConfig};
use kgmono::transform::Model;

#[derive(Parser)]
#[command(name = "kgmono", version, about = "Monotonic max-sum GNNs and sound Datalog rule extraction")]
struct Cli {
    /// Write the run manifest here instead of stderr.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a split directory.
    Train(TrainArgs),
    /// Metrics of a model on a split.
    Eval(EvalArgs),
    /// Soundness verdicts for every rule in a file.
    CheckRule(CheckArgs),
    /// Mine the sound rules of a rule space.
    Extract(ExtractArgs),
    /// Tree-like program equivalent to the model.
    EquivProgram(EquivArgs),
    /// Capacity report.
    Capacity(ModelArgs),
    /// Close a dataset under a program.
    Inject(InjectArgs),
    /// Print the coloured graph of a dataset.
    EncodeDump(DumpArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize, Debug)]
#[serde(rename_all = "lowercase")]
enum AggDirection {
    /// Aggregate along edges: v reads u for every edge (u, v).
    In,
    /// Aggregate against edges: v reads u for every edge (v, u).
    Out,
}

impl From<AggDirection> for MessageDirection {
    fn from(d: AggDirection) -> Self {
        match d {
            AggDirection::In => MessageDirection::AlongEdges,
            AggDirection::Out => MessageDirection::AgainstEdges,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize, Debug)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Rescal,
    Distmult,
    Tucker,
    Nam,
}

impl From<Kind> for ScoringKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Rescal => ScoringKind::Rescal,
            Kind::Distmult => ScoringKind::Distmult,
            Kind::Tucker => ScoringKind::Tucker,
            Kind::Nam => ScoringKind::Nam,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON settings file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// `max`, `sum` or a natural number k.
    #[arg(long)]
    agg: Option<String>,
    #[arg(long, value_enum)]
    scoring: Option<Kind>,
    #[arg(long, value_enum)]
    agg_direction: Option<AggDirection>,
    #[arg(long)]
    no_clamp: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    positive_weight: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    /// Write metrics here as well as to stdout.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

/// Everything `train` needs besides the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainSettings {
    seed: u64,
    epochs: usize,
    dims: Vec<usize>,
    agg: String,
    scoring: Kind,
    agg_direction: AggDirection,
    clamp: bool,
    learning_rate: f64,
    weight_decay: f64,
    positive_weight: Option<f64>,
    negatives_per_positive: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            seed: 0,
            epochs: 100,
            dims: vec![16, 16],
            agg: "max".into(),
            scoring: Kind::Rescal,
            agg_direction: AggDirection::In,
            clamp: true,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            positive_weight: None,
            negatives_per_positive: 10,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: Part,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    Valid,
    Test,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Check every partition even for max GNNs.
    #[arg(long)]
    exhaustive: bool,
}

#[derive(Clone, Copy, ValueEnum, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Space {
    Flat1,
    Flat2,
    Treelike,
}

#[derive(Clone, Copy, ValueEnum, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Convention {
    Published,
    Full,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    space: Space,
    #[arg(long, value_enum, default_value = "published")]
    convention: Convention,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    o: usize,
    #[arg(long)]
    inequalities: bool,
    #[arg(long, default_value_t = DEFAULT_SPACE_CAP)]
    cap: u64,
    /// Check every rule instead of skipping rules subsumed by mined ones.
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SPACE_CAP)]
    cap: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InjectArgs {
    /// Triple file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes and their exit codes.
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Infeasible(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Infeasible(e) => e,
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

fn extraction_failure(e: ExtractionError) -> Failure {
    match e {
        ExtractionError::SpaceTooLarge { .. } | ExtractionError::NotBilinear(_) => Failure::Infeasible(e.into()),
        ExtractionError::Capacity(CapacityError::Infeasible(_)) => Failure::Infeasible(e.into()),
        e => Failure::Data(e.into()),
    }
}

#[derive(Debug, Serialize)]
struct RunManifest {
    command: String,
    config: Value,
    seeds: BTreeMap<String, u64>,
    model_hash: Option<String>,
    input_hashes: BTreeMap<String, String>,
    timings_ms: BTreeMap<String, f64>,
}

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.into(),
            config: Value::Null,
            seeds: BTreeMap::new(),
            model_hash: None,
            input_hashes: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    fn hash_input(&mut self, path: &Path) -> Result<(), Failure> {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(path)
                .with_context(|| path.display().to_string())?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            for p in entries {
                self.hash_input(&p)?;
            }
        } else {
            let bytes = fs::read(path).with_context(|| path.display().to_string())?;
            self.input_hashes.insert(path.display().to_string(), sha256_hex(&bytes));
        }
        Ok(())
    }

    fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms.insert(label.into(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| p.display().to_string())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<Model, Failure> {
    manifest.hash_input(path)?;
    let m = Model::load(path)?;
    manifest.model_hash = Some(m.hash());
    Ok(m)
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build().map_err(|e| Failure::Usage(e.into()))
}

fn parse_agg(s: &str) -> Result<AggBudget, Failure> {
    match s {
        "max" => Ok(AggBudget::MAX),
        "sum" | "inf" => Ok(AggBudget::SUM),
        k => k
            .parse::<u64>()
            .map(AggBudget::Finite)
            .map_err(|_| Failure::Usage(anyhow!("--agg expects max, sum or a natural number, got {k:?}"))),
    }
}

/// Split with the dummy unary predicate added and negatives filled.
fn prepare_split(dir: &Path, seed: u64, negatives: usize) -> Result<(Split, Option<usize>), Failure> {
    let mut split = load_split(dir)?;
    let (train, sig) = add_dummy_unary(&split.train, &split.signature);
    split.train = train;
    split.signature = sig;
    split.fill_negatives(negatives, seed);
    let universal = if split.signature.unary.len() == 1 { Some(0) } else { None };
    Ok((split, universal))
}

fn metrics_json(m: &Metrics) -> String {
    serde_json::to_string_pretty(m).expect("metrics serialise") + "\n"
}

fn cmd_train(a: TrainArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    let mut s: TrainSettings = match &a.config {
        Some(p) => {
            manifest.hash_input(p)?;
            let text = fs::read_to_string(p).with_context(|| p.display().to_string())?;
            serde_json::from_str(&text).with_context(|| p.display().to_string())?
        }
        None => TrainSettings::default(),
    };
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.epochs {
        s.epochs = v;
    }
    if let Some(v) = a.dims {
        s.dims = v;
    }
    if let Some(v) = a.agg {
        s.agg = v;
    }
    if let Some(v) = a.scoring {
        s.scoring = v;
    }
    if let Some(v) = a.agg_direction {
        s.agg_direction = v;
    }
    if a.no_clamp {
        s.clamp = false;
    }
    if let Some(v) = a.lr {
        s.learning_rate = v;
    }
    if let Some(v) = a.weight_decay {
        s.weight_decay = v;
    }
    if a.positive_weight.is_some() {
        s.positive_weight = a.positive_weight;
    }
    if let Some(v) = a.negatives {
        s.negatives_per_positive = v;
    }
    if s.dims.is_empty() || s.dims.contains(&0) {
        return Err(Failure::Usage(anyhow!("--dims needs at least one positive width")));
    }
    let budget = parse_agg(&s.agg)?;
    manifest.config = serde_json::to_value(&s)?;
    manifest.seeds.insert("seed".into(), s.seed);
    manifest.hash_input(&a.data_dir)?;

    let (split, universal) = prepare_split(&a.data_dir, s.seed, s.negatives_per_positive)?;
    let spec = InitSpec {
        dims: s.dims.clone(),
        budgets: vec![budget; s.dims.len()],
        direction: s.agg_direction.into(),
        scoring: s.scoring.into(),
        nonnegative: s.clamp,
        universal_unary: universal,
    };
    let init = random_model(&split.signature, &spec, s.seed)?;
    let mut cfg = TrainConfig::new(s.epochs, s.clamp, s.seed);
    cfg.learning_rate = s.learning_rate;
    cfg.weight_decay = s.weight_decay;
    cfg.negatives_per_positive = s.negatives_per_positive;
    if let Some(pw) = s.positive_weight {
        cfg.positive_loss_weight = pw;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
    let out = manifest.time("train", || {
        train(init, &split.train, &cfg, &mut |r, _| {
            eprintln!("epoch {} loss {:.6} time_ms {:.1}", r.epoch + 1, r.loss, r.elapsed.as_secs_f64() * 1e3);
        })
    })?;
    let mut model = out.model;
    model.scoring.threshold = select_threshold(&model, &split.train, &split.valid_positives, &split.valid_negatives)?;
    let mut metrics = evaluate(&model, &split.train, &split.test_positives, &split.test_negatives)?;
    metrics.final_epoch_loss = out.losses.last().copied();
    model.save(&a.out)?;
    manifest.model_hash = Some(model.hash());
    let text = metrics_json(&metrics);
    if let Some(p) = &a.metrics_out {
        fs::write(p, &text).with_context(|| p.display().to_string())?;
    }
    write_output(None, &text)
}

fn cmd_eval(a: EvalArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    let model = load_model(&a.model, manifest)?;
    manifest.hash_input(&a.data_dir)?;
    manifest.seeds.insert("seed".into(), a.seed);
    let (split, _) = prepare_split(&a.data_dir, a.seed, 10)?;
    let (pos, neg) = match a.split {
        Part::Valid => (&split.valid_positives, &split.valid_negatives),
        Part::Test => (&split.test_positives, &split.test_negatives),
    };
    let metrics = manifest.time("eval", || evaluate(&model, &split.train, pos, neg))?;
    write_output(None, &metrics_json(&metrics))
}

fn load_rules(path: &Path, sig: &Signature, manifest: &mut RunManifest) -> Result<Program, Failure> {
    manifest.hash_input(path)?;
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(parse_program(&text, sig).with_context(|| path.display().to_string())?)
}

fn verdict_record(rule: &str, v: &Verdict) -> Value {
    match v {
        Verdict::Sound => json!({"rule": rule, "verdict": "sound"}),
        Verdict::Unsound { witness, score } => json!({
            "rule": rule,
            "verdict": "unsound",
            "score": score,
            "witness": {
                "substitution": witness.substitution.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<BTreeMap<_, _>>(),
                "dataset": witness.dataset.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                "head": witness.head.to_string(),
            }
        }),
    }
}

fn cmd_check(a: CheckArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    let model = load_model(&a.model, manifest)?;
    let program = load_rules(&a.rules, &model.signature, manifest)?;
    manifest.config = json!({"workers": a.workers, "exhaustive": a.exhaustive});
    let mut checker = Checker::new(&model)?;
    if a.exhaustive {
        checker = checker.exhaustive();
    }
    let pool = thread_pool(a.workers)?;
    let verdicts = manifest.time("check", || {
        pool.install(|| {
            use rayon::prelude::*;
            program.rules.par_iter().map(|r| checker.check(r)).collect::<Result<Vec<_>, _>>()
        })
    })?;
    let mut text = String::new();
    for (r, v) in program.rules.iter().zip(&verdicts) {
        text += &serde_json::to_string(&verdict_record(&r.to_string(), v))?;
        text.push('\n');
    }
    write_output(None, &text)
}

fn cmd_extract(a: ExtractArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    let model = load_model(&a.model, manifest)?;
    manifest.config = json!({
        "space": a.space, "convention": a.convention, "p": a.p, "o": a.o,
        "inequalities": a.inequalities, "cap": a.cap, "prune": !a.no_prune, "workers": a.workers,
    });
    let checker = Checker::new(&model)?;
    let sig = &model.signature;
    let pool = thread_pool(a.workers)?;
    let prune = !a.no_prune;
    let too_large = |size: u64| Failure::Infeasible(ExtractionError::SpaceTooLarge { size, cap: a.cap }.into());
    let (result, desc) = match a.space {
        Space::Flat1 | Space::Flat2 => {
            let atoms = if matches!(a.space, Space::Flat1) { 1 } else { 2 };
            match a.convention {
                Convention::Published => {
                    let stream = PublishedRules::new(sig, atoms);
                    let size = stream.len();
                    if size > a.cap {
                        return Err(too_large(size));
                    }
                    let rules: Vec<_> = stream.collect();
                    let r = manifest.time("extract", || pool.install(|| mine_rules(&checker, &rules, prune)));
                    (r.map_err(extraction_failure)?, format!("flat{atoms} published size={size}"))
                }
                Convention::Full => {
                    let rules = full_flat_rules(sig, atoms, model.universal_unary);
                    if rules.len() as u64 > a.cap {
                        return Err(too_large(rules.len() as u64));
                    }
                    let r = manifest.time("extract", || pool.install(|| mine_rules(&checker, &rules, prune)));
                    (r.map_err(extraction_failure)?, format!("flat{atoms} full size={}", rules.len()))
                }
            }
        }
        Space::Treelike => {
            let budget = TreeBudget { p: a.p, o: a.o, allow_inequalities: a.inequalities };
            let space = TreeSpace::new(budget, sig, model.universal_unary, model.gnn.direction, TreeMode::Full, a.cap)
                .map_err(extraction_failure)?;
            let r = manifest.time("extract", || {
                pool.install(|| mine_sound_rules(&checker, space.len(), &|i| space.rule(i, sig), prune))
            });
            (r.map_err(extraction_failure)?, format!("treelike {budget} size={}", space.len()))
        }
    };
    let header = result.header(&model.hash(), &desc.replace(' ', ","));
    write_output(a.out.as_deref(), &format!("{header}\n{}", result.program))
}

fn cmd_equiv(a: EquivArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    let model = load_model(&a.model, manifest)?;
    manifest.config = json!({"cap": a.cap, "workers": a.workers});
    let pool = thread_pool(a.workers)?;
    let eq =
        manifest.time("equiv", || pool.install(|| equivalent_program(&model, a.cap))).map_err(extraction_failure)?;
    let header = eq.mining.header(&model.hash(), &eq.space_description().replace(' ', ","));
    write_output(a.out.as_deref(), &format!("{header}\n{}", eq.program))
}

fn cmd_capacity(a: ModelArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    let model = load_model(&a.model, manifest)?;
    let view = model.scoring.to_bilinear().map_err(|_| {
        Failure::Infeasible(anyhow!(
            "capacity needs a bilinear scoring function; {} is not bilinear",
            model.scoring.kind()
        ))
    })?;
    let caps =
        manifest.time("capacity", || compute_capacities(&model.gnn, &view, model.scoring.threshold)).map_err(|e| {
            match e {
                CapacityError::Infeasible(_) => Failure::Infeasible(e.into()),
                e => Failure::Data(e.into()),
            }
        })?;
    for w in &caps.warnings {
        eprintln!("warning: {w}");
    }
    write_output(None, &caps.to_string())
}

/// Signature of `d` extended by every predicate the rule file mentions.
fn rules_signature(text: &str, d: &Dataset) -> Result<Signature, Failure> {
    let mut sig = kgmono::kgdata::infer_signature([d]);
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let r = parse_rule_unchecked(line).with_context(|| format!("line {}", i + 1))?;
        for a in r.body_atoms().chain(std::iter::once(&r.head)) {
            let list = if a.terms.len() == 2 { &mut sig.binary } else { &mut sig.unary };
            if !list.contains(&a.pred) {
                list.push(a.pred.clone());
            }
        }
    }
    Ok(sig)
}

fn cmd_inject(a: InjectArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    manifest.hash_input(&a.data)?;
    manifest.hash_input(&a.rules)?;
    let d = load_triples(&a.data, None)?;
    let text = fs::read_to_string(&a.rules).with_context(|| a.rules.display().to_string())?;
    let sig = rules_signature(&text, &d)?;
    let program = parse_program(&text, &sig).with_context(|| a.rules.display().to_string())?;
    let out = manifest.time("inject", || inject_rules(&d, &program));
    write_output(a.out.as_deref(), &triples_to_string(&out))
}

fn cmd_dump(a: DumpArgs, manifest: &mut RunManifest) -> Result<(), Failure> {
    manifest.hash_input(&a.data)?;
    let d = load_triples(&a.data, None)?;
    let sig = kgmono::kgdata::infer_signature([&d]);
    let g = encode(&d, &sig)?;
    let mut text = format!("# vertices {} colours {} delta {}\n", g.len(), g.colors(), g.delta());
    for (v, (n, l)) in g.names.iter().zip(&g.labels).enumerate() {
        text += &format!("v {v} {n} {l:?}\n");
    }
    for (c, edges) in g.edges.iter().enumerate() {
        for (u, v) in edges {
            text += &format!("e {} {u} {v}\n", sig.binary[c]);
        }
    }
    write_output(a.out.as_deref(), &text)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let name = match &cli.command {
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::CheckRule(_) => "check-rule",
        Command::Extract(_) => "extract",
        Command::EquivProgram(_) => "equiv-program",
        Command::Capacity(_) => "capacity",
        Command::Inject(_) => "inject",
        Command::EncodeDump(_) => "encode-dump",
    };
    let mut manifest = RunManifest::new(name);
    let start = Instant::now();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, &mut manifest),
        Command::Eval(a) => cmd_eval(a, &mut manifest),
        Command::CheckRule(a) => cmd_check(a, &mut manifest),
        Command::Extract(a) => cmd_extract(a, &mut manifest),
        Command::EquivProgram(a) => cmd_equiv(a, &mut manifest),
        Command::Capacity(a) => cmd_capacity(a, &mut manifest),
        Command::Inject(a) => cmd_inject(a, &mut manifest),
        Command::EncodeDump(a) => cmd_dump(a, &mut manifest),
    };
    manifest.timings_ms.insert("total".into(), start.elapsed().as_secs_f64() * 1e3);
    let text = serde_json::to_string_pretty(&manifest)?;
    match &cli.manifest {
        Some(p) => fs::write(p, text + "\n").with_context(|| p.display().to_string())?,
        None => eprintln!("manifest {}", serde_json::to_string(&manifest)?),
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
