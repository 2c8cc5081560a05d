mod io;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{NaiveDate, TimeZone, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pinsim::metrics::{build_panel, default_schedule, read_panel_csv, write_panel_csv, AdvisoryDb, Metric};
use pinsim::netsim::{
    betweenness, defense_curve_for_order, load_network, rank_targets, select_defense_with, AttackSelection,
    Centrality, EcosystemNetwork, FloatingMode, Mechanism, PackageId, Strategy,
};
use pinsim::panel::{fit_report, write_fit_report_csv};
use pinsim::registry::{
    format_timestamp, load_manifests, load_registry, parse_timestamp, write_manifests, Manifest, RegistrySnapshot,
    Timestamp,
};
use pinsim::resolver::{pin_manifest, resolve, ResolveOptions};
use pinsim::semver::VersionConstraint;
use pinsim::synth::{default_t0, generate_network, generate_projects, generate_registry, Attachment, GenConfig};

use io::RunLog;

pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Parser)]
#[command(name = "pinsim", version, about = "Dependency pinning simulations over package registries")]
struct Cli {
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Write the JSON run log here instead of stderr.
    #[arg(long, global = true)]
    run_log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic registry, advisories and project manifests.
    GenRegistry(GenRegistryArgs),
    /// Generate a synthetic package network.
    GenNetwork(GenNetworkArgs),
    /// Print the class of each constraint.
    Classify(ClassifyArgs),
    /// Resolve one manifest against a registry at a point in time.
    Resolve(ResolveArgs),
    /// Build the per-project metric panel.
    Metrics(MetricsArgs),
    /// Fit the panel regression for every metric.
    Panel(PanelArgs),
    /// Rank attack targets in a package network.
    RankTargets(RankTargetsArgs),
    /// Compute risk as defended packages are added.
    DefenseCurve(DefenseCurveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AttachmentArg {
    Uniform,
    Preferential,
}

impl From<AttachmentArg> for Attachment {
    fn from(a: AttachmentArg) -> Self {
        match a {
            AttachmentArg::Uniform => Attachment::Uniform,
            AttachmentArg::Preferential => Attachment::Preferential,
        }
    }
}

#[derive(Args)]
struct GenCommon {
    /// JSON generator config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    packages: Option<usize>,
    #[arg(long)]
    deps_per_release: Option<f64>,
    #[arg(long, value_enum)]
    attachment: Option<AttachmentArg>,
    #[arg(long)]
    out_dir: PathBuf,
}

impl GenCommon {
    fn config(&self, log: &mut RunLog) -> Result<GenConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                log.input(path)?;
                serde_json::from_str(&io::read_to_string(path)?)
                    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            }
            None => GenConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.packages {
            cfg.n_packages = n;
        }
        if let Some(d) = self.deps_per_release {
            cfg.deps_per_release = d;
        }
        if let Some(a) = self.attachment {
            cfg.attachment = a.into();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenRegistryArgs {
    #[command(flatten)]
    common: GenCommon,
    #[arg(long, default_value_t = 20)]
    projects: usize,
    #[arg(long)]
    releases_per_package: Option<f64>,
    #[arg(long)]
    advisory_rate: Option<f64>,
    /// Date the project manifests are written against.
    #[arg(long, value_parser = parse_time)]
    as_of: Option<Timestamp>,
}

#[derive(Args)]
struct GenNetworkArgs {
    #[command(flatten)]
    common: GenCommon,
    #[arg(long)]
    cycle_rate: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long = "constraint", required = true)]
    constraints: Vec<String>,
    /// Reject text that is not valid range syntax instead of classifying it as other.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ResolveArgs {
    #[arg(long)]
    registry: PathBuf,
    /// A manifest JSON file or a projects JSONL file.
    #[arg(long)]
    manifest: PathBuf,
    /// Project to pick from a multi-manifest file.
    #[arg(long)]
    project: Option<String>,
    #[arg(long, value_parser = parse_time)]
    at: Timestamp,
    /// Pin direct dependencies against the registry at this time first.
    #[arg(long, value_parser = parse_time)]
    pin_at: Option<Timestamp>,
    #[arg(long)]
    include_dev: bool,
    /// Record unresolvable requirements instead of failing.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    projects: PathBuf,
    #[arg(long)]
    advisories: Option<PathBuf>,
    /// First observation time; the rest follow at 90-day steps.
    #[arg(long, value_parser = parse_time)]
    t0: Option<Timestamp>,
    /// Five comma-separated observation times, overriding --t0.
    #[arg(long, value_delimiter = ',', value_parser = parse_time)]
    schedule: Vec<Timestamp>,
    #[arg(long)]
    include_dev: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PanelArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    TopImpact,
    RandomActive,
    Fragile,
}

#[derive(Args)]
struct NetworkInput {
    #[arg(long)]
    nodes: PathBuf,
    #[arg(long)]
    edges: PathBuf,
}

impl NetworkInput {
    fn load(&self, log: &mut RunLog) -> Result<EcosystemNetwork> {
        log.input(&self.nodes)?;
        log.input(&self.edges)?;
        let net = load_network(io::open(&self.nodes)?, io::open(&self.edges)?).map_err(CliError::data)?;
        log.count("packages", net.len());
        log.count("edges", net.edge_count());
        Ok(net)
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long, value_enum, default_value = "top-impact")]
    selection: SelectionArg,
    /// Number of targets.
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl AttackArgs {
    fn selection(&self) -> AttackSelection {
        match self.selection {
            SelectionArg::TopImpact => AttackSelection::TopImpact(self.m),
            SelectionArg::RandomActive => AttackSelection::RandomActive { count: self.m, seed: self.seed },
            SelectionArg::Fragile => AttackSelection::Fragile(self.m),
        }
    }
}

#[derive(Args)]
struct RankTargetsArgs {
    #[command(flatten)]
    network: NetworkInput,
    #[command(flatten)]
    attack: AttackArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DefenseCurveArgs {
    #[command(flatten)]
    network: NetworkInput,
    /// Target list written by rank-targets; otherwise targets are selected here.
    #[arg(long)]
    targets: Option<PathBuf>,
    #[command(flatten)]
    attack: AttackArgs,
    /// local, transitive or all.
    #[arg(long, default_value = "all")]
    mechanism: String,
    /// A strategy name or all.
    #[arg(long, default_value = "all")]
    strategy: String,
    #[arg(long, default_value_t = 100)]
    n_max: usize,
    /// Only edges declared floating carry an attack into a direct dependent.
    #[arg(long)]
    honor_declared: bool,
    /// Approximate betweenness from this many pivot sources.
    #[arg(long)]
    pivots: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_time(text: &str) -> Result<Timestamp, String> {
    if let Ok(t) = parse_timestamp(text) {
        return Ok(t);
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .map(|d| Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
        .map_err(|_| format!("`{text}` is neither an RFC 3339 timestamp nor a YYYY-MM-DD date"))
}

fn csv_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn load_snapshot(path: &Path, log: &mut RunLog) -> Result<RegistrySnapshot> {
    log.input(path)?;
    let loaded = load_registry(io::open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    log.count("registry_records", loaded.records);
    log.count("registry_packages", loaded.snapshot.package_count());
    Ok(loaded.snapshot)
}

fn load_advisories(path: Option<&Path>, log: &mut RunLog) -> Result<AdvisoryDb> {
    let Some(path) = path else {
        return Ok(AdvisoryDb::default());
    };
    log.input(path)?;
    let db = AdvisoryDb::load_jsonl(io::open(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    log.count("advisories", db.len());
    Ok(db)
}

fn gen_registry(args: GenRegistryArgs, log: &mut RunLog) -> Result<()> {
    let mut cfg = args.common.config(log)?;
    if let Some(r) = args.releases_per_package {
        cfg.releases_per_package = r;
    }
    if let Some(r) = args.advisory_rate {
        cfg.advisory_rate = r;
    }
    log.seed(cfg.seed);
    let (snap, db) = generate_registry(&cfg).map_err(CliError::data)?;
    let as_of = args.as_of.unwrap_or_else(default_t0);
    let projects = generate_projects(&cfg, &snap, args.projects, as_of).map_err(CliError::data)?;
    let dir = &args.common.out_dir;
    let reg_path = dir.join("registry.jsonl");
    io::write_atomic(&reg_path, |w| snap.write_jsonl(w).map_err(csv_err))?;
    let adv_path = dir.join("advisories.jsonl");
    io::write_atomic(&adv_path, |w| db.write_jsonl(w).map_err(csv_err))?;
    let proj_path = dir.join("projects.jsonl");
    io::write_atomic(&proj_path, |w| write_manifests(&projects, w).map_err(csv_err))?;
    for p in [&reg_path, &adv_path, &proj_path] {
        log.output(p);
    }
    log.count("packages", snap.package_count());
    log.count("releases", snap.release_count());
    log.count("advisories", db.len());
    log.count("projects", projects.len());
    log.field("config", serde_json::to_value(&cfg).map_err(CliError::data)?);
    log.field("as_of", format_timestamp(&as_of));
    Ok(())
}

fn gen_network(args: GenNetworkArgs, log: &mut RunLog) -> Result<()> {
    let mut cfg = args.common.config(log)?;
    if let Some(r) = args.cycle_rate {
        cfg.cycle_rate = r;
    }
    log.seed(cfg.seed);
    let net = generate_network(&cfg).map_err(CliError::data)?;
    let nodes = args.common.out_dir.join("nodes.csv");
    let edges = args.common.out_dir.join("edges.csv");
    io::write_atomic(&nodes, |w| net.write_nodes_csv(w).map_err(csv_err))?;
    io::write_atomic(&edges, |w| net.write_edges_csv(w).map_err(csv_err))?;
    log.output(&nodes);
    log.output(&edges);
    log.count("packages", net.len());
    log.count("edges", net.edge_count());
    log.field("config", serde_json::to_value(&cfg).map_err(CliError::data)?);
    Ok(())
}

fn classify(args: ClassifyArgs, log: &mut RunLog) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    for text in &args.constraints {
        let c = if args.strict {
            VersionConstraint::parse_strict(text).map_err(|e| CliError::Data(format!("`{text}`: {e}")))?
        } else {
            VersionConstraint::parse(text)
        };
        writeln!(stdout, "{}", c.class()).map_err(CliError::data)?;
    }
    log.count("constraints", args.constraints.len());
    Ok(())
}

fn read_manifest(path: &Path, project: Option<&str>) -> Result<Manifest> {
    let text = io::read_to_string(path)?;
    if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
        return match project {
            Some(p) if p != m.name => Err(CliError::Data(format!("project `{p}` not found in {}", path.display()))),
            _ => Ok(m),
        };
    }
    let all = load_manifests(text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    match project {
        Some(p) => all
            .into_iter()
            .find(|m| m.name == p)
            .ok_or_else(|| CliError::Data(format!("project `{p}` not found in {}", path.display()))),
        None if all.len() == 1 => Ok(all.into_iter().next().expect("one manifest")),
        None => Err(CliError::Usage(format!(
            "{} holds {} manifests; choose one with --project",
            path.display(),
            all.len()
        ))),
    }
}

fn resolve_cmd(args: ResolveArgs, log: &mut RunLog) -> Result<()> {
    let snap = load_snapshot(&args.registry, log)?;
    log.input(&args.manifest)?;
    let mut manifest = read_manifest(&args.manifest, args.project.as_deref())?;
    if let Some(t) = args.pin_at {
        let pinned = pin_manifest(&manifest, &snap.view_at(t));
        for d in &pinned.diagnostics {
            eprintln!("warning: {} `{}`: {}", d.package, d.constraint, d.message);
        }
        manifest = pinned.manifest;
        log.field("pin_at", format_timestamp(&t));
    }
    let opts = ResolveOptions { include_dev_at_root: args.include_dev, strict: !args.lenient };
    log.field("include_dev_at_root", opts.include_dev_at_root);
    log.field("strict", opts.strict);
    let g = resolve(&snap.view_at(args.at), &manifest, &opts).map_err(CliError::data)?;
    for d in g.dangling() {
        eprintln!("warning: unresolved {} `{}`", d.package, d.constraint.source());
    }
    let nodes = args.out_dir.join("nodes.csv");
    let edges = args.out_dir.join("edges.csv");
    io::write_atomic(&nodes, |w| g.write_nodes_csv(w).map_err(csv_err))?;
    io::write_atomic(&edges, |w| g.write_edges_csv(w).map_err(csv_err))?;
    log.output(&nodes);
    log.output(&edges);
    log.field("at", format_timestamp(&args.at));
    log.count("size", g.size());
    log.count("edges", g.edges().len());
    log.count("dangling", g.dangling().len());
    Ok(())
}

fn metrics_cmd(args: MetricsArgs, log: &mut RunLog) -> Result<()> {
    let schedule: [Timestamp; 5] = match args.schedule.len() {
        0 => default_schedule(args.t0.unwrap_or_else(default_t0)),
        5 => args.schedule.as_slice().try_into().expect("five entries"),
        n => return Err(CliError::Usage(format!("--schedule needs five times, got {n}"))),
    };
    let snap = load_snapshot(&args.registry, log)?;
    let db = load_advisories(args.advisories.as_deref(), log)?;
    log.input(&args.projects)?;
    let projects = load_manifests(io::open(&args.projects)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.projects.display())))?;
    let opts = ResolveOptions { include_dev_at_root: args.include_dev, strict: true };
    log.field("include_dev_at_root", opts.include_dev_at_root);
    let panel = build_panel(&projects, &snap, &schedule, &db, &opts).map_err(CliError::data)?;
    for d in &panel.dropped {
        eprintln!("dropped {} ({} at t{}): {}", d.project, d.condition.as_str(), d.time_index, d.error);
    }
    io::write_atomic(&args.out, |w| write_panel_csv(&panel.records, w).map_err(csv_err))?;
    log.output(&args.out);
    log.field("schedule", schedule.iter().map(format_timestamp).collect::<Vec<_>>());
    log.count("projects", projects.len());
    log.count("dropped", panel.dropped.len());
    log.count("rows", panel.records.len());
    Ok(())
}

fn panel_cmd(args: PanelArgs, log: &mut RunLog) -> Result<()> {
    log.input(&args.input)?;
    let records = read_panel_csv(io::open(&args.input)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    log.count("rows", records.len());
    let mut reports = Vec::with_capacity(Metric::ALL.len());
    for metric in Metric::ALL {
        let report = fit_report(&records, metric).map_err(|e| CliError::Data(format!("{}: {e}", metric.as_str())))?;
        reports.push(report);
    }
    for report in &reports {
        let path = args.out_dir.join(format!("fit_{}.csv", report.metric.as_str()));
        io::write_atomic(&path, |w| write_fit_report_csv(report, w).map_err(csv_err))?;
        log.output(&path);
    }
    Ok(())
}

fn rank_targets_cmd(args: RankTargetsArgs, log: &mut RunLog) -> Result<()> {
    let net = args.network.load(log)?;
    let selection = args.attack.selection();
    if let AttackSelection::RandomActive { seed, .. } = selection {
        log.seed(seed);
    }
    log.field("selection", format!("{selection:?}"));
    let targets = rank_targets(&net, &selection).map_err(CliError::data)?;
    let impacts = pinsim::netsim::all_impacts(&net).map_err(CliError::data)?;
    io::write_atomic(&args.out, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "package", "impact"]).map_err(csv_err)?;
        for (rank, &p) in targets.iter().enumerate() {
            out.write_record([(rank + 1).to_string(), net.name(p).to_string(), impacts[p].to_string()])
                .map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    })?;
    log.output(&args.out);
    log.count("targets", targets.len());
    Ok(())
}

fn read_targets(path: &Path, net: &EcosystemNetwork) -> Result<Vec<PackageId>> {
    let mut reader = csv::Reader::from_reader(io::open(path)?);
    let headers = reader.headers().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let col = headers
        .iter()
        .position(|h| h == "package")
        .ok_or_else(|| CliError::Data(format!("{}: missing `package` column", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let name = record.get(col).unwrap_or_default();
        out.push(net.id(name).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?);
    }
    Ok(out)
}

fn parse_all<T: std::str::FromStr<Err = String> + Copy>(text: &str, all: &[T]) -> Result<Vec<T>> {
    if text == "all" {
        return Ok(all.to_vec());
    }
    text.split(',').map(|s| s.trim().parse().map_err(CliError::Usage)).collect()
}

fn defense_curve_cmd(args: DefenseCurveArgs, log: &mut RunLog) -> Result<()> {
    let mechanisms = parse_all(&args.mechanism, &Mechanism::ALL)?;
    let strategies = parse_all(&args.strategy, &Strategy::ALL)?;
    let net = args.network.load(log)?;
    let targets = match &args.targets {
        Some(path) => {
            log.input(path)?;
            read_targets(path, &net)?
        }
        None => {
            let selection = args.attack.selection();
            log.field("selection", format!("{selection:?}"));
            rank_targets(&net, &selection).map_err(CliError::data)?
        }
    };
    log.count("targets", targets.len());
    let mode = if args.honor_declared { FloatingMode::HonorDeclared } else { FloatingMode::AssumeAllFloating };
    let centrality = match args.pivots {
        Some(k) => {
            log.seed(args.attack.seed);
            Centrality::Sampled { k, seed: args.attack.seed }
        }
        None => Centrality::Exact,
    };
    log.field("mechanisms", mechanisms.iter().map(|m| m.as_str()).collect::<Vec<_>>());
    log.field("strategies", strategies.iter().map(|s| s.as_str()).collect::<Vec<_>>());
    log.field("n_max", args.n_max);
    log.field("floating_mode", if args.honor_declared { "honor-declared" } else { "assume-all-floating" });
    log.field("centrality", format!("{centrality:?}"));
    let scores = strategies
        .iter()
        .any(|s| s.needs_betweenness())
        .then(|| betweenness(&net, centrality));
    let mut rows = Vec::new();
    for &mechanism in &mechanisms {
        for &strategy in &strategies {
            let order = select_defense_with(&net, strategy, args.n_max, scores.as_deref());
            let curve = defense_curve_for_order(&net, &targets, mechanism, mode, &order).map_err(CliError::data)?;
            rows.extend(curve.into_iter().map(|p| (mechanism, strategy, p)));
        }
    }
    io::write_atomic(&args.out, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mechanism", "strategy", "n", "risk"]).map_err(csv_err)?;
        for (m, s, p) in &rows {
            out.write_record([m.as_str(), s.as_str(), &p.n.to_string(), &p.risk.to_string()])
                .map_err(csv_err)?;
        }
        out.flush().map_err(csv_err)
    })?;
    log.output(&args.out);
    log.count("rows", rows.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build_global()
        .map_err(CliError::data)?;
    let mut log = RunLog::new(match &cli.command {
        Command::GenRegistry(_) => "gen-registry",
        Command::GenNetwork(_) => "gen-network",
        Command::Classify(_) => "classify",
        Command::Resolve(_) => "resolve",
        Command::Metrics(_) => "metrics",
        Command::Panel(_) => "panel",
        Command::RankTargets(_) => "rank-targets",
        Command::DefenseCurve(_) => "defense-curve",
    });
    log.field("jobs", cli.jobs);
    match cli.command {
        Command::GenRegistry(a) => gen_registry(a, &mut log)?,
        Command::GenNetwork(a) => gen_network(a, &mut log)?,
        Command::Classify(a) => classify(a, &mut log)?,
        Command::Resolve(a) => resolve_cmd(a, &mut log)?,
        Command::Metrics(a) => metrics_cmd(a, &mut log)?,
        Command::Panel(a) => panel_cmd(a, &mut log)?,
        Command::RankTargets(a) => rank_targets_cmd(a, &mut log)?,
        Command::DefenseCurve(a) => defense_curve_cmd(a, &mut log)?,
    }
    log.emit(cli.run_log.as_deref())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
