//! Command-line front end.
//!
//! Settings resolve as flag, then `--config` TOML, then default. Each run
//! writes its reports under `--out` and finishes with `manifest.json`: the
//! resolved settings, the seed, and SHA-256 digests of every input file.
//!
//! Exit codes: 0 on success, 1 when the data is invalid or the run fails,
//! 2 on usage errors (bad flags, unknown names, missing input files).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{filter_users, load_dataset, write_profiles_csv, write_records, Dataset, FilterReport, Format};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_csv, ablation_markdown, comparison_csv, comparison_markdown, incremental_csv, incremental_markdown,
    louo_csv, louo_markdown, run_ablation, run_group_model, run_incremental, run_louo, run_personalization, Comparison,
    Experiment, ModelSpec, ProfilePredicate, DEFAULT_FRACTIONS,
};
use crate::features::{build_matrix, Labeler, SchemeName};
use crate::stats::{
    chi_square, cohens_kappa, contingency, describe_by_group, describe_markdown, fit_lmm_data, response_time_markdown,
    response_time_table, ChiSquare, ContingencyTable, Estimation, GroupField, LmmData, LmmFit, LmmOptions,
};
use crate::synth::{generate, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const TOOL: &str = "attentrack";
const DEFAULT_OUT: &str = "attentrack-out";
const DEFAULT_SEED: u64 = 42;
/// Users with fewer records are excluded before analysis.
pub const DEFAULT_MIN_RECORDS: usize = 80;

#[derive(Debug, Parser)]
#[command(name = TOOL, version, about = "Attention-state modeling from notification experience-sampling data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a dataset, then report what filtering would remove.
    Validate(Common),
    /// Statistical tables and tests.
    Stats {
        #[command(subcommand)]
        which: StatsCommand,
    },
    /// Fit one model on the whole (filtered) dataset and save it as JSON.
    Train(Common),
    /// Evaluation protocols.
    Eval {
        #[command(subcommand)]
        experiment: EvalCommand,
    },
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Debug, Subcommand)]
enum StatsCommand {
    /// Chi-square test of a grouping field against attention level.
    Chi2(Grouped),
    /// Attention distribution per group.
    Tables(Grouped),
    /// Cohen's kappa between two coders.
    Kappa(KappaArgs),
    /// Response-time quartiles per attention level.
    Rtimes(Common),
    /// Random-intercept model of response time on attention.
    Lmm {
        #[command(flatten)]
        common: Common,
        /// Restricted maximum likelihood instead of ML.
        #[arg(long)]
        reml: bool,
    },
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Leave-one-user-out.
    Louo(Common),
    /// Personal (first 70% of each user) against general models.
    Personalization(Common),
    /// Cold start plus growing shares of personal data.
    Incremental {
        #[command(flatten)]
        common: Common,
        /// Comma-separated shares of the personal pool, each in [0, 1].
        #[arg(long)]
        fractions: Option<String>,
    },
    /// Leave-one-user-out for each feature family.
    Ablation(Common),
    /// Group model against the general model for users matching a profile filter.
    Group {
        #[command(flatten)]
        common: Common,
        /// Profile filter such as `occupation=student`.
        #[arg(long)]
        group: Option<String>,
    },
}

#[derive(Debug, Clone, Default, Args)]
struct Common {
    /// TOML run configuration; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record file (CSV or JSONL).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Profile CSV.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Taxonomy JSON.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Record format `csv` or `jsonl` (default: from the file extension).
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    labeler: Option<String>,
    /// `rf` or `gb`.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    n_estimators: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Minimum records per user.
    #[arg(long)]
    min_records: Option<usize>,
    /// Keep users who report (nearly) one attention level throughout.
    #[arg(long)]
    keep_constant: bool,
}

#[derive(Debug, Args)]
struct Grouped {
    #[command(flatten)]
    common: Common,
    /// Grouping field (default: activity).
    #[arg(long)]
    group_by: Option<String>,
}

#[derive(Debug, Args)]
struct KappaArgs {
    /// CSV with columns `item,label` from the first coder.
    #[arg(long)]
    coder_a: PathBuf,
    /// CSV with columns `item,label` from the second coder.
    #[arg(long)]
    coder_b: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator configuration (TOML); the built-in planted-signal config otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` or `jsonl`.
    #[arg(long)]
    format: Option<String>,
}

/// The `--config` file. Every key is optional and mirrors a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    pub format: Option<String>,
    pub scheme: Option<String>,
    pub labeler: Option<String>,
    pub model: Option<String>,
    pub n_estimators: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub min_records: Option<usize>,
    pub keep_constant: Option<bool>,
    pub fractions: Option<Vec<f64>>,
    pub group: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

/// Runs the tool on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Validate(c) => cmd_validate(&c),
        Command::Stats { which } => match which {
            StatsCommand::Chi2(g) => cmd_chi2(&g),
            StatsCommand::Tables(g) => cmd_tables(&g),
            StatsCommand::Kappa(k) => cmd_kappa(&k),
            StatsCommand::Rtimes(c) => cmd_rtimes(&c),
            StatsCommand::Lmm { common, reml } => cmd_lmm(&common, reml),
        },
        Command::Train(c) => cmd_train(&c),
        Command::Eval { experiment } => match experiment {
            EvalCommand::Louo(c) => cmd_louo(&c),
            EvalCommand::Personalization(c) => cmd_personalization(&c),
            EvalCommand::Incremental { common, fractions } => cmd_incremental(&common, fractions.as_deref()),
            EvalCommand::Ablation(c) => cmd_ablation(&c),
            EvalCommand::Group { common, group } => cmd_group(&common, group.as_deref()),
        },
        Command::Synth(s) => cmd_synth(&s),
    }
}

/// Fully resolved settings; echoed into the manifest.
#[derive(Debug, Clone, Serialize)]
struct Settings {
    data: Option<PathBuf>,
    profiles: Option<PathBuf>,
    taxonomy: Option<PathBuf>,
    format: Option<String>,
    scheme: SchemeName,
    labeler: Labeler,
    model: ModelSpec,
    seed: u64,
    out: PathBuf,
    min_records: usize,
    keep_constant: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    fractions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<String>,
    #[serde(skip)]
    config_path: Option<PathBuf>,
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} file `{}` does not exist", path.display())))
    }
}

impl Settings {
    fn resolve(c: &Common) -> CliResult<Self> {
        let file = match &c.config {
            Some(p) => {
                require_file(p, "config")?;
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                RunConfig::from_toml(&text).map_err(usage)?
            }
            None => RunConfig::default(),
        };
        let pick = |flag: &Option<String>, conf: Option<String>| flag.clone().or(conf);
        let scheme = match pick(&c.scheme, file.scheme) {
            Some(s) => s.parse().map_err(usage)?,
            None => SchemeName::Full,
        };
        let labeler = match pick(&c.labeler, file.labeler) {
            Some(s) => s.parse().map_err(usage)?,
            None => Labeler::AttenTrackI,
        };
        let seed = c.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
        let mut model: ModelSpec = match pick(&c.model, file.model) {
            Some(s) => s.parse().map_err(usage)?,
            None => ModelSpec::Forest(Default::default()),
        };
        if let Some(n) = c.n_estimators.or(file.n_estimators) {
            if n == 0 {
                return Err(usage("--n-estimators must be positive"));
            }
            model = model.with_n_estimators(n);
        }
        model = match model {
            ModelSpec::Forest(p) => ModelSpec::Forest(crate::trees::ForestParams { seed, ..p }),
            ModelSpec::Gbm(p) => ModelSpec::Gbm(crate::trees::GbmParams { seed, ..p }),
        };
        let format = pick(&c.format, file.format);
        if let Some(f) = &format {
            f.parse::<Format>().map_err(usage)?;
        }
        Ok(Self {
            data: c.data.clone().or(file.data),
            profiles: c.profiles.clone().or(file.profiles),
            taxonomy: c.taxonomy.clone().or(file.taxonomy),
            format,
            scheme,
            labeler,
            model,
            seed,
            out: c.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            min_records: c.min_records.or(file.min_records).unwrap_or(DEFAULT_MIN_RECORDS),
            keep_constant: c.keep_constant || file.keep_constant.unwrap_or(false),
            fractions: file.fractions,
            group: file.group,
            config_path: c.config.clone(),
        })
    }

    fn experiment(&self) -> Experiment {
        Experiment {
            scheme: self.scheme,
            labeler: self.labeler,
            seed: self.seed,
        }
    }

    fn inputs(&self) -> Vec<(&'static str, PathBuf)> {
        [
            ("config", &self.config_path),
            ("data", &self.data),
            ("profiles", &self.profiles),
            ("taxonomy", &self.taxonomy),
        ]
        .into_iter()
        .filter_map(|(role, p)| p.clone().map(|p| (role, p)))
        .collect()
    }

    /// Loads the dataset as given, without user filtering.
    fn load_raw(&self) -> CliResult<Dataset> {
        let Some(data) = &self.data else {
            return Err(usage("--data is required (as a flag or in --config)"));
        };
        require_file(data, "data")?;
        for (p, what) in [(&self.profiles, "profiles"), (&self.taxonomy, "taxonomy")] {
            if let Some(p) = p {
                require_file(p, what)?;
            }
        }
        let format = match &self.format {
            Some(f) => f.parse().map_err(usage)?,
            None => Format::from_path(data),
        };
        Ok(load_dataset(data, format, self.profiles.as_deref(), self.taxonomy.as_deref())?)
    }

    /// Loads the dataset and drops users per the filtering settings.
    fn load(&self) -> CliResult<Dataset> {
        let raw = self.load_raw()?;
        let (d, report) = filter_users(&raw, self.min_records, !self.keep_constant);
        notice_filter(&report, self.min_records);
        if d.is_empty() {
            return Err(Failure::Run(Error::InvalidInput("no users remain after filtering".into())));
        }
        Ok(d)
    }
}

fn notice_filter(report: &FilterReport, min_records: usize) {
    for (user, n) in &report.too_few_records {
        eprintln!("note: excluding {user}: {n} records, fewer than {min_records}");
    }
    for (user, level, share) in &report.constant_attention {
        eprintln!("note: excluding {user}: attention {level} in {:.1}% of records", 100.0 * share);
    }
}

/// Collects report files under the output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    fn finish<C: Serialize>(self, command: &str, config: &C, seed: u64, inputs: &[(&str, PathBuf)]) -> Result<()> {
        let inputs = inputs
            .iter()
            .map(|(role, path)| {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                Ok(InputDigest {
                    role: role.to_string(),
                    path: path.display().to_string(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs,
            outputs: self.written.clone(),
        };
        let mut out = self;
        out.json("manifest.json", &manifest)
    }
}

#[derive(Debug, Serialize)]
struct InputDigest {
    role: String,
    path: String,
    sha256: String,
}

/// Everything needed to rerun a command exactly.
#[derive(Debug, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config: serde_json::Value,
    seed: u64,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    records: usize,
    users: usize,
    attention_counts: [usize; 5],
    min_records: usize,
    filter: FilterReport,
}

fn cmd_validate(c: &Common) -> CliResult<()> {
    let s = Settings::resolve(c)?;
    let d = s.load_raw()?;
    let (_, filter) = filter_users(&d, s.min_records, !s.keep_constant);
    let report = ValidationReport {
        records: d.len(),
        users: d.users().len(),
        attention_counts: d.attention_counts(),
        min_records: s.min_records,
        filter,
    };
    let mut md = format!(
        "# Validation\n\nvalid: {} records from {} users.\n\n| Attention | Records |\n|---|---|\n",
        report.records, report.users
    );
    for (level, n) in report.attention_counts.iter().enumerate() {
        let _ = writeln!(md, "| {} | {n} |", level + 1);
    }
    let _ = write!(
        md,
        "\nFiltering would keep {} of {} users.\n",
        report.filter.kept_users.len(),
        report.users
    );
    for (user, n) in &report.filter.too_few_records {
        let _ = writeln!(md, "- {user}: {n} records, fewer than {}", s.min_records);
    }
    for (user, level, share) in &report.filter.constant_attention {
        let _ = writeln!(md, "- {user}: attention {level} in {:.1}% of records", 100.0 * share);
    }
    print!("{md}");
    let mut out = Outputs::create(&s.out)?;
    out.write("validation.md", &md)?;
    out.json("validation.json", &report)?;
    out.finish("validate", &s, s.seed, &s.inputs())?;
    Ok(())
}

fn group_field(g: &Grouped) -> CliResult<GroupField> {
    match &g.group_by {
        Some(f) => f.parse().map_err(usage),
        None => Ok(GroupField::Activity),
    }
}

#[derive(Debug, Serialize)]
struct GroupedSettings<'a> {
    #[serde(flatten)]
    settings: &'a Settings,
    group_by: &'static str,
}

fn contingency_csv(t: &ContingencyTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["group".to_string()];
    header.extend(t.col_labels.iter().cloned());
    w.write_record(&header)?;
    for (label, row) in t.row_labels.iter().zip(&t.counts) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn chi_square_markdown(field: GroupField, t: &ContingencyTable, r: &ChiSquare) -> String {
    let mut out = format!("# {} by attention level\n\n| {} |", field.as_str(), field.as_str());
    for c in &t.col_labels {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(t.col_labels.len()));
    out.push('\n');
    for (label, row) in t.row_labels.iter().zip(&t.counts) {
        let _ = write!(out, "| {label} |");
        for c in row {
            let _ = write!(out, " {c} |");
        }
        out.push('\n');
    }
    let _ = writeln!(out, "\nχ²({}, N = {}) = {:.2}, p = {:.3e}", r.df, r.n, r.chi2, r.p);
    out
}

fn cmd_chi2(g: &Grouped) -> CliResult<()> {
    let s = Settings::resolve(&g.common)?;
    let field = group_field(g)?;
    let d = s.load()?;
    let table = contingency(&d, field)?;
    let result = chi_square(&table)?;
    let md = chi_square_markdown(field, &table, &result);
    print!("{md}");
    let name = format!("chi2_{}", field.as_str());
    let mut out = Outputs::create(&s.out)?;
    out.write(&format!("{name}.csv"), contingency_csv(&table)?)?;
    out.write(&format!("{name}.md"), &md)?;
    out.json(&format!("{name}.json"), &result)?;
    let echo = GroupedSettings {
        settings: &s,
        group_by: field.as_str(),
    };
    out.finish("stats chi2", &echo, s.seed, &s.inputs())?;
    Ok(())
}

fn cmd_tables(g: &Grouped) -> CliResult<()> {
    let s = Settings::resolve(&g.common)?;
    let field = group_field(g)?;
    let d = s.load()?;
    let rows = describe_by_group(&d, field);
    let md = describe_markdown(field, &rows);
    print!("{md}");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "group",
        "total",
        "proportion",
        "share_1",
        "share_2",
        "share_3",
        "share_4",
        "share_5",
        "mean",
        "sd",
        "median",
    ])
    .map_err(Error::from)?;
    for r in &rows {
        let mut rec = vec![r.group.clone(), r.total.to_string(), format!("{:.6}", r.proportion)];
        rec.extend(r.level_share.iter().map(|v| format!("{v:.6}")));
        rec.extend([r.mean, r.sd, r.median].iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec).map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    let name = format!("table_{}", field.as_str());
    let mut out = Outputs::create(&s.out)?;
    out.write(&format!("{name}.csv"), bytes)?;
    out.write(&format!("{name}.md"), &md)?;
    let echo = GroupedSettings {
        settings: &s,
        group_by: field.as_str(),
    };
    out.finish("stats tables", &echo, s.seed, &s.inputs())?;
    Ok(())
}

fn read_coder(path: &Path) -> CliResult<Vec<(String, String)>> {
    require_file(path, "coder")?;
    let mut reader = csv::Reader::from_path(path).map_err(Error::from)?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(Error::from)?;
        let (Some(item), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(Failure::Run(Error::Schema(format!(
                "{}: expected columns item,label",
                path.display()
            ))));
        };
        rows.push((item.trim().to_string(), label.trim().to_string()));
    }
    rows.sort();
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct KappaReport {
    items: usize,
    agreement: f64,
    kappa: f64,
}

fn cmd_kappa(k: &KappaArgs) -> CliResult<()> {
    let a = read_coder(&k.coder_a)?;
    let b = read_coder(&k.coder_b)?;
    let items_a: Vec<&str> = a.iter().map(|(i, _)| i.as_str()).collect();
    let items_b: Vec<&str> = b.iter().map(|(i, _)| i.as_str()).collect();
    if items_a != items_b {
        return Err(Failure::Run(Error::InvalidInput(
            "the two coders labeled different item sets".into(),
        )));
    }
    let la: Vec<&str> = a.iter().map(|(_, l)| l.as_str()).collect();
    let lb: Vec<&str> = b.iter().map(|(_, l)| l.as_str()).collect();
    let kappa = cohens_kappa(&la, &lb)?;
    let agree = la.iter().zip(&lb).filter(|(x, y)| x == y).count();
    let report = KappaReport {
        items: la.len(),
        agreement: agree as f64 / la.len() as f64,
        kappa,
    };
    let md = format!(
        "# Inter-coder agreement\n\n| Items | Observed agreement | Cohen's kappa |\n|---|---|---|\n| {} | {:.4} | {:.4} |\n",
        report.items, report.agreement, report.kappa
    );
    print!("{md}");
    let out_dir = k.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut out = Outputs::create(&out_dir)?;
    out.write("kappa.md", &md)?;
    out.json("kappa.json", &report)?;
    let echo = serde_json::json!({
        "coder_a": k.coder_a,
        "coder_b": k.coder_b,
        "out": out_dir,
    });
    out.finish(
        "stats kappa",
        &echo,
        DEFAULT_SEED,
        &[("coder_a", k.coder_a.clone()), ("coder_b", k.coder_b.clone())],
    )?;
    Ok(())
}

fn cmd_rtimes(c: &Common) -> CliResult<()> {
    let s = Settings::resolve(c)?;
    let d = s.load()?;
    let rows = response_time_table(&d);
    let md = response_time_markdown(&rows);
    print!("{md}");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attention", "n", "mean", "median", "q1", "q3"]).map_err(Error::from)?;
    for r in &rows {
        w.write_record([
            r.attention.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.mean),
            format!("{:.6}", r.median),
            format!("{:.6}", r.q1),
            format!("{:.6}", r.q3),
        ])
        .map_err(Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    let mut out = Outputs::create(&s.out)?;
    out.write("rtimes.csv", bytes)?;
    out.write("rtimes.md", &md)?;
    out.finish("stats rtimes", &s, s.seed, &s.inputs())?;
    Ok(())
}

fn lmm_markdown(f: &LmmFit) -> String {
    let mut out = format!(
        "# Response time ~ attention + (1 | user)\n\n{} fit on {} observations from {} users.\n\n| Term | Estimate | SE | z | p | 95% CI |\n|---|---|---|---|---|---|\n",
        match f.estimation {
            Estimation::Ml => "ML",
            Estimation::Reml => "REML",
        },
        f.n_obs,
        f.n_groups
    );
    for c in &f.coefficients {
        let _ = writeln!(
            out,
            "| {} | {:.4} | {:.4} | {:.3} | {:.3e} | [{:.4}, {:.4}] |",
            c.name, c.estimate, c.se, c.z, c.p, c.ci_low, c.ci_high
        );
    }
    let _ = write!(
        out,
        "\nGroup variance {:.2}, residual variance {:.2}, log-likelihood {:.3}.\n",
        f.group_var, f.residual_var, f.log_likelihood
    );
    out
}

fn cmd_lmm(c: &Common, reml: bool) -> CliResult<()> {
    let s = Settings::resolve(c)?;
    let d = s.load()?;
    let opts = LmmOptions {
        estimation: if reml { Estimation::Reml } else { Estimation::Ml },
        ..LmmOptions::default()
    };
    let fit = fit_lmm_data(&LmmData::from_dataset(&d), &opts)?;
    let md = lmm_markdown(&fit);
    print!("{md}");
    let mut out = Outputs::create(&s.out)?;
    out.json("lmm.json", &fit)?;
    out.write("lmm.md", &md)?;
    let echo = serde_json::json!({ "settings": &s, "lmm": &opts });
    out.finish("stats lmm", &echo, s.seed, &s.inputs())?;
    Ok(())
}

fn cmd_train(c: &Common) -> CliResult<()> {
    let s = Settings::resolve(c)?;
    let d = s.load()?;
    let fm = build_matrix(&d, s.scheme, s.labeler)?;
    let model = s
        .model
        .fit_model(&fm.rows, &fm.labels, s.labeler.n_classes(), s.seed)?
        .with_class_names(s.labeler.class_names())?;
    let mut out = Outputs::create(&s.out)?;
    out.write("model.json", model.to_json()?)?;
    out.finish("train", &s, s.seed, &s.inputs())?;
    println!(
        "trained {} on {} records ({} features); model.json in {}",
        s.model,
        fm.len(),
        fm.rows.n_cols(),
        s.out.display()
    );
    Ok(())
}

fn cmd_louo(c: &Common) -> CliResult<()> {
    let s = Settings::resolve(c)?;
    let d = s.load()?;
    let r = run_louo(&d, &s.model, &s.experiment())?;
    let mut out = Outputs::create(&s.out)?;
    out.write("louo.csv", louo_csv(&r)?)?;
    out.write("louo.md", louo_markdown(&r))?;
    out.json("louo.json", &r)?;
    out.finish("eval louo", &s, s.seed, &s.inputs())?;
    println!(
        "LOUO {} {}/{}: {} folds, mean AUC {}",
        r.model,
        r.scheme,
        r.labeler,
        r.folds.len(),
        fmt_opt(r.summary.mean_auc())
    );
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn write_comparison(s: &Settings, name: &str, title: &str, command: &str, c: &Comparison) -> CliResult<()> {
    for skip in &c.skipped {
        eprintln!("note: skipped {}: {}", skip.user, skip.reason);
    }
    let mut out = Outputs::create(&s.out)?;
    out.write(&format!("{name}.csv"), comparison_csv(c)?)?;
    out.write(&format!("{name}.md"), comparison_markdown(title, c))?;
    out.json(&format!("{name}.json"), c)?;
    out.finish(command, s, s.seed, &s.inputs())?;
    println!(
        "{title}: {} users, mean AUC {} ({}) vs {} ({})",
        c.folds.len(),
        fmt_opt(c.summary_a.as_ref().and_then(|x| x.mean_auc())),
        c.label_a,
        fmt_opt(c.summary_b.as_ref().and_then(|x| x.mean_auc())),
        c.label_b
    );
    Ok(())
}

fn cmd_personalization(c: &Common) -> CliResult<()> {
    let s = Settings::resolve(c)?;
    let d = s.load()?;
    let r = run_personalization(&d, &s.model, &s.experiment())?;
    write_comparison(&s, "personalization", "Personal vs general model", "eval personalization", &r)
}

fn parse_fractions(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|t| {
            let f: f64 = t
                .trim()
                .parse()
                .map_err(|_| usage(format!("`{t}` in --fractions is not a number")))?;
            if (0.0..=1.0).contains(&f) {
                Ok(f)
            } else {
                Err(usage(format!("fraction {f} is outside [0, 1]")))
            }
        })
        .collect()
}

fn cmd_incremental(c: &Common, fractions: Option<&str>) -> CliResult<()> {
    let mut s = Settings::resolve(c)?;
    let fractions = match fractions {
        Some(t) => parse_fractions(t)?,
        None => s.fractions.clone().unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec()),
    };
    s.fractions = Some(fractions.clone());
    let d = s.load()?;
    let r = run_incremental(&d, &s.model, &s.experiment(), &fractions)?;
    for skip in &r.skipped {
        eprintln!("note: skipped {}: {}", skip.user, skip.reason);
    }
    let mut out = Outputs::create(&s.out)?;
    out.write("incremental.csv", incremental_csv(&r)?)?;
    out.write("incremental.md", incremental_markdown(&r))?;
    out.json("incremental.json", &r)?;
    out.finish("eval incremental", &s, s.seed, &s.inputs())?;
    for (f, auc) in &r.curve {
        println!("fraction {f:.3}: mean AUC {}", fmt_opt(auc.map(|m| m.mean)));
    }
    Ok(())
}

fn cmd_ablation(c: &Common) -> CliResult<()> {
    let s = Settings::resolve(c)?;
    let d = s.load()?;
    let r = run_ablation(&d, &s.model, &s.experiment())?;
    let mut out = Outputs::create(&s.out)?;
    out.write("ablation.csv", ablation_csv(&r)?)?;
    out.write("ablation.md", ablation_markdown(&r))?;
    out.json("ablation.json", &r)?;
    out.finish("eval ablation", &s, s.seed, &s.inputs())?;
    for e in &r.entries {
        println!("{}: mean AUC {}", e.scheme, fmt_opt(e.summary.mean_auc()));
    }
    Ok(())
}

fn cmd_group(c: &Common, group: Option<&str>) -> CliResult<()> {
    let mut s = Settings::resolve(c)?;
    let Some(text) = group.map(str::to_string).or_else(|| s.group.clone()) else {
        return Err(usage("--group field=value is required"));
    };
    let predicate: ProfilePredicate = text.parse().map_err(usage)?;
    s.group = Some(predicate.to_string());
    let d = s.load()?;
    let r = run_group_model(&d, &predicate, &s.model, &s.experiment())?;
    let title = format!("Group model ({predicate}) vs general model");
    write_comparison(&s, "group", &title, "eval group", &r)
}

fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let mut config = match &a.config {
        Some(p) => {
            require_file(p, "config")?;
            SynthConfig::load(p).map_err(usage)?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    config.validate().map_err(usage)?;
    let format: Format = match &a.format {
        Some(f) => f.parse().map_err(usage)?,
        None => Format::Csv,
    };
    let d = generate(&config)?;
    let records_name = match format {
        Format::Csv => "records.csv",
        Format::Jsonl => "records.jsonl",
    };
    let mut records = Vec::new();
    write_records(d.records(), format, &mut records)?;
    let mut profiles = Vec::new();
    write_profiles_csv(d.profiles(), &mut profiles)?;
    let out_dir = a.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut out = Outputs::create(&out_dir)?;
    out.write(records_name, records)?;
    out.write("profiles.csv", profiles)?;
    out.write("taxonomy.json", d.taxonomy().to_json())?;
    out.write("synth.toml", config.to_toml())?;
    let inputs: Vec<(&str, PathBuf)> = a.config.iter().map(|p| ("config", p.clone())).collect();
    out.finish("synth", &config, config.seed, &inputs)?;
    println!(
        "generated {} records for {} users in {}",
        d.len(),
        d.users().len(),
        out_dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_rejects_unknown_keys() {
        assert!(RunConfig::from_toml("seed = 7\nscheme = \"FULL\"").is_ok());
        assert!(RunConfig::from_toml("sed = 7").is_err());
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.toml");
        std::fs::write(&conf, "seed = 7\nlabeler = \"ATTENTRACK_II\"\nmodel = \"gb\"\n").unwrap();
        let c = Common {
            config: Some(conf),
            seed: Some(9),
            ..Common::default()
        };
        let s = Settings::resolve(&c).ok().unwrap();
        assert_eq!(s.seed, 9);
        assert_eq!(s.labeler, Labeler::AttenTrackII);
        assert!(matches!(s.model, ModelSpec::Gbm(ref p) if p.seed == 9));
        assert_eq!(s.scheme, SchemeName::Full);
        assert_eq!(s.min_records, DEFAULT_MIN_RECORDS);
    }

    #[test]
    fn unknown_names_are_usage_errors() {
        for c in [
            Common {
                scheme: Some("EVERYTHING".into()),
                ..Common::default()
            },
            Common {
                labeler: Some("ATTENTRACK_IV".into()),
                ..Common::default()
            },
            Common {
                model: Some("svm".into()),
                ..Common::default()
            },
        ] {
            assert!(matches!(Settings::resolve(&c), Err(Failure::Usage(_))));
        }
    }

    #[test]
    fn fractions_parse_and_bound() {
        assert_eq!(parse_fractions("0, 0.5,1").ok().unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_fractions("0.5,1.5").is_err());
        assert!(parse_fractions("half").is_err());
    }

    #[test]
    fn help_and_bad_subcommand_exit_codes() {
        assert_eq!(run(["attentrack", "--version"]), EXIT_OK);
        assert_eq!(run(["attentrack", "eval", "crossval"]), EXIT_USAGE);
        assert_eq!(run(["attentrack", "frobnicate"]), EXIT_USAGE);
    }
}
