//! peer-sentinel: offline examination of captured Monero P2P traffic.
//!
//! Exit codes: 0 clean, 1 operational error, 2 analysis produced at
//! least one finding. Scripted callers branch on that distinction.

use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use peer_sentinel_core::ingest::{parse_stream_file_name, read_jsonl, PacketRecord, StreamMeta};
use peer_sentinel_core::levin::consts::{command_name, DEFAULT_MAX_PAYLOAD};
use peer_sentinel_core::netstruct::AsnDatabase;
use peer_sentinel_core::pipeline::{
    analyze, load_jsonl, load_raw_dir, AnalyzeRequest, LoadedCapture,
};
use peer_sentinel_core::report::{emit_banlist, expand_and_diff, BanList, Report};
use peer_sentinel_core::synth::{generate, Scenario};
use peer_sentinel_core::DetectorConfig;

#[derive(Parser)]
#[command(
    name = "peer-sentinel",
    version,
    about = "Offline Monero P2P capture examination: decode, analyze, ban-list tooling"
)]
struct Cli {
    /// Worker threads for data-parallel stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the detectors over a capture and write report artifacts.
    Analyze(AnalyzeArgs),
    /// Pretty-print the messages in a capture.
    Decode(DecodeArgs),
    /// Ban-list utilities.
    #[command(subcommand)]
    Banlist(BanlistCmd),
    /// Generate a labeled synthetic capture from a scenario file.
    Simulate(SimulateArgs),
    /// Configuration helpers.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// One JSON object per line, pre-decoded messages.
    Jsonl,
    /// Raw Levin octet streams, one file per connection direction.
    RawStream,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSONL capture file, or a directory of stream files for
    /// --format raw-stream.
    #[arg(long)]
    input: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,

    /// Detector thresholds, TOML. `config --defaults` prints the
    /// annotated baseline.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Address of the observing node; required only when the capture
    /// leaves it ambiguous.
    #[arg(long)]
    local_ip: Option<Ipv4Addr>,

    /// Prefix-to-AS database, CSV `prefix,asn,org` with a header row.
    #[arg(long)]
    asn_db: Option<PathBuf>,

    /// External ban list to overlap against (one address or /24 per line).
    #[arg(long)]
    banlist: Option<PathBuf>,

    /// Directory for report.json, findings.jsonl, banlist.txt, summary.txt.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,

    /// Omit the wall-clock stamp from report.json so repeated runs over
    /// the same input are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
struct DecodeArgs {
    /// JSONL capture file, or a single stream file for --format raw-stream.
    #[arg(long)]
    input: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,

    /// Stop after this many messages.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Subcommand)]
enum BanlistCmd {
    /// Rebuild the expanded ban list from a saved report.json.
    Emit {
        #[arg(long)]
        report: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two ban-list files at host granularity.
    Diff { ours: PathBuf, theirs: PathBuf },
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario description, TOML.
    #[arg(long)]
    scenario: PathBuf,

    /// Directory for the capture and its ground-truth labels.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, value_enum, default_value_t = Format::Jsonl)]
    format: Format,

    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigArgs {
    /// Print the default thresholds as an annotated TOML document.
    #[arg(long)]
    defaults: bool,

    /// Validate a config file and exit.
    #[arg(long, value_name = "FILE")]
    check: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            return match e.print() {
                Ok(()) => ExitCode::SUCCESS,
                Err(_) => ExitCode::FAILURE,
            };
        }
        Err(e) => {
            // Usage mistakes are operational errors; exit 2 is reserved
            // for "the capture contained findings".
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };

    configure_thread_pool(cli.jobs);

    let run = match cli.command {
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Decode(args) => cmd_decode(&args),
        Command::Banlist(cmd) => cmd_banlist(&cmd),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Config(args) => cmd_config(&args),
    };
    match run {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_thread_pool(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // A second init attempt (tests, library callers) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_thread_pool(jobs: Option<usize>) {
    if jobs.is_some() {
        eprintln!("note: built without the parallel feature; --jobs has no effect");
    }
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<ExitCode> {
    let config = match &args.config {
        Some(path) => DetectorConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => DetectorConfig::default(),
    };

    let capture = load_capture(&args.input, args.format)?;
    if capture.skipped > 0 {
        eprintln!("note: skipped {} unusable input line(s)/file(s)", capture.skipped);
    }

    let asn_db = match &args.asn_db {
        Some(path) => Some(
            AsnDatabase::load(path)
                .with_context(|| format!("loading AS database {}", path.display()))?,
        ),
        None => None,
    };
    let external = match &args.banlist {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading ban list {}", path.display()))?;
            Some(BanList::parse(&text).context("parsing external ban list")?)
        }
        None => None,
    };

    let generated_at = (!args.no_timestamp)
        .then(|| humantime::format_rfc3339_seconds(std::time::SystemTime::now()).to_string());
    let req = AnalyzeRequest {
        local_ip: args.local_ip,
        asn_db: asn_db.as_ref(),
        external_banlist: external.as_ref(),
        generated_at,
    };
    let analysis = analyze(&capture, &config, &req)?;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let write = |name: &str, contents: String| -> Result<()> {
        let path = args.out_dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    };
    write("report.json", analysis.report.to_json_pretty())?;
    write("findings.jsonl", analysis.report.findings_jsonl())?;
    write("banlist.txt", analysis.banlist.to_text())?;
    let summary = analysis.report.summary_text();
    write("summary.txt", summary.clone())?;
    print!("{summary}");

    if analysis.report.findings.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn load_capture(input: &Path, format: Format) -> Result<LoadedCapture> {
    match format {
        Format::Jsonl => {
            load_jsonl(input).with_context(|| format!("reading {}", input.display()))
        }
        Format::RawStream => load_raw_dir(input, DEFAULT_MAX_PAYLOAD)
            .with_context(|| format!("reading stream files under {}", input.display())),
    }
}

fn cmd_decode(args: &DecodeArgs) -> Result<ExitCode> {
    let records: Vec<PacketRecord> = match args.format {
        Format::Jsonl => {
            read_jsonl(&args.input)
                .with_context(|| format!("reading {}", args.input.display()))?
                .0
        }
        Format::RawStream => {
            let name = args
                .input
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let meta = parse_stream_file_name(&name).unwrap_or(StreamMeta {
                src_ip: Ipv4Addr::UNSPECIFIED,
                src_port: 0,
                dst_ip: Ipv4Addr::UNSPECIFIED,
                dst_port: 0,
                stream_id: None,
                ts_base: 0.0,
            });
            let bytes = std::fs::read(&args.input)
                .with_context(|| format!("reading {}", args.input.display()))?;
            let report = peer_sentinel_core::ingest::decode_stream(&bytes, &meta, DEFAULT_MAX_PAYLOAD);
            for err in &report.errors {
                eprintln!("decode error: {err}");
            }
            report.records
        }
    };

    let limit = args.limit.unwrap_or(usize::MAX);
    for r in records.iter().take(limit) {
        let cmd = command_name(r.command)
            .map(str::to_string)
            .unwrap_or_else(|| format!("cmd_{}", r.command));
        let fields = serde_json::to_string(&r.fields).unwrap_or_else(|_| "{}".into());
        println!(
            "{:>12.3}  {}:{} -> {}:{}  {:<14} {:<8} {}",
            r.ts,
            r.src_ip,
            r.src_port,
            r.dst_ip,
            r.dst_port,
            cmd,
            format!("{:?}", r.kind).to_lowercase(),
            fields
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_banlist(cmd: &BanlistCmd) -> Result<ExitCode> {
    match cmd {
        BanlistCmd::Emit { report, out } => {
            let text = std::fs::read_to_string(report)
                .with_context(|| format!("reading {}", report.display()))?;
            let report: Report = serde_json::from_str(&text).context("parsing report")?;
            let banlist = emit_banlist(&report.profiles, &report.saturation);
            match out {
                Some(path) => std::fs::write(path, banlist.to_text())
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", banlist.to_text()),
            }
            Ok(ExitCode::SUCCESS)
        }
        BanlistCmd::Diff { ours, theirs } => {
            let parse = |path: &PathBuf| -> Result<BanList> {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                BanList::parse(&text).with_context(|| format!("parsing {}", path.display()))
            };
            let a = parse(ours)?;
            let b = parse(theirs)?;
            let d = expand_and_diff(&a, &b);
            println!("hosts in {}: {}", ours.display(), d.expanded_a);
            println!("hosts in {}: {}", theirs.display(), d.expanded_b);
            println!("in both: {}", d.both.len());
            println!("only in {}: {}", ours.display(), d.only_a.len());
            println!("only in {}: {}", theirs.display(), d.only_b.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let mut scenario = Scenario::from_toml_str(&text).context("parsing scenario")?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let capture = generate(&scenario).context("generating capture")?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    match args.format {
        Format::Jsonl => {
            std::fs::write(args.out.join("capture.jsonl"), capture.to_jsonl())?;
        }
        Format::RawStream => {
            for (name, bytes) in capture.raw_streams() {
                std::fs::write(args.out.join(name), bytes)?;
            }
        }
    }
    std::fs::write(args.out.join("labels.txt"), capture.labels_text())?;

    let labeled = capture.labels.len();
    println!(
        "wrote {} messages across {} connections; {} peer(s) carry labels",
        capture.msgs.len(),
        capture.conns.len(),
        labeled
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_config(args: &ConfigArgs) -> Result<ExitCode> {
    if args.defaults {
        print!("{}", DetectorConfig::defaults_document());
        return Ok(ExitCode::SUCCESS);
    }
    if let Some(path) = &args.check {
        let config = DetectorConfig::load(path)
            .with_context(|| format!("loading {}", path.display()))?;
        config.validate().context("validating thresholds")?;
        println!("{} is valid (digest {})", path.display(), config.digest());
        return Ok(ExitCode::SUCCESS);
    }
    bail!("nothing to do");
}
