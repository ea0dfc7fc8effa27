use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sdw_core::caption::{self, AssemblyPolicy, SentenceSpan};
use sdw_core::ocr::{self, TrackConfig};
use sdw_core::pose::{self, FilterConfig, Region};
use sdw_core::segment::{self, ClipManifest, PlanParams, SegmentFlag};
use sdw_core::store::{self, StatusSet, Store};
use sdw_core::Diagnostic;

/// Sign-language dataset pipeline: captions, sentences, cut plans, pose
/// files, review and release.
#[derive(Parser)]
#[command(name = "sdw", version)]
struct Cli {
    /// Data directory
    #[arg(long, global = true, env = "SDW_DATA_DIR", default_value = ".")]
    data: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clip manifests
    #[command(subcommand)]
    Clip(ClipCmd),
    /// Caption tracks
    #[command(subcommand)]
    Captions(CaptionsCmd),
    /// Sentence spans
    #[command(subcommand)]
    Sentences(SentencesCmd),
    /// Segment planning
    #[command(subcommand)]
    Segment(SegmentCmd),
    /// Pose sequences
    #[command(subcommand)]
    Pose(PoseCmd),
    /// Compute dataset statistics and save them to stats/stats.json
    Stats {
        /// Also write the vocabulary histogram as CSV
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[arg(long, default_value = "good,undecided")]
        include: StatusSet,
    },
    /// Write a release directory
    Export {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "good,undecided")]
        include: StatusSet,
    },
    /// Run the review API
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Static UI directory served at `/` (default: <data>/ui if present)
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ClipCmd {
    /// Validate a manifest and add it to the data directory
    Add {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand)]
enum CaptionsCmd {
    /// Parse a WebVTT file and write it back in canonical form
    Parse {
        #[arg(long)]
        vtt: PathBuf,
        #[command(flatten)]
        target: CaptionTarget,
    },
    /// Rebuild a caption track from an OCR dump
    FromOcr {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        fps: f64,
        #[arg(long)]
        min_conf: Option<f64>,
        /// Longest dropout (frames) bridged inside one caption
        #[arg(long)]
        bridge: Option<u64>,
        #[command(flatten)]
        target: CaptionTarget,
    },
}

#[derive(Args)]
struct CaptionTarget {
    /// Output file (default: stdout unless --clip is given)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Store as captions/<CLIP>.vtt in the data directory
    #[arg(long)]
    clip: Option<String>,
}

#[derive(Subcommand)]
enum SentencesCmd {
    /// Merge a clip's caption cues into sentence spans (JSON lines)
    Assemble {
        #[arg(long)]
        clip: String,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, default_value_t = AssemblyPolicy::default().max_gap_ms)]
    max_gap_ms: u64,
    #[arg(long, default_value_t = AssemblyPolicy::default().max_sentence_ms)]
    max_sentence_ms: u64,
}

impl PolicyArgs {
    fn policy(&self) -> AssemblyPolicy {
        AssemblyPolicy {
            max_gap_ms: self.max_gap_ms,
            max_sentence_ms: self.max_sentence_ms,
            ..AssemblyPolicy::default()
        }
    }
}

#[derive(Subcommand)]
enum SegmentCmd {
    /// Plan sentence segments for a clip and write its sentence records
    Plan {
        #[arg(long)]
        clip: String,
        #[arg(long, default_value_t = PlanParams::default().pad_ms)]
        pad_ms: u64,
        #[arg(long, default_value_t = PlanParams::default().min_ms)]
        min_ms: u64,
        #[arg(long, default_value_t = PlanParams::default().max_ms)]
        max_ms: u64,
        /// Span JSON lines to plan from (default: assemble captions/<CLIP>.vtt)
        #[arg(long)]
        spans: Option<PathBuf>,
        #[command(flatten)]
        policy: PolicyArgs,
        #[arg(long)]
        emit_cutlist: Option<PathBuf>,
        /// Replace existing records for the clip, discarding review edits
        #[arg(long)]
        force: bool,
    },
}

#[derive(Subcommand)]
enum PoseCmd {
    /// Read a wire-format stream and store it as pose/<ID>.sdwp
    Ingest {
        #[arg(long)]
        sentence: String,
        #[arg(long)]
        fps: f32,
        /// Wire-format JSON lines; `-` reads stdin
        #[arg(long, default_value = "-")]
        stream: String,
    },
    /// Apply the region and outlier filters to a stored pose file
    Filter {
        #[arg(long)]
        sentence: String,
        #[arg(long, default_value_t = FilterConfig::default().max_velocity)]
        max_velocity: f64,
        #[arg(long, default_value_t = FilterConfig::default().max_repair_gap)]
        max_repair_gap: usize,
        /// Expected signer region as X_MIN,X_MAX,Y_MIN,Y_MAX
        #[arg(long, value_parser = parse_region)]
        region: Option<Region>,
    },
}

fn parse_region(s: &str) -> Result<Region, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x_min, x_max, y_min, y_max] => Ok(Region { x_min, x_max, y_min, y_max }),
        _ => Err("expected X_MIN,X_MAX,Y_MIN,Y_MAX".into()),
    }
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    run(cli)
}

fn run(cli: Cli) -> Result<()> {
    let data = cli.data;
    match cli.command {
        Command::Clip(ClipCmd::Add { manifest }) => {
            let text = fs::read_to_string(&manifest)
                .with_context(|| format!("reading {}", manifest.display()))?;
            let m: ClipManifest = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", manifest.display()))?;
            let id = m.clip_id.clone();
            Store::open(&data)?.put_manifest(m)?;
            eprintln!("added clip {id}");
        }
        Command::Captions(CaptionsCmd::Parse { vtt, target }) => {
            let bytes = fs::read(&vtt).with_context(|| format!("reading {}", vtt.display()))?;
            let parsed = caption::parse_webvtt(&bytes)
                .with_context(|| format!("parsing {}", vtt.display()))?;
            report(&vtt.display().to_string(), &parsed.diagnostics);
            write_captions(&data, &target, &caption::serialize_webvtt(&parsed.cues)?)?;
        }
        Command::Captions(CaptionsCmd::FromOcr {
            dump,
            fps,
            min_conf,
            bridge,
            target,
        }) => {
            let mut cfg = TrackConfig::for_fps(fps)?;
            if let Some(c) = min_conf {
                cfg.min_confidence = c;
            }
            if let Some(b) = bridge {
                cfg.max_bridge_frames = b;
            }
            cfg.validate()?;
            let file = File::open(&dump).with_context(|| format!("opening {}", dump.display()))?;
            let (observations, diagnostics) = ocr::read_ocr_dump(BufReader::new(file))?;
            report(&dump.display().to_string(), &diagnostics);
            let cues = ocr::track_cues(&observations, &cfg);
            eprintln!("{} observations -> {} cues", observations.len(), cues.len());
            write_captions(&data, &target, &caption::serialize_webvtt(&cues)?)?;
        }
        Command::Sentences(SentencesCmd::Assemble { clip, policy, out }) => {
            let spans = assemble_clip(&data, &clip, &policy.policy())?;
            let jsonl = store::write_jsonl(&spans);
            match out {
                Some(path) => store::write_atomic(&path, &jsonl)?,
                None => io::stdout().write_all(&jsonl)?,
            }
        }
        Command::Segment(SegmentCmd::Plan {
            clip,
            pad_ms,
            min_ms,
            max_ms,
            spans,
            policy,
            emit_cutlist,
            force,
        }) => {
            let store = Store::open(&data)?;
            let manifest = store
                .manifest(&clip)
                .with_context(|| format!("no manifest for clip {clip}; run `sdw clip add` first"))?;
            let spans: Vec<SentenceSpan> = match spans {
                Some(path) => store::read_jsonl(&path)?,
                None => assemble_clip(&data, &clip, &policy.policy())?,
            };
            let plan = segment::plan_segments(&spans, &manifest, PlanParams { pad_ms, min_ms, max_ms })?;
            if let Some(path) = emit_cutlist {
                store::write_atomic(&path, segment::emit_cut_commands(&plan, &manifest).as_bytes())?;
            }
            if store.dir().sentences(&clip).exists() && !force {
                bail!("sentences for clip {clip} already exist; pass --force to replace them");
            }
            let records = store::records_from_plan(&clip, &spans, &plan);
            let count = |flag| plan.entries.iter().filter(|e| e.has(flag)).count();
            eprintln!(
                "{} spans, {} records ({} clamped, {} too short, {} too long)",
                spans.len(),
                records.len(),
                count(SegmentFlag::Clamped),
                count(SegmentFlag::TooShort),
                count(SegmentFlag::TooLong),
            );
            store.replace_clip_records(&clip, records)?;
        }
        Command::Pose(PoseCmd::Ingest { sentence, fps, stream }) => {
            let ingested = if stream == "-" {
                pose::ingest_pose_stream(io::stdin().lock(), &sentence, fps)?
            } else {
                let file = File::open(&stream).with_context(|| format!("opening {stream}"))?;
                pose::ingest_pose_stream(BufReader::new(file), &sentence, fps)?
            };
            report(&stream, &ingested.diagnostics);
            let path = Store::open(&data)?.attach_pose(&ingested.sequence)?;
            eprintln!("{} frames -> {}", ingested.sequence.frames.len(), path.display());
        }
        Command::Pose(PoseCmd::Filter {
            sentence,
            max_velocity,
            max_repair_gap,
            region,
        }) => {
            let cfg = FilterConfig {
                region: region.unwrap_or(FilterConfig::default().region),
                max_velocity,
                max_repair_gap,
            };
            cfg.validate()?;
            let store = Store::open(&data)?;
            let path = store.dir().pose(&sentence);
            let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
            let seq = pose::decode_pose(&bytes, sentence.as_str())?;
            let before = seq.present_group_count();
            let filtered = pose::outlier_filter(&pose::bbox_filter(&seq, &cfg), &cfg);
            eprintln!(
                "{} present groups -> {}",
                before,
                filtered.present_group_count()
            );
            store.attach_pose(&filtered)?;
        }
        Command::Stats { histogram, include } => {
            let stats = Store::open(&data)?.write_stats(&include)?;
            if let Some(path) = histogram {
                store::write_atomic(&path, store::vocab_histogram_csv(&stats).as_bytes())?;
            }
            println!(
                "{:.4} h, {} sentences, {} words, {} vocab, {} signers",
                stats.total_hours, stats.n_sentences, stats.n_words, stats.vocab_size, stats.n_signers
            );
        }
        Command::Export { out, include } => {
            let release = Store::open(&data)?.export_release(&out, &include)?;
            println!(
                "{} sentences, {} pose files, {} clips -> {}",
                release.n_sentences,
                release.n_pose_files,
                release.clips.len(),
                out.display()
            );
        }
        Command::Serve { port, bind, ui } => {
            let store = Arc::new(Store::open(&data)?);
            let ui = ui.or_else(|| Some(data.join("ui")).filter(|p| p.is_dir()));
            tokio::runtime::Runtime::new()?
                .block_on(sdw_server::serve(store, SocketAddr::new(bind, port), ui))?;
        }
    }
    Ok(())
}

fn assemble_clip(data: &Path, clip: &str, policy: &AssemblyPolicy) -> Result<Vec<SentenceSpan>> {
    let path = store::DataDir::new(data).captions(clip);
    let mut bytes = Vec::new();
    File::open(&path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut bytes)?;
    let parsed = caption::parse_webvtt(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    report(&path.display().to_string(), &parsed.diagnostics);
    Ok(caption::assemble_sentences(&parsed.cues, policy))
}

fn write_captions(data: &Path, target: &CaptionTarget, vtt: &str) -> Result<()> {
    if let Some(clip) = &target.clip {
        if !segment::is_valid_clip_id(clip) {
            bail!("invalid clip id `{clip}`");
        }
        store::write_atomic(&store::DataDir::new(data).captions(clip), vtt.as_bytes())?;
    }
    match &target.out {
        Some(path) => store::write_atomic(path, vtt.as_bytes())?,
        None if target.clip.is_none() => io::stdout().write_all(vtt.as_bytes())?,
        None => {}
    }
    Ok(())
}

fn report(source: &str, diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        eprintln!("warning: {source}: {d}");
    }
}
