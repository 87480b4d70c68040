use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tt_cli::alignments::{read_alignments, write_alignments};
use tt_cli::bench::{bench_audio, bench_encode};
use tt_cli::checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
use tt_cli::dataset::{read_dataset, write_dataset};
use tt_cli::eval::{decode_all, delay_report, evaluate, DelaySource};
use tt_cli::report::{bench_grid, table, JsonLines};
use tt_cli::runcfg::RunConfig;
use tt_cli::training::parallel_step;
use tt_cli::ysched::{run_concurrent, WallClock};
use tt_cli::parse_context;
use tt_core::attention::{ContextConfig, FULL_CONTEXT};
use tt_core::data::{generate_dataset, Dataset, GenParams};
use tt_core::infer::{emission_ms, greedy_decode, stream_encode, y_start, LabelCache};
use tt_core::metrics::BenchMode;
use tt_core::nn::ParamStore;
use tt_core::train::{onset_alignments, reference_alignments, ConfigMenu, Trainer};
use tt_core::transducer::{Model, ModelConfig, Vocab};

#[derive(Parser)]
#[command(name = "tt", version, about = "Transformer-Transducer toolkit: synthetic data, variable-context training, streaming and Y-model decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grapheme dataset.
    GenData(GenDataArgs),
    /// Train a model from a TOML run file.
    Train(TrainArgs),
    /// Offline decode of a dataset.
    Decode(DecodeArgs),
    /// Batch-step streaming decode of a dataset.
    Stream(StreamArgs),
    /// Dual-latency (Y-model) streaming decode with partial and final events.
    YDecode(YDecodeArgs),
    /// Viterbi emission times of the reference transcripts.
    Align(AlignArgs),
    /// Token accuracy, WER and optional alignment delay.
    Eval(EvalArgs),
    /// Encoder timing per inference mode and step size.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "utt-")]
    prefix: String,
    #[arg(long)]
    min_tokens: Option<usize>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    max_span: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    /// Put full token evidence on the last frame of each span only.
    #[arg(long)]
    late_evidence: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Run file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the step count of the run file.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Clone)]
struct ContextArgs {
    /// Right contexts in `[k] x m + ...` notation; defaults to the
    /// checkpoint's default configuration.
    #[arg(long)]
    context: Option<String>,
    /// Left context in frames for every layer (unbounded if omitted).
    #[arg(long)]
    left: Option<usize>,
    #[arg(long, default_value_t = 0)]
    output_delay: usize,
}

impl ContextArgs {
    fn resolve(&self, header: &CheckpointHeader) -> Result<ContextConfig> {
        match &self.context {
            Some(text) => Ok(parse_context(&header.config, text, self.left, self.output_delay)?),
            None => Ok(header.default_context.clone()),
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    ctx: ContextArgs,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Transcripts as JSON lines (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    ctx: ContextArgs,
    /// Input frames per batch step.
    #[arg(long, default_value_t = 4)]
    step: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Schedule {
    Sequential,
    Concurrent,
}

#[derive(Args)]
struct YDecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    low: String,
    #[arg(long)]
    high: String,
    /// Number of shared lower layers.
    #[arg(long)]
    shared: usize,
    #[arg(long)]
    left: Option<usize>,
    #[arg(long, default_value_t = 0)]
    output_delay: usize,
    #[arg(long, default_value_t = 4)]
    step: usize,
    #[arg(long, value_enum, default_value = "sequential")]
    schedule: Schedule,
    /// Event log as JSON lines (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    ctx: ContextArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Configurations to evaluate (repeatable); the default one if omitted.
    #[arg(long = "context")]
    contexts: Vec<String>,
    #[arg(long)]
    left: Option<usize>,
    #[arg(long, default_value_t = 0)]
    output_delay: usize,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Full-context reference checkpoint; enables the delay column.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "forced")]
    delay_source: DelayArg,
    /// Structured report as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DelayArg {
    Forced,
    Decoded,
}

#[derive(Args)]
struct BenchArgs {
    /// Checkpoint to time; a freshly initialized default model otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Modes to time (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "training,query-slice,batch-step")]
    mode: Vec<String>,
    /// Batch-step sizes / query blocks (comma-separated).
    #[arg(long, value_delimiter = ',', default_value = "1,4,8,32")]
    steps: Vec<usize>,
    #[arg(long, default_value_t = 100.0)]
    seconds: f64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value = "[0] x 6")]
    context: String,
    #[arg(long, default_value_t = tt_core::attention::STREAMING_LEFT)]
    left: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Decode(a) => decode(a),
        Command::Stream(a) => stream(a),
        Command::YDecode(a) => y_decode(a),
        Command::Align(a) => align(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut params = GenParams::default();
    if let Some(v) = a.min_tokens {
        params.min_tokens = v;
    }
    if let Some(v) = a.max_tokens {
        params.max_tokens = v;
    }
    if let Some(v) = a.max_span {
        params.max_span = v;
    }
    if let Some(v) = a.noise {
        params.noise = v;
    }
    params.late_evidence = a.late_evidence;
    let ds = generate_dataset(a.n, a.seed, &a.prefix, &Vocab::graphemes(), &params)?;
    write_dataset(&a.out, &ds)?;
    eprintln!("wrote {} utterances ({:.1} s of audio) to {}", ds.len(), ds.audio_seconds(), a.out.display());
    Ok(())
}

fn load_model_and_data(model: &Path, data: &Path) -> Result<(CheckpointHeader, Model, ParamStore, Dataset)> {
    let (header, m, store) = load_checkpoint(model)?;
    let ds = read_dataset(data)?;
    if ds.vocab != m.config.vocab {
        bail!("dataset {} uses a different vocabulary than model {}", data.display(), model.display());
    }
    if ds.feature_dim != m.config.input_dim && !ds.is_empty() {
        bail!("dataset feature dimension {} does not match model input {}", ds.feature_dim, m.config.input_dim);
    }
    Ok((header, m, store, ds))
}

fn train(a: TrainArgs) -> Result<()> {
    let run = RunConfig::load(&a.config)?;
    let ds = read_dataset(&run.data)?;
    if ds.vocab != run.model.vocab {
        bail!("training data vocabulary differs from the model's");
    }
    let (model, store) = Model::new(run.model.clone(), run.seed)?;
    let menu = ConfigMenu::from_model(&run.model, run.train.left_context)?;
    let default_context = menu.max_lookahead(&run.model).clone();
    let mut trainer = Trainer::new(model, store, menu, run.options())?;
    if run.train.onset_reference {
        trainer.set_references(onset_alignments(&trainer.model, &ds.utterances)?);
    } else if let Some(reference) = &run.reference {
        let refs = match &run.alignments {
            Some(p) if p.exists() => read_alignments(p)?,
            cached => {
                let (rh, rm, rs) = load_checkpoint(reference)?;
                let refs = reference_alignments(&rm, &rs, &ds.utterances, &rh.default_context)?;
                if let Some(p) = cached {
                    write_alignments(p, &refs)?;
                }
                refs
            }
        };
        trainer.set_references(refs);
    }
    let mut log = match &run.log {
        Some(p) => Some(JsonLines::create(Some(p))?),
        None => None,
    };
    let steps = a.steps.unwrap_or(run.train.steps);
    let header = |trainer: &Trainer| CheckpointHeader {
        config: run.model.clone(),
        default_context: default_context.clone(),
        steps: trainer.steps_done(),
    };
    let t0 = Instant::now();
    for i in 1..=steps {
        let r = parallel_step(&mut trainer, &ds.utterances)?;
        if let Some(l) = log.as_mut() {
            l.write(&r)?;
        }
        if i % 100 == 0 || i == steps {
            eprintln!("step {i}/{steps} config {} loss {:.4} ({:.0} s)", r.config, r.loss, t0.elapsed().as_secs_f64());
        }
        let every = run.train.checkpoint_every;
        if every > 0 && i % every == 0 && i != steps {
            save_checkpoint(&run.out, &header(&trainer), &trainer.store)?;
        }
    }
    if let Some(l) = log.as_mut() {
        l.flush()?;
    }
    save_checkpoint(&run.out, &header(&trainer), &trainer.store)?;
    eprintln!("saved {} ({} skipped utterances)", run.out.display(), trainer.skipped());
    Ok(())
}

#[derive(Serialize)]
struct Transcript<'a> {
    id: &'a str,
    text: String,
    reference: String,
    labels: &'a [usize],
    emission_ms: Vec<f64>,
    score: f64,
}

fn write_transcripts(
    out: Option<&Path>,
    m: &Model,
    cfg: &ContextConfig,
    ds: &Dataset,
    hyps: &[tt_core::infer::Hypothesis],
) -> Result<()> {
    let mut w = JsonLines::create(out)?;
    for (u, h) in ds.utterances.iter().zip(hyps) {
        w.write(&Transcript {
            id: &u.id,
            text: m.config.vocab.decode(&h.labels),
            reference: m.config.vocab.decode(&u.labels),
            labels: &h.labels,
            emission_ms: emission_ms(m, cfg, &h.times),
            score: h.score,
        })?;
    }
    w.flush()?;
    let t = tt_cli::eval::tally(m, &ds.utterances, hyps);
    eprintln!("token accuracy {:.4}  WER {:.4}", t.token_accuracy(), t.wer());
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let (header, m, store, ds) = load_model_and_data(&a.model, &a.data)?;
    let cfg = a.ctx.resolve(&header)?;
    let hyps = decode_all(&m, &store, &ds.utterances, &cfg, a.beam)?;
    write_transcripts(a.out.as_deref(), &m, &cfg, &ds, &hyps)
}

fn stream(a: StreamArgs) -> Result<()> {
    let (header, m, store, ds) = load_model_and_data(&a.model, &a.data)?;
    let mut cfg = a.ctx.resolve(&header)?;
    if a.ctx.context.is_none() && a.ctx.left.is_some() {
        cfg = cfg.with_left(a.ctx.left);
    }
    let hyps = ds
        .utterances
        .iter()
        .map(|u| {
            let enc = stream_encode(&m, &store, &u.features, &cfg, a.step)?;
            greedy_decode(&m, &store, &enc, &mut LabelCache::new())
        })
        .collect::<tt_core::Result<Vec<_>>>()?;
    write_transcripts(a.out.as_deref(), &m, &cfg, &ds, &hyps)
}

#[derive(Serialize)]
struct UttEvent<'a, E: Serialize> {
    id: &'a str,
    #[serde(flatten)]
    event: E,
}

#[derive(Serialize)]
struct FinalSummary<'a> {
    id: &'a str,
    text: &'a str,
    low_text: &'a str,
    flush_frames: usize,
    flush_wall_ms: f64,
}

fn y_decode(a: YDecodeArgs) -> Result<()> {
    let (_, m, store, ds) = load_model_and_data(&a.model, &a.data)?;
    let low = parse_context(&m.config, &a.low, a.left, a.output_delay)?;
    let high = parse_context(&m.config, &a.high, a.left, a.output_delay)?;
    let mut w = JsonLines::create(a.out.as_deref())?;
    let mut summary = Vec::new();
    for u in &ds.utterances {
        let (events, result) = match a.schedule {
            Schedule::Sequential => {
                let clock = WallClock::start();
                let mut s = y_start(&m, &store, &low, &high, a.shared)?;
                for w in s.warnings() {
                    eprintln!("warning: {w}");
                }
                let mut t = 0;
                while t < u.frames() {
                    let end = (t + a.step).min(u.frames());
                    s.feed(&u.features.slice_rows(t, end), &clock)?;
                    t = end;
                }
                let result = s.finalize(&clock)?;
                (s.events().to_vec(), result)
            }
            Schedule::Concurrent => {
                let run = run_concurrent(&m, &store, &low, &high, a.shared, &u.features, a.step)?;
                (run.events, run.result)
            }
        };
        for event in &events {
            w.write(&UttEvent { id: &u.id, event })?;
        }
        summary.push(vec![
            u.id.clone(),
            result.low_text.clone(),
            result.text.clone(),
            result.flush_frames.to_string(),
            format!("{:.2}", result.flush_wall_ms),
        ]);
        w.write(&FinalSummary {
            id: &u.id,
            text: &result.text,
            low_text: &result.low_text,
            flush_frames: result.flush_frames,
            flush_wall_ms: result.flush_wall_ms,
        })?;
    }
    w.flush()?;
    eprint!("{}", table(&["id", "low partial", "final", "flush frames", "flush ms"], &summary));
    Ok(())
}

fn align(a: AlignArgs) -> Result<()> {
    let (header, m, store, ds) = load_model_and_data(&a.model, &a.data)?;
    let cfg = a.ctx.resolve(&header)?;
    let refs = reference_alignments(&m, &store, &ds.utterances, &cfg)?;
    write_alignments(&a.out, &refs)?;
    eprintln!("wrote {} alignments to {}", refs.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    config: String,
    /// `None` when some layer has unbounded right context.
    lookahead_ms: Option<f64>,
    utterances: usize,
    token_accuracy: f64,
    wer: f64,
    delay_ms: Option<f64>,
    delay_words: Option<usize>,
}

fn eval(a: EvalArgs) -> Result<()> {
    let (header, m, store, ds) = load_model_and_data(&a.model, &a.data)?;
    let configs = if a.contexts.is_empty() {
        vec![header.default_context.clone()]
    } else {
        a.contexts
            .iter()
            .map(|t| parse_context(&m.config, t, a.left, a.output_delay))
            .collect::<tt_cli::Result<Vec<_>>>()?
    };
    let reference = match &a.reference {
        Some(p) => Some(load_checkpoint(p).with_context(|| format!("loading reference {}", p.display()))?),
        None => None,
    };
    let source = match a.delay_source {
        DelayArg::Forced => DelaySource::Forced,
        DelayArg::Decoded => DelaySource::Decoded,
    };
    let mut rows = Vec::new();
    for cfg in &configs {
        let r = evaluate(&m, &store, &ds.utterances, cfg, a.beam)?;
        let delay = match &reference {
            Some((rh, rm, rs)) => Some(delay_report(&m, &store, cfg, (rm, rs, &rh.default_context), &ds.utterances, source)?),
            None => None,
        };
        rows.push(EvalRow {
            config: r.config,
            lookahead_ms: (!cfg.right.iter().any(|&r| r >= FULL_CONTEXT))
                .then(|| tt_core::train::cumulative_lookahead_for(&m.config, cfg)),
            utterances: r.utterances,
            token_accuracy: r.token_accuracy,
            wer: r.wer,
            delay_ms: delay.as_ref().map(|d| d.mean_ms),
            delay_words: delay.as_ref().map(|d| d.words),
        });
    }
    if let Some(p) = &a.out {
        let mut w = JsonLines::create(Some(p))?;
        for r in &rows {
            w.write(r)?;
        }
        w.flush()?;
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.config.clone(),
                r.lookahead_ms.map_or("full".into(), |l| format!("{l:.0}ms")),
                format!("{:.2}%", 100.0 * r.wer),
                format!("{:.2}%", 100.0 * r.token_accuracy),
                r.delay_ms.map_or("-".into(), |d| format!("{d:.0}msec")),
            ]
        })
        .collect();
    print!("{}", table(&["config", "lookahead", "WER", "token acc", "alignment delay"], &body));
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let (m, store) = match &a.model {
        Some(p) => {
            let (_, m, s) = load_checkpoint(p)?;
            (m, s)
        }
        None => Model::new(ModelConfig::default(), a.seed)?,
    };
    let cfg = parse_context(&m.config, &a.context, Some(a.left), 0)?;
    if cfg.right.iter().any(|&r| r >= FULL_CONTEXT) {
        bail!("benchmark configurations need finite right contexts");
    }
    let frames = (a.seconds * 1000.0 / m.config.frame_ms).round() as usize;
    let params = GenParams {
        feature_dim: m.config.input_dim,
        ..GenParams::default()
    };
    let x = bench_audio(&m.config.vocab, &params, a.seed, frames)?;
    let modes = a
        .mode
        .iter()
        .map(|s| s.parse::<BenchMode>())
        .collect::<tt_core::Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut w = JsonLines::create(a.out.as_deref())?;
    for mode in modes {
        let steps: &[usize] = if mode == BenchMode::Training { &[frames] } else { &a.steps };
        for &step in steps {
            let row = bench_encode(&m, &store, &x, &cfg, mode, step, a.repeats)?;
            w.write(&row)?;
            rows.push(row);
        }
    }
    w.flush()?;
    eprint!("{}", bench_grid(&rows));
    Ok(())
}
