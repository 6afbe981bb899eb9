use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use structrack::io::{
    parse_det_file, parse_gt_file, parse_results_file, write_results, SequenceSource,
};
use structrack::metrics::{evaluate, MetricsReport, DEFAULT_IOU_THRESHOLD};
use structrack::synth::{generate, ScenarioConfig};
use structrack::{run_detections, Error, TrackerConfig};

#[derive(Parser)]
#[command(
    name = "structrack",
    version,
    about = "Online multi-object tracker with structural constraints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a MOTChallenge detection file.
    Track {
        #[arg(long, required_unless_present = "seed_config")]
        det: Option<PathBuf>,
        #[arg(long, required_unless_present = "seed_config")]
        out: Option<PathBuf>,
        /// Frame image directory, enables appearance costs.
        #[arg(long)]
        img: Option<PathBuf>,
        /// key=value tracker configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        no_structural: bool,
        #[arg(long)]
        no_appearance: bool,
        /// Print the effective configuration and exit.
        #[arg(long)]
        seed_config: bool,
    },
    /// Score a result file against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        res: PathBuf,
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
        iou: f64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Generate a synthetic sequence.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a synthetic scenario for each parameter value and print CSV rows.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Base tracker configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        no_structural: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Kv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    #[value(name = "phi_s")]
    PhiS,
    Gate,
    /// Motion weight; appearance gets one minus it.
    Lambda,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::PhiS => "phi_s",
            SweepParam::Gate => "gate",
            SweepParam::Lambda => "lambda",
        }
    }

    fn apply(self, cfg: &mut TrackerConfig, v: f64) {
        match self {
            SweepParam::PhiS => cfg.structural.phi_s = v,
            SweepParam::Gate => cfg.gate.gate = v,
            SweepParam::Lambda => {
                cfg.weights.lambda_motion = v;
                cfg.weights.lambda_appearance = 1.0 - v;
            }
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 2,
        _ => 3,
    }
}

fn tracker_config(size: (f64, f64), file: Option<&Path>) -> Result<TrackerConfig, Error> {
    let mut cfg = TrackerConfig::for_image(size.0, size.1);
    if let Some(path) = file {
        cfg.apply_file(path)?;
    }
    Ok(cfg)
}

fn track(
    det: &Path,
    out: &Path,
    img: Option<PathBuf>,
    config: Option<&Path>,
    no_structural: bool,
    no_appearance: bool,
) -> Result<(), Error> {
    let detections = parse_det_file(det)?;
    for w in &detections.warnings {
        log::warn!("{}:{}: {}", det.display(), w.line, w.message);
    }
    let mut source = SequenceSource::discover(det, &detections);
    if img.is_some() {
        source.image_dir = img;
    }
    let size = source
        .image_size
        .map(|(w, h)| (w as f64, h as f64))
        .unwrap_or_else(|| {
            let (mut w, mut h) = (1.0f64, 1.0f64);
            for d in detections.frames.values().flatten() {
                w = w.max(d.bbox.right());
                h = h.max(d.bbox.bottom());
            }
            (w, h)
        });
    let mut cfg = tracker_config(size, config)?;
    if no_structural {
        cfg.structural_enabled = false;
    }
    if no_appearance || source.image_dir.is_none() {
        cfg.appearance_enabled = false;
    }
    cfg.validate()?;
    let run = run_detections(&detections, source.frame_count, &cfg, Some(&source))?;
    write_results(&run.records, out)?;
    let t = run.timings;
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    println!("frames {}  records {}", t.frames, run.records.len());
    println!(
        "costs {:.1} ms  structural {:.1} ms  assignment {:.1} ms  lifecycle {:.1} ms  total {:.1} ms",
        ms(t.costs),
        ms(t.structural),
        ms(t.assignment),
        ms(t.lifecycle),
        ms(t.total())
    );
    if t.frames > 0 {
        println!(
            "{:.1} fps",
            t.frames as f64 / t.total().as_secs_f64().max(1e-9)
        );
    }
    Ok(())
}

fn sweep(
    scenario: &Path,
    param: SweepParam,
    values: &[f64],
    config: Option<&Path>,
    no_structural: bool,
) -> Result<(), Error> {
    let sc = ScenarioConfig::from_file(scenario)?;
    let data = generate(&sc)?;
    let size = (sc.image_width as f64, sc.image_height as f64);
    let mut base = tracker_config(size, config)?;
    base.appearance_enabled = false;
    if no_structural {
        base.structural_enabled = false;
    }
    let rows: Vec<Result<MetricsReport, Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = values
            .iter()
            .map(|&v| {
                let data = &data;
                s.spawn(move || {
                    let mut cfg = base;
                    param.apply(&mut cfg, v);
                    cfg.validate()?;
                    let run = run_detections(&data.detections, data.frame_count, &cfg, None)?;
                    evaluate(&data.ground_truth, &run.records, DEFAULT_IOU_THRESHOLD)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    println!("param,value,mota,motp,mt,ml,faf,fp,fn,idsw,gt");
    for (v, row) in values.iter().zip(rows) {
        let r = row?;
        println!(
            "{},{},{:.6},{:.6},{},{},{:.6},{},{},{},{}",
            param.name(),
            v,
            r.mota,
            r.motp,
            r.mostly_tracked,
            r.mostly_lost,
            r.faf,
            r.false_positives,
            r.false_negatives,
            r.id_switches,
            r.gt_boxes
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Track {
            det,
            out,
            img,
            config,
            no_structural,
            no_appearance,
            seed_config,
        } => {
            if seed_config {
                let size = det
                    .as_deref()
                    .map(parse_det_file)
                    .transpose()?
                    .map(|d| SequenceSource::discover(det.clone().expect("parsed above"), &d))
                    .and_then(|s| s.image_size)
                    .map_or((1920.0, 1080.0), |(w, h)| (w as f64, h as f64));
                print!("{}", tracker_config(size, config.as_deref())?.to_kv());
                return Ok(());
            }
            let (det, out) = (
                det.expect("required by clap"),
                out.expect("required by clap"),
            );
            track(
                &det,
                &out,
                img,
                config.as_deref(),
                no_structural,
                no_appearance,
            )
        }
        Command::Evaluate {
            gt,
            res,
            iou,
            format,
        } => {
            let gt = parse_gt_file(&gt)?;
            let res = parse_results_file(&res)?;
            let report = evaluate(&gt, &res, iou)?;
            match format {
                Format::Table => print!("{}", report.to_table()),
                Format::Kv => print!("{}", report.to_kv()),
            }
            Ok(())
        }
        Command::Synth { config, out } => {
            let cfg = ScenarioConfig::from_file(&config)?;
            let data = generate(&cfg)?;
            data.write_to(&out)?;
            println!(
                "{} frames, {} ground-truth boxes, {} detections written to {}",
                data.frame_count,
                data.ground_truth.considered_count(),
                data.detections.len(),
                out.display()
            );
            Ok(())
        }
        Command::Sweep {
            scenario,
            param,
            values,
            config,
            no_structural,
        } => sweep(&scenario, param, &values, config.as_deref(), no_structural),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
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
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
