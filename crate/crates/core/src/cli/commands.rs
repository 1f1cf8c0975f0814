use std::fs::File;
use std::io::{self, BufWriter, IsTerminal, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};

use crate::analysis::{
    aggregate, compare, emit_plot, load_runs, power_series, randomized_schedule, summarize_conditions,
    AggregateCurve, ConditionSummary,
};
use crate::probes::simulated::SimulatedProbe;
use crate::probes::{detect_probes, session_schema, Platform, Probe};
use crate::runner::{self, exit_code, ChildOutput, RunOutcome, RunSpec};
use crate::sampler::{Sample, SamplerConfig, SessionHandle, Tee};
use crate::timing::{Clock, SystemClock};
use crate::trace::{summarize, SessionMeta, Trace, TraceWriter};

use super::{AnalyzeArgs, CliConfig, ProbeSelection, ProbesArgs, ScheduleArgs, DEFAULT_OUTPUT};

fn report(result: Result<i32>) -> i32 {
    result.unwrap_or_else(|e| {
        log::error!("{e:#}");
        exit_code::INTERNAL
    })
}

/// Where the trace goes: `None` is stdout.
fn output_target(config: &CliConfig) -> Option<PathBuf> {
    match &config.output_path {
        Some(p) if p.as_os_str() == "-" => None,
        Some(p) => Some(p.clone()),
        None if io::stdout().is_terminal() => Some(PathBuf::from(DEFAULT_OUTPUT)),
        None => None,
    }
}

/// Samples every available metric while the command runs and returns the
/// process exit code.
pub fn main_measure(config: &CliConfig) -> i32 {
    report(measure(config))
}

fn measure(config: &CliConfig) -> Result<i32> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock::start());
    let (probes, platform, cpu_vendor): (Vec<Box<dyn Probe>>, _, _) = match &config.probe_selection {
        ProbeSelection::Auto => {
            let det = detect_probes();
            for w in &det.warnings {
                log::warn!("{w}");
            }
            (det.probes, det.platform, det.cpu_vendor)
        }
        ProbeSelection::Simulated(spec) => {
            let probe = SimulatedProbe::new(spec.clone(), clock.clone()).context("simulated probe")?;
            (vec![Box::new(probe)], Some(Platform::Simulated), None)
        }
    };
    let schema = session_schema(&probes);
    if schema.is_empty() {
        bail!("no metrics can be read on this host");
    }

    let target = output_target(config);
    let child_output = match (&config.command_output_path, &target) {
        (Some(p), _) => ChildOutput::File(p.clone()),
        (None, None) => ChildOutput::StdoutToStderr,
        (None, Some(_)) => ChildOutput::Inherit,
    };
    let mut run_spec = RunSpec::new(config.argv.clone())?
        .with_max_execution_s(config.max_execution_s)
        .with_output(child_output);
    run_spec.forward_signals = true;

    let out: Box<dyn Write + Send> = match &target {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout()),
    };
    let meta = SessionMeta::current(config.interval_ms, platform, cpu_vendor, &config.argv);
    let writer = TraceWriter::new(out, &meta, &schema, !config.no_metadata).context("writing trace header")?;
    let rows: Option<Vec<Sample>> = config.summary.then(Vec::new);
    let sampler_config = SamplerConfig::new(config.interval_ms, schema.clone())?;

    let session = SessionHandle::spawn(sampler_config, probes, clock, Tee(writer, rows));
    let outcome = runner::execute(&run_spec, &session.stop_signal());
    let (stats, sink) = session.join();

    if let RunOutcome::SpawnError { message, .. } = &outcome {
        log::error!("{message}");
    }
    let stats = stats.context("sampling failed")?;
    log::info!(
        "{} samples, {} missed ticks, {} failed reads, mean lateness {:?}",
        stats.samples,
        stats.missed_ticks,
        stats.failed_reads,
        stats.mean_lateness
    );
    if let Some(Tee(_, Some(rows))) = sink {
        let trace = Trace { meta, schema, rows };
        match summarize(&trace) {
            Ok(s) => eprintln!("{s}"),
            Err(e) => eprintln!("wattrace: no energy summary: {e}"),
        }
    }
    Ok(outcome.exit_code())
}

pub fn main_analyze(args: &AnalyzeArgs) -> i32 {
    report(analyze(args).map(|()| 0))
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let sets = load_runs(&args.dir)?;
    if sets.is_empty() {
        bail!("no <condition>/<run>.csv traces under {}", args.dir.display());
    }
    println!("{}", ConditionSummary::HEADER);
    for row in summarize_conditions(&sets)? {
        println!("{row}");
    }

    let mut curves: Vec<(String, AggregateCurve)> = Vec::new();
    for set in &sets {
        let series = set
            .runs
            .iter()
            .map(|(id, t)| power_series(t, id.as_str()))
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("condition {}", set.condition))?;
        match aggregate(&series) {
            Ok(c) => curves.push((set.condition.clone(), c)),
            Err(e) => log::warn!("{}: not aggregated: {e}", set.condition),
        }
    }

    let baseline = curves.iter().find(|(c, _)| c.eq_ignore_ascii_case(&args.baseline));
    match baseline {
        Some((base_name, base)) => {
            for (name, curve) in curves.iter().filter(|(c, _)| c != base_name) {
                println!("\n{name} vs {base_name}:\n{}", compare(curve, base)?);
            }
        }
        None if curves.len() > 1 => log::warn!("baseline {:?} not found; skipping comparisons", args.baseline),
        None => {}
    }

    if let Some(path) = &args.plot {
        let files = emit_plot(&curves, path)?;
        eprintln!("wrote {} and {}", files.image.display(), files.data.display());
    }
    Ok(())
}

pub fn main_schedule(args: &ScheduleArgs) -> i32 {
    report(schedule(args).map(|()| 0))
}

fn schedule(args: &ScheduleArgs) -> Result<()> {
    let seed = args.seed.unwrap_or_else(rand::random);
    let plan = randomized_schedule(&args.conditions, args.repetitions as usize, seed)?;
    let mut out = io::stdout().lock();
    writeln!(out, "# seed: {seed}")?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["position", "condition", "repetition"])?;
    for (i, run) in plan.iter().enumerate() {
        w.write_record([(i + 1).to_string(), run.condition.clone(), run.repetition.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn main_probes(args: &ProbesArgs) -> i32 {
    report(probes(args).map(|()| 0))
}

fn probes(args: &ProbesArgs) -> Result<()> {
    let det = detect_probes();
    if args.json {
        println!("{}", serde_json::to_string_pretty(&det.schema())?);
        return Ok(());
    }
    let show = |v: Option<String>| v.unwrap_or_else(|| "unknown".into());
    println!("platform:   {}", show(det.platform.map(|p| format!("{p:?}"))));
    println!("cpu vendor: {}", show(det.cpu_vendor.map(|v| format!("{v:?}"))));
    for p in &det.probes {
        println!("\n{} ({} metrics)", p.name(), p.capabilities().metrics.len());
        for m in &p.capabilities().metrics {
            println!("  {:<28} {:?}", m.column_name(), m.kind);
        }
    }
    if !det.warnings.is_empty() {
        println!("\nunavailable:");
        for w in &det.warnings {
            println!("  {w}");
        }
    }
    Ok(())
}

