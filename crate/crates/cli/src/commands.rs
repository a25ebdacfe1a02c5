use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use artwalk::attack::{optimize_perturbation, AttackConfig, DetectorObjective, Perturbation, PreparedScene};
use artwalk::compose::{apply_perturbation, InjectOptions};
use artwalk::detect::mock::{serve, MockExit, MockMode};
use artwalk::detect::{Detector, DetectorConfig, DetectorParams, ExternalDetector, SyntheticDetector};
use artwalk::metrics::{save_records, ApMethod, EvalOptions, MetricsReport};
use artwalk::pipeline::{evaluate_images, render_scene, Dataset, Evaluation};
use artwalk::raster::{load_image, save_image, BinaryMask};
use artwalk::scenegen::{generate_dataset, SceneGenConfig};
use artwalk::{Error, Raster64, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{ApMethodArg, ArtArgs, AttackArgs, BatchArgs, Cli, Command, ComposeArgs, DetectorKind, EvaluateArgs, GenArgs, GlobalArgs};

const DEFAULT_SEED: u64 = 7;

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(&cli.global, a),
        Command::Compose(a) => cmd_compose(a),
        Command::Evaluate(a) => cmd_evaluate(&cli.global, a),
        Command::Attack(a) => cmd_attack(&cli.global, a),
        Command::Batch(a) => cmd_batch(&cli.global, a),
        Command::MockAdapter { args } => return mock_adapter(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("artwalk: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}

/// 1 for bad invocations and unreadable inputs, 2 for failures while running.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Io { .. } | Error::Format { .. } | Error::Json { .. } => 1,
        _ => 2,
    }
}

fn mock_adapter(args: &[String]) -> u8 {
    let mode = match MockMode::from_args(args) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("artwalk mock-adapter: {e}");
            return 1;
        }
    };
    match serve(&mode, std::io::stdin().lock(), std::io::stdout().lock()) {
        Ok(MockExit::InputClosed) => 0,
        Ok(MockExit::Crashed) => 3,
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            eprintln!("artwalk mock-adapter: {e}");
            2
        }
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}

/// The detector half of the resolved configuration.
fn detector_settings(g: &GlobalArgs) -> Result<Value> {
    Ok(match g.detector {
        DetectorKind::Synthetic => json!({"kind": "synthetic", "params": synthetic_params(g)?}),
        DetectorKind::Cmd => json!({"kind": "cmd", "command": g.detector_cmd, "timeout_secs": g.timeout}),
    })
}

fn synthetic_params(g: &GlobalArgs) -> Result<DetectorParams> {
    match &g.detector_config {
        Some(p) => read_json(p),
        None => Ok(DetectorParams::default()),
    }
}

fn build_detectors(g: &GlobalArgs) -> Result<Vec<Box<dyn Detector>>> {
    if g.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    match g.detector {
        DetectorKind::Synthetic => {
            if g.detector_cmd.is_some() {
                log::warn!("--detector-cmd is ignored with the synthetic detector");
            }
            let det = SyntheticDetector::new(DetectorConfig {
                params: synthetic_params(g)?,
                ..DetectorConfig::pedestrian()
            })?;
            Ok((0..g.workers).map(|_| Box::new(det.clone()) as Box<dyn Detector>).collect())
        }
        DetectorKind::Cmd => {
            let cmd = g
                .detector_cmd
                .as_deref()
                .ok_or_else(|| Error::Config("--detector cmd needs --detector-cmd".into()))?;
            if !(g.timeout > 0.0 && g.timeout.is_finite()) {
                return Err(Error::Config(format!("timeout {} is not positive", g.timeout)));
            }
            let timeout = Duration::from_secs_f64(g.timeout);
            (0..g.workers)
                .map(|_| ExternalDetector::spawn(cmd, timeout).map(|d| Box::new(d) as Box<dyn Detector>))
                .collect()
        }
    }
}

fn inject_options(blend: f64, orientation: i32) -> Result<InjectOptions> {
    if !(0.0..=1.0).contains(&blend) {
        return Err(Error::Config(format!("blend {blend} outside [0, 1]")));
    }
    Ok(InjectOptions { blend, orientation })
}

/// Art with its perturbation applied, if any.
fn load_art(args: &ArtArgs) -> Result<Option<Raster64>> {
    let Some(path) = &args.art else {
        return Ok(None);
    };
    let art: Raster64 = load_image(path)?;
    match &args.perturbation {
        Some(p) => {
            let delta = Perturbation::load(p)?;
            let art = if delta.channels() == 3 { art.to_rgb() } else { art };
            Ok(Some(apply_perturbation(&art, &delta)?))
        }
        None => Ok(Some(art)),
    }
}

/// Renders every scene, logging unpaintable regions; returns the images
/// and the number of regions skipped.
fn render_all(ds: &Dataset, art: Option<&Raster64>, inject: &InjectOptions) -> Result<(Vec<Raster64>, usize)> {
    let mut images = Vec::with_capacity(ds.len());
    let mut skipped = 0;
    for entry in &ds.entries {
        let r = render_scene(&entry.scene, art, inject)?;
        for e in &r.region_errors {
            log::warn!("{}: region {} skipped: {}", entry.name(), e.index, e.error);
        }
        skipped += r.region_errors.len();
        images.push(r.image);
    }
    Ok((images, skipped))
}

fn evaluate(
    ds: &Dataset,
    art: Option<&Raster64>,
    inject: &InjectOptions,
    detectors: &mut [Box<dyn Detector>],
    opts: &EvalOptions,
) -> Result<Evaluation> {
    let (images, _) = render_all(ds, art, inject)?;
    evaluate_images(ds, &images, detectors, opts)
}

/// Report fields at the top level plus the resolved configuration.
fn report_json(report: &MetricsReport, config: &Value) -> Value {
    let mut v = serde_json::to_value(report).expect("report serializes");
    v["config"] = config.clone();
    v
}

fn print_row(label: &str, report: &MetricsReport) {
    println!("{label:<24}{}", report.table_row());
}

fn print_header() {
    println!("{:<24}{}", "pattern", MetricsReport::TABLE_HEADER);
}

fn cmd_gen(g: &GlobalArgs, a: &GenArgs) -> Result<()> {
    let mut cfg: SceneGenConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SceneGenConfig {
            seed: DEFAULT_SEED,
            ..Default::default()
        },
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let manifests = generate_dataset(&cfg, a.n, &a.out)?;
    write_json(&a.out.join("gen_config.json"), &cfg)?;
    let people: usize = manifests.iter().map(|m| m.ground_truth.len()).sum();
    println!("wrote {} scenes with {people} pedestrians to {}", manifests.len(), a.out.display());
    Ok(())
}

/// Copies `rel` from `src` to `dst` unless it is absolute or the same file.
fn copy_asset(src: &Path, dst: &Path, rel: &str) -> Result<()> {
    if Path::new(rel).is_absolute() {
        return Ok(());
    }
    let (from, to) = (src.join(rel), dst.join(rel));
    if let (Ok(a), Ok(b)) = (from.canonicalize(), to.canonicalize()) {
        if a == b {
            return Ok(());
        }
    }
    if let Some(dir) = to.parent() {
        create_dir(dir)?;
    }
    std::fs::copy(&from, &to).map_err(|e| Error::Io { path: from, source: e })?;
    Ok(())
}

fn cmd_compose(a: &ComposeArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let art = load_art(&a.art)?;
    let inject = inject_options(a.art.blend, a.art.orientation)?;
    create_dir(&a.out.join("composed"))?;
    let masks = a.dataset.join("masks");
    if masks.is_dir() {
        for entry in std::fs::read_dir(&masks).map_err(|e| Error::Io { path: masks.clone(), source: e })? {
            let entry = entry.map_err(|e| Error::Io { path: masks.clone(), source: e })?;
            let name = format!("masks/{}", entry.file_name().to_string_lossy());
            copy_asset(&a.dataset, &a.out, &name)?;
        }
    }
    let mut skipped = 0;
    for entry in &ds.entries {
        let r = render_scene(&entry.scene, art.as_ref(), &inject)?;
        for e in &r.region_errors {
            log::warn!("{}: region {} skipped: {}", entry.name(), e.index, e.error);
        }
        skipped += r.region_errors.len();
        let m = &entry.manifest;
        copy_asset(&a.dataset, &a.out, &m.background)?;
        for f in &m.foregrounds {
            copy_asset(&a.dataset, &a.out, &f.image)?;
        }
        let stem = entry.name().trim_start_matches("manifest_").trim_end_matches(".json").to_string();
        let rel = format!("composed/scene_{stem}.png");
        save_image(&r.image, a.out.join(&rel))?;
        let mut out_manifest = m.clone();
        out_manifest.composed = Some(rel);
        out_manifest.save(a.out.join(entry.name()))?;
    }
    println!("composed {} scenes into {}", ds.len(), a.out.display());
    if skipped > 0 {
        println!("warning: {skipped} degenerate regions skipped");
    }
    Ok(())
}

fn eval_options(method: ApMethodArg) -> EvalOptions {
    EvalOptions {
        ap_method: match method {
            ApMethodArg::AllPoints => ApMethod::AllPoints,
            ApMethodArg::Points101 => ApMethod::Points101,
        },
        ..Default::default()
    }
}

fn cmd_evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let art = load_art(&a.art)?;
    let inject = inject_options(a.art.blend, a.art.orientation)?;
    let opts = eval_options(a.ap_method);
    let config = json!({
        "command": "evaluate",
        "args": a,
        "workers": g.workers,
        "detector": detector_settings(g)?,
        "inject": inject,
    });
    let mut detectors = build_detectors(g)?;
    let eval = evaluate(&ds, art.as_ref(), &inject, &mut detectors, &opts)?;
    let det_path = a.detections.clone().unwrap_or_else(|| {
        let mut s = a.report.as_os_str().to_owned();
        s.push(".detections.json");
        PathBuf::from(s)
    });
    write_json(&a.report, &report_json(&eval.report, &config))?;
    save_records(&eval.records, &det_path)?;
    if let Some(w) = &eval.report.warning {
        println!("warning: {w}");
    }
    print_header();
    let label = a.art.art.as_ref().map_or("clean".to_string(), |p| p.display().to_string());
    print_row(&label, &eval.report);
    Ok(())
}

fn resolve_attack_config(g: &GlobalArgs, a: &AttackArgs) -> Result<AttackConfig> {
    let mut cfg = match &a.config {
        Some(p) => AttackConfig::load(p)?,
        None => AttackConfig {
            seed: DEFAULT_SEED,
            ..Default::default()
        },
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epsilon {
        cfg.epsilon = e;
    }
    if let Some(s) = a.step_size {
        cfg.step_size = Some(s);
    }
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    if let Some(q) = a.queries {
        cfg.queries_per_gradient = q;
    }
    if let Some(s) = a.sigma {
        cfg.smoothing_sigma = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn metric_deltas(before: &MetricsReport, after: &MetricsReport) -> Value {
    json!({
        "max_f1": after.max_f1 - before.max_f1,
        "precision_at_max_f1": after.precision_at_max_f1 - before.precision_at_max_f1,
        "recall_at_max_f1": after.recall_at_max_f1 - before.recall_at_max_f1,
        "ap50": after.ap50 - before.ap50,
        "fdr": after.fdr - before.fdr,
    })
}

fn cmd_attack(g: &GlobalArgs, a: &AttackArgs) -> Result<()> {
    let mut cfg = resolve_attack_config(g, a)?;
    if a.train == 0 {
        return Err(Error::Config("--train must be at least 1".into()));
    }
    let inject = inject_options(a.blend, a.orientation)?;
    let ds = Dataset::load(&a.dataset)?;
    if ds.len() < a.train {
        return Err(Error::Input(format!(
            "dataset has {} scenes, {} requested for training",
            ds.len(),
            a.train
        )));
    }
    let train = ds.slice(0..a.train);
    let held_out = match &a.eval_dataset {
        Some(p) => Dataset::load(p)?,
        None => ds.slice(a.train..ds.len()),
    };
    if held_out.is_empty() {
        return Err(Error::Input("no held-out scenes; pass --eval-dataset or a larger dataset".into()));
    }
    let source: Raster64 = load_image(&a.art)?;
    if source.has_alpha() {
        log::info!("art alpha is dropped for the attack");
    }
    let art = source.to_rgb();
    let support = match &a.support {
        Some(p) => Some(BinaryMask::load_png(p)?),
        None => None,
    };
    cfg.batch = train.entries.iter().map(|e| e.path.display().to_string()).collect();
    let config = json!({
        "command": "attack",
        "args": a,
        "attack": cfg,
        "workers": g.workers,
        "detector": detector_settings(g)?,
        "inject": inject,
    });
    create_dir(&a.out)?;
    write_json(&a.out.join("attack_config.json"), &config)?;

    let detectors = build_detectors(g)?;
    let scenes = train
        .entries
        .iter()
        .map(|e| PreparedScene::new(e.name(), &e.scene, (art.width(), art.height()), &inject))
        .collect();
    let mut objective = DetectorObjective::new(art.clone(), scenes, detectors, cfg.aggregate)?;
    let trace_path = a.out.join("trace.jsonl");
    let mut trace_file = BufWriter::new(File::create(&trace_path).map_err(|e| Error::Io {
        path: trace_path.clone(),
        source: e,
    })?);
    let mut write_err = None;
    let outcome = optimize_perturbation(&art, &mut objective, &cfg, support.as_ref(), |entry| {
        let line = serde_json::to_string(entry).expect("trace entry serializes");
        if let Err(e) = writeln!(trace_file, "{line}").and_then(|_| trace_file.flush()) {
            write_err.get_or_insert(e);
        }
        log::info!("iteration {} loss {:.6} best {:.6}", entry.iteration, entry.loss, entry.best_loss);
    });
    if let Some(e) = write_err {
        return Err(Error::Io { path: trace_path, source: e });
    }
    let (delta, trace) = outcome?;

    if let (Some(src), Some(_)) = (&a.support, &support) {
        std::fs::copy(src, a.out.join("support.png")).map_err(|e| Error::Io {
            path: src.clone(),
            source: e,
        })?;
    }
    let files = delta.save(a.out.join("perturbation"), support.as_ref().map(|_| "support.png"))?;
    let adversarial = apply_perturbation(&art, &delta)?;
    save_image(&adversarial, a.out.join("adversarial_art.png"))?;

    let mut detectors = objective.into_detectors();
    let opts = EvalOptions::default();
    let before = evaluate(&held_out, Some(&art), &inject, &mut detectors, &opts)?;
    let after = evaluate(&held_out, Some(&adversarial), &inject, &mut detectors, &opts)?;
    write_json(&a.out.join("report_before.json"), &report_json(&before.report, &config))?;
    write_json(&a.out.join("report_after.json"), &report_json(&after.report, &config))?;
    save_records(&before.records, a.out.join("detections_before.json"))?;
    save_records(&after.records, a.out.join("detections_after.json"))?;
    let summary = json!({
        "config": config,
        "initial_loss": trace.initial_loss,
        "best_loss": trace.best_loss(),
        "iterations": trace.entries.len(),
        "queries_used": trace.entries.last().map_or(0, |e| e.queries_used),
        "perturbation": {
            "sidecar": files.sidecar.file_name().map(|n| n.to_string_lossy().into_owned()),
            "max_abs": delta.max_abs(),
        },
        "held_out_scenes": held_out.len(),
        "metrics_delta": metric_deltas(&before.report, &after.report),
    });
    write_json(&a.out.join("summary.json"), &summary)?;

    if let (Some(i), Some(b)) = (trace.initial_loss, trace.best_loss()) {
        println!("loss {i:.6} -> {b:.6} over {} iterations", trace.entries.len());
    }
    print_header();
    print_row("art", &before.report);
    print_row("art + perturbation", &after.report);
    Ok(())
}

fn cmd_batch(g: &GlobalArgs, a: &BatchArgs) -> Result<()> {
    let ds = Dataset::load(&a.dataset)?;
    let inject = inject_options(a.blend, a.orientation)?;
    let arts = a
        .arts
        .iter()
        .map(|name| match name.as_str() {
            "clean" => Ok(None),
            path => load_image::<f64>(path).map(Some),
        })
        .collect::<Result<Vec<_>>>()?;
    let config = json!({
        "command": "batch",
        "args": a,
        "workers": g.workers,
        "detector": detector_settings(g)?,
        "inject": inject,
    });
    let mut detectors = build_detectors(g)?;
    let opts = EvalOptions::default();
    let mut rows = Vec::with_capacity(arts.len());
    let mut table = format!("{:<24}{}\n", "pattern", MetricsReport::TABLE_HEADER);
    for (name, art) in a.arts.iter().zip(&arts) {
        let eval = evaluate(&ds, art.as_ref(), &inject, &mut detectors, &opts)?;
        table.push_str(&format!("{name:<24}{}\n", eval.report.table_row()));
        rows.push(json!({"pattern": name, "report": eval.report}));
    }
    create_dir(&a.out)?;
    write_json(&a.out.join("batch.json"), &json!({"config": config, "rows": rows}))?;
    let txt = a.out.join("batch.txt");
    std::fs::write(&txt, &table).map_err(|e| Error::Io { path: txt, source: e })?;
    print!("{table}");
    Ok(())
}
