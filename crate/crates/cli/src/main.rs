//! `isoslow` command-line front end.
//!
//! Settings are resolved in this order, later entries winning: built-in
//! defaults, per-model defaults, the `--config` JSON file, the
//! `ISOSLOW_OUT` environment variable (output directory only), and flags.
//! Every run writes a `manifest.json` holding the effective configuration.
//! Exit codes: 0 on success, 2 on validation errors, 3 on numerical
//! failures; failures print a JSON diagnostic on standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use isoslow::expansion::{expand, ExpansionOptions, ExpansionTensors};
use isoslow::io::{render_svg, write_response_csv, Manifest, PlotSpec, RunConfig, SeriesSpec};
use isoslow::manifold::family::family_seeds;
use isoslow::manifold::{
    build_manifold, invariance_tube, trace_ray, tube_exit_time, ManifoldTrajectory, Method, SlowManifold,
};
use isoslow::models::{builtin, DynamicalModel, InputSignal, ModelSpec, Planar, TensorOptions};
use isoslow::numerics::linalg::c64;
use isoslow::numerics::ode::linspace;
use isoslow::rom::{
    amplitude_grid, build_rom, error_norm, simulate_rom, sweep_amplitudes, ReducedModel, ResponseModel,
};
use isoslow::spectrum::{analyze, Spectrum};

#[derive(Parser, Debug)]
#[command(name = "isoslow", version, about = "Slow manifolds, isostable coordinates and reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fixed point, eigenvalues and slow-mode count.
    Spectrum(Common),
    /// Trace one ray of the slow manifold.
    Trace(Common),
    /// Trace a family of rays and extract level sets.
    Manifold(ManifoldArgs),
    /// Build a reduced-order model from a traced family.
    RomBuild(RomBuildArgs),
    /// Simulate a reduced-order model, optionally against the full and linearized models.
    RomSim(RomSimArgs),
    /// Sweep the forcing amplitude and locate period doubling.
    SweepPd(SweepArgs),
    /// Trace with two methods from the same seed and report where they separate.
    Compare(CompareArgs),
    /// Render CSV columns as an SVG plot.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Pc,
    Naive,
    Asym,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model name: planar, pendulum, goodwin, coupled(N).
    #[arg(long)]
    model: Option<String>,
    /// Model parameter override `name=value` (repeatable).
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Expansion order `M` for the asymptotic method.
    #[arg(long)]
    order: Option<usize>,
    /// Number of slow modes.
    #[arg(long)]
    beta: Option<usize>,
    #[arg(long)]
    seed_radius: Option<f64>,
    /// Backward-time horizon.
    #[arg(long)]
    t_max: Option<f64>,
    /// Correction interval of the predictor-corrector.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of correction intervals; sets the horizon to `steps * dt`.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    psi_cap: Option<f64>,
    #[arg(long)]
    rays: Option<usize>,
    /// Seed phase of a single ray in radians.
    #[arg(long)]
    phase: Option<f64>,
    /// End rays at their last accepted point on abort or ill-conditioning.
    #[arg(long)]
    stop_on_abort: Option<bool>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ManifoldArgs {
    #[command(flatten)]
    common: Common,
    /// Radii `|psi_1|` at which level sets are written (comma separated).
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
}

#[derive(Args, Debug)]
struct RomBuildArgs {
    #[command(flatten)]
    common: Common,
    /// Input channel `b`, comma separated.
    #[arg(long, value_delimiter = ',')]
    channel: Vec<f64>,
}

#[derive(Args, Debug)]
struct RomSimArgs {
    #[command(flatten)]
    common: Common,
    /// Reduced model JSON written by `rom-build`.
    #[arg(long)]
    rom: PathBuf,
    /// Input: `zero`, `constant:c`, `sine:a,period` or `chirp:a,c0,c1`.
    #[arg(long)]
    signal: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Initial `psi_1` as `re,im`.
    #[arg(long, value_delimiter = ',')]
    psi0: Vec<f64>,
    /// Also simulate the full and linearized models and report errors.
    #[arg(long)]
    baselines: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SystemArg {
    Full,
    Linear,
    Rom,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "full")]
    system: SystemArg,
    /// Reduced model JSON (for `--system rom`).
    #[arg(long)]
    rom: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    channel: Vec<f64>,
    #[arg(long)]
    a_lo: Option<f64>,
    #[arg(long)]
    a_hi: Option<f64>,
    #[arg(long)]
    a_step: Option<f64>,
    #[arg(long)]
    period: Option<f64>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Reference method.
    #[arg(long, value_enum, default_value = "pc")]
    reference: MethodArg,
    /// Relative tube radius.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// JSON plot description.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Series `file:x_column:y_column[:label]` (repeatable).
    #[arg(long)]
    series: Vec<String>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    x_label: Option<String>,
    #[arg(long)]
    y_label: Option<String>,
    /// Output SVG path.
    #[arg(long, default_value = "plot.svg")]
    output: PathBuf,
}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    isoslow::Error::InvalidConfig(msg.into()).into()
}

impl Common {
    fn resolve(&self, family: bool) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Ok(dir) = std::env::var("ISOSLOW_OUT") {
            cfg.output_dir = PathBuf::from(dir);
        }
        if let Some(m) = &self.model {
            cfg.model = ModelSpec::named(m);
        }
        for p in &self.params {
            let (name, value) = p
                .split_once('=')
                .ok_or_else(|| invalid(format!("parameter `{p}` is not NAME=VALUE")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| invalid(format!("parameter `{p}` has a non-numeric value")))?;
            cfg.model.params.insert(name.trim().to_string(), value);
        }
        if let Some(order) = self.order {
            cfg.order = order;
        }
        if let Some(m) = self.method {
            cfg.method = match m {
                MethodArg::Pc => Method::Pc,
                MethodArg::Naive => Method::Naive,
                MethodArg::Asym => Method::Asym { order: cfg.order },
            };
        } else if let (Method::Asym { .. }, Some(order)) = (cfg.method, self.order) {
            cfg.method = Method::Asym { order };
        }
        cfg.beta = self.beta.or(cfg.beta);
        cfg.seed_radius = self.seed_radius.or(cfg.seed_radius);
        cfg.dt_correct = self.dt.or(cfg.dt_correct);
        cfg.t_max = self.t_max.or(cfg.t_max);
        if let Some(steps) = self.steps {
            let dt = cfg
                .dt_correct
                .unwrap_or(isoslow::manifold::model_defaults(&cfg.model.name).dt_correct);
            cfg.t_max = Some(steps as f64 * dt);
        }
        cfg.psi_cap = self.psi_cap.or(cfg.psi_cap);
        if let Some(r) = self.rays {
            cfg.rays = r;
        }
        if let Some(p) = self.phase {
            cfg.phase = p;
        }
        cfg.stop_on_abort = self.stop_on_abort.or(cfg.stop_on_abort);
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        let cfg = cfg.effective(family)?;
        std::fs::create_dir_all(&cfg.output_dir)
            .map_err(isoslow::Error::from)
            .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
        Ok(cfg)
    }
}

struct Setup {
    model: Arc<dyn DynamicalModel>,
    spec: Spectrum,
    exp: Option<ExpansionTensors>,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let model = builtin(&cfg.model)?;
    let spec = analyze(model.as_ref(), cfg.beta)?;
    let exp = match cfg.expansion_order() {
        Some(order) => Some(
            expand(
                model.as_ref(),
                &spec,
                order,
                &ExpansionOptions::default(),
                &TensorOptions::default(),
            )?
            .0,
        ),
        None => None,
    };
    Ok(Setup { model, spec, exp })
}

fn write_ray(dir: &Path, name: &str, traj: &ManifoldTrajectory) -> Result<String> {
    let path = dir.join(name);
    let file = std::fs::File::create(&path).map_err(isoslow::Error::from)?;
    traj.write_csv(std::io::BufWriter::new(file))?;
    Ok(name.to_string())
}

fn parse_signal(text: &str) -> Result<InputSignal> {
    let (kind, args) = text.split_once(':').unwrap_or((text, ""));
    let nums: Vec<f64> = if args.is_empty() {
        Vec::new()
    } else {
        args.split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| invalid(format!("signal `{text}` has a non-numeric argument")))?
    };
    let signal = match (kind, nums.as_slice()) {
        ("zero", []) => InputSignal::Zero,
        ("constant", [c]) => InputSignal::Constant { c: *c },
        ("sine", [a, period]) => InputSignal::Sine { a: *a, period: *period },
        ("chirp", [a, c0, c1]) => InputSignal::Chirp { a: *a, c0: *c0, c1: *c1 },
        _ => return Err(invalid(format!("unrecognised signal `{text}`"))),
    };
    Ok(signal)
}

fn default_channel(given: &[f64], cfg: &RunConfig, dim: usize) -> Vec<f64> {
    if !given.is_empty() {
        return given.to_vec();
    }
    cfg.channel.clone().unwrap_or_else(|| {
        let mut b = vec![0.0; dim];
        if dim > 0 {
            b[0] = 1.0;
        }
        b
    })
}

/// Print to standard output, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn finish(mut manifest: Manifest, outputs: Vec<String>, summary: serde_json::Value) -> Result<()> {
    manifest.outputs = outputs;
    manifest.summary = summary;
    let dir = manifest.config.output_dir.clone();
    manifest.write(&dir)?;
    emit(&serde_json::to_string_pretty(&manifest.summary)?);
    Ok(())
}

fn cmd_spectrum(args: &Common) -> Result<()> {
    let cfg = args.resolve(false)?;
    let model = builtin(&cfg.model)?;
    let spec = analyze(model.as_ref(), cfg.beta)?;
    let summary = serde_json::to_value(spec.summary())?;
    std::fs::write(cfg.output_dir.join("spectrum.json"), serde_json::to_string_pretty(&summary)?)
        .map_err(isoslow::Error::from)?;
    finish(Manifest::new("spectrum", cfg), vec!["spectrum.json".into()], summary)
}

fn seed_for(spec: &Spectrum, radius: f64, phase: f64) -> Result<Vec<isoslow::numerics::linalg::C64>> {
    let (phases, seeds, _) = family_seeds(spec, 360, radius)?;
    let target = phase.rem_euclid(2.0 * std::f64::consts::PI);
    let k = (0..phases.len())
        .min_by(|&a, &b| {
            let da = (phases[a] - target).abs().min(2.0 * std::f64::consts::PI - (phases[a] - target).abs());
            let db = (phases[b] - target).abs().min(2.0 * std::f64::consts::PI - (phases[b] - target).abs());
            da.total_cmp(&db)
        })
        .ok_or_else(|| anyhow!("no seeds"))?;
    Ok(seeds[k].clone())
}

fn planar_error(traj: &ManifoldTrajectory) -> f64 {
    traj.x
        .iter()
        .filter(|x| x[0].abs() <= 1.5)
        .map(|x| (x[1] - Planar::manifold(x[0])).abs())
        .fold(0.0, f64::max)
}

fn cmd_trace(args: &Common) -> Result<()> {
    let cfg = args.resolve(false)?;
    let s = setup(&cfg)?;
    let psi0 = seed_for(&s.spec, cfg.seed_radius.unwrap_or_default(), cfg.phase)?;
    let traj = trace_ray(s.model.as_ref(), &s.spec, s.exp.as_ref(), cfg.method, &psi0, &cfg.trace)?;
    let file = write_ray(&cfg.output_dir, "ray.csv", &traj)?;
    let mut summary = json!({
        "method": cfg.method.label(),
        "samples": traj.len(),
        "t_back_end": traj.t_back.last(),
        "termination": traj.termination,
        "final_state": traj.last_state(),
    });
    if cfg.model.name.trim() == "planar" {
        summary["max_quartic_error"] = json!(planar_error(&traj));
    }
    finish(Manifest::new("trace", cfg), vec![file], summary)
}

fn trace_family(cfg: &RunConfig, s: &Setup) -> Result<SlowManifold> {
    Ok(build_manifold(s.model.as_ref(), &s.spec, s.exp.as_ref(), &cfg.family_config())?)
}

fn write_family(dir: &Path, fam: &SlowManifold, outputs: &mut Vec<String>) -> Result<serde_json::Value> {
    std::fs::create_dir_all(dir.join("rays")).map_err(isoslow::Error::from)?;
    let mut rays = Vec::new();
    for (k, ray) in fam.rays.iter().enumerate() {
        if let Some(tr) = ray {
            let name = format!("rays/ray_{k:03}.csv");
            write_ray(dir, &name, tr)?;
            outputs.push(name.clone());
            rays.push(json!({
                "index": k,
                "phase": fam.phases[k],
                "seed": fam.seeds[k].iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                "file": name,
                "termination": tr.termination,
                "t_back_end": tr.t_back.last(),
            }));
        }
    }
    let failures: Vec<_> = fam
        .failures
        .iter()
        .map(|f| json!({"index": f.index, "code": f.code, "message": f.message}))
        .collect();
    let summary = json!({
        "method": fam.method.label(),
        "rays": fam.rays.len(),
        "succeeded": fam.succeeded(),
        "seed_radius": fam.seed_radius,
        "coverage_radius_90": fam.coverage_radius(0.9),
        "failures": failures,
        "ray_files": rays,
    });
    std::fs::write(dir.join("manifold.json"), serde_json::to_string_pretty(&summary)?)
        .map_err(isoslow::Error::from)?;
    outputs.push("manifold.json".into());
    Ok(summary)
}

fn cmd_manifold(args: &ManifoldArgs) -> Result<()> {
    let cfg = args.common.resolve(true)?;
    let s = setup(&cfg)?;
    let fam = trace_family(&cfg, &s)?;
    let mut outputs = Vec::new();
    let mut summary = write_family(&cfg.output_dir, &fam, &mut outputs)?;
    let mut levels = Vec::new();
    for (k, r) in args.levels.iter().enumerate() {
        if !(*r > 0.0) {
            return Err(invalid("level radii must be positive"));
        }
        let pts = fam.level_set(*r);
        let name = format!("level_{k:02}.csv");
        let mut w = csv::Writer::from_path(cfg.output_dir.join(&name)).map_err(isoslow::Error::from)?;
        let n = s.spec.dim();
        let mut header = vec!["phase".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        w.write_record(&header).map_err(isoslow::Error::from)?;
        for (phase, x) in &pts {
            let mut row = vec![isoslow::manifold::fmt(*phase)];
            row.extend(x.iter().map(|v| isoslow::manifold::fmt(*v)));
            w.write_record(&row).map_err(isoslow::Error::from)?;
        }
        w.flush().map_err(isoslow::Error::from)?;
        levels.push(json!({"radius": r, "file": name, "points": pts.len()}));
        outputs.push(name);
    }
    summary["level_sets"] = json!(levels);
    summary.as_object_mut().map(|o| o.remove("ray_files"));
    finish(Manifest::new("manifold", cfg), outputs, summary)
}

fn cmd_rom_build(args: &RomBuildArgs) -> Result<()> {
    let mut cfg = args.common.resolve(true)?;
    let s = setup(&cfg)?;
    let channel = default_channel(&args.channel, &cfg, s.spec.dim());
    cfg.channel = Some(channel.clone());
    let fam = trace_family(&cfg, &s)?;
    let rom = build_rom(&fam, &channel, &cfg.rom)?;
    std::fs::write(cfg.output_dir.join("rom.json"), rom.to_json()?).map_err(isoslow::Error::from)?;
    let summary = json!({
        "lambda": rom.lambda,
        "pair": rom.pair,
        "domain_radius": rom.domain_radius,
        "linear_gain": rom.linear_gain,
        "rays_succeeded": fam.succeeded(),
        "rays": fam.rays.len(),
    });
    finish(Manifest::new("rom-build", cfg), vec!["rom.json".into()], summary)
}

fn load_rom(path: &Path) -> Result<ReducedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(isoslow::Error::from)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(ReducedModel::from_json(&text)?)
}

fn cmd_rom_sim(args: &RomSimArgs) -> Result<()> {
    let mut cfg = args.common.resolve(false)?;
    let rom = load_rom(&args.rom)?;
    if let Some(sig) = &args.signal {
        cfg.signal = parse_signal(sig)?;
    }
    let t_end = args.t_end.or(cfg.t_end).ok_or_else(|| invalid("rom-sim needs --t-end"))?;
    cfg.t_end = Some(t_end);
    let psi0 = match args.psi0.as_slice() {
        [] => c64(0.0, 0.0),
        [re] => c64(*re, 0.0),
        [re, im] => c64(*re, *im),
        _ => return Err(invalid("psi0 takes at most two numbers")),
    };
    let samples = ((t_end / cfg.output_step).round() as usize).max(1);
    let grid = linspace(0.0, t_end, samples);
    let tr = simulate_rom(&rom, &cfg.signal, psi0, t_end, &grid, &cfg.integrator)?;
    let sampled = isoslow::numerics::ode::Sampled {
        t: tr.t.clone(),
        x: tr.x.clone(),
    };
    let file = std::fs::File::create(cfg.output_dir.join("rom_sim.csv")).map_err(isoslow::Error::from)?;
    let u: Vec<f64> = tr.t.iter().map(|t| cfg.signal.value(*t)).collect();
    write_response_csv(
        file,
        &sampled,
        &[
            ("u", u.clone()),
            ("psi1_re", tr.psi.iter().map(|z| z.re).collect()),
            ("psi1_im", tr.psi.iter().map(|z| z.im).collect()),
        ],
    )?;
    let mut outputs = vec!["rom_sim.csv".to_string()];
    let mut summary = json!({
        "t_end": t_end,
        "max_abs_psi1": tr.psi.iter().map(|z| z.norm()).fold(0.0, f64::max),
    });
    if args.baselines {
        if psi0.norm() != 0.0 {
            return Err(invalid("baselines start at the fixed point; omit --psi0"));
        }
        let model = builtin(&cfg.model)?;
        let spec = analyze(model.as_ref(), cfg.beta)?;
        if spec.dim() != rom.dim() {
            return Err(invalid("the reduced model was built for a different model dimension"));
        }
        let full = ResponseModel::full(model, &spec, &rom.channel)?.respond(&cfg.signal, t_end, &grid, &cfg.integrator)?;
        let lin = ResponseModel::linearized(&spec, &rom.channel)?.respond(&cfg.signal, t_end, &grid, &cfg.integrator)?;
        for (name, resp) in [("full.csv", &full), ("linear.csv", &lin)] {
            let f = std::fs::File::create(cfg.output_dir.join(name)).map_err(isoslow::Error::from)?;
            write_response_csv(f, resp, &[("u", u.clone())])?;
            outputs.push(name.into());
        }
        summary["error_rom"] = json!(error_norm(&full, &sampled, t_end / 2.0)?);
        summary["error_linear"] = json!(error_norm(&full, &lin, t_end / 2.0)?);
    }
    finish(Manifest::new("rom-sim", cfg), outputs, summary)
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg = args.common.resolve(false)?;
    cfg.sweep.lo = args.a_lo.unwrap_or(cfg.sweep.lo);
    cfg.sweep.hi = args.a_hi.unwrap_or(cfg.sweep.hi);
    cfg.sweep.step = args.a_step.unwrap_or(cfg.sweep.step);
    cfg.sweep.period = args.period.unwrap_or(cfg.sweep.period);
    let grid = amplitude_grid(cfg.sweep.lo, cfg.sweep.hi, cfg.sweep.step)?;
    let system = match args.system {
        SystemArg::Rom => {
            let path = args.rom.as_ref().ok_or_else(|| invalid("--system rom needs --rom"))?;
            ResponseModel::Reduced(load_rom(path)?)
        }
        other => {
            let model = builtin(&cfg.model)?;
            let spec = analyze(model.as_ref(), cfg.beta)?;
            let channel = default_channel(&args.channel, &cfg, spec.dim());
            cfg.channel = Some(channel.clone());
            match other {
                SystemArg::Full => ResponseModel::full(model, &spec, &channel)?,
                _ => ResponseModel::linearized(&spec, &channel)?,
            }
        }
    };
    let period = cfg.sweep.period;
    let sweep = sweep_amplitudes(&system, |a| InputSignal::Sine { a, period }, &grid, &cfg.forced)?;
    let file = std::fs::File::create(cfg.output_dir.join("sweep.csv")).map_err(isoslow::Error::from)?;
    sweep.write_csv(file)?;
    let summary = json!({
        "system": sweep.model,
        "a_crit": sweep.a_crit,
        "bracket": [sweep.bracket_low, sweep.a_crit],
        "points": sweep.points.len(),
    });
    let manifest = Manifest::new("sweep-pd", cfg);
    if sweep.a_crit.is_none() {
        let mut m = manifest;
        m.outputs = vec!["sweep.csv".into()];
        m.summary = summary;
        let dir = m.config.output_dir.clone();
        m.write(&dir)?;
        return Err(isoslow::Error::NoBifurcationInRange.into());
    }
    finish(manifest, vec!["sweep.csv".into()], summary)
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let cfg = args.common.resolve(false)?;
    if !(args.tol > 0.0) {
        return Err(invalid("tube radius must be positive"));
    }
    let reference_method = match args.reference {
        MethodArg::Pc => Method::Pc,
        MethodArg::Naive => Method::Naive,
        MethodArg::Asym => Method::Asym { order: cfg.order },
    };
    let mut ref_cfg = cfg.clone();
    ref_cfg.method = reference_method;
    let mut s = setup(&cfg)?;
    if s.exp.is_none() {
        s.exp = setup(&ref_cfg)?.exp;
    }
    let psi0 = seed_for(&s.spec, cfg.seed_radius.unwrap_or_default(), cfg.phase)?;
    let mut ref_trace = cfg.trace.clone();
    ref_trace.stop_on_abort = true;
    let reference = trace_ray(s.model.as_ref(), &s.spec, s.exp.as_ref(), reference_method, &psi0, &ref_trace)?;
    let candidate = trace_ray(s.model.as_ref(), &s.spec, s.exp.as_ref(), cfg.method, &psi0, &cfg.trace)?;
    let outputs = vec![
        write_ray(&cfg.output_dir, "reference.csv", &reference)?,
        write_ray(&cfg.output_dir, "candidate.csv", &candidate)?,
    ];
    let fast = 1.0 / s.spec.fast_rate();
    let exit = tube_exit_time(&reference, &candidate, &s.spec.x0, args.tol);
    let tube = |tr: &ManifoldTrajectory| -> serde_json::Value {
        match invariance_tube(s.model.as_ref(), &s.spec.x0, tr, fast, &cfg.integrator) {
            Ok(r) => json!(r),
            Err(e) => json!({"error": e.code(), "message": e.to_string()}),
        }
    };
    let summary = json!({
        "reference": reference_method.label(),
        "candidate": cfg.method.label(),
        "tube_radius": args.tol,
        "fast_time_constant": fast,
        "exit_time": exit,
        "exit_in_fast_time_constants": exit.map(|t| t / fast),
        "reference_t_back_end": reference.t_back.last(),
        "candidate_t_back_end": candidate.t_back.last(),
        "reference_tube": tube(&reference),
        "candidate_tube": tube(&candidate),
    });
    std::fs::write(cfg.output_dir.join("report.json"), serde_json::to_string_pretty(&summary)?)
        .map_err(isoslow::Error::from)?;
    let mut outputs = outputs;
    outputs.push("report.json".into());
    finish(Manifest::new("compare", cfg), outputs, summary)
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(isoslow::Error::from)?;
            serde_json::from_str::<PlotSpec>(&text).map_err(isoslow::Error::from)?
        }
        None => PlotSpec::default(),
    };
    for s in &args.series {
        let parts: Vec<&str> = s.splitn(4, ':').collect();
        if parts.len() < 3 {
            return Err(invalid(format!("series `{s}` is not file:x:y[:label]")));
        }
        spec.series.push(SeriesSpec {
            file: PathBuf::from(parts[0]),
            x: parts[1].to_string(),
            y: parts[2].to_string(),
            label: parts.get(3).map(|l| l.to_string()),
        });
    }
    if let Some(t) = &args.title {
        spec.title = t.clone();
    }
    if let Some(t) = &args.x_label {
        spec.x_label = t.clone();
    }
    if let Some(t) = &args.y_label {
        spec.y_label = t.clone();
    }
    let series = spec.load_series()?;
    let svg = render_svg(&spec, &series)?;
    if let Some(parent) = args.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(isoslow::Error::from)?;
    }
    std::fs::write(&args.output, svg).map_err(isoslow::Error::from)?;
    emit(&json!({"output": args.output, "series": series.len()}).to_string());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Manifold(a) => cmd_manifold(a),
        Command::RomBuild(a) => cmd_rom_build(a),
        Command::RomSim(a) => cmd_rom_sim(a),
        Command::SweepPd(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn diagnostic(err: &anyhow::Error) -> (u8, serde_json::Value) {
    let lib = err.chain().find_map(|e| e.downcast_ref::<isoslow::Error>());
    let (code, status) = match lib {
        Some(e) if e.is_validation() => (e.code(), 2),
        Some(e) => (e.code(), 3),
        None => ("invalid_input", 2),
    };
    let message = err.chain().map(|e| e.to_string()).collect::<Vec<_>>().join(": ");
    (status, json!({"error": code, "message": message, "exit_code": status}))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let status = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if status != 0 {
                eprintln!("{}", json!({"error": "usage", "message": e.kind().to_string(), "exit_code": 2}));
            }
            return ExitCode::from(status);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (status, payload) = diagnostic(&err);
            eprintln!("{payload}");
            ExitCode::from(status)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals_parse() {
        assert_eq!(parse_signal("zero").unwrap(), InputSignal::Zero);
        assert_eq!(
            parse_signal("sine:0.02,24").unwrap(),
            InputSignal::Sine { a: 0.02, period: 24.0 }
        );
        assert_eq!(
            parse_signal("chirp:0.0045,27,0.015").unwrap(),
            InputSignal::Chirp {
                a: 0.0045,
                c0: 27.0,
                c1: 0.015
            }
        );
        assert!(parse_signal("sine:1").is_err());
        assert!(parse_signal("square:1,2").is_err());
    }

    #[test]
    fn validation_errors_map_to_exit_two() {
        let (status, payload) = diagnostic(&isoslow::Error::UnknownModel("x".into()).into());
        assert_eq!(status, 2);
        assert_eq!(payload["error"], "unknown_model");
        let (status, _) = diagnostic(&isoslow::Error::NoBifurcationInRange.into());
        assert_eq!(status, 3);
        let (status, _) = diagnostic(&anyhow!("plain"));
        assert_eq!(status, 2);
    }
}
