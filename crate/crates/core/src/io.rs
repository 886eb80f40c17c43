//! Run configuration, manifests, CSV helpers and deterministic SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{fmt, model_defaults, FamilyConfig, Method, TraceConfig};
use crate::models::{builtin, InputSignal, ModelSpec};
use crate::numerics::ode::{IntegratorConfig, Sampled};
use crate::rom::{ForcedConfig, RomConfig};

/// Amplitude grid and forcing period of a period-doubling sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub period: f64,
}

impl Default for SweepRange {
    fn default() -> Self {
        Self {
            lo: 0.01,
            hi: 0.03,
            step: 0.001,
            period: 24.0,
        }
    }
}

/// Everything a CLI run needs. Unset options take per-model defaults;
/// [`RunConfig::effective`] fills them so the manifest records every value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub method: Method,
    /// Expansion order `M` for the asymptotic method and expansion seeds.
    pub order: usize,
    pub beta: Option<usize>,
    pub seed_radius: Option<f64>,
    pub t_max: Option<f64>,
    pub dt_correct: Option<f64>,
    pub psi_cap: Option<f64>,
    pub rays: usize,
    /// Seed phase of a single traced ray (radians).
    pub phase: f64,
    /// End a ray at its last accepted point on abort; defaults to false for
    /// single traces and true for families.
    pub stop_on_abort: Option<bool>,
    pub trace: TraceConfig,
    pub integrator: IntegratorConfig,
    pub channel: Option<Vec<f64>>,
    pub signal: InputSignal,
    pub t_end: Option<f64>,
    /// Output sampling interval of simulated responses.
    pub output_step: f64,
    pub sweep: SweepRange,
    pub forced: ForcedConfig,
    pub rom: RomConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::named("planar"),
            method: Method::Pc,
            order: 4,
            beta: None,
            seed_radius: None,
            t_max: None,
            dt_correct: None,
            psi_cap: None,
            rays: 200,
            phase: 0.0,
            stop_on_abort: None,
            trace: TraceConfig::default(),
            integrator: IntegratorConfig::default(),
            channel: None,
            signal: InputSignal::Zero,
            t_end: None,
            output_step: 0.25,
            sweep: SweepRange::default(),
            forced: ForcedConfig::default(),
            rom: RomConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Copy with every per-model default filled in and the model validated.
    pub fn effective(&self, family: bool) -> Result<Self> {
        builtin(&self.model)?;
        let d = model_defaults(&self.model.name);
        let mut out = self.clone();
        out.seed_radius = Some(self.seed_radius.unwrap_or(d.seed_radius));
        out.t_max = Some(self.t_max.unwrap_or(d.t_max));
        out.dt_correct = Some(self.dt_correct.unwrap_or(d.dt_correct));
        out.psi_cap = self.psi_cap.or(d.psi_cap);
        out.stop_on_abort = Some(self.stop_on_abort.unwrap_or(family));
        out.trace = out.trace_config();
        if !(out.seed_radius.unwrap_or(0.0) > 0.0) {
            return Err(Error::InvalidConfig("seed radius must be positive".into()));
        }
        if !(out.output_step > 0.0) {
            return Err(Error::InvalidConfig("output step must be positive".into()));
        }
        if let Method::Asym { order } = out.method {
            if order == 0 {
                return Err(Error::InvalidConfig("asymptotic order must be at least 1".into()));
            }
        }
        out.trace.validate()?;
        Ok(out)
    }

    /// Tracing settings with the run-level overrides applied.
    pub fn trace_config(&self) -> TraceConfig {
        let mut t = self.trace.clone();
        if let Some(v) = self.t_max {
            t.t_max = v;
        }
        if let Some(v) = self.dt_correct {
            t.dt_correct = v;
        }
        t.psi_cap = self.psi_cap.or(t.psi_cap);
        if let Some(v) = self.stop_on_abort {
            t.stop_on_abort = v;
        }
        t
    }

    pub fn family_config(&self) -> FamilyConfig {
        FamilyConfig {
            method: self.method,
            rays: self.rays,
            seed_radius: self.seed_radius.unwrap_or(model_defaults(&self.model.name).seed_radius),
            trace: self.trace_config(),
            ..FamilyConfig::default()
        }
    }

    /// Expansion order needed by the method, if any.
    pub fn expansion_order(&self) -> Option<usize> {
        match self.method {
            Method::Asym { order } => Some(order.max(self.trace.seed_order.unwrap_or(0))),
            _ => self.trace.seed_order,
        }
    }
}

/// Record of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    /// Write as `manifest.json` in `dir` and return the path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Sampled state response as CSV with columns `t, x_1 .. x_n`, plus
/// optional leading extra columns per row.
pub fn write_response_csv<W: std::io::Write>(
    out: W,
    response: &Sampled,
    extra: &[(&str, Vec<f64>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = response.x.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend(extra.iter().map(|(name, _)| name.to_string()));
    header.extend((1..=n).map(|i| format!("x_{i}")));
    w.write_record(&header)?;
    for (k, (t, x)) in response.t.iter().zip(&response.x).enumerate() {
        let mut row = vec![fmt(*t)];
        for (_, col) in extra {
            let v = col
                .get(k)
                .ok_or_else(|| Error::GridMismatch("extra column shorter than the response".into()))?;
            row.push(fmt(*v));
        }
        row.extend(x.iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `(x, y)` pairs from two named columns of CSV text.
pub fn read_columns(text: &str, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ix, iy) = (find(x)?, find(y)?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            let field = rec.get(i).unwrap_or("").trim();
            field
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("non-numeric CSV field `{field}`")))
        };
        out.push((parse(ix)?, parse(iy)?));
    }
    Ok(out)
}

/// One curve of a plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub file: PathBuf,
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
    pub series: Vec<SeriesSpec>,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            width: 640,
            height: 480,
            series: Vec::new(),
        }
    }
}

/// A labelled polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotSpec {
    /// Load every series from its CSV file.
    pub fn load_series(&self) -> Result<Vec<Series>> {
        if self.series.is_empty() {
            return Err(Error::MissingColumn("no series requested".into()));
        }
        self.series
            .iter()
            .map(|s| {
                let text = std::fs::read_to_string(&s.file)?;
                Ok(Series {
                    label: s.label.clone().unwrap_or_else(|| format!("{} vs {}", s.y, s.x)),
                    points: read_columns(&text, &s.x, &s.y)?,
                })
            })
            .collect()
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.02 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Deterministic SVG with axes, ticks, one polyline per series and a legend
/// (omitted beyond 12 series).
pub fn render_svg(spec: &PlotSpec, series: &[Series]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::MissingColumn("no data to plot".into()));
    }
    let (w, h) = (spec.width.max(200) as f64, spec.height.max(150) as f64);
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (y0, y1) = bounds(all().map(|p| p.1));
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{left:.2}" y="{top:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{left:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 10.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(&spec.y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for (x, y) in s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
    }
    if series.len() <= 12 {
        for (k, s) in series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let y = top + 16.0 + 16.0 * k as f64;
            let x = left + pw - 150.0;
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
                y - 4.0,
                x + 20.0,
                y - 4.0,
                x + 25.0,
                escape(&s.label)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}
