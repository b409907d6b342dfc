//! Error metrics on fine Cartesian grids, inference metrics for the
//! assimilation twin, and five-number summaries over repeated trials.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::autodiff::DifferentiableField;
use crate::cases::{BfsConfig, CavityConfig, ConjugateConfig, FieldGrid, RansTwin};
use crate::error::{Error, Result};
use crate::loss::{equation_mse, term_residuals, term_value, TrainingProblem};
use crate::optim::RunRecord;
use crate::physics::boussinesq_correlation;
use crate::sampling::{grid_nodes, latin_hypercube_rejecting, SamplingSet, SetTag};

/// Network channel compared against a reference field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRow {
    pub label: String,
    pub network: usize,
    pub channel: usize,
    /// Column name in a reference grid file.
    pub channel_name: String,
    /// Channel index in an analytic reference.
    pub reference_channel: usize,
    /// Compared after subtracting the mean (pressures).
    pub gauge: bool,
}

/// Boundary-condition row: the pooled MSE of the named loss terms.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRow {
    pub label: String,
    pub terms: Vec<String>,
}

/// One equation of a PDE term, evaluated on the grid interior.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub label: String,
    pub term: String,
    pub equation: usize,
}

type Inside = Arc<dyn Fn(f64, f64) -> bool + Send + Sync>;

/// A rectangular evaluation window with the rows computed on it.
#[derive(Clone)]
pub struct Region {
    pub name: String,
    pub bounds: [(f64, f64); 2],
    /// Frozen extra inputs appended to every node.
    pub parameters: Vec<f64>,
    pub inside: Inside,
    pub fields: Vec<FieldRow>,
    pub boundaries: Vec<BoundaryRow>,
    pub residuals: Vec<ResidualRow>,
}

impl std::fmt::Debug for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Region")
            .field("name", &self.name)
            .field("bounds", &self.bounds)
            .field("parameters", &self.parameters)
            .finish_non_exhaustive()
    }
}

fn field_row(label: &str, network: usize, channel: usize, name: &str, gauge: bool) -> FieldRow {
    FieldRow {
        label: label.into(),
        network,
        channel,
        channel_name: name.into(),
        reference_channel: channel,
        gauge,
    }
}

fn bc(label: &str, terms: &[&str]) -> BoundaryRow {
    BoundaryRow {
        label: label.into(),
        terms: terms.iter().map(|s| s.to_string()).collect(),
    }
}

fn res(label: &str, term: &str, equation: usize) -> ResidualRow {
    ResidualRow {
        label: label.into(),
        term: term.into(),
        equation,
    }
}

fn ns_residual_rows(term: &str) -> Vec<ResidualRow> {
    vec![
        res("Heat eq.", term, 3),
        res("Continuity eq.", term, 0),
        res("Momentum x eq.", term, 1),
        res("Momentum y eq.", term, 2),
    ]
}

fn everywhere() -> Inside {
    Arc::new(|_, _| true)
}

/// Fluid and solid tables of the conjugate case.
pub fn conjugate_layout(cfg: &ConjugateConfig) -> Vec<Region> {
    let no_slip = if cfg.conduction_only { "L_pin" } else { "L_W" };
    let fluid = Region {
        name: "fluid".into(),
        bounds: cfg.fluid_box(),
        parameters: vec![],
        inside: everywhere(),
        fields: vec![
            field_row("Temperature", 0, 2, "T", false),
            field_row("Velocity(u)", 0, 0, "u", false),
            field_row("Velocity(v)", 0, 1, "v", false),
        ],
        boundaries: vec![
            bc("No-slip", &[no_slip]),
            bc("Inlet", &["L_u_in", "L_T_in"]),
            bc("Outlet", &["L_q"]),
            bc("Adiabaticity", &["L_A_f"]),
        ],
        residuals: ns_residual_rows("L_NS"),
    };
    let solid = Region {
        name: "solid".into(),
        bounds: cfg.solid_box(),
        parameters: vec![],
        inside: everywhere(),
        fields: vec![FieldRow {
            reference_channel: 0,
            ..field_row("Temperature", 1, 0, "T", false)
        }],
        boundaries: vec![
            bc("Hot wall", &["L_hot"]),
            bc("Adiabaticity", &["L_A_s"]),
            bc("Interface temperature", &["L_c1"]),
            bc("Interface flux", &["L_c2"]),
        ],
        residuals: vec![res("Heat eq.", "L_HT", 0)],
    };
    vec![fluid, solid]
}

/// The cavity at one coefficient pair.
pub fn cavity_layout(cfg: &CavityConfig, mu: f64, kf: f64) -> Vec<Region> {
    vec![Region {
        name: "fluid".into(),
        bounds: [(0.0, cfg.size), (0.0, cfg.size)],
        parameters: vec![mu, kf],
        inside: everywhere(),
        fields: vec![
            field_row("Temperature", 0, 2, "T", false),
            field_row("Velocity(u)", 0, 0, "u", false),
            field_row("Velocity(v)", 0, 1, "v", false),
            field_row("Pressure", 0, 3, "p", true),
        ],
        boundaries: vec![bc("No-slip", &["L_W"]), bc("Wall temperature", &["L_T"]), bc("Adiabaticity", &["L_A"])],
        residuals: ns_residual_rows("L_NS"),
    }]
}

/// The forced Navier-Stokes problem on the unit square.
pub fn forced_ns_layout() -> Vec<Region> {
    vec![Region {
        name: "fluid".into(),
        bounds: [(0.0, 1.0), (0.0, 1.0)],
        parameters: vec![],
        inside: everywhere(),
        fields: vec![
            field_row("Temperature", 0, 2, "T", false),
            field_row("Velocity(u)", 0, 0, "u", false),
            field_row("Velocity(v)", 0, 1, "v", false),
            field_row("Pressure", 0, 3, "p", true),
        ],
        boundaries: vec![bc("Boundary values", &["L_BC"])],
        residuals: ns_residual_rows("L_NS"),
    }]
}

/// The coefficient-recovery Poisson problem on the unit square.
pub fn poisson_layout() -> Vec<Region> {
    vec![Region {
        name: "domain".into(),
        bounds: [(0.0, 1.0), (0.0, 1.0)],
        parameters: vec![],
        inside: everywhere(),
        fields: vec![field_row("Solution", 0, 0, "u", false)],
        boundaries: vec![bc("Boundary values", &["L_BC"]), bc("Data", &["L_data"])],
        residuals: vec![res("Poisson eq.", "L_PDE", 0)],
    }]
}

/// The step (or twin channel) flow region.
pub fn bfs_layout(cfg: &BfsConfig) -> Vec<Region> {
    let c = cfg.clone();
    vec![Region {
        name: "flow".into(),
        bounds: cfg.bounds(),
        parameters: vec![],
        inside: Arc::new(move |x, y| c.in_flow(x, y)),
        fields: vec![
            field_row("Velocity(U)", 0, 0, "U", false),
            field_row("Velocity(V)", 0, 1, "V", false),
            field_row("Pressure", 0, 2, "P", true),
        ],
        boundaries: vec![bc("No-slip", &["L_W"]), bc("Data", &["L_data"])],
        residuals: vec![
            res("Continuity eq.", "L_RANS", 0),
            res("Momentum x eq.", "L_RANS", 1),
            res("Momentum y eq.", "L_RANS", 2),
        ],
    }]
}

/// Ground truth for the field rows of one region.
#[derive(Clone, Copy)]
pub enum Reference<'a> {
    Analytic(&'a dyn DifferentiableField),
    Grid(&'a FieldGrid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Field,
    Boundary,
    Residual,
}

impl RowKind {
    fn key(self) -> &'static str {
        match self {
            RowKind::Field => "field",
            RowKind::Boundary => "bc",
            RowKind::Residual => "residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub region: String,
    pub kind: RowKind,
    pub label: String,
    /// `None` when the row could not be computed (no reference, no term).
    pub value: Option<f64>,
}

impl MetricRow {
    pub fn key(&self) -> String {
        format!("{}.{}.{}", self.region, self.kind.key(), slug(&self.label))
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Field, boundary and residual MSEs of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub case: String,
    pub grid: [usize; 2],
    pub reference: String,
    pub rows: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn get(&self, region: &str, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.region == region && r.label == label).and_then(|r| r.value)
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e = vec![
            ("case".to_string(), self.case.clone()),
            ("grid".to_string(), format!("{}x{}", self.grid[0], self.grid[1])),
            ("reference".to_string(), self.reference.clone()),
        ];
        for r in &self.rows {
            e.push((r.key(), r.value.map_or("absent".to_string(), |v| v.to_string())));
        }
        e
    }

    /// Human-readable tables, one per region.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} on a {}x{} grid, reference: {}", self.case, self.grid[0], self.grid[1], self.reference);
        let mut region = "";
        for r in &self.rows {
            if r.region != region {
                region = &r.region;
                let _ = writeln!(s, "\n[{region}]");
            }
            match r.value {
                Some(v) => {
                    let _ = writeln!(s, "  {:<24} {v:.3e}", r.label);
                }
                None => {
                    let _ = writeln!(s, "  {:<24} absent", r.label);
                }
            }
        }
        s
    }
}

/// Writes `key = value` lines.
pub fn metrics_text(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn write_metrics(path: &Path, entries: &[(String, String)]) -> Result<()> {
    std::fs::write(path, metrics_text(entries))?;
    Ok(())
}

/// Reads `key = value` lines; `#` comments and blank lines are skipped.
pub fn parse_metrics(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once(" = ")
            .ok_or_else(|| Error::parse("metrics", format!("line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Every run metric of a record as entries, sorted by key.
pub fn record_entries(record: &RunRecord) -> Vec<(String, String)> {
    let mut e = vec![
        ("final_loss".to_string(), record.final_loss().to_string()),
        ("iterations".to_string(), (record.history.len()).to_string()),
    ];
    e.extend(record.metrics.iter().map(|(k, v)| (k.clone(), v.to_string())));
    e
}

fn region_nodes(region: &Region, nx: usize, ny: usize, interior_only: bool) -> Result<Vec<[f64; 2]>> {
    let g = grid_nodes(nx, ny, region.bounds)?;
    let [(x0, x1), (y0, y1)] = region.bounds;
    Ok(g.points()
        .map(|p| [p[0], p[1]])
        .filter(|p| (region.inside)(p[0], p[1]))
        .filter(|p| !interior_only || (p[0] > x0 && p[0] < x1 && p[1] > y0 && p[1] < y1) || nx == 1 || ny == 1)
        .collect())
}

fn with_parameters(p: &[f64; 2], parameters: &[f64]) -> Vec<f64> {
    let mut x = p.to_vec();
    x.extend_from_slice(parameters);
    x
}

fn gauge(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    for x in v {
        *x -= m;
    }
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

fn field_mse(region: &Region, row: &FieldRow, nodes: &[[f64; 2]], fields: &[&dyn DifferentiableField], reference: Reference) -> Result<Option<f64>> {
    let net = fields
        .get(row.network)
        .ok_or_else(|| Error::contract(format!("no field for network {}", row.network)))?;
    let mut pred = Vec::with_capacity(nodes.len());
    let mut truth = Vec::with_capacity(nodes.len());
    match reference {
        Reference::Analytic(f) => {
            for p in nodes {
                let x = with_parameters(p, &region.parameters);
                pred.push(net.values(&x)?[row.channel]);
                truth.push(f.values(&x)?[row.reference_channel]);
            }
        }
        Reference::Grid(g) => {
            let Some(c) = g.channel_index(&row.channel_name) else {
                return Ok(None);
            };
            for (i, p) in g.points.iter().enumerate() {
                let t = g.value(i, c);
                if !t.is_finite() || !(region.inside)(p[0], p[1]) {
                    continue;
                }
                pred.push(net.values(&with_parameters(p, &region.parameters))?[row.channel]);
                truth.push(t);
            }
        }
    }
    if pred.is_empty() {
        return Ok(None);
    }
    if row.gauge {
        gauge(&mut pred);
        gauge(&mut truth);
    }
    Ok(Some(mse(&pred, &truth)))
}

/// Field MSEs against `references` (matched by region name; missing regions
/// give absent rows), boundary MSEs from the terms of `problem` (which
/// should be built on samplings disjoint from training), and per-equation
/// residual MSEs on the strictly interior nodes of an `nx × ny` grid.
/// `fields[i]` stands in for network `i`.
pub fn grid_metrics(
    case: &str,
    problem: &TrainingProblem,
    fields: &[&dyn DifferentiableField],
    extras: &[f64],
    layout: &[Region],
    nx: usize,
    ny: usize,
    references: &[(&str, Reference)],
    provenance: &str,
) -> Result<MetricsReport> {
    let mut rows = Vec::new();
    for region in layout {
        let nodes = region_nodes(region, nx, ny, false)?;
        let reference = references.iter().find(|(n, _)| *n == region.name).map(|(_, r)| *r);
        for f in &region.fields {
            let value = match reference {
                Some(r) => field_mse(region, f, &nodes, fields, r)?,
                None => None,
            };
            rows.push(MetricRow {
                region: region.name.clone(),
                kind: RowKind::Field,
                label: f.label.clone(),
                value,
            });
        }
        for b in &region.boundaries {
            let (mut sum, mut n) = (0.0, 0usize);
            for name in &b.terms {
                if let Some(k) = problem.term_index(name) {
                    let t = &problem.terms[k];
                    sum += term_value(t, fields, extras)? * t.points.len() as f64;
                    n += t.points.len();
                }
            }
            rows.push(MetricRow {
                region: region.name.clone(),
                kind: RowKind::Boundary,
                label: b.label.clone(),
                value: (n > 0).then(|| sum / n as f64),
            });
        }
        let interior = region_nodes(region, nx, ny, true)?;
        let pts: Vec<Vec<f64>> = interior.iter().map(|p| with_parameters(p, &region.parameters)).collect();
        let mut cache: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &region.residuals {
            let value = match problem.term_index(&r.term) {
                Some(k) if !pts.is_empty() => {
                    if !cache.contains_key(&r.term) {
                        let mut term = problem.terms[k].clone();
                        term.points = Arc::new(SamplingSet::from_points(&pts, SetTag::Interior)?);
                        cache.insert(r.term.clone(), equation_mse(&term, fields, extras)?);
                    }
                    cache[&r.term].get(r.equation).copied()
                }
                _ => None,
            };
            rows.push(MetricRow {
                region: region.name.clone(),
                kind: RowKind::Residual,
                label: r.label.clone(),
                value,
            });
        }
    }
    Ok(MetricsReport {
        case: case.into(),
        grid: [nx, ny],
        reference: provenance.into(),
        rows,
    })
}

/// Points and reference correlation values `u'v'` on vertical sections.
pub fn correlation_profiles(reference: &dyn DifferentiableField, channels: [usize; 3], points: &[[f64; 2]]) -> Result<Vec<f64>> {
    points.iter().map(|p| boussinesq_correlation(reference, channels, p)).collect()
}

/// RMSE between the modelled correlation `−ν_t (U_y + V_x)` of `field` and
/// reference values at the same points.
pub fn correlation_rmse(field: &dyn DifferentiableField, channels: [usize; 3], points: &[[f64; 2]], reference: &[f64]) -> Result<f64> {
    if points.len() != reference.len() || points.is_empty() {
        return Err(Error::contract("correlation points and reference values must match and be non-empty"));
    }
    let pred = correlation_profiles(field, channels, points)?;
    Ok(mse(&pred, reference).sqrt())
}

/// Points on the evaluation sections of the twin (held out from training).
const SECTION_POINTS: usize = 50;
const HELD_OUT_INTERIOR: usize = 4000;

/// Inference metrics of a trained twin network:
/// `residual_rmse` on a held-out interior sampling, `data_rmse` on the
/// training observations, `correlation_rmse` and `heldout_u_rmse` (relative
/// to the inlet peak velocity) on the held-out sections, and
/// `nut_rel_l2`, the relative L2 error of `ν_t` over the grid spanning the
/// observed sections.
pub fn twin_metrics(twin: &RansTwin, field: &dyn DifferentiableField, seed: u64) -> Result<BTreeMap<String, f64>> {
    let cfg = &twin.config.channel;
    let problem = &twin.case.problem;
    let fields = [field];
    let reference = &twin.reference;
    let mut out = BTreeMap::new();

    let rans = &problem.terms[problem.term_index("L_RANS").ok_or_else(|| Error::contract("twin without L_RANS"))?];
    let mut held = rans.clone();
    held.points = Arc::new(latin_hypercube_rejecting(HELD_OUT_INTERIOR, &cfg.bounds(), seed ^ 0x5EED_E7A1, |q| !cfg.in_flow(q[0], q[1]))?);
    let r = term_residuals(&held, &fields, &[])?;
    let n = r.iter().map(Vec::len).sum::<usize>() as f64;
    out.insert("residual_rmse".into(), (r.iter().flatten().map(|v| v * v).sum::<f64>() / n).sqrt());

    if let Some(k) = problem.term_index("L_data") {
        out.insert("data_rmse".into(), term_value(&problem.terms[k], &fields, &[])?.sqrt());
    }

    let section_pts: Vec<[f64; 2]> = cfg.held_out_sections.iter().flat_map(|&x| cfg.section_points(x, SECTION_POINTS)).collect();
    if !section_pts.is_empty() {
        let refc = correlation_profiles(reference, [0, 1, 3], &section_pts)?;
        out.insert("correlation_rmse".into(), correlation_rmse(field, [0, 1, 3], &section_pts, &refc)?);
        let inlet = cfg
            .section_points(0.0, SECTION_POINTS)
            .iter()
            .map(|p| reference.values(p).map(|v| v[0].abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let mut du = Vec::with_capacity(section_pts.len());
        for p in &section_pts {
            du.push(field.values(p)?[0] - reference.values(p)?[0]);
        }
        let rmse = (du.iter().map(|d| d * d).sum::<f64>() / du.len() as f64).sqrt();
        out.insert("heldout_u_rmse".into(), rmse / inlet);
    }

    let sections = twin.config.placement.sections();
    let lo = sections.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sections.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = lo.min(cfg.held_out_sections.iter().copied().fold(f64::INFINITY, f64::min));
    let hi = hi.max(cfg.held_out_sections.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    out.insert("nut_rel_l2".into(), nut_error(field, twin, [lo, hi], 111)?);
    let (c, w) = (twin.config.bump_center, twin.config.bump_width);
    out.insert("nut_rel_l2_recirculation".into(), nut_error(field, twin, [c - 2.0 * w, c + 2.0 * w], 41)?);
    Ok(out)
}

/// Relative L2 error of `ν_t` on a grid over `[x0, x1] × [0, H]`.
fn nut_error(field: &dyn DifferentiableField, twin: &RansTwin, x: [f64; 2], nx: usize) -> Result<f64> {
    let cfg = &twin.config.channel;
    let nodes = grid_nodes(nx, 31, [(x[0].max(0.0), x[1].min(cfg.length)), (0.0, cfg.height)])?;
    let (mut num, mut den) = (0.0, 0.0);
    for p in nodes.points() {
        if !cfg.in_flow(p[0], p[1]) {
            continue;
        }
        let a = field.values(p)?[3].powi(2);
        let b = twin.reference.values(p)?[3].powi(2);
        num += (a - b) * (a - b);
        den += b * b;
    }
    Ok((num / den).sqrt())
}

/// Boxplot five-number summary. Spread statistics need at least two values
/// and are `None` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: f64,
    pub q3: Option<f64>,
    pub max: Option<f64>,
}

/// Linear-interpolation quantile of sorted data (the `(n − 1)p` rule).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("summaries need at least one value, all finite"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let spread = |x: f64| (v.len() >= 2).then_some(x);
    Ok(Summary {
        n: v.len(),
        min: spread(v[0]),
        q1: spread(quantile(&v, 0.25)),
        median: quantile(&v, 0.5),
        q3: spread(quantile(&v, 0.75)),
        max: spread(v[v.len() - 1]),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub metric: String,
    pub summary: Summary,
    /// Per-trial values in trial order.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialStatistics {
    pub rows: Vec<SummaryRow>,
}

/// Groups completed runs by configuration label (first-appearance order)
/// and summarizes every metric they report.
pub fn trial_statistics(runs: &[(String, &RunRecord)]) -> Result<TrialStatistics> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (config, record) in runs {
        if !order.contains(&config.as_str()) {
            order.push(config);
        }
        let g = groups.entry(config).or_default();
        let mut metrics = record.metrics.clone();
        metrics.insert("final_loss".into(), record.final_loss());
        for (k, v) in metrics {
            if v.is_finite() {
                g.entry(k).or_default().push(v);
            }
        }
    }
    let mut rows = Vec::new();
    for config in order {
        for (metric, values) in &groups[config] {
            rows.push(SummaryRow {
                config: config.to_string(),
                metric: metric.clone(),
                summary: summarize(values)?,
                values: values.clone(),
            });
        }
    }
    Ok(TrialStatistics { rows })
}

impl TrialStatistics {
    pub fn get(&self, config: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.config == config && r.metric == metric)
    }

    /// `config,metric,min,q1,median,q3,max`; missing spread values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("config,metric,min,q1,median,q3,max\n");
        for r in &self.rows {
            let m = &r.summary;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.config,
                r.metric,
                opt(m.min),
                opt(m.q1),
                m.median,
                opt(m.q3),
                opt(m.max)
            );
        }
        s
    }

    /// Raw values: `config,metric,trial,value`.
    pub fn trials_csv(&self) -> String {
        let mut s = String::from("config,metric,trial,value\n");
        for r in &self.rows {
            for (i, v) in r.values.iter().enumerate() {
                let _ = writeln!(s, "{},{},{i},{v}", r.config, r.metric);
            }
        }
        s
    }
}

/// Reads a summary CSV back as `(config, metric, summary)` rows. The trial
/// count is not stored and comes back as 0.
pub fn parse_summary_csv(text: &str) -> Result<Vec<(String, String, Summary)>> {
    let err = |m: String| Error::parse("sweep summary", m);
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next() != Some("config,metric,min,q1,median,q3,max") {
        return Err(err("bad header".into()));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(format!("row {i} has {} fields", f.len())));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| err(format!("row {i}: {e}")))
            }
        };
        out.push((
            f[0].to_string(),
            f[1].to_string(),
            Summary {
                n: 0,
                min: num(f[2])?,
                q1: num(f[3])?,
                median: num(f[4])?.ok_or_else(|| err(format!("row {i}: missing median")))?,
                q3: num(f[5])?,
                max: num(f[6])?,
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{AnalyticField, TaylorJet};
    use crate::cases::{build_conjugate_heat, build_forced_ns, ForcedNsConfig};
    use crate::optim::{HistoryRow, Outcome};
    use proptest::prelude::*;

    type J = TaylorJet<2>;

    #[test]
    fn conjugate_table_at_the_exact_slab_solution() {
        let cfg = ConjugateConfig {
            n_fluid: 50,
            n_solid: 50,
            ..ConjugateConfig::two_slab()
        };
        let case = build_conjugate_heat(&cfg, 9).unwrap();
        let ti = cfg.slab_interface_temperature();
        let (t_in, t_hot, hf, hs) = (cfg.t_in, cfg.t_hot, cfg.height, cfg.solid_depth);
        let fluid = AnalyticField::<2>::new(4, move |x: &[J; 2]| {
            let t = x[1] * ((t_in - ti) / hf) + ti;
            vec![J::constant(0.0), J::constant(0.0), t, J::constant(0.0)]
        });
        let solid = AnalyticField::<2>::new(1, move |x: &[J; 2]| vec![(x[1] + hs) * ((ti - t_hot) / hs) + t_hot]);
        let fields: [&dyn DifferentiableField; 2] = [&fluid, &solid];
        let layout = conjugate_layout(&cfg);
        let refs = [("fluid", Reference::Analytic(&fluid)), ("solid", Reference::Analytic(&solid))];
        let r = grid_metrics("conjugate_heat", &case.problem, &fields, &[], &layout, 20, 15, &refs, "analytic two-slab").unwrap();
        let labels: Vec<&str> = r.rows.iter().filter(|x| x.region == "fluid").map(|x| x.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                "Temperature",
                "Velocity(u)",
                "Velocity(v)",
                "No-slip",
                "Inlet",
                "Outlet",
                "Adiabaticity",
                "Heat eq.",
                "Continuity eq.",
                "Momentum x eq.",
                "Momentum y eq."
            ]
        );
        for row in &r.rows {
            if row.label == "Outlet" {
                assert_eq!(row.value, None);
            } else {
                let v = row.value.unwrap();
                assert!((0.0..1e-12).contains(&v), "{} {}: {v}", row.region, row.label);
            }
        }
        let parsed = parse_metrics(&metrics_text(&r.entries())).unwrap();
        assert_eq!(parsed, r.entries());
        assert!(parsed.iter().any(|(k, v)| k == "solid.bc.interface_flux" && v.parse::<f64>().is_ok()));
    }

    #[test]
    fn self_reference_and_absent_reference() {
        let case = build_forced_ns(
            &ForcedNsConfig {
                n_interior: 20,
                n_boundary: 20,
                ..ForcedNsConfig::default()
            },
            0,
        )
        .unwrap();
        let theta = case.problem.initial_theta(1);
        let net = case.problem.network_field(&theta.0, 0).unwrap();
        let fields: [&dyn DifferentiableField; 1] = [&net];
        let layout = forced_ns_layout();
        let r = grid_metrics("forced", &case.problem, &fields, &[], &layout, 9, 9, &[("fluid", Reference::Analytic(&net))], "self").unwrap();
        for row in r.rows.iter().filter(|x| x.kind == RowKind::Field) {
            assert_eq!(row.value, Some(0.0));
        }
        let r = grid_metrics("forced", &case.problem, &fields, &[], &layout, 9, 9, &[], "none").unwrap();
        assert!(r.rows.iter().filter(|x| x.kind == RowKind::Field).all(|x| x.value.is_none()));
        assert!(r.rows.iter().filter(|x| x.kind != RowKind::Field).all(|x| x.value.unwrap() >= 0.0));
    }

    #[test]
    fn exact_solution_has_vanishing_residual_rows() {
        let case = build_forced_ns(&ForcedNsConfig::default(), 0).unwrap();
        let truth = ForcedNsConfig::reference();
        let fields: [&dyn DifferentiableField; 1] = [&truth];
        let r = grid_metrics("forced", &case.problem, &fields, &[], &forced_ns_layout(), 30, 30, &[("fluid", Reference::Analytic(&truth))], "analytic").unwrap();
        assert!(r.rows.iter().all(|x| x.value.unwrap() <= 1e-12), "{}", r.table());
    }

    #[test]
    fn grid_reference_matches_analytic_reference() {
        let truth = ForcedNsConfig::reference();
        let other = AnalyticField::<2>::new(4, |x: &[J; 2]| vec![x[0], x[1], x[0] * x[1], x[0] + 3.0]);
        let case = build_forced_ns(
            &ForcedNsConfig {
                n_interior: 10,
                n_boundary: 10,
                ..ForcedNsConfig::default()
            },
            0,
        )
        .unwrap();
        let fields: [&dyn DifferentiableField; 1] = [&other];
        let layout = forced_ns_layout();
        let grid = crate::cases::predict_grid(&truth, &["u", "v", "T", "p"], &[], &crate::cases::GridSpec::new(12, 10, [(0.0, 1.0), (0.0, 1.0)]), &|_, _| true).unwrap();
        let a = grid_metrics("f", &case.problem, &fields, &[], &layout, 12, 10, &[("fluid", Reference::Analytic(&truth))], "a").unwrap();
        let b = grid_metrics("f", &case.problem, &fields, &[], &layout, 12, 10, &[("fluid", Reference::Grid(&grid))], "g").unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            let (x, y) = (x.value.unwrap(), y.value.unwrap());
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn correlation_of_a_field_against_itself_is_zero() {
        let f = AnalyticField::<2>::new(4, |x: &[J; 2]| vec![x[1] * x[1], x[0] * 0.1, J::constant(0.0), x[1] * 0.3]);
        let pts = [[1.0, 0.5], [2.0, 1.5]];
        let r = correlation_profiles(&f, [0, 1, 3], &pts).unwrap();
        assert_eq!(correlation_rmse(&f, [0, 1, 3], &pts, &r).unwrap(), 0.0);
        // −(0.3 y)² (2y + 0.1) at y = 0.5
        assert!((r[0] + 0.0225 * 1.1).abs() < 1e-15);
    }

    #[test]
    fn quantiles_follow_linear_interpolation() {
        let s = summarize(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (Some(1.0), Some(1.75), 2.5, Some(3.25), Some(4.0)));
        let one = summarize(&[7.0]).unwrap();
        assert_eq!((one.median, one.q1), (7.0, None));
        assert!(summarize(&[]).is_err());
    }

    fn record(seed: u64, metric: f64) -> RunRecord {
        RunRecord {
            digest: "d".into(),
            seed,
            term_names: vec!["a".into()],
            initial: HistoryRow {
                iter: 0,
                phase: "init".into(),
                alpha: 0.0,
                loss: 1.0,
                terms: vec![1.0],
            },
            history: vec![],
            theta: vec![],
            wall_clock: 0.0,
            metrics: [("residual_rmse".to_string(), metric)].into_iter().collect(),
            outcome: Outcome::Completed,
        }
    }

    #[test]
    fn identical_runs_have_zero_spread_and_csv_round_trips() {
        let recs: Vec<RunRecord> = (0..10).map(|_| record(3, 0.25)).collect();
        let mut runs: Vec<(String, &RunRecord)> = recs.iter().map(|r| ("n=2000".to_string(), r)).collect();
        let other = record(1, 0.5);
        runs.push(("single".into(), &other));
        let st = trial_statistics(&runs).unwrap();
        let s = &st.get("n=2000", "residual_rmse").unwrap().summary;
        assert_eq!(s.n, 10);
        assert_eq!(s.max.unwrap() - s.min.unwrap(), 0.0);
        assert_eq!(s.q3.unwrap() - s.q1.unwrap(), 0.0);
        let back = parse_summary_csv(&st.to_csv()).unwrap();
        assert_eq!(back.len(), st.rows.len());
        for ((c, m, s), r) in back.iter().zip(&st.rows) {
            assert_eq!((c, m), (&r.config, &r.metric));
            assert_eq!((s.min, s.median, s.max), (r.summary.min, r.summary.median, r.summary.max));
        }
        assert_eq!(st.trials_csv().lines().count(), 1 + 2 * 10 + 2);
    }

    proptest! {
        #[test]
        fn summaries_ignore_order(mut v in proptest::collection::vec(-1e3f64..1e3, 2..30), seed in any::<u64>()) {
            let a = summarize(&v).unwrap();
            let n = v.len();
            v.rotate_left((seed % n as u64) as usize);
            v.reverse();
            let b = summarize(&v).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.min.unwrap() <= a.q1.unwrap() && a.q1.unwrap() <= a.median);
            prop_assert!(a.median <= a.q3.unwrap() && a.q3.unwrap() <= a.max.unwrap());
        }
    }
}
