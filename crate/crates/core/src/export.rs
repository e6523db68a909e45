//! CSV tables and SVG figures for batch reports.
//!
//! A bench directory holds `curves.csv`, `outcomes.csv`, `paths.csv` and
//! `scenarios.toml`; the figures can be regenerated from those files alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{
    assemble_report, gradient_field, BatchReport, BenchConfig, BenchMode, Outcome, PathPoint, Scenario,
    ScenarioOutcome, ScenarioSet,
};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::pusht::{corners, t_template, Pose};

pub const CURVES_FILE: &str = "curves.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const PATHS_FILE: &str = "paths.csv";
pub const SCENARIOS_FILE: &str = "scenarios.toml";

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#e6a800", "#2ca02c"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    mode: BenchMode,
    tick: usize,
    time_s: f64,
    success_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OutcomeRow {
    mode: BenchMode,
    scenario_id: String,
    seed: u64,
    outcome: Outcome,
    success_tick: Option<usize>,
    ticks: usize,
    collided: bool,
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PathRow {
    mode: BenchMode,
    scenario_id: String,
    tick: usize,
    agent_x: f64,
    agent_y: f64,
    object_x: Option<f64>,
    object_y: Option<f64>,
    object_theta: Option<f64>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Writes the three CSV tables into `dir`, which must exist.
pub fn export_csv(report: &BatchReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let curves = dir.join(CURVES_FILE);
    let outcomes = dir.join(OUTCOMES_FILE);
    let paths = dir.join(PATHS_FILE);
    write_rows(
        &curves,
        report.modes.iter().flat_map(|m| {
            m.curve.iter().enumerate().map(move |(tick, &f)| CurveRow {
                mode: m.mode,
                tick,
                time_s: (tick + 1) as f64 * report.dt,
                success_fraction: f,
            })
        }),
        &["mode", "tick", "time_s", "success_fraction"],
    )?;
    write_rows(
        &outcomes,
        report.outcomes.iter().map(|o| OutcomeRow {
            mode: o.mode,
            scenario_id: o.scenario_id.clone(),
            seed: o.seed,
            outcome: o.outcome,
            success_tick: o.success_tick,
            ticks: o.ticks,
            collided: o.collided,
            error: o.error.clone(),
        }),
        &[
            "mode",
            "scenario_id",
            "seed",
            "outcome",
            "success_tick",
            "ticks",
            "collided",
            "error",
        ],
    )?;
    write_rows(
        &paths,
        report.outcomes.iter().flat_map(|o| {
            o.path.iter().map(move |p| PathRow {
                mode: o.mode,
                scenario_id: o.scenario_id.clone(),
                tick: p.tick,
                agent_x: p.agent[0],
                agent_y: p.agent[1],
                object_x: p.object.first().copied(),
                object_y: p.object.get(1).copied(),
                object_theta: p.object.get(2).copied(),
            })
        }),
        &[
            "mode",
            "scenario_id",
            "tick",
            "agent_x",
            "agent_y",
            "object_x",
            "object_y",
            "object_theta",
        ],
    )?;
    Ok(vec![curves, outcomes, paths])
}

/// Rebuilds a report from the CSV tables in `dir`.
pub fn load_report(dir: &Path) -> Result<BatchReport> {
    let curves: Vec<CurveRow> = read_rows(&dir.join(CURVES_FILE))?;
    let rows: Vec<OutcomeRow> = read_rows(&dir.join(OUTCOMES_FILE))?;
    let path_rows: Vec<PathRow> = read_rows(&dir.join(PATHS_FILE))?;
    let dt = curves.iter().find(|c| c.tick == 0).map(|c| c.time_s).unwrap_or(0.02);
    let horizon = curves.iter().map(|c| c.tick + 1).max().unwrap_or(0);
    let mut paths: BTreeMap<(BenchMode, String), Vec<PathPoint>> = BTreeMap::new();
    for p in path_rows {
        let object = [p.object_x, p.object_y, p.object_theta].into_iter().flatten().collect();
        paths.entry((p.mode, p.scenario_id)).or_default().push(PathPoint {
            tick: p.tick,
            agent: vec![p.agent_x, p.agent_y],
            object,
        });
    }
    let mut modes: Vec<BenchMode> = Vec::new();
    let outcomes = rows
        .into_iter()
        .map(|r| {
            if !modes.contains(&r.mode) {
                modes.push(r.mode);
            }
            let path = paths.remove(&(r.mode, r.scenario_id.clone())).unwrap_or_default();
            ScenarioOutcome {
                mode: r.mode,
                scenario_id: r.scenario_id,
                seed: r.seed,
                outcome: r.outcome,
                success_tick: r.success_tick,
                ticks: r.ticks,
                collided: r.collided,
                error: r.error,
                path,
            }
        })
        .collect();
    Ok(assemble_report(outcomes, &modes, horizon, dt))
}

pub fn write_scenarios(scenarios: &[Scenario], path: &Path) -> Result<()> {
    let set = ScenarioSet {
        scenarios: scenarios.to_vec(),
    };
    let text = toml::to_string(&set).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = fs::read_to_string(path)?;
    let set: ScenarioSet = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(set.scenarios)
}

/// Maps world coordinates into an SVG viewport with y pointing up.
#[derive(Debug, Clone, Copy)]
struct View {
    lo: Vec2,
    hi: Vec2,
    width: f64,
    height: f64,
    pad: f64,
}

impl View {
    fn map(&self, p: &Vec2) -> (f64, f64) {
        let sx = (self.width - 2.0 * self.pad) / (self.hi.x - self.lo.x);
        let sy = (self.height - 2.0 * self.pad) / (self.hi.y - self.lo.y);
        (
            self.pad + (p.x - self.lo.x) * sx,
            self.height - self.pad - (p.y - self.lo.y) * sy,
        )
    }

    fn points(&self, pts: impl IntoIterator<Item = Vec2>) -> String {
        let mut s = String::new();
        for p in pts {
            let (x, y) = self.map(&p);
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        s.trim_end().to_string()
    }
}

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Success rate over time, one polyline per mode.
pub fn curves_svg(report: &BatchReport) -> String {
    let (w, h) = (640.0, 400.0);
    let horizon = report.modes.iter().map(|m| m.curve.len()).max().unwrap_or(0).max(1);
    let view = View {
        lo: Vec2::new(0.0, 0.0),
        hi: Vec2::new(horizon as f64 * report.dt, 1.0),
        width: w,
        height: h,
        pad: 48.0,
    };
    let mut s = svg_open(w, h);
    let axes = view.points([Vec2::new(0.0, 1.0), Vec2::new(0.0, 0.0), Vec2::new(view.hi.x, 0.0)]);
    let _ = writeln!(s, "<polyline points=\"{axes}\" fill=\"none\" stroke=\"black\"/>");
    for f in [0.0, 0.5, 1.0] {
        let (x, y) = view.map(&Vec2::new(0.0, f));
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{f}</text>",
            x - 4.0,
            y + 4.0
        );
    }
    let (x, y) = view.map(&Vec2::new(view.hi.x, 0.0));
    let _ = writeln!(
        s,
        "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{:.0} s</text>",
        y + 16.0,
        view.hi.x
    );
    for (i, m) in report.modes.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts = view.points(
            std::iter::once(Vec2::new(0.0, 0.0)).chain(
                m.curve
                    .iter()
                    .enumerate()
                    .map(|(t, &f)| Vec2::new((t + 1) as f64 * report.dt, f)),
            ),
        );
        let _ = writeln!(
            s,
            "<polyline class=\"curve\" data-mode=\"{}\" data-final=\"{}\" points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            m.mode,
            m.final_fraction()
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"{color}\">{} ({}/{})</text>",
            w - 200.0,
            24.0 + 16.0 * i as f64,
            m.mode,
            m.successes,
            m.scenarios
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Region a scenario's figure covers.
fn scenario_box(scenario: &Scenario, path: &[PathPoint]) -> (Vec2, Vec2) {
    match scenario {
        Scenario::Nav2d(s) => (Vec2::from(s.bounds[0]), Vec2::from(s.bounds[1])),
        Scenario::Pusht(s) => {
            let t = t_template();
            let mut pts: Vec<Vec2> = corners(&t, &s.object);
            pts.extend(corners(&t, &s.target));
            pts.push(Vec2::from(s.pusher));
            pts.extend(path.iter().map(|p| Vec2::new(p.agent[0], p.agent[1])));
            let mut lo = pts[0];
            let mut hi = pts[0];
            for p in &pts {
                lo = lo.inf(p);
                hi = hi.sup(p);
            }
            let m = 0.1;
            let c = (lo + hi) / 2.0;
            let half = ((hi - lo).max() / 2.0 + m).min(2.0);
            (c.add_scalar(-half), c.add_scalar(half))
        }
    }
}

/// One rollout over the scenario map with the initial gradient field drawn
/// as short strokes of uniform length.
pub fn trajectory_svg(scenario: &Scenario, outcome: &ScenarioOutcome, field: &[(Vec2, Vec2)]) -> String {
    let (w, h) = (480.0, 480.0);
    let (lo, hi) = scenario_box(scenario, &outcome.path);
    let view = View {
        lo,
        hi,
        width: w,
        height: h,
        pad: 16.0,
    };
    let mut s = svg_open(w, h);
    let stroke = (hi.x - lo.x) / 40.0;
    for (p, d) in field {
        let n = d.norm();
        if !(n > 0.0) {
            continue;
        }
        let q = p + d * (stroke / n);
        let (x0, y0) = view.map(p);
        let (x1, y1) = view.map(&q);
        let _ = writeln!(
            s,
            "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\" stroke=\"#bbbbbb\"/>\n<circle cx=\"{x1:.2}\" cy=\"{y1:.2}\" r=\"1.2\" fill=\"#999999\"/>"
        );
    }
    match scenario {
        Scenario::Nav2d(sc) => {
            for o in &sc.obstacles {
                let pts = view.points(o.vertices.iter().map(|v| Vec2::from(*v)));
                let _ = writeln!(s, "<polygon points=\"{pts}\" fill=\"#555555\"/>");
            }
            let (x, y) = view.map(&Vec2::from(sc.target));
            let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"#2ca02c\"/>");
        }
        Scenario::Pusht(sc) => {
            let t = t_template();
            let poly =
                |pose: &Pose, style: &str| format!("<polygon points=\"{}\" {style}/>", view.points(corners(&t, pose)));
            let _ = writeln!(s, "{}", poly(&sc.target, "fill=\"#c7e9c0\" stroke=\"#2ca02c\""));
            let _ = writeln!(
                s,
                "{}",
                poly(&sc.object, "fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"4 3\"")
            );
            if let Some(last) = outcome.path.last().filter(|p| p.object.len() == 3) {
                let pose = Pose::new(last.object[0], last.object[1], last.object[2]);
                let _ = writeln!(
                    s,
                    "{}",
                    poly(&pose, "fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"#1f77b4\"")
                );
            }
        }
    }
    if !outcome.path.is_empty() {
        let pts = view.points(outcome.path.iter().map(|p| Vec2::new(p.agent[0], p.agent[1])));
        let _ = writeln!(
            s,
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>"
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"8\" y=\"14\" font-size=\"12\">{} {} {:?}</text>",
        outcome.scenario_id, outcome.mode, outcome.outcome
    );
    s.push_str("</svg>\n");
    s
}

/// Grid of `n × n` sample points covering a scenario's figure.
pub fn field_grid(scenario: &Scenario, path: &[PathPoint], n: usize) -> Vec<Vec2> {
    let (lo, hi) = scenario_box(scenario, path);
    let step = (hi - lo) / n as f64;
    (0..n)
        .flat_map(|i| (0..n).map(move |j| lo + Vec2::new((i as f64 + 0.5) * step.x, (j as f64 + 0.5) * step.y)))
        .collect()
}

/// Writes `success_curves.svg` and one trajectory figure per rollout under
/// `dir/trajectories`. Rollouts whose scenario is missing from `scenarios`
/// are skipped.
pub fn export_svg(
    report: &BatchReport,
    scenarios: &[Scenario],
    config: &BenchConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let curves = dir.join("success_curves.svg");
    fs::write(&curves, curves_svg(report))?;
    written.push(curves);
    if report.outcomes.is_empty() {
        return Ok(written);
    }
    let traj_dir = dir.join("trajectories");
    fs::create_dir_all(&traj_dir)?;
    let by_id: BTreeMap<&str, &Scenario> = scenarios.iter().map(|s| (s.id(), s)).collect();
    let mut fields: BTreeMap<&str, Vec<(Vec2, Vec2)>> = BTreeMap::new();
    for o in &report.outcomes {
        let Some(sc) = by_id.get(o.scenario_id.as_str()) else {
            continue;
        };
        if !fields.contains_key(sc.id()) {
            let grid = field_grid(sc, &o.path, 20);
            fields.insert(sc.id(), gradient_field(sc, config, &grid)?);
        }
        let file = traj_dir.join(format!("{}__{}.svg", o.mode, o.scenario_id));
        fs::write(&file, trajectory_svg(sc, o, &fields[sc.id()]))?;
        written.push(file);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_batch, Domain};

    fn outcome(mode: BenchMode, tick: Option<usize>) -> ScenarioOutcome {
        ScenarioOutcome {
            mode,
            scenario_id: format!("s{}", tick.unwrap_or(9)),
            seed: 1,
            outcome: if tick.is_some() {
                Outcome::Success
            } else {
                Outcome::LocalMinimumStall
            },
            success_tick: tick,
            ticks: 3,
            collided: false,
            error: None,
            path: vec![PathPoint {
                tick: 0,
                agent: vec![0.5, 0.25],
                object: vec![],
            }],
        }
    }

    #[test]
    fn empty_report_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        export_csv(&BatchReport::empty(0.02), dir.path()).unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap(),
            "mode,tick,time_s,success_fraction\n"
        );
        let out = fs::read_to_string(dir.path().join(OUTCOMES_FILE)).unwrap();
        assert_eq!(out.lines().count(), 1);
    }

    #[test]
    fn two_modes_three_ticks_give_six_curve_rows() {
        let r = assemble_report(
            vec![
                outcome(BenchMode::Full, Some(1)),
                outcome(BenchMode::SteepestBaseline, None),
            ],
            &[BenchMode::Full, BenchMode::SteepestBaseline],
            3,
            0.02,
        );
        let dir = tempfile::tempdir().unwrap();
        export_csv(&r, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn csv_round_trip_restores_report() {
        let r = assemble_report(
            vec![outcome(BenchMode::Full, Some(1)), outcome(BenchMode::Full, None)],
            &[BenchMode::Full],
            4,
            0.02,
        );
        let dir = tempfile::tempdir().unwrap();
        export_csv(&r, dir.path()).unwrap();
        assert_eq!(load_report(dir.path()).unwrap(), r);
    }

    #[test]
    fn svg_curve_ends_at_final_fraction() {
        let r = assemble_report(
            vec![outcome(BenchMode::Full, Some(1)), outcome(BenchMode::Full, None)],
            &[BenchMode::Full],
            4,
            0.5,
        );
        let svg = curves_svg(&r);
        let line = svg.lines().find(|l| l.contains("class=\"curve\"")).unwrap();
        assert!(line.contains("data-final=\"0.5\""));
        let pts = line.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let last_y: f64 = pts
            .split(' ')
            .next_back()
            .unwrap()
            .split(',')
            .nth(1)
            .unwrap()
            .parse()
            .unwrap();
        // y = h − pad − f·(h − 2·pad) with h = 400, pad = 48.
        assert!((last_y - (400.0 - 48.0 - 0.5 * 304.0)).abs() < 0.01);
    }

    #[test]
    fn trajectory_figures_include_field() {
        let cfg = BenchConfig::default();
        let sc = generate_batch(Domain::Nav2d, 1, 5, &cfg).unwrap().remove(0);
        let o = ScenarioOutcome {
            scenario_id: sc.id().to_string(),
            ..outcome(BenchMode::Full, Some(1))
        };
        let grid = field_grid(&sc, &o.path, 8);
        let field = gradient_field(&sc, &cfg, &grid).unwrap();
        assert!(field.len() > 20);
        let svg = trajectory_svg(&sc, &o, &field);
        assert!(svg.matches("<line").count() >= 20);
        assert!(svg.contains("<polygon"));
    }
}
