//! CSV, JSON and SVG emission. Every artifact carries the full scenario and
//! seed so it can be regenerated from itself.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::estimators::PathMetrics;
use crate::model::State;
use crate::scenario::Scenario;

pub const TRAJECTORY_HEADER: &str = "t,S,I,S_m,I_m";
pub const JUMPS_HEADER: &str = "t,atom,S_pre,I_pre,S_m_pre,I_m_pre";
pub const PATHS_HEADER: &str = "path,terminal_I,terminal_Im,time_avg_infection,lyapunov_rate,clamped";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    pub scenario: Scenario,
}

impl Metadata {
    pub fn new(scenario: &Scenario, seed: u64, n_paths: Option<usize>) -> Self {
        Metadata {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            dt: scenario.sim.dt,
            t_end: scenario.sim.t_end,
            n_paths,
            scenario: scenario.clone(),
        }
    }

    /// `# `-prefixed lines; the scenario block is loadable after stripping
    /// the prefix.
    pub fn comment_block(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} {}", self.tool, self.version);
        let _ = writeln!(out, "# seed = {}", self.seed);
        if let Some(n) = self.n_paths {
            let _ = writeln!(out, "# n_paths = {n}");
        }
        for line in self.scenario.to_text().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}

/// JSON document wrapping a report with its metadata.
#[derive(Debug, Serialize)]
pub struct Document<'a, T: Serialize> {
    pub metadata: &'a Metadata,
    pub report: &'a T,
}

pub fn to_json<T: Serialize>(metadata: &Metadata, report: &T) -> String {
    serde_json::to_string_pretty(&Document { metadata, report }).expect("reports are always serializable")
}

/// Shortest round-trip text of `v`, in exponent form for very small or
/// large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn state_row(out: &mut impl Write, t: f64, x: &State) -> io::Result<()> {
    writeln!(out, "{},{},{},{},{}", fmt_f64(t), fmt_f64(x.s), fmt_f64(x.i), fmt_f64(x.s_m), fmt_f64(x.i_m))
}

pub fn write_trajectory_csv(out: &mut impl Write, meta: &Metadata, traj: &Trajectory) -> io::Result<()> {
    out.write_all(meta.comment_block().as_bytes())?;
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for (t, x) in traj.times.iter().zip(&traj.states) {
        state_row(out, *t, x)?;
    }
    Ok(())
}

pub fn write_jumps_csv(out: &mut impl Write, meta: &Metadata, traj: &Trajectory) -> io::Result<()> {
    out.write_all(meta.comment_block().as_bytes())?;
    writeln!(out, "{JUMPS_HEADER}")?;
    for e in &traj.jump_events {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(e.t),
            e.atom,
            fmt_f64(e.pre.s),
            fmt_f64(e.pre.i),
            fmt_f64(e.pre.s_m),
            fmt_f64(e.pre.i_m)
        )?;
    }
    Ok(())
}

pub fn write_paths_csv(out: &mut impl Write, meta: &Metadata, paths: &[PathMetrics]) -> io::Result<()> {
    out.write_all(meta.comment_block().as_bytes())?;
    writeln!(out, "{PATHS_HEADER}")?;
    for p in paths {
        let rate = p.lyapunov_rate.map_or_else(|| "NaN".to_string(), fmt_f64);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.path,
            fmt_f64(p.terminal_i),
            fmt_f64(p.terminal_im),
            fmt_f64(p.time_avg_infection),
            rate,
            p.clamped
        )?;
    }
    Ok(())
}

/// Reads a trajectory CSV written by [`write_trajectory_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<(Vec<f64>, Vec<State>), String> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    match lines.next() {
        Some(TRAJECTORY_HEADER) => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (k, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| format!("row {}: {e}", k + 1))?;
        if v.len() != 5 {
            return Err(format!("row {}: expected 5 fields, got {}", k + 1, v.len()));
        }
        times.push(v[0]);
        states.push(State::new(v[1], v[2], v[3], v[4]));
    }
    Ok((times, states))
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 48.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// One panel per compartment against time, arranged 2×2.
pub fn render_svg(meta: &Metadata, traj: &Trajectory) -> String {
    let names = ["S", "I", "S_m", "I_m"];
    let width = 2.0 * (PANEL_W + MARGIN) + MARGIN;
    let height = 2.0 * (PANEL_H + MARGIN) + MARGIN + 24.0;
    let step = traj.times.len().div_ceil(MAX_POINTS).max(1);
    let t0 = traj.times.first().copied().unwrap_or(0.0);
    let t1 = traj.times.last().copied().unwrap_or(1.0);
    let t_span = if t1 > t0 { t1 - t0 } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    // "--" is not allowed inside XML comments
    let _ = writeln!(svg, "<!--\n{}-->", meta.comment_block().replace("--", "- -"));
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{} (seed {})</text>"#,
        width / 2.0,
        escape(&meta.scenario.name),
        meta.seed
    );

    for (k, name) in names.iter().enumerate() {
        let ox = MARGIN + (k % 2) as f64 * (PANEL_W + MARGIN);
        let oy = 24.0 + MARGIN + (k / 2) as f64 * (PANEL_H + MARGIN);
        let values: Vec<f64> = traj.states.iter().map(|x| x.to_array()[k]).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
        let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
            hi = lo + 1.0;
        }
        let px = |t: f64| ox + (t - t0) / t_span * PANEL_W;
        let py = |v: f64| oy + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;

        let _ = writeln!(
            svg,
            r##"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{name}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 8.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, ox - 4.0, oy + 4.0, label(hi));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, ox - 4.0, oy + PANEL_H, label(lo));
        let _ = writeln!(svg, r#"<text x="{ox}" y="{}">{}</text>"#, oy + PANEL_H + 14.0, label(t0));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">t = {}</text>"#,
            ox + PANEL_W,
            oy + PANEL_H + 14.0,
            label(t1)
        );

        let mut points = String::new();
        let mut idx: Vec<usize> = (0..values.len()).step_by(step).collect();
        if idx.last() != Some(&(values.len().saturating_sub(1))) && !values.is_empty() {
            idx.push(values.len() - 1);
        }
        for i in idx {
            let _ = write!(points, "{:.2},{:.2} ", px(traj.times[i]), py(values[i]));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            COLORS[k],
            points.trim_end()
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate;

    fn sample() -> (Metadata, Trajectory) {
        let mut s = Scenario::preset("table1-extinction").unwrap();
        s.sim.dt = 0.01;
        s.sim.t_end = 5.0;
        s.sim.seed = 4;
        let tr = simulate(&s.model, &s.noise, &s.jumps, &s.sim, &s.init).unwrap();
        (Metadata::new(&s, 4, None), tr)
    }

    #[test]
    fn trajectory_csv_round_trips() {
        let (meta, tr) = sample();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &meta, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let (times, states) = parse_trajectory_csv(&text).unwrap();
        assert_eq!(times, tr.times);
        assert_eq!(states, tr.states);

        let embedded: String = text
            .lines()
            .filter_map(|l| l.strip_prefix("# "))
            .filter(|l| l.contains(" = ") && !l.starts_with("seed"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(Scenario::parse(&embedded).unwrap(), meta.scenario);
        assert!(text.contains("# seed = 4"));
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, 1.0, -0.75, 2.9e-75, 1e-5, 9.99e-6, 1e20, 123456.789, f64::MIN_POSITIVE] {
            let text = fmt_f64(v);
            assert_eq!(text.parse::<f64>().unwrap(), v, "{text}");
            assert!(text.len() < 26, "{text}");
        }
    }

    #[test]
    fn jumps_csv_shape() {
        let (meta, tr) = sample();
        let mut buf = Vec::new();
        write_jumps_csv(&mut buf, &meta, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], JUMPS_HEADER);
        assert_eq!(rows.len(), tr.jump_events.len() + 1);
        assert!(rows[1..].iter().all(|r| r.split(',').count() == 6));
    }

    #[test]
    fn svg_has_four_panels() {
        let (meta, tr) = sample();
        let svg = render_svg(&meta, &tr);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4);
        let comment = &svg[svg.find("<!--").unwrap() + 4..svg.find("-->").unwrap()];
        assert!(!comment.contains("--"));
    }
}
