//! Run artifacts: trajectory and metric CSVs, the JSON summary and SVG charts.
//!
//! Floating-point values are written as `{:.16e}` (17 significant digits),
//! which parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::domain::{DensityField, Field, FlowField};
use crate::error::{Error, Result};
use crate::experiment::RunOutput;

pub const DENSITIES_HEADER: &str = "step,time,cell,x,rho1,rho2,m2,rho_total";
pub const METRICS_HEADER: &str = "step,time,normalized_l2,hm1_deviation";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

/// One row per cell and step. `m2` is blank at the final step and for the baseline.
pub fn densities_csv(out: &RunOutput) -> String {
    let g = &out.grid;
    let mut s = String::with_capacity(200 * g.nx * (g.nt + 1));
    s.push_str(DENSITIES_HEADER);
    s.push('\n');
    for k in 0..out.total.steps() {
        let t = g.time(k);
        for j in 0..g.nx {
            let m2 = match &out.m2 {
                Some(m) if k < m.steps() => format!("{:.16e}", m.get(k, j)),
                _ => String::new(),
            };
            let _ = writeln!(
                s,
                "{k},{t:.16e},{j},{:.16e},{:.16e},{:.16e},{m2},{:.16e}",
                g.x(j),
                out.rho1.get(k, j),
                out.rho2.get(k, j),
                out.total.get(k, j)
            );
        }
    }
    s
}

pub fn metrics_csv(out: &RunOutput) -> String {
    let s = &out.summary;
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for (k, (l2, hm1)) in s.normalized_l2.iter().zip(&s.hm1_deviation).enumerate() {
        let _ = writeln!(text, "{k},{:.16e},{l2:.16e},{hm1:.16e}", out.grid.time(k));
    }
    text
}

/// Fields recovered from a densities file.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub nx: usize,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub rho1: DensityField,
    pub rho2: DensityField,
    pub m2: Option<FlowField>,
    pub total: DensityField,
}

pub fn read_densities_csv(text: &str) -> Result<DensityTable> {
    let bad = |line: usize, what: &str| Error::Config(format!("densities.csv line {line}: {what}"));
    let mut lines = text.lines();
    if lines.next() != Some(DENSITIES_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(bad(i + 2, "expected 8 columns"));
        }
        let int = |c: &str| c.parse::<usize>().map_err(|_| bad(i + 2, "bad integer"));
        let num = |c: &str| c.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
        let m2 = if cols[6].is_empty() { None } else { Some(num(cols[6])?) };
        rows.push((int(cols[0])?, num(cols[1])?, int(cols[2])?, num(cols[3])?, num(cols[4])?, num(cols[5])?, m2, num(cols[7])?));
    }
    let nx = rows.iter().map(|r| r.2 + 1).max().ok_or_else(|| bad(2, "no rows"))?;
    let steps = rows.len() / nx;
    if steps * nx != rows.len() {
        return Err(bad(rows.len() + 1, "row count is not a multiple of the cell count"));
    }
    let mut rho1 = Field::zeros(nx, steps);
    let mut rho2 = Field::zeros(nx, steps);
    let mut total = Field::zeros(nx, steps);
    let mut m2 = Field::zeros(nx, steps.saturating_sub(1));
    let mut has_m2 = false;
    let mut times = vec![0.0; steps];
    let mut x = vec![0.0; nx];
    for (i, r) in rows.iter().enumerate() {
        let (k, j) = (r.0, r.2);
        if k != i / nx || j != i % nx {
            return Err(bad(i + 2, "rows out of order"));
        }
        times[k] = r.1;
        x[j] = r.3;
        rho1.set(k, j, r.4);
        rho2.set(k, j, r.5);
        total.set(k, j, r.7);
        if let Some(v) = r.6 {
            if k + 1 == steps {
                return Err(bad(i + 2, "flux given at the final step"));
            }
            has_m2 = true;
            m2.set(k, j, v);
        }
    }
    Ok(DensityTable { nx, times, x, rho1, rho2, m2: has_m2.then_some(m2), total })
}

/// Steps closest to `t = 0, T/4, T/2, T`.
pub fn snapshot_steps(nt: usize) -> [usize; 4] {
    [0, (nt + 2) / 4, (nt + 1) / 2, nt]
}

/// Minimal line chart rendered as standalone SVG.
#[derive(Debug, Clone, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
    /// Horizontal reference lines, drawn dashed.
    pub reference_lines: Vec<(String, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        LineChart { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), ..Default::default() }
    }

    pub fn series(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push((label.into(), points));
        self
    }

    pub fn reference(mut self, label: &str, y: f64) -> Self {
        self.reference_lines.push((label.into(), y));
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self.series.iter().flat_map(|s| s.1.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        for &(_, y) in &self.reference_lines {
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 <= 0.0 {
            x1 = x0 + 1.0;
        }
        let pad = if y1 - y0 > 0.0 { 0.05 * (y1 - y0) } else { 0.5 * y0.abs().max(1.0) };
        (x0, x1, y0 - pad, y1 + pad)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(&self.title));
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(s, r#"<line class="axis" x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>"#);
        let _ = writeln!(s, r#"<line class="axis" x1="{left}" y1="{bottom}" x2="{left}" y2="{top}" stroke="black"/>"#);
        let _ = writeln!(s, r#"<text x="{left}" y="{}" font-size="11">{x0:.3}</text>"#, bottom + 16.0);
        let _ = writeln!(s, r#"<text x="{right}" y="{}" font-size="11" text-anchor="end">{x1:.3}</text>"#, bottom + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{bottom}" font-size="11" text-anchor="end">{y0:.4}</text>"#, left - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{y1:.4}</text>"#, left - 4.0, top + 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, WIDTH / 2.0, HEIGHT - 20.0, escape(&self.x_label));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (label, y) in &self.reference_lines {
            let yy = py(*y);
            let _ = writeln!(
                s,
                r##"<line class="reference" x1="{left}" y1="{yy:.2}" x2="{right}" y2="{yy:.2}" stroke="#555" stroke-dasharray="6 4"><title>{}</title></line>"##,
                escape(label)
            );
        }
        for (i, (label, pts)) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                coords.join(" "),
                escape(label)
            );
            let ly = top + 14.0 * i as f64;
            let _ = writeln!(s, r#"<text x="{}" y="{ly}" font-size="11" fill="{color}" text-anchor="end">{}</text>"#, right, escape(label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn snapshot_chart(out: &RunOutput, field: &Field, title: &str, y_label: &str) -> LineChart {
    let g = &out.grid;
    let mut chart = LineChart::new(title, "x (mi)", y_label);
    for k in snapshot_steps(field.steps() - 1) {
        let pts = (0..g.nx).map(|j| (g.x(j), field.get(k, j))).collect();
        chart = chart.series(&format!("t = {:.2}", g.time(k)), pts);
    }
    chart
}

fn metric_chart(out: &RunOutput, values: &[f64], title: &str) -> LineChart {
    let pts = values.iter().enumerate().map(|(k, &v)| (out.grid.time(k), v)).collect();
    LineChart::new(title, "t (min)", title).series(&out.summary.label, pts)
}

/// Writes every artifact of `out` into `dir` and returns the created paths.
pub fn write_outputs(out: &RunOutput, dir: &Path, emit_svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = vec![
        (dir.join("densities.csv"), densities_csv(out)),
        (dir.join("metrics.csv"), metrics_csv(out)),
        (dir.join("summary.json"), serde_json::to_string_pretty(&out.summary).expect("summary serializes") + "\n"),
    ];
    if emit_svg {
        files.push((dir.join("density_snapshots.svg"), snapshot_chart(out, &out.total, "total density", "rho1 + rho2").render()));
        files.push((dir.join("normalized_l2.svg"), metric_chart(out, &out.summary.normalized_l2, "normalized L2 metric").render()));
        files.push((dir.join("hm1_deviation.svg"), metric_chart(out, &out.summary.hm1_deviation, "H^-1 deviation").render()));
        if let Some(m2) = &out.m2 {
            files.push((dir.join("av_density_snapshots.svg"), snapshot_chart(out, &out.rho2, "AV density", "rho2").render()));
            let mut flow = snapshot_chart(out, m2, "AV flow", "m2");
            if let Some(cap) = out.summary.config.flow_cap {
                flow = flow.reference("flow cap", cap);
            }
            files.push((dir.join("av_flow_snapshots.svg"), flow.render()));
        }
    }
    for (path, text) in &files {
        write_file(path, text)?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

/// Normalized L2 metric of several runs on one chart.
pub fn write_comparison(runs: &[&RunOutput], path: &Path) -> Result<()> {
    let mut chart = LineChart::new("normalized L2 metric", "t (min)", "normalized L2");
    for out in runs {
        let pts = out.summary.normalized_l2.iter().enumerate().map(|(k, &v)| (out.grid.time(k), v)).collect();
        chart = chart.series(&out.summary.label, pts);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    write_file(path, &chart.render())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::experiment::run_experiment;

    fn baseline() -> RunOutput {
        run_experiment(&ExperimentConfig { nx: 16, controlled: false, ..Default::default() }, "baseline").unwrap()
    }

    #[test]
    fn densities_round_trip() {
        let out = baseline();
        let text = densities_csv(&out);
        assert_eq!(text.lines().count(), 16 * (out.grid.nt + 1) + 1);
        let table = read_densities_csv(&text).unwrap();
        assert_eq!(table.rho1, out.rho1);
        assert_eq!(table.rho2, out.rho2);
        assert_eq!(table.total, out.total);
        assert!(table.m2.is_none());
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, std::f64::consts::PI, 5e-324, 1.7976931348623157e308, 2.0f64.sqrt() * 1e-7] {
            assert_eq!(format!("{v:.16e}").parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn snapshot_chart_has_four_curves() {
        let out = baseline();
        let svg = snapshot_chart(&out, &out.total, "total density", "rho").render();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches(r#"class="axis""#).count(), 2);
        assert!(svg.contains("t = 0.00") && svg.contains("t = 8.00"));
    }

    #[test]
    fn snapshot_steps_match_quarters() {
        assert_eq!(snapshot_steps(384), [0, 96, 192, 384]);
        assert_eq!(snapshot_steps(8), [0, 2, 4, 8]);
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(read_densities_csv("a,b\n").is_err());
        assert!(read_densities_csv(&format!("{DENSITIES_HEADER}\n0,0,0,0,1,0,,x\n")).is_err());
    }
}
