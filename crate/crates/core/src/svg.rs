//! Static SVG 1.1 line charts for metric series. Output is byte-stable for
//! identical input.

use std::path::Path;

use crate::metrics::{MetricsError, MetricsSeries};

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

struct Chart {
    body: String,
    title: String,
}

impl Chart {
    fn new(title: &str) -> Chart {
        Chart {
            body: String::new(),
            title: title.to_string(),
        }
    }

    fn x(&self, t: f64, t_max: f64) -> f64 {
        MARGIN_L + (WIDTH - MARGIN_L - MARGIN_R) * if t_max > 0.0 { t / t_max } else { 0.0 }
    }

    fn y(&self, v: f64, v_max: f64) -> f64 {
        let span = HEIGHT - MARGIN_T - MARGIN_B;
        HEIGHT - MARGIN_B - span * if v_max > 0.0 { v / v_max } else { 0.0 }
    }

    fn polyline(&mut self, points: &[(f64, f64)], t_max: f64, v_max: f64, color: &str) {
        let coords: Vec<String> = points
            .iter()
            .map(|&(t, v)| format!("{:.2},{:.2}", self.x(t, t_max), self.y(v, v_max)))
            .collect();
        self.body.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            color,
            coords.join(" ")
        ));
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, content: &str, extra: &str) {
        self.body.push_str(&format!(
            "  <text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\" font-size=\"{size}\"{extra}>{content}</text>\n"
        ));
    }

    fn axes(&mut self, t_max: f64, left_max: f64, right_max: Option<f64>, x_label: &str, left_label: &str, right_label: &str) {
        let x0 = MARGIN_L;
        let x1 = WIDTH - MARGIN_R;
        let y0 = HEIGHT - MARGIN_B;
        let y1 = MARGIN_T;
        self.body.push_str(&format!(
            "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"#333\"/>\n"
        ));
        self.body.push_str(&format!(
            "  <line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"#333\"/>\n"
        ));
        if right_max.is_some() {
            self.body.push_str(&format!(
                "  <line x1=\"{x1:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y1:.2}\" stroke=\"#333\"/>\n"
            ));
        }
        for k in 0..=5 {
            let f = k as f64 / 5.0;
            let x = x0 + (x1 - x0) * f;
            let y = y0 - (y0 - y1) * f;
            self.text(x, y0 + 18.0, "middle", 11, &format!("{:.0}", t_max * f), "");
            self.text(x0 - 8.0, y + 4.0, "end", 11, &format!("{:.0}", left_max * f), "");
            if let Some(rm) = right_max {
                self.text(x1 + 8.0, y + 4.0, "start", 11, &format!("{:.0}", rm * f), "");
            }
        }
        self.text((x0 + x1) / 2.0, HEIGHT - 12.0, "middle", 13, x_label, "");
        self.text(
            18.0,
            (y0 + y1) / 2.0,
            "middle",
            13,
            left_label,
            &format!(" transform=\"rotate(-90 18 {:.2})\"", (y0 + y1) / 2.0),
        );
        if right_max.is_some() {
            self.text(
                WIDTH - 14.0,
                (y0 + y1) / 2.0,
                "middle",
                13,
                right_label,
                &format!(" transform=\"rotate(90 {:.2} {:.2})\"", WIDTH - 14.0, (y0 + y1) / 2.0),
            );
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n  <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n  <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n{}</svg>\n",
            WIDTH / 2.0,
            self.title,
            self.body
        )
    }
}

fn nice_max(values: impl Iterator<Item = f64>) -> f64 {
    let max = values.fold(0.0f64, |m, v| m.max(v));
    if max <= 0.0 {
        1.0
    } else {
        max * 1.05
    }
}

/// Line chart of the total queue (left axis) and congested-link count
/// (right axis) against time.
pub fn render_run_chart(series: &MetricsSeries, title: &str) -> Result<String, MetricsError> {
    if series.epochs.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let t_max = series.epochs.last().map(|e| e.t).unwrap_or(1.0).max(1.0);
    let q_max = nice_max(series.epochs.iter().map(|e| e.total_queue));
    let c_max = nice_max(series.epochs.iter().map(|e| e.congested_links as f64));
    let mut chart = Chart::new(title);
    chart.axes(
        t_max,
        q_max,
        Some(c_max),
        "cycle",
        "total queue (vehicles)",
        "congested links",
    );
    let q_points: Vec<(f64, f64)> = series.epochs.iter().map(|e| (e.t, e.total_queue)).collect();
    let c_points: Vec<(f64, f64)> = series
        .epochs
        .iter()
        .map(|e| (e.t, e.congested_links as f64 / c_max * q_max))
        .collect();
    chart.polyline(&q_points, t_max, q_max, SERIES_COLORS[0]);
    chart.polyline(&c_points, t_max, q_max, SERIES_COLORS[1]);
    chart.text(MARGIN_L + 10.0, MARGIN_T + 14.0, "start", 12, "total queue", &format!(" fill=\"{}\"", SERIES_COLORS[0]));
    chart.text(MARGIN_L + 10.0, MARGIN_T + 30.0, "start", 12, "congested links", &format!(" fill=\"{}\"", SERIES_COLORS[1]));
    Ok(chart.finish())
}

/// Overlay chart of several total-queue series (one per policy).
pub fn render_overlay_chart(
    labeled: &[(String, Vec<(f64, f64)>)],
    title: &str,
) -> Result<String, MetricsError> {
    if labeled.is_empty() || labeled.iter().all(|(_, pts)| pts.is_empty()) {
        return Err(MetricsError::EmptySeries);
    }
    let t_max = labeled
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    let q_max = nice_max(labeled.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.1)));
    let mut chart = Chart::new(title);
    chart.axes(t_max, q_max, None, "cycle", "total queue (vehicles)", "");
    for (k, (label, points)) in labeled.iter().enumerate() {
        let color = SERIES_COLORS[k % SERIES_COLORS.len()];
        chart.polyline(points, t_max, q_max, color);
        chart.text(
            MARGIN_L + 10.0,
            MARGIN_T + 14.0 + 16.0 * k as f64,
            "start",
            12,
            label,
            &format!(" fill=\"{color}\""),
        );
    }
    Ok(chart.finish())
}

/// Renders the run chart to a file.
pub fn render_svg(series: &MetricsSeries, path: &Path, title: &str) -> Result<(), MetricsError> {
    let svg = render_run_chart(series, title)?;
    std::fs::write(path, svg)?;
    Ok(())
}
