//! Per-track CSV export and SVG line charts of observed vs predicted paths.

use std::fmt::Write as _;

use curio_core::tracker::{Discontinuity, DiscontinuityKind, Track};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Which centre coordinate goes on the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Axis {
    #[default]
    X,
    Y,
}

impl Axis {
    fn pick(self, p: curio_core::trace_model::Point) -> f64 {
        match self {
            Axis::X => p.x,
            Axis::Y => p.y,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Axis::X => "centre x (px)",
            Axis::Y => "centre y (px)",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            _ => Err(format!("axis must be `x` or `y`, got `{s}`")),
        }
    }
}

fn span_fill(kind: DiscontinuityKind) -> &'static str {
    match kind {
        DiscontinuityKind::Vanish => "#999999",
        DiscontinuityKind::Appear => "#bbbbbb",
        DiscontinuityKind::Jump => "#f4a6a6",
        DiscontinuityKind::ShapeSwitch => "#f7d488",
    }
}

/// Replaces anything unsafe in a file name.
pub fn file_stem(event_id: &str) -> String {
    event_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Frame {
    n: usize,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, f: f64) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        if self.n <= 1 {
            MARGIN_LEFT + w / 2.0
        } else {
            MARGIN_LEFT + w * f / (self.n - 1) as f64
        }
    }

    fn y(&self, v: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        HEIGHT - MARGIN_BOTTOM - h * (v - self.lo) / (self.hi - self.lo)
    }

    /// Horizontal extent of one frame slot.
    fn slot(&self) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        if self.n <= 1 {
            w
        } else {
            w / (self.n - 1) as f64
        }
    }
}

fn value_range(tracks: &[&Track], axis: Axis) -> (f64, f64) {
    let values = tracks.iter().flat_map(|t| {
        t.centers_observed
            .iter()
            .chain(&t.centers_predicted)
            .flatten()
            .map(move |p| axis.pick(*p))
    });
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

/// Contiguous runs of present values as (frame, value) lists.
fn runs(series: &[Option<curio_core::trace_model::Point>], axis: Axis) -> Vec<Vec<(usize, f64)>> {
    let mut out: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut current = Vec::new();
    for (f, p) in series.iter().enumerate() {
        match p {
            Some(p) => current.push((f, axis.pick(*p))),
            None if !current.is_empty() => out.push(std::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn write_series(
    svg: &mut String,
    fr: &Frame,
    track: &Track,
    role: &str,
    series: &[Option<curio_core::trace_model::Point>],
    axis: Axis,
    color: &str,
) {
    let dash = if role == "predicted" {
        " stroke-dasharray=\"6 4\""
    } else {
        ""
    };
    let _ = writeln!(
        svg,
        "<g class=\"series\" data-series=\"{role}\" data-track=\"{}\" data-class=\"{}\">",
        track.track_id,
        track.resolved_class()
    );
    let runs = runs(series, axis);
    let mut d = String::new();
    for run in runs.iter().filter(|r| r.len() > 1) {
        for (i, (f, v)) in run.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", fr.x(*f as f64), fr.y(*v));
        }
    }
    if !d.is_empty() {
        let _ = writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>",
            d.trim_end()
        );
    }
    for run in runs.iter().filter(|r| r.len() == 1) {
        let (f, v) = run[0];
        let fill = if role == "predicted" { "none" } else { color };
        let _ = writeln!(
            svg,
            "<circle class=\"marker\" data-frame=\"{f}\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{fill}\" stroke=\"{color}\"/>",
            fr.x(f as f64),
            fr.y(v)
        );
    }
    svg.push_str("</g>\n");
}

/// Renders the non-occluder tracks of one event. Every discontinuity is a
/// shaded band covering its frames.
pub fn render_svg(
    event_id: &str,
    frame_count: usize,
    tracks: &[&Track],
    discontinuities: &[Discontinuity],
    axis: Axis,
) -> String {
    let (lo, hi) = value_range(tracks, axis);
    let fr = Frame {
        n: frame_count,
        lo,
        hi,
    };
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(event_id));
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );

    // Shaded spans go under the series.
    let half = fr.slot() / 2.0;
    for d in discontinuities {
        let x0 = (fr.x(d.start() as f64) - half).max(MARGIN_LEFT);
        let x1 = (fr.x(d.end() as f64) + half).min(MARGIN_LEFT + plot_w);
        let _ = writeln!(
            svg,
            "<rect class=\"span\" data-kind=\"{}\" data-track=\"{}\" data-start=\"{}\" data-end=\"{}\" x=\"{x0:.2}\" y=\"{MARGIN_TOP}\" width=\"{:.2}\" height=\"{plot_h}\" fill=\"{}\" fill-opacity=\"0.35\"/>",
            d.kind,
            d.track_id,
            d.start(),
            d.end(),
            (x1 - x0).max(1.0),
            span_fill(d.kind)
        );
    }

    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>"
    );
    let last = frame_count.saturating_sub(1);
    for f in [0, last / 2, last] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{f}</text>",
            fr.x(f as f64),
            HEIGHT - MARGIN_BOTTOM + 16.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">frame</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    for v in [lo, hi] {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{v:.0}</text>",
            MARGIN_LEFT - 6.0,
            fr.y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        axis.label()
    );
    let _ = writeln!(
        svg,
        "<text x=\"{MARGIN_LEFT}\" y=\"24\" font-size=\"14\">{}</text>",
        escape(event_id)
    );

    for (i, t) in tracks.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        write_series(
            &mut svg,
            &fr,
            t,
            "observed",
            &t.centers_observed,
            axis,
            color,
        );
        write_series(
            &mut svg,
            &fr,
            t,
            "predicted",
            &t.centers_predicted,
            axis,
            color,
        );
        let ly = MARGIN_TOP + 10.0 + 34.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 14.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{lx}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\" stroke-dasharray=\"6 4\"/>",
            ly + 14.0,
            lx + 20.0,
            ly + 14.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\">track {} {}</text>",
            lx + 26.0,
            ly + 11.0,
            t.track_id,
            t.resolved_class()
        );
    }
    svg.push_str("</svg>\n");
    svg
}
