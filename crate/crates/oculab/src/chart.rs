//! Per-eye precision chart export.

use std::fmt::Write as _;

use oculab_core::protocol::SampleRecord;

pub const PRECISION_HEADER: &str = "t,left_error,right_error";

pub fn precision_csv(records: &[SampleRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 48);
    out.push_str(PRECISION_HEADER);
    out.push('\n');
    for r in records {
        writeln!(out, "{},{},{}", r.t, r.error_left, r.error_right).expect("string write");
    }
    out
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn polyline(records: &[SampleRecord], value: impl Fn(&SampleRecord) -> f64, t_span: (f64, f64), y_max: f64) -> String {
    let (t0, t1) = t_span;
    let sx = (WIDTH - 2.0 * MARGIN) / (t1 - t0).max(f64::EPSILON);
    let sy = (HEIGHT - 2.0 * MARGIN) / y_max;
    let mut pts = String::new();
    for r in records {
        let x = MARGIN + (r.t - t0) * sx;
        let y = HEIGHT - MARGIN - value(r) * sy;
        write!(pts, "{x:.2},{y:.2} ").expect("string write");
    }
    pts.trim_end().to_string()
}

/// Line chart of left (blue) and right (red) angular error against time.
pub fn precision_svg(records: &[SampleRecord]) -> String {
    let t0 = records.first().map_or(0.0, |r| r.t);
    let t1 = records.last().map_or(1.0, |r| r.t);
    let peak = records.iter().map(|r| r.error_left.max(r.error_right)).fold(0.0, f64::max);
    let y_max = if peak > 0.0 { peak * 1.1 } else { 1.0 };
    let left = polyline(records, |r| r.error_left, (t0, t1), y_max);
    let right = polyline(records, |r| r.error_right, (t0, t1), y_max);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    format!(
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>
<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>
<text x="{x0}" y="{ty}" font-size="12">{t0:.2} s</text>
<text x="{x1}" y="{ty}" font-size="12" text-anchor="end">{t1:.2} s</text>
<text x="{lx}" y="{y1}" font-size="12" text-anchor="end">{y_max:.2}°</text>
<text x="{lx}" y="{y0}" font-size="12" text-anchor="end">0°</text>
<polyline fill="none" stroke="#1f77b4" stroke-width="1" points="{left}"/>
<polyline fill="none" stroke="#d62728" stroke-width="1" points="{right}"/>
<text x="{x1}" y="{y1}" font-size="12" text-anchor="end" fill="#1f77b4">left</text>
<text x="{x1}" y="{ly}" font-size="12" text-anchor="end" fill="#d62728">right</text>
</svg>
"##,
        ty = HEIGHT - MARGIN / 3.0,
        lx = MARGIN - 4.0,
        ly = MARGIN + 14.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, l: f64, r: f64) -> SampleRecord {
        SampleRecord { t, target_yaw: 0.0, gaze_yaw: 0.0, error_left: l, error_right: r, error_cyclopean: 0.0, head_yaw: 0.0 }
    }

    #[test]
    fn csv_rows() {
        let csv = precision_csv(&[rec(0.0, 1.5, 2.0), rec(0.5, 0.25, 0.125)]);
        assert_eq!(csv, "t,left_error,right_error\n0,1.5,2\n0.5,0.25,0.125\n");
    }

    #[test]
    fn svg_has_both_series() {
        let svg = precision_svg(&[rec(0.0, 1.0, 2.0), rec(1.0, 2.0, 1.0)]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("points=\"40.00,"));
        let empty = precision_svg(&[]);
        assert!(empty.starts_with("<svg"));
    }
}
