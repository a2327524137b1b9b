//! Standalone SVG charts for the run outputs.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const M: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#7f7f7f", "#2ca02c", "#9467bd", "#ff7f0e",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{M}" y1="{y}" x2="{x}" y2="{y}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{y}" stroke="black"/>"#,
        y = H - M,
        x = W - M
    );
    s
}

/// Overlaid histograms sharing one set of bins over the pooled range.
pub fn histogram_svg(title: &str, series: &[(&str, &[f64])], bins: usize) -> String {
    let bins = bins.max(1);
    let all: Vec<f64> = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    let mut s = header(title);
    if all.is_empty() {
        s.push_str("</svg>\n");
        return s;
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let counts: Vec<Vec<usize>> = series
        .iter()
        .map(|(_, v)| {
            let mut c = vec![0; bins];
            for x in v.iter().filter(|x| x.is_finite()) {
                c[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
            c
        })
        .collect();
    let max = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let (pw, ph) = (W - 2.0 * M, H - 2.0 * M);
    let bw = pw / bins as f64;
    for (k, c) in counts.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for (b, &n) in c.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let h = ph * n as f64 / max;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.45"/>"#,
                M + b as f64 * bw,
                H - M - h,
                bw,
                h
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{x:.0}" y="{y:.0}" width="10" height="10" fill="{color}"/><text x="{tx:.0}" y="{ty:.0}">{}</text>"#,
            escape(series[k].0),
            x = W - M - 120.0,
            y = M + 16.0 * k as f64,
            tx = W - M - 105.0,
            ty = M + 9.0 + 16.0 * k as f64
        );
    }
    for (x, v) in [(M, lo), (W - M, hi)] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.0}" y="{:.0}" text-anchor="middle">{v:.3}</text>"#,
            H - M + 15.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.0}" y="{:.0}" text-anchor="end">{}</text>"#,
        M - 5.0,
        M + 4.0,
        max as usize
    );
    s.push_str("</svg>\n");
    s
}

/// Vertical bars with optional error whiskers. Missing values leave an empty slot.
pub fn bar_chart_svg(
    title: &str,
    labels: &[String],
    values: &[Option<f64>],
    errors: Option<&[Option<f64>]>,
) -> String {
    let mut s = header(title);
    let n = labels.len().max(1);
    let top = values
        .iter()
        .zip(0..)
        .filter_map(|(v, i)| v.map(|v| v + errors.and_then(|e| e[i]).unwrap_or(0.0)))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let (pw, ph) = (W - 2.0 * M, H - 2.0 * M - 40.0);
    let slot = pw / n as f64;
    let base = H - M - 40.0;
    for (i, label) in labels.iter().enumerate() {
        let x = M + slot * i as f64;
        if let Some(v) = values[i] {
            let h = ph * v.max(0.0) / top;
            let _ = writeln!(
                s,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4"/>"##,
                x + slot * 0.15,
                base - h,
                slot * 0.7,
                h
            );
            if let Some(e) = errors.and_then(|e| e[i]) {
                let cx = x + slot / 2.0;
                let y1 = base - ph * (v + e).max(0.0) / top;
                let y2 = base - ph * (v - e).max(0.0) / top;
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx:.2}" y1="{y1:.2}" x2="{cx:.2}" y2="{y2:.2}" stroke="black"/>"#
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.3}</text>"#,
                x + slot / 2.0,
                base - h - 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{y:.2}" text-anchor="end" transform="rotate(-35 {cx:.2} {y:.2})">{}</text>"#,
            escape(label),
            cx = x + slot / 2.0,
            y = base + 14.0
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let h = histogram_svg("NCAR <T>", &[("a", &[0.1, 0.2, -0.3]), ("b", &[])], 10);
        assert!(h.starts_with("<svg") && h.trim_end().ends_with("</svg>"));
        assert!(h.contains("NCAR &lt;T&gt;"));
        let b = bar_chart_svg(
            "auc",
            &["x".into(), "y".into()],
            &[Some(0.7), None],
            Some(&[Some(0.02), None]),
        );
        assert_eq!(b.matches("<rect").count(), 2);
        assert_eq!(histogram_svg("e", &[], 5), histogram_svg("e", &[], 5));
    }
}
