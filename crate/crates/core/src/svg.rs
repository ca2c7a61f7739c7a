//! Minimal SVG rendering of a sweep: theoretical rate (dashed) and
//! practical rate (solid) on a logarithmic left axis, efficiency (dotted) on
//! a linear right axis. No plotting dependency; the output is a small
//! standalone XML document with exactly three curve paths.

use std::fmt::Write;

pub struct SweepCurves {
    pub distances_km: Vec<f64>,
    pub theoretical: Vec<f64>,
    pub practical: Vec<f64>,
    pub efficiency: Vec<f64>,
}

const W: f64 = 760.0;
const H: f64 = 480.0;
const ML: f64 = 70.0;
const MR: f64 = 70.0;
const MT: f64 = 40.0;
const MB: f64 = 60.0;
const RATE_FLOOR: f64 = 1e-8;

pub fn render_sweep(curves: &SweepCurves, title: &str) -> String {
    let n = curves.distances_km.len();
    assert!(n > 0, "nothing to plot");
    let x_min = curves.distances_km[0];
    let x_max = curves.distances_km[n - 1].max(x_min + 1.0);
    // log rate axis spanning both rate curves; non-positive rates are
    // clamped to the floor for display only
    let mut log_min = f64::INFINITY;
    let mut log_max = f64::NEG_INFINITY;
    for v in curves.theoretical.iter().chain(&curves.practical) {
        let clamped = v.max(RATE_FLOOR);
        log_min = log_min.min(clamped.log10());
        log_max = log_max.max(clamped.log10());
    }
    let log_min = log_min.floor();
    let log_max = log_max.ceil().max(log_min + 1.0);
    let eff_max = curves
        .efficiency
        .iter()
        .fold(0.05f64, |m, &e| m.max(e.max(0.0)))
        * 1.1;

    let x = |d: f64| ML + (d - x_min) / (x_max - x_min) * (W - ML - MR);
    let y_rate = |r: f64| {
        let l = r.max(RATE_FLOOR).log10();
        H - MB - (l - log_min) / (log_max - log_min) * (H - MT - MB)
    };
    let y_eff = |e: f64| H - MB - (e.max(0.0) / eff_max) * (H - MT - MB);

    let path = |xs: &[f64], ys: Vec<f64>| -> String {
        let mut d = String::new();
        for (i, (&px, py)) in xs.iter().zip(ys).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if i == 0 { "M" } else { " L" }, x(px), py);
        }
        d
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );

    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{}" stroke="black"/>"#,
        H - MB
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ML}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - MB,
        W - MR,
        H - MB
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{MT}" x2="{}" y2="{}" stroke="black"/>"#,
        W - MR,
        W - MR,
        H - MB
    );

    // ticks
    let mut dec = log_min as i64;
    while dec <= log_max as i64 {
        let yy = y_rate(10f64.powi(dec as i32));
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{yy:.2}" x2="{ML}" y2="{yy:.2}" stroke="black"/>"#,
            ML - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">1e{dec}</text>"#,
            ML - 8.0,
            yy + 4.0
        );
        dec += 1;
    }
    for k in 0..=4 {
        let e = eff_max * k as f64 / 4.0;
        let yy = y_eff(e);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{yy:.2}" x2="{:.1}" y2="{yy:.2}" stroke="black"/>"#,
            W - MR,
            W - MR + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="start" font-family="sans-serif" font-size="11">{e:.2}</text>"#,
            W - MR + 8.0,
            yy + 4.0
        );
    }
    let x_ticks = ((x_max - x_min) / 10.0).max(1.0).round();
    let mut d = x_min;
    while d <= x_max + 1e-9 {
        let xx = x(d);
        let _ = writeln!(
            svg,
            r#"<line x1="{xx:.2}" y1="{}" x2="{xx:.2}" y2="{:.1}" stroke="black"/>"#,
            H - MB,
            H - MB + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xx:.2}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{d:.0}</text>"#,
            H - MB + 18.0
        );
        d += x_ticks;
    }

    // axis labels and legend
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">distance (km)</text>"#,
        (ML + W - MR) / 2.0,
        H - 18.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.1})">key rate (bits/pulse)</text>"#,
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(90 {:.1} {:.1})">efficiency</text>"#,
        W - 16.0,
        H / 2.0,
        W - 16.0,
        H / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{MT}" font-family="sans-serif" font-size="11">dashed: theoretical, solid: practical, dotted: efficiency</text>"#,
        ML + 6.0
    );

    // the three curves
    let _ = writeln!(
        svg,
        r#"<path d="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="8 4"/>"#,
        path(&curves.distances_km, curves.theoretical.iter().map(|&v| y_rate(v)).collect())
    );
    let _ = writeln!(
        svg,
        r#"<path d="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
        path(&curves.distances_km, curves.practical.iter().map(|&v| y_rate(v)).collect())
    );
    let _ = writeln!(
        svg,
        r#"<path d="{}" fill="none" stroke="black" stroke-width="1.5" stroke-dasharray="2 4"/>"#,
        path(&curves.distances_km, curves.efficiency.iter().map(|&v| y_eff(v)).collect())
    );
    let _ = writeln!(svg, "</svg>");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_three_paths_and_escapes() {
        let curves = SweepCurves {
            distances_km: vec![10.0, 50.0, 100.0],
            theoretical: vec![0.7, 0.07, 0.007],
            practical: vec![0.25, 0.02, -0.001],
            efficiency: vec![0.35, 0.3, 0.2],
        };
        let svg = render_sweep(&curves, "rates <&> distance");
        assert_eq!(svg.matches("<path").count(), 3);
        assert!(svg.contains("&lt;&amp;&gt;"));
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
