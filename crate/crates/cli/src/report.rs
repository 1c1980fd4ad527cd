//! Summary document, CSV data and hand-written SVG charts for `report`.

use std::fmt::Write;

use volpretext::eval::{format_table, MetricsReport};

use crate::commands::RunArtifacts;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
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
        r#"<line x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - MARGIN,
        W - MARGIN,
        H - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>"#,
        H - MARGIN
    );
    s
}

fn y_ticks(s: &mut String, lo: f64, hi: f64) {
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = H - MARGIN - (H - 2.0 * MARGIN) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 6.0,
            y + 4.0
        );
    }
}

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

fn loss_series(runs: &[RunArtifacts]) -> Vec<Series> {
    let mut out = Vec::new();
    for run in runs {
        let Some(log) = &run.log else { continue };
        let heads: std::collections::BTreeSet<&String> =
            log.epochs.iter().flat_map(|e| e.losses.keys()).collect();
        for head in heads {
            let points = log
                .epochs
                .iter()
                .filter_map(|e| e.losses.get(head).map(|&l| (e.epoch as f64, l)))
                .collect();
            out.push(Series {
                name: format!("{} {head}", run.label),
                points,
            });
        }
    }
    out
}

fn line_chart(title: &str, series: &[Series]) -> String {
    let mut s = svg_open(title);
    let pts = series.iter().flat_map(|x| &x.points);
    let (mut x_hi, mut y_lo, mut y_hi) = (1.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x_hi = x_hi.max(x);
        if y.is_finite() {
            y_lo = y_lo.min(y);
            y_hi = y_hi.max(y);
        }
    }
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (0.0, 1.0);
    }
    if y_hi - y_lo < 1e-12 {
        y_hi = y_lo + 1.0;
    }
    y_lo = y_lo.min(0.0);
    let px = |x: f64| MARGIN + (W - 2.0 * MARGIN) * x / x_hi;
    let py = |y: f64| H - MARGIN - (H - 2.0 * MARGIN) * (y - y_lo) / (y_hi - y_lo);
    y_ticks(&mut s, y_lo, y_hi);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        W / 2.0,
        H - 16.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly:.1}" fill="{color}" text-anchor="end">{}</text>"#,
            W - MARGIN,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

struct Bar {
    name: String,
    value: f64,
    err: f64,
}

fn bar_chart(title: &str, bars: &[Bar]) -> String {
    let mut s = svg_open(title);
    y_ticks(&mut s, 0.0, 1.0);
    let slot = (W - 2.0 * MARGIN) / bars.len().max(1) as f64;
    let py = |y: f64| H - MARGIN - (H - 2.0 * MARGIN) * y.clamp(0.0, 1.0);
    for (i, b) in bars.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let w = slot * 0.7;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{:.1}" width="{w:.1}" height="{:.1}" fill="{color}"/>"#,
            py(b.value),
            H - MARGIN - py(b.value)
        );
        let cx = x + w / 2.0;
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            py(b.value - b.err),
            py(b.value + b.err)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#,
            H - MARGIN + 14.0 + 12.0 * (i % 2) as f64,
            escape(&b.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn reports(run: &RunArtifacts) -> Vec<&MetricsReport> {
    run.metrics.iter().flat_map(|m| [&m.svc, &m.rfc]).collect()
}

/// File name and contents of every report artifact.
pub fn render(runs: &[RunArtifacts]) -> Vec<(String, String)> {
    let series = loss_series(runs);
    let mut loss_csv = String::from("run,series,epoch,loss\n");
    for run in runs {
        let Some(log) = &run.log else { continue };
        for e in &log.epochs {
            for (head, l) in &e.losses {
                let _ = writeln!(loss_csv, "{},{head},{},{l}", run.label, e.epoch);
            }
        }
    }

    let mut metrics_csv = String::from("run,classifier,metric,mean,std,defined_folds\n");
    let mut bars = Vec::new();
    for run in runs {
        for r in reports(run) {
            for (name, m) in r.summaries() {
                let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let _ = writeln!(
                    metrics_csv,
                    "{},{},{name},{},{},{}",
                    run.label,
                    r.classifier,
                    fmt(m.mean),
                    fmt(m.std),
                    m.defined
                );
            }
            if let Some(mean) = r.auc.mean {
                bars.push(Bar {
                    name: format!("{} {}", run.label, r.classifier),
                    value: mean,
                    err: r.auc.std.unwrap_or(0.0),
                });
            }
        }
    }

    let mut md = String::from("# Run summary\n\n");
    for run in runs {
        let _ = writeln!(md, "## {}\n", run.label);
        if let Some(log) = &run.log {
            if let (Some(first), Some(last)) = (log.epochs.first(), log.epochs.last()) {
                let _ = writeln!(
                    md,
                    "| head | epoch {} | epoch {} |",
                    first.epoch, last.epoch
                );
                md.push_str("|---|---|---|\n");
                for (head, l) in &last.losses {
                    let l0 = first.losses.get(head).copied().unwrap_or(f64::NAN);
                    let _ = writeln!(md, "| {head} | {l0:.4} | {l:.4} |");
                }
                if let Some(a) = last.accuracy {
                    let _ = writeln!(md, "\nfinal rotation accuracy {a:.3}");
                }
                if let Some(m) = last.age_mae {
                    let _ = writeln!(md, "\nfinal age MAE {m:.2} years");
                }
                md.push('\n');
            }
        }
        let rs = reports(run);
        if !rs.is_empty() {
            let _ = writeln!(md, "```\n{}```\n", format_table(&rs));
        }
    }
    md.push_str("Plots: loss_curves.svg, metrics.svg. Data: loss_curves.csv, metrics.csv.\n");

    vec![
        ("summary.md".into(), md),
        ("loss_curves.csv".into(), loss_csv),
        (
            "loss_curves.svg".into(),
            line_chart("Pretext loss per epoch", &series),
        ),
        ("metrics.csv".into(), metrics_csv),
        (
            "metrics.svg".into(),
            bar_chart("Downstream AUC (mean +/- std over folds)", &bars),
        ),
    ]
}
