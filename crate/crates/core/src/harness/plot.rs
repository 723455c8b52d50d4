//! Standalone SVG figures: class-presence heatmaps and accuracy curves.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::records::{MetricsRecord, RunStatus};
use crate::stream::Stream;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Classes as rows, experiences as columns; present cells are filled, cells
/// added by the empty-experience fix-up are drawn in a second colour.
pub fn presence_heatmap_svg(stream: &Stream, title: &str) -> String {
    let s = &stream.schedule;
    let (rows, cols) = (s.n_classes(), s.n_experiences());
    let cell = (640.0 / cols.max(rows) as f64).clamp(2.0, 14.0);
    let (left, top) = (48.0, 36.0);
    let width = left + cols as f64 * cell + 16.0;
    let height = top + rows as f64 * cell + 36.0;
    let fixups: std::collections::BTreeSet<(usize, usize)> =
        s.fixups.iter().map(|f| (f.class, f.experience)).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="20" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left}" y="{top}" width="{:.2}" height="{:.2}" fill="#f2f2f2"/>"##,
        cols as f64 * cell,
        rows as f64 * cell
    );
    out.push_str("<g class=\"presence\">\n");
    for c in 0..rows {
        for t in 1..=cols {
            if s.is_present(c, t) {
                let color = if fixups.contains(&(c, t)) { "#e6550d" } else { "#08519c" };
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="{color}" data-class="{c}" data-experience="{t}"/>"#,
                    left + (t - 1) as f64 * cell,
                    top + c as f64 * cell
                );
            }
        }
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="{:.0}" font-family="sans-serif" font-size="11">experience (1..{cols})</text>"#,
        height - 12.0
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{top}" font-family="sans-serif" font-size="11" transform="rotate(90 12 {top})">class (0..{})</text>"#,
        rows.saturating_sub(1)
    );
    out.push_str("</svg>\n");
    out
}

/// Mean accuracy per experience for each strategy on `stream`, with a band
/// spanning the per-seed minimum and maximum. Single-point trajectories
/// (joint training) are drawn as a dashed horizontal line.
pub fn accuracy_curves_svg(records: &[MetricsRecord], stream: &str) -> String {
    let mut by_strategy: BTreeMap<&str, Vec<&Vec<f64>>> = BTreeMap::new();
    for r in records {
        if r.stream == stream && r.status == RunStatus::Ok && !r.trajectory.is_empty() {
            by_strategy.entry(&r.strategy).or_default().push(&r.trajectory);
        }
    }
    let n = by_strategy
        .values()
        .flat_map(|ts| ts.iter().map(|t| t.len()))
        .max()
        .unwrap_or(1)
        .max(2);
    let (left, top, pw, ph) = (56.0, 36.0, 560.0, 320.0);
    let width = left + pw + 170.0;
    let height = top + ph + 48.0;
    let x = |i: usize| left + pw * i as f64 / (n - 1) as f64;
    let y = |a: f64| top + ph * (1.0 - a.clamp(0.0, 1.0));
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="20" font-family="sans-serif" font-size="13">test accuracy on {}</text>"#,
        escape(stream)
    );
    for k in 0..=4 {
        let a = k as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#dddddd"/><text x="{2}" y="{3:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{4:.0}%</text>"##,
            y(a),
            left + pw,
            left - 6.0,
            y(a) + 3.0,
            100.0 * a
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11" text-anchor="middle">experience</text>"#,
        left + pw / 2.0,
        height - 10.0
    );
    for (k, (name, trajs)) in by_strategy.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let len = trajs.iter().map(|t| t.len()).max().unwrap_or(0);
        let _ = writeln!(out, r#"<g class="strategy" data-strategy="{}">"#, escape(name));
        if len == 1 {
            let mean = trajs.iter().map(|t| t[0]).sum::<f64>() / trajs.len() as f64;
            let _ = writeln!(
                out,
                r#"<line x1="{left}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="6 4"/>"#,
                y(mean),
                left + pw
            );
        } else {
            let stats: Vec<(f64, f64, f64)> = (0..len)
                .map(|i| {
                    let v: Vec<f64> = trajs.iter().filter_map(|t| t.get(i).copied()).collect();
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (mean, lo, hi)
                })
                .collect();
            let offset = n - len;
            let upper = stats.iter().enumerate().map(|(i, s)| format!("{:.2},{:.2}", x(i + offset), y(s.2)));
            let lower = stats.iter().enumerate().rev().map(|(i, s)| format!("{:.2},{:.2}", x(i + offset), y(s.1)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                out,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                band.join(" ")
            );
            let line: Vec<String> = stats
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{:.2},{:.2}", x(i + offset), y(s.0)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                line.join(" ")
            );
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.0}" y="{:.0}" width="12" height="12" fill="{color}"/><text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11">{} (n={})</text>"#,
            left + pw + 16.0,
            ly - 10.0,
            left + pw + 34.0,
            ly,
            escape(name),
            trajs.len()
        );
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{FirstOccurrenceDist, RepetitionSpec, StreamConfig};

    fn stream(q: f64) -> Stream {
        Stream::generate(&StreamConfig {
            n_experiences: 6,
            experience_size: 30,
            n_classes: 6,
            samples_per_class: 10,
            first_occurrence: FirstOccurrenceDist::Explicit {
                pmf: vec![1.0; 6],
            },
            repetition: RepetitionSpec::Fixed { q },
            seed: 3,
        })
        .unwrap()
    }

    fn cells(svg: &str) -> Vec<(usize, usize)> {
        let doc = roxmltree::Document::parse(svg).unwrap();
        doc.descendants()
            .filter_map(|n| {
                Some((
                    n.attribute("data-class")?.parse().ok()?,
                    n.attribute("data-experience")?.parse().ok()?,
                ))
            })
            .collect()
    }

    #[test]
    fn heatmap_cells_follow_the_schedule() {
        let standard = crate::harness::no_repetition_stream(6, 2, 4, 0).unwrap();
        let got = cells(&presence_heatmap_svg(&standard, "a <b>"));
        let mut per_class = [0; 6];
        got.iter().for_each(|(c, _)| per_class[*c] += 1);
        assert!(per_class.iter().all(|&n| n == 1));
        let cumulative = stream(1.0);
        let got = cells(&presence_heatmap_svg(&cumulative, "cum"));
        for c in 0..6 {
            let first = cumulative.schedule.first_occurrence[c];
            let row: Vec<usize> = got.iter().filter(|x| x.0 == c).map(|x| x.1).collect();
            assert_eq!(row, (first..=6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn curves_parse_and_cover_strategies() {
        let rec = |s: &str, seed, t: Vec<f64>| MetricsRecord {
            strategy: s.into(),
            stream: "S1".into(),
            seed,
            status: RunStatus::Ok,
            final_accuracy: t.last().copied(),
            trajectory: t,
            n_experiences: 3,
            error: None,
            run_log: vec![],
        };
        let svg = accuracy_curves_svg(
            &[
                rec("naive", 0, vec![0.2, 0.3, 0.1]),
                rec("naive", 1, vec![0.4, 0.2, 0.2]),
                rec("joint", 0, vec![0.9]),
            ],
            "S1",
        );
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let groups: Vec<&str> = doc
            .descendants()
            .filter_map(|n| n.attribute("data-strategy"))
            .collect();
        assert_eq!(groups, vec!["joint", "naive"]);
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polygon")).count(), 1);
    }
}
