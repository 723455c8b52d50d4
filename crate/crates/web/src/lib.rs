//! Browser bindings for three small views of the library: the presence
//! heatmap of a preset stream, per-setting branch fusion of one input, and
//! the statistics-matching feature projection.
//!
//! The plain functions are what the tests exercise; the `wasm_*` wrappers
//! only convert errors for JavaScript.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use cir_core::harness::presence_heatmap_svg;
use cir_core::nn::{softmax_entropy, Matrix};
use cir_core::strategy::dwgrnet::{ablation_settings, fuse, BranchSignals};
use cir_core::strategy::horde::{pseudo_project, ClassStats, EstimationHeuristic};
use cir_core::stream::{stream_stats, Preset, Scale, Stream};

const ENTROPY_FLOOR: f64 = 1e-4;

/// The presence heatmap SVG and the tab-separated stream summary.
pub fn stream_view(preset: &str, seed: u64, challenge: bool) -> Result<(String, String), String> {
    let scale = if challenge { Scale::Challenge } else { Scale::Desk };
    let preset = Preset::parse(preset).map_err(|e| e.to_string())?;
    let stream = Stream::generate(&preset.config(scale, seed)).map_err(|e| e.to_string())?;
    let title = format!("{} seed {seed}", preset.name());
    Ok((presence_heatmap_svg(&stream, &title), stream_stats(&stream).render()))
}

/// One branch as typed by the user: `class=logit` pairs and a feature norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchInput {
    pub classes: Vec<usize>,
    pub logits: Vec<f64>,
    pub feature_norm: f64,
}

/// Parses lines such as `0=2.5 3=-1 | 4.2`; blank lines and `#` comments
/// are skipped.
pub fn parse_branches(text: &str) -> Result<Vec<BranchInput>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| format!("line {}: {m}", n + 1);
        let (pairs, norm) = line.split_once('|').ok_or_else(|| err("expected `class=logit ... | norm`"))?;
        let feature_norm: f64 = norm.trim().parse().map_err(|_| err("bad feature norm"))?;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in pairs.split_whitespace() {
            let (c, l) = tok.split_once('=').ok_or_else(|| err("expected class=logit"))?;
            let c: usize = c.parse().map_err(|_| err("bad class id"))?;
            let l: f64 = l.parse().map_err(|_| err("bad logit"))?;
            if entries.iter().any(|e| e.0 == c) {
                return Err(err("class listed twice"));
            }
            entries.push((c, l));
        }
        if entries.is_empty() {
            return Err(err("a branch needs at least one class"));
        }
        entries.sort_by_key(|e| e.0);
        out.push(BranchInput {
            classes: entries.iter().map(|e| e.0).collect(),
            logits: entries.iter().map(|e| e.1).collect(),
            feature_norm,
        });
    }
    if out.is_empty() {
        return Err("no branches given".into());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionRow {
    pub setting: &'static str,
    /// Fused score per class; `None` where no branch covers the class.
    pub scores: Vec<Option<f64>>,
    pub label: usize,
}

/// Fuses one input under each ablation setting.
pub fn fusion_table(branches: &[BranchInput]) -> Result<Vec<FusionRow>, String> {
    let n_classes = branches.iter().flat_map(|b| b.classes.iter()).max().map_or(0, |c| c + 1);
    let signals: Vec<BranchSignals> = branches
        .iter()
        .map(|b| {
            Ok(BranchSignals {
                classes: b.classes.clone(),
                logits: Matrix::from_vec(1, b.logits.len(), b.logits.clone()).map_err(|e| e.to_string())?,
                entropy: vec![softmax_entropy(&b.logits).max(ENTROPY_FLOOR)],
                feature_norm: vec![b.feature_norm],
            })
        })
        .collect::<Result<_, String>>()?;
    ablation_settings(ENTROPY_FLOOR)
        .into_iter()
        .map(|(setting, cfg)| {
            let fused = fuse(&signals, cfg, 1, n_classes).map_err(|e| e.to_string())?;
            Ok(FusionRow {
                setting,
                scores: fused.logits.row(0).iter().map(|v| v.is_finite().then_some(*v)).collect(),
                label: fused.labels[0],
            })
        })
        .collect()
}

fn render_fusion(rows: &[FusionRow]) -> String {
    let n = rows.first().map_or(0, |r| r.scores.len());
    let mut html = String::from("<table><tr><th>setting</th>");
    for c in 0..n {
        html.push_str(&format!("<th>class {c}</th>"));
    }
    html.push_str("<th>prediction</th></tr>");
    for r in rows {
        html.push_str(&format!("<tr><td>{}</td>", r.setting));
        for (c, s) in r.scores.iter().enumerate() {
            let cls = if c == r.label { " class=\"win\"" } else { "" };
            match s {
                Some(v) => html.push_str(&format!("<td{cls}>{v:.4}</td>")),
                None => html.push_str("<td>-</td>"),
            }
        }
        html.push_str(&format!("<td>{}</td></tr>", r.label));
    }
    html.push_str("</table>");
    html
}

fn numbers(text: &str, what: &str) -> Result<Vec<f64>, String> {
    text.split([',', ' '])
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| format!("{what}: cannot parse `{t}`")))
        .collect()
}

/// Projects `features` from the source statistics to the target ones and
/// back. An empty target mean means the target class is unknown, in which
/// case the zero-mean, unit-deviation estimate is used.
pub fn projection(
    features: &str,
    src_mean: &str,
    src_std: &str,
    dst_mean: &str,
    dst_std: &str,
) -> Result<(Vec<f64>, Option<Vec<f64>>), String> {
    let a = numbers(features, "features")?;
    let src = ClassStats {
        mean: numbers(src_mean, "source mean")?,
        std: numbers(src_std, "source std")?,
    };
    if src.mean.len() != a.len() || src.std.len() != a.len() {
        return Err("source statistics must match the feature length".into());
    }
    let dst_mean = numbers(dst_mean, "target mean")?;
    let dst = if dst_mean.is_empty() {
        None
    } else {
        let s = ClassStats {
            mean: dst_mean,
            std: numbers(dst_std, "target std")?,
        };
        if s.mean.len() != a.len() || s.std.len() != a.len() {
            return Err("target statistics must match the feature length".into());
        }
        Some(s)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = EstimationHeuristic::Zeros;
    let there = pseudo_project(&a, &[&src], &[dst.as_ref()], h, &mut rng).map_err(|e| e.to_string())?;
    let back = match &dst {
        Some(d) => Some(pseudo_project(&there, &[d], &[Some(&src)], h, &mut rng).map_err(|e| e.to_string())?),
        None => None,
    };
    Ok((there, back))
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub fn wasm_stream_view(preset: &str, seed: u32, challenge: bool) -> Result<Vec<String>, JsError> {
    let (svg, stats) = stream_view(preset, u64::from(seed), challenge).map_err(js)?;
    Ok(vec![svg, stats])
}

#[wasm_bindgen]
pub fn wasm_fusion_table(text: &str) -> Result<String, JsError> {
    let rows = fusion_table(&parse_branches(text).map_err(js)?).map_err(js)?;
    Ok(render_fusion(&rows))
}

#[wasm_bindgen]
pub fn wasm_projection(
    features: &str,
    src_mean: &str,
    src_std: &str,
    dst_mean: &str,
    dst_std: &str,
) -> Result<String, JsError> {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    let (there, back) = projection(features, src_mean, src_std, dst_mean, dst_std).map_err(js)?;
    Ok(match back {
        Some(b) => format!("projected: {}\nround trip: {}", fmt(&there), fmt(&b)),
        None => format!("projected: {}", fmt(&there)),
    })
}
