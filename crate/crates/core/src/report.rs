//! Report emission: aggregate tables as CSV, a JSON summary, and SVG
//! learning-curve, weight-change-heatmap and learning-rate-sweep plots.
//! Output bytes are a pure function of the inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{rank_row_deltas, TrialAggregate};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::eval::ConditionTag;
use crate::wordlab::{FewShotTrial, TaughtLabel};

const CURVE_COLORS: [(TaughtLabel, &str); 2] = [
    (TaughtLabel::Feminine, "#e66101"),
    (TaughtLabel::Masculine, "#0571b0"),
];

pub fn aggregate_to_csv(aggregate: &TrialAggregate) -> String {
    let mut out = String::from(
        "model,condition,taught_gender,shots,distance,n_trials,mean_acc,ci_lo,ci_hi\n",
    );
    for c in &aggregate.cells {
        let distance = c
            .distance
            .map(|d| d.to_string())
            .unwrap_or_else(|| "all".into());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6}",
            c.model, c.condition, c.taught, c.shots, distance, c.n_trials, c.mean_accuracy,
            c.ci_lo, c.ci_hi
        );
    }
    out
}

/// Top-10 weight changes per trial with the slot row's axis projection.
pub fn deltas_to_csv(trials: &[FewShotTrial], vocab: Option<&Vocabulary>) -> String {
    let mut out = String::from("trial_key,rank,token,percent_change,axis_projection\n");
    for t in trials {
        let projection = t.axis_projection();
        for (rank, delta) in rank_row_deltas(&t.delta_rows, 10).iter().enumerate() {
            let token = match vocab {
                Some(v) => v.token(delta.token).to_string(),
                None => delta.token.to_string(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                t.key_string(),
                rank + 1,
                token,
                delta.percent_change,
                projection
            );
        }
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    n_trials: usize,
    models: Vec<String>,
    gender_gaps: &'a [crate::analysis::GenderGap],
    projections: &'a [crate::analysis::ProjectionSummary],
    heatmaps_emitted: bool,
    notes: Vec<String>,
}

/// Write every report artifact into `out_dir` and return the paths.
pub fn emit_report(
    aggregate: &TrialAggregate,
    trials: &[FewShotTrial],
    vocab: Option<&Vocabulary>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();
    let write = |name: &str, content: String| -> Result<PathBuf> {
        let path = out_dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(path)
    };

    written.push(write("aggregate.csv", aggregate_to_csv(aggregate))?);
    written.push(write("deltas.csv", deltas_to_csv(trials, vocab))?);

    let mut models: Vec<String> = aggregate.cells.iter().map(|c| c.model.clone()).collect();
    models.sort();
    models.dedup();

    for model in &models {
        let svg = learning_curves_svg(aggregate, model);
        written.push(write(&format!("learning_curves_{model}.svg"), svg)?);
    }

    let have_deltas = trials.iter().any(|t| !t.delta_rows.is_empty());
    let mut notes = Vec::new();
    if have_deltas {
        let mut groups: BTreeMap<(String, ConditionTag, TaughtLabel), Vec<&FewShotTrial>> =
            BTreeMap::new();
        for t in trials {
            groups
                .entry((t.model_label.clone(), t.condition, t.taught))
                .or_default()
                .push(t);
        }
        for ((model, condition, taught), group) in &groups {
            let svg = heatmap_svg(group, vocab);
            written.push(write(
                &format!("heatmap_{model}_{condition}_{taught}.svg"),
                svg,
            )?);
        }
    } else {
        notes.push("no embedding deltas recorded; heatmaps omitted".to_string());
    }

    let summary = Summary {
        n_trials: trials.len(),
        models,
        gender_gaps: &aggregate.gender_gaps,
        projections: &aggregate.projections,
        heatmaps_emitted: have_deltas,
        notes,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Internal(format!("summary encode: {e}")))?;
    written.push(write("summary.json", json)?);
    Ok(written)
}

fn svg_header(width: usize, height: usize) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"11\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    )
}

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Panel {
    /// Map (shot index in 0..n_ticks, accuracy in 0..1) to canvas.
    fn point(&self, tick: usize, n_ticks: usize, acc: f64) -> (f64, f64) {
        let x = self.x0 + self.w * tick as f64 / (n_ticks.max(2) - 1) as f64;
        let y = self.y0 + self.h * (1.0 - acc);
        (x, y)
    }
}

fn polyline(points: &[(f64, f64)], color: &str, width: f64, opacity: f64) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|(x, y)| format!("{x:.2},{y:.2}"))
        .collect();
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width:.1}\" \
         stroke-opacity=\"{opacity:.2}\"/>\n",
        coords.join(" ")
    )
}

/// One panel per condition; dark lines are the mean taught-gender accuracy
/// per shot count (shot 0 is the pre-update accuracy), faded lines are the
/// individual novel nouns.
pub fn learning_curves_svg(aggregate: &TrialAggregate, model: &str) -> String {
    let conditions: Vec<ConditionTag> = {
        let mut cs: Vec<ConditionTag> = aggregate
            .cells
            .iter()
            .filter(|c| c.model == model)
            .map(|c| c.condition)
            .collect();
        cs.sort();
        cs.dedup();
        cs
    };
    let panel_w = 260.0;
    let panel_h = 170.0;
    let margin = 50.0;
    let cols = 2usize;
    let rows = conditions.len().div_ceil(cols);
    let width = (margin + (panel_w + margin) * cols as f64) as usize;
    let height = (margin + (panel_h + margin) * rows.max(1) as f64) as usize;

    let mut svg = svg_header(width, height);
    let _ = write!(
        svg,
        "<text x=\"{margin}\" y=\"20\">{model}: taught-gender accuracy by learning examples</text>\n"
    );

    for (i, condition) in conditions.iter().enumerate() {
        let px = margin + (panel_w + margin) * (i % cols) as f64;
        let py = margin + (panel_h + margin) * (i / cols) as f64;
        let panel = Panel {
            x0: px,
            y0: py,
            w: panel_w,
            h: panel_h,
        };
        // shot ticks for this condition: 0 (pre) then each shot count
        let mut shots: Vec<usize> = aggregate
            .cells
            .iter()
            .filter(|c| c.model == model && c.condition == *condition && c.distance.is_none())
            .map(|c| c.shots)
            .collect();
        shots.sort_unstable();
        shots.dedup();
        let n_ticks = shots.len() + 1;

        let _ = write!(
            svg,
            "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{panel_w}\" height=\"{panel_h}\" \
             fill=\"none\" stroke=\"#888\"/>\n\
             <text x=\"{px:.2}\" y=\"{:.2}\">condition {condition}</text>\n",
            py - 8.0
        );
        for (frac, label) in [(0.0, "0.0"), (0.5, "0.5"), (1.0, "1.0")] {
            let y = py + panel_h * (1.0 - frac);
            let _ = write!(
                svg,
                "<line x1=\"{px:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" \
                 stroke=\"#ddd\"/><text x=\"{:.2}\" y=\"{:.2}\">{label}</text>\n",
                px + panel_w,
                px - 34.0,
                y + 4.0
            );
        }
        for (tick, label) in std::iter::once((0usize, "0".to_string()))
            .chain(shots.iter().enumerate().map(|(k, s)| (k + 1, s.to_string())))
        {
            let (x, _) = panel.point(tick, n_ticks, 0.0);
            let _ = write!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\">{label}</text>\n",
                x - 3.0,
                py + panel_h + 16.0
            );
        }

        for (taught, color) in CURVE_COLORS {
            // faded individual novel nouns
            for curve in aggregate
                .curves
                .iter()
                .filter(|c| c.model == model && c.condition == *condition && c.taught == taught)
            {
                let mut pts = vec![panel.point(0, n_ticks, curve.pre_accuracy)];
                for (k, s) in shots.iter().enumerate() {
                    if let Some((_, acc)) = curve.points.iter().find(|(ps, _)| ps == s) {
                        pts.push(panel.point(k + 1, n_ticks, *acc));
                    }
                }
                svg.push_str(&polyline(&pts, color, 1.0, 0.25));
            }
            // dark mean line
            let mut pts = Vec::new();
            let mut pre_vals = Vec::new();
            for (k, s) in shots.iter().enumerate() {
                if let Some(cell) = aggregate.cells.iter().find(|c| {
                    c.model == model
                        && c.condition == *condition
                        && c.taught == taught
                        && c.shots == *s
                        && c.distance.is_none()
                }) {
                    pre_vals.push(cell.mean_pre_accuracy);
                    pts.push(panel.point(k + 1, n_ticks, cell.mean_accuracy));
                }
            }
            if !pre_vals.is_empty() {
                let pre = pre_vals.iter().sum::<f64>() / pre_vals.len() as f64;
                pts.insert(0, panel.point(0, n_ticks, pre));
            }
            if !pts.is_empty() {
                svg.push_str(&polyline(&pts, color, 2.5, 1.0));
            }
        }
    }
    let _ = write!(
        svg,
        "<text x=\"{margin}\" y=\"{:.2}\" fill=\"#e66101\">feminine taught</text>\
         <text x=\"{:.2}\" y=\"{:.2}\" fill=\"#0571b0\">masculine taught</text>\n</svg>\n",
        height as f64 - 10.0,
        margin + 140.0,
        height as f64 - 10.0
    );
    svg
}

/// Tokens (rows) by shot count (columns), colored by mean percentage weight
/// change; rows are the union of the per-shot top-10 tokens.
pub fn heatmap_svg(trials: &[&FewShotTrial], vocab: Option<&Vocabulary>) -> String {
    // mean percent change per (token, shots)
    let mut acc: BTreeMap<(u32, usize), (f64, usize)> = BTreeMap::new();
    let mut shots: Vec<usize> = trials.iter().map(|t| t.shot_count).collect();
    shots.sort_unstable();
    shots.dedup();
    for t in trials {
        for delta in rank_row_deltas(&t.delta_rows, 10) {
            let e = acc.entry((delta.token, t.shot_count)).or_insert((0.0, 0));
            e.0 += delta.percent_change;
            e.1 += 1;
        }
    }
    let mut by_token: BTreeMap<u32, f64> = BTreeMap::new();
    for ((token, _), (sum, n)) in &acc {
        let v = sum / *n as f64;
        let best = by_token.entry(*token).or_insert(0.0);
        if v > *best {
            *best = v;
        }
    }
    let mut tokens: Vec<(u32, f64)> = by_token.into_iter().collect();
    tokens.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    tokens.truncate(10);

    let cell = 44.0;
    let left = 120.0;
    let top = 40.0;
    let width = (left + cell * shots.len() as f64 + 20.0) as usize;
    let height = (top + cell * tokens.len() as f64 + 30.0) as usize;
    let max_pct = tokens.first().map(|(_, v)| *v).unwrap_or(1.0).max(1e-12);

    let mut svg = svg_header(width, height);
    for (col, s) in shots.iter().enumerate() {
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\">{s}</text>\n",
            left + cell * col as f64 + cell / 2.0 - 4.0,
            top - 8.0
        );
    }
    for (row, (token, _)) in tokens.iter().enumerate() {
        let name = match vocab {
            Some(v) => v.token(*token).to_string(),
            None => format!("#{token}"),
        };
        let _ = write!(
            svg,
            "<text x=\"6\" y=\"{:.2}\">{name}</text>\n",
            top + cell * row as f64 + cell / 2.0 + 4.0
        );
        for (col, s) in shots.iter().enumerate() {
            let value = acc
                .get(&(*token, *s))
                .map(|(sum, n)| sum / *n as f64)
                .unwrap_or(0.0);
            let intensity = (value / max_pct).clamp(0.0, 1.0);
            let shade = (255.0 - 200.0 * intensity) as u8;
            let x = left + cell * col as f64;
            let y = top + cell * row as f64;
            let _ = write!(
                svg,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell}\" height=\"{cell}\" \
                 fill=\"rgb({shade},{shade},255)\" stroke=\"#999\"/>\
                 <text x=\"{:.2}\" y=\"{:.2}\">{value:.1}</text>\n",
                x + 4.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Learning-rate sweep: one accuracy-by-shots series per learning rate.
pub fn lr_sweep_svg(series: &[(f64, Vec<(usize, f64)>)], title: &str) -> String {
    let width = 460usize;
    let height = 300usize;
    let panel = Panel {
        x0: 60.0,
        y0: 50.0,
        w: 340.0,
        h: 190.0,
    };
    let mut shots: Vec<usize> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|(s, _)| *s))
        .collect();
    shots.sort_unstable();
    shots.dedup();
    let n_ticks = shots.len().max(2);

    let mut svg = svg_header(width, height);
    let _ = write!(svg, "<text x=\"60\" y=\"20\">{title}</text>\n");
    let _ = write!(
        svg,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#888\"/>\n",
        panel.x0, panel.y0, panel.w, panel.h
    );
    let palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];
    for (i, (lr, pts)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        let mapped: Vec<(f64, f64)> = pts
            .iter()
            .map(|(s, acc)| {
                let tick = shots.iter().position(|x| x == s).unwrap();
                panel.point(tick, n_ticks, *acc)
            })
            .collect();
        svg.push_str(&polyline(&mapped, color, 2.0, 1.0));
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">lr={lr}</text>\n",
            panel.x0 + panel.w + 6.0,
            panel.y0 + 14.0 * (i + 1) as f64
        );
    }
    for (k, s) in shots.iter().enumerate() {
        let (x, _) = panel.point(k, n_ticks, 0.0);
        let _ = write!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\">{s}</text>\n",
            x - 3.0,
            panel.y0 + panel.h + 16.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
