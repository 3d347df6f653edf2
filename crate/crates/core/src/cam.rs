//! Class activation maps over the time axis and their exports.
//!
//! For class `c` the map is `M_c(t) = sum_k w[c][k] * A_k(t)`, where `A` is
//! the post-ReLU output of the third convolution and `w` the head weights.
//! Head biases are not part of the map. Because pooling is a mean,
//! `mean_t M_c(t)` equals the bias-free logit of class `c`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::{Skill, Trial};
use crate::error::{Error, Result};
use crate::model::{SkillNet, TrainedModel};
use crate::nn::{argmax, DenseParams, Mts, Real, NUM_CLASSES};

#[derive(Clone, Debug, PartialEq)]
pub struct CamMap<T = f32> {
    /// Class-major: `values[c * len + t]`.
    values: Vec<T>,
    len: usize,
    pub frame_rate_hz: f64,
    pub predicted: Skill,
    pub trial: Option<String>,
}

impl<T: Real> CamMap<T> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, class: usize) -> &[T] {
        &self.values[class * self.len..(class + 1) * self.len]
    }

    pub fn get(&self, class: usize, t: usize) -> T {
        self.values[class * self.len + t]
    }
}

/// Weighted sum of activation channels for every class.
pub fn cam_from_activations<T: Real>(a3: &Mts<T>, head: &DenseParams<T>) -> Result<Vec<T>> {
    if a3.channels() != head.features() {
        return Err(Error::shape(format!(
            "activations have {} channels, head expects {}",
            a3.channels(),
            head.features()
        )));
    }
    let l = a3.len();
    let mut values = vec![T::zero(); NUM_CLASSES * l];
    for c in 0..NUM_CLASSES {
        let out = &mut values[c * l..(c + 1) * l];
        for (k, &w) in head.class_weights(c).iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(a3.row(k)) {
                *o = *o + w * a;
            }
        }
    }
    Ok(values)
}

/// CAM of a network on an already-prepared input series.
pub fn compute_cam<T: Real>(net: &SkillNet<T>, input: &Mts<T>) -> Result<CamMap<T>> {
    let f = net.forward(input)?;
    if f.a3.len() != input.len() {
        return Err(Error::shape("activation length differs from input length"));
    }
    Ok(CamMap {
        values: cam_from_activations(&f.a3, &net.params.head)?,
        len: input.len(),
        frame_rate_hz: input.frame_rate_hz,
        predicted: Skill::from_index(argmax(&f.probs))?,
        trial: None,
    })
}

/// CAM for a raw trial, applying the model's input normalization.
pub fn compute_trial_cam(model: &TrainedModel, trial: &Trial) -> Result<CamMap<f32>> {
    let mut map = compute_cam(&model.net, &model.prepare(&trial.series)?)?;
    map.trial = Some(trial.id());
    Ok(map)
}

/// Min-max scaling of one class row to `[0, 1]`; a constant row maps to 0.5.
pub fn normalize_cam<T: Real>(map: &CamMap<T>, class: usize) -> Vec<f64> {
    normalize_row(map.row(class))
}

pub fn normalize_row<T: Real>(row: &[T]) -> Vec<f64> {
    let vals: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; vals.len()];
    }
    vals.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

pub fn format_cam_csv<T: Real>(map: &CamMap<T>) -> String {
    let mut out = String::from("frame,time_s,cam_N,cam_I,cam_E,pred\n");
    for t in 0..map.len {
        let _ = writeln!(
            out,
            "{t},{:.6},{:.6},{:.6},{:.6},{}",
            t as f64 / map.frame_rate_hz,
            map.get(0, t),
            map.get(1, t),
            map.get(2, t),
            map.predicted
        );
    }
    out
}

pub fn export_cam_csv<T: Real>(map: &CamMap<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_cam_csv(map)).map_err(|e| Error::io(path, e))
}

/// Blue → white → red, with 0.5 at white.
pub fn heat_color(v: f64) -> (u8, u8, u8) {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.5 {
        let s = (255.0 * v / 0.5).round() as u8;
        (s, s, 255)
    } else {
        let s = (255.0 * (1.0 - (v - 0.5) / 0.5)).round() as u8;
        (255, s, s)
    }
}

fn hex((r, g, b): (u8, u8, u8)) -> String {
    format!("#{r:02x}{g:02x}{b:02x}")
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const MARGIN: f64 = 60.0;
const LEGEND_W: f64 = 90.0;

/// Renders the 2-D trajectory of two channels as a standalone SVG. Segment
/// `i` (frame `i` to `i + 1`) is colored by the normalized CAM of `class` at
/// frame `i`.
pub fn render_trajectory_svg<T: Real>(
    series: &Mts<f32>,
    map: &CamMap<T>,
    class: usize,
    channels: (usize, usize),
) -> Result<String> {
    let (cx, cy) = channels;
    if cx >= series.channels() || cy >= series.channels() || cx == cy {
        return Err(Error::config(format!(
            "invalid trajectory channels ({cx}, {cy}) for a {}-channel series",
            series.channels()
        )));
    }
    if class >= NUM_CLASSES {
        return Err(Error::config(format!("class {class} out of range")));
    }
    if series.len() != map.len() {
        return Err(Error::shape(format!(
            "series has {} frames, CAM has {}",
            series.len(),
            map.len()
        )));
    }
    let xs = series.row(cx);
    let ys = series.row(cy);
    let bounds = |v: &[f32]| {
        let lo = v.iter().cloned().fold(f32::INFINITY, f32::min) as f64;
        let hi = v.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = bounds(xs);
    let (y0, y1) = bounds(ys);
    let plot_w = WIDTH - 2.0 * MARGIN - LEGEND_W;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |v: f32| MARGIN + (v as f64 - x0) / (x1 - x0) * plot_w;
    // SVG y grows downwards
    let py = |v: f32| MARGIN + (y1 - v as f64) / (y1 - y0) * plot_h;

    let heat = normalize_cam(map, class);
    let skill = Skill::ALL[class];
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        svg,
        r##"<defs><linearGradient id="heat" x1="0" y1="1" x2="0" y2="0"><stop offset="0" stop-color="#0000ff"/><stop offset="0.5" stop-color="#ffffff"/><stop offset="1" stop-color="#ff0000"/></linearGradient></defs>"##
    );
    let _ = writeln!(
        svg,
        r##"<rect width="100%" height="100%" fill="#d9d9d9"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<rect class="frame" x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="#bfbfbf" stroke="#333333"/>"##
    );
    let title = map.trial.as_deref().unwrap_or("trial");
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="14">{title}: CAM for class {skill} (predicted {})</text>"#,
        MARGIN - 20.0,
        map.predicted
    );
    // axis extents
    let font = r#"font-family="sans-serif" font-size="11""#;
    let bottom = MARGIN + plot_h;
    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{MARGIN}" y="{}" {font}>{x0:.4}</text>"#,
        bottom + 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{}" y="{}" {font} text-anchor="end">{x1:.4}</text>"#,
        MARGIN + plot_w,
        bottom + 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{}" y="{}" {font} text-anchor="middle">channel {cx}</text>"#,
        MARGIN + plot_w / 2.0,
        bottom + 32.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{}" y="{bottom}" {font} text-anchor="end">{y0:.4}</text>"#,
        MARGIN - 4.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{}" y="{}" {font} text-anchor="end">{y1:.4}</text>"#,
        MARGIN - 4.0,
        MARGIN + 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text class="axis" x="{}" y="{}" {font} text-anchor="middle" transform="rotate(-90 {} {})">channel {cy}</text>"#,
        MARGIN - 40.0,
        MARGIN + plot_h / 2.0,
        MARGIN - 40.0,
        MARGIN + plot_h / 2.0
    );

    let _ = writeln!(
        svg,
        r#"<g class="trajectory" stroke-width="2" stroke-linecap="round">"#
    );
    for t in 0..series.len().saturating_sub(1) {
        let _ = writeln!(
            svg,
            r#"<line class="seg" data-frame="{t}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}"/>"#,
            px(xs[t]),
            py(ys[t]),
            px(xs[t + 1]),
            py(ys[t + 1]),
            hex(heat_color(heat[t]))
        );
    }
    if series.len() == 1 {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
            px(xs[0]),
            py(ys[0]),
            hex(heat_color(heat[0]))
        );
    }
    let _ = writeln!(svg, "</g>");

    let lx = WIDTH - MARGIN - LEGEND_W + 30.0;
    let _ = writeln!(
        svg,
        r##"<g class="legend"><rect x="{lx}" y="{MARGIN}" width="18" height="{plot_h}" fill="url(#heat)" stroke="#333333"/><text x="{}" y="{}" {font}>high</text><text x="{}" y="{bottom}" {font}>low</text></g>"##,
        lx + 22.0,
        MARGIN + 10.0,
        lx + 22.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn export_trajectory_svg<T: Real>(
    series: &Mts<f32>,
    map: &CamMap<T>,
    class: usize,
    channels: (usize, usize),
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let svg = render_trajectory_svg(series, map, class, channels)?;
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
