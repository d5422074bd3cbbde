//! CSV and SVG report emission.

use std::path::Path;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::losses::LossReport;
use crate::metrics::{DepthMetricsReport, RecallCurve};

use super::write_atomic;

/// One row of the evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub model: String,
    pub image: String,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub log_rmse: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub ap: f64,
    pub map: f64,
}

impl MetricsRow {
    pub fn new(model: &str, image: &str, depth: &DepthMetricsReport, ap: f64, map: f64) -> Self {
        Self {
            model: model.to_owned(),
            image: image.to_owned(),
            abs_rel: depth.abs_rel,
            sq_rel: depth.sq_rel,
            rmse: depth.rmse,
            log_rmse: depth.log_rmse,
            delta1: depth.delta1,
            delta2: depth.delta2,
            delta3: depth.delta3,
            ap,
            map,
        }
    }

    fn values(&self) -> [f64; 9] {
        [self.abs_rel, self.sq_rel, self.rmse, self.log_rmse, self.delta1, self.delta2, self.delta3, self.ap, self.map]
    }

    /// Sequential per-column mean over `rows`, labelled `image = "mean"`.
    pub fn mean(model: &str, rows: &[MetricsRow]) -> Result<Self> {
        if rows.is_empty() {
            return Err(invalid("no rows to average"));
        }
        let mut acc = [0.0; 9];
        for row in rows {
            acc.iter_mut().zip(row.values()).for_each(|(a, v)| *a += v);
        }
        let n = rows.len() as f64;
        let [abs_rel, sq_rel, rmse, log_rmse, delta1, delta2, delta3, ap, map] = acc.map(|a| a / n);
        Ok(Self {
            model: model.to_owned(),
            image: "mean".to_owned(),
            abs_rel,
            sq_rel,
            rmse,
            log_rmse,
            delta1,
            delta2,
            delta3,
            ap,
            map,
        })
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| invalid(format!("csv: {e}")))?;
    }
    w.into_inner().map_err(|e| invalid(format!("csv: {e}")))
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

/// Per-step training log. Header: `step` followed by the `LossReport` fields.
pub fn write_loss_csv(path: &Path, rows: &[(usize, LossReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "step",
        "l_plane",
        "l_surface",
        "l_geom",
        "l_depth",
        "l_p",
        "l_m",
        "l_c",
        "l_total",
        "valid_pixel_count",
        "excluded_pixel_count",
    ];
    let csv_err = |e: csv::Error| invalid(format!("csv: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for (step, r) in rows {
        let fields = [
            step.to_string(),
            r.l_plane.to_string(),
            r.l_surface.to_string(),
            r.l_geom.to_string(),
            r.l_depth.to_string(),
            r.l_p.to_string(),
            r.l_m.to_string(),
            r.l_c.to_string(),
            r.l_total.to_string(),
            r.valid_pixel_count.to_string(),
            r.excluded_pixel_count.to_string(),
        ];
        w.write_record(&fields).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Recall-vs-threshold plot with one `<polyline>` per model.
pub fn recall_svg(curves: &[(String, RecallCurve)]) -> Result<String> {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 20.0, 20.0, 50.0);
    let t_max = curves
        .iter()
        .flat_map(|(_, c)| c.thresholds.iter().copied())
        .fold(0.0f64, f64::max);
    if curves.is_empty() || !(t_max > 0.0) {
        return Err(invalid("recall plot needs at least one curve with a positive threshold"));
    }
    let x = |t: f64| left + (w - left - right) * t / t_max;
    let y = |r: f64| h - bottom - (h - top - bottom) * r;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<path d=\"M{:.1},{:.1} L{:.1},{:.1} L{:.1},{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        x(0.0),
        y(1.0),
        x(0.0),
        y(0.0),
        x(t_max),
        y(0.0)
    ));
    for k in 0..=5 {
        let r = k as f64 / 5.0;
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{r:.1}</text>\n",
            x(0.0) - 6.0,
            y(r) + 4.0
        ));
        let t = t_max * r;
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{t:.2}</text>\n",
            x(t),
            y(0.0) + 16.0
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">depth threshold (m)</text>\n",
        x(t_max / 2.0),
        h - 10.0
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">per-pixel recall</text>\n",
        y(0.5),
        y(0.5)
    ));
    for (i, (name, curve)) in curves.iter().enumerate() {
        if curve.thresholds.len() != curve.recall.len() {
            return Err(invalid(format!("curve {name}: thresholds and recall differ in length")));
        }
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .thresholds
            .iter()
            .zip(&curve.recall)
            .map(|(&t, &r)| format!("{:.2},{:.2}", x(t), y(r)))
            .collect();
        let name = xml_escape(name);
        s.push_str(&format!(
            "<polyline data-model=\"{name}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            x(0.0) + 10.0,
            top + 14.0 * (i + 1) as f64
        ));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn write_recall_svg(path: &Path, curves: &[(String, RecallCurve)]) -> Result<()> {
    write_atomic(path, recall_svg(curves)?.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_header_and_mean() {
        let d = DepthMetricsReport {
            abs_rel: 0.1,
            sq_rel: 0.2,
            rmse: 0.3,
            log_rmse: 0.4,
            delta1: 0.5,
            delta2: 0.6,
            delta3: 0.7,
        };
        let a = MetricsRow::new("m", "a", &d, 1.0, 0.5);
        let b = MetricsRow::new("m", "b", &DepthMetricsReport { abs_rel: 0.3, ..d }, 0.0, 0.5);
        let mean = MetricsRow::mean("m", &[a.clone(), b.clone()]).unwrap();
        assert_close!(mean.abs_rel, 0.2, 1e-15);
        assert_eq!(mean.ap, 0.5);
        let text = String::from_utf8(csv_bytes(&[a, b, mean]).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,image,abs_rel,sq_rel,rmse,log_rmse,delta1,delta2,delta3,ap,map"
        );
        assert_eq!(text.lines().last().unwrap().split(',').nth(1), Some("mean"));
    }

    #[test]
    fn one_polyline_per_model() {
        let c = RecallCurve { thresholds: vec![0.05, 0.1], recall: vec![0.5, 1.0] };
        let svg = recall_svg(&[("a".into(), c.clone()), ("b<&>".into(), c)]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;&amp;&gt;"));
        assert!(recall_svg(&[]).is_err());
    }
}
