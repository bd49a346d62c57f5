//! Line-delimited JSON records and CSV output.
//!
//! Annotation line: `{"image": "a", "full": [x1, y1, x2, y2], "visible": [...], "ignore": false}`
//! with `visible` and `ignore` optional. Detection line:
//! `{"image": "a", "id": 3, "box": [x1, y1, x2, y2], "score": 0.9}`.
//! Numbers are written with 9 significant digits so output is byte-stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::anchors::Anchor;
use crate::assignment::{AssignedSample, GroundTruth, LabelHistogram};
use crate::error::{Error, Result};
use crate::eval::MissRateCurve;
use crate::geometry::BBox;
use crate::nms::Detection;

/// Format with 9 significant digits, trailing zeros trimmed.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-6..15).contains(&mag) {
        let s = format!("{v:.8e}");
        let (mant, exp) = s.split_once('e').expect("exponent form");
        return format!("{}e{exp}", trim_zeros(mant));
    }
    let decimals = (8 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding can carry into a new digit (9.99999999996 -> 10.0000000)
    trim_zeros(&s).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_box(b: &BBox<f64>) -> String {
    let c = b.to_array();
    format!("[{},{},{},{}]", fmt_num(c[0]), fmt_num(c[1]), fmt_num(c[2]), fmt_num(c[3]))
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

fn read_lines<R: BufRead, F: FnMut(usize, &str) -> Result<()>>(reader: R, mut f: F) -> Result<()> {
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        f(idx + 1, trimmed)?;
    }
    Ok(())
}

fn parse_err(line: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn to_box(line: usize, c: [f64; 4]) -> Result<BBox<f64>> {
    BBox::from_array(c).map_err(|e| parse_err(line, e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationRecord {
    image: String,
    full: [f64; 4],
    #[serde(default)]
    visible: Option<[f64; 4]>,
    #[serde(default)]
    ignore: bool,
}

pub type ImageAnnotations = (String, Vec<GroundTruth<f64>>);
pub type ImageDetections = (String, Vec<Detection<f64>>);

/// Annotations grouped by image id (sorted), record order kept within an image.
pub fn parse_annotations<R: BufRead>(reader: R) -> Result<Vec<ImageAnnotations>> {
    let mut groups: BTreeMap<String, Vec<GroundTruth<f64>>> = BTreeMap::new();
    read_lines(reader, |line, text| {
        let rec: AnnotationRecord = serde_json::from_str(text).map_err(|e| parse_err(line, e))?;
        let full = to_box(line, rec.full)?;
        let visible = rec.visible.map(|v| to_box(line, v)).transpose()?;
        groups
            .entry(rec.image)
            .or_default()
            .push(GroundTruth::new(full, visible, rec.ignore));
        Ok(())
    })?;
    Ok(groups.into_iter().collect())
}

pub fn write_annotations<W: Write>(mut w: W, images: &[ImageAnnotations]) -> Result<()> {
    for (image, gts) in images {
        for g in gts {
            let mut line = format!("{{\"image\":{},\"full\":{}", json_str(image), fmt_box(&g.full_box));
            if let Some(v) = g.visible_box() {
                write!(line, ",\"visible\":{}", fmt_box(v)).expect("string write");
            }
            write!(line, ",\"ignore\":{}}}", g.ignore).expect("string write");
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionRecord {
    image: String,
    id: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    score: f64,
}

pub fn parse_detections<R: BufRead>(reader: R) -> Result<Vec<ImageDetections>> {
    let mut groups: BTreeMap<String, Vec<Detection<f64>>> = BTreeMap::new();
    read_lines(reader, |line, text| {
        let rec: DetectionRecord = serde_json::from_str(text).map_err(|e| parse_err(line, e))?;
        let bbox = to_box(line, rec.bbox)?;
        let det = Detection::new(bbox, rec.score, rec.id).map_err(|e| parse_err(line, e))?;
        groups.entry(rec.image).or_default().push(det);
        Ok(())
    })?;
    Ok(groups.into_iter().collect())
}

pub fn write_detections<W: Write>(mut w: W, images: &[ImageDetections]) -> Result<()> {
    for (image, dets) in images {
        for d in dets {
            writeln!(
                w,
                "{{\"image\":{},\"id\":{},\"box\":{},\"score\":{}}}",
                json_str(image),
                d.id,
                fmt_box(&d.bbox),
                fmt_num(d.score)
            )?;
        }
    }
    Ok(())
}

/// Flat NMS record: `{"id", "x1", "y1", "x2", "y2", "score"}` with an
/// optional `"image"` to run several images in one file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatDetectionRecord {
    #[serde(default)]
    image: Option<String>,
    id: u64,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    score: f64,
}

/// Grouped by image; records without an image share the `""` group.
pub fn parse_flat_detections<R: BufRead>(reader: R) -> Result<Vec<ImageDetections>> {
    let mut groups: BTreeMap<String, Vec<Detection<f64>>> = BTreeMap::new();
    read_lines(reader, |line, text| {
        let rec: FlatDetectionRecord = serde_json::from_str(text).map_err(|e| parse_err(line, e))?;
        let bbox = to_box(line, [rec.x1, rec.y1, rec.x2, rec.y2])?;
        let det = Detection::new(bbox, rec.score, rec.id).map_err(|e| parse_err(line, e))?;
        groups.entry(rec.image.unwrap_or_default()).or_default().push(det);
        Ok(())
    })?;
    Ok(groups.into_iter().collect())
}

pub fn write_flat_detections<W: Write>(mut w: W, images: &[ImageDetections]) -> Result<()> {
    for (image, dets) in images {
        for d in dets {
            let c = d.bbox.to_array();
            let img = if image.is_empty() {
                String::new()
            } else {
                format!("\"image\":{},", json_str(image))
            };
            writeln!(
                w,
                "{{{img}\"id\":{},\"x1\":{},\"y1\":{},\"x2\":{},\"y2\":{},\"score\":{}}}",
                d.id,
                fmt_num(c[0]),
                fmt_num(c[1]),
                fmt_num(c[2]),
                fmt_num(c[3]),
                fmt_num(d.score)
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnchorRecord {
    level: usize,
    row: u32,
    col: u32,
    k: usize,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

pub fn write_anchors<W: Write>(mut w: W, anchors: &[Anchor<f64>]) -> Result<()> {
    for a in anchors {
        let c = a.bbox.to_array();
        writeln!(
            w,
            "{{\"level\":{},\"row\":{},\"col\":{},\"k\":{},\"x1\":{},\"y1\":{},\"x2\":{},\"y2\":{}}}",
            a.level_index,
            a.grid_row,
            a.grid_col,
            a.width_index,
            fmt_num(c[0]),
            fmt_num(c[1]),
            fmt_num(c[2]),
            fmt_num(c[3])
        )?;
    }
    Ok(())
}

pub fn parse_anchors<R: BufRead>(reader: R) -> Result<Vec<Anchor<f64>>> {
    let mut out = Vec::new();
    read_lines(reader, |line, text| {
        let rec: AnchorRecord = serde_json::from_str(text).map_err(|e| parse_err(line, e))?;
        out.push(Anchor {
            bbox: to_box(line, [rec.x1, rec.y1, rec.x2, rec.y2])?,
            level_index: rec.level,
            grid_row: rec.row,
            grid_col: rec.col,
            width_index: rec.k,
        });
        Ok(())
    })?;
    Ok(out)
}

/// One line per sample: `{"image", "anchor", "label", "gt", "target", "excluded"}`.
pub fn write_samples<W: Write>(mut w: W, image: &str, samples: &[AssignedSample<f64>]) -> Result<()> {
    for s in samples {
        let gt = s.gt_index.map_or("null".to_string(), |g| g.to_string());
        let target = s.regression_target.map_or("null".to_string(), |t| {
            format!("[{},{},{},{}]", fmt_num(t[0]), fmt_num(t[1]), fmt_num(t[2]), fmt_num(t[3]))
        });
        writeln!(
            w,
            "{{\"image\":{},\"anchor\":{},\"label\":{},\"gt\":{},\"target\":{},\"excluded\":{}}}",
            json_str(image),
            s.anchor_index,
            fmt_num(s.label),
            gt,
            target,
            s.excluded
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
struct SampleRecord {
    anchor: usize,
    label: f64,
    gt: Option<usize>,
    target: Option<[f64; 4]>,
    excluded: bool,
}

pub fn parse_samples<R: BufRead>(reader: R) -> Result<Vec<AssignedSample<f64>>> {
    let mut out = Vec::new();
    read_lines(reader, |line, text| {
        let rec: SampleRecord = serde_json::from_str(text).map_err(|e| parse_err(line, e))?;
        if !(0.0..=1.0).contains(&rec.label) {
            return Err(parse_err(line, format!("label {} outside [0, 1]", rec.label)));
        }
        out.push(AssignedSample {
            anchor_index: rec.anchor,
            label: rec.label,
            gt_index: rec.gt,
            regression_target: rec.target,
            excluded: rec.excluded,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_histogram_csv<W: Write>(mut w: W, h: &LabelHistogram) -> Result<()> {
    writeln!(w, "bin_low,bin_high,count")?;
    for b in &h.bins {
        writeln!(w, "{},{},{}", fmt_num(b.low), fmt_num(b.high), b.count)?;
    }
    Ok(())
}

pub fn write_curve_csv<W: Write>(mut w: W, curve: &MissRateCurve<f64>) -> Result<()> {
    writeln!(w, "threshold,fppi,miss_rate")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", fmt_num(p.threshold), fmt_num(p.fppi), fmt_num(p.miss_rate))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(16.0), "16");
        assert_eq!(fmt_num(0.41146765), "0.41146765");
        assert_eq!(fmt_num(0.7 * (0.3 * std::f64::consts::PI).cos()), "0.411449677");
        assert_eq!(fmt_num(39.024390243902), "39.0243902");
        assert_eq!(fmt_num(-4.0), "-4");
        assert_eq!(fmt_num(1e-10), "1e-10");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(9.999999999996), "10");
    }

    #[test]
    fn empty_streams() {
        assert!(parse_annotations(&b""[..]).unwrap().is_empty());
        assert!(parse_detections(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn single_annotation_without_visible() {
        let text = br#"{"image":"a","full":[0,0,10,20]}"#;
        let imgs = parse_annotations(&text[..]).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].1[0].visible_ratio().unwrap(), 1.0);
        assert!(!imgs[0].1[0].ignore);
    }

    #[test]
    fn annotation_errors_carry_line_numbers() {
        let text = b"{\"image\":\"a\",\"full\":[0,0,10,20]}\n{\"image\":\"a\",\"full\":[5,0,1,20]}\n";
        match parse_annotations(&text[..]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = b"{\"image\":\"a\",\"full\":[0,0,10,20]}\nnot json\n";
        assert!(matches!(parse_annotations(&text[..]), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn visible_clamped_on_load() {
        let text = br#"{"image":"a","full":[0,0,10,20],"visible":[-5,0,5,40]}"#;
        let imgs = parse_annotations(&text[..]).unwrap();
        let v = imgs[0].1[0].visible_box().unwrap();
        assert_eq!(v.to_array(), [0.0, 0.0, 5.0, 20.0]);
    }

    #[test]
    fn detection_score_validated() {
        let text = br#"{"image":"a","id":1,"box":[0,0,1,1],"score":1.5}"#;
        assert!(matches!(parse_detections(&text[..]), Err(Error::Parse { line: 1, .. })));
        let text = br#"{"image":"a","id":1,"box":[0,0,1,1],"score":0.5}"#;
        let d = parse_detections(&text[..]).unwrap();
        assert_eq!(d[0].1[0].score, 0.5);
    }

    #[test]
    fn grouping_is_sorted_by_image() {
        let text = b"{\"image\":\"b\",\"full\":[0,0,1,1]}\n{\"image\":\"a\",\"full\":[0,0,2,2]}\n{\"image\":\"b\",\"full\":[0,0,3,3]}\n";
        let imgs = parse_annotations(&text[..]).unwrap();
        assert_eq!(imgs.iter().map(|i| i.0.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(imgs[1].1[1].full_box.x2(), 3.0);
    }

    #[test]
    fn annotation_round_trip() {
        let text = b"{\"image\":\"x\",\"full\":[1.5,2,10,30],\"visible\":[1.5,2,10,12],\"ignore\":false}\n{\"image\":\"x\",\"full\":[0,0,100,100],\"ignore\":true}\n";
        let first = parse_annotations(&text[..]).unwrap();
        let mut buf = Vec::new();
        write_annotations(&mut buf, &first).unwrap();
        assert_eq!(buf, text.to_vec());
        assert_eq!(parse_annotations(&buf[..]).unwrap(), first);
    }

    #[test]
    fn anchors_round_trip() {
        let cfg = crate::anchors::AnchorLevelConfig::<f64>::pedestrian_default();
        let a = crate::anchors::generate_anchors(64, 48, &cfg).unwrap();
        let mut buf = Vec::new();
        write_anchors(&mut buf, &a).unwrap();
        let back = parse_anchors(&buf[..]).unwrap();
        assert_eq!(back.len(), a.len());
        for (p, q) in back.iter().zip(&a) {
            assert_eq!(p.level_index, q.level_index);
            for (u, v) in p.bbox.to_array().iter().zip(q.bbox.to_array()) {
                assert!((u - v).abs() <= 1e-8 * v.abs().max(1.0));
            }
        }
    }

    proptest! {
        #[test]
        fn formatting_is_idempotent(v in -1e6..1e6f64) {
            let s = fmt_num(v);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(fmt_num(back), s);
            prop_assert!((back - v).abs() <= 1e-8 * v.abs().max(1e-300));
        }

        #[test]
        fn detections_round_trip(
            recs in proptest::collection::vec((0u64..1000, 0.0..100.0f64, 0.0..100.0f64, 0.0..50.0f64, 0.0..50.0f64, 0.0..=1.0f64), 0..20)
        ) {
            let dets: Vec<Detection<f64>> = recs.iter().map(|(id, x, y, w, h, s)| {
                Detection::new(BBox::new(*x, *y, x + w, y + h).unwrap(), *s, *id).unwrap()
            }).collect();
            let imgs = vec![("img0".to_string(), dets)];
            let mut once = Vec::new();
            write_detections(&mut once, &imgs).unwrap();
            let parsed = parse_detections(&once[..]).unwrap();
            let mut twice = Vec::new();
            write_detections(&mut twice, &parsed).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(parse_detections(&twice[..]).unwrap(), parsed);
        }
    }
}
