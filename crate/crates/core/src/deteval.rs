//! Detection evaluation: Pascal VOC annotations, box overlap, per-class
//! average precision and mAP.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box; area is `(xmax − xmin) · (ymax − ymin)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        if !(xmax > xmin && ymax > ymin) {
            return Err(Error::Validation(format!(
                "box ({xmin}, {ymin}, {xmax}, {ymax}) needs xmax > xmin and ymax > ymin"
            )));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn area(&self) -> f64 {
        (self.xmax - self.xmin) * (self.ymax - self.ymin)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.xmax.min(b.xmax) - a.xmin.max(b.xmin);
    let ih = a.ymax.min(b.ymax) - a.ymin.max(b.ymin);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.area() + b.area() - inter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image: String,
    pub class: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image: String,
    pub class: String,
    pub confidence: f64,
    pub bbox: BBox,
}

/// One parsed annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image: String,
    pub width: Option<u32>,
    pub height: Option<u32>,
    pub objects: Vec<GroundTruth>,
}

/// Key used to pair detections with annotations: the file name without
/// directory or extension.
pub fn image_key(name: &str) -> &str {
    let base = name.rsplit(['/', '\\']).next().unwrap_or(name);
    match base.rfind('.') {
        Some(i) if i > 0 => &base[..i],
        _ => base,
    }
}

fn child<'a, 'input>(node: roxmltree::Node<'a, 'input>, tag: &str) -> Option<roxmltree::Node<'a, 'input>> {
    node.children().find(|c| c.has_tag_name(tag))
}

fn line_of(doc: &roxmltree::Document, node: roxmltree::Node) -> usize {
    doc.text_pos_at(node.range().start).row as usize
}

/// Parses a LabelImg / Pascal VOC annotation.
pub fn parse_voc_xml(bytes: &[u8]) -> Result<Annotation> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(None, format!("annotation is not UTF-8: {e}")))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::parse(Some(e.pos().row as usize), e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("annotation") {
        return Err(Error::parse(
            Some(line_of(&doc, root)),
            format!("root element is <{}>, expected <annotation>", root.tag_name().name()),
        ));
    }
    let filename = child(root, "filename")
        .and_then(|n| n.text())
        .map(str::trim)
        .ok_or_else(|| Error::parse(Some(line_of(&doc, root)), "missing <filename>"))?;
    let image = image_key(filename).to_string();

    let dim = |tag: &str| -> Result<Option<u32>> {
        match child(root, "size").and_then(|s| child(s, tag)) {
            None => Ok(None),
            Some(n) => n
                .text()
                .unwrap_or("")
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::parse(Some(line_of(&doc, n)), format!("<size>/<{tag}> is not an integer"))),
        }
    };
    let width = dim("width")?;
    let height = dim("height")?;

    let mut objects = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let line = line_of(&doc, obj);
        let class = child(obj, "name")
            .and_then(|n| n.text())
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::parse(Some(line), "<object> without <name>"))?;
        let bnd = child(obj, "bndbox").ok_or_else(|| Error::parse(Some(line), "<object> without <bndbox>"))?;
        let coord = |tag: &str| -> Result<f64> {
            let n = child(bnd, tag).ok_or_else(|| Error::parse(Some(line_of(&doc, bnd)), format!("<bndbox> missing <{tag}>")))?;
            let raw = n.text().unwrap_or("").trim();
            // LabelImg writes integers; some tools emit "12.0"
            raw.parse::<i64>()
                .map(|v| v as f64)
                .or_else(|_| raw.parse::<f64>().map(f64::round))
                .map_err(|_| Error::parse(Some(line_of(&doc, n)), format!("<{tag}> value {raw:?} is not a number")))
        };
        let bbox = BBox::new(coord("xmin")?, coord("ymin")?, coord("xmax")?, coord("ymax")?)?;
        objects.push(GroundTruth {
            image: image.clone(),
            class: class.to_string(),
            bbox,
        });
    }
    Ok(Annotation {
        image,
        width,
        height,
        objects,
    })
}

#[derive(Debug, Deserialize)]
struct DetectionLine {
    image: String,
    class: String,
    confidence: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

/// Reads `{"image", "class", "confidence", "box": [xmin, ymin, xmax, ymax]}`
/// records, one per line. Blank lines are skipped.
pub fn parse_detections_jsonl(text: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rec: DetectionLine =
            serde_json::from_str(line).map_err(|e| Error::parse(Some(i + 1), e.to_string()))?;
        if !(0.0..=1.0).contains(&rec.confidence) {
            return Err(Error::parse(
                Some(i + 1),
                format!("confidence {} outside [0, 1]", rec.confidence),
            ));
        }
        let [x0, y0, x1, y1] = rec.bbox;
        let bbox = BBox::new(x0, y0, x1, y1).map_err(|e| Error::parse(Some(i + 1), e.to_string()))?;
        out.push(Detection {
            image: image_key(&rec.image).to_string(),
            class: rec.class,
            confidence: rec.confidence,
            bbox,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Area under the monotone precision envelope.
    #[default]
    #[serde(rename = "all")]
    AllPoint,
    /// Mean envelope precision at recall 0, 0.1, …, 1.
    #[serde(rename = "11pt")]
    ElevenPoint,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-point" => Ok(Self::AllPoint),
            "11pt" | "11" | "11-point" => Ok(Self::ElevenPoint),
            _ => Err(Error::arg(format!("unknown interpolation {s:?} (expected all or 11pt)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    pub ap: f64,
    /// `(recall, precision)` after each ranked detection.
    pub curve: Vec<(f64, f64)>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Marks each detection, in confidence order, as a true positive if some
/// still-unmatched ground truth in its image overlaps it by at least
/// `iou_thr`; the best-overlapping such box is consumed. Returns the
/// ranking and the flags.
fn match_detections(dets: &[&Detection], gts: &[&GroundTruth], iou_thr: f64) -> (Vec<usize>, Vec<bool>) {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // stable: equal confidences keep input order
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));

    let mut by_image: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_image.entry(image_key(&g.image)).or_default().push(i);
    }
    let mut used = vec![false; gts.len()];
    let flags = order
        .iter()
        .map(|&d| {
            let det = dets[d];
            let mut best: Option<(usize, f64)> = None;
            for &g in by_image.get(image_key(&det.image)).map(Vec::as_slice).unwrap_or(&[]) {
                if used[g] {
                    continue;
                }
                let o = iou(&det.bbox, &gts[g].bbox);
                if o >= iou_thr && best.is_none_or(|(_, bo)| o > bo) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, _)) => {
                    used[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect();
    (order, flags)
}

/// Single-class average precision.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64, interp: Interpolation) -> Result<ApResult> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(Error::arg(format!("IoU threshold {iou_thr} outside (0, 1]")));
    }
    let det_refs: Vec<&Detection> = dets.iter().collect();
    let gt_refs: Vec<&GroundTruth> = gts.iter().collect();
    Ok(ap_from_refs(&det_refs, &gt_refs, iou_thr, interp))
}

fn ap_from_refs(dets: &[&Detection], gts: &[&GroundTruth], iou_thr: f64, interp: Interpolation) -> ApResult {
    let (_, flags) = match_detections(dets, gts, iou_thr);
    let n_gt = gts.len();
    let mut curve = Vec::with_capacity(flags.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in &flags {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        let recall = if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 };
        curve.push((recall, tp as f64 / (tp + fp) as f64));
    }
    let ap = if n_gt == 0 || curve.is_empty() {
        0.0
    } else {
        match interp {
            Interpolation::AllPoint => all_point_area(&curve),
            Interpolation::ElevenPoint => eleven_point(&curve),
        }
    };
    ApResult {
        ap,
        curve,
        tp,
        fp,
        fn_: n_gt - tp,
    }
}

fn all_point_area(curve: &[(f64, f64)]) -> f64 {
    let mut rec = Vec::with_capacity(curve.len() + 2);
    let mut pre = Vec::with_capacity(curve.len() + 2);
    rec.push(0.0);
    pre.push(0.0);
    for &(r, p) in curve {
        rec.push(r);
        pre.push(p);
    }
    rec.push(1.0);
    pre.push(0.0);
    for i in (0..pre.len() - 1).rev() {
        pre[i] = pre[i].max(pre[i + 1]);
    }
    (1..rec.len())
        .filter(|&i| rec[i] != rec[i - 1])
        .map(|i| (rec[i] - rec[i - 1]) * pre[i])
        .sum()
}

fn eleven_point(curve: &[(f64, f64)]) -> f64 {
    (0..=10)
        .map(|t| {
            let t = f64::from(t) / 10.0;
            curve
                .iter()
                .filter(|&&(r, _)| r >= t)
                .map(|&(_, p)| p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

/// Unweighted mean over classes.
pub fn mean_ap(per_class: &BTreeMap<String, f64>) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::arg("mAP of zero classes is undefined"));
    }
    Ok(per_class.values().sum::<f64>() / per_class.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEval {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ground_truths: usize,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
    pub classes: BTreeMap<String, ClassEval>,
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Per-class AP over the union of classes seen in either input.
pub fn evaluate(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64, interp: Interpolation) -> Result<EvalReport> {
    if !(iou_thr > 0.0 && iou_thr <= 1.0) {
        return Err(Error::arg(format!("IoU threshold {iou_thr} outside (0, 1]")));
    }
    let classes: BTreeSet<&str> = gts
        .iter()
        .map(|g| g.class.as_str())
        .chain(dets.iter().map(|d| d.class.as_str()))
        .collect();
    let mut warnings = Vec::new();
    let mut per_class = BTreeMap::new();
    for class in classes {
        let cd: Vec<&Detection> = dets.iter().filter(|d| d.class == class).collect();
        let cg: Vec<&GroundTruth> = gts.iter().filter(|g| g.class == class).collect();
        if cg.is_empty() {
            warnings.push(format!("class {class:?} has detections but no ground truth; AP = 0"));
        }
        let r = ap_from_refs(&cd, &cg, iou_thr, interp);
        per_class.insert(
            class.to_string(),
            ClassEval {
                ap: r.ap,
                tp: r.tp,
                fp: r.fp,
                fn_: r.fn_,
                ground_truths: cg.len(),
                detections: cd.len(),
            },
        );
    }
    let aps: BTreeMap<String, f64> = per_class.iter().map(|(k, v)| (k.clone(), v.ap)).collect();
    let map = if aps.is_empty() { 0.0 } else { mean_ap(&aps)? };
    Ok(EvalReport {
        iou_threshold: iou_thr,
        interpolation: interp,
        classes: per_class,
        map,
        warnings,
    })
}
