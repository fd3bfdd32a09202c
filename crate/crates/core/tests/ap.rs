mod oracles;

use std::collections::BTreeMap;

use leafsev_core::deteval::{
    average_precision, evaluate, iou, mean_ap, parse_detections_jsonl, parse_voc_xml, BBox, Detection, GroundTruth,
    Interpolation,
};
use oracles::OBox;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    // a coarse grid makes exact overlaps and 0.5 boundaries common
    let x0 = f64::from(rng.gen_range(0..8)) * 5.0;
    let y0 = f64::from(rng.gen_range(0..8)) * 5.0;
    let w = f64::from(rng.gen_range(1..5)) * 5.0;
    let h = f64::from(rng.gen_range(1..5)) * 5.0;
    (x0, y0, x0 + w, y0 + h)
}

struct Scene {
    dets: Vec<Detection>,
    gts: Vec<GroundTruth>,
}

fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let images = rng.gen_range(1..=5);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    for img in 0..images {
        let name = format!("img{img}");
        let n_gt = rng.gen_range(0..=4);
        let mut these = Vec::new();
        for _ in 0..n_gt {
            let (a, b, c, d) = random_box(rng);
            these.push((a, b, c, d));
            gts.push(GroundTruth { image: name.clone(), class: "rust".into(), bbox: BBox::new(a, b, c, d).unwrap() });
        }
        for _ in 0..rng.gen_range(0..=4) {
            // detections either jitter a ground truth or land anywhere
            let (a, b, c, d) = if !these.is_empty() && rng.gen_bool(0.6) {
                let (a, b, c, d) = these[rng.gen_range(0..these.len())];
                let j = |v: f64, rng: &mut ChaCha8Rng| v + f64::from(rng.gen_range(-1..=1)) * 2.5;
                let (na, nb) = (j(a, rng), j(b, rng));
                (na, nb, j(c, rng).max(na + 1.0), j(d, rng).max(nb + 1.0))
            } else {
                random_box(rng)
            };
            // a small confidence alphabet produces ties
            let confidence = f64::from(rng.gen_range(1..=6)) / 6.0;
            dets.push(Detection { image: name.clone(), class: "rust".into(), confidence, bbox: BBox::new(a, b, c, d).unwrap() });
        }
    }
    Scene { dets, gts }
}

fn to_oracle(scene: &Scene) -> (Vec<(f64, OBox)>, Vec<OBox>) {
    let idx = |s: &str| s.trim_start_matches("img").parse::<usize>().unwrap();
    let ob = |image: &str, b: &BBox| OBox { image: idx(image), x0: b.xmin, y0: b.ymin, x1: b.xmax, y1: b.ymax };
    (
        scene.dets.iter().map(|d| (d.confidence, ob(&d.image, &d.bbox))).collect(),
        scene.gts.iter().map(|g| ob(&g.image, &g.bbox)).collect(),
    )
}

#[test]
fn ap_matches_cutoff_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..500 {
        let scene = random_scene(&mut rng);
        let (od, og) = to_oracle(&scene);
        for thr in [0.5, 0.3, 0.75] {
            let ours = average_precision(&scene.dets, &scene.gts, thr, Interpolation::AllPoint).unwrap().ap;
            let oracle = oracles::cutoff_ap(&od, &og, thr);
            assert!((ours - oracle).abs() < 1e-9, "case {case} thr {thr}: {ours} vs {oracle}");
        }
    }
}

fn bb(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
    BBox::new(x0, y0, x1, y1).unwrap()
}

fn det(conf: f64, b: BBox) -> Detection {
    Detection { image: "a".into(), class: "rust".into(), confidence: conf, bbox: b }
}

fn gt(b: BBox) -> GroundTruth {
    GroundTruth { image: "a".into(), class: "rust".into(), bbox: b }
}

#[test]
fn hand_traced_three_detections() {
    let g = vec![gt(bb(0.0, 0.0, 10.0, 10.0)), gt(bb(20.0, 20.0, 30.0, 30.0))];
    let d = vec![
        det(0.9, bb(0.0, 0.0, 10.0, 10.0)),
        det(0.8, bb(50.0, 50.0, 60.0, 60.0)),
        det(0.7, bb(20.0, 20.0, 30.0, 30.0)),
    ];
    let r = average_precision(&d, &g, 0.5, Interpolation::AllPoint).unwrap();
    assert!((r.ap - (0.5 + 2.0 / 3.0 * 0.5)).abs() < 1e-12);
    assert_eq!(r.curve, vec![(0.5, 1.0), (0.5, 0.5), (1.0, 2.0 / 3.0)]);
    assert_eq!((r.tp, r.fp, r.fn_), (2, 1, 0));
    let (od, og) = to_oracle(&Scene {
        dets: d.iter().map(|x| Detection { image: "img0".into(), ..x.clone() }).collect(),
        gts: g.iter().map(|x| GroundTruth { image: "img0".into(), ..x.clone() }).collect(),
    });
    assert!((oracles::cutoff_ap(&od, &og, 0.5) - r.ap).abs() < 1e-12);
}

#[test]
fn iou_exact_third() {
    assert_eq!(iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(5.0, 0.0, 15.0, 10.0)), 50.0 / 150.0);
    assert_eq!(iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(0.0, 0.0, 10.0, 10.0)), 1.0);
    assert_eq!(iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(10.0, 0.0, 20.0, 10.0)), 0.0);
}

#[test]
fn duplicates_count_once() {
    let g = vec![gt(bb(0.0, 0.0, 10.0, 10.0))];
    let d = vec![det(0.9, bb(0.0, 0.0, 10.0, 10.0)), det(0.8, bb(0.0, 0.0, 10.0, 9.0)), det(0.7, bb(1.0, 0.0, 10.0, 10.0))];
    let r = average_precision(&d, &g, 0.5, Interpolation::AllPoint).unwrap();
    assert_eq!((r.tp, r.fp), (1, 2));
    assert_eq!(r.ap, 1.0);
}

#[test]
fn mean_ap_examples() {
    let m: BTreeMap<String, f64> = [("rust".to_string(), 0.9), ("miner".to_string(), 0.73)].into();
    assert!((mean_ap(&m).unwrap() - 0.815).abs() < 1e-12);
    assert!(mean_ap(&BTreeMap::new()).is_err());
}

#[test]
fn evaluate_end_to_end_from_files() {
    let xml = br#"<annotation>
  <folder>leaves</folder>
  <filename>leaf_001.jpg</filename>
  <size><width>640</width><height>480</height><depth>3</depth></size>
  <object><name>rust</name><bndbox><xmin>10</xmin><ymin>20</ymin><xmax>110</xmax><ymax>220</ymax></bndbox></object>
  <object><name>miner</name><bndbox><xmin>300</xmin><ymin>300</ymin><xmax>400</xmax><ymax>380</ymax></bndbox></object>
</annotation>"#;
    let ann = parse_voc_xml(xml).unwrap();
    assert_eq!(ann.objects[0].bbox, bb(10.0, 20.0, 110.0, 220.0));
    let dets = parse_detections_jsonl(concat!(
        r#"{"image":"leaf_001.jpg","class":"rust","confidence":0.9,"box":[10,20,110,220]}"#,
        "\n",
        r#"{"image":"leaf_001","class":"miner","confidence":0.6,"box":[300,300,400,380]}"#,
        "\n\n",
        r#"{"image":"leaf_001","class":"scale","confidence":0.4,"box":[0,0,5,5]}"#,
        "\n",
    ))
    .unwrap();
    let report = evaluate(&dets, &ann.objects, 0.5, Interpolation::AllPoint).unwrap();
    assert_eq!(report.classes["rust"].ap, 1.0);
    assert_eq!(report.classes["miner"].ap, 1.0);
    assert_eq!(report.classes["scale"].ap, 0.0);
    assert_eq!(report.warnings.len(), 1);
    assert!((report.map - 2.0 / 3.0).abs() < 1e-12);

    let none = evaluate(&[], &ann.objects, 0.5, Interpolation::AllPoint).unwrap();
    assert_eq!(none.map, 0.0);
    let perfect: Vec<Detection> = ann
        .objects
        .iter()
        .map(|g| Detection { image: g.image.clone(), class: g.class.clone(), confidence: 1.0, bbox: g.bbox })
        .collect();
    assert_eq!(evaluate(&perfect, &ann.objects, 0.5, Interpolation::ElevenPoint).unwrap().map, 1.0);
}

#[test]
fn parse_errors_carry_lines() {
    let bad = b"<annotation>\n<filename>x.png</filename>\n<object><name>rust</name>\n<bndbox><xmin>1</xmin><ymin>1</ymin><xmax>5</xmax></bndbox></object></annotation>";
    let msg = parse_voc_xml(bad).unwrap_err().to_string();
    assert!(msg.contains("ymax") && msg.contains("line 4"), "{msg}");
    let msg = parse_voc_xml(b"<annotation>\n<filename>x</filename>\n<oops></annotation>").unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
    let flipped = b"<annotation><filename>x</filename><object><name>r</name><bndbox><xmin>9</xmin><ymin>1</ymin><xmax>5</xmax><ymax>4</ymax></bndbox></object></annotation>";
    assert!(matches!(parse_voc_xml(flipped), Err(leafsev_core::Error::Validation(_))));
    let msg = parse_detections_jsonl("{}\n").unwrap_err().to_string();
    assert!(msg.contains("line 1"), "{msg}");
}

fn arb_box() -> impl Strategy<Value = BBox> {
    (0.0f64..100.0, 0.0f64..100.0, 0.5f64..50.0, 0.5f64..50.0).prop_map(|(x, y, w, h)| bb(x, y, x + w, y + h))
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(iou(&a, &a), 1.0);
        if a != b {
            prop_assert!(ab < 1.0);
        }
    }

    #[test]
    fn ap_depends_only_on_ranking(seed in any::<u64>(), power in 0.2f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = random_scene(&mut rng);
        let base = average_precision(&scene.dets, &scene.gts, 0.5, Interpolation::AllPoint).unwrap().ap;
        let warped: Vec<Detection> = scene
            .dets
            .iter()
            .map(|d| Detection { confidence: d.confidence.powf(power), ..d.clone() })
            .collect();
        let again = average_precision(&warped, &scene.gts, 0.5, Interpolation::AllPoint).unwrap().ap;
        prop_assert_eq!(base, again);
        prop_assert!((0.0..=1.0).contains(&base));
        let eleven = average_precision(&scene.dets, &scene.gts, 0.5, Interpolation::ElevenPoint).unwrap().ap;
        prop_assert!((0.0..=1.0).contains(&eleven));
    }
}
