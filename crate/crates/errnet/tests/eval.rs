//! Folder evaluation: matching, per-file errors and the mean row.

use std::fs;

use errnet::commands::{evaluate_folder, write_report};
use errnet::core::metrics::{EvalPair, Map, Scores};
use errnet::core::rng::SeededRng;
use errnet::core::synth::{synth_sample, SynthConfig};
use errnet::core::{Shape, Tensor};
use errnet::pnm;

/// Three ground-truth masks and noisy, quantised predictions of them.
fn fixture(dir: &std::path::Path) -> Vec<(String, Tensor, Tensor)> {
    let (pd, gd) = (dir.join("pred"), dir.join("gt"));
    fs::create_dir_all(&pd).unwrap();
    fs::create_dir_all(&gd).unwrap();
    let mut rng = SeededRng::new(21);
    let cfg = SynthConfig { seed: 21, count: 3, size: 32, contrast: 0.2 };
    (0..3)
        .map(|i| {
            let s = synth_sample(&cfg, i).unwrap();
            let pred = Tensor::from_fn(Shape::new(1, 1, 32, 32), |_, _, y, x| {
                (0.7 * s.mask.at(0, 0, y, x) + 0.3 * rng.unit()).clamp(0.0, 1.0)
            });
            pnm::write_pgm(&pd.join(format!("{}.pgm", s.id)), &pred).unwrap();
            pnm::write_pgm(&gd.join(format!("{}.pgm", s.id)), &s.mask).unwrap();
            // what the evaluator will actually see after 8-bit storage
            let stored = pnm::read_pgm(&pd.join(format!("{}.pgm", s.id))).unwrap();
            (s.id, stored, s.mask)
        })
        .collect()
}

#[test]
fn mean_row_is_the_hand_average() {
    let d = tempfile::tempdir().unwrap();
    let items = fixture(d.path());
    let report = evaluate_folder(&d.path().join("pred"), &d.path().join("gt")).unwrap();
    assert!(report.errors.is_empty(), "{:?}", report.errors);
    assert_eq!(report.rows.len(), 3);

    let mut sum = [0.0; 4];
    for (id, pred, gt) in &items {
        let direct = Scores::compute(&EvalPair::new(Map::from_tensor(pred), Map::from_tensor(gt)).unwrap());
        let (_, row) = report.rows.iter().find(|(r, _)| r == id).unwrap();
        assert_eq!(row, &direct);
        for (acc, v) in sum.iter_mut().zip([direct.s_alpha, direct.e_phi, direct.f_w_beta, direct.mae]) {
            *acc += v;
        }
    }
    let m = report.means().unwrap();
    let got = [m.s_alpha, m.e_phi, m.f_w_beta, m.mae];
    for k in 0..4 {
        assert!((got[k] - sum[k] / 3.0).abs() < 1e-12, "column {k}");
    }

    // the CSV carries the same numbers at 6 decimals
    let out = d.path().join("r.csv");
    write_report(&out, &report).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "file,s_alpha,e_phi,fw_beta,mae");
    assert_eq!(lines.len(), 1 + 3 + 1);
    let last: Vec<&str> = lines[4].split(',').collect();
    assert_eq!(last[0], "MEAN");
    for k in 0..4 {
        assert_eq!(last[k + 1], format!("{:.6}", sum[k] / 3.0));
    }
}

#[test]
fn missing_and_mismatched_files_are_per_file_errors() {
    let d = tempfile::tempdir().unwrap();
    let items = fixture(d.path());
    fs::remove_file(d.path().join("pred").join(format!("{}.pgm", items[0].0))).unwrap();
    pnm::write_pgm(&d.path().join("pred").join(format!("{}.pgm", items[1].0)), &Tensor::zeros(Shape::new(1, 1, 16, 16))).unwrap();
    pnm::write_pgm(&d.path().join("pred").join("stray.pgm"), &Tensor::zeros(Shape::new(1, 1, 32, 32))).unwrap();
    let report = evaluate_folder(&d.path().join("pred"), &d.path().join("gt")).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].0, items[2].0);
    let errs: Vec<(&str, &str)> = report.errors.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    assert_eq!(errs.len(), 3);
    assert!(errs.contains(&(items[0].0.as_str(), "missing prediction")));
    assert!(errs.iter().any(|(id, e)| *id == items[1].0 && e.contains("size mismatch")));
    assert!(errs.contains(&("stray", "missing ground truth")));
}

#[test]
fn empty_folders_give_an_empty_report() {
    let d = tempfile::tempdir().unwrap();
    let report = evaluate_folder(d.path(), d.path()).unwrap();
    assert!(report.rows.is_empty() && report.errors.is_empty());
    assert!(report.means().is_none());
}
