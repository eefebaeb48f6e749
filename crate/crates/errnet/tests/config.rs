//! Config parsing and layering.

use std::path::Path;

use errnet::config::{Config, KEYS};
use errnet::CliError;

#[test]
fn desk_defaults() {
    let c = Config::default();
    assert_eq!((c.lr, c.epochs, c.batch, c.input_size), (1e-4, 50, 4, 64));
    assert_eq!(c.channels, [16, 32, 32, 64, 64]);
    assert_eq!(c.scales, vec![0.75, 1.0, 1.25]);
    c.validate().unwrap();
    let p = Config::full_scale();
    assert_eq!((p.epochs, p.batch, p.input_size), (30, 36, 352));
    p.validate().unwrap();
}

#[test]
fn file_lines_and_comments() {
    let mut c = Config::default();
    let text = "# run\nlr = 0.003   # faster\n\nencoder.c3=48\nscales = 1.0, 1.25\nsynth.contrast = 0.2\n";
    c.apply_text(text, Path::new("a.cfg")).unwrap();
    assert_eq!(c.lr, 0.003);
    assert_eq!(c.channels[2], 48);
    assert_eq!(c.scales, vec![1.0, 1.25]);
    assert_eq!(c.contrast, 0.2);
}

#[test]
fn errors_carry_line_numbers() {
    let mut c = Config::default();
    let err = c.apply_text("lr = 1e-3\n\nlearning_rate = 2\n", Path::new("a.cfg")).unwrap_err();
    match &err {
        CliError::Config { line, message, .. } => {
            assert_eq!(*line, 3);
            assert!(message.contains("learning_rate"));
        }
        other => panic!("{other:?}"),
    }
    assert!(err.to_string().starts_with("a.cfg:3:"), "{err}");
    let err = c.apply_text("epochs = many\n", Path::new("a.cfg")).unwrap_err();
    assert!(err.to_string().contains("a.cfg:1:"), "{err}");
    assert!(c.apply_text("just words\n", Path::new("a.cfg")).is_err());
    assert!(c.apply_text("encoder.c6 = 3\n", Path::new("a.cfg")).is_err());
}

#[test]
fn precedence_defaults_file_flags() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("run.cfg");
    std::fs::write(&p, "lr = 0.01\nbatch = 2\n").unwrap();
    let c = Config::resolve(Some(&p), &[("lr", Some("0.02".into())), ("epochs", None)]).unwrap();
    assert_eq!(c.lr, 0.02); // flag beats file
    assert_eq!(c.batch, 2); // file beats default
    assert_eq!(c.epochs, 50); // default survives
}

#[test]
fn validation() {
    for (k, v) in [("input_size", "50"), ("lr", "0"), ("lr", "-1"), ("batch", "0"), ("scales", "-1"), ("encoder.c2", "0")] {
        let r = Config::resolve(None, &[(k, Some(v.into()))]);
        assert!(r.is_err(), "{k} = {v}");
    }
    let err = Config::resolve(None, &[("input_size", Some("50".into()))]).unwrap_err();
    assert!(err.to_string().contains("multiple of 32"), "{err}");
}

#[test]
fn echo_reparses_to_the_same_config() {
    let mut c = Config::default();
    c.set("lr", "0.0007").unwrap();
    c.set("scales", "1").unwrap();
    let text = c.echo();
    for k in KEYS {
        assert!(text.lines().any(|l| l.starts_with(&format!("{k} = "))), "{k}");
    }
    let mut d = Config::default();
    d.apply_text(&text, Path::new("echo")).unwrap();
    assert_eq!(c, d);
}

#[test]
fn training_sizes_follow_the_rounding_rule() {
    let c = Config::default();
    assert_eq!(c.training_sizes().unwrap(), vec![32, 64, 64]);
    let mut small = Config::default();
    small.set("input_size", "32").unwrap();
    small.validate().unwrap();
    assert!(small.training_sizes().is_err());
}
