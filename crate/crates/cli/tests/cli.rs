use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn claret(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_claret"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for class in fs::read_dir(root).unwrap() {
        let class = class.unwrap().path();
        for f in fs::read_dir(&class).unwrap() {
            let f = f.unwrap().path();
            out.push((f.strip_prefix(root).unwrap().display().to_string(), fs::read(&f).unwrap()));
        }
    }
    out.sort();
    out
}

const QUICK: &str = "n_conv_blocks=3\nfilter_exponent_lo=2\nfilter_exponent_hi=4\ndense_units=16\nepochs=2\nbatch_size=8\nseed=3\n";

#[test]
fn synth_writes_a_deterministic_tree() {
    let dir = tempfile::tempdir().unwrap();
    let o = claret(&["synth", "--out", "a", "--per-class", "5", "--size", "32", "--seed", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    claret(&["synth", "--out", "b", "--per-class", "5", "--size", "32", "--seed", "1"], dir.path());
    let a = files_under(&dir.path().join("a"));
    assert_eq!(a.len(), 20);
    assert!(a.iter().all(|(name, _)| name.ends_with(".pgm")));
    assert_eq!(a, files_under(&dir.path().join("b")));
    assert!(stdout(&o).contains("20 images"));
}

#[test]
fn synth_unwritable_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("file"), "x").unwrap();
    let o = claret(&["synth", "--out", "file/sub", "--per-class", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("IO_WRITE"));
}

#[test]
fn train_eval_predict_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    claret(&["synth", "--out", "tree", "--per-class", "10", "--size", "16", "--seed", "2"], d);
    fs::write(d.join("run.cfg"), QUICK).unwrap();
    let o = claret(
        &["train", "--data", "tree", "--config", "run.cfg", "--out", "m.clrt", "--curves", "c.csv"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("c.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,train_acc,val_acc");
    assert_eq!(lines.len(), 3);
    assert!(stdout(&o).contains("macro_f1"));

    let e = claret(&["eval", "--data", "tree", "--model", "m.clrt"], d);
    assert!(e.status.success(), "{}", stderr(&e));
    let text = stdout(&e);
    let grab = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    let acc = grab("accuracy");
    assert!((0.0..=1.0).contains(&acc));
    assert!((0.0..=1.0).contains(&grab("macro_f1")));
    // accuracy equals trace / total of the printed confusion matrix
    let rows: Vec<Vec<u64>> = text
        .lines()
        .skip_while(|l| !l.starts_with("true\\pred"))
        .skip(1)
        .take(4)
        .map(|l| l.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    let total: u64 = rows.iter().flatten().sum();
    let trace: u64 = (0..4).map(|i| rows[i][i]).sum();
    assert_eq!(total, 40);
    assert!((acc - trace as f64 / total as f64).abs() < 1e-4);

    let image = "tree/2_disc/00000.pgm";
    let p1 = claret(&["predict", "--model", "m.clrt", "--image", image], d);
    let p2 = claret(&["predict", "--model", "m.clrt", "--image", image], d);
    assert!(p1.status.success(), "{}", stderr(&p1));
    assert_eq!(p1.stdout, p2.stdout);
    let out = stdout(&p1);
    let probs: Vec<f64> = out
        .lines()
        .find(|l| l.starts_with("probabilities"))
        .unwrap()
        .split_whitespace()
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 4);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-4);
    let class: usize = out.lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();
    let name = ["0_horizontal", "1_vertical", "2_disc", "3_diagonal"][class];
    assert!(out.contains(&format!("name {name}")));
}

#[test]
fn config_errors_exit_1_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    claret(&["synth", "--out", "tree", "--per-class", "2", "--size", "8"], d);
    for (text, key) in [("n_conv_blocks=4\n", "n_conv_blocks"), ("learning_rte=0.1\n", "learning_rte")] {
        fs::write(d.join("bad.cfg"), text).unwrap();
        let o = claret(&["train", "--data", "tree", "--config", "bad.cfg", "--out", "m.clrt"], d);
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains(key), "{}", stderr(&o));
    }
    let o = claret(&["train", "--data", "tree"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn class_mismatch_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    claret(&["synth", "--out", "tree", "--per-class", "4", "--size", "8"], d);
    fs::write(d.join("run.cfg"), QUICK.replace("epochs=2", "epochs=1")).unwrap();
    let o = claret(&["train", "--data", "tree", "--config", "run.cfg", "--out", "m.clrt"], d);
    assert!(o.status.success(), "{}", stderr(&o));

    fs::create_dir(d.join("tree/4_extra")).unwrap();
    fs::copy(d.join("tree/2_disc/00000.pgm"), d.join("tree/4_extra/00000.pgm")).unwrap();
    let e = claret(&["eval", "--data", "tree", "--model", "m.clrt"], d);
    assert_eq!(e.status.code(), Some(3));
    assert!(stderr(&e).contains("CLASS_COUNT_MISMATCH"));
    fs::write(d.join("run5.cfg"), format!("{QUICK}n_classes=4\n")).unwrap();
    let t = claret(&["train", "--data", "tree", "--config", "run5.cfg", "--out", "x.clrt"], d);
    assert_eq!(t.status.code(), Some(3));

    let mut bytes = fs::read(d.join("m.clrt")).unwrap();
    let n = bytes.len();
    bytes[n - 20] ^= 0x01;
    fs::write(d.join("bad.clrt"), &bytes).unwrap();
    let e = claret(&["eval", "--data", "tree", "--model", "bad.clrt"], d);
    assert_eq!(e.status.code(), Some(2));
    assert!(stderr(&e).contains("CRC_MISMATCH"));

    let img = fs::read(d.join("tree/0_horizontal/00000.pgm")).unwrap();
    fs::write(d.join("short.pgm"), &img[..img.len() / 2]).unwrap();
    let p = claret(&["predict", "--model", "m.clrt", "--image", "short.pgm"], d);
    assert_eq!(p.status.code(), Some(2));
    assert!(stderr(&p).contains("TRUNCATED"));
}

#[test]
fn gradcheck_passes_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = claret(&["gradcheck", "--seed", "5"], dir.path());
    let b = claret(&["gradcheck", "--seed", "5"], dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(!stdout(&a).contains("FAIL"));
}

#[test]
fn broken_relu_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = claret(&["gradcheck", "--inject-fault", "relu"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("relu"));
}

#[test]
fn frozen_backbone_import() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    claret(&["synth", "--out", "tree", "--per-class", "2", "--size", "32", "--seed", "4"], d);
    // a donor checkpoint that carries a VGG-19 backbone
    let donor_cfg = format!("{QUICK}backbone=vgg19\nepochs=1\n").replace("epochs=2\n", "");
    fs::write(d.join("donor.cfg"), donor_cfg).unwrap();
    let o = claret(&["train", "--data", "tree", "--config", "donor.cfg", "--out", "vgg.clrt"], d);
    assert!(o.status.success(), "{}", stderr(&o));

    fs::write(d.join("run.cfg"), QUICK.replace("seed=3", "seed=8")).unwrap();
    let o = claret(
        &["train", "--data", "tree", "--config", "run.cfg", "--out", "m.clrt", "--backbone", "vgg.clrt", "--freeze", "16"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let donor = claret_core::checkpoint::load_checkpoint(d.join("vgg.clrt")).unwrap();
    let model = claret_core::checkpoint::load_checkpoint(d.join("m.clrt")).unwrap();
    let pick = |m: &claret_core::model::Model| m.params.digest(|n, _| n.starts_with("backbone."));
    assert_eq!(pick(&donor), pick(&model));
    assert!(model.params.iter().all(|(n, p)| p.trainable != n.starts_with("backbone.")));
}
