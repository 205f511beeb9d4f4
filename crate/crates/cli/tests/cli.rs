use std::fs;
use std::path::Path;
use std::process::Command;

const TINY: &str = "\
trials = 8
accuracy_samples = 20
p_source = 12
l_source = 8
ps_sweep = 6, 12
test_snr = 0, 10
gamma = 0.01, 1
max_epochs = 3
conv_filters = 4
fc_units = 16
p_theta_source = 2
p_phi_source = 6
p_theta_target = 2
p_phi_target = 4
k_source_2d = 3
k_target_2d = 4
";

fn arraysel(config: &Path, out: &Path, args: &[&str]) -> String {
    let output = Command::new(env!("CARGO_BIN_EXE_arraysel"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(output.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&output.stderr));
    String::from_utf8(output.stdout).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn every_scenario_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("tiny.cfg");
    fs::write(&config, TINY).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    arraysel(&config, &a, &["--seed", "7", "reproduce", "all"]);
    arraysel(&config, &b, &["--seed", "7", "reproduce", "all"]);
    let (fa, fb) = (csv_files(&a), csv_files(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["coupling.csv", "perturbed-tl.csv", "source-doa.csv", "tl-doa.csv", "tl-sweep.csv", "two-d.csv"]
    );
    assert_eq!(fa, fb);
    let text = String::from_utf8(fa[3].1.clone()).unwrap();
    assert!(text.starts_with("# scenario=tl-doa"));
    assert!(text.lines().nth(1) == Some("x,series,value,stderr"));
}

#[test]
fn pipeline_subcommands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("tiny.cfg");
    fs::write(&config, TINY).unwrap();
    let out = tmp.path();
    arraysel(&config, out, &["gen-data", "--domain", "source"]);
    arraysel(&config, out, &["gen-data", "--domain", "target"]);
    let source = out.join("source.sald");
    let target = out.join("target.sald");
    assert!(source.exists() && target.exists());
    arraysel(&config, out, &["train-source", "--data", source.to_str().unwrap()]);
    let model = out.join("source.sann");
    assert!(model.exists() && out.join("source.classes").exists());
    arraysel(
        &config,
        out,
        &["transfer", "--source-model", model.to_str().unwrap(), "--data", target.to_str().unwrap()],
    );
    let transfer = out.join("transfer.sann");
    arraysel(
        &config,
        out,
        &["eval-selection", "--model", transfer.to_str().unwrap(), "--data", target.to_str().unwrap()],
    );
    arraysel(&config, out, &["eval-doa", "--model", transfer.to_str().unwrap()]);
    let doa = fs::read_to_string(out.join("eval-doa.csv")).unwrap();
    for series in ["CNN", "Best", "GAS", "RAS", "Full"] {
        assert!(doa.contains(&format!(",{series},")), "{doa}");
    }
}

#[test]
fn bad_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.cfg");
    fs::write(&config, "no_such_key = 1\n").unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_arraysel"))
        .arg("--config")
        .arg(&config)
        .args(["reproduce", "tl-doa"])
        .output()
        .unwrap()
        .status;
    assert!(!status.success());
}
