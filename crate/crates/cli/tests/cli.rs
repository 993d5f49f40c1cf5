use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pnp-csi"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pnp-csi-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_data(dir: &Path) -> PathBuf {
    let cfg = dir.join("gen.cfg");
    std::fs::write(&cfg, "n_train = 4\nn_val = 2\nn_test = 3\n").unwrap();
    let base = dir.join("d.pnpd");
    ok(bin()
        .args(["gen-data", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&base)
        .output()
        .unwrap());
    base
}

#[test]
fn gen_data_then_run_each_task() {
    let dir = scratch("tasks");
    let data = small_data(&dir);
    for split in ["train", "val", "test"] {
        assert!(dir.join(format!("d.{split}.pnpd")).exists());
    }
    let run = dir.join("run.cfg");
    std::fs::write(&run, format!("data = {}\ndenoiser = shrink\ntiming = off\n", data.display())).unwrap();

    let ce = ok(bin().arg("run-ce").arg("--config").arg(&run).args(["--pattern", "C", "--snr-db", "10"]).output().unwrap());
    let mut lines = ce.lines();
    assert_eq!(lines.next(), Some("task,method,snr_db,cr,bits,nmse_db,cos,runtime_ms,iters,cos_excluded"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(methods, ["ls", "lmmse", "pppce"]);

    let ae = ok(bin().arg("run-ae").arg("--config").arg(&run).args(["--snr-db", "0"]).output().unwrap());
    assert!(ae.contains("ae,pppae,0,na,none,"));

    let cf = ok(bin().arg("run-cf").arg("--config").arg(&run).args(["--cr", "1/8", "--bits", "3"]).output().unwrap());
    assert!(cf.contains("cf,pppcf,inf,0.125000,3,"));

    // same config, same bytes
    let again = ok(bin().arg("run-ce").arg("--config").arg(&run).args(["--pattern", "C", "--snr-db", "10"]).output().unwrap());
    assert_eq!(ce, again);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = scratch("keys");
    let data = small_data(&dir);
    let run = dir.join("bad.cfg");
    std::fs::write(&run, format!("data = {}\nlamda = 0.3\n", data.display())).unwrap();
    let out = bin().arg("run-ce").arg("--config").arg(&run).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));
}

#[test]
fn config_for_another_task_is_refused() {
    let dir = scratch("task");
    let run = dir.join("ae.cfg");
    std::fs::write(&run, "task = ae\n").unwrap();
    let out = bin().arg("run-ce").arg("--config").arg(&run).output().unwrap();
    assert!(!out.status.success());
}
