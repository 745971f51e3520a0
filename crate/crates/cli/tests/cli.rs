use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tissue-homog"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

const SMALL: &str = "case = \"1\"\n[grid]\ncell = 16\nmacro = [8, 8]\n[time]\nfinal_time = 0.05\n";

#[test]
fn pipeline_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = run(dir.path(), &["pipeline", "--config", "run.toml", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.toml", "tensors/k_artery.csv", "tensors/a_skin_blood.csv", "fields/oxygen_bulk.vtk"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    // config error
    std::fs::write(dir.path().join("bad.toml"), "case = \"1\"\nfoo = 1\n").unwrap();
    let o = run(dir.path(), &["macro-flow", "--config", "bad.toml"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("foo"));
    assert_eq!(code(&run(dir.path(), &["pipeline", "--tol", "0"])), 2);
    // solver error: a fat cell with no vertical conductivity
    std::fs::write(
        dir.path().join("flat.toml"),
        "case = \"1\"\n[geometry]\nfat = \"fat-pair-2d\"\n[grid]\ncell = 16\nmacro = [4, 4]\n",
    )
    .unwrap();
    let o = run(dir.path(), &["macro-flow", "--config", "flat.toml", "--out", "x"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // geometry error
    std::fs::write(
        dir.path().join("cell.toml"),
        "kind = \"fat\"\ndim = 2\n[[primitive]]\nphase = \"artery\"\nshape = \"sphere\"\ncenter = [0.5, 0.5]\nradius = 0.3\n[[primitive]]\nphase = \"vein\"\nshape = \"sphere\"\ncenter = [0.6, 0.5]\nradius = 0.3\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("overlap.toml"),
        "case = \"1\"\n[geometry]\nfat = \"cell.toml\"\n[grid]\ncell = 16\nmacro = [4, 4]\n",
    )
    .unwrap();
    let o = run(dir.path(), &["pipeline", "--config", "overlap.toml", "--out", "y"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    // thread variable
    let o = bin().current_dir(dir.path()).env("TISSUE_HOMOG_THREADS", "none").args(["pipeline"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn cell_solve_writes_tensors() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["stokes", "diffusion"] {
        let o = bin()
            .current_dir(dir.path())
            .env("TISSUE_HOMOG_THREADS", "2")
            .args(["cell-solve", "--kind", kind, "--preset", "fat-channel-2d", "--out", "c"])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let k = std::fs::read_to_string(dir.path().join("c/cell/k_artery.csv")).unwrap();
    assert!(k.starts_with("c0,c1\n"));
    assert!(dir.path().join("c/cell/a_tissue.csv").is_file());
    let mask = tissue_homog::io::read_mask(&dir.path().join("c/cell/mask.bin")).unwrap();
    assert_eq!(mask.phases().len(), 32 * 32);
}

#[test]
fn oxygen_run_and_case_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), SMALL).unwrap();
    let o = run(dir.path(), &["oxygen-run", "--config", "run.toml", "--case", "2l", "--out", "o"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("case 2l"));
    assert!(dir.path().join("o/fields/oxygen_skin.vtk").is_file());
}

#[test]
fn dns_validate_reports_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("dns.toml"),
        "case = \"1\"\n[dns]\nns = [4, 8]\nvoxels_per_cell = 8\nfinal_time = 0.04\n",
    )
    .unwrap();
    let o = run(dir.path(), &["dns-validate", "--config", "dns.toml", "--out", "d"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("verdict:"), "{stdout}");
    assert_eq!(code(&o), if stdout.contains("PASS") { 0 } else { 1 });
    let csv = std::fs::read_to_string(dir.path().join("d/dns_sweep.csv")).unwrap();
    assert!(csv.starts_with("n,eps,l2,linf,l2_control,rate\n"));
    assert_eq!(csv.lines().count(), 3);
}
