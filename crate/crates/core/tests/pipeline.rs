use std::path::Path;

use tissue_homog::config::{parse_config, RunConfig};
use tissue_homog::io::{read_matrix_csv, read_vtk};
use tissue_homog::macro_flow::FlowCase;
use tissue_homog::pipeline::run_pipeline;
use tissue_homog::{Error, ErrorCategory};

fn small(case: FlowCase) -> RunConfig {
    let mut cfg = RunConfig::new(case);
    cfg.grid.cell = 16;
    cfg.grid.macro_cells = vec![8, 8];
    cfg.time.final_time = 0.05;
    cfg.time.output_every = 2;
    cfg
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn every_case_runs_end_to_end() {
    for case in [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&small(case), dir.path()).unwrap();
        assert!(out.report.flow.compatible, "{case:?}: {:?}", out.report.flow);
        assert!(out.report.oxygen.min >= -1e-12);
        assert!(out.report.oxygen.max <= 1.0 + 1e-10);
        for f in ["report.toml", "provenance.toml", "tensors/k_artery.csv", "tensors/a_skin_tissue.csv", "fields/oxygen_history.csv"] {
            assert!(dir.path().join(f).is_file(), "{case:?}: {f} missing");
        }
        let k = read_matrix_csv(&dir.path().join("tensors/k_vein.csv")).unwrap();
        assert_eq!(k, out.report.cells.k_vein.matrix());
        let v = read_vtk(&dir.path().join("fields/flow_bulk.vtk")).unwrap();
        assert_eq!(v.array("p_artery").unwrap().len(), 81);
    }
}

#[test]
fn rerun_hits_cache_and_is_byte_identical() {
    let cfg = small(FlowCase::Case1);
    let dir = tempfile::tempdir().unwrap();
    let first = run_pipeline(&cfg, dir.path()).unwrap();
    assert!(!first.provenance.cache_hit);
    let names = ["report.toml", "tensors/k_skin.csv", "tensors/a_tissue.csv", "fields/flow_bulk.vtk", "fields/oxygen_bulk.vtk"];
    let before: Vec<Vec<u8>> = names.iter().map(|n| read(&dir.path().join(n))).collect();
    let second = run_pipeline(&cfg, dir.path()).unwrap();
    assert!(second.provenance.cache_hit);
    for (n, b) in names.iter().zip(&before) {
        assert_eq!(&read(&dir.path().join(n)), b, "{n} changed");
    }
    // a fresh directory recomputes and still matches
    let other = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, other.path()).unwrap();
    for (n, b) in names.iter().zip(&before) {
        assert_eq!(&read(&other.path().join(n)), b, "{n} differs between directories");
    }
}

#[test]
fn changed_cell_inputs_miss_the_cache() {
    let mut cfg = small(FlowCase::Case1);
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&cfg, dir.path()).unwrap();
    cfg.physics.diffusion[2] = 0.5;
    let out = run_pipeline(&cfg, dir.path()).unwrap();
    assert!(!out.provenance.cache_hit);
    let a = read_matrix_csv(&dir.path().join("tensors/a_tissue.csv")).unwrap();
    assert_eq!(a, out.report.cells.a_tissue.matrix());
}

#[test]
fn overlapping_geometry_is_a_geometry_error() {
    let dir = tempfile::tempdir().unwrap();
    let cell = dir.path().join("bad.toml");
    std::fs::write(
        &cell,
        r#"kind = "fat"
dim = 2
[[primitive]]
phase = "artery"
shape = "box"
center = [0.5, 0.5]
extents = [0.5, 1.0]
[[primitive]]
phase = "vein"
shape = "box"
center = [0.6, 0.5]
extents = [0.5, 1.0]
"#,
    )
    .unwrap();
    let text = format!("case = \"1\"\n[geometry]\nfat = {:?}\n[grid]\ncell = 16\nmacro = [4, 4]\n", cell.display().to_string());
    let cfg = parse_config(&text).unwrap();
    let err = run_pipeline(&cfg, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Geometry, "{err}");
    assert!(matches!(err.root(), Error::Overlap(_)));
    assert!(err.to_string().contains("fat cell"), "{err}");
}
