use std::path::Path;

use ntu_tetrad::fixture::{write_village, VillageDesign, CONFIG_FILE, DYADS_FILE, HOUSEHOLDS_FILE};
use ntu_tetrad::io::{ingest, RunConfig};

fn bundled() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/village")
}

#[test]
fn bundled_files_match_the_generator() {
    let tmp = tempfile::tempdir().unwrap();
    write_village(tmp.path(), &VillageDesign::default()).unwrap();
    for name in [HOUSEHOLDS_FILE, DYADS_FILE, CONFIG_FILE] {
        let fresh = std::fs::read(tmp.path().join(name)).unwrap();
        let committed = std::fs::read(bundled().join(name)).unwrap();
        assert!(fresh == committed, "{name} differs; rerun the regenerate_village example");
    }
}

#[test]
fn ingestion_drops_incomplete_households() {
    let cfg = RunConfig::load(&bundled().join(CONFIG_FILE)).unwrap();
    let data = ingest(&cfg.estimate.unwrap().data).unwrap();
    assert_eq!(data.network.n(), 114);
    assert_eq!(data.dropped_nodes, 5);
    assert_eq!(data.regressors, ["wealth_difference", "distance", "tie"]);
    assert_eq!(data.first_stage, ["ln wealth"]);
    assert!(data.index.is_symmetric());
    let density = data.network.density();
    assert!(density > 0.01 && density < 0.5);
}

#[test]
fn ingestion_is_deterministic() {
    let cfg = RunConfig::load(&bundled().join(CONFIG_FILE)).unwrap();
    let spec = cfg.estimate.unwrap().data;
    let (a, b) = (ingest(&spec).unwrap(), ingest(&spec).unwrap());
    assert_eq!(a.network.adjacency(), b.network.adjacency());
    assert_eq!(a.network.covariates(), b.network.covariates());
    for i in 0..a.network.n() {
        for j in 0..a.network.n() {
            assert_eq!(a.index.get(i, j), b.index.get(i, j));
        }
    }
}
