use npns::sweep::{load_sweep, sweep, SWEEP_SUMMARY};

const TEMPLATE: &str = "\
[grid]
dim = 2
extents = 1, 1
cells = 8, 8

[physics]
epsilon = 0.1
nu = 1
coupling_k = 1

[species1]
valence = 1
diffusivity = 1
gamma = 2

[species2]
valence = -1
diffusivity = 1
gamma = 1

[potential]
w = linear(0, 1, 0)

[run]
t_final = 0.02
perturbation = 0.05
";

fn setup(ranges: &str, workers: usize) -> (tempfile::TempDir, std::path::PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("base.ini"), TEMPLATE).unwrap();
    let path = tmp.path().join("sweep.ini");
    std::fs::write(&path, format!("[sweep]\ntemplate = base.ini\nworkers = {workers}\n\n[ranges]\n{ranges}")).unwrap();
    (tmp, path)
}

fn summary_rows(root: &std::path::Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(root.join(SWEEP_SUMMARY)).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn two_by_two_gives_four_runs() {
    let (tmp, path) = setup("potential.w = linear(0, 1, 0); linear(0, 3, 0)\nspecies2.diffusivity = 1; 0.5\n", 2);
    let spec = load_sweep(&path).unwrap();
    let root = tmp.path().join("out");
    let rows = sweep(&spec, &root).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.outcome.is_ok()));
    for i in 0..4 {
        assert!(root.join(format!("run_{i:04}")).join("timeseries.csv").exists());
    }
    let table = summary_rows(&root);
    assert_eq!(table.len(), 4);
    assert!(table.iter().all(|r| r[3] == "ok"));
}

#[test]
fn invalid_cell_is_recorded_and_others_finish() {
    let (tmp, path) = setup("species1.diffusivity = 1; 0; 2\n", 1);
    let spec = load_sweep(&path).unwrap();
    let root = tmp.path().join("out");
    let rows = sweep(&spec, &root).unwrap();
    assert!(rows[0].outcome.is_ok() && rows[2].outcome.is_ok());
    assert!(rows[1].outcome.is_err());
    let table = summary_rows(&root);
    assert_eq!(table[1][2], "failed");
    assert!(!table[1].last().unwrap().is_empty());
    assert_eq!(table[0][2], "ok");
}

#[test]
fn identical_cells_give_identical_summaries() {
    let (tmp, path) = setup("run.seed = 4; 4\n", 2);
    let spec = load_sweep(&path).unwrap();
    let root = tmp.path().join("out");
    sweep(&spec, &root).unwrap();
    let table = summary_rows(&root);
    assert_eq!(table[0][1..], table[1][1..]);
    let a = std::fs::read(root.join("run_0000/timeseries.csv")).unwrap();
    let b = std::fs::read(root.join("run_0001/timeseries.csv")).unwrap();
    assert_eq!(a, b);
}
