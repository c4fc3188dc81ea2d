//! The `simulate` then `run` pipeline through the command-line layer,
//! writing into a temporary directory.

use vlsm::cli::run_cli;

fn main() {
    let dir = std::env::temp_dir().join("vlsm-pipeline-example");
    let d = |p: &str| dir.join(p).display().to_string();
    let code = run_cli(["vlsm", "simulate", "--subjects", "60", "--seed", "5", "--out", &d("data")]);
    assert_eq!(code, 0);
    let code = run_cli([
        "vlsm",
        "run",
        "--manifest",
        &d("data/manifest.json"),
        "--scores",
        &d("data/scores.csv"),
        "--perms",
        "200",
        "--out",
        &d("out"),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(dir.join("out/comparison.csv")).expect("comparison table");
    print!("{}", vlsm::output::strip_provenance(&text));
    println!("outputs in {}", d("out"));
}
