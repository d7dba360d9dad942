use std::path::{Path, PathBuf};

use flexmac::bench::{builtin, run_rigid, run_scenario, ModelSpec, Scenario, BUILTIN_MODELS};
use flexmac::isa::{assemble, disassemble};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Set `FLEXMAC_UPDATE=1` to rewrite the bundled model files.
#[test]
fn model_files_match_builtins() {
    let update = std::env::var("FLEXMAC_UPDATE").is_ok_and(|v| v == "1");
    for name in BUILTIN_MODELS {
        let path = root().join("models").join(format!("{name}.json"));
        let model = builtin(name, None, flexmac::bench::DEFAULT_SEQ_LEN).unwrap();
        let json = model.to_json() + "\n";
        if update {
            std::fs::write(&path, &json).unwrap();
        }
        let on_disk =
            std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(
            on_disk,
            json,
            "{} is stale; rerun with FLEXMAC_UPDATE=1",
            path.display()
        );
        assert_eq!(ModelSpec::from_json(&on_disk).unwrap(), model);
    }
}

#[test]
fn scenarios_run() {
    let mut n = 0;
    for entry in std::fs::read_dir(root().join("scenarios")).unwrap() {
        let path = entry.unwrap().path();
        let s = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let flex = run_scenario(&s).unwrap();
        let rigid = run_rigid(&s).unwrap();
        assert_eq!(flex.layers.len(), rigid.layers.len(), "{}", path.display());
        assert!(flex.makespan > 0);
        n += 1;
    }
    assert!(n >= 3);
}

#[test]
fn sample_program_round_trips() {
    let src = std::fs::read_to_string(root().join("programs/sample.s")).unwrap();
    let words = assemble(&src).unwrap();
    assert!(!words.is_empty());
    assert_eq!(assemble(&disassemble(&words)).unwrap(), words);
}
