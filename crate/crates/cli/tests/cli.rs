use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flexmac::formats::{encode_float, ExactValue, FloatFormat, FloatValue};
use flexmac::isa::assemble;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn flexmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexmac"))
        .args(args)
        .env_remove("FLEXMAC_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn mul_examples() {
    let out = flexmac(&["mul", "--mode", "fp8a", "0x38", "0x38"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "0x38 (1.0)\n");
    assert_eq!(
        stdout(&flexmac(&["mul", "--mode", "int4", "0x7", "0x8"])),
        "-56\n"
    );
    assert_eq!(
        stdout(&flexmac(&["mul", "--mode", "uint4", "15", "15"])),
        "225\n"
    );
}

#[test]
fn mul_rejects_bad_operands() {
    let out = flexmac(&["mul", "--mode", "int4", "0x17", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: "), "{}", stderr(&out));
    let out = flexmac(&["mul", "--mode", "int8", "--bias", "3", "1", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

/// Exact product of two bf16 patterns, rounded once.
fn bf16_oracle(a: u32, b: u32) -> u32 {
    let fmt = FloatFormat::new(8, 7).unwrap();
    let x = FloatValue::new(a, fmt)
        .unwrap()
        .decode()
        .as_dyadic()
        .unwrap();
    let y = FloatValue::new(b, fmt)
        .unwrap()
        .decode()
        .as_dyadic()
        .unwrap();
    encode_float(ExactValue::from_dyadic(x * y), fmt, fmt.default_bias()).bits()
}

#[test]
fn bf16_golden_products() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/bf16_products.txt");
    if std::env::var_os("FLEXMAC_UPDATE").is_some() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut text = String::from("# a b product (bf16 bit patterns)\n");
        for _ in 0..100 {
            let (a, b) = (rng.gen_range(0..1u32 << 16), rng.gen_range(0..1u32 << 16));
            text += &format!("{a:#06x} {b:#06x} {:#06x}\n", bf16_oracle(a, b));
        }
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    let mut n = 0;
    for line in golden.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let out = flexmac(&["mul", "--mode", "bf16", f[0], f[1]]);
        assert!(out.status.success(), "{line}: {}", stderr(&out));
        let text = stdout(&out);
        assert_eq!(text.split_whitespace().next(), Some(f[2]), "{line}: {text}");
        let parse = |s: &str| u32::from_str_radix(&s[2..], 16).unwrap();
        assert_eq!(parse(f[2]), bf16_oracle(parse(f[0]), parse(f[1])), "{line}");
        n += 1;
    }
    assert_eq!(n, 100);
}

#[test]
fn verify_sweeps() {
    let out = flexmac(&["verify", "fp8a", "--exhaustive"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "fp8a: 65536/65536 ok\n");
    let out = flexmac(&["verify", "int4", "uint4", "--exhaustive"]);
    assert_eq!(stdout(&out), "int4: 256/256 ok\nuint4: 256/256 ok\n");
    let args = ["verify", "bf16", "--samples", "20000", "--seed", "7"];
    let (a, b) = (flexmac(&args), flexmac(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn verify_usage_errors() {
    let out = flexmac(&["verify", "int4"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).starts_with("error: usage: "),
        "{}",
        stderr(&out)
    );
    assert!(stderr(&out).contains("--samples"));
    assert_eq!(stderr(&out).lines().count(), 1);
    let out = flexmac(&["verify", "bf16", "--exhaustive"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out).lines().count(), 1);
}

#[test]
fn run_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = root().join("scenarios/smoke.json");
    let out = flexmac(&["run", path_str(&scenario), "--out", path_str(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let json = std::fs::read_to_string(dir.path().join("smoke.flexible.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["scenario"], "smoke");
    assert!(v["makespan"].as_u64().unwrap() > 0);
    let csv = std::fs::read_to_string(dir.path().join("smoke.flexible.csv")).unwrap();
    assert!(csv.starts_with("tenant,partition,layer,"));
    assert_eq!(
        csv.lines().count(),
        1 + v["layers"].as_array().unwrap().len()
    );
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = root().join("scenarios/smoke.json");
    let out = Command::new(env!("CARGO_BIN_EXE_flexmac"))
        .args(["run", path_str(&scenario), "--array", "rigid"])
        .env("FLEXMAC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("smoke.rigid.json").exists());
    assert!(dir.path().join("smoke.rigid.csv").exists());
}

#[test]
fn depthwise_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = root().join("scenarios/depthwise.json");
    let out = flexmac(&[
        "compare",
        path_str(&scenario),
        "--out",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(
        stdout(&out).contains("utilization flexible 0.9998 rigid 0.1406"),
        "{}",
        stdout(&out)
    );
    for stem in ["flexible", "rigid", "compare"] {
        assert!(
            dir.path().join(format!("depthwise.{stem}.json")).exists(),
            "{stem}"
        );
    }
}

#[test]
fn malformed_scenario_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            r#"{"name": "x", "pattern": "h", "format": "int8", "batch": "two", "tenants": []}"#,
            "`batch`",
        ),
        (
            r#"{"name": "x", "pattern": "h", "format": "int8", "tenants": [{"name": "t", "modles": []}]}"#,
            "`tenants[0].modles`",
        ),
    ];
    for (i, (json, field)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.json"));
        std::fs::write(&path, json).unwrap();
        let out = flexmac(&["run", path_str(&path), "--out", path_str(dir.path())]);
        assert_eq!(out.status.code(), Some(2));
        let err = stderr(&out);
        assert!(err.starts_with("error: schema: "), "{err}");
        assert!(err.contains(field), "{err}");
    }
}

#[test]
fn asm_disasm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("sample.bin");
    let src = root().join("programs/sample.s");
    let out = flexmac(&["asm", path_str(&src), "-o", path_str(&bin)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let bytes = std::fs::read(&bin).unwrap();
    let words = assemble(&std::fs::read_to_string(&src).unwrap()).unwrap();
    assert_eq!(bytes.len(), 4 * words.len());

    let text = dir.path().join("sample.txt");
    assert!(flexmac(&["disasm", path_str(&bin), "-o", path_str(&text)])
        .status
        .success());
    let again = dir.path().join("again.bin");
    assert!(flexmac(&["asm", path_str(&text), "-o", path_str(&again)])
        .status
        .success());
    assert_eq!(std::fs::read(&again).unwrap(), bytes);
    let listing = stdout(&flexmac(&["disasm", path_str(&bin)]));
    assert_eq!(listing, std::fs::read_to_string(&text).unwrap());
}

#[test]
fn empty_program() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("empty.s");
    std::fs::write(&src, "").unwrap();
    assert!(flexmac(&["asm", path_str(&src)]).status.success());
    let bin = dir.path().join("empty.bin");
    assert_eq!(std::fs::read(&bin).unwrap().len(), 0);
    let out = flexmac(&["disasm", path_str(&bin)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_mnemonic_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("bad.s");
    std::fs::write(&src, "rw b0, x1, x2\nfoo b0\n").unwrap();
    let out = flexmac(&["asm", path_str(&src)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out), "error: asm: line 2: unknown mnemonic `foo`\n");
    assert!(!dir.path().join("bad.bin").exists());
}

#[test]
fn help_lists_every_subcommand() {
    let text = stdout(&flexmac(&["--help"]));
    for cmd in ["mul", "verify", "run", "compare", "asm", "disasm"] {
        assert!(
            text.contains(&format!("  {cmd} ")),
            "{cmd} missing from\n{text}"
        );
    }
}
