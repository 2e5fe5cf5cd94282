use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn updown(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_updown")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_spec(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const K3: &str = "kernel = \"tc\"\n[generator]\nkind = \"complete\"\nn = 3\n[node]\naccelerators = 1\nlanes_per_accelerator = 4\n";

#[test]
fn run_check_succeeds_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &format!("output = \"out\"\n{K3}"));
    let o = updown(&["run", "-c", &spec, "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("triangles=1\n") && stdout.contains("check=ok"));
    assert!(fs::read_to_string(dir.path().join("out/summary.txt")).unwrap().contains("triangles=1"));
}

#[test]
fn flags_override_spec_fields() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), K3);
    let o = updown(&["run", "-c", &spec, "--kernel", "js", "--n", "6", "--lanes-per-accelerator", "2", "--check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("kernel=js"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), K3);
    assert_eq!(code(&updown(&["run", "-c", &spec, "--max-cycles", "10"])), 1);
    assert_eq!(code(&updown(&["run", "-c", &spec, "--no-such-field", "1"])), 2);
    assert_eq!(code(&updown(&["run", "-c", &spec, "--lanes-per-accelerator", "3"])), 2);
    assert_eq!(code(&updown(&["run", "-c", "/nonexistent/run.toml"])), 2);
    let bad = dir.path().join("bad.s");
    fs::write(&bad, ".event main\nmain:\n  addi X1, X1\n").unwrap();
    assert_eq!(code(&updown(&["asm", bad.to_str().unwrap()])), 2);
}

#[test]
fn program_runs_from_boot_entries() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.s"), ".event main\nmain:\n  movrl OB0, ZERO, 0\n  yieldt\n").unwrap();
    let spec = write_spec(
        dir.path(),
        "program = \"p.s\"\n[[boot]]\nlane = 1\nlabel = \"main\"\noperands = [9]\n[node]\naccelerators = 1\nlanes_per_accelerator = 2\n",
    );
    let o = updown(&["run", "-c", &spec]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("invocations=1\n"));
    assert_eq!(code(&updown(&["asm", dir.path().join("p.s").to_str().unwrap(), "--disasm"])), 0);
}

#[test]
fn bench_and_graph_verbs() {
    let o = updown(&["bench", "ramp", "--threads", "1,2", "--requests", "128"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
    let o = updown(&["bench", "spawn", "--for-cycles", "3000"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("cycles_per_thread=3.000"));
    assert_eq!(code(&updown(&["bench", "outstanding", "--requests", "512"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), K3);
    let o = updown(&["graph", "info", "-c", &spec]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("triangles=1\n"));
    let o = updown(&["ablate", "-c", &spec]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 6);
}
