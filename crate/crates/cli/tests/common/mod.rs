//! Helpers shared by the CLI test targets: fixture copying and a thin
//! wrapper around invoking the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

pub const BIN: &str = env!("CARGO_BIN_EXE_flavograph");

pub fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), &target).unwrap();
        }
    }
}

/// Copies the shipped fixture corpus into `tmp` and returns the copy's path;
/// its config writes artifacts to `tmp`/out.
pub fn fixture_copy(tmp: &Path) -> PathBuf {
    let source = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let copy = tmp.join("fixtures");
    copy_tree(&source, &copy);
    copy
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn finish(output: Output) -> Run {
    Run {
        code: output.status.code().expect("terminated by signal"),
        stdout: String::from_utf8(output.stdout).unwrap(),
        stderr: String::from_utf8(output.stderr).unwrap(),
    }
}

pub fn flavograph(args: &[&str]) -> Run {
    finish(Command::new(BIN).args(args).output().unwrap())
}

#[allow(dead_code)]
pub fn flavograph_stdin(args: &[&str], stdin: &str) -> Run {
    use std::io::Write;
    let mut child = Command::new(BIN)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.as_mut().unwrap().write_all(stdin.as_bytes()).unwrap();
    finish(child.wait_with_output().unwrap())
}

/// Runs `pipeline run` on a fresh fixture copy; returns (fixtures, out).
pub fn pipelined_fixture(tmp: &Path) -> (PathBuf, PathBuf) {
    let fixtures = fixture_copy(tmp);
    let config = fixtures.join("config.json");
    let run = flavograph(&["pipeline", "run", "-c", config.to_str().unwrap()]);
    assert_eq!(run.code, 0, "pipeline run failed: {}", run.stderr);
    (fixtures, tmp.join("out"))
}
