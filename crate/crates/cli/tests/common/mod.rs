#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use inferbase::data::{write_csv, Dataset, Schema};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_inferbase"))
}

/// Writes `d` and a schema that reloads it faithfully; returns the paths.
pub fn write_dataset(dir: &Path, name: &str, d: &Dataset) -> (PathBuf, PathBuf) {
    let csv = dir.join(format!("{name}.csv"));
    write_csv(d, std::fs::File::create(&csv).unwrap()).unwrap();
    let schema = dir.join(format!("{name}.schema.toml"));
    std::fs::write(&schema, Schema::from_dataset(d).to_toml_string()).unwrap();
    (csv, schema)
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

pub fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad stdout ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

pub fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().next().unwrap_or("");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

/// Run directory named in the "report written to" line.
pub fn run_dir(out: &Output) -> PathBuf {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("report written to "))
        .unwrap_or_else(|| panic!("no run dir in stderr: {text}"));
    PathBuf::from(line.trim())
}

pub fn csv_records(text: &[u8]) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text).records().map(|r| r.unwrap()).collect()
}
