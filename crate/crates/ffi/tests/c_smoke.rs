//! Builds `tests/smoke.c` against the generated header and the cdylib, then
//! runs it. Skips (with a notice) when no C compiler is on PATH.

use std::path::{Path, PathBuf};
use std::process::Command;

fn find_cdylib() -> Option<PathBuf> {
    // Integration tests run from target/<profile>/deps; the cdylib lands in
    // the profile directory or next to the test binary.
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    for dir in [deps, deps.parent()?] {
        let candidate = dir.join("libprodinv_ffi.so");
        if candidate.exists() {
            return Some(candidate);
        }
    }
    None
}

#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler on PATH");
        return;
    }

    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let include_dir = manifest.join("include");
    assert!(
        include_dir.join("prodinv.h").exists(),
        "build script must generate include/prodinv.h"
    );
    let source = manifest.join("tests").join("smoke.c");

    let cdylib = find_cdylib().expect("libprodinv_ffi.so must be built before tests");
    let lib_dir = cdylib.parent().unwrap();

    let out_dir = tempfile::Builder::new()
        .prefix("prodinv-ffi-smoke")
        .tempdir()
        .unwrap();
    let binary = out_dir.path().join("smoke");

    let compile = Command::new("cc")
        .arg(&source)
        .arg("-I")
        .arg(&include_dir)
        .arg("-L")
        .arg(lib_dir)
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lprodinv_ffi")
        .arg("-lm")
        .arg("-o")
        .arg(&binary)
        .arg("-Wall")
        .arg("-Werror")
        .output()
        .expect("cc must run");
    assert!(
        compile.status.success(),
        "compilation failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&binary).output().expect("smoke binary must run");
    assert!(
        run.status.success(),
        "smoke test failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "OK");
}
