use std::path::Path;
use std::process::Command;

/// Runs the Python smoke script against the installed extension, if any.
#[test]
fn python_smoke_script() {
    let python = std::env::var("PYTHON").unwrap_or_else(|_| "python3".into());
    let probe = Command::new(&python).args(["-c", "import newsgravity"]).output();
    if !probe.map(|o| o.status.success()).unwrap_or(false) {
        eprintln!("newsgravity extension not installed; skipping");
        return;
    }
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/smoke_test.py");
    let out = Command::new(&python).arg(script).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
