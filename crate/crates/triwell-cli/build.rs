use std::process::Command;

// Embed the source revision so data files can be traced to a build.
fn main() {
    let describe = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_default();
    let describe = if describe.is_empty() {
        "unknown".to_string()
    } else {
        describe
    };
    println!("cargo:rustc-env=TRIWELL_BUILD_REF={describe}");
    println!("cargo:rerun-if-changed=../../.git/HEAD");
}
