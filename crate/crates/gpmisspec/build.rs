use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

// Digests the crate sources into a short build identifier so `--version`
// and run manifests can tie outputs to the exact code that produced them.
fn main() {
    let mut files: Vec<_> = fs::read_dir(Path::new("src"))
        .expect("src directory")
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map_or(false, |ext| ext == "rs"))
        .collect();
    files.sort();
    let mut hasher = Sha256::new();
    for file in &files {
        hasher.update(fs::read(file).expect("readable source file"));
        println!("cargo:rerun-if-changed={}", file.display());
    }
    hasher.update(fs::read("Cargo.toml").expect("manifest"));
    println!("cargo:rerun-if-changed=Cargo.toml");
    let digest = hasher.finalize();
    let short: String = format!("{digest:x}").chars().take(12).collect();
    println!("cargo:rustc-env=GPMISSPEC_BUILD_DIGEST={short}");
}
