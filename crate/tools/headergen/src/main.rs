//! Regenerates `crates/ffi/include/mahsac.h` from the FFI crate's source.
//!
//! Run from the repository root:
//!
//! ```text
//! cargo run --manifest-path tools/headergen/Cargo.toml
//! ```
//!
//! The header is committed, so this only needs to be re-run when the FFI
//! surface changes.

use std::path::PathBuf;

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .and_then(|p| p.parent())
        .expect("tool lives two levels below the repository root")
        .to_path_buf();
    let crate_dir = root.join("crates/ffi");
    let out = crate_dir.join("include/mahsac.h");

    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("cbindgen.toml must parse");
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation failed")
        .write_to_file(&out);
    println!("wrote {}", out.display());
}
