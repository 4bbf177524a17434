//! Chooses the BLAS/LAPACK provider for the dense linear algebra of PSD cones.
//!
//! Reference (netlib) static archives are preferred when found; OpenBLAS is
//! the fallback. `RANDCERT_BLAS=openblas|reference` forces a choice and
//! `RANDCERT_BLAS_DIR` adds a directory holding `libblas.a` and `liblapack.a`.

use std::env;
use std::path::{Path, PathBuf};

const CANDIDATE_ROOTS: &[&str] =
    &["/usr/lib/x86_64-linux-gnu", "/usr/lib/aarch64-linux-gnu", "/usr/lib64", "/usr/lib", "/usr/local/lib"];

fn reference_dirs() -> Option<(PathBuf, PathBuf)> {
    if let Ok(dir) = env::var("RANDCERT_BLAS_DIR") {
        let d = PathBuf::from(dir);
        if d.join("libblas.a").exists() && d.join("liblapack.a").exists() {
            return Some((d.clone(), d));
        }
    }
    CANDIDATE_ROOTS.iter().map(Path::new).find_map(|root| {
        let (blas, lapack) = (root.join("blas"), root.join("lapack"));
        (blas.join("libblas.a").exists() && lapack.join("liblapack.a").exists()).then_some((blas, lapack))
    })
}

fn main() {
    println!("cargo:rerun-if-env-changed=RANDCERT_BLAS");
    println!("cargo:rerun-if-env-changed=RANDCERT_BLAS_DIR");
    let choice = env::var("RANDCERT_BLAS").unwrap_or_default();
    let reference = if choice == "openblas" { None } else { reference_dirs() };
    match reference {
        Some((blas, lapack)) => {
            println!("cargo:rustc-link-search=native={}", lapack.display());
            println!("cargo:rustc-link-search=native={}", blas.display());
            println!("cargo:rustc-link-lib=static=lapack");
            println!("cargo:rustc-link-lib=static=blas");
            println!("cargo:rustc-link-lib=dylib=gfortran");
            println!("cargo:rustc-link-lib=dylib=m");
        }
        None if choice == "reference" => panic!("RANDCERT_BLAS=reference but no libblas.a/liblapack.a found"),
        None => println!("cargo:rustc-link-lib=dylib=openblas"),
    }
}
