// ndarray-linalg is built without a bundled LAPACK backend; link the system
// OpenBLAS, which provides both the CBLAS and LAPACK symbols.
fn main() {
    println!("cargo:rustc-link-lib=openblas");
}
