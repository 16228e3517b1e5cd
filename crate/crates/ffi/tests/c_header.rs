//! Compiles and runs a C program against the generated header and the static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "metastab.h"

int main(void) {
    size_t from[] = {0, 1, 1, 2};
    size_t to[] = {1, 0, 2, 1};
    double rates[] = {1.0, 1.0, 1.0, 1.0};
    MetastabChain *chain = NULL;
    if (metastab_chain_new(3, from, to, rates, 4, &chain) != METASTAB_STATUS_OK) return 1;
    double mu[3];
    if (metastab_stationary(chain, mu, 3) != METASTAB_STATUS_OK) return 2;
    size_t a[] = {0}, b[] = {2};
    double cap = 0.0;
    if (metastab_capacity(chain, a, 1, b, 1, &cap) != METASTAB_STATUS_OK) return 3;
    if (fabs(cap - 1.0 / 6.0) > 1e-14) return 4;
    double small[1];
    if (metastab_stationary(chain, small, 1) != METASTAB_STATUS_BUFFER_TOO_SMALL) return 5;
    printf("%s|%.6f\n", metastab_last_error(), mu[1]);
    metastab_chain_free(chain);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libmetastab_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let work = tempfile::tempdir().unwrap();
    let work = work.path();
    let src = work.join("probe.c");
    let bin = work.join("probe");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.starts_with("output buffer holds 1 values, 3 needed|0.333333"),
        "{text}"
    );
}
