//! Compiles a small C program against the generated header and static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "shflbw.h"

int main(void) {
    float w[4 * 4];
    for (int i = 0; i < 16; i++) w[i] = (float)((i * 5) % 7) - 3.0f;
    float b[4 * 2] = {1, 2, 3, 4, 5, 6, 7, 8};

    ShflbwDense *hw = NULL, *hb = NULL, *c = NULL;
    ShflbwMask *mask = NULL;
    ShflbwSparse *sp = NULL;
    double kept = 0;
    if (shflbw_dense_new(4, 4, w, &hw) != SHFLBW_STATUS_OK) return 10;
    if (shflbw_dense_new(4, 2, b, &hb) != SHFLBW_STATUS_OK) return 11;
    if (shflbw_prune_shflbw(hw, 0.5, 2, 0, &mask, &kept, NULL) != SHFLBW_STATUS_OK) return 12;
    if (shflbw_compress(hw, mask, 2, &sp) != SHFLBW_STATUS_OK) return 13;
    if (shflbw_spmm(sp, hb, NULL, &c) != SHFLBW_STATUS_OK) return 14;

    size_t rows = 0, cols = 0;
    shflbw_dense_shape(c, &rows, &cols);
    if (rows != 4 || cols != 2) return 15;

    if (shflbw_flexibility_log_gain(10, 3, &kept) != SHFLBW_STATUS_BAD_PARAMS) return 16;
    if (shflbw_last_error() == NULL) return 17;

    printf("ok %s\n", shflbw_version());
    shflbw_dense_free(c);
    shflbw_sparse_free(sp);
    shflbw_mask_free(mask);
    shflbw_dense_free(hb);
    shflbw_dense_free(hw);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = target_dir().join("libshflbw_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let work = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let src = work.join("smoke.c");
    let bin = work.join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();

    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());

    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.trim(), format!("ok {}", env!("CARGO_PKG_VERSION")));
}
