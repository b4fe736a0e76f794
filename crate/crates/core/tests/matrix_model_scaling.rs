use dostrace::abstractverify::{matrix_model_main_theorem, MatrixSpec};

#[test]
fn free_laplacian_gap_shrinks_when_size_doubles() {
    let small = matrix_model_main_theorem(4096, MatrixSpec::FreeLaplacian, 1.0).unwrap();
    let large = matrix_model_main_theorem(8192, MatrixSpec::FreeLaplacian, 1.0).unwrap();
    eprintln!("gap 4096 = {:e}, gap 8192 = {:e}", small.gap, large.gap);
    assert!(large.gap < small.gap);
}
