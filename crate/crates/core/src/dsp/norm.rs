use super::{FeatureKind, FeatureMatrix};
use crate::{Error, Matrix, Result};

/// Stacks frames `n-left ..= n+right` into row `n`, repeating the first and
/// last frames past the edges.
pub fn splice(f: &FeatureMatrix, left: usize, right: usize) -> FeatureMatrix {
    if left == 0 && right == 0 {
        return f.clone();
    }
    let n = f.n_frames();
    let d = f.dim();
    let width = left + right + 1;
    let src = f.values();
    let mut out = Matrix::zeros(n, d * width);
    for i in 0..n {
        let row = out.row_mut(i);
        for (k, chunk) in row.chunks_exact_mut(d).enumerate() {
            let j = (i + k).saturating_sub(left).min(n - 1);
            chunk.copy_from_slice(src.row(j));
        }
    }
    FeatureMatrix::new(out, FeatureKind::Spliced, f.frame_shift_ms()).expect("splice preserves shape and finiteness")
}

/// Per-utterance mean and variance normalization of every column.
///
/// Columns with (numerically) zero variance become all zeros.
pub fn mvn(f: &FeatureMatrix) -> Result<FeatureMatrix> {
    let n = f.n_frames();
    if n < 2 {
        return Err(Error::TooFewFrames { needed: 2, got: n });
    }
    let d = f.dim();
    let src = f.values();
    let mut out = src.clone();
    for j in 0..d {
        let mean = (0..n).map(|i| src.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| src.get(i, j) - mean).map(|d| d * d).sum::<f64>() / n as f64;
        let std = libm::sqrt(var);
        let constant = std <= 1e-12 * mean.abs().max(1.0);
        for i in 0..n {
            let v = if constant { 0.0 } else { (src.get(i, j) - mean) / std };
            out.set(i, j, v);
        }
    }
    FeatureMatrix::new(out, f.kind(), f.frame_shift_ms())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::new(Matrix::from_rows(rows).unwrap(), FeatureKind::Fbank, 10.0).unwrap()
    }

    #[test]
    fn zero_context_is_identity() {
        let f = fm(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(splice(&f, 0, 0), f);
    }

    #[test]
    fn single_frame_replicates() {
        let f = fm(&[vec![1.0, 2.0, 3.0]]);
        let s = splice(&f, 2, 2);
        assert_eq!(s.dim(), 15);
        assert_eq!(s.kind(), FeatureKind::Spliced);
        let expected: Vec<f64> = [1.0, 2.0, 3.0].repeat(5);
        assert_eq!(s.values().row(0), &expected[..]);
    }

    #[test]
    fn edges_repeat() {
        let f = fm(&[vec![1.0], vec![2.0], vec![3.0]]);
        let s = splice(&f, 1, 2);
        assert_eq!(s.values().row(0), &[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(s.values().row(2), &[2.0, 3.0, 3.0, 3.0]);
    }

    #[test]
    fn mvn_constant_column_to_zero() {
        let f = fm(&[vec![5.0, 1.0], vec![5.0, 2.0], vec![5.0, 3.0]]);
        let g = mvn(&f).unwrap();
        assert!((0..3).all(|i| g.values().get(i, 0) == 0.0));
        let col: Vec<f64> = (0..3).map(|i| g.values().get(i, 1)).collect();
        let s = libm::sqrt(1.5);
        assert!((col[0] + s).abs() < 1e-12 && col[1].abs() < 1e-12 && (col[2] - s).abs() < 1e-12);
    }

    #[test]
    fn mvn_needs_two_frames() {
        let f = fm(&[vec![1.0]]);
        assert_eq!(mvn(&f).unwrap_err(), Error::TooFewFrames { needed: 2, got: 1 });
    }

    #[test]
    fn mvn_standardized_is_fixed_point() {
        let f = fm(&[vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]]);
        let g = mvn(&f).unwrap();
        for i in 0..4 {
            assert!((g.values().get(i, 0) - f.values().get(i, 0)).abs() < 1e-12);
        }
    }
}
