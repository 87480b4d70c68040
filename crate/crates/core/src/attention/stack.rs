use crate::error::{Error, Result};
use crate::nn::Tensor2;

/// Concatenates each run of `factor` consecutive rows into one row,
/// zero-padding the tail. Output is `⌈T/factor⌉ × (d·factor)`.
pub fn stack_frames(x: &Tensor2, factor: usize) -> Result<Tensor2> {
    if factor == 0 {
        return Err(Error::Invalid("stacking factor must be at least 1".into()));
    }
    let d = x.cols();
    let out_rows = x.rows().div_ceil(factor);
    let mut out = Tensor2::zeros(out_rows, d * factor);
    for t in 0..x.rows() {
        let (i, j) = (t / factor, t % factor);
        out.row_mut(i)[j * d..(j + 1) * d].copy_from_slice(x.row(t));
    }
    Ok(out)
}

/// Inverse of [`stack_frames`]: splits each row into `factor` rows.
pub fn unstack_frames(x: &Tensor2, factor: usize) -> Result<Tensor2> {
    if factor == 0 || x.cols() % factor != 0 {
        return Err(Error::shape("unstack_frames", factor, x.cols()));
    }
    let d = x.cols() / factor;
    Tensor2::from_vec(x.rows() * factor, d, x.data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn factor_one_is_identity() {
        let x = Tensor2::from_vec(3, 2, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(stack_frames(&x, 1).unwrap(), x);
    }

    #[test]
    fn pairs_rows() {
        let x = Tensor2::from_vec(4, 2, (0..8).map(f64::from).collect()).unwrap();
        let s = stack_frames(&x, 2).unwrap();
        assert_eq!(s.shape(), (2, 4));
        assert_eq!(s.row(0), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn tail_is_zero_padded() {
        let x = Tensor2::from_vec(3, 1, alloc::vec![1.0, 2.0, 3.0]).unwrap();
        let s = stack_frames(&x, 2).unwrap();
        assert_eq!(s.row(1), &[3.0, 0.0]);
    }

    proptest! {
        #[test]
        fn unstack_inverts_stack(rows in 1usize..12, cols in 1usize..5, factor in 1usize..5) {
            let x = Tensor2::from_vec(rows, cols, (0..rows * cols).map(|i| i as f64 * 0.5).collect()).unwrap();
            let back = unstack_frames(&stack_frames(&x, factor).unwrap(), factor).unwrap();
            prop_assert_eq!(back.slice_rows(0, rows), x);
            prop_assert!(back.data()[rows * cols..].iter().all(|v| *v == 0.0));
        }
    }
}
