//! Average referencing.

use ndarray::Array2;
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("average reference needs at least 2 good channels, found {0}")]
    TooFewGoodChannels(usize),
}

/// Subtracts the per-sample mean over good channels from every channel.
///
/// Bad channels are excluded from the mean but still re-referenced.
pub fn average_reference<S: Scalar>(
    x: &Array2<S>,
    good_mask: &[bool],
) -> Result<Array2<S>, ReferenceError> {
    assert_eq!(x.nrows(), good_mask.len(), "mask length");
    let n_good = good_mask.iter().filter(|&&g| g).count();
    if n_good < 2 {
        return Err(ReferenceError::TooFewGoodChannels(n_good));
    }
    let inv = S::one() / S::from_usize(n_good).unwrap();
    let mut out = x.clone();
    for t in 0..x.ncols() {
        let mut mean = S::zero();
        for (c, &good) in good_mask.iter().enumerate() {
            if good {
                mean = mean + x[[c, t]];
            }
        }
        mean = mean * inv;
        for c in 0..x.nrows() {
            out[[c, t]] = out[[c, t]] - mean;
        }
    }
    Ok(out)
}
