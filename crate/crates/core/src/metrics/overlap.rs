use crate::error::{Error, Result};
use crate::volume::Mask;

fn check_shape(pred: &Mask, reference: &Mask) -> Result<()> {
    if pred.dims() != reference.dims() {
        return Err(Error::Shape { left: pred.dims(), right: reference.dims() });
    }
    Ok(())
}

/// Dice coefficient `2|P∩G| / (|P|+|G|)`.
///
/// Both masks empty counts as perfect agreement (1.0); exactly one empty is 0.0.
pub fn dice(pred: &Mask, reference: &Mask) -> Result<f64> {
    check_shape(pred, reference)?;
    let (p, g) = (pred.count(), reference.count());
    if p + g == 0 {
        return Ok(1.0);
    }
    let inter = pred.intersection_count(reference);
    Ok(2.0 * inter as f64 / (p + g) as f64)
}

/// Volume similarity `1 - ||P|-|G|| / (|P|+|G|)`, with the same empty-mask
/// conventions as [`dice`].
pub fn volume_similarity(pred: &Mask, reference: &Mask) -> Result<f64> {
    check_shape(pred, reference)?;
    Ok(volume_similarity_from_counts(pred.count(), reference.count()))
}

pub(crate) fn volume_similarity_from_counts(p: usize, g: usize) -> f64 {
    if p + g == 0 {
        return 1.0;
    }
    if p == 0 || g == 0 {
        return 0.0;
    }
    1.0 - p.abs_diff(g) as f64 / (p + g) as f64
}

/// Dice and VS from a single pass over both masks.
pub(crate) fn overlap_counts(pred: &Mask, reference: &Mask) -> (usize, usize, usize) {
    let mut p = 0;
    let mut g = 0;
    let mut i = 0;
    for (&a, &b) in pred.data().iter().zip(reference.data()) {
        p += a as usize;
        g += b as usize;
        i += (a && b) as usize;
    }
    (p, g, i)
}
