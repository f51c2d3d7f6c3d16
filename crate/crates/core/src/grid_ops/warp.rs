use super::{BoolMask, BorderPolicy, ConfidenceMap, CorrespondenceField, DenseMap};
use crate::error::{shape, Result};

/// Fill value for pixels without a confident correspondence.
pub const WHITE: f64 = 255.0;

/// Reconstructs the source view by sampling `support` at the correspondence
/// of every source pixel. Pixels with an invalid correspondence, confidence
/// below `conf_threshold`, or a lookup outside the support image are filled
/// with [`WHITE`].
pub fn warp_reconstruct(
    support: &DenseMap,
    field: &CorrespondenceField,
    confidence: &ConfidenceMap,
    conf_threshold: f64,
) -> Result<DenseMap> {
    if field.height() != confidence.height() || field.width() != confidence.width() {
        return Err(shape("correspondence field and confidence differ in size"));
    }
    if support.is_empty() {
        return Err(crate::Error::EmptyMap);
    }
    let mut out = DenseMap::filled(field.height(), field.width(), support.channels(), WHITE);
    for i in 0..field.height() {
        for j in 0..field.width() {
            let Some(q) = field.get(i, j) else { continue };
            if confidence.get(i, j) < conf_threshold {
                continue;
            }
            let px = out.pixel_mut(i, j);
            if !support.sample_into(q.x, q.y, BorderPolicy::Invalid, px) {
                px.fill(WHITE);
            }
        }
    }
    Ok(out)
}

/// Forward-backward consistency: a source pixel passes when the backward
/// field, sampled bilinearly at its forward correspondence, lands within
/// `tau_px` of where it started.
pub fn fb_consistency(
    fwd: &CorrespondenceField,
    bwd: &CorrespondenceField,
    tau_px: f64,
) -> BoolMask {
    BoolMask::from_fn(fwd.height(), fwd.width(), |i, j| {
        let Some(q) = fwd.get(i, j) else { return false };
        match bwd.sample(q.x, q.y) {
            Some(back) => {
                let dx = back.x - j as f64;
                let dy = back.y - i as f64;
                (dx * dx + dy * dy).sqrt() <= tau_px
            }
            None => false,
        }
    })
}
