//! Scale-invariant signal-to-distortion ratio.

use crate::error::{Error, Result};

/// Cap applied when the residual is numerically zero.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// SI-SDR in dB between an estimate and a reference of equal length.
///
/// The reference is rescaled by the least-squares projection coefficient
/// before computing the energy ratio, so any positive or negative scaling of
/// the estimate leaves the result unchanged. Perfect matches cap at
/// [`SI_SDR_CAP_DB`].
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            context: "si_sdr lengths",
            expected: reference.len(),
            got: estimate.len(),
        });
    }
    let ref_energy: f64 = reference.iter().map(|s| s * s).sum();
    if ref_energy <= 0.0 {
        return Err(Error::ZeroReference);
    }
    let dot: f64 = estimate.iter().zip(reference).map(|(e, r)| e * r).sum();
    let gain = dot / ref_energy;
    let target_energy = gain * gain * ref_energy;
    let residual_energy: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| {
            let d = e - gain * r;
            d * d
        })
        .sum();
    if residual_energy <= 0.0 || target_energy / residual_energy >= 1e10 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target_energy / residual_energy).log10()).min(SI_SDR_CAP_DB))
}
