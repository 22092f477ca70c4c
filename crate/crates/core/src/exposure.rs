//! Exposure metrics: the population exposure index and the rate-satisfaction
//! ratio that quantifies feasibility under the per-device power cap.

use nalgebra::DVector;

use crate::{Error, Result};

/// Exposure index in W/kg: sum over users of reference SAR times transmit
/// power.
pub fn exposure_index(sar_refs: &DVector<f64>, powers: &DVector<f64>) -> Result<f64> {
    if sar_refs.len() != powers.len() {
        return Err(Error::LengthMismatch {
            left: sar_refs.len(),
            right: powers.len(),
        });
    }
    Ok(sar_refs.dot(powers))
}

/// Ratio of total achieved spectral efficiency to total target spectral
/// efficiency.
pub fn rate_satisfaction(achieved: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    if achieved.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: achieved.len(),
            right: targets.len(),
        });
    }
    Ok(achieved.sum() / targets.sum())
}
