//! Closed-form link layer under zero-forcing reception: the beamformer is
//! the pseudo-inverse of the composite channel, inter-user interference is
//! nulled, and the minimum power hitting each user's target spectral
//! efficiency follows in closed form.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::linalg::{pseudo_inverse, CMatrix};
use crate::scenario::ChannelSet;
use crate::Result;

/// Composite users -> BS channel `H^r diag(e^{j theta}) H^u + H^d`.
pub fn composite_channel(channels: &ChannelSet, theta: &DVector<f64>) -> CMatrix {
    let mut scaled = channels.h_u.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        let phase = Complex64::from_polar(1.0, theta[i]);
        for e in row.iter_mut() {
            *e *= phase;
        }
    }
    &channels.h_r * scaled + &channels.h_d
}

/// ZF beamformer and the per-row norms the power allocation needs.
#[derive(Debug, Clone)]
pub struct ZfLink {
    /// Beamformer G, K x M.
    pub g: CMatrix,
    /// Squared Euclidean norm of each beamformer row.
    pub row_norms_sq: DVector<f64>,
}

impl ZfLink {
    /// Builds `G = (H^r Phi H^u + H^d)^+` at the given phase profile.
    pub fn new(channels: &ChannelSet, theta: &DVector<f64>) -> Result<Self> {
        Self::from_composite(&composite_channel(channels, theta))
    }

    pub fn from_composite(composite: &CMatrix) -> Result<Self> {
        let g = pseudo_inverse(composite)?;
        let row_norms_sq =
            DVector::from_iterator(g.nrows(), g.row_iter().map(|r| r.norm_squared()));
        Ok(Self { g, row_norms_sq })
    }

    /// Minimum power for user `k` to reach `r_th` bits/s/Hz:
    /// `p_k = (2^{r_th} - 1) sigma^2 ||g_(k)||^2`.
    pub fn required_powers(&self, sigma2: f64, target_se: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.row_norms_sq.len(), |k, _| {
            (2f64.powf(target_se[k]) - 1.0) * sigma2 * self.row_norms_sq[k]
        })
    }

    /// SINR of user `k` in the interference-free ZF form.
    pub fn sinr_zf(&self, k: usize, power: f64, sigma2: f64) -> f64 {
        power / (sigma2 * self.row_norms_sq[k])
    }

    /// Spectral efficiencies after capping powers at `p_max`: a user whose
    /// uncapped power fits the cap achieves its target exactly; otherwise the
    /// rate is recomputed from the capped-power SINR.
    pub fn achieved_rates(
        &self,
        sigma2: f64,
        target_se: &DVector<f64>,
        p_max: f64,
    ) -> DVector<f64> {
        let p_star = self.required_powers(sigma2, target_se);
        DVector::from_fn(target_se.len(), |k, _| {
            if p_star[k] <= p_max {
                target_se[k]
            } else {
                (1.0 + self.sinr_zf(k, p_max, sigma2)).log2()
            }
        })
    }
}

/// General-form SINR of user `k` for an arbitrary beamformer: signal power
/// over noise plus residual inter-user interference, with symbol powers at
/// their expectations.
pub fn sinr_general(
    g: &CMatrix,
    composite: &CMatrix,
    powers: &DVector<f64>,
    sigma2: f64,
    k: usize,
) -> f64 {
    let row = g.row(k);
    let signal = (row * composite.column(k))[(0, 0)].norm_sqr() * powers[k];
    let mut interference = 0.0;
    for i in 0..composite.ncols() {
        if i != k {
            interference += (row * composite.column(i))[(0, 0)].norm_sqr() * powers[i];
        }
    }
    signal / (sigma2 * row.norm_squared() + interference)
}
