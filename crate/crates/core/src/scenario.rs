//! Physical scenario generation: user placement over an annulus around the
//! base station, 3GPP path losses, steering vectors, and synthesis of the
//! three channel matrices (users-RIS, RIS-BS, users-BS) per drop.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{CMatrix, CVector};
use crate::{Error, Result};

/// Site geometry. Distances in meters, positions as (x, y, z).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub user_height: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            bs_position: [0.0, 0.0, 10.0],
            ris_position: [30.0, 20.0, 10.0],
            user_height: 1.5,
            r_min: 10.0,
            r_max: 150.0,
        }
    }
}

/// Service class of a user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserKind {
    Data,
    Voice,
}

/// Per-user service profile: target spectral efficiency, bandwidth, and the
/// reference SAR (W/kg induced per watt transmitted).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UserProfile {
    pub kind: UserKind,
    /// Target spectral efficiency r_th in bits/s/Hz.
    pub target_se: f64,
    pub bandwidth_hz: f64,
    pub sar_ref: f64,
}

impl UserProfile {
    /// Data user: 600 Mb/s over 100 MHz, torso-held device.
    pub fn data() -> Self {
        Self {
            kind: UserKind::Data,
            target_se: 6.0,
            bandwidth_hz: 100e6,
            sar_ref: 41e-4,
        }
    }

    /// Voice user: 13.3 kb/s over 7 kHz, head-held device.
    pub fn voice() -> Self {
        Self {
            kind: UserKind::Voice,
            target_se: 13.3e3 / 7e3,
            bandwidth_hz: 7e3,
            sar_ref: 63e-4,
        }
    }
}

/// Fading and array parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Rician factor of the RIS-side links.
    pub rician_kappa: f64,
    /// Array element spacing in wavelengths.
    pub element_spacing: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            rician_kappa: 10.0,
            element_spacing: 0.5,
        }
    }
}

/// One realization of the three channel matrices.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Users -> RIS, N x K.
    pub h_u: CMatrix,
    /// RIS -> BS, M x N.
    pub h_r: CMatrix,
    /// Users -> BS direct, M x K.
    pub h_d: CMatrix,
}

impl ChannelSet {
    pub fn num_users(&self) -> usize {
        self.h_u.ncols()
    }
    pub fn num_ris_elements(&self) -> usize {
        self.h_u.nrows()
    }
    pub fn num_bs_antennas(&self) -> usize {
        self.h_r.nrows()
    }

    /// Copy with the RIS link removed (composite channel reduces to the
    /// direct link), used by the no-RIS baseline.
    pub fn without_ris(&self) -> Self {
        Self {
            h_u: self.h_u.clone(),
            h_r: CMatrix::zeros(self.h_r.nrows(), self.h_r.ncols()),
            h_d: self.h_d.clone(),
        }
    }

    /// Leading submatrices for smaller arrays. A valid smaller-system draw:
    /// steering-vector entries and scatter terms of the leading elements do
    /// not depend on the trailing ones, so truncation keeps realizations
    /// paired across array sizes.
    pub fn truncated(&self, m: usize, n: usize) -> Result<Self> {
        if m > self.num_bs_antennas() || n > self.num_ris_elements() {
            return Err(Error::Dimension(format!(
                "cannot truncate ({}, {}) channels to ({m}, {n})",
                self.num_bs_antennas(),
                self.num_ris_elements()
            )));
        }
        Ok(Self {
            h_u: self.h_u.rows(0, n).into_owned(),
            h_r: self.h_r.view((0, 0), (m, n)).into_owned(),
            h_d: self.h_d.rows(0, m).into_owned(),
        })
    }
}

/// Link visibility class for path loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Los,
    Nlos,
}

/// 3GPP path loss in dB at distance `d` meters.
pub fn pathloss_db(kind: LinkKind, d: f64) -> f64 {
    debug_assert!(d > 0.0);
    match kind {
        LinkKind::Los => 35.6 + 22.0 * d.log10(),
        LinkKind::Nlos => 32.6 + 36.7 * d.log10(),
    }
}

/// Linear amplitude factor applied to channel entries for a dB loss.
pub fn pathloss_amplitude(kind: LinkKind, d: f64) -> f64 {
    10f64.powf(-pathloss_db(kind, d) / 20.0)
}

/// Uniform-linear-array steering vector: entry `i = exp(j 2 pi s i sin(angle))`.
pub fn steering_vector(n_elements: usize, angle: f64, spacing: f64) -> CVector {
    let phase_step = 2.0 * std::f64::consts::PI * spacing * angle.sin();
    CVector::from_fn(n_elements, |i, _| {
        Complex64::from_polar(1.0, phase_step * i as f64)
    })
}

/// Draws `k` user positions uniformly over the annulus of radii
/// `[r_min, r_max]` centered at the BS, at the configured user height.
pub fn place_users(geometry: &Geometry, k: usize, rng: &mut impl Rng) -> Vec<[f64; 3]> {
    let r2_min = geometry.r_min * geometry.r_min;
    let r2_max = geometry.r_max * geometry.r_max;
    (0..k)
        .map(|_| {
            let r = (r2_min + rng.gen::<f64>() * (r2_max - r2_min)).sqrt();
            let phi = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
            [
                geometry.bs_position[0] + r * phi.cos(),
                geometry.bs_position[1] + r * phi.sin(),
                geometry.user_height,
            ]
        })
        .collect()
}

/// Draws user profiles with the 75% data / 25% voice mix.
pub fn draw_profiles(k: usize, rng: &mut impl Rng) -> Vec<UserProfile> {
    (0..k)
        .map(|_| {
            if rng.gen::<f64>() < 0.75 {
                UserProfile::data()
            } else {
                UserProfile::voice()
            }
        })
        .collect()
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Horizontal azimuth of `to` as seen from `from`.
fn azimuth(from: [f64; 3], to: [f64; 3]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn standard_complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Synthesizes the channel triple for given user positions.
///
/// RIS-side links are Rician with factor kappa around geometry-derived
/// steering vectors; the direct users-BS link is Rayleigh. Path loss enters
/// as the linear amplitude `10^(-PL_dB/20)` on every entry.
pub fn synthesize_channels(
    geometry: &Geometry,
    positions: &[[f64; 3]],
    params: &ChannelParams,
    m: usize,
    n: usize,
    rng: &mut impl Rng,
) -> Result<ChannelSet> {
    let k = positions.len();
    if n < k || m < k {
        return Err(Error::Dimension(format!(
            "need N >= K and M >= K, got N={n}, M={m}, K={k}"
        )));
    }
    let kappa = params.rician_kappa;
    let los_w = (kappa / (kappa + 1.0)).sqrt();
    let scatter_w = (1.0 / (kappa + 1.0)).sqrt();

    // RIS -> BS: rank-1 LOS outer product of the two array responses.
    let d_rb = distance(geometry.ris_position, geometry.bs_position);
    let pl_rb = pathloss_amplitude(LinkKind::Los, d_rb);
    let a_m = steering_vector(m, azimuth(geometry.bs_position, geometry.ris_position), params.element_spacing);
    let a_n = steering_vector(n, azimuth(geometry.ris_position, geometry.bs_position), params.element_spacing);
    let mut h_r = CMatrix::from_fn(m, n, |r, c| los_w * a_m[r] * a_n[c]);
    for entry in h_r.iter_mut() {
        *entry = (*entry + scatter_w * standard_complex_gaussian(rng)) * pl_rb;
    }

    // Users -> RIS: per-user Rician column around the RIS steering vector.
    let mut h_u = CMatrix::zeros(n, k);
    for (j, pos) in positions.iter().enumerate() {
        let d_ur = distance(*pos, geometry.ris_position);
        let pl = pathloss_amplitude(LinkKind::Los, d_ur);
        let a_k = steering_vector(n, azimuth(geometry.ris_position, *pos), params.element_spacing);
        for i in 0..n {
            h_u[(i, j)] = (los_w * a_k[i] + scatter_w * standard_complex_gaussian(rng)) * pl;
        }
    }

    // Users -> BS direct: Rayleigh.
    let mut h_d = CMatrix::zeros(m, k);
    for (j, pos) in positions.iter().enumerate() {
        let d_ub = distance(*pos, geometry.bs_position);
        let pl = pathloss_amplitude(LinkKind::Nlos, d_ub);
        for i in 0..m {
            h_d[(i, j)] = standard_complex_gaussian(rng) * pl;
        }
    }

    Ok(ChannelSet { h_u, h_r, h_d })
}

/// One complete scenario draw: positions, profiles, channels.
#[derive(Debug, Clone)]
pub struct ScenarioDraw {
    pub positions: Vec<[f64; 3]>,
    pub profiles: Vec<UserProfile>,
    pub channels: ChannelSet,
}

impl ScenarioDraw {
    pub fn draw(
        geometry: &Geometry,
        params: &ChannelParams,
        k: usize,
        m: usize,
        n: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let positions = place_users(geometry, k, rng);
        let profiles = draw_profiles(k, rng);
        let channels = synthesize_channels(geometry, &positions, params, m, n, rng)?;
        Ok(Self {
            positions,
            profiles,
            channels,
        })
    }

    /// Same users on smaller arrays, see [`ChannelSet::truncated`].
    pub fn truncated(&self, m: usize, n: usize) -> Result<Self> {
        Ok(Self {
            positions: self.positions.clone(),
            profiles: self.profiles.clone(),
            channels: self.channels.truncated(m, n)?,
        })
    }

    pub fn sar_refs(&self) -> DVector<f64> {
        DVector::from_iterator(self.profiles.len(), self.profiles.iter().map(|p| p.sar_ref))
    }

    pub fn target_se(&self) -> DVector<f64> {
        DVector::from_iterator(self.profiles.len(), self.profiles.iter().map(|p| p.target_se))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pathloss_reference_points() {
        assert_relative_eq!(pathloss_db(LinkKind::Los, 10.0), 57.6, epsilon = 1e-12);
        assert_relative_eq!(pathloss_db(LinkKind::Nlos, 10.0), 69.3, epsilon = 1e-12);
        assert_relative_eq!(pathloss_db(LinkKind::Los, 100.0), 79.6, epsilon = 1e-12);
    }

    #[test]
    fn placement_radii_in_annulus() {
        let geom = Geometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for pos in place_users(&geom, 500, &mut rng) {
            let r = (pos[0].powi(2) + pos[1].powi(2)).sqrt();
            assert!(r >= geom.r_min - 1e-9 && r <= geom.r_max + 1e-9);
            assert_eq!(pos[2], geom.user_height);
        }
    }

    #[test]
    fn placement_degenerate_annulus() {
        let geom = Geometry {
            r_min: 150.0 - 1e-9,
            ..Geometry::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for pos in place_users(&geom, 100, &mut rng) {
            let r = (pos[0].powi(2) + pos[1].powi(2)).sqrt();
            assert_relative_eq!(r, 150.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn placement_radius_cdf_is_area_uniform() {
        let geom = Geometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut radii: Vec<f64> = place_users(&geom, 100_000, &mut rng)
            .iter()
            .map(|p| (p[0].powi(2) + p[1].powi(2)).sqrt())
            .collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (r2min, r2max) = (geom.r_min.powi(2), geom.r_max.powi(2));
        let n = radii.len() as f64;
        let ks = radii
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let model = (r * r - r2min) / (r2max - r2min);
                let emp = (i + 1) as f64 / n;
                (model - emp).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(ks < 0.01, "KS statistic {ks}");
    }

    #[test]
    fn steering_broadside_and_endfire() {
        let v = steering_vector(4, 0.0, 0.5);
        for e in v.iter() {
            assert_relative_eq!(e.re, 1.0, epsilon = 1e-15);
            assert_relative_eq!(e.im, 0.0, epsilon = 1e-15);
        }
        let v = steering_vector(2, std::f64::consts::FRAC_PI_2, 0.5);
        assert_relative_eq!(v[1].re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(v[1].im, 0.0, epsilon = 1e-12);
        let v = steering_vector(8, 0.7, 0.5);
        for e in v.iter() {
            assert_relative_eq!(e.norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn channels_deterministic_under_seed() {
        let geom = Geometry::default();
        let params = ChannelParams::default();
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ScenarioDraw::draw(&geom, &params, 3, 5, 8, &mut rng).unwrap()
        };
        let (a, b) = (draw(99), draw(99));
        assert_eq!(a.channels.h_u, b.channels.h_u);
        assert_eq!(a.channels.h_r, b.channels.h_r);
        assert_eq!(a.channels.h_d, b.channels.h_d);
        assert_eq!(a.positions, b.positions);
    }

    #[test]
    fn infinite_kappa_gives_pure_los_rank_one() {
        let geom = Geometry::default();
        let params = ChannelParams {
            rician_kappa: 1e18,
            ..ChannelParams::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let positions = place_users(&geom, 2, &mut rng);
        let ch = synthesize_channels(&geom, &positions, &params, 4, 6, &mut rng).unwrap();
        let sv = ch.h_r.clone().svd(false, false).singular_values;
        for i in 1..sv.len() {
            assert!(sv[i] < 1e-8 * sv[0]);
        }
    }

    #[test]
    fn zero_kappa_entry_variance_matches_pathloss() {
        let geom = Geometry::default();
        let params = ChannelParams {
            rician_kappa: 0.0,
            ..ChannelParams::default()
        };
        let d_rb = 36.05551275463989; // RIS at (30,20), same height as BS
        let pl = pathloss_amplitude(LinkKind::Los, d_rb);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let positions = place_users(&geom, 1, &mut rng);
        let mut acc = 0.0;
        let mut count = 0usize;
        for _ in 0..300 {
            let ch = synthesize_channels(&geom, &positions, &params, 4, 8, &mut rng).unwrap();
            acc += ch.h_r.iter().map(|e| e.norm_sqr()).sum::<f64>();
            count += ch.h_r.len();
        }
        let var = acc / count as f64;
        assert!((var / (pl * pl) - 1.0).abs() < 0.05, "var ratio {}", var / (pl * pl));
    }

    #[test]
    fn direct_channel_mean_energy() {
        // E||h_d_k||^2 = M * PL_lin^2 within 5% over many draws
        let geom = Geometry::default();
        let params = ChannelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let positions = vec![[50.0, 0.0, geom.user_height]];
        let d = distance(positions[0], geom.bs_position);
        let pl = pathloss_amplitude(LinkKind::Nlos, d);
        let m = 4;
        let mut acc = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let ch = synthesize_channels(&geom, &positions, &params, m, 4, &mut rng).unwrap();
            acc += ch.h_d.column(0).iter().map(|e| e.norm_sqr()).sum::<f64>();
        }
        let mean = acc / draws as f64;
        let expect = m as f64 * pl * pl;
        assert!((mean / expect - 1.0).abs() < 0.05, "ratio {}", mean / expect);
    }

    #[test]
    fn rejects_undersized_arrays() {
        let geom = Geometry::default();
        let params = ChannelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let positions = place_users(&geom, 4, &mut rng);
        assert!(synthesize_channels(&geom, &positions, &params, 3, 8, &mut rng).is_err());
        assert!(synthesize_channels(&geom, &positions, &params, 8, 3, &mut rng).is_err());
    }

    #[test]
    fn truncation_takes_leading_blocks() {
        let geom = Geometry::default();
        let params = ChannelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draw = ScenarioDraw::draw(&geom, &params, 2, 6, 10, &mut rng).unwrap();
        let sub = draw.truncated(4, 7).unwrap();
        assert_eq!(sub.channels.h_u, draw.channels.h_u.rows(0, 7).into_owned());
        assert_eq!(sub.channels.h_d, draw.channels.h_d.rows(0, 4).into_owned());
        assert_eq!(
            sub.channels.h_r,
            draw.channels.h_r.view((0, 0), (4, 7)).into_owned()
        );
        assert_eq!(sub.positions, draw.positions);
        assert!(draw.truncated(8, 7).is_err());
        assert!(draw.truncated(4, 11).is_err());
    }

    #[test]
    fn profile_mix_is_three_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let profiles = draw_profiles(100_000, &mut rng);
        let data = profiles.iter().filter(|p| p.kind == UserKind::Data).count();
        let frac = data as f64 / profiles.len() as f64;
        assert!((frac - 0.75).abs() < 0.01, "data fraction {frac}");
    }
}
