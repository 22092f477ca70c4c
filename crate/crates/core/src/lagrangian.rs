//! The weighted effective channel and the Lagrangian of the relaxed design
//! problem, with its analytic gradient and Hessian in the RIS phases.
//!
//! With per-user weights `a_k = (SAR_ref_k + lambda_k) * sigma_tilde_k^2`,
//! weighted channels `Hu_bar = H^u A^{-1/2}`, `Hd_bar = H^d A^{-1/2}`, and
//! `Q = H^r Phi Hu_bar + Hd_bar`, the Lagrangian collapses to
//! `tr((Q^H Q)^{-1}) - p_max ||lambda||_1`. Both first and second
//! derivatives in the phases reduce to trace contractions against rank-one
//! perturbations of `Q`, giving O(NMK) gradient and O(N^2 MK) Hessian cost.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::linalg::{gram_inverse, CMatrix};
use crate::scenario::ChannelSet;
use crate::zf_link::ZfLink;
use crate::{Error, Result};

/// Weighted problem data at a fixed (theta, lambda) point, with the factors
/// the gradient and Hessian reuse.
#[derive(Debug, Clone)]
pub struct WeightedProblem {
    /// Per-user weights a_k > 0.
    pub a: DVector<f64>,
    /// H^u A^{-1/2}, N x K.
    pub h_u_bar: CMatrix,
    /// H^d A^{-1/2}, M x K.
    pub h_d_bar: CMatrix,
    /// Weighted composite channel Q = H^r Phi Hu_bar + Hd_bar, M x K.
    pub q: CMatrix,
    /// T = (Q^H Q)^{-1}, K x K Hermitian positive definite.
    pub t: CMatrix,
    /// Per-user noise scaling (2^{r_th} - 1) sigma^2.
    pub sigma_tilde_sq: DVector<f64>,
    pub p_max: f64,
    h_r: CMatrix,
    /// Cached e^{j theta_i} factors.
    phase_factors: Vec<Complex64>,
}

impl WeightedProblem {
    /// Builds Q and T at the given phases and multipliers.
    pub fn build(
        channels: &ChannelSet,
        theta: &DVector<f64>,
        lambda: &DVector<f64>,
        sar_refs: &DVector<f64>,
        sigma2: f64,
        target_se: &DVector<f64>,
        p_max: f64,
    ) -> Result<Self> {
        let k = channels.num_users();
        let n = channels.num_ris_elements();
        if theta.len() != n {
            return Err(Error::LengthMismatch {
                left: theta.len(),
                right: n,
            });
        }
        if lambda.len() != k || sar_refs.len() != k || target_se.len() != k {
            return Err(Error::LengthMismatch {
                left: lambda.len(),
                right: k,
            });
        }
        let sigma_tilde_sq =
            DVector::from_fn(k, |i, _| (2f64.powf(target_se[i]) - 1.0) * sigma2);
        let a = DVector::from_fn(k, |i, _| (sar_refs[i] + lambda[i]) * sigma_tilde_sq[i]);
        if a.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("all weights a_k must be positive".into()));
        }
        let mut h_u_bar = channels.h_u.clone();
        let mut h_d_bar = channels.h_d.clone();
        for j in 0..k {
            let s = Complex64::new(1.0 / a[j].sqrt(), 0.0);
            h_u_bar.column_mut(j).scale_mut(s.re);
            h_d_bar.column_mut(j).scale_mut(s.re);
        }
        let phase_factors: Vec<Complex64> =
            theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let mut phased = h_u_bar.clone();
        for (i, mut row) in phased.row_iter_mut().enumerate() {
            for e in row.iter_mut() {
                *e *= phase_factors[i];
            }
        }
        let q = &channels.h_r * phased + &h_d_bar;
        let t = gram_inverse(&q)?;
        Ok(Self {
            a,
            h_u_bar,
            h_d_bar,
            q,
            t,
            sigma_tilde_sq,
            p_max,
            h_r: channels.h_r.clone(),
            phase_factors,
        })
    }

    /// Lagrangian value `tr(T) - p_max ||lambda||_1`.
    pub fn lagrangian_value(&self, lambda: &DVector<f64>) -> f64 {
        self.t.trace().re - self.p_max * lambda.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Uncapped minimum powers at the current phases, recovered from the
    /// diagonal of T: `p_k = sigma_tilde_k^2 T_kk / a_k`.
    pub fn powers(&self) -> DVector<f64> {
        DVector::from_fn(self.a.len(), |k, _| {
            self.sigma_tilde_sq[k] * self.t[(k, k)].re / self.a[k]
        })
    }

    /// Analytic gradient in the phases: entry `i` is
    /// `Re{ tr( j e^{j theta_i} (h^r_i x hu_bar_(i)) (dL/dQ)^H ) }` with
    /// `dL/dQ = -2 Q T^2`.
    pub fn grad_theta(&self) -> DVector<f64> {
        let t2 = &self.t * &self.t;
        let dldq = (&self.q * t2).scale(-2.0);
        // E[i, k] = (H^r)^H dL/dQ, so row i collapses the trace contraction
        let e = self.h_r.adjoint() * dldq;
        let n = self.h_u_bar.nrows();
        let k = self.h_u_bar.ncols();
        DVector::from_fn(n, |i, _| {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..k {
                acc += self.h_u_bar[(i, c)] * e[(i, c)].conj();
            }
            (Complex64::i() * self.phase_factors[i] * acc).re
        })
    }

    /// Gradient in the multipliers: `p_k(theta) - p_max` per user.
    pub fn grad_lambda(&self) -> DVector<f64> {
        self.powers().map(|p| p - self.p_max)
    }

    /// Analytic Hessian in the phases, N x N real symmetric.
    ///
    /// Row `v` contracts every rank-one phase perturbation `S_u` against
    /// `d(dL/dtheta_v)/dQ = R T^2 + 2 Q (T^2 W T + T W T^2)` where
    /// `R = -2 S_v` and `W = S_v^H Q + Q^H S_v`; the diagonal picks up the
    /// extra `Re tr(j R T^2 Q^H)` from the phase factor itself.
    pub fn hessian_theta(&self) -> DMatrix<f64> {
        let n = self.h_u_bar.nrows();
        let k = self.h_u_bar.ncols();
        let t2 = &self.t * &self.t;
        let qh = self.q.adjoint();

        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|v| {
                let c_v = Complex64::i() * self.phase_factors[v];
                // S_v = c_v * u_v w_v^T with u_v the v-th column of H^r and
                // w_v the v-th row of Hu_bar
                let u_v = self.h_r.column(v).clone_owned();
                let w_v = self.h_u_bar.row(v).clone_owned();

                // W = S_v^H Q + Q^H S_v (rank-2 Hermitian K x K)
                let uhq = u_v.adjoint() * &self.q; // 1 x K
                let svhq = (w_v.adjoint() * uhq).scale(1.0) * c_v.conj(); // K x K
                let w_mat = &svhq + svhq.adjoint();

                // D_v = R T^2 + 2 Q (T^2 W T + T W T^2)
                let s_v = (&u_v * &w_v).scale(1.0) * c_v;
                let r = s_v.scale(-2.0);
                let inner = &t2 * &w_mat * &self.t + &self.t * &w_mat * &t2;
                let d_v = &r * &t2 + (&self.q * inner).scale(2.0);

                // psi_{v,u} = c_u * sum_k hu_bar[u,k] conj(F_v[u,k])
                let f_v = self.h_r.adjoint() * &d_v; // N x K
                let mut row = vec![0.0f64; n];
                for u in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for c in 0..k {
                        acc += self.h_u_bar[(u, c)] * f_v[(u, c)].conj();
                    }
                    row[u] = (Complex64::i() * self.phase_factors[u] * acc).re;
                }
                // diagonal extra: Re tr(j R T^2 Q^H) with the rank-one R
                let t2qh_u = &t2 * (&qh * &u_v); // K x 1
                let tr = (&w_v * t2qh_u)[(0, 0)];
                row[v] += (Complex64::i() * (-2.0) * c_v * tr).re;
                row
            })
            .collect();

        DMatrix::from_fn(n, n, |r, c| rows[r][c])
    }
}

/// Lagrangian evaluated through the ZF beamformer route,
/// `sum_k a_k ||g_(k)||^2 - p_max ||lambda||_1`. Independent of the
/// `tr(T)` path; the two must agree.
pub fn lagrangian_via_beamformer(
    channels: &ChannelSet,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
    sar_refs: &DVector<f64>,
    sigma2: f64,
    target_se: &DVector<f64>,
    p_max: f64,
) -> Result<f64> {
    let link = ZfLink::new(channels, theta)?;
    let k = channels.num_users();
    let mut value = 0.0;
    for i in 0..k {
        let sigma_tilde_sq = (2f64.powf(target_se[i]) - 1.0) * sigma2;
        let a_i = (sar_refs[i] + lambda[i]) * sigma_tilde_sq;
        value += a_i * link.row_norms_sq[i];
    }
    Ok(value - p_max * lambda.iter().map(|v| v.abs()).sum::<f64>())
}
