//! Finite-difference validation of the analytic derivatives. Used by the
//! `gradcheck` CLI subcommand; the test suites carry their own independent
//! copies of the same oracles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use num_complex::Complex64;

use crate::lagrangian::WeightedProblem;
use crate::linalg::CMatrix;
use crate::scenario::ChannelSet;
use crate::Result;

/// Everything that pins one derivative-check instance.
#[derive(Debug, Clone)]
pub struct CheckInstance {
    pub channels: ChannelSet,
    pub theta: DVector<f64>,
    pub lambda: DVector<f64>,
    pub sar_refs: DVector<f64>,
    pub target_se: DVector<f64>,
    pub sigma2: f64,
    pub p_max: f64,
}

impl CheckInstance {
    /// Random instance with i.i.d. complex Gaussian-ish channels; sizes
    /// follow the acceptance setting (K=3, N=6, M=4) by default.
    pub fn random(rng: &mut impl Rng, m: usize, n: usize, k: usize) -> Self {
        let c = |rng: &mut dyn rand::RngCore| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        };
        Self {
            channels: ChannelSet {
                h_u: CMatrix::from_fn(n, k, |_, _| c(rng)),
                h_r: CMatrix::from_fn(m, n, |_, _| c(rng)),
                h_d: CMatrix::from_fn(m, k, |_, _| c(rng)),
            },
            theta: DVector::from_fn(n, |_, _| rng.gen::<f64>() * std::f64::consts::TAU),
            lambda: DVector::from_fn(k, |_, _| rng.gen::<f64>()),
            sar_refs: DVector::from_fn(k, |_, _| 1e-3 + rng.gen::<f64>() * 5e-3),
            target_se: DVector::from_fn(k, |_, _| 1.0 + rng.gen::<f64>() * 4.0),
            sigma2: 0.2 + rng.gen::<f64>(),
            p_max: 0.2,
        }
    }

    pub fn weighted_at(&self, theta: &DVector<f64>) -> Result<WeightedProblem> {
        WeightedProblem::build(
            &self.channels,
            theta,
            &self.lambda,
            &self.sar_refs,
            self.sigma2,
            &self.target_se,
            self.p_max,
        )
    }

    pub fn value_at(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.weighted_at(theta)?.lagrangian_value(&self.lambda))
    }
}

/// Central finite differences of the Lagrangian value in theta.
pub fn fd_grad_theta(instance: &CheckInstance, step: f64) -> Result<DVector<f64>> {
    let n = instance.theta.len();
    let mut grad = DVector::zeros(n);
    for i in 0..n {
        let mut plus = instance.theta.clone();
        let mut minus = instance.theta.clone();
        plus[i] += step;
        minus[i] -= step;
        grad[i] = (instance.value_at(&plus)? - instance.value_at(&minus)?) / (2.0 * step);
    }
    Ok(grad)
}

/// Central finite differences of the analytic gradient in theta.
pub fn fd_hessian_theta(instance: &CheckInstance, step: f64) -> Result<DMatrix<f64>> {
    let n = instance.theta.len();
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut plus = instance.theta.clone();
        let mut minus = instance.theta.clone();
        plus[i] += step;
        minus[i] -= step;
        let gp = instance.weighted_at(&plus)?.grad_theta();
        let gm = instance.weighted_at(&minus)?.grad_theta();
        let col = (gp - gm) / (2.0 * step);
        hess.column_mut(i).copy_from(&col);
    }
    Ok(hess)
}

/// Max relative error with an absolute floor on the denominator.
pub fn max_rel_error(analytic: &[f64], reference: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(reference.iter())
        .map(|(a, r)| (a - r).abs() / r.abs().max(a.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Summary of one derivative check.
#[derive(Debug, Clone, Copy)]
pub struct CheckReport {
    pub grad_max_rel_err: f64,
    pub hessian_max_rel_err: f64,
    pub hessian_asymmetry: f64,
}

/// Runs gradient and Hessian checks over random instances; prints one line
/// per instance and returns the worst-case report.
pub fn run_gradcheck(instances: usize, seed: u64, verbose: bool) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = CheckReport {
        grad_max_rel_err: 0.0,
        hessian_max_rel_err: 0.0,
        hessian_asymmetry: 0.0,
    };
    for idx in 0..instances {
        let instance = CheckInstance::random(&mut rng, 4, 6, 3);
        let wp = instance.weighted_at(&instance.theta)?;
        let grad = wp.grad_theta();
        let grad_fd = fd_grad_theta(&instance, 1e-6)?;
        let ge = max_rel_error(grad.as_slice(), grad_fd.as_slice(), 1e-10);

        let hess = wp.hessian_theta();
        let hess_fd = fd_hessian_theta(&instance, 1e-5)?;
        let he = max_rel_error(hess.as_slice(), hess_fd.as_slice(), 1e-8);
        let asym = (&hess - hess.transpose()).norm() / hess.norm();

        if verbose {
            println!(
                "instance {idx:2}: grad rel err {ge:.3e}, hessian rel err {he:.3e}, asymmetry {asym:.3e}"
            );
        }
        worst.grad_max_rel_err = worst.grad_max_rel_err.max(ge);
        worst.hessian_max_rel_err = worst.hessian_max_rel_err.max(he);
        worst.hessian_asymmetry = worst.hessian_asymmetry.max(asym);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradcheck_passes_on_random_instances() {
        let report = run_gradcheck(5, 42, false).unwrap();
        assert!(report.grad_max_rel_err < 1e-6, "{report:?}");
        assert!(report.hessian_max_rel_err < 1e-4, "{report:?}");
        assert!(report.hessian_asymmetry < 1e-9, "{report:?}");
    }
}
