//! Phase optimization: the dual gradient descent loop with the optimal-step
//! sub-algorithm, plus the non-optimized phase strategies used as baselines.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::exposure::exposure_index;
use crate::lagrangian::WeightedProblem;
use crate::scenario::ChannelSet;
use crate::Result;

/// Tunables of the dual gradient descent loop.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Multiplier step scale; beta = gamma * mean reference SAR.
    pub gamma: f64,
    pub max_iters: usize,
    /// Relative exposure-index change below which (for 3 consecutive
    /// iterations) the loop stops.
    pub ei_rel_tol: f64,
    /// Per-device transmit power cap in watts.
    pub p_max: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            max_iters: 100,
            ei_rel_tol: 1e-5,
            p_max: 0.2,
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Exposure index at the uncapped minimum powers.
    pub ei: f64,
    pub grad_inf_norm: f64,
    pub alpha_star: f64,
    pub active_multipliers: usize,
}

/// Final solver output.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub theta: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Powers after the final cap at p_max.
    pub powers: DVector<f64>,
    /// Exposure index at the capped powers.
    pub ei: f64,
    pub iterations: usize,
    pub trace: Vec<IterationRecord>,
}

/// Problem data fixed over one optimization run.
#[derive(Debug, Clone)]
pub struct ProblemContext<'a> {
    pub channels: &'a ChannelSet,
    pub sar_refs: DVector<f64>,
    pub target_se: DVector<f64>,
    pub sigma2: f64,
    pub p_max: f64,
}

impl<'a> ProblemContext<'a> {
    fn weighted(&self, theta: &DVector<f64>, lambda: &DVector<f64>) -> Result<WeightedProblem> {
        WeightedProblem::build(
            self.channels,
            theta,
            lambda,
            &self.sar_refs,
            self.sigma2,
            &self.target_se,
            self.p_max,
        )
    }

    fn uncapped_ei(&self, wp: &WeightedProblem) -> f64 {
        exposure_index(&self.sar_refs, &wp.powers()).expect("lengths fixed by construction")
    }
}

/// Picks the phase-update step by probing three initial steps and refining
/// the best with a Newton correction along the gradient direction.
///
/// Candidates shift the largest phase by 0, pi/2, and pi. A candidate is
/// refined only when it improves the incumbent exposure index and the
/// curvature along the gradient is positive; if no candidate qualifies the
/// returned step is 0 and the caller terminates.
pub fn optimal_step(
    ctx: &ProblemContext,
    theta: &DVector<f64>,
    lambda: &DVector<f64>,
    grad: &DVector<f64>,
) -> Result<f64> {
    let max_abs = grad.amax();
    if max_abs == 0.0 || !max_abs.is_finite() {
        return Ok(0.0);
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let candidates = [0.0, half_pi / max_abs, 2.0 * half_pi / max_abs];
    let mut alpha_star = 0.0;
    let mut ei_min = f64::INFINITY;
    for &alpha_bar in &candidates {
        let theta_trial = theta - grad.scale(alpha_bar);
        let wp = ctx.weighted(&theta_trial, lambda)?;
        let ei = ctx.uncapped_ei(&wp);
        if ei < ei_min {
            let grad_trial = wp.grad_theta();
            let hessian_trial = wp.hessian_theta();
            let curvature = (grad.transpose() * &hessian_trial * grad)[(0, 0)];
            if curvature > 0.0 {
                alpha_star = alpha_bar + grad.dot(&grad_trial) / curvature;
                ei_min = ei;
            }
        }
    }
    Ok(alpha_star)
}

/// Dual gradient descent over the RIS phases and the power-cap multipliers.
///
/// Starts from zero phases and multipliers, alternates a descent step on the
/// phases (with the step from [`optimal_step`]) and a projected ascent step
/// on the multipliers, resetting the multiplier of any user whose minimum
/// power already fits the cap. Stops when the step degenerates to zero, the
/// exposure index stalls for 3 consecutive iterations, or `max_iters` is hit.
pub fn dual_gradient_descent(
    channels: &ChannelSet,
    sar_refs: &DVector<f64>,
    target_se: &DVector<f64>,
    sigma2: f64,
    config: &OptimizerConfig,
) -> Result<SolverState> {
    let n = channels.num_ris_elements();
    let k = channels.num_users();
    let ctx = ProblemContext {
        channels,
        sar_refs: sar_refs.clone(),
        target_se: target_se.clone(),
        sigma2,
        p_max: config.p_max,
    };
    let mut theta = DVector::zeros(n);
    let mut lambda = DVector::zeros(k);
    let beta = config.gamma * sar_refs.sum() / k as f64;

    let mut trace = Vec::with_capacity(config.max_iters + 1);
    let wp0 = ctx.weighted(&theta, &lambda)?;
    let g0 = wp0.grad_theta();
    trace.push(IterationRecord {
        iteration: 0,
        ei: ctx.uncapped_ei(&wp0),
        grad_inf_norm: g0.amax(),
        alpha_star: 0.0,
        active_multipliers: 0,
    });

    let mut stall = 0usize;
    let mut iterations = 0usize;
    for iter in 1..=config.max_iters {
        iterations = iter;
        let wp = ctx.weighted(&theta, &lambda)?;
        let grad = wp.grad_theta();
        let alpha = optimal_step(&ctx, &theta, &lambda, &grad)?;
        if alpha == 0.0 {
            // no admissible step: theta stays at the last accepted point
            break;
        }
        theta -= grad.scale(alpha);

        let wp_new = ctx.weighted(&theta, &lambda)?;
        let grad_lambda = wp_new.grad_lambda();
        lambda = (lambda + grad_lambda.scale(beta)).map(|v| v.max(0.0));
        let powers = wp_new.powers();
        for i in 0..k {
            if powers[i] < config.p_max {
                lambda[i] = 0.0;
            }
        }

        let ei = ctx.uncapped_ei(&wp_new);
        let prev_ei = trace.last().map(|r| r.ei).unwrap_or(ei);
        trace.push(IterationRecord {
            iteration: iter,
            ei,
            grad_inf_norm: grad.amax(),
            alpha_star: alpha,
            active_multipliers: lambda.iter().filter(|&&v| v > 0.0).count(),
        });

        if ei > 0.0 && ((ei - prev_ei) / ei).abs() < config.ei_rel_tol {
            stall += 1;
            if stall >= 3 {
                break;
            }
        } else {
            stall = 0;
        }
    }

    let wp_final = ctx.weighted(&theta, &lambda)?;
    let powers = wp_final.powers().map(|p| p.min(config.p_max));
    let ei = exposure_index(sar_refs, &powers)?;
    Ok(SolverState {
        theta,
        lambda,
        powers,
        ei,
        iterations,
        trace,
    })
}

/// Non-optimized phase profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Zero,
    Random,
    /// Evaluate with the RIS link removed entirely.
    NoRis,
}

/// Phase profile of a baseline strategy. `NoRis` returns zero phases; the
/// caller must also drop the RIS link via [`ChannelSet::without_ris`].
pub fn baseline_phases(kind: BaselineKind, n: usize, rng: &mut impl Rng) -> DVector<f64> {
    match kind {
        BaselineKind::Zero | BaselineKind::NoRis => DVector::zeros(n),
        BaselineKind::Random => {
            DVector::from_fn(n, |_, _| rng.gen::<f64>() * std::f64::consts::TAU)
        }
    }
}

/// Uniform phase quantizer: wraps each phase to [0, 2 pi) and snaps it to
/// the nearest of the L grid points `2 pi l / L`, ties toward the lower
/// level.
pub fn quantize_phases(theta: &DVector<f64>, levels: u32) -> DVector<f64> {
    assert!(levels >= 2, "need at least 2 quantization levels");
    let tau = std::f64::consts::TAU;
    let step = tau / levels as f64;
    theta.map(|t| {
        let wrapped = t.rem_euclid(tau);
        let idx = (wrapped / step - 0.5).ceil() as i64;
        let idx = idx.rem_euclid(levels as i64);
        idx as f64 * step
    })
}
