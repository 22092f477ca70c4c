//! Experiment driver: reproducible Monte Carlo sweeps over noise power and
//! array sizes, strategy comparison on paired channel draws, and CSV
//! emission.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::exposure::{exposure_index, rate_satisfaction};
use crate::optimizer::{
    baseline_phases, dual_gradient_descent, quantize_phases, BaselineKind, IterationRecord,
    OptimizerConfig, SolverState,
};
use crate::scenario::{ChannelParams, Geometry, ScenarioDraw};
use crate::zf_link::ZfLink;
use crate::{Error, Result};

/// Phase-selection strategy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    Optimized,
    Zero,
    Random,
    NoRis,
    Quantized(u32),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Optimized => write!(f, "optimized"),
            Strategy::Zero => write!(f, "zero"),
            Strategy::Random => write!(f, "random"),
            Strategy::NoRis => write!(f, "no-ris"),
            Strategy::Quantized(l) => write!(f, "quantized-{l}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimized" => Ok(Strategy::Optimized),
            "zero" => Ok(Strategy::Zero),
            "random" => Ok(Strategy::Random),
            "no-ris" => Ok(Strategy::NoRis),
            other => {
                if let Some(levels) = other.strip_prefix("quantized-") {
                    let levels: u32 = levels
                        .parse()
                        .map_err(|_| Error::Config(format!("bad strategy '{other}'")))?;
                    if levels < 2 {
                        return Err(Error::Config("quantizer needs at least 2 levels".into()));
                    }
                    Ok(Strategy::Quantized(levels))
                } else {
                    Err(Error::Config(format!("unknown strategy '{other}'")))
                }
            }
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Full sweep configuration; every field has a default matching the
/// reference scenario, so a config file only overrides what it names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    /// Noise power grid on the dBm scale (converted to watts internally).
    pub sigma2_dbm: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub drops: usize,
    pub master_seed: u64,
    /// RIS-element grid for the `elements` sweep.
    pub n_grid: Vec<usize>,
    /// BS-antenna grid for the `elements` sweep.
    pub m_grid: Vec<usize>,
    pub geometry: Geometry,
    pub channel: ChannelParams,
    pub optimizer: OptimizerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: 16,
            n: 128,
            m: 32,
            sigma2_dbm: vec![-97.0, -96.0, -95.0, -94.0, -93.0],
            strategies: vec![
                Strategy::Optimized,
                Strategy::Zero,
                Strategy::Random,
                Strategy::NoRis,
                Strategy::Quantized(2),
                Strategy::Quantized(4),
            ],
            drops: 100,
            master_seed: 1,
            n_grid: vec![32, 64, 96, 128],
            m_grid: vec![16, 32, 64],
            geometry: Geometry::default(),
            channel: ChannelParams::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{path:?}: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.drops < 1 {
            return Err(Error::Config("drops must be >= 1".into()));
        }
        if self.sigma2_dbm.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        if self.n < self.k || self.m < self.k {
            return Err(Error::Config(format!(
                "need N >= K and M >= K, got N={}, M={}, K={}",
                self.n, self.m, self.k
            )));
        }
        Ok(())
    }
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Outcome of one strategy on one drop at one noise level.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub strategy: String,
    pub sigma2_dbm: f64,
    pub drop: usize,
    /// Exposure index at capped powers, W/kg.
    pub ei: f64,
    pub rate_satisfaction: f64,
    pub iterations: usize,
}

/// Outcome of one (N, M) point in the elements sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ElementsRecord {
    pub n: usize,
    pub m: usize,
    pub drop: usize,
    pub ei: f64,
    pub rate_satisfaction: f64,
}

/// Mean over drops for one (strategy, noise) cell.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRecord {
    pub strategy: String,
    pub sigma2_dbm: f64,
    pub mean_ei: f64,
    pub mean_rate_satisfaction: f64,
    pub drops: usize,
}

fn derive_seed(master: u64, drop: usize, attempt: u64, salt: u64) -> [u8; 32] {
    // splitmix64 expansion of the (master, drop, attempt, salt) tuple
    let mut state = master
        .wrapping_add((drop as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(attempt.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(salt.wrapping_mul(0x94D0_49BB_1331_11EB));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    seed
}

/// EI (capped powers) and rate satisfaction for a fixed phase profile.
fn evaluate_fixed_phases(
    draw: &ScenarioDraw,
    theta: &DVector<f64>,
    remove_ris: bool,
    sigma2: f64,
    p_max: f64,
) -> Result<(f64, f64)> {
    let channels;
    let channels_ref = if remove_ris {
        channels = draw.channels.without_ris();
        &channels
    } else {
        &draw.channels
    };
    let link = ZfLink::new(channels_ref, theta)?;
    let targets = draw.target_se();
    let sar = draw.sar_refs();
    let powers = link
        .required_powers(sigma2, &targets)
        .map(|p| p.min(p_max));
    let ei = exposure_index(&sar, &powers)?;
    let rates = link.achieved_rates(sigma2, &targets, p_max);
    let ratio = rate_satisfaction(&rates, &targets)?;
    Ok((ei, ratio))
}

/// One strategy on one draw. `optimized` carries the cached optimizer output
/// for this (draw, sigma2) so quantized variants reuse it.
fn evaluate_strategy(
    draw: &ScenarioDraw,
    strategy: Strategy,
    sigma2: f64,
    config: &ExperimentConfig,
    drop: usize,
    optimized: &mut Option<SolverState>,
) -> Result<(f64, f64, usize)> {
    let n = draw.channels.num_ris_elements();
    let run_optimizer = || -> Result<SolverState> {
        dual_gradient_descent(
            &draw.channels,
            &draw.sar_refs(),
            &draw.target_se(),
            sigma2,
            &config.optimizer,
        )
    };
    match strategy {
        Strategy::Optimized => {
            if optimized.is_none() {
                *optimized = Some(run_optimizer()?);
            }
            let state = optimized.as_ref().unwrap();
            let (ei, ratio) = evaluate_fixed_phases(
                draw,
                &state.theta,
                false,
                sigma2,
                config.optimizer.p_max,
            )?;
            Ok((ei, ratio, state.iterations))
        }
        Strategy::Quantized(levels) => {
            if optimized.is_none() {
                *optimized = Some(run_optimizer()?);
            }
            let state = optimized.as_ref().unwrap();
            let theta = quantize_phases(&state.theta, levels);
            let (ei, ratio) =
                evaluate_fixed_phases(draw, &theta, false, sigma2, config.optimizer.p_max)?;
            Ok((ei, ratio, state.iterations))
        }
        Strategy::Zero => {
            let theta = DVector::zeros(n);
            let (ei, ratio) =
                evaluate_fixed_phases(draw, &theta, false, sigma2, config.optimizer.p_max)?;
            Ok((ei, ratio, 0))
        }
        Strategy::Random => {
            let mut rng = ChaCha8Rng::from_seed(derive_seed(config.master_seed, drop, 0, 0x52));
            let theta = baseline_phases(BaselineKind::Random, n, &mut rng);
            let (ei, ratio) =
                evaluate_fixed_phases(draw, &theta, false, sigma2, config.optimizer.p_max)?;
            Ok((ei, ratio, 0))
        }
        Strategy::NoRis => {
            let theta = DVector::zeros(n);
            let (ei, ratio) =
                evaluate_fixed_phases(draw, &theta, true, sigma2, config.optimizer.p_max)?;
            Ok((ei, ratio, 0))
        }
    }
}

const MAX_REDRAWS: u64 = 8;

fn run_drop(config: &ExperimentConfig, drop: usize) -> Result<Vec<ExperimentRecord>> {
    'attempt: for attempt in 0..MAX_REDRAWS {
        let mut rng = ChaCha8Rng::from_seed(derive_seed(config.master_seed, drop, attempt, 0));
        let draw = match ScenarioDraw::draw(
            &config.geometry,
            &config.channel,
            config.k,
            config.m,
            config.n,
            &mut rng,
        ) {
            Ok(d) => d,
            Err(Error::RankDeficient { .. }) | Err(Error::Singular { .. }) => continue 'attempt,
            Err(e) => return Err(e),
        };
        let mut records = Vec::new();
        for &dbm in &config.sigma2_dbm {
            let sigma2 = dbm_to_watts(dbm);
            let mut optimized: Option<SolverState> = None;
            for &strategy in &config.strategies {
                match evaluate_strategy(&draw, strategy, sigma2, config, drop, &mut optimized) {
                    Ok((ei, ratio, iterations)) => records.push(ExperimentRecord {
                        strategy: strategy.to_string(),
                        sigma2_dbm: dbm,
                        drop,
                        ei,
                        rate_satisfaction: ratio,
                        iterations,
                    }),
                    Err(Error::RankDeficient { .. }) | Err(Error::Singular { .. }) => {
                        // degenerate draw: discard the whole drop and re-draw
                        // so strategies stay paired
                        continue 'attempt;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        return Ok(records);
    }
    Err(Error::Config(format!(
        "drop {drop}: {MAX_REDRAWS} consecutive degenerate channel draws"
    )))
}

/// Runs the full (strategy x noise x drop) sweep on paired channel draws.
/// Records come back sorted by (strategy, sigma2, drop) so emission is
/// independent of scheduling.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let mut records: Vec<ExperimentRecord> = (0..config.drops)
        .into_par_iter()
        .map(|drop| run_drop(config, drop))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by(|a, b| {
        (&a.strategy, a.sigma2_dbm, a.drop)
            .partial_cmp(&(&b.strategy, b.sigma2_dbm, b.drop))
            .unwrap()
    });
    Ok(records)
}

/// Mean-aggregates sweep records per (strategy, noise) cell.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<AggregateRecord> {
    let mut cells: Vec<AggregateRecord> = Vec::new();
    for r in records {
        match cells
            .iter_mut()
            .find(|c| c.strategy == r.strategy && c.sigma2_dbm == r.sigma2_dbm)
        {
            Some(cell) => {
                cell.mean_ei += r.ei;
                cell.mean_rate_satisfaction += r.rate_satisfaction;
                cell.drops += 1;
            }
            None => cells.push(AggregateRecord {
                strategy: r.strategy.clone(),
                sigma2_dbm: r.sigma2_dbm,
                mean_ei: r.ei,
                mean_rate_satisfaction: r.rate_satisfaction,
                drops: 1,
            }),
        }
    }
    for cell in &mut cells {
        cell.mean_ei /= cell.drops as f64;
        cell.mean_rate_satisfaction /= cell.drops as f64;
    }
    cells
}

/// Runs the elements sweep: optimized phases over the (N, M) grid at the
/// middle of the noise grid, paired drops.
pub fn run_elements(config: &ExperimentConfig) -> Result<Vec<ElementsRecord>> {
    config.validate()?;
    let dbm = config.sigma2_dbm[config.sigma2_dbm.len() / 2];
    let sigma2 = dbm_to_watts(dbm);
    let mut grid: Vec<(usize, usize)> = Vec::new();
    for &m in &config.m_grid {
        for &n in &config.n_grid {
            if n >= config.k && m >= config.k {
                grid.push((n, m));
            }
        }
    }
    let n_max = grid.iter().map(|&(n, _)| n).max().unwrap_or(config.k);
    let m_max = grid.iter().map(|&(_, m)| m).max().unwrap_or(config.k);
    let mut records: Vec<ElementsRecord> = (0..config.drops)
        .into_par_iter()
        .map(|drop| -> Result<Vec<ElementsRecord>> {
            // One master draw at the largest arrays per drop; every grid
            // point sees the leading submatrices of the same realization so
            // size effects are not confounded with fading noise.
            'attempt: for attempt in 0..MAX_REDRAWS {
                let mut rng =
                    ChaCha8Rng::from_seed(derive_seed(config.master_seed, drop, attempt, 0));
                let master = match ScenarioDraw::draw(
                    &config.geometry,
                    &config.channel,
                    config.k,
                    m_max,
                    n_max,
                    &mut rng,
                ) {
                    Ok(d) => d,
                    Err(Error::RankDeficient { .. }) | Err(Error::Singular { .. }) => {
                        continue 'attempt
                    }
                    Err(e) => return Err(e),
                };
                let mut out = Vec::new();
                for &(n, m) in &grid {
                    let draw = master.truncated(m, n)?;
                    let sub = ExperimentConfig {
                        n,
                        m,
                        ..config.clone()
                    };
                    let mut optimized = None;
                    match evaluate_strategy(
                        &draw,
                        Strategy::Optimized,
                        sigma2,
                        &sub,
                        drop,
                        &mut optimized,
                    ) {
                        Ok((ei, ratio, _)) => out.push(ElementsRecord {
                            n,
                            m,
                            drop,
                            ei,
                            rate_satisfaction: ratio,
                        }),
                        Err(Error::RankDeficient { .. }) | Err(Error::Singular { .. }) => {
                            continue 'attempt
                        }
                        Err(e) => return Err(e),
                    }
                }
                return Ok(out);
            }
            Err(Error::Config(format!(
                "drop {drop}: {MAX_REDRAWS} consecutive degenerate channel draws"
            )))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by_key(|r| (r.n, r.m, r.drop));
    Ok(records)
}

/// Writes any serializable records as CSV.
pub fn write_csv<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

/// Two-column (iteration, EI) CSV of a convergence trace.
pub fn emit_convergence(trace: &[IterationRecord], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["iteration", "ei"])?;
    for r in trace {
        writer.write_record([r.iteration.to_string(), format!("{:e}", r.ei)])?;
    }
    writer.flush()?;
    Ok(())
}

/// Single optimized run for the convergence plot.
pub fn run_convergence(config: &ExperimentConfig, sigma2_dbm: f64, drop: usize) -> Result<SolverState> {
    let mut rng = ChaCha8Rng::from_seed(derive_seed(config.master_seed, drop, 0, 0));
    let draw = ScenarioDraw::draw(
        &config.geometry,
        &config.channel,
        config.k,
        config.m,
        config.n,
        &mut rng,
    )?;
    dual_gradient_descent(
        &draw.channels,
        &draw.sar_refs(),
        &draw.target_se(),
        dbm_to_watts(sigma2_dbm),
        &config.optimizer,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_round_trip() {
        for s in [
            Strategy::Optimized,
            Strategy::Zero,
            Strategy::Random,
            Strategy::NoRis,
            Strategy::Quantized(4),
        ] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("quantized-1".parse::<Strategy>().is_err());
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn dbm_conversion() {
        approx::assert_relative_eq!(dbm_to_watts(30.0), 1.0, epsilon = 1e-15);
        approx::assert_relative_eq!(dbm_to_watts(0.0), 1e-3, epsilon = 1e-18);
        approx::assert_relative_eq!(dbm_to_watts(-94.557), 3.5e-13, max_relative = 1e-3);
    }

    #[test]
    fn config_validation() {
        let mut config = ExperimentConfig::default();
        config.drops = 0;
        assert!(config.validate().is_err());
        let mut config = ExperimentConfig::default();
        config.k = 40;
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_toml_round_trip() {
        let config = ExperimentConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.k, config.k);
        assert_eq!(back.strategies, config.strategies);
        // partial configs fall back to defaults
        let partial: ExperimentConfig = toml::from_str("k = 4\nn = 8\nm = 8").unwrap();
        assert_eq!(partial.k, 4);
        assert_eq!(partial.drops, ExperimentConfig::default().drops);
    }

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            k: 2,
            n: 8,
            m: 4,
            sigma2_dbm: vec![-95.0],
            strategies: vec![Strategy::Zero, Strategy::Random, Strategy::NoRis],
            drops: 3,
            master_seed: 7,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn sweep_is_deterministic_to_the_byte() {
        let config = tiny_config();
        let dir = std::env::temp_dir().join("emfris-test-sweep");
        let run = |tag: &str| -> Vec<u8> {
            let records = run_sweep(&config).unwrap();
            let path = dir.join(format!("records-{tag}.csv"));
            write_csv(&records, &path).unwrap();
            std::fs::read(&path).unwrap()
        };
        assert_eq!(run("a"), run("b"));
    }

    #[test]
    fn aggregate_is_exact_mean() {
        let records = vec![
            ExperimentRecord {
                strategy: "zero".into(),
                sigma2_dbm: -95.0,
                drop: 0,
                ei: 1.0,
                rate_satisfaction: 0.5,
                iterations: 0,
            },
            ExperimentRecord {
                strategy: "zero".into(),
                sigma2_dbm: -95.0,
                drop: 1,
                ei: 3.0,
                rate_satisfaction: 1.0,
                iterations: 0,
            },
        ];
        let agg = aggregate(&records);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean_ei, 2.0);
        assert_eq!(agg[0].mean_rate_satisfaction, 0.75);
        assert_eq!(agg[0].drops, 2);
    }

    #[test]
    fn convergence_csv_round_trips() {
        let trace = vec![
            IterationRecord {
                iteration: 0,
                ei: 3.25e-3,
                grad_inf_norm: 1.0,
                alpha_star: 0.0,
                active_multipliers: 0,
            },
            IterationRecord {
                iteration: 1,
                ei: 2.5e-3,
                grad_inf_norm: 0.5,
                alpha_star: 0.2,
                active_multipliers: 1,
            },
        ];
        let path = std::env::temp_dir().join("emfris-test-converge/trace.csv");
        emit_convergence(&trace, &path).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let rows: Vec<(usize, f64)> = reader
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r[0].parse().unwrap(), r[1].parse().unwrap())
            })
            .collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], (0, 3.25e-3));
        assert_eq!(rows[1], (1, 2.5e-3));
    }

    #[test]
    fn single_row_trace() {
        let trace = vec![IterationRecord {
            iteration: 0,
            ei: 1e-3,
            grad_inf_norm: 0.0,
            alpha_star: 0.0,
            active_multipliers: 0,
        }];
        let path = std::env::temp_dir().join("emfris-test-converge/single.csv");
        emit_convergence(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2); // header + one row
    }
}
