//! Event-driven simulation of the branching process.
//!
//! All individuals share the hazard `lambda_t`, so the population of size `Z`
//! dies at total rate `Z lambda_t`. Events are drawn by thinning against
//! `Z` times the supremum of the hazard over the current stretch of time; a
//! stretch ends at the next breakpoint, checkpoint, `t_end` or where `1 + t`
//! doubles. An accepted event replaces one individual by a draw from the
//! offspring law at that time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::env::{Environment, HazardSpec};
use crate::error::SimError;
use crate::exact::OffspringLaw;

/// Independent stream for `(seed, replica_index)`: the ChaCha8 key comes
/// from `seed`, the stream number is the replica index.
pub fn replica_rng(seed: u64, replica_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica_index);
    rng
}

/// Uniform draw in `(0, 1]`.
#[inline]
fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.gen::<f64>()
}

/// Time `T > tau` with `Lambda_T - Lambda_tau = -ln u`, or `+inf` when the
/// remaining hazard `Lambda_inf - Lambda_tau` is smaller.
pub fn sample_death_increment(env: &Environment, tau: f64, u: f64) -> f64 {
    let target = -u.ln();
    match env.hazard_spec() {
        HazardSpec::Constant { rate } => tau + target / rate,
        HazardSpec::PowerLaw { lambda, alpha } => {
            let g = 1.0 + alpha;
            if g == 0.0 {
                return (1.0 + tau) * (target / lambda).exp() - 1.0;
            }
            // (1+T)^g = (1+tau)^g (1 + x)
            let x = target * g / (lambda * (1.0 + tau).powf(g));
            if x <= -1.0 {
                return f64::INFINITY;
            }
            (1.0 + tau) * (x.ln_1p() / g).exp() - 1.0
        }
        HazardSpec::PiecewiseConstant { .. } => {
            let mut remaining = target;
            let mut s = tau;
            loop {
                let piece = env.piece_at(s);
                let rate = piece.hazard(s);
                if rate > 0.0 {
                    let hit = s + remaining / rate;
                    if hit < piece.end {
                        return hit;
                    }
                    remaining -= rate * (piece.end - s);
                }
                if !piece.end.is_finite() {
                    return f64::INFINITY;
                }
                s = piece.end;
            }
        }
    }
}

/// Draws `N` from the offspring law conditioned on `N >= 2`. The law does not
/// depend on `a_t`; its tail is `P(N > n) = Gamma(n-theta) / (Gamma(1-theta) n!)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSampler {
    theta: f64,
}

impl BranchSampler {
    /// Sequential inversion stops here and continues with the Pareto tail
    /// `P(N > m | N > n) ~ (n/m)^(1+theta)`.
    pub const ITERATION_CAP: u64 = 10_000_000;

    pub fn new(theta: f64) -> Self {
        Self { theta }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.theta == 1.0 {
            return 2;
        }
        let u = open_uniform(rng);
        let mut tail = 1.0;
        let mut n = 1u64;
        loop {
            n += 1;
            tail *= (n as f64 - 1.0 - self.theta) / n as f64;
            if tail < u {
                return n;
            }
            if n >= Self::ITERATION_CAP {
                let m = n as f64 * (u / tail).powf(-1.0 / (1.0 + self.theta));
                return if m >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    (m as u64).max(n + 1)
                };
            }
        }
    }
}

/// Offspring count of an individual dying at `t`; never 1.
pub fn sample_offspring<R: Rng + ?Sized>(
    env: &Environment,
    t: f64,
    rng: &mut R,
) -> Result<u64, SimError> {
    let law = OffspringLaw::at(env, t)?;
    Ok(draw_offspring(law, rng))
}

#[inline]
fn draw_offspring<R: Rng + ?Sized>(law: OffspringLaw, rng: &mut R) -> u64 {
    if rng.gen::<f64>() < law.branching_probability() {
        BranchSampler::new(law.theta).sample(rng)
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    pub population_cap: u64,
    pub replica_index: u64,
}

impl SimConfig {
    pub const DEFAULT_CAP: u64 = 100_000_000;

    pub fn new(seed: u64, t_end: f64, checkpoints: Vec<f64>) -> Self {
        Self {
            seed,
            t_end,
            checkpoints,
            population_cap: Self::DEFAULT_CAP,
            replica_index: 0,
        }
    }

    pub fn check(&self) -> Result<(), SimError> {
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(SimError::Config(format!(
                "t_end = {} must be finite and non-negative",
                self.t_end
            )));
        }
        if self.population_cap == 0 {
            return Err(SimError::Config("population cap must be positive".into()));
        }
        if let Some(bad) = self
            .checkpoints
            .iter()
            .find(|&&c| !(0.0..=self.t_end).contains(&c))
        {
            return Err(SimError::Config(format!(
                "checkpoint {bad} outside [0, {}]",
                self.t_end
            )));
        }
        if self.checkpoints.windows(2).any(|w| w[0] > w[1]) {
            return Err(SimError::Config("checkpoints must be sorted".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// `(t, Z_t)` for every checkpoint reached; a capped run stops early.
    pub checkpoint_values: Vec<(f64, u64)>,
    pub extinct_at: Option<f64>,
    pub capped: bool,
    /// Time and population size when the cap was exceeded.
    pub capped_at: Option<(f64, u64)>,
    pub events: u64,
}

impl Trajectory {
    /// `Z` at checkpoint `i`, `None` when a capped run stopped before it.
    pub fn value(&self, i: usize) -> Option<u64> {
        self.checkpoint_values.get(i).map(|&(_, z)| z)
    }
}

/// Runs one replica. Deterministic in `(env, config)`.
pub fn simulate(env: &Environment, config: &SimConfig) -> Result<Trajectory, SimError> {
    config.check()?;
    let mut rng = replica_rng(config.seed, config.replica_index);
    let theta = env.theta().get();
    let cps = &config.checkpoints;
    let mut out = Vec::with_capacity(cps.len());
    let mut next_cp = 0usize;
    let mut t = 0.0f64;
    let mut z: u64 = 1;
    let mut events = 0u64;

    loop {
        while next_cp < cps.len() && cps[next_cp] <= t {
            out.push((cps[next_cp], z));
            next_cp += 1;
        }
        if z == 0 {
            out.extend(cps[next_cp..].iter().map(|&c| (c, 0)));
            return Ok(Trajectory {
                checkpoint_values: out,
                extinct_at: Some(t),
                capped: false,
                capped_at: None,
                events,
            });
        }
        if t >= config.t_end {
            return Ok(Trajectory {
                checkpoint_values: out,
                extinct_at: None,
                capped: false,
                capped_at: None,
                events,
            });
        }
        let piece = env.piece_at(t);
        let mut end = piece.end.min(config.t_end).min(2.0 * t + 1.0);
        if next_cp < cps.len() {
            end = end.min(cps[next_cp]);
        }
        let sup = piece.hazard_sup(t, end);
        if !sup.is_finite() {
            return Err(SimError::Config(format!(
                "hazard bound on [{t}, {end}) is not finite"
            )));
        }
        if sup <= 0.0 {
            t = end;
            continue;
        }
        let constant = piece.hazard.is_constant();
        // thinning within [t, end)
        loop {
            let step = -open_uniform(&mut rng).ln() / (z as f64 * sup);
            let tau = t + step;
            if tau >= end || tau == t {
                t = end;
                break;
            }
            t = tau;
            if !constant && rng.gen::<f64>() * sup >= piece.hazard(tau) {
                continue;
            }
            events += 1;
            let law = OffspringLaw {
                theta,
                a: piece.mean(tau),
            };
            let k = draw_offspring(law, &mut rng);
            z = z - 1 + k;
            if z > config.population_cap {
                return Ok(Trajectory {
                    checkpoint_values: out,
                    extinct_at: None,
                    capped: true,
                    capped_at: Some((t, z)),
                    events,
                });
            }
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{builtin_scenario, OffspringMeanSpec, ScenarioParams, Theta};

    #[test]
    fn death_increment_examples() {
        let c = Environment::new(
            Theta::new(1.0).unwrap(),
            HazardSpec::Constant { rate: 2.0 },
            OffspringMeanSpec::Constant { a: 1.0 },
        );
        assert!((sample_death_increment(&c, 1.0, 0.5) - (1.0 + 2f64.ln() / 2.0)).abs() < 1e-15);
        let p = builtin_scenario("ex34", &ScenarioParams::default()).unwrap();
        assert!((sample_death_increment(&p, 0.0, (-2f64).exp()) - 3.0).abs() < 1e-12);
        let deg = builtin_scenario("degenerate_power", &ScenarioParams::default()).unwrap();
        assert_eq!(sample_death_increment(&deg, 0.0, 0.1), f64::INFINITY);
        let sl = builtin_scenario("sleeping", &ScenarioParams::default()).unwrap();
        assert!((sample_death_increment(&sl, 0.5, (-1f64).exp()) - 1.5).abs() < 1e-15);
        assert_eq!(
            sample_death_increment(&sl, 0.5, (-2f64).exp()),
            f64::INFINITY
        );
    }

    #[test]
    fn binary_split_only_grows() {
        let env = builtin_scenario("binary_split", &ScenarioParams::default()).unwrap();
        let cfg = SimConfig {
            population_cap: 10_000,
            ..SimConfig::new(7, 3.0, vec![0.0, 1.0, 2.0, 3.0])
        };
        let tr = simulate(&env, &cfg).unwrap();
        assert_eq!(tr.value(0), Some(1));
        assert!(tr.checkpoint_values.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn replicas_are_reproducible_and_distinct() {
        let env = builtin_scenario("bd_const", &ScenarioParams::default()).unwrap();
        let cfg = |r| SimConfig {
            replica_index: r,
            population_cap: 1_000_000,
            ..SimConfig::new(42, 6.0, vec![2.0, 4.0, 6.0])
        };
        assert_eq!(
            simulate(&env, &cfg(3)).unwrap(),
            simulate(&env, &cfg(3)).unwrap()
        );
        let distinct = (0..20)
            .map(|r| simulate(&env, &cfg(r)).unwrap().events)
            .collect::<std::collections::HashSet<_>>();
        assert!(distinct.len() > 5);
    }

    #[test]
    fn config_is_checked() {
        let env = builtin_scenario("bd_const", &ScenarioParams::default()).unwrap();
        assert!(simulate(&env, &SimConfig::new(1, 1.0, vec![2.0])).is_err());
        assert!(simulate(&env, &SimConfig::new(1, 1.0, vec![0.5, 0.2])).is_err());
        assert!(simulate(&env, &SimConfig::new(1, f64::INFINITY, vec![])).is_err());
    }

    #[test]
    fn branch_sampler_never_returns_one() {
        let mut rng = replica_rng(1, 0);
        for theta in [0.25, 0.5, 1.0] {
            let s = BranchSampler::new(theta);
            assert!((0..10_000).all(|_| s.sample(&mut rng) >= 2));
        }
    }
}
