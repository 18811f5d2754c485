//! Continuous black-box minimizer: particle swarm optimization with fixed
//! velocity coefficients, generic over fitness functions.
//!
//! The velocity update is
//!
//! ```text
//! v' = (3-√5)/2 · v + (1+√5)/2 · r1 · (p - x) + 1 · r2 · (g - x)
//! ```
//!
//! with `r1`, `r2` uniform in [0,1], drawn per dimension per step. `p` is the
//! particle's own best evaluated position, `g` the best position the swarm
//! has found so far; both advance only on strict improvement. Positions are
//! repaired after every move: coordinates clamp to the search box and
//! inverted (min, max) pairs swap, so every position the optimizer ever
//! reports is feasible.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inertia coefficient (3 - √5) / 2.
pub fn inertia_coefficient() -> f64 {
    (3.0 - 5.0f64.sqrt()) / 2.0
}

/// Cognitive coefficient (1 + √5) / 2.
pub fn cognitive_coefficient() -> f64 {
    (1.0 + 5.0f64.sqrt()) / 2.0
}

/// Social coefficient.
pub const SOCIAL_COEFFICIENT: f64 = 1.0;

/// Which augmenter a parameter vector drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Six sinusoidal-deformation parameters:
    /// (amplitude min, amplitude max, period min, period max, phase min, phase max).
    Duplicator,
    /// Two Gaussian-filter parameters: (sigma min, sigma max).
    Gaussian,
}

impl ParamKind {
    pub fn dim(self) -> usize {
        match self {
            ParamKind::Duplicator => 6,
            ParamKind::Gaussian => 2,
        }
    }

    /// Search box per coordinate: initialization range and the global bounds
    /// positions are clamped to.
    pub fn bounds(self) -> &'static [(f64, f64)] {
        match self {
            ParamKind::Duplicator => &[
                (10.0, 100.0),
                (10.0, 100.0),
                (0.0, 1.0),
                (0.0, 1.0),
                (0.0, 1.0),
                (0.0, 1.0),
            ],
            ParamKind::Gaussian => &[(0.01, 1.0), (0.01, 1.0)],
        }
    }

    /// Indices of the (min, max) coordinate pairs that must stay ordered.
    pub fn ordered_pairs(self) -> &'static [(usize, usize)] {
        match self {
            ParamKind::Duplicator => &[(0, 1), (2, 3), (4, 5)],
            ParamKind::Gaussian => &[(0, 1)],
        }
    }
}

/// A particle position: the parameters handed to an augmenter.
///
/// Validity requires finite values, min ≤ max within each pair, and
/// kind-specific floors (positive amplitudes, positive sigma). Values outside
/// the optimizer's search box are legal here — the duplicator's shipped
/// default amplitude floor sits below the box — the box only constrains what
/// the swarm itself produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    kind: ParamKind,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(kind: ParamKind, values: Vec<f64>) -> Result<Self> {
        let v = ParameterVector { kind, values };
        v.validate()?;
        Ok(v)
    }

    pub fn duplicator(values: [f64; 6]) -> Result<Self> {
        Self::new(ParamKind::Duplicator, values.to_vec())
    }

    pub fn gaussian(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        Self::new(ParamKind::Gaussian, vec![sigma_min, sigma_max])
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidParameters { reason };
        if self.values.len() != self.kind.dim() {
            return Err(invalid(format!(
                "expected {} values, got {}",
                self.kind.dim(),
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite value".into()));
        }
        for &(lo, hi) in self.kind.ordered_pairs() {
            if self.values[lo] > self.values[hi] {
                return Err(invalid(format!(
                    "pair ({lo},{hi}) inverted: {} > {}",
                    self.values[lo], self.values[hi]
                )));
            }
        }
        match self.kind {
            ParamKind::Duplicator => {
                if self.values[0] <= 0.0 {
                    return Err(invalid(format!(
                        "amplitude must be positive, got {}",
                        self.values[0]
                    )));
                }
                if self.values[2] < 0.0 || self.values[4] < 0.0 {
                    return Err(invalid("period and phase must be non-negative".into()));
                }
            }
            ParamKind::Gaussian => {
                if self.values[0] <= 0.0 {
                    return Err(Error::NonPositiveSigma {
                        sigma: self.values[0],
                    });
                }
            }
        }
        Ok(())
    }

    /// Clamps every coordinate to the search box, then swaps inverted
    /// (min, max) pairs. The result always satisfies the invariants.
    pub fn repair(&mut self) {
        for (v, &(lo, hi)) in self.values.iter_mut().zip(self.kind.bounds()) {
            *v = v.clamp(lo, hi);
        }
        for &(lo, hi) in self.kind.ordered_pairs() {
            if self.values[lo] > self.values[hi] {
                self.values.swap(lo, hi);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub position: ParameterVector,
    pub velocity: Vec<f64>,
    pub personal_best: ParameterVector,
    pub personal_best_fitness: f64,
}

#[derive(Debug, Clone)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub global_best: ParameterVector,
    pub global_best_fitness: f64,
    pub rng_seed: u64,
    pub iteration: usize,
}

/// Samples an initial swarm. Within each (min, max) pair the max coordinate
/// is drawn from [sampled min, high], so every initial position is feasible.
/// Velocities start at zero.
pub fn init_swarm(kind: ParamKind, particle_count: usize, seed: u64) -> Result<Swarm> {
    if particle_count < 2 {
        return Err(Error::TooFewParticles {
            got: particle_count,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = kind.bounds();
    let mut particles = Vec::with_capacity(particle_count);
    for _ in 0..particle_count {
        let mut values = vec![0.0; kind.dim()];
        for &(lo_idx, hi_idx) in kind.ordered_pairs() {
            let (lo, hi) = bounds[lo_idx];
            let min = rng.gen_range(lo..=hi);
            let max = rng.gen_range(min..=bounds[hi_idx].1);
            values[lo_idx] = min;
            values[hi_idx] = max;
        }
        let position = ParameterVector::new(kind, values)?;
        particles.push(Particle {
            velocity: vec![0.0; kind.dim()],
            personal_best: position.clone(),
            personal_best_fitness: f64::INFINITY,
            position,
        });
    }
    let global_best = particles[0].position.clone();
    Ok(Swarm {
        particles,
        global_best,
        global_best_fitness: f64::INFINITY,
        rng_seed: seed,
        iteration: 0,
    })
}

/// One velocity coordinate given pre-drawn uniforms; exposed for the
/// degenerate-drift and hand-evaluation checks.
pub fn velocity_component(
    velocity: f64,
    position: f64,
    personal_best: f64,
    global_best: f64,
    r1: f64,
    r2: f64,
) -> f64 {
    inertia_coefficient() * velocity
        + cognitive_coefficient() * r1 * (personal_best - position)
        + SOCIAL_COEFFICIENT * r2 * (global_best - position)
}

/// New velocity for a particle, drawing r1 and r2 per dimension from `rng`.
pub fn update_velocity(
    p: &Particle,
    global_best: &ParameterVector,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let dim = p.velocity.len();
    let mut v = Vec::with_capacity(dim);
    for d in 0..dim {
        let r1: f64 = rng.gen_range(0.0..=1.0);
        let r2: f64 = rng.gen_range(0.0..=1.0);
        v.push(velocity_component(
            p.velocity[d],
            p.position.values()[d],
            p.personal_best.values()[d],
            global_best.values()[d],
            r1,
            r2,
        ));
    }
    v
}

/// Moves a particle by `velocity` and repairs the result.
pub fn update_position(p: &Particle, velocity: &[f64]) -> ParameterVector {
    let mut moved = p.position.clone();
    for (x, v) in moved.values.iter_mut().zip(velocity) {
        *x += v;
    }
    moved.repair();
    moved
}

/// Outcome of an optimization run.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub best: ParameterVector,
    pub best_fitness: f64,
    /// Global-best fitness after each iteration; non-increasing.
    pub trace: Vec<f64>,
}

/// Fitness evaluation context. Candidate evaluations receive a dedicated RNG
/// stream keyed by (seed, iteration, particle index), so stochastic fitness
/// functions stay reproducible when particles are evaluated in parallel.
pub struct EvalRng {
    seed: u64,
    particles: usize,
}

impl EvalRng {
    fn stream(&self, iteration: usize, particle: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // Stream 0 is the swarm's own (init + velocity) stream.
        rng.set_stream(1 + (iteration * self.particles + particle) as u64);
        rng
    }
}

/// Runs `iterations` rounds of evaluate-then-update over the swarm and
/// returns the all-time best position, its fitness, and the per-iteration
/// global-best trace.
///
/// Per-particle bests `p_i` and the all-time best advance on strict `<`
/// only, scanning particles in index order, so ties keep the incumbent and
/// results do not depend on evaluation scheduling. Every particle is
/// re-evaluated every iteration: the fitness is stochastic through synthetic
/// sample generation, so a standing position can still produce a new value.
pub fn optimize<F>(
    fitness: F,
    kind: ParamKind,
    iterations: usize,
    particle_count: usize,
    seed: u64,
) -> Result<OptimizeOutcome>
where
    F: Fn(&ParameterVector, &mut ChaCha8Rng) -> Result<f64> + Sync,
{
    let mut swarm = init_swarm(kind, particle_count, seed)?;
    // Init used stream 0 of this seed, candidate evaluations use 1..; the
    // velocity stream gets its own corner of the space so r-draw order is
    // exactly (iteration, particle, dimension).
    let mut update_rng = ChaCha8Rng::seed_from_u64(seed);
    update_rng.set_stream(u64::MAX);
    let eval = EvalRng {
        seed,
        particles: particle_count,
    };
    let mut trace = Vec::with_capacity(iterations);

    for iteration in 0..iterations {
        swarm.iteration = iteration;
        let fits: Vec<Result<f64>> = swarm
            .particles
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = eval.stream(iteration, i);
                fitness(&p.position, &mut rng)
            })
            .collect();

        for (i, fit) in fits.into_iter().enumerate() {
            let fit = fit?;
            if !fit.is_finite() {
                return Err(Error::NonFiniteFitness {
                    particle: i,
                    iteration,
                });
            }
            if fit < swarm.global_best_fitness {
                swarm.global_best_fitness = fit;
                swarm.global_best = swarm.particles[i].position.clone();
            }
            let p = &mut swarm.particles[i];
            if fit < p.personal_best_fitness {
                p.personal_best_fitness = fit;
                p.personal_best = p.position.clone();
            }
        }

        let global = swarm.global_best.clone();
        for p in swarm.particles.iter_mut() {
            let v = update_velocity(p, &global, &mut update_rng);
            p.position = update_position(p, &v);
            p.velocity = v;
        }
        trace.push(swarm.global_best_fitness);
    }

    Ok(OptimizeOutcome {
        best: swarm.global_best,
        best_fitness: swarm.global_best_fitness,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients_match_closed_forms() {
        assert!((inertia_coefficient() - 0.3819660112501051).abs() < 1e-12);
        assert!((cognitive_coefficient() - 1.618033988749895).abs() < 1e-12);
        assert_eq!(SOCIAL_COEFFICIENT, 1.0);
    }

    #[test]
    fn velocity_hand_evaluation() {
        // v=1, x=0, p=1, g=2, r1=r2=1: inertia + cognitive + 2 = 4 exactly,
        // because (3-√5)/2 + (1+√5)/2 = 2.
        let v = velocity_component(1.0, 0.0, 1.0, 2.0, 1.0, 1.0);
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn velocity_zero_at_joint_optimum() {
        let v = velocity_component(0.0, 3.0, 3.0, 3.0, 0.7, 0.3);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn init_respects_coupled_ranges() {
        for seed in 0..20 {
            let swarm = init_swarm(ParamKind::Gaussian, 16, seed).unwrap();
            for p in &swarm.particles {
                let v = p.position.values();
                assert!(0.01 <= v[0] && v[0] <= v[1] && v[1] <= 1.0);
                assert!(p.velocity.iter().all(|&x| x == 0.0));
            }
            let swarm = init_swarm(ParamKind::Duplicator, 16, seed).unwrap();
            for p in &swarm.particles {
                let v = p.position.values();
                assert!(10.0 <= v[0] && v[0] <= v[1] && v[1] <= 100.0);
                assert!(0.0 <= v[2] && v[2] <= v[3] && v[3] <= 1.0);
                assert!(0.0 <= v[4] && v[4] <= v[5] && v[5] <= 1.0);
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_swarm(ParamKind::Duplicator, 8, 99).unwrap();
        let b = init_swarm(ParamKind::Duplicator, 8, 99).unwrap();
        for (x, y) in a.particles.iter().zip(&b.particles) {
            assert_eq!(x.position.values(), y.position.values());
        }
    }

    #[test]
    fn too_few_particles_rejected() {
        assert!(matches!(
            init_swarm(ParamKind::Gaussian, 1, 0),
            Err(Error::TooFewParticles { got: 1 })
        ));
    }

    #[test]
    fn position_repair_clamps_then_swaps() {
        let p = Particle {
            position: ParameterVector::gaussian(0.5, 0.9).unwrap(),
            velocity: vec![0.0; 2],
            personal_best: ParameterVector::gaussian(0.5, 0.9).unwrap(),
            personal_best_fitness: 0.0,
        };
        assert_eq!(update_position(&p, &[0.0, 0.0]).values(), &[0.5, 0.9]);
        // raw (1.1, 1.2) clamps to (1.0, 1.0)
        assert_eq!(update_position(&p, &[0.6, 0.3]).values(), &[1.0, 1.0]);

        let q = Particle {
            position: ParameterVector::gaussian(0.2, 0.3).unwrap(),
            velocity: vec![0.0; 2],
            personal_best: ParameterVector::gaussian(0.2, 0.3).unwrap(),
            personal_best_fitness: 0.0,
        };
        // raw (0.5, 0.1) is inverted: swap to (0.1, 0.5)
        let repaired = update_position(&q, &[0.3, -0.2]);
        assert!((repaired.values()[0] - 0.1).abs() < 1e-12);
        assert!((repaired.values()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_randomness_zero_velocity_never_moves() {
        let swarm = init_swarm(ParamKind::Duplicator, 5, 3).unwrap();
        for p in &swarm.particles {
            let v: Vec<f64> = (0..6)
                .map(|d| {
                    velocity_component(
                        p.velocity[d],
                        p.position.values()[d],
                        p.personal_best.values()[d],
                        swarm.global_best.values()[d],
                        0.0,
                        0.0,
                    )
                })
                .collect();
            assert!(v.iter().all(|&x| x == 0.0));
            assert_eq!(update_position(p, &v).values(), p.position.values());
        }
    }

    #[test]
    fn constant_fitness_keeps_first_particle() {
        let outcome = optimize(|_, _| Ok(0.25), ParamKind::Gaussian, 10, 6, 42).unwrap();
        let first = init_swarm(ParamKind::Gaussian, 6, 42).unwrap().particles[0]
            .position
            .clone();
        assert_eq!(outcome.best.values(), first.values());
        assert!(outcome.trace.iter().all(|&f| f == 0.25));
    }

    #[test]
    fn trace_is_monotone_non_increasing() {
        for seed in [1u64, 2, 3] {
            let outcome = optimize(
                |p, _| Ok((p.values()[0] - 0.4).powi(2) + (p.values()[1] - 0.6).powi(2)),
                ParamKind::Gaussian,
                50,
                10,
                seed,
            )
            .unwrap();
            for w in outcome.trace.windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn boundary_minimum_is_reachable() {
        // Linear fitness pushes sigma_min to its lower bound; clamping admits
        // the boundary exactly.
        let outcome = optimize(|p, _| Ok(p.values()[0]), ParamKind::Gaussian, 100, 12, 7).unwrap();
        assert!(outcome.best.values()[0] - 0.01 < 1e-9);
    }

    #[test]
    fn sphere_converges_over_duplicator_box() {
        // Sphere in box-normalized coordinates: the raw box mixes scales of
        // 90 and 1, which would let the amplitude terms dominate the sum and
        // starve the unit-scale dimensions of selection pressure.
        let center = [55.0, 70.0, 0.3, 0.6, 0.2, 0.7];
        let bounds = ParamKind::Duplicator.bounds();
        let mut failures = 0;
        for seed in 0..10u64 {
            let outcome = optimize(
                |p, _| {
                    Ok(p.values()
                        .iter()
                        .zip(&center)
                        .zip(bounds)
                        .map(|((x, c), (lo, hi))| {
                            let t = (x - c) / (hi - lo);
                            t * t
                        })
                        .sum())
                },
                ParamKind::Duplicator,
                200,
                30,
                seed,
            )
            .unwrap();
            if outcome.best_fitness >= 1e-4 {
                failures += 1;
            }
        }
        assert_eq!(
            failures, 0,
            "sphere benchmark failed for {failures}/10 seeds"
        );
    }

    #[test]
    fn non_finite_fitness_names_the_particle() {
        let err = optimize(
            |p, _| {
                if p.values()[0] > 0.0 {
                    Ok(f64::NAN)
                } else {
                    Ok(0.0)
                }
            },
            ParamKind::Gaussian,
            5,
            4,
            1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NonFiniteFitness {
                particle: 0,
                iteration: 0
            }
        ));
    }

    #[test]
    fn identical_runs_are_bitwise_identical() {
        let f = |p: &ParameterVector, rng: &mut ChaCha8Rng| {
            // Stochastic fitness: determinism must come from the stream layout.
            let noise: f64 = rng.gen_range(0.0..0.01);
            Ok((p.values()[0] - 0.3).powi(2) + noise)
        };
        let a = optimize(f, ParamKind::Gaussian, 30, 8, 5).unwrap();
        let b = optimize(f, ParamKind::Gaussian, 30, 8, 5).unwrap();
        assert_eq!(a.best.values(), b.best.values());
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.best_fitness, b.best_fitness);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        /// Every position produced during a run satisfies bounds + ordering.
        #[test]
        fn positions_stay_feasible(seed in 0u64..500) {
            let outcome = optimize(
                |p, _| {
                    for &(lo, hi) in ParamKind::Gaussian.ordered_pairs() {
                        assert!(p.values()[lo] <= p.values()[hi]);
                    }
                    for (v, &(lo, hi)) in p.values().iter().zip(ParamKind::Gaussian.bounds()) {
                        assert!(*v >= lo && *v <= hi);
                    }
                    Ok((p.values()[0] - 0.2).abs())
                },
                ParamKind::Gaussian,
                20,
                6,
                seed,
            ).unwrap();
            proptest::prop_assert!(outcome.best_fitness.is_finite());
        }
    }
}
