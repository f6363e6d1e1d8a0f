//! Seeded synthetic problems, error metrics, and benchmark harnesses.

pub mod basin;
pub mod bench;
pub mod metrics;

use nalgebra::{DVector, Matrix3, Matrix3xX, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ShapeProblem;
use crate::quat::UnitQuaternion;
use crate::scalar::{lit, Real};

pub use basin::{run_basin, BasinConfig, BasinMap, BasinPoint};
pub use bench::{parse_solvers, run_benchmark, BenchConfig, BenchReport, BenchSolver, SolverSummary, TrialResult};
pub use metrics::{position_error, rotation_error, shape_error, within_5deg5cm};

/// Synthetic problem family.
///
/// `sigma_m` is the measurement noise standard deviation normalized by the
/// library spread `r`: keypoints receive `N(0, w⁻¹ I₃)` noise with
/// `w = 1 / (σ_m r)²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    /// Standard deviation of library shapes around the mean shape (m).
    pub r: f64,
    pub sigma_m: f64,
    pub lambda: f64,
    pub seed: u64,
    pub trials: usize,
    /// Pass the noise precision `w` to the problem as keypoint weights.
    /// Off by default: keypoints get unit weights, which only matters when
    /// `lambda > 0` since uniform weights do not move the minimizer.
    #[serde(default)]
    pub noise_weights: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 10,
            k: 4,
            r: 0.2,
            sigma_m: 0.25,
            lambda: 0.0,
            seed: 0,
            trials: 1000,
            noise_weights: false,
        }
    }
}

impl SynthConfig {
    /// High-dimensional library study: `K = 25`, `λ = 1`.
    pub fn high_k() -> Self {
        Self {
            k: 25,
            lambda: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 || self.k == 0 || self.trials == 0 {
            return Err(invalid("synthetic config needs n ≥ 3, k ≥ 1, trials ≥ 1"));
        }
        if !(self.r > 0.0) || !(self.sigma_m >= 0.0) || !(self.lambda >= 0.0) {
            return Err(invalid("synthetic config needs r > 0, sigma_m ≥ 0, lambda ≥ 0"));
        }
        if !self.sigma_m.is_finite() || !self.r.is_finite() || !self.lambda.is_finite() {
            return Err(invalid("synthetic config values must be finite"));
        }
        if self.lambda == 0.0 && self.n < self.k {
            return Err(invalid("n < k requires lambda > 0"));
        }
        Ok(())
    }

    /// Noise standard deviation `σ_m r` (m).
    pub fn noise_std(&self) -> f64 {
        self.sigma_m * self.r
    }

    /// Noise precision `w = 1 / (σ_m r)²`; infinite when noiseless.
    pub fn precision(&self) -> f64 {
        1.0 / (self.noise_std() * self.noise_std())
    }

    /// Keypoint weight handed to the problem.
    pub fn keypoint_weight(&self) -> f64 {
        if self.noise_weights && self.sigma_m > 0.0 {
            self.precision()
        } else {
            1.0
        }
    }

    /// Per-trial random stream derived from `(seed, trial_index)`.
    pub fn rng(&self, trial_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial_index);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub r: Matrix3<T>,
    pub p: Vector3<T>,
    pub c: DVector<T>,
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| StandardNormal.sample(rng))
}

/// Deterministic problem for `(cfg.seed, trial_index)`.
pub fn generate<T: Real>(cfg: &SynthConfig, trial_index: u64) -> Result<(ShapeProblem<T>, GroundTruth<T>)> {
    cfg.validate()?;
    let mut rng = cfg.rng(trial_index);
    let (n, k) = (cfg.n, cfg.k);

    let mean: Vec<Vector3<f64>> = (0..n).map(|_| normal3(&mut rng)).collect();
    let mut library: Vec<Matrix3xX<f64>> = vec![Matrix3xX::zeros(k); n];
    for col in 0..k {
        for (i, m) in mean.iter().enumerate() {
            library[i].set_column(col, &(m + normal3(&mut rng) * cfg.r));
        }
    }

    let u = DVector::<f64>::from_fn(k, |_, _| rng.random::<f64>());
    let c = &u / u.sum();
    let p = normal3(&mut rng) + Vector3::repeat(1.0);
    let q = UnitQuaternion::<f64>::new_normalize(nalgebra::Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng)));
    let r = *q.to_rotation_matrix().matrix();

    let noise = Normal::new(0.0, cfg.noise_std()).map_err(|e| invalid(e.to_string()))?;
    let keypoints: Vec<Vector3<f64>> = library
        .iter()
        .map(|b| r * (b * &c) + p + Vector3::from_fn(|_, _| noise.sample(&mut rng)))
        .collect();

    let problem = ShapeProblem::new(
        keypoints.iter().map(|y| y.map(lit)).collect(),
        library.iter().map(|b| b.map(lit)).collect(),
        Some(vec![lit(cfg.keypoint_weight()); n]),
        lit(cfg.lambda),
    )?;
    let gt = GroundTruth {
        r: r.map(lit),
        p: p.map(lit),
        c: c.map(lit),
    };
    Ok((problem, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Precomputed;
    use crate::scf::{scf_solve, ScfConfig};

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        let (a, ga) = generate::<f64>(&cfg, 17).unwrap();
        let (b, gb) = generate::<f64>(&cfg, 17).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        let (c, _) = generate::<f64>(&cfg, 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ground_truth_shapes_are_convex_combinations() {
        let cfg = SynthConfig::high_k();
        for t in 0..100 {
            let (_, gt) = generate::<f64>(&cfg, t).unwrap();
            assert!((gt.c.sum() - 1.0).abs() < 1e-12);
            assert!(gt.c.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!((gt.r.transpose() * gt.r - Matrix3::identity()).amax() < 1e-12);
        }
    }

    #[test]
    fn noiseless_measurements_are_exact_and_recovered() {
        let cfg = SynthConfig {
            sigma_m: 0.0,
            ..SynthConfig::default()
        };
        for t in 0..20 {
            let (problem, gt) = generate::<f64>(&cfg, t).unwrap();
            for (y, b) in problem.keypoints().iter().zip(problem.library()) {
                assert!((y - gt.r * (b * &gt.c) - gt.p).norm() < 1e-12);
            }
            let pre = Precomputed::new(&problem).unwrap();
            let (est, _) = scf_solve(&pre, &ScfConfig::default()).unwrap();
            assert!(rotation_error(est.r.matrix(), &gt.r) < 1e-5);
            assert!((est.p - gt.p).norm() < 1e-8);
        }
    }

    #[test]
    fn noise_matches_declared_variance() {
        let cfg = SynthConfig {
            sigma_m: 0.75,
            ..SynthConfig::default()
        };
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut t = 0;
        while count < 100_000 {
            let (problem, gt) = generate::<f64>(&cfg, t).unwrap();
            for (y, b) in problem.keypoints().iter().zip(problem.library()) {
                let e = y - gt.r * (b * &gt.c) - gt.p;
                sum += e.norm_squared();
                count += 3;
            }
            t += 1;
        }
        let var = sum / count as f64;
        let expected = 1.0 / cfg.precision();
        assert!((var / expected - 1.0).abs() < 0.02, "{var} vs {expected}");
    }

    #[test]
    fn weights_follow_configuration() {
        let cfg = SynthConfig::default();
        let (p, _) = generate::<f64>(&cfg, 0).unwrap();
        assert!(p.weights().iter().all(|w| *w == 1.0));
        let cfg = SynthConfig {
            noise_weights: true,
            ..cfg
        };
        let (p, _) = generate::<f64>(&cfg, 0).unwrap();
        assert!(p.weights().iter().all(|w| (*w - 400.0).abs() < 1e-9));
        assert_eq!(cfg.noise_std(), 0.05);
    }

    #[test]
    fn f32_generation_matches_f64() {
        let cfg = SynthConfig::default();
        let (a, _) = generate::<f64>(&cfg, 3).unwrap();
        let (b, _) = generate::<f32>(&cfg, 3).unwrap();
        assert!((a.keypoints()[0].x as f32 - b.keypoints()[0].x).abs() < 1e-6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SynthConfig {
            trials: 0,
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            k: 25,
            lambda: 0.0,
            ..SynthConfig::default()
        };
        assert!(generate::<f64>(&bad, 0).is_err());
    }
}
