//! Basins of attraction of SCF over the rotation space.
//!
//! Random initial quaternions are pushed through SCF; the fixed points are
//! clustered by rotation distance and each start is labelled by the minimum
//! it reaches. Starts are reported through the stereographic projection,
//! which maps the rotation space into the unit ball.

use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::Precomputed;
use crate::quat::{stereo_project, UnitQuaternion};
use crate::scalar::{to_f64, Real};
use crate::scf::{random_quaternion, scf_iterate, ScfStatus};

use super::metrics::rotation_error;

#[derive(Clone, Debug, PartialEq)]
pub struct BasinConfig {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
    /// Fixed points closer than this (degrees) share a label.
    pub cluster_deg: f64,
}

impl Default for BasinConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            tol: 1e-9,
            max_iters: 100,
            cluster_deg: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BasinPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub label: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct Minimum<T: Real> {
    pub q: UnitQuaternion<T>,
    pub objective: T,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct BasinMap<T: Real> {
    pub points: Vec<BasinPoint>,
    /// Distinct fixed points, ordered by objective (label 0 is the best).
    pub minima: Vec<Minimum<T>>,
}

pub fn run_basin<T: Real>(pre: &Precomputed<T>, cfg: &BasinConfig) -> Result<BasinMap<T>> {
    if cfg.samples == 0 || cfg.max_iters == 0 || !(cfg.tol > 0.0) || !(cfg.cluster_deg > 0.0) {
        return Err(invalid("basin map needs samples ≥ 1, max_iters ≥ 1, tol > 0, cluster_deg > 0"));
    }
    let tol = T::from_f64(cfg.tol).expect("finite tolerance");
    let cluster = T::from_f64(cfg.cluster_deg).expect("finite radius");
    let mut minima: Vec<Minimum<T>> = Vec::new();
    let mut raw = Vec::with_capacity(cfg.samples);
    for i in 0..cfg.samples {
        let q0 = random_quaternion::<T>(cfg.seed, i as u64);
        let trace = scf_iterate(pre, q0, tol, cfg.max_iters);
        let sol = trace.solution();
        let r = sol.q.to_rotation_matrix();
        let objective = pre.objective_rot(r.matrix());
        let found = minima
            .iter()
            .position(|m| rotation_error(m.q.to_rotation_matrix().matrix(), r.matrix()) < cluster);
        let label = match found {
            Some(l) => {
                minima[l].count += 1;
                l
            }
            None => {
                minima.push(Minimum {
                    q: sol.q,
                    objective,
                    count: 1,
                });
                minima.len() - 1
            }
        };
        let p: Vector3<T> = stereo_project(&q0);
        raw.push((p, label, trace.iterates.len(), trace.status == ScfStatus::Converged, objective));
    }

    // relabel by objective
    let mut order: Vec<usize> = (0..minima.len()).collect();
    order.sort_by(|a, b| minima[*a].objective.partial_cmp(&minima[*b].objective).expect("finite"));
    let mut relabel = vec![0; minima.len()];
    for (new, old) in order.iter().enumerate() {
        relabel[*old] = new;
    }
    let minima = order.iter().map(|i| minima[*i].clone()).collect();
    let points = raw
        .into_iter()
        .map(|(p, label, iterations, converged, objective)| BasinPoint {
            x: to_f64(p.x),
            y: to_f64(p.y),
            z: to_f64(p.z),
            label: relabel[label],
            iterations,
            converged,
            objective: to_f64(objective),
        })
        .collect();
    Ok(BasinMap { points, minima })
}

impl<T: Real> BasinMap<T> {
    pub fn labels(&self) -> usize {
        self.minima.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p).map_err(|e| invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }
}
