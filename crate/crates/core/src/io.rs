//! JSON files for problems, estimates, and certificates.
//!
//! Problems: `{"keypoints": [[x,y,z],...], "library": [B_1, ...], "weights":
//! [...], "lambda": λ}` where each `B_i` is a row-major 3×K nested array
//! (three rows of K entries; column `k` is keypoint `i` on shape `k`).
//! `weights` defaults to ones and `lambda` to zero. Quaternions are
//! scalar-first 4-arrays; rotation matrices are row-major 9-arrays.

use nalgebra::{DVector, Matrix3, Matrix3xX, Vector3, Vector4};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::cert::{Certificate, ConstraintForm, Verdict, X_CONVENTION};
use crate::error::{invalid, Error, Result};
use crate::model::{Estimate, ShapeProblem};
use crate::quat::{RotationMatrix, UnitQuaternion};
use crate::robust::GncResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub keypoints: Vec<[f64; 3]>,
    pub library: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda: f64,
}

impl ProblemFile {
    pub fn from_problem(problem: &ShapeProblem<f64>) -> Self {
        Self {
            keypoints: problem.keypoints().iter().map(|y| [y.x, y.y, y.z]).collect(),
            library: problem
                .library()
                .iter()
                .map(|b| (0..3).map(|r| b.row(r).iter().copied().collect()).collect())
                .collect(),
            weights: Some(problem.weights().to_vec()),
            lambda: problem.lambda(),
        }
    }

    pub fn to_problem(&self) -> Result<ShapeProblem<f64>> {
        let n = self.keypoints.len();
        if self.library.len() != n {
            return Err(invalid(format!(
                "library has {} entries but there are {n} keypoints",
                self.library.len()
            )));
        }
        let k = self.library.first().and_then(|b| b.first()).map_or(0, Vec::len);
        let mut library = Vec::with_capacity(n);
        for (i, b) in self.library.iter().enumerate() {
            if b.len() != 3 || b.iter().any(|row| row.len() != k) {
                return Err(invalid(format!("library[{i}] must be a 3×{k} row-major array")));
            }
            library.push(Matrix3xX::from_fn(k, |r, c| b[r][c]));
        }
        let keypoints = self.keypoints.iter().map(|y| Vector3::from(*y)).collect();
        ShapeProblem::new(keypoints, library, self.weights.clone(), self.lambda)
    }
}

fn json_error(text: &str, e: &serde_json::Error) -> Error {
    let (line, column) = (e.line(), e.column());
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    let offset = if e.is_eof() {
        text.len()
    } else {
        (start + column.saturating_sub(1)).min(text.len())
    };
    Error::Json {
        line,
        column,
        offset,
        message: e.to_string(),
    }
}

/// Deserializes `text`, reporting syntax errors by line, column, and byte
/// offset.
pub fn from_json<D: DeserializeOwned>(text: &str) -> Result<D> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => invalid(e.to_string()),
        _ => json_error(text, &e),
    })
}

pub fn to_json<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("serializable value")
}

pub fn parse_problem(text: &str) -> Result<ShapeProblem<f64>> {
    from_json::<ProblemFile>(text)?.to_problem()
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|i| m[(i / 3, i % 3)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateJson {
    pub q: [f64; 4],
    pub r: [f64; 9],
    pub p: [f64; 3],
    pub c: Vec<f64>,
    pub objective: f64,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
    pub certified: Option<bool>,
    pub shape_in_box: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl From<&Estimate<f64>> for EstimateJson {
    fn from(e: &Estimate<f64>) -> Self {
        let q = e.q.coords();
        Self {
            q: [q[0], q[1], q[2], q[3]],
            r: row_major(e.r.matrix()),
            p: [e.p.x, e.p.y, e.p.z],
            c: e.c.iter().copied().collect(),
            objective: e.objective,
            mu: e.mu,
            iterations: e.iterations,
            converged: e.converged,
            certified: e.certified,
            shape_in_box: e.shape_in_box(),
            diagnostic: e.diagnostic.clone(),
        }
    }
}

impl EstimateJson {
    pub fn rotation(&self) -> Result<RotationMatrix<f64>> {
        RotationMatrix::new(Matrix3::from_row_slice(&self.r))
    }

    pub fn to_estimate(&self) -> Result<Estimate<f64>> {
        Ok(Estimate {
            q: UnitQuaternion::new(Vector4::from(self.q))?,
            r: self.rotation()?,
            p: Vector3::from(self.p),
            c: DVector::from_vec(self.c.clone()),
            objective: self.objective,
            mu: self.mu,
            iterations: self.iterations,
            converged: self.converged,
            certified: self.certified,
            diagnostic: self.diagnostic.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateJson {
    pub certified: bool,
    pub verdict: Verdict,
    #[serde(rename = "min_eig_S")]
    pub min_eig_s: f64,
    pub multipliers: [f64; 7],
    pub stationarity_residual: f64,
    pub form: ConstraintForm,
    pub convention: String,
}

impl From<&Certificate<f64>> for CertificateJson {
    fn from(c: &Certificate<f64>) -> Self {
        Self {
            certified: c.is_certified(),
            verdict: c.verdict,
            min_eig_s: c.min_eig_s,
            multipliers: c.multipliers,
            stationarity_residual: c.stationarity_residual,
            form: c.form,
            convention: X_CONVENTION.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GncJson {
    pub weights: Vec<f64>,
    pub inliers: Vec<usize>,
    pub iterations: usize,
    pub mu: f64,
    pub converged: bool,
}

impl From<&GncResult<f64>> for GncJson {
    fn from(g: &GncResult<f64>) -> Self {
        Self {
            weights: g.weights.clone(),
            inliers: g.inliers(),
            iterations: g.iters,
            mu: g.mu,
            converged: g.converged,
        }
    }
}

/// Output of a single solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub solver: String,
    pub estimate: EstimateJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnc: Option<GncJson>,
}
