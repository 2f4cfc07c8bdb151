//! Construction and upkeep of the fixed anchor set: one unit-norm vector per
//! class, chosen so distinct anchors stay far apart in angle, then never
//! touched again by training.
//!
//! Three constructions are available. `polar2d` meshes the unit circle at
//! interval 2π/C. `orthonormal` hands out standard basis vectors, which only
//! works while C ≤ d. `repulsion` covers the remaining C > d regime by
//! gradient descent on a softmax-smoothed maximum pairwise cosine — a small
//! Thomson-style dispersal that reports whatever minimum angle it reached.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Unit-norm tolerance used by validation and upheld by every generator.
pub const NORM_TOL: f64 = 1e-9;

const REPULSION_STEP: f64 = 0.3;
const REPULSION_BETA_START: f64 = 4.0;
const REPULSION_BETA_END: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMethod {
    Polar2d,
    Orthonormal,
    Repulsion,
    /// Rows supplied by the caller (loaded from disk, or class means used as
    /// stand-in anchors). No unit-norm promise.
    Custom,
}

impl std::fmt::Display for AnchorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AnchorMethod::Polar2d => "polar2d",
            AnchorMethod::Orthonormal => "orthonormal",
            AnchorMethod::Repulsion => "repulsion",
            AnchorMethod::Custom => "custom",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for AnchorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<AnchorMethod> {
        match s {
            "polar2d" => Ok(AnchorMethod::Polar2d),
            "orthonormal" => Ok(AnchorMethod::Orthonormal),
            "repulsion" => Ok(AnchorMethod::Repulsion),
            "custom" => Ok(AnchorMethod::Custom),
            other => Err(Error::InvalidArgument(format!(
                "unknown anchor method {other:?}, expected polar2d, orthonormal or repulsion"
            ))),
        }
    }
}

/// How anchor rows are mapped to class labels.
#[derive(Debug, Clone, Copy)]
pub enum Assignment {
    /// Row c is the anchor of class c.
    Identity,
    /// A seed-determined random permutation of rows to classes.
    Seeded(u64),
}

/// C anchors in d dimensions, one per row, with a row→class assignment and
/// the achieved minimum pairwise angle (radians). Immutable once built.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    anchors: Matrix,
    class_of_row: Vec<usize>,
    row_of_class: Vec<usize>,
    min_pairwise_angle: f64,
    method: AnchorMethod,
}

/// Outcome of checking an anchor set against the two anchor principles:
/// unit norms, and a minimum pairwise angle of at least `theta_m`.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// |‖row‖ − 1| for every anchor row.
    pub norm_deviations: Vec<f64>,
    /// Rows whose norm deviation exceeds the tolerance.
    pub failed_rows: Vec<usize>,
    /// Minimum pairwise angle recomputed from the rows, radians.
    pub min_pairwise_angle: f64,
    /// The threshold the check was run against, radians.
    pub theta_m: f64,
    pub pass: bool,
}

impl AnchorSet {
    /// C anchors meshing the unit circle at interval 2π/C: row c is
    /// (cos(2πc/C), sin(2πc/C)). d is fixed to 2.
    pub fn generate_polar_2d(class_count: usize) -> Result<AnchorSet> {
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "polar2d needs at least 2 classes, got {class_count}"
            )));
        }
        let mut data = Vec::with_capacity(class_count * 2);
        for c in 0..class_count {
            let angle = 2.0 * std::f64::consts::PI * c as f64 / class_count as f64;
            data.push(angle.cos());
            data.push(angle.sin());
        }
        let anchors = Matrix::new(class_count, 2, data)?;
        Ok(AnchorSet::with_identity(
            anchors,
            // Uniform spacing makes the minimum angle exactly the interval.
            2.0 * std::f64::consts::PI / class_count as f64,
            AnchorMethod::Polar2d,
        ))
    }

    /// Standard basis vectors e_0..e_{C-1}; pairwise angles are all π/2.
    pub fn generate_orthonormal(class_count: usize, dim: usize) -> Result<AnchorSet> {
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "orthonormal needs at least 2 classes, got {class_count}"
            )));
        }
        if class_count > dim {
            return Err(Error::InvalidArgument(format!(
                "orthonormal anchors need classes <= dim, got {class_count} classes in {dim} \
                 dimensions; use the repulsion method for that regime"
            )));
        }
        let mut anchors = Matrix::zeros(class_count, dim);
        for c in 0..class_count {
            anchors.set(c, c, 1.0);
        }
        Ok(AnchorSet::with_identity(
            anchors,
            std::f64::consts::FRAC_PI_2,
            AnchorMethod::Orthonormal,
        ))
    }

    /// Spreads C anchors on the d-sphere by descending a softmax-smoothed
    /// maximum pairwise cosine, renormalizing after every step. Returns the
    /// best iterate; non-convergence is not an error.
    pub fn generate_repulsion(
        class_count: usize,
        dim: usize,
        seed: u64,
        iterations: usize,
    ) -> Result<AnchorSet> {
        Ok(Self::generate_repulsion_traced(class_count, dim, seed, iterations)?.0)
    }

    /// Same as `generate_repulsion`, additionally returning the best-so-far
    /// minimum pairwise angle after each iteration (a non-decreasing trace).
    pub fn generate_repulsion_traced(
        class_count: usize,
        dim: usize,
        seed: u64,
        iterations: usize,
    ) -> Result<(AnchorSet, Vec<f64>)> {
        if class_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "repulsion needs at least 2 classes, got {class_count}"
            )));
        }
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "repulsion needs at least 2 dimensions, got {dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Matrix::zeros(class_count, dim);
        for r in 0..class_count {
            loop {
                let row = rows.row_mut(r);
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                if normalize_row(row) {
                    break;
                }
            }
        }

        let pair_count = class_count * (class_count - 1) / 2;
        let mut cosines = vec![0.0; pair_count];
        let mut weights = vec![0.0; pair_count];
        let mut grad = Matrix::zeros(class_count, dim);
        let mut best = rows.clone();
        let mut best_angle = min_pairwise_angle_of(&rows);
        let mut trace = Vec::with_capacity(iterations);

        for t in 0..iterations {
            // Anneal the softmax sharpness from broad to nearly hard-max.
            let frac = if iterations > 1 {
                t as f64 / (iterations - 1) as f64
            } else {
                0.0
            };
            let beta =
                REPULSION_BETA_START * (REPULSION_BETA_END / REPULSION_BETA_START).powf(frac);

            let mut idx = 0;
            let mut max_cos = f64::NEG_INFINITY;
            for i in 0..class_count {
                for j in (i + 1)..class_count {
                    let c = dot(rows.row(i), rows.row(j));
                    cosines[idx] = c;
                    max_cos = max_cos.max(c);
                    idx += 1;
                }
            }
            let mut total = 0.0;
            for (w, &c) in weights.iter_mut().zip(&cosines) {
                *w = (beta * (c - max_cos)).exp();
                total += *w;
            }
            for w in weights.iter_mut() {
                *w /= total;
            }

            grad.data_mut().fill(0.0);
            let mut idx = 0;
            for i in 0..class_count {
                for j in (i + 1)..class_count {
                    let w = weights[idx];
                    idx += 1;
                    for k in 0..dim {
                        let ai = rows.get(i, k);
                        let aj = rows.get(j, k);
                        let g = grad.data_mut();
                        g[i * dim + k] += w * aj;
                        g[j * dim + k] += w * ai;
                    }
                }
            }

            for r in 0..class_count {
                // Project the gradient onto the tangent plane at the anchor;
                // the step then always leaves the norm ≥ 1, so renormalizing
                // can never divide by a vanishing norm.
                let radial = dot(grad.row(r), rows.row(r));
                let g: Vec<f64> = grad.row(r).to_vec();
                let row = rows.row_mut(r);
                for k in 0..dim {
                    let tangent = g[k] - radial * row[k];
                    row[k] -= REPULSION_STEP * tangent;
                }
                normalize_row(row);
            }

            let angle = min_pairwise_angle_of(&rows);
            if angle > best_angle {
                best_angle = angle;
                best = rows.clone();
            }
            trace.push(best_angle);
        }

        let set = AnchorSet::with_identity(best, best_angle, AnchorMethod::Repulsion);
        Ok((set, trace))
    }

    /// Wraps caller-supplied rows as-is, with identity class assignment. No
    /// unit-norm constraint: this is how class means get compared against
    /// anchors, and how CSV files come back in.
    pub fn from_rows(anchors: Matrix, method: AnchorMethod) -> Result<AnchorSet> {
        if anchors.rows() == 0 {
            return Err(Error::InvalidArgument(
                "anchor set needs at least one row".into(),
            ));
        }
        for r in 0..anchors.rows() {
            let norm = dot(anchors.row(r), anchors.row(r)).sqrt();
            if norm <= 1e-12 {
                return Err(Error::DegenerateInput(format!(
                    "anchor row {r} has near-zero norm {norm:e}"
                )));
            }
        }
        let angle = min_pairwise_angle_of(&anchors);
        Ok(AnchorSet::with_identity(anchors, angle, method))
    }

    fn with_identity(anchors: Matrix, min_pairwise_angle: f64, method: AnchorMethod) -> AnchorSet {
        let c = anchors.rows();
        AnchorSet {
            anchors,
            class_of_row: (0..c).collect(),
            row_of_class: (0..c).collect(),
            min_pairwise_angle,
            method,
        }
    }

    /// Rebinds rows to classes. Anchors themselves are untouched.
    pub fn assign_classes(mut self, assignment: Assignment) -> AnchorSet {
        let c = self.class_count();
        let mut class_of_row: Vec<usize> = (0..c).collect();
        if let Assignment::Seeded(seed) = assignment {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            class_of_row.shuffle(&mut rng);
        }
        let mut row_of_class = vec![0; c];
        for (row, &class) in class_of_row.iter().enumerate() {
            row_of_class[class] = row;
        }
        self.class_of_row = class_of_row;
        self.row_of_class = row_of_class;
        self
    }

    /// Checks the two anchor principles: every row unit-norm (within 1e-9)
    /// and minimum pairwise angle at least `theta_m` radians. The angle
    /// comparison gets the same 1e-9 slack the norm check has, so a
    /// generator's exact nominal angle never fails by a rounding hair.
    pub fn validate(&self, theta_m: f64) -> ValidationReport {
        let mut norm_deviations = Vec::with_capacity(self.class_count());
        let mut failed_rows = Vec::new();
        for r in 0..self.class_count() {
            let dev = (dot(self.anchors.row(r), self.anchors.row(r)).sqrt() - 1.0).abs();
            if dev > NORM_TOL {
                failed_rows.push(r);
            }
            norm_deviations.push(dev);
        }
        let min_pairwise_angle = min_pairwise_angle_of(&self.anchors);
        let pass = failed_rows.is_empty() && min_pairwise_angle >= theta_m - NORM_TOL;
        ValidationReport {
            norm_deviations,
            failed_rows,
            min_pairwise_angle,
            theta_m,
            pass,
        }
    }

    pub fn class_count(&self) -> usize {
        self.anchors.rows()
    }

    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    pub fn anchors(&self) -> &Matrix {
        &self.anchors
    }

    /// The anchor vector assigned to `class`.
    pub fn anchor_of_class(&self, class: usize) -> &[f64] {
        self.anchors.row(self.row_of_class[class])
    }

    pub fn class_of_row(&self) -> &[usize] {
        &self.class_of_row
    }

    pub fn min_pairwise_angle(&self) -> f64 {
        self.min_pairwise_angle
    }

    pub fn method(&self) -> AnchorMethod {
        self.method
    }

    /// FNV-1a over the exact bit patterns of the anchors and the class
    /// assignment. Training must leave this untouched.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&(self.class_count() as u64).to_le_bytes());
        eat(&(self.dim() as u64).to_le_bytes());
        for v in self.anchors.data() {
            eat(&v.to_bits().to_le_bytes());
        }
        for &c in &self.class_of_row {
            eat(&(c as u64).to_le_bytes());
        }
        h
    }

    /// Writes `class,dim_0,...,dim_{d-1}` with one row per class in class
    /// order, full round-trip precision.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("class");
        for k in 0..self.dim() {
            let _ = write!(out, ",dim_{k}");
        }
        out.push('\n');
        for class in 0..self.class_count() {
            let _ = write!(out, "{class}");
            for v in self.anchor_of_class(class) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Reads a CSV written by `save_csv`. Rows come back in class order, so
    /// the loaded set carries an identity assignment; the class→anchor map
    /// is preserved either way.
    pub fn load_csv(path: &Path) -> Result<AnchorSet> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_string(&text)
    }

    pub fn from_csv_string(text: &str) -> Result<AnchorSet> {
        let mut offset = 0u64;
        let mut lines = Vec::new();
        for line in text.lines() {
            lines.push((offset, line));
            offset += line.len() as u64 + 1;
        }
        let Some(&(_, header)) = lines.first() else {
            return Err(Error::Parse {
                offset: 0,
                message: "empty anchor file".into(),
            });
        };
        if !header.starts_with("class,dim_0") {
            return Err(Error::Parse {
                offset: 0,
                message: format!("expected header starting with \"class,dim_0\", got {header:?}"),
            });
        }
        let dim = header.split(',').count() - 1;
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for &(line_offset, line) in &lines[1..] {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let class: usize = fields
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::Parse {
                    offset: line_offset,
                    message: format!("bad class label in line {line:?}"),
                })?;
            let coords: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse {
                    offset: line_offset,
                    message: format!("bad coordinate in line {line:?}"),
                })?;
            if coords.len() != dim {
                return Err(Error::Parse {
                    offset: line_offset,
                    message: format!("expected {dim} coordinates, got {}", coords.len()),
                });
            }
            rows.push((class, coords));
        }
        let c = rows.len();
        let mut seen = vec![false; c];
        let mut anchors = Matrix::zeros(c, dim);
        for (class, coords) in rows {
            if class >= c || seen[class] {
                return Err(Error::Parse {
                    offset: 0,
                    message: format!("class labels must cover 0..{c} exactly once, got {class}"),
                });
            }
            seen[class] = true;
            anchors.row_mut(class).copy_from_slice(&coords);
        }
        AnchorSet::from_rows(anchors, AnchorMethod::Custom)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalizes a row in place; false if the norm was too small to divide by.
fn normalize_row(row: &mut [f64]) -> bool {
    let norm = dot(row, row).sqrt();
    if norm <= 1e-12 {
        return false;
    }
    for v in row.iter_mut() {
        *v /= norm;
    }
    true
}

/// Minimum angle over all distinct row pairs, measured between directions
/// (rows are normalized by their norms first). π when there are no pairs.
fn min_pairwise_angle_of(anchors: &Matrix) -> f64 {
    let c = anchors.rows();
    let mut norms = Vec::with_capacity(c);
    for r in 0..c {
        norms.push(dot(anchors.row(r), anchors.row(r)).sqrt());
    }
    let mut max_cos = f64::NEG_INFINITY;
    for i in 0..c {
        for j in (i + 1)..c {
            let cosine = dot(anchors.row(i), anchors.row(j)) / (norms[i] * norms[j]);
            max_cos = max_cos.max(cosine);
        }
    }
    if max_cos == f64::NEG_INFINITY {
        std::f64::consts::PI
    } else {
        max_cos.clamp(-1.0, 1.0).acos()
    }
}
