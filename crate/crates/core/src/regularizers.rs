//! Distance penalties between the original input and its counterfactual.

use std::io::Read;

use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};
use crate::solvers::LinearConstraint;

/// Lower clamp on a feature's median absolute deviation.
pub const MAD_FLOOR: f64 = 1e-9;
/// Weight given to features whose MAD falls below [`MAD_FLOOR`].
pub const MAD_CAP: f64 = 1e9;

/// Weighted Manhattan (`Σ α_j |x_j - x'_j|`) or squared Euclidean (`‖x' - x‖²`).
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Manhattan { weights: Vec<f64> },
    Euclidean,
}

impl Regularizer {
    pub fn manhattan(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidQuery("manhattan weights are empty".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidQuery(
                "manhattan weights must be finite and strictly positive".into(),
            ));
        }
        Ok(Regularizer::Manhattan { weights })
    }

    /// All weights equal to one; needs no training data.
    pub fn uniform_manhattan(dim: usize) -> Self {
        Regularizer::Manhattan {
            weights: vec![1.0; dim],
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Regularizer::Euclidean)
    }

    pub fn check_dimension(&self, dim: usize) -> Result<()> {
        match self {
            Regularizer::Manhattan { weights } if weights.len() != dim => {
                Err(Error::DimensionMismatch {
                    expected: dim,
                    found: weights.len(),
                })
            }
            _ => Ok(()),
        }
    }

    /// Per-coordinate cost `φ_j(x'_j)`; the regularizer is their sum.
    pub fn coordinate_cost(&self, j: usize, x: f64, xp: f64) -> f64 {
        match self {
            Regularizer::Manhattan { weights } => weights[j] * (x - xp).abs(),
            Regularizer::Euclidean => (xp - x) * (xp - x),
        }
    }

    pub fn eval(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        if x.len() != xp.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                found: xp.len(),
            });
        }
        self.check_dimension(x.len())?;
        Ok((0..x.len()).map(|j| self.coordinate_cost(j, x[j], xp[j])).sum())
    }

    pub fn objective_pieces(&self, x: &[f64]) -> Result<ObjectivePieces> {
        self.check_dimension(x.len())?;
        Ok(match self {
            Regularizer::Manhattan { weights } => {
                ObjectivePieces::Epigraph(EpigraphLpPieces::new(weights, x))
            }
            Regularizer::Euclidean => ObjectivePieces::Quadratic(QuadraticPieces {
                hessian: DenseMatrix::identity(x.len()),
                linear: x.iter().map(|v| -v).collect(),
                constant: dot(x, x),
            }),
        })
    }
}

/// Objective data handed to the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectivePieces {
    Epigraph(EpigraphLpPieces),
    Quadratic(QuadraticPieces),
}

/// `‖x' - x‖² = 2·(½ x'ᵀ Q x' + linearᵀ x') + constant` with `Q = I`, `linear = -x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPieces {
    pub hessian: DenseMatrix,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl QuadraticPieces {
    pub fn reconstruct(&self, xp: &[f64]) -> f64 {
        2.0 * (0.5 * self.hessian.quad_form(xp) + dot(&self.linear, xp)) + self.constant
    }
}

/// Epigraph LP over `z = (x', β) ∈ ℝ²ᵈ`:
///
/// ```text
/// min 1ᵀβ  s.t.  Υx' - Υx ≤ β,  -Υx' + Υx ≤ β,  β ≥ 0,   Υ = diag(α)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct EpigraphLpPieces {
    pub dim: usize,
    pub upsilon: Vec<f64>,
    /// Cost over `z`: zeros for `x'`, ones for `β`.
    pub cost: Vec<f64>,
    /// The `3d` rows as `qᵀz + c ≤ 0`.
    pub rows: Vec<LinearConstraint>,
}

impl EpigraphLpPieces {
    fn new(weights: &[f64], x: &[f64]) -> Self {
        let d = x.len();
        let mut cost = vec![0.0; 2 * d];
        cost[d..].iter_mut().for_each(|c| *c = 1.0);
        let mut rows = Vec::with_capacity(3 * d);
        for j in 0..d {
            let a = weights[j];
            let mut up = vec![0.0; 2 * d];
            up[j] = a;
            up[d + j] = -1.0;
            rows.push(LinearConstraint::new(up, -a * x[j]));
            let mut down = vec![0.0; 2 * d];
            down[j] = -a;
            down[d + j] = -1.0;
            rows.push(LinearConstraint::new(down, a * x[j]));
        }
        for j in 0..d {
            let mut nonneg = vec![0.0; 2 * d];
            nonneg[d + j] = -1.0;
            rows.push(LinearConstraint::new(nonneg, 0.0));
        }
        Self {
            dim: d,
            upsilon: weights.to_vec(),
            cost,
            rows,
        }
    }

    /// Lifts `x'` to the tightest epigraph point `(x', β)` with `β_j = α_j |x'_j - x_j|`.
    pub fn lift(&self, x: &[f64], xp: &[f64]) -> Vec<f64> {
        let mut z = xp.to_vec();
        z.extend((0..self.dim).map(|j| self.upsilon[j] * (xp[j] - x[j]).abs()));
        z
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn sorted(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Median absolute deviation of one column.
pub fn median_absolute_deviation(column: &[f64]) -> f64 {
    let m = median(&sorted(column.iter().copied()));
    median(&sorted(column.iter().map(|v| (v - m).abs())))
}

/// Inverse-MAD feature weights, `α_j = 1 / MAD_j`, or `MAD_CAP` when `MAD_j < MAD_FLOOR`.
///
/// `columns[j]` holds every observation of feature `j`.
pub fn mad_weights(columns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let rows = columns.first().map_or(0, Vec::len);
    if columns.is_empty() || rows == 0 {
        return Err(Error::EmptyDataset);
    }
    if columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Parse("ragged dataset columns".into()));
    }
    if columns.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("dataset"));
    }
    Ok(columns
        .iter()
        .map(|c| {
            let mad = median_absolute_deviation(c);
            if mad < MAD_FLOOR {
                MAD_CAP
            } else {
                1.0 / mad
            }
        })
        .collect())
}

/// Reads a numeric CSV with a header row into columns.
pub fn read_dataset<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .len();
    let mut columns = vec![Vec::new(); width];
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(e.to_string()))?;
        if record.len() != width {
            return Err(Error::Parse(format!("row {} has {} cells, expected {width}", i + 1, record.len())));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: `{cell}` is not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(Error::NonFinite("dataset"));
            }
            columns[j].push(v);
        }
    }
    if width == 0 || columns[0].is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(columns)
}

/// Rows of a dataset, for batch inputs.
pub fn transpose_columns(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = columns.first().map_or(0, Vec::len);
    (0..rows).map(|r| columns.iter().map(|c| c[r]).collect()).collect()
}
