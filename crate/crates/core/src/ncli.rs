//! Length-normalized MaxSim and pairwise similarity matrices.
//!
//! ```text
//! ncolbert(x, y) = (1/|x|) Σ_i max_j <x_i, y_j>
//! ```
//!
//! The score is asymmetric: `x` plays the query role. Dot products and the
//! final sum run in `f64`. The per-token maxima are summed in sorted order, so
//! the score does not depend on the order of `x`'s tokens, bit for bit.

use std::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::embedstore::TokenMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Persona,
    Knowledge,
    Utterance,
}

/// `values[i * cols + j] = ncolbert(X[i], Y[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub source_tags: (Source, Source),
}

impl SimMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// First column; the utterance side of a matrix has a single entry.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

pub fn ncolbert(x: &TokenMatrix, y: &TokenMatrix) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput(
            "ncolbert needs at least one token on each side",
        ));
    }
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "token widths differ: {} vs {}",
            x.dim(),
            y.dim()
        )));
    }
    let mut maxima: Vec<f64> = x
        .rows()
        .map(|xi| {
            y.rows()
                .map(|yj| dot(xi, yj))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    maxima.sort_unstable_by(f64::total_cmp);
    Ok(maxima.iter().sum::<f64>() / x.len() as f64)
}

/// Scores every entry of `xs` against every entry of `ys`.
pub fn ncli<X, Y>(xs: &[X], ys: &[Y], source_tags: (Source, Source)) -> Result<SimMatrix>
where
    X: Borrow<TokenMatrix>,
    Y: Borrow<TokenMatrix>,
{
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput("ncli needs non-empty candidate lists"));
    }
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let score = ncolbert(x.borrow(), y.borrow())
                .map_err(|e| e.context(format!("ncli cell ({i}, {j})")))?;
            values.push(score);
        }
    }
    Ok(SimMatrix {
        rows: xs.len(),
        cols: ys.len(),
        values,
        source_tags,
    })
}
