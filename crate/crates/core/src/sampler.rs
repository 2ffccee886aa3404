//! Correlated vector generation: correlated normals through a Cholesky
//! factor, each component mapped by its polynomial model.
//!
//! Uniforms come from a ChaCha20 stream addressed by position, so draw
//! `k` of row `r` depends only on (seed, stream, r, k). Rows are produced
//! in parallel blocks and the output is identical for any thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::{build_rz, RzOptions, RzSolution};
use crate::error::{Error, Result};
use crate::numerics::{cholesky, normal_quantile};
use crate::poly_model::PolynomialModel;

const BLOCK_ROWS: usize = 4096;

/// Seed plus an independent stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    /// Generator positioned at the `index`-th 64-bit word of the stream.
    fn positioned(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(2 * index as u128);
        rng
    }
}

/// Maps 64 random bits to the open interval (0, 1).
#[inline]
fn open_uniform(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[inline]
fn next_normal(rng: &mut ChaCha20Rng) -> f64 {
    // open_uniform never returns 0 or 1, so the quantile always exists.
    normal_quantile(open_uniform(rng.next_u64())).expect("uniform in (0, 1)")
}

/// `count` independent standard normal draws from the start of the stream.
pub fn normal_stream(rng: RngSpec, count: usize) -> Vec<f64> {
    let blocks: Vec<Vec<f64>> = (0..count.div_ceil(BLOCK_ROWS))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_ROWS;
            let len = BLOCK_ROWS.min(count - start);
            let mut g = rng.positioned(start as u64);
            (0..len).map(|_| next_normal(&mut g)).collect()
        })
        .collect();
    blocks.concat()
}

/// Row-major table of generated vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain("sample data length does not match its shape"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A set of marginal models coupled through a normal-space correlation.
#[derive(Debug, Clone)]
pub struct VectorModel {
    models: Vec<PolynomialModel>,
    rx: DMatrix<f64>,
    rz: DMatrix<f64>,
    l: DMatrix<f64>,
    repaired: bool,
}

impl VectorModel {
    /// Solves the normal-space correlation for the target `rx`.
    pub fn new(models: Vec<PolynomialModel>, rx: DMatrix<f64>, opts: RzOptions) -> Result<Self> {
        let sol = build_rz(&models, &rx, opts)?;
        Ok(Self::from_solution(models, rx, sol))
    }

    pub fn from_solution(models: Vec<PolynomialModel>, rx: DMatrix<f64>, sol: RzSolution) -> Self {
        Self {
            models,
            rx,
            rz: sol.rz,
            l: sol.l,
            repaired: sol.repaired,
        }
    }

    /// Uses a given normal-space correlation matrix directly.
    pub fn with_rz(models: Vec<PolynomialModel>, rz: DMatrix<f64>) -> Result<Self> {
        if rz.nrows() != models.len() {
            return Err(Error::domain("correlation matrix does not match the number of models"));
        }
        let l = cholesky(&rz)?;
        Ok(Self {
            rx: rz.clone(),
            models,
            rz,
            l,
            repaired: false,
        })
    }

    pub fn dimension(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[PolynomialModel] {
        &self.models
    }

    pub fn target_correlation(&self) -> &DMatrix<f64> {
        &self.rx
    }

    pub fn normal_correlation(&self) -> &DMatrix<f64> {
        &self.rz
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Whether the normal-space matrix was replaced by a nearby PD matrix.
    pub fn repaired(&self) -> bool {
        self.repaired
    }

    fn fill_row(&self, g: &mut ChaCha20Rng, u: &mut [f64], out: &mut [f64]) {
        let m = self.models.len();
        for v in u.iter_mut() {
            *v = next_normal(g);
        }
        for i in 0..m {
            let mut z = 0.0;
            for j in 0..=i {
                z += self.l[(i, j)] * u[j];
            }
            out[i] = self.models[i].evaluate(z);
        }
    }
}

/// Generates `count` correlated vectors.
pub fn generate(vm: &VectorModel, count: usize, rng: RngSpec) -> SampleMatrix {
    let m = vm.dimension();
    let mut data = vec![0.0; count * m];
    data.par_chunks_mut(BLOCK_ROWS * m.max(1))
        .enumerate()
        .for_each(|(b, chunk)| {
            let first_row = (b * BLOCK_ROWS) as u64;
            let mut g = rng.positioned(first_row * m as u64);
            let mut u = vec![0.0; m];
            for out in chunk.chunks_mut(m.max(1)) {
                vm.fill_row(&mut g, &mut u, out);
            }
        });
    SampleMatrix {
        rows: count,
        cols: m,
        data,
    }
}

/// Pearson correlation matrix of the columns.
pub fn sample_correlation(s: &SampleMatrix) -> Result<DMatrix<f64>> {
    let (n, m) = (s.rows, s.cols);
    if n < 2 {
        return Err(Error::InsufficientSample { size: n, required: 2 });
    }
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (j, mu) in mean.iter_mut().enumerate() {
            *mu += s.data[i * m + j];
        }
    }
    for mu in mean.iter_mut() {
        *mu /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        let row = s.row(i);
        for a in 0..m {
            let da = row[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..m {
        if !(cov[(a, a)] > 0.0) {
            return Err(Error::DegenerateMarginal(format!("column {a} has zero variance")));
        }
    }
    let mut r = DMatrix::identity(m, m);
    for a in 0..m {
        for b in 0..a {
            let v = cov[(a, b)] / (cov[(a, a)] * cov[(b, b)]).sqrt();
            r[(a, b)] = v;
            r[(b, a)] = v;
        }
    }
    Ok(r)
}
