//! Structural description of the state vector: blocks for the mean and the
//! precision predictors, assembled block-diagonally into `F_t`, `G_t`, the
//! discount matrix `D` and any explicit evolution variance `W`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expfam::Family;

#[derive(Debug, Clone, PartialEq)]
pub enum BlockKind {
    /// Jordan block `J_order(1)`; order 1 is a level, order 2 level + trend.
    Polynomial { order: usize },
    /// Single harmonic with frequency `omega` (radians per step).
    Harmonic { omega: f64 },
    /// Static regression on lagged columns, lag-major:
    /// `(1, x_{a,t-1}, x_{b,t-1}, …, x_{a,t-2}, …)`.
    Regression {
        columns: Vec<String>,
        lags: usize,
        intercept: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub kind: BlockKind,
    /// Discount factor in `(0, 1]`; ignored when `w` is set.
    pub discount: f64,
    /// Explicit evolution variance for this block.
    pub w: Option<DMatrix<f64>>,
}

pub fn polynomial_block(order: usize) -> Result<Block> {
    if order == 0 {
        return Err(Error::Config("polynomial block order must be at least 1".into()));
    }
    Ok(Block::new(BlockKind::Polynomial { order }))
}

pub fn harmonic_block(omega: f64) -> Result<Block> {
    if !(omega > 0.0 && omega <= PI) {
        return Err(Error::Config(format!("harmonic frequency {omega} must lie in (0, pi]")));
    }
    Ok(Block::new(BlockKind::Harmonic { omega }))
}

pub fn regression_block(columns: &[&str], lags: usize) -> Result<Block> {
    if columns.is_empty() {
        return Err(Error::Config("regression block needs at least one column".into()));
    }
    if lags == 0 {
        return Err(Error::Config("regression block needs lags >= 1".into()));
    }
    Ok(Block::new(BlockKind::Regression {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        lags,
        intercept: true,
    }))
}

impl Block {
    pub fn new(kind: BlockKind) -> Self {
        Block {
            kind,
            discount: 1.0,
            w: None,
        }
    }

    pub fn with_discount(mut self, delta: f64) -> Self {
        self.discount = delta;
        self
    }

    pub fn with_w(mut self, w: DMatrix<f64>) -> Self {
        self.w = Some(w);
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            BlockKind::Polynomial { order } => *order,
            BlockKind::Harmonic { .. } => 2,
            BlockKind::Regression {
                columns,
                lags,
                intercept,
            } => usize::from(*intercept) + columns.len() * lags,
        }
    }

    pub fn max_lag(&self) -> usize {
        match &self.kind {
            BlockKind::Regression { lags, .. } => *lags,
            _ => 0,
        }
    }

    pub fn local_g(&self) -> DMatrix<f64> {
        match &self.kind {
            BlockKind::Polynomial { order } => {
                let n = *order;
                DMatrix::from_fn(n, n, |i, j| if i == j || j == i + 1 { 1.0 } else { 0.0 })
            }
            BlockKind::Harmonic { omega } => {
                let (s, c) = omega.sin_cos();
                DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
            }
            BlockKind::Regression { .. } => DMatrix::identity(self.dim(), self.dim()),
        }
    }

    /// Regression vector of the block at row `t` of `data`.
    pub fn local_f(&self, t: usize, data: &Covariates) -> Result<DVector<f64>> {
        let mut f = DVector::zeros(self.dim());
        match &self.kind {
            BlockKind::Polynomial { .. } | BlockKind::Harmonic { .. } => f[0] = 1.0,
            BlockKind::Regression {
                columns,
                lags,
                intercept,
            } => {
                if t < *lags {
                    return Err(Error::Data(format!(
                        "t = {t} is inside the {lags}-step warm-up of a lagged regression block"
                    )));
                }
                let mut k = 0;
                if *intercept {
                    f[0] = 1.0;
                    k = 1;
                }
                for lag in 1..=*lags {
                    let row = t - lag;
                    for name in columns {
                        let col = data
                            .column(name)
                            .ok_or_else(|| Error::Config(format!("unknown covariate column `{name}`")))?;
                        f[k] = *col.get(row).ok_or_else(|| {
                            Error::Horizon(format!(
                                "covariate `{name}` is needed at row {row} but only {} rows are available",
                                col.len()
                            ))
                        })?;
                        k += 1;
                    }
                }
            }
        }
        Ok(f)
    }
}

/// Named numeric columns of equal length.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Covariates {
    pub fn new() -> Self {
        Covariates::default()
    }

    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Self {
        self.push(name, values);
        self
    }

    pub fn push(&mut self, name: &str, values: Vec<f64>) {
        if let Some(i) = self.names.iter().position(|n| n == name) {
            self.columns[i] = values;
        } else {
            self.names.push(name.to_string());
            self.columns.push(values);
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Rows shared by all columns.
    pub fn rows(&self) -> usize {
        self.columns.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// First `n` rows of every column.
    pub fn truncated(&self, n: usize) -> Covariates {
        Covariates {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[..n.min(c.len())].to_vec()).collect(),
        }
    }

    /// Appends rows of `other` (matched by name) to this table.
    pub fn extended(&self, other: &Covariates) -> Covariates {
        let mut out = self.clone();
        for (name, col) in out.names.iter().zip(out.columns.iter_mut()) {
            if let Some(extra) = other.column(name) {
                col.extend_from_slice(extra);
            }
        }
        out
    }
}

/// Time-specific structural matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignAt {
    /// `p × 2`; column 0 loads the mean predictor, column 1 the precision predictor.
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    /// Diagonal of `D`: `δ^{-1/2}` on discounted blocks, 1 elsewhere.
    pub d: DVector<f64>,
    /// Explicit evolution variance, zero on discounted blocks.
    pub w: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub mean_blocks: Vec<Block>,
    pub precision_blocks: Vec<Block>,
}

impl ModelSpec {
    pub fn new(family: Family, mean_blocks: Vec<Block>, precision_blocks: Vec<Block>) -> Result<Self> {
        let spec = ModelSpec {
            family,
            mean_blocks,
            precision_blocks,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_blocks.is_empty() || self.precision_blocks.is_empty() {
            return Err(Error::Config(
                "both the mean and the precision predictor need at least one block".into(),
            ));
        }
        for (i, b) in self.blocks().enumerate() {
            if !(b.discount > 0.0 && b.discount <= 1.0) {
                return Err(Error::Config(format!("block {i}: discount {} outside (0, 1]", b.discount)));
            }
            if let Some(w) = &b.w {
                if w.nrows() != b.dim() || w.ncols() != b.dim() {
                    return Err(Error::Config(format!(
                        "block {i}: W is {}x{} but the block has dimension {}",
                        w.nrows(),
                        w.ncols(),
                        b.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Mean blocks followed by precision blocks.
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.mean_blocks.iter().chain(&self.precision_blocks)
    }

    pub fn blocks_mut(&mut self) -> impl Iterator<Item = &mut Block> {
        self.mean_blocks.iter_mut().chain(self.precision_blocks.iter_mut())
    }

    pub fn n_blocks(&self) -> usize {
        self.mean_blocks.len() + self.precision_blocks.len()
    }

    pub fn p1(&self) -> usize {
        self.mean_blocks.iter().map(Block::dim).sum()
    }

    pub fn p2(&self) -> usize {
        self.precision_blocks.iter().map(Block::dim).sum()
    }

    pub fn dim(&self) -> usize {
        self.p1() + self.p2()
    }

    pub fn max_lag(&self) -> usize {
        self.blocks().map(Block::max_lag).max().unwrap_or(0)
    }

    /// Copy with per-block discounts replaced (mean blocks first).
    pub fn with_discounts(&self, deltas: &[f64]) -> Result<ModelSpec> {
        if deltas.len() != self.n_blocks() {
            return Err(Error::Config(format!(
                "{} discounts given for {} blocks",
                deltas.len(),
                self.n_blocks()
            )));
        }
        let mut spec = self.clone();
        for (b, &d) in spec.blocks_mut().zip(deltas) {
            b.discount = d;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Checks that every referenced covariate column exists.
    pub fn check_columns(&self, data: &Covariates) -> Result<()> {
        for b in self.blocks() {
            if let BlockKind::Regression { columns, .. } = &b.kind {
                for c in columns {
                    if data.column(c).is_none() {
                        return Err(Error::Config(format!("unknown covariate column `{c}`")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Block-diagonal `F`, `G`, `D`, `W` at row `t` of `data`.
    pub fn design_at(&self, t: usize, data: &Covariates) -> Result<DesignAt> {
        let p = self.dim();
        let mut f = DMatrix::zeros(p, 2);
        let mut g = DMatrix::zeros(p, p);
        let mut d = DVector::from_element(p, 1.0);
        let mut w = DMatrix::zeros(p, p);
        let mut off = 0;
        let parts = self
            .mean_blocks
            .iter()
            .map(|b| (b, 0))
            .chain(self.precision_blocks.iter().map(|b| (b, 1)));
        for (block, col) in parts {
            let n = block.dim();
            let lf = block.local_f(t, data)?;
            f.view_mut((off, col), (n, 1)).copy_from(&lf);
            g.view_mut((off, off), (n, n)).copy_from(&block.local_g());
            match &block.w {
                Some(bw) => w.view_mut((off, off), (n, n)).copy_from(bw),
                None => d.rows_mut(off, n).fill(block.discount.powf(-0.5)),
            }
            off += n;
        }
        Ok(DesignAt { f, g, d, w })
    }
}
