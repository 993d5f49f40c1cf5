//! Classical comparison estimators. LS with nearest-pilot fill and the
//! spline extrapolator live with their tasks and are re-exported here; this
//! module adds empirical LMMSE filtering of the pilot LS estimates.

use std::path::Path;

use nalgebra::DMatrix;

use crate::channel_model::{ChannelMatrix, C64};
use crate::error::{Error, Result};
use crate::io::{load_tensors, save_tensors, NamedTensor};
use crate::tasks::ce::{ls_at_pilots, PilotObservation};
use crate::tasks::PilotPattern;

pub use crate::tasks::ae::spline_init as spline_baseline;
pub use crate::tasks::ce::ls_init as ls_baseline;

/// Frequency-domain filter for one antenna column: maps the LS values at that
/// column's pilots to all `N_s` subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseFilter {
    pub column: usize,
    pub pilot_rows: Vec<usize>,
    /// `R_{h,hp} (R_{hp,hp} + sigma2 I)^-1`, `N_s x N_sp`.
    pub a: DMatrix<C64>,
    pub r_h_hp: DMatrix<C64>,
    pub r_hp_hp: DMatrix<C64>,
    pub sigma2: f64,
}

/// Empirical correlations of column `column` over the training channels.
pub fn correlations(
    train: &[ChannelMatrix],
    rows: &[usize],
    column: usize,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let first = train
        .first()
        .ok_or_else(|| Error::EmptyDataset("LMMSE fit without training channels".into()))?;
    let n_s = first.n_s();
    let n_p = rows.len();
    let mut r_h_hp = DMatrix::<C64>::zeros(n_s, n_p);
    let mut r_hp_hp = DMatrix::<C64>::zeros(n_p, n_p);
    for h in train {
        if h.n_s() != n_s || column >= h.n_t() {
            return Err(Error::dim("training channels differ in shape"));
        }
        let col = h.values().column(column);
        let hv = DMatrix::from_iterator(n_s, 1, col.iter().copied());
        let hp = DMatrix::from_iterator(n_p, 1, rows.iter().map(|&i| col[i]));
        r_h_hp += &hv * hp.adjoint();
        r_hp_hp += &hp * hp.adjoint();
    }
    let inv = 1.0 / train.len() as f64;
    Ok((r_h_hp * C64::new(inv, 0.0), r_hp_hp * C64::new(inv, 0.0)))
}

/// `A = R_{h,hp} (R_{hp,hp} + sigma2 I)^-1` via a Cholesky solve.
pub fn lmmse_matrix(r_h_hp: &DMatrix<C64>, r_hp_hp: &DMatrix<C64>, sigma2: f64) -> Result<DMatrix<C64>> {
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma2 = {sigma2}")));
    }
    let n_p = r_hp_hp.nrows();
    let m = r_hp_hp + DMatrix::<C64>::identity(n_p, n_p) * C64::new(sigma2, 0.0);
    // symmetrize against round-off before factoring
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let chol = m.cholesky().ok_or(Error::Regularization)?;
    let pivots: Vec<f64> = chol.l_dirty().diagonal().iter().map(|v| v.norm_sqr()).collect();
    let largest = pivots.iter().cloned().fold(0.0, f64::max);
    if pivots.iter().any(|&p| !(p > 1e-12 * largest)) {
        return Err(Error::Regularization);
    }
    // A M = R  <=>  M A^H = R^H
    Ok(chol.solve(&r_h_hp.adjoint()).adjoint())
}

pub fn fit_lmmse_column(
    train: &[ChannelMatrix],
    pattern: &PilotPattern,
    sigma2: f64,
    column: usize,
) -> Result<LmmseFilter> {
    let rows = pattern.column_rows(column);
    let (r_h_hp, r_hp_hp) = correlations(train, &rows, column)?;
    let a = lmmse_matrix(&r_h_hp, &r_hp_hp, sigma2)?;
    Ok(LmmseFilter {
        column,
        pilot_rows: rows,
        a,
        r_h_hp,
        r_hp_hp,
        sigma2,
    })
}

/// One filter per antenna column.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseBank {
    pub n_s: usize,
    pub filters: Vec<LmmseFilter>,
}

pub fn fit_lmmse(train: &[ChannelMatrix], pattern: &PilotPattern, sigma2: f64) -> Result<LmmseBank> {
    let filters = (0..pattern.n_t())
        .map(|j| fit_lmmse_column(train, pattern, sigma2, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(LmmseBank {
        n_s: pattern.n_s(),
        filters,
    })
}

/// Per column `ĥ = A_j ĥ_p^LS`.
pub fn lmmse_estimate(
    obs: &PilotObservation,
    pattern: &PilotPattern,
    bank: &LmmseBank,
) -> Result<ChannelMatrix> {
    if bank.filters.len() != pattern.n_t() || bank.n_s != pattern.n_s() {
        return Err(Error::dim("LMMSE filters fitted for another grid"));
    }
    let ls = ls_at_pilots(obs, pattern)?;
    let mut per_col: Vec<Vec<C64>> = vec![Vec::new(); pattern.n_t()];
    for (&(_, j), v) in pattern.positions().iter().zip(ls) {
        per_col[j].push(v);
    }
    let mut h = ChannelMatrix::zeros(bank.n_s, pattern.n_t());
    for (f, vals) in bank.filters.iter().zip(per_col) {
        if f.pilot_rows != pattern.column_rows(f.column) {
            return Err(Error::dim(format!("filter for antenna {} uses other pilots", f.column)));
        }
        let est = &f.a * DMatrix::from_vec(vals.len(), 1, vals);
        for (i, v) in est.iter().enumerate() {
            h.values_mut()[(i, f.column)] = *v;
        }
    }
    Ok(h)
}

/// Joint filter over the whole vectorized grid (column-major order of
/// `(subcarrier, antenna)`). Only tractable at small grids.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLmmse {
    pub n_s: usize,
    pub n_t: usize,
    pub a: DMatrix<C64>,
}

pub fn fit_joint_lmmse(train: &[ChannelMatrix], pattern: &PilotPattern, sigma2: f64) -> Result<JointLmmse> {
    if train.is_empty() {
        return Err(Error::EmptyDataset("LMMSE fit without training channels".into()));
    }
    let (n_s, n_t) = (pattern.n_s(), pattern.n_t());
    let n = n_s * n_t;
    let n_p = pattern.n_pilots();
    let mut r_h_hp = DMatrix::<C64>::zeros(n, n_p);
    let mut r_hp_hp = DMatrix::<C64>::zeros(n_p, n_p);
    for h in train {
        if (h.n_s(), h.n_t()) != (n_s, n_t) {
            return Err(Error::dim("training channels differ in shape"));
        }
        let hv = DMatrix::from_iterator(n, 1, h.values().t().iter().copied());
        let hp = DMatrix::from_iterator(n_p, 1, pattern.positions().iter().map(|&p| h.values()[p]));
        r_h_hp += &hv * hp.adjoint();
        r_hp_hp += &hp * hp.adjoint();
    }
    let inv = C64::new(1.0 / train.len() as f64, 0.0);
    let a = lmmse_matrix(&(r_h_hp * inv), &(r_hp_hp * inv), sigma2)?;
    Ok(JointLmmse { n_s, n_t, a })
}

pub fn joint_lmmse_estimate(
    obs: &PilotObservation,
    pattern: &PilotPattern,
    filter: &JointLmmse,
) -> Result<ChannelMatrix> {
    if (filter.n_s, filter.n_t) != (pattern.n_s(), pattern.n_t()) || filter.a.ncols() != pattern.n_pilots() {
        return Err(Error::dim("joint LMMSE filter fitted for another pattern"));
    }
    let ls = ls_at_pilots(obs, pattern)?;
    let est = &filter.a * DMatrix::from_vec(ls.len(), 1, ls);
    let mut h = ChannelMatrix::zeros(filter.n_s, filter.n_t);
    for (k, v) in est.iter().enumerate() {
        h.values_mut()[(k % filter.n_s, k / filter.n_s)] = *v;
    }
    Ok(h)
}

fn split(m: &DMatrix<C64>, name: &str) -> Result<[NamedTensor; 2]> {
    // row-major payload
    let (r, c) = m.shape();
    let re = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|p| m[p].re as f32).collect();
    let im = (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|p| m[p].im as f32).collect();
    Ok([
        NamedTensor::new(format!("{name}.re"), vec![r, c], re)?,
        NamedTensor::new(format!("{name}.im"), vec![r, c], im)?,
    ])
}

fn find<'a>(tensors: &'a [NamedTensor], name: &str) -> Result<&'a NamedTensor> {
    tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::format("LMMSE cache", format!("missing tensor {name}")))
}

impl LmmseBank {
    /// Filter matrices and pilot rows as named tensors. Correlations are not
    /// stored; a loaded bank carries empty correlation matrices.
    pub fn to_tensors(&self) -> Result<Vec<NamedTensor>> {
        let mut out = vec![NamedTensor::new(
            "meta",
            vec![3],
            vec![self.n_s as f32, self.filters.len() as f32, self.filters.first().map_or(0.0, |f| f.sigma2 as f32)],
        )?];
        for f in &self.filters {
            out.extend(split(&f.a, &format!("col{}", f.column))?);
            out.push(NamedTensor::new(
                format!("col{}.rows", f.column),
                vec![f.pilot_rows.len()],
                f.pilot_rows.iter().map(|&r| r as f32).collect(),
            )?);
        }
        Ok(out)
    }

    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let meta = find(tensors, "meta")?;
        if meta.data.len() != 3 {
            return Err(Error::format("LMMSE cache", "meta must hold three values"));
        }
        let n_s = meta.data[0] as usize;
        let n_t = meta.data[1] as usize;
        let sigma2 = f64::from(meta.data[2]);
        let mut filters = Vec::with_capacity(n_t);
        for j in 0..n_t {
            let re = find(tensors, &format!("col{j}.re"))?;
            let im = find(tensors, &format!("col{j}.im"))?;
            let rows = find(tensors, &format!("col{j}.rows"))?;
            let (r, c) = match re.dims.as_slice() {
                [r, c] if *r == n_s && *c == rows.data.len() && im.dims == re.dims => (*r, *c),
                _ => return Err(Error::format("LMMSE cache", format!("bad shape for column {j}"))),
            };
            let a = DMatrix::from_fn(r, c, |i, k| {
                C64::new(f64::from(re.data[i * c + k]), f64::from(im.data[i * c + k]))
            });
            filters.push(LmmseFilter {
                column: j,
                pilot_rows: rows.data.iter().map(|&v| v as usize).collect(),
                a,
                r_h_hp: DMatrix::zeros(0, 0),
                r_hp_hp: DMatrix::zeros(0, 0),
                sigma2,
            });
        }
        Ok(Self { n_s, filters })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_tensors(path, &self.to_tensors()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensors(&load_tensors(path)?)
    }
}
