//! Antenna extrapolation: full-array CSI from a subset of antennas.

use ndarray::Array2;

use super::pattern::AntennaSelection;
use super::spline::NaturalSpline;
use crate::channel_model::{AngularTransform, ChannelMatrix, C64};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::hqs::{run_pnp, IterationTrace, ProxStep, SolverConfig};

/// Selected columns of `h`, `N_s x N̄_t`.
pub fn observe_antennas(h: &ChannelMatrix, sel: &AntennaSelection) -> Result<Array2<C64>> {
    if h.n_t() != sel.n_t() {
        return Err(Error::dim(format!(
            "selection over {} antennas, channel has {}",
            sel.n_t(),
            h.n_t()
        )));
    }
    Ok(h.values().select(ndarray::Axis(1), sel.selected()))
}

fn check_observed(observed: &Array2<C64>, sel: &AntennaSelection) -> Result<()> {
    if observed.ncols() != sel.n_selected() {
        return Err(Error::dim(format!(
            "{} observed columns for {} selected antennas",
            observed.ncols(),
            sel.n_selected()
        )));
    }
    Ok(())
}

/// Natural cubic spline along the antenna index, per subcarrier and
/// separately for the real and imaginary parts.
pub fn spline_init(observed: &Array2<C64>, sel: &AntennaSelection) -> Result<ChannelMatrix> {
    check_observed(observed, sel)?;
    if sel.n_selected() < 2 {
        return Err(Error::InvalidParameter(
            "spline extrapolation needs at least two antennas".into(),
        ));
    }
    let xs: Vec<f64> = sel.selected().iter().map(|&j| j as f64).collect();
    let mut out = Array2::<C64>::zeros((observed.nrows(), sel.n_t()));
    for (i, row) in observed.rows().into_iter().enumerate() {
        let re: Vec<f64> = row.iter().map(|v| v.re).collect();
        let im: Vec<f64> = row.iter().map(|v| v.im).collect();
        let (sr, si) = (NaturalSpline::fit(&xs, &re)?, NaturalSpline::fit(&xs, &im)?);
        for j in 0..sel.n_t() {
            out[(i, j)] = C64::new(sr.eval(j as f64), si.eval(j as f64));
        }
        // exact on the knots
        for (k, &j) in sel.selected().iter().enumerate() {
            out[(i, j)] = row[k];
        }
    }
    ChannelMatrix::new(out)
}

/// `(h̃ + rho z) / (1 + rho)` on selected columns, `z` elsewhere.
pub fn prox_ae(
    observed: &Array2<C64>,
    sel: &AntennaSelection,
    z: &ChannelMatrix,
    rho: f64,
) -> Result<ChannelMatrix> {
    check_observed(observed, sel)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho = {rho}")));
    }
    if z.n_t() != sel.n_t() || z.n_s() != observed.nrows() {
        return Err(Error::dim("iterate and observation differ in shape"));
    }
    let mut out = z.clone();
    let v = out.values_mut();
    for (k, &j) in sel.selected().iter().enumerate() {
        for i in 0..observed.nrows() {
            v[(i, j)] = (observed[(i, k)] + z.values()[(i, j)] * rho) / (1.0 + rho);
        }
    }
    Ok(out)
}

pub struct AeProx<'a> {
    pub observed: &'a Array2<C64>,
    pub sel: &'a AntennaSelection,
}

impl ProxStep<ChannelMatrix> for AeProx<'_> {
    fn prox(&self, z: &ChannelMatrix, rho: f64) -> Result<ChannelMatrix> {
        prox_ae(self.observed, self.sel, z, rho)
    }
}

/// Plug-and-play antenna extrapolation from a spline start.
pub fn pppae(
    observed: &Array2<C64>,
    sel: &AntennaSelection,
    den: &dyn Denoiser,
    cfg: &SolverConfig,
    transform: &AngularTransform,
    truth: Option<&ChannelMatrix>,
) -> Result<(ChannelMatrix, IterationTrace)> {
    let z0 = spline_init(observed, sel)?;
    run_pnp(&AeProx { observed, sel }, den, &z0, cfg, transform, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n_s: usize, n_t: usize) -> ChannelMatrix {
        ChannelMatrix::new(Array2::from_shape_fn((n_s, n_t), |(i, j)| {
            C64::new((i * 3 + j * j) as f64 % 7.0, (i as f64 - j as f64).sin())
        }))
        .unwrap()
    }

    #[test]
    fn select_all_and_select_one() {
        let h = grid(4, 5);
        let all = AntennaSelection::new(5, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(&observe_antennas(&h, &all).unwrap(), h.values());
        let one = AntennaSelection::new(5, &[3]).unwrap();
        let col = observe_antennas(&h, &one).unwrap();
        assert_eq!(col.column(0), h.values().column(3));
    }

    #[test]
    fn spline_reproduces_linear_rows_and_keeps_knots() {
        let lin = ChannelMatrix::new(Array2::from_shape_fn((3, 8), |(i, j)| {
            C64::new(2.0 * j as f64 + i as f64, -0.5 * j as f64)
        }))
        .unwrap();
        let sel = AntennaSelection::preset("B", 8).unwrap();
        let out = spline_init(&observe_antennas(&lin, &sel).unwrap(), &sel).unwrap();
        for (a, b) in out.values().iter().zip(lin.values()) {
            assert!((a - b).norm() < 1e-12);
        }
        let h = grid(3, 8);
        let obs = observe_antennas(&h, &sel).unwrap();
        let out = spline_init(&obs, &sel).unwrap();
        for &j in sel.selected() {
            assert_eq!(out.values().column(j), h.values().column(j));
        }
        let single = AntennaSelection::new(8, &[2]).unwrap();
        assert!(spline_init(&observe_antennas(&h, &single).unwrap(), &single).is_err());
    }

    #[test]
    fn prox_limits() {
        let h = grid(4, 6);
        let sel = AntennaSelection::preset("A", 6).unwrap();
        let obs = observe_antennas(&h, &sel).unwrap();
        let z = grid(4, 6).values().mapv(|v| v * C64::new(0.0, 1.0));
        let z = ChannelMatrix::new(z).unwrap();
        let near0 = prox_ae(&obs, &sel, &z, 1e-14).unwrap();
        for &j in sel.selected() {
            for i in 0..4 {
                assert!((near0.values()[(i, j)] - h.values()[(i, j)]).norm() < 1e-12);
            }
        }
        for j in sel.unselected() {
            assert_eq!(near0.values().column(j), z.values().column(j));
        }
        assert!(prox_ae(&obs, &sel, &z, -1.0).is_err());
    }
}
