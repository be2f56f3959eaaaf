//! Alternating-direction reconstruction constrained by a low-resolution prior.

use super::{data_term, dual_prox_in_place, residual_norm, u_update, Monitor, SolverParams, TvProx, NORM_ITERS};
use crate::error::{ensure, Error, Result};
use crate::geometry::{Image, ScanGeometry, Sinogram};
use crate::operators::{downsample, upsample_adjoint, DownSampler, Projector};
use crate::variational::total_variation;

/// Iterates of the solver after `k` completed iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct LripState {
    pub u: Image,
    pub u_tilde: Image,
    pub p: Sinogram,
    pub k: usize,
}

impl LripState {
    /// `u = u_tilde = D^T u_l`, `p = 0`.
    pub fn initial(geom: &ScanGeometry, u_l: &Image, d: &DownSampler) -> Result<Self> {
        let u0 = upsample_adjoint(u_l, d)?;
        Ok(Self { u: u0.clone(), u_tilde: u0, p: Sinogram::zeros_for(geom), k: 0 })
    }
}

fn prior_objective(u: &Image, u_l: &Image, d: &DownSampler, mu: f64) -> Result<f64> {
    let du = downsample(u, d)?;
    Ok(du.values().iter().zip(u_l.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * mu))
}

/// Run the full iteration and return the final `u`.
pub fn lrip_reconstruct(
    sino: &Sinogram,
    geom: &ScanGeometry,
    u_l: &Image,
    tau: usize,
    params: &SolverParams,
) -> Result<Image> {
    let proj = Projector::new(geom);
    Ok(lrip_solve(&proj, sino, u_l, tau, params, None)?.u)
}

/// As [`lrip_reconstruct`] on a prebuilt projector, returning the final state.
///
/// Per iteration: `u = argmin 1/(2r)||u - u~||^2 + 1/(2mu)||Du - u_l||^2`,
/// `p = (p + t(A u~ - f)) / (1 + t)`, `u~ = prox_{t lambda TV}(u - t A^T p)`.
pub fn lrip_solve(
    proj: &Projector,
    sino: &Sinogram,
    u_l: &Image,
    tau: usize,
    params: &SolverParams,
    mut monitor: Option<&mut Monitor>,
) -> Result<LripState> {
    let geom = proj.geometry();
    geom.check_sinogram(sino)?;
    let d = DownSampler::new(tau, geom.n())?;
    ensure!(
        u_l.rows() == d.coarse_n() && u_l.cols() == d.coarse_n(),
        "prior is {}x{}, expected {}x{}",
        u_l.rows(),
        u_l.cols(),
        d.coarse_n(),
        d.coarse_n()
    );
    ensure!(u_l.is_finite(), "prior contains non-finite values");
    let t = params.tau_step;
    let mut step_check = *params;
    step_check.sigma_step = t;
    step_check.validate_steps(proj.norm_estimate(NORM_ITERS))?;

    let n = geom.n();
    let f = sino.values();
    let mut state = LripState::initial(geom, u_l, &d)?;
    let mut prox = TvProx::new();
    for k in 0..params.outer_iters {
        let u = u_update(&state.u_tilde, u_l, &d, params.mu, params.r)?;
        let au_tilde = proj.apply(&state.u_tilde)?;
        dual_prox_in_place(state.p.values_mut(), au_tilde.values(), f, t);
        let atp = proj.adjoint(&state.p)?;
        let v = Image::from_vec_unchecked(n, n, u.values().iter().zip(atp.values()).map(|(a, b)| a - t * b).collect());
        let u_tilde = prox.apply(&v, t * params.lambda_tv, params.inner_tv_iters);
        if !u.is_finite() || !u_tilde.is_finite() || !state.p.is_finite() {
            return Err(Error::Divergence { iteration: k, detail: "non-finite iterate".into() });
        }
        state.u = u;
        state.u_tilde = u_tilde;
        state.k = k + 1;
        if let Some(m) = monitor.as_deref_mut() {
            let au = proj.apply(&state.u)?;
            let obj = data_term(au.values(), f)
                + params.lambda_tv * total_variation(&state.u)
                + prior_objective(&state.u, u_l, &d, params.mu)?;
            m.record(k, obj, residual_norm(au.values(), f), &state.u)?;
        }
    }
    Ok(state)
}
