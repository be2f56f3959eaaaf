//! Variational reconstruction: TV baseline and the prior-constrained solver.

mod lrip;
mod tv;

pub use lrip::{lrip_reconstruct, lrip_solve, LripState};
pub use tv::{divergence, gradient, prox_objective, total_variation, tv_prox, TvProx};

use std::fmt;
use std::str::FromStr;

use crate::classical::{fbp, FilterKind};
use crate::config::Config;
use crate::error::{ensure, Error, Result};
use crate::geometry::{Image, ScanGeometry, Sinogram};
use crate::metrics::psnr;
use crate::operators::{DownSampler, Projector};

pub const DEFAULT_INNER_TV_ITERS: usize = 200;
pub const DEFAULT_OUTER_ITERS: usize = 300;
pub const DEFAULT_LAMBDA_TV: f64 = 0.0025;
pub const DEFAULT_MU: f64 = 1.0;
pub const DEFAULT_R: f64 = 1.0;
/// Fraction of the largest admissible step `1 / ||A||`.
pub const STEP_SAFETY: f64 = 0.95;
/// Power iterations used to estimate `||A||_2` for step sizes.
pub const NORM_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub mu: f64,
    pub r: f64,
    pub tau_step: f64,
    pub sigma_step: f64,
    pub lambda_tv: f64,
    pub outer_iters: usize,
    pub inner_tv_iters: usize,
}

impl SolverParams {
    /// Default weights with `tau_step = sigma_step = STEP_SAFETY / ||A||`.
    pub fn for_norm(op_norm: f64) -> Self {
        let step = STEP_SAFETY / op_norm;
        Self {
            mu: DEFAULT_MU,
            r: DEFAULT_R,
            tau_step: step,
            sigma_step: step,
            lambda_tv: DEFAULT_LAMBDA_TV,
            outer_iters: DEFAULT_OUTER_ITERS,
            inner_tv_iters: DEFAULT_INNER_TV_ITERS,
        }
    }

    pub fn for_projector(proj: &Projector) -> Self {
        Self::for_norm(proj.norm_estimate(NORM_ITERS))
    }

    /// Positivity and range checks that do not depend on the operator.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("r", self.r), ("tau_step", self.tau_step), ("sigma_step", self.sigma_step)] {
            ensure!(v > 0.0 && v.is_finite(), "solver.{name} must be positive and finite, got {v}");
        }
        ensure!(self.lambda_tv >= 0.0 && self.lambda_tv.is_finite(), "solver.lambda_tv must be >= 0, got {}", self.lambda_tv);
        ensure!(self.outer_iters > 0, "solver.outer_iters must be positive");
        ensure!(self.inner_tv_iters > 0, "solver.inner_tv_iters must be positive");
        Ok(())
    }

    /// `tau_step * sigma_step * ||A||^2 <= 1`.
    pub fn validate_steps(&self, op_norm: f64) -> Result<()> {
        self.validate()?;
        let prod = self.tau_step * self.sigma_step * op_norm * op_norm;
        ensure!(
            prod <= 1.0 + 1e-9,
            "step sizes violate tau*sigma*||A||^2 <= 1 (tau={}, sigma={}, ||A||={op_norm}, product {prod})",
            self.tau_step,
            self.sigma_step
        );
        Ok(())
    }

    /// Override fields from `solver.*` keys.
    pub fn with_config(mut self, cfg: &Config) -> Result<Self> {
        macro_rules! take {
            ($key:literal, $field:ident) => {
                if let Some(v) = cfg.get_parsed(concat!("solver.", $key))? {
                    self.$field = v;
                }
            };
        }
        take!("mu", mu);
        take!("r", r);
        take!("tau_step", tau_step);
        take!("sigma_step", sigma_step);
        take!("lambda_tv", lambda_tv);
        take!("outer_iters", outer_iters);
        take!("inner_tv_iters", inner_tv_iters);
        for key in cfg.keys().filter(|k| k.starts_with("solver.")) {
            const KNOWN: [&str; 7] = ["mu", "r", "tau_step", "sigma_step", "lambda_tv", "outer_iters", "inner_tv_iters"];
            ensure!(KNOWN.contains(&&key["solver.".len()..]), "unknown solver key {key:?}");
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_config(&self) -> String {
        format!(
            "solver.mu = {}\nsolver.r = {}\nsolver.tau_step = {}\nsolver.sigma_step = {}\nsolver.lambda_tv = {}\nsolver.outer_iters = {}\nsolver.inner_tv_iters = {}\n",
            self.mu, self.r, self.tau_step, self.sigma_step, self.lambda_tv, self.outer_iters, self.inner_tv_iters
        )
    }
}

/// Resolvent of the least-squares fidelity conjugate: `(p + tau (Au - f)) / (1 + tau)`.
pub fn dual_prox_ls(p_prev: &Sinogram, au: &Sinogram, f: &Sinogram, tau_step: f64) -> Result<Sinogram> {
    ensure!(p_prev.same_shape(au) && au.same_shape(f), "dual update needs three sinograms of the same shape");
    ensure!(tau_step > 0.0, "tau_step must be positive, got {tau_step}");
    let mut out = p_prev.clone();
    dual_prox_in_place(out.values_mut(), au.values(), f.values(), tau_step);
    Ok(out)
}

pub(crate) fn dual_prox_in_place(p: &mut [f64], au: &[f64], f: &[f64], tau: f64) {
    let denom = 1.0 + tau;
    for ((pi, a), fi) in p.iter_mut().zip(au).zip(f) {
        *pi = (*pi + tau * (a - fi)) / denom;
    }
}

/// Minimiser of `1/(2r) ||u - u_tilde||^2 + 1/(2 mu) ||D u - u_l||^2`.
pub fn u_update(u_tilde: &Image, u_l: &Image, d: &DownSampler, mu: f64, r: f64) -> Result<Image> {
    ensure!(mu > 0.0, "mu must be positive, got {mu}");
    ensure!(r >= 0.0, "r must be >= 0, got {r}");
    let n = d.full_n();
    ensure!(u_tilde.rows() == n && u_tilde.cols() == n, "u_tilde must be {n}x{n}");
    let cn = d.coarse_n();
    ensure!(u_l.rows() == cn && u_l.cols() == cn, "prior must be {cn}x{cn}, got {}x{}", u_l.rows(), u_l.cols());
    let mut out = u_tilde.clone();
    let f = d.factor();
    for i in 0..cn {
        for j in 0..cn {
            let (r0, c0) = (i * f, j * f);
            out.set(r0, c0, (mu * u_tilde.get(r0, c0) + r * u_l.get(i, j)) / (mu + r));
        }
    }
    Ok(out)
}

/// `1/2 ||Au - f||^2`.
pub(crate) fn data_term(au: &[f64], f: &[f64]) -> f64 {
    0.5 * au.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

pub(crate) fn residual_norm(au: &[f64], f: &[f64]) -> f64 {
    au.iter().zip(f).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// One diagnostics row per iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub data_residual: f64,
    pub psnr: Option<f64>,
}

/// Collects per-iteration diagnostics, optionally against a reference image.
#[derive(Debug, Clone, Default)]
pub struct Monitor {
    pub reference: Option<Image>,
    pub records: Vec<IterRecord>,
}

pub const DIAGNOSTICS_CSV_HEADER: &str = "iter,objective,data_residual,psnr";

impl Monitor {
    pub fn new(reference: Option<Image>) -> Self {
        Self { reference, records: Vec::new() }
    }

    pub(crate) fn record(&mut self, iter: usize, objective: f64, data_residual: f64, u: &Image) -> Result<()> {
        let psnr = match &self.reference {
            Some(r) => Some(psnr(u, r, 1.0)?),
            None => None,
        };
        self.records.push(IterRecord { iter, objective, data_residual, psnr });
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(DIAGNOSTICS_CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let p = r.psnr.map_or(String::new(), |p| p.to_string());
            s.push_str(&format!("{},{},{},{}\n", r.iter, r.objective, r.data_residual, p));
        }
        s
    }
}

/// First-order primal-dual iteration for `min_u 1/2 ||Au - f||^2 + lambda TV(u)`.
///
/// `relaxation` is the extrapolation weight of the primal iterate; `dual_step`
/// overrides `sigma_step` when set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalDualTv {
    pub relaxation: f64,
    pub dual_step: Option<f64>,
}

impl Default for PrimalDualTv {
    fn default() -> Self {
        Self { relaxation: 1.0, dual_step: None }
    }
}

impl PrimalDualTv {
    pub fn run(
        &self,
        proj: &Projector,
        sino: &Sinogram,
        params: &SolverParams,
        init: Option<&Image>,
        mut monitor: Option<&mut Monitor>,
    ) -> Result<Image> {
        let geom = proj.geometry();
        geom.check_sinogram(sino)?;
        params.validate()?;
        ensure!((0.0..=1.0).contains(&self.relaxation), "relaxation must lie in [0, 1]");
        let sigma = self.dual_step.unwrap_or(params.sigma_step);
        ensure!(sigma > 0.0, "dual step must be positive");
        let n = geom.n();
        let mut u = match init {
            Some(x) => {
                geom.check_image(x)?;
                x.clone()
            }
            None => Image::square_zeros(n),
        };
        let mut u_bar = u.clone();
        let mut p = Sinogram::zeros_for(geom);
        let mut prox = TvProx::new();
        let f = sino.values();
        for k in 0..params.outer_iters {
            let au = proj.apply(&u_bar)?;
            dual_prox_in_place(p.values_mut(), au.values(), f, sigma);
            let atp = proj.adjoint(&p)?;
            let v = Image::from_vec_unchecked(
                n,
                n,
                u.values().iter().zip(atp.values()).map(|(a, b)| a - params.tau_step * b).collect(),
            );
            let u_new = prox.apply(&v, params.tau_step * params.lambda_tv, params.inner_tv_iters);
            if !u_new.is_finite() || !p.is_finite() {
                return Err(Error::Divergence { iteration: k, detail: "non-finite iterate in primal-dual TV".into() });
            }
            u_bar = Image::from_vec_unchecked(
                n,
                n,
                u_new.values().iter().zip(u.values()).map(|(a, b)| a + self.relaxation * (a - b)).collect(),
            );
            u = u_new;
            if let Some(m) = monitor.as_deref_mut() {
                let au = proj.apply(&u)?;
                let obj = data_term(au.values(), f) + params.lambda_tv * total_variation(&u);
                m.record(k, obj, residual_norm(au.values(), f), &u)?;
            }
        }
        Ok(u)
    }
}

/// Primal objective `1/2 ||Au - f||^2 + lambda TV(u)`.
pub fn tv_objective(proj: &Projector, sino: &Sinogram, u: &Image, lambda_tv: f64) -> Result<f64> {
    let au = proj.apply(u)?;
    Ok(data_term(au.values(), sino.values()) + lambda_tv * total_variation(u))
}

/// TV-regularised reconstruction with over-relaxation 1.
pub fn tv_reconstruct(sino: &Sinogram, geom: &ScanGeometry, params: &SolverParams) -> Result<Image> {
    let proj = Projector::new(geom);
    tv_reconstruct_with(&proj, sino, params, None)
}

pub fn tv_reconstruct_with(
    proj: &Projector,
    sino: &Sinogram,
    params: &SolverParams,
    monitor: Option<&mut Monitor>,
) -> Result<Image> {
    params.validate_steps(proj.norm_estimate(NORM_ITERS))?;
    PrimalDualTv::default().run(proj, sino, params, None, monitor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMethod {
    Fbp,
    Tv,
}

impl fmt::Display for PriorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorMethod::Fbp => "fbp",
            PriorMethod::Tv => "tv",
        })
    }
}

impl FromStr for PriorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fbp" => Ok(PriorMethod::Fbp),
            "tv" => Ok(PriorMethod::Tv),
            other => Err(Error::invalid(format!("unknown prior method {other:?}, expected fbp or tv"))),
        }
    }
}

/// Low-resolution reconstruction on the grid coarsened by `tau`, from the same data.
pub fn make_prior(sino: &Sinogram, geom: &ScanGeometry, tau: usize, method: PriorMethod) -> Result<Image> {
    make_prior_with(sino, geom, tau, method, None)
}

/// [`make_prior`] with explicit TV parameters for the coarse solve.
pub fn make_prior_with(
    sino: &Sinogram,
    geom: &ScanGeometry,
    tau: usize,
    method: PriorMethod,
    params: Option<&SolverParams>,
) -> Result<Image> {
    DownSampler::new(tau, geom.n())?;
    geom.check_sinogram(sino)?;
    let coarse = geom.coarsened(tau)?;
    match method {
        PriorMethod::Fbp => fbp(sino, &coarse, FilterKind::Ramp),
        PriorMethod::Tv => {
            let proj = Projector::new(&coarse);
            let p = match params {
                Some(p) => *p,
                None => SolverParams::for_projector(&proj),
            };
            tv_reconstruct_with(&proj, sino, &p, None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::fbp;
    use crate::geometry::default_geometry;
    use crate::metrics::rmse;
    use crate::operators::{downsample, forward_project, upsample_nearest};
    use crate::simulation::{add_gaussian, disk_phantom, shepp_logan, Disk};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dual_prox_examples() {
        let s = |v: f64| Sinogram::new(1, 1, vec![v]).unwrap();
        assert_eq!(dual_prox_ls(&s(0.0), &s(3.0), &s(3.0), 0.7).unwrap().values(), &[0.0]);
        assert_eq!(dual_prox_ls(&s(1.0), &s(1.0), &s(0.0), 1.0).unwrap().values(), &[1.0]);
        let v = dual_prox_ls(&s(0.0), &s(2.0), &s(0.0), 0.5).unwrap().values()[0];
        assert!((v - 2.0 / 3.0).abs() <= 1e-15);
        assert!(dual_prox_ls(&s(0.0), &Sinogram::zeros(1, 2), &s(0.0), 1.0).is_err());
    }

    #[test]
    fn dual_prox_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rand_sino = || Sinogram::new(3, 4, (0..12).map(|_| rng.random::<f64>()).collect()).unwrap();
        let (p1, p2, au, f) = (rand_sino(), rand_sino(), rand_sino(), rand_sino());
        let tau = 0.3;
        let o1 = dual_prox_ls(&p1, &au, &f, tau).unwrap();
        let o2 = dual_prox_ls(&p2, &au, &f, tau).unwrap();
        for i in 0..12 {
            let lhs = (o1.values()[i] - o2.values()[i]).abs();
            let rhs = (p1.values()[i] - p2.values()[i]).abs() / (1.0 + tau);
            assert!((lhs - rhs).abs() <= 1e-15);
        }
    }

    #[test]
    fn u_update_examples() {
        let d = DownSampler::new(2, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ut = Image::from_fn(4, 4, |_, _| rng.random::<f64>());
        let ul = Image::from_fn(2, 2, |_, _| rng.random::<f64>());
        assert_eq!(u_update(&ut, &ul, &d, 1.0, 0.0).unwrap(), ut);
        let mut ut2 = ut.clone();
        ut2.set(0, 0, 0.4);
        let mut ul2 = ul.clone();
        ul2.set(0, 0, 0.8);
        let out = u_update(&ut2, &ul2, &d, 1.0, 1.0).unwrap();
        assert!((out.get(0, 0) - 0.6).abs() < 1e-15);
        assert_eq!(out.get(1, 1), ut2.get(1, 1));
        assert_eq!(out.get(0, 1), ut2.get(0, 1));
        assert!(u_update(&ut, &Image::square_zeros(3), &d, 1.0, 1.0).is_err());
        assert!(u_update(&ut, &ul, &d, 0.0, 1.0).is_err());
    }

    #[test]
    fn u_update_is_minimiser() {
        let d = DownSampler::new(2, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ut = Image::from_fn(8, 8, |_, _| rng.random::<f64>());
        let ul = Image::from_fn(4, 4, |_, _| rng.random::<f64>());
        let (mu, r) = (0.3, 1.7);
        let obj = |u: &Image| {
            let a: f64 = u.values().iter().zip(ut.values()).map(|(x, y)| (x - y).powi(2)).sum();
            let du = downsample(u, &d).unwrap();
            let b: f64 = du.values().iter().zip(ul.values()).map(|(x, y)| (x - y).powi(2)).sum();
            a / (2.0 * r) + b / (2.0 * mu)
        };
        let u = u_update(&ut, &ul, &d, mu, r).unwrap();
        let base = obj(&u);
        for _ in 0..100 {
            let pert = Image::from_fn(8, 8, |r0, c0| u.get(r0, c0) + 1e-3 * (rng.random::<f64>() - 0.5));
            assert!(base <= obj(&pert));
        }
    }

    #[test]
    fn params_validation_and_config() {
        let p = SolverParams::for_norm(10.0);
        assert!(p.validate_steps(10.0).is_ok());
        assert!(p.validate_steps(20.0).is_err());
        let mut bad = p;
        bad.mu = 0.0;
        assert!(bad.validate().is_err());
        let cfg = Config::parse("solver.mu = 2.5\nsolver.outer_iters = 7\ngeometry.n = 4\n").unwrap();
        let q = p.with_config(&cfg).unwrap();
        assert_eq!((q.mu, q.outer_iters, q.r), (2.5, 7, p.r));
        assert!(p.with_config(&Config::parse("solver.nu = 1").unwrap()).is_err());
        let round = p.with_config(&Config::parse(&p.to_config()).unwrap()).unwrap();
        assert_eq!(round, p);
    }

    #[test]
    fn tv_zero_data() {
        let g = default_geometry(16, 90.0).unwrap();
        let proj = Projector::new(&g);
        let mut p = SolverParams::for_projector(&proj);
        p.outer_iters = 30;
        let u = tv_reconstruct(&Sinogram::zeros_for(&g), &g, &p).unwrap();
        assert!(rmse(&u, &Image::square_zeros(16)).unwrap() <= 1e-6);
    }

    #[test]
    fn tv_beats_fbp_on_full_scan_disk() {
        let n = 64;
        let g = default_geometry(n, 360.0).unwrap();
        let disk = disk_phantom(n, &[Disk { cx: 0.0, cy: 0.0, radius: 0.6, value: 1.0 }]).unwrap();
        let s = forward_project(&disk, &g).unwrap();
        let tv = tv_reconstruct(&s, &g, &SolverParams::for_projector(&Projector::new(&g))).unwrap();
        let f = fbp(&s, &g, FilterKind::Ramp).unwrap();
        let (pt, pf) = (psnr(&tv, &disk, 1.0).unwrap(), psnr(&f, &disk, 1.0).unwrap());
        assert!(pt >= pf, "tv {pt} fbp {pf}");
    }

    #[test]
    fn tv_limited_angle_noisy() {
        let n = 32;
        let g = default_geometry(n, 90.0).unwrap();
        let truth = shepp_logan(n).unwrap();
        let s = add_gaussian(&forward_project(&truth, &g).unwrap(), 0.05, 0).unwrap();
        let proj = Projector::new(&g);
        let mut params = SolverParams::for_projector(&proj);
        params.outer_iters = 200;
        let mut mon = Monitor::new(Some(truth.clone()));
        let u = tv_reconstruct_with(&proj, &s, &params, Some(&mut mon)).unwrap();
        let res = residual_norm(proj.apply(&u).unwrap().values(), s.values());
        let zero_res = s.values().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(res < zero_res);
        let half = mon.records[params.outer_iters / 2 - 1].objective;
        let last = mon.records.last().unwrap().objective;
        assert!(last <= half, "{last} > {half}");
        assert!((tv_objective(&proj, &s, &u, params.lambda_tv).unwrap() - last).abs() < 1e-9 * last);
        let csv = mon.to_csv();
        assert!(csv.starts_with("iter,objective,data_residual,psnr\n0,"));
        assert_eq!(csv.lines().count(), params.outer_iters + 1);
    }

    #[test]
    fn prior_shapes_and_identity() {
        let n = 32;
        let g = default_geometry(n, 90.0).unwrap();
        let s = forward_project(&shepp_logan(n).unwrap(), &g).unwrap();
        assert_eq!(make_prior(&s, &g, 1, PriorMethod::Fbp).unwrap(), fbp(&s, &g, FilterKind::Ramp).unwrap());
        let p = make_prior(&s, &g, 2, PriorMethod::Fbp).unwrap();
        assert_eq!((p.rows(), p.cols()), (16, 16));
        assert!(make_prior(&s, &g, 3, PriorMethod::Fbp).is_err());
        assert_eq!("TV".parse::<PriorMethod>().unwrap(), PriorMethod::Tv);
    }

    #[test]
    fn tv_prior_beats_fbp_prior() {
        let n = 64;
        let g = default_geometry(n, 90.0).unwrap();
        let truth = shepp_logan(n).unwrap();
        let s = add_gaussian(&forward_project(&truth, &g).unwrap(), 0.05, 0).unwrap();
        let score = |m| psnr(&upsample_nearest(&make_prior(&s, &g, 2, m).unwrap(), 2), &truth, 1.0).unwrap();
        let (pt, pf) = (score(PriorMethod::Tv), score(PriorMethod::Fbp));
        assert!(pt >= pf, "tv {pt} fbp {pf}");
    }

    #[test]
    fn oracle_prior_downsample_round_trip() {
        let truth = shepp_logan(32).unwrap();
        let d = DownSampler::new(2, 32).unwrap();
        let ul = downsample(&truth, &d).unwrap();
        assert_eq!(ul.rows(), 16);
    }
}
