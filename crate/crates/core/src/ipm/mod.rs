//! Primal-dual interior-point solver for linear objectives over products of
//! zero, nonnegative and second-order cones.
//!
//! Solves
//!
//! ```text
//! minimize    q'x
//! subject to  A x + s = b,  s ∈ K
//! ```
//!
//! together with its dual `maximize −b'z  s.t.  A'z + q = 0, z ∈ K*` through a
//! homogeneous self-dual embedding with Nesterov–Todd scaling and a Mehrotra
//! predictor-corrector step.

pub mod cones;
mod equilibrate;
mod kkt;

pub use cones::{Cone, ConeSet};

use crate::linalg::{dot, inf_norm, CscMatrix, LdlError};
use equilibrate::Equilibration;
use kkt::KktSolver;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IpmError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("KKT system is numerically singular after regularization: {0}")]
    SingularKkt(#[from] LdlError),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolverSettings {
    /// Gap and residual tolerance.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Static diagonal regularization of the KKT matrix.
    pub static_reg: f64,
    /// Pivots with the wrong sign or magnitude below this are replaced.
    pub dynamic_reg_eps: f64,
    pub dynamic_reg_delta: f64,
    /// Maximum refinement passes per solve; stops once the residual stalls.
    pub refine_steps: usize,
    /// Tolerance of the infeasibility certificates.
    pub infeasibility_tol: f64,
    pub equilibrate: bool,
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: 100,
            static_reg: 1e-9,
            dynamic_reg_eps: 1e-13,
            dynamic_reg_delta: 2e-7,
            refine_steps: 10,
            infeasibility_tol: 1e-8,
            equilibrate: true,
            verbose: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), IpmError> {
        if !(self.tolerance > 0.0) {
            return Err(IpmError::Settings("tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(IpmError::Settings("max_iter must be at least 1".into()));
        }
        if !(self.static_reg >= 0.0 && self.dynamic_reg_delta > 0.0) {
            return Err(IpmError::Settings("regularization must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `min q'x  s.t.  A x + s = b,  s ∈ cones`
#[derive(Debug, Clone)]
pub struct StandardForm {
    pub q: Vec<f64>,
    pub a: CscMatrix,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl StandardForm {
    pub fn check(&self) -> Result<(), IpmError> {
        let m: usize = self.cones.iter().map(Cone::dim).sum();
        if self.q.len() != self.a.ncols {
            return Err(IpmError::Dimension(format!(
                "objective has {} entries, A has {} columns",
                self.q.len(),
                self.a.ncols
            )));
        }
        if self.b.len() != self.a.nrows || m != self.a.nrows {
            return Err(IpmError::Dimension(format!(
                "A has {} rows, b has {}, cones cover {}",
                self.a.nrows,
                self.b.len(),
                m
            )));
        }
        if self.cones.iter().any(|c| matches!(c, Cone::Soc(d) if *d < 2)) {
            return Err(IpmError::Dimension("second-order cone needs dimension ≥ 2".into()));
        }
        if self.q.iter().chain(&self.b).chain(&self.a.nzval).any(|v| !v.is_finite()) {
            return Err(IpmError::Dimension("non-finite problem data".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpmStatus {
    Optimal,
    PrimalInfeasible,
    /// Unbounded primal.
    DualInfeasible,
    MaxIterations,
    /// Step sizes collapsed before reaching the tolerance.
    Stalled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub mu: f64,
    pub step: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    /// Multipliers of `A x + s = b`; the dual objective is `−b'z`.
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
}

/// Renders the iteration log as CSV.
pub fn log_csv(log: &[IterationRecord]) -> String {
    let mut out = String::from("iter,primal_objective,dual_objective,gap,primal_residual,dual_residual,mu,step,sigma\n");
    for r in log {
        let _ = writeln!(
            out,
            "{},{:.12e},{:.12e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
            r.iter, r.primal_objective, r.dual_objective, r.gap, r.primal_residual, r.dual_residual, r.mu, r.step, r.sigma
        );
    }
    out
}

/// Interface for conic solver backends.
pub trait ConicBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, problem: &StandardForm, settings: &SolverSettings) -> Result<IpmSolution, IpmError>;
}

/// The built-in interior-point method.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmbeddedIpm;

impl ConicBackend for EmbeddedIpm {
    fn name(&self) -> &'static str {
        "embedded-ipm"
    }

    fn solve(&self, problem: &StandardForm, settings: &SolverSettings) -> Result<IpmSolution, IpmError> {
        solve(problem, settings)
    }
}

struct StepContext<'a> {
    kkt: &'a KktSolver,
    cones: &'a ConeSet,
    lambda: &'a [f64],
    q: &'a [f64],
    b: &'a [f64],
    rx: &'a [f64],
    rz: &'a [f64],
    rtau: f64,
    tau: f64,
    kappa: f64,
    /// Solution of `K [x2; z2] = [−q; b]`.
    x2: &'a [f64],
    den: f64,
    zero_rows: &'a [bool],
}

impl StepContext<'_> {
    /// Search direction for residual weight `w` (1 for the predictor,
    /// `1 − σ` for the corrector), complementarity target `d_s` and `d_κ`.
    /// Writes `[Δx; Δz]` into `dxz` and `Δs` into `ds`; returns `(Δτ, Δκ)`.
    fn direction(&self, w: f64, d_s: &[f64], d_kappa: f64, dxz: &mut [f64], ds: &mut [f64]) -> (f64, f64) {
        let n = self.q.len();
        let m = self.b.len();
        let mut ld = vec![0.0; m];
        self.cones.inv_circ(self.lambda, d_s, &mut ld);
        let mut wld = vec![0.0; m];
        self.cones.mul_w(&ld, &mut wld);
        let mut rhs = vec![0.0; n + m];
        for j in 0..n {
            rhs[j] = -w * self.rx[j];
        }
        for i in 0..m {
            rhs[n + i] = -w * self.rz[i] - wld[i];
        }
        self.kkt.solve(&rhs, dxz);
        let num = -w * self.rtau - dot(self.q, &dxz[..n]) - dot(self.b, &dxz[n..]) - d_kappa / self.tau;
        let dtau = num / self.den;
        for k in 0..n + m {
            dxz[k] += dtau * self.x2[k];
        }
        // Δs = W(λ \ d_s − W Δz)
        let mut wdz = vec![0.0; m];
        self.cones.mul_w(&dxz[n..], &mut wdz);
        for i in 0..m {
            ld[i] -= wdz[i];
        }
        self.cones.mul_w(&ld, ds);
        for i in 0..m {
            if self.zero_rows[i] {
                ds[i] = 0.0;
            }
        }
        let dkappa = (d_kappa - self.kappa * dtau) / self.tau;
        (dtau, dkappa)
    }
}

struct Metrics {
    pobj: f64,
    dobj: f64,
    gap: f64,
    gap_rel: f64,
    res_p: f64,
    res_d: f64,
}

/// Solves `problem` with the embedded interior-point method.
pub fn solve(problem: &StandardForm, settings: &SolverSettings) -> Result<IpmSolution, IpmError> {
    settings.validate()?;
    problem.check()?;
    let (m, n) = (problem.a.nrows, problem.a.ncols);

    let eq = if settings.equilibrate {
        Equilibration::compute(&problem.a, &problem.q, &problem.cones)
    } else {
        Equilibration::identity(m, n)
    };
    let mut a = problem.a.clone();
    a.scale(&eq.e, &eq.d);
    let q: Vec<f64> = (0..n).map(|j| eq.c * eq.d[j] * problem.q[j]).collect();
    let b: Vec<f64> = (0..m).map(|i| eq.e[i] * problem.b[i]).collect();

    let mut cones = ConeSet::new(&problem.cones);
    let nu = cones.degree() as f64;
    let mut kkt = KktSolver::new(
        &a,
        &problem.cones,
        settings.static_reg,
        settings.dynamic_reg_eps,
        settings.dynamic_reg_delta,
        settings.refine_steps.max(1),
    )?;

    // initial point
    kkt.factor_identity()?;
    let mut rhs = vec![0.0; n + m];
    let mut sol = vec![0.0; n + m];
    rhs[n..].copy_from_slice(&b);
    kkt.solve(&rhs, &mut sol);
    let mut x = sol[..n].to_vec();
    let mut s: Vec<f64> = sol[n..].iter().map(|v| -v).collect();
    rhs[..n].iter_mut().zip(&q).for_each(|(r, qi)| *r = -qi);
    rhs[n..].iter_mut().for_each(|r| *r = 0.0);
    kkt.solve(&rhs, &mut sol);
    let mut z = sol[n..].to_vec();
    cones.shift_to_interior(&mut s, Some(0.0));
    cones.shift_to_interior(&mut z, None);
    let mut tau = 1.0f64;
    let mut kappa = 1.0f64;

    let zero_rows = cones.zero_rows();
    let norm_b = inf_norm(&problem.b);
    let norm_q = inf_norm(&problem.q);

    let unscale = |x: &[f64], s: &[f64], z: &[f64], tau: f64| -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xu: Vec<f64> = (0..n).map(|j| eq.d[j] * x[j] / tau).collect();
        let su: Vec<f64> = (0..m).map(|i| s[i] / (eq.e[i] * tau)).collect();
        let zu: Vec<f64> = (0..m).map(|i| eq.e[i] * z[i] / (eq.c * tau)).collect();
        (xu, su, zu)
    };
    let metrics = |xu: &[f64], su: &[f64], zu: &[f64]| -> Metrics {
        let pobj = dot(&problem.q, xu);
        let dobj = -dot(&problem.b, zu);
        let mut rp = problem.a.mul_vec(xu);
        for i in 0..m {
            rp[i] += su[i] - problem.b[i];
        }
        let mut rd = problem.a.tmul_vec(zu);
        for j in 0..n {
            rd[j] += problem.q[j];
        }
        let gap = (pobj - dobj).abs();
        Metrics {
            pobj,
            dobj,
            gap,
            gap_rel: gap / pobj.abs().min(dobj.abs()).max(1.0),
            res_p: inf_norm(&rp) / (1.0f64).max(norm_b + inf_norm(xu) + inf_norm(su)),
            res_d: inf_norm(&rd) / (1.0f64).max(norm_q + inf_norm(zu)),
        }
    };

    let mut log = Vec::new();
    let mut status = IpmStatus::MaxIterations;
    let mut iterations = 0;
    let mut rx = vec![0.0; n];
    let mut rz = vec![0.0; m];
    let mut step = 0.0;
    let mut sigma = 0.0;
    let mut stalls = 0usize;
    // best iterate so far, returned if the method stops short
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, Vec<f64>, f64)> = None;

    let mut x1 = vec![0.0; n + m];
    let mut x2 = vec![0.0; n + m];
    let mut ds = vec![0.0; m];
    let mut e = vec![0.0; m];
    cones.unit(&mut e);

    for iter in 0..=settings.max_iter {
        iterations = iter;
        // residuals in the scaled space
        a.gemv_t(1.0, &z, 0.0, &mut rx);
        for j in 0..n {
            rx[j] += q[j] * tau;
        }
        a.gemv(1.0, &x, 0.0, &mut rz);
        for i in 0..m {
            rz[i] += s[i] - b[i] * tau;
        }
        let rtau = dot(&q, &x) + dot(&b, &z) + kappa;
        let mu = (dot(&s, &z) + tau * kappa) / (nu + 1.0);

        let (xu, su, zu) = unscale(&x, &s, &z, tau);
        let mt = metrics(&xu, &su, &zu);
        log.push(IterationRecord {
            iter,
            primal_objective: mt.pobj,
            dual_objective: mt.dobj,
            gap: mt.gap,
            primal_residual: mt.res_p,
            dual_residual: mt.res_d,
            mu,
            step,
            sigma,
        });
        if settings.verbose {
            eprintln!(
                "{iter:3} pobj {:+.8e} dobj {:+.8e} gap {:.2e} rp {:.2e} rd {:.2e} mu {:.2e} step {:.3}",
                mt.pobj, mt.dobj, mt.gap, mt.res_p, mt.res_d, mu, step
            );
        }
        if !tau.is_finite() || x.iter().chain(&s).chain(&z).any(|v| !v.is_finite()) {
            status = IpmStatus::Stalled;
            break;
        }
        let merit = mt.res_p.max(mt.res_d).max(mt.gap.min(mt.gap_rel));
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), s.clone(), z.clone(), tau));
        }
        let tol = settings.tolerance;
        if mt.res_p <= tol && mt.res_d <= tol && (mt.gap <= tol || mt.gap_rel <= tol) {
            status = IpmStatus::Optimal;
            break;
        }
        // infeasibility certificates on the unnormalized rays
        {
            let zr: Vec<f64> = (0..m).map(|i| eq.e[i] * z[i] / eq.c).collect();
            let nz = inf_norm(&zr);
            if nz > 0.0 {
                let bz = dot(&problem.b, &zr) / nz;
                let atz = inf_norm(&problem.a.tmul_vec(&zr)) / nz;
                if bz < -settings.infeasibility_tol && atz < -settings.infeasibility_tol * bz && tau < kappa {
                    status = IpmStatus::PrimalInfeasible;
                    break;
                }
            }
            let xr: Vec<f64> = (0..n).map(|j| eq.d[j] * x[j]).collect();
            let sr: Vec<f64> = (0..m).map(|i| s[i] / eq.e[i]).collect();
            let nx = inf_norm(&xr).max(inf_norm(&sr));
            if nx > 0.0 {
                let qx = dot(&problem.q, &xr) / nx;
                let mut axs = problem.a.mul_vec(&xr);
                for i in 0..m {
                    axs[i] += sr[i];
                }
                if qx < -settings.infeasibility_tol
                    && inf_norm(&axs) / nx < -settings.infeasibility_tol * qx
                    && tau < kappa
                {
                    status = IpmStatus::DualInfeasible;
                    break;
                }
            }
        }
        if iter == settings.max_iter {
            break;
        }
        if stalls >= 3 {
            status = IpmStatus::Stalled;
            break;
        }

        if !cones.update_scaling(&s, &z) {
            status = IpmStatus::Stalled;
            break;
        }
        // a breakdown this late means the scaling has degenerated
        if kkt.factor_scaling(&cones).is_err() {
            status = IpmStatus::Stalled;
            break;
        }

        // constant direction
        for j in 0..n {
            rhs[j] = -q[j];
        }
        rhs[n..].copy_from_slice(&b);
        kkt.solve(&rhs, &mut x2);
        let q_x2 = dot(&q, &x2[..n]);
        let b_z2 = dot(&b, &x2[n..]);

        let lambda = cones.lambda.clone();
        let ctx = StepContext {
            kkt: &kkt,
            cones: &cones,
            lambda: &lambda,
            q: &q,
            b: &b,
            rx: &rx,
            rz: &rz,
            rtau,
            tau,
            kappa,
            x2: &x2,
            den: q_x2 + b_z2 - kappa / tau,
            zero_rows: &zero_rows,
        };

        // predictor
        let mut d_s = vec![0.0; m];
        cones.circ(&lambda, &lambda, &mut d_s);
        d_s.iter_mut().for_each(|v| *v = -*v);
        let (dtau_a, dkap_a) = ctx.direction(1.0, &d_s, -tau * kappa, &mut x1, &mut ds);
        let mut alpha_a = cones.step_length(&s, &ds, 1.0);
        alpha_a = cones.step_length(&z, &x1[n..], alpha_a);
        if dtau_a < 0.0 {
            alpha_a = alpha_a.min(-tau / dtau_a);
        }
        if dkap_a < 0.0 {
            alpha_a = alpha_a.min(-kappa / dkap_a);
        }
        sigma = (1.0 - alpha_a).powi(3);

        // corrector: d_s = −λ∘λ − (W⁻¹Δs_a)∘(WΔz_a) + σμe
        let mut wi_ds = vec![0.0; m];
        let mut w_dz = vec![0.0; m];
        cones.mul_winv(&ds, &mut wi_ds);
        cones.mul_w(&x1[n..], &mut w_dz);
        let mut corr = vec![0.0; m];
        cones.circ(&wi_ds, &w_dz, &mut corr);
        for i in 0..m {
            d_s[i] += -corr[i] + sigma * mu * e[i];
        }
        let dkappa_c = -tau * kappa - dtau_a * dkap_a + sigma * mu;
        let (dtau, dkap) = ctx.direction(1.0 - sigma, &d_s, dkappa_c, &mut x1, &mut ds);

        let mut alpha = cones.step_length(&s, &ds, 1.0);
        alpha = cones.step_length(&z, &x1[n..], alpha);
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkap < 0.0 {
            alpha = alpha.min(-kappa / dkap);
        }
        alpha = (0.99 * alpha).min(1.0);
        step = alpha;
        if alpha < 1e-10 {
            stalls += 1;
        } else {
            stalls = 0;
        }

        for j in 0..n {
            x[j] += alpha * x1[j];
        }
        for i in 0..m {
            z[i] += alpha * x1[n + i];
            s[i] += alpha * ds[i];
        }
        tau += alpha * dtau;
        kappa += alpha * dkap;
        // rescale the embedding to keep τ near one
        if tau > 1e6 || tau < 1e-6 && kappa > 1e6 {
            let f = 1.0 / tau.max(kappa);
            x.iter_mut().chain(s.iter_mut()).chain(z.iter_mut()).for_each(|v| *v *= f);
            tau *= f;
            kappa *= f;
        }
    }

    if matches!(status, IpmStatus::Stalled | IpmStatus::MaxIterations) {
        if let Some((_, bx, bs, bz, bt)) = best {
            (x, s, z, tau) = (bx, bs, bz, bt);
        }
    }
    let (xu, su, zu, mt) = match status {
        IpmStatus::PrimalInfeasible | IpmStatus::DualInfeasible => {
            let (xu, su, zu) = unscale(&x, &s, &z, 1.0);
            let mt = metrics(&xu, &su, &zu);
            (xu, su, zu, mt)
        }
        _ => {
            let (xu, su, zu) = unscale(&x, &s, &z, tau);
            let mt = metrics(&xu, &su, &zu);
            (xu, su, zu, mt)
        }
    };
    Ok(IpmSolution {
        status,
        x: xu,
        s: su,
        z: zu,
        primal_objective: mt.pobj,
        dual_objective: mt.dobj,
        gap: mt.gap,
        primal_residual: mt.res_p,
        dual_residual: mt.res_d,
        iterations,
        log,
    })
}
