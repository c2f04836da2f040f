//! Shifted inverse iteration on symmetric pencils and the nonlinear
//! minmax outer iteration built on it.

use crate::assembly::{assemble_system, AssembledSystem};
use crate::basis::reference_shapes;
use crate::dd::{self, Dd};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Mode, PhysicalSystem, TransformSpec};
use crate::mesh::Mesh;
use crate::sparse::{Cholesky, SymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Expansion point; `None` uses the nonrelativistic energy of the mesh.
    pub eps0: Option<f64>,
    pub k_max: usize,
    /// `None` means `1e-15 · max(1, |ε₀|)`.
    pub tol_outer: Option<f64>,
    pub max_outer: usize,
    /// Relative residual `‖Ax − εSx‖ / (‖Ax‖ + |ε| ‖Sx‖)` accepted by the
    /// inner iteration.
    pub tol_inner: f64,
    pub max_inner: usize,
    /// Distance of the first shift below the target; `None` means
    /// `0.01 · max(1, |target|)`.
    pub shift_offset: Option<f64>,
    /// Quadrature points per direction.
    pub n_i: usize,
    /// Newton step on `ε − λ(ε)` using `dλ/dε = xᵀ A'(ε) x`, instead of the
    /// plain substitution `ε ← λ(ε)`. Both share the same fixed point.
    pub accelerate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eps0: None,
            k_max: 9,
            tol_outer: None,
            max_outer: 30,
            tol_inner: 1e-10,
            max_inner: 500,
            shift_offset: None,
            n_i: 25,
            accelerate: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max > 12 {
            return Err(invalid("k_max", "expansion depth must lie in 0..12"));
        }
        if let Some(t) = self.tol_outer {
            if !(t > 0.0) {
                return Err(invalid("tol_outer", "must be positive"));
            }
        }
        if self.max_outer == 0 {
            return Err(invalid("max_outer", "must be at least 1"));
        }
        if self.max_inner == 0 {
            return Err(invalid("max_inner", "must be at least 1"));
        }
        if !(self.tol_inner > 0.0) {
            return Err(invalid("tol_inner", "must be positive"));
        }
        if let Some(o) = self.shift_offset {
            if !(o > 0.0) {
                return Err(invalid("shift_offset", "must be positive"));
            }
        }
        if !(2..=40).contains(&self.n_i) {
            return Err(invalid("n_I", "points per direction must lie in 2..40"));
        }
        Ok(())
    }

    fn outer_tolerance(&self, eps0: f64) -> f64 {
        self.tol_outer.unwrap_or(1e-15 * eps0.abs().max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub energy: f64,
    /// Low word of the double-double Rayleigh quotient; `energy + energy_lo`
    /// keeps differences of nearby energies accurate below one ulp.
    pub energy_lo: f64,
    /// S-normalized eigenvector.
    pub vector: Vec<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub residual_norm: f64,
    /// Shift of the last successful factorization. Every pencil eigenvalue
    /// lies above it.
    pub lower_bound: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn shifted(a: &SymMatrix, s: &SymMatrix, sigma: f64) -> Result<SymMatrix> {
    let mut m = a.clone();
    m.axpy(-sigma, s)?;
    Ok(m)
}

/// Factors `A − σS`, or returns `None` if it is not positive definite.
fn factor_at(a: &SymMatrix, s: &SymMatrix, sigma: f64) -> Result<Option<Cholesky>> {
    shifted(a, s, sigma)?.cholesky()
}

/// True if `A − σS` is positive definite, i.e. no eigenvalue of the pencil
/// lies at or below `σ`.
pub fn no_eigenvalue_below(a: &SymMatrix, s: &SymMatrix, sigma: f64) -> Result<bool> {
    Ok(factor_at(a, s, sigma)?.is_some())
}

pub fn pencil_eigen_near(
    a: &SymMatrix,
    s: &SymMatrix,
    target: f64,
    cfg: &SolverConfig,
) -> Result<EigenResult> {
    pencil_eigen_from(a, s, target, cfg, None)
}

/// Like [`pencil_eigen_near`] with an optional starting vector.
///
/// The shift is kept below the spectrum so that `A − σS` admits a Cholesky
/// factor; the iteration therefore converges to the lowest eigenvalue above
/// the shift, which is the one nearest the target whenever the target lies
/// below the midpoint of the first gap.
pub fn pencil_eigen_from(
    a: &SymMatrix,
    s: &SymMatrix,
    target: f64,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<EigenResult> {
    let n = a.dim();
    if s.dim() != n {
        return Err(invalid("S", "pencil matrices differ in dimension"));
    }
    if n == 0 {
        return Err(invalid("A", "empty pencil"));
    }
    if !target.is_finite() {
        return Err(invalid("target", "must be finite"));
    }
    let offset = cfg
        .shift_offset
        .unwrap_or(0.01 * target.abs().max(1.0));

    let mut sigma = target - offset;
    let mut chol = None;
    for attempt in 0..=5 {
        sigma = target - offset * 10f64.powi(attempt);
        if let Some(c) = factor_at(a, s, sigma)? {
            chol = Some(c);
            break;
        }
    }
    let Some(mut chol) = chol else {
        return Err(Error::Factorization { last_shift: sigma });
    };

    let mut x: Vec<f64> = match start {
        Some(v) if v.len() == n && norm(v) > 0.0 => v.to_vec(),
        _ => (0..n).map(|i| 1.0 + 0.1 * ((i % 7) as f64)).collect(),
    };
    let xn = s.quadratic_form(&x).sqrt();
    x.iter_mut().for_each(|v| *v /= xn);

    let mut rho_prev = f64::NAN;
    let mut best = (f64::INFINITY, f64::NAN, x.clone());
    for it in 1..=cfg.max_inner {
        let mut y = s.apply_dd(&x);
        chol.solve_dd(&mut y);
        let y: Vec<f64> = y.into_iter().map(dd::to_f64).collect();
        let yn = s.quadratic_form(&y).sqrt();
        if !(yn.is_finite() && yn > 0.0) {
            return Err(Error::Iteration("inverse iteration produced a null vector".into()));
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / yn;
        }
        let ax = a.apply_dd(&x);
        let sx = s.apply_dd(&x);
        let xd: Vec<Dd> = x.iter().map(|&v| dd::from(v)).collect();
        let rho_dd = dd::dot_dd(&xd, &ax) / dd::dot_dd(&xd, &sx);
        let rho = rho_dd.0;
        let r: Vec<f64> = ax
            .iter()
            .zip(&sx)
            .map(|(p, q)| dd::to_f64(dd::sub(*p, dd::mul(rho_dd, *q))))
            .collect();
        let ax: Vec<f64> = ax.into_iter().map(dd::to_f64).collect();
        let sx: Vec<f64> = sx.into_iter().map(dd::to_f64).collect();
        let res = norm(&r) / (norm(&ax) + rho.abs() * norm(&sx));
        if res < best.0 {
            best = (res, rho, x.clone());
        }
        let drho = (rho - rho_prev).abs();
        if res <= cfg.tol_inner && drho <= 1e-14 * rho.abs().max(1.0) {
            return Ok(EigenResult {
                energy: rho,
                energy_lo: rho_dd.1,
                vector: x,
                outer_iters: 0,
                inner_iters: it,
                residual_norm: res,
                lower_bound: sigma,
            });
        }
        // move a distant shift up once the Rayleigh quotient has settled
        if it >= 3 && drho < 1e-3 * (rho - sigma) && rho - sigma > 4.0 * offset {
            let trial = rho - offset;
            if let Some(c) = factor_at(a, s, trial)? {
                chol = c;
                sigma = trial;
            }
        }
        rho_prev = rho;
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_inner,
        best_energy: best.1,
        residual: best.0,
        best_vector: best.2,
    })
}

/// Outer iteration on an assembled relativistic system.
pub fn minmax_iterate(
    asm: &AssembledSystem,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<EigenResult> {
    if asm.mode != Mode::Relativistic {
        return Err(invalid("mode", "the outer iteration needs a relativistic system"));
    }
    cfg.validate()?;
    let eps0 = asm.eps0;
    let tol = cfg.outer_tolerance(eps0);
    let mut eps = eps0;
    let mut x: Option<Vec<f64>> = start.map(<[f64]>::to_vec);
    let mut inner = 0;
    let mut last: Option<EigenResult> = None;
    for j in 1..=cfg.max_outer {
        let q = (eps - eps0).abs() * asm.max_inv_g;
        if q >= 0.5 {
            return Err(Error::Iteration(format!(
                "expansion guard violated: |ε − ε₀|·max(1/g) = {q:.3} at ε = {eps}"
            )));
        }
        let op = asm.operator_at(eps);
        let res = pencil_eigen_from(&op, &asm.s, eps, cfg, x.as_deref())?;
        inner += res.inner_iters;
        let lam = res.energy;
        let next = if cfg.accelerate {
            let d = asm.operator_derivative_at(eps).bilinear(&res.vector, &res.vector);
            eps + (lam - eps) / (1.0 - d)
        } else {
            lam
        };
        let delta = (lam - eps).abs();
        if !(next < 0.0) || !next.is_finite() {
            return Err(Error::Window { energy: next });
        }
        x = Some(res.vector.clone());
        let done = delta <= tol;
        last = Some(EigenResult {
            outer_iters: j,
            inner_iters: inner,
            ..res
        });
        if done {
            break;
        }
        eps = next;
    }
    let result = last.expect("at least one outer iteration");
    let delta = (result.energy - eps).abs();
    if delta > tol {
        return Err(Error::NoConvergence {
            iterations: cfg.max_outer,
            best_energy: result.energy,
            residual: delta,
            best_vector: result.vector,
        });
    }
    let tail = expansion_tail(asm, result.energy, &result.vector);
    if tail > tol {
        return Err(Error::Iteration(format!(
            "truncated expansion: k_max = {} leaves a tail of {tail:e} above the tolerance {tol:e}",
            asm.k_max()
        )));
    }
    confirm_lowest(&asm.operator_at(result.energy), &asm.s, result.energy)?;
    Ok(result)
}

/// Fails unless `A − (E − δ)S` is positive definite, i.e. unless `E` is the
/// lowest eigenvalue of the pencil up to `δ = 1e-9·max(1, |E|)`.
pub fn confirm_lowest(a: &SymMatrix, s: &SymMatrix, energy: f64) -> Result<()> {
    let below = energy - 1e-9 * energy.abs().max(1.0);
    if no_eigenvalue_below(a, s, below)? {
        Ok(())
    } else {
        Err(Error::Iteration(format!(
            "the pencil has an eigenvalue below the returned state {energy}"
        )))
    }
}

impl EigenResult {
    /// `self − other` in double-double, rounded once.
    pub fn energy_difference(&self, other: &EigenResult) -> f64 {
        let a = dd::add(dd::from(self.energy), dd::from(self.energy_lo));
        let b = dd::add(dd::from(other.energy), dd::from(other.energy_lo));
        dd::to_f64(dd::sub(a, b))
    }
}

/// Estimate of the energy contribution of the terms beyond `k_max`.
pub fn expansion_tail(asm: &AssembledSystem, eps: f64, x: &[f64]) -> f64 {
    let de = (eps - asm.eps0).abs();
    let q = de * asm.max_inv_g;
    let k = asm.k_max();
    let last = asm.a[k].bilinear(x, x).abs() * de.powi(k as i32);
    last * q / (1.0 - q).max(f64::MIN_POSITIVE)
}

/// Relativistic ground state on `mesh`. Without `cfg.eps0` the expansion
/// point and starting vector come from the nonrelativistic solve.
pub fn minmax_solve(
    mesh: &Mesh,
    system: &PhysicalSystem,
    spec: &TransformSpec,
    cfg: &SolverConfig,
) -> Result<EigenResult> {
    minmax_solve_from(mesh, system, spec, cfg, None)
}

pub fn minmax_solve_from(
    mesh: &Mesh,
    system: &PhysicalSystem,
    spec: &TransformSpec,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<EigenResult> {
    if system.mode != Mode::Relativistic {
        return Err(invalid("mode", "minmax_solve needs a relativistic system"));
    }
    cfg.validate()?;
    let (eps0, warm) = match cfg.eps0 {
        Some(e) => (e, start.map(<[f64]>::to_vec)),
        None => {
            let nr = schroedinger_solve(
                mesh,
                &system.with_mode(Mode::Nonrelativistic),
                spec,
                cfg,
            )?;
            (nr.energy, Some(start.map_or(nr.vector, <[f64]>::to_vec)))
        }
    };
    let shapes = reference_shapes(mesh.p)?;
    let asm = assemble_system(mesh, &shapes, system, spec, eps0, cfg.k_max, cfg.n_i)?;
    minmax_iterate(&asm, cfg, warm.as_deref())
}

/// Lower bound for the nonrelativistic two-center ground state.
fn united_atom_bound(system: &PhysicalSystem) -> f64 {
    let z = system.z1 + system.z2;
    -0.5 * z * z
}

/// Single pencil solve of `(A_0 + W, S)` in nonrelativistic mode.
pub fn schroedinger_solve(
    mesh: &Mesh,
    system: &PhysicalSystem,
    spec: &TransformSpec,
    cfg: &SolverConfig,
) -> Result<EigenResult> {
    if system.mode != Mode::Nonrelativistic {
        return Err(invalid("mode", "schroedinger_solve needs a nonrelativistic system"));
    }
    cfg.validate()?;
    let shapes = reference_shapes(mesh.p)?;
    let asm = assemble_system(mesh, &shapes, system, spec, 0.0, 0, cfg.n_i)?;
    schroedinger_iterate(&asm, system, cfg, None)
}

pub fn schroedinger_iterate(
    asm: &AssembledSystem,
    system: &PhysicalSystem,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<EigenResult> {
    let op = asm.operator_at(0.0);
    let target = match cfg.eps0 {
        Some(e) => e,
        None => united_atom_bound(system),
    };
    let mut res = pencil_eigen_from(&op, &asm.s, target, cfg, start)?;
    confirm_lowest(&op, &asm.s, res.energy)?;
    res.outer_iters = 1;
    Ok(res)
}
