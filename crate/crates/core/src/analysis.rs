//! Grid ladders, the relativistic shift, convergence-order fits and
//! extrapolation to the continuum limit.

use serde::Serialize;

use crate::dd::{self, Dd};
use crate::error::{invalid, Error, Result};
use crate::geometry::{Mode, PhysicalSystem, TransformSpec};
use crate::mesh::{build_mesh_with, Diagonal, Mesh};
use crate::solver::{minmax_solve_from, schroedinger_solve, EigenResult, SolverConfig};

/// Parameters shared by every rung of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    /// Charges, distance and `α`; the mode is ignored because both modes
    /// are solved on every rung.
    pub system: PhysicalSystem,
    pub nu: u32,
    pub d_max: f64,
    pub p: usize,
    pub diagonal: Diagonal,
    pub solver: SolverConfig,
}

impl Study {
    pub fn new(system: PhysicalSystem, nu: u32, d_max: f64) -> Self {
        Study {
            system,
            nu,
            d_max,
            p: 10,
            diagonal: Diagonal::Rising,
            solver: SolverConfig::default(),
        }
    }

    pub fn transform(&self) -> Result<TransformSpec> {
        TransformSpec::new(self.nu, self.d_max, self.system.r)
    }

    pub fn mesh(&self, m: usize) -> Result<Mesh> {
        build_mesh_with(m, self.p, self.transform()?.s_max, self.diagonal)
    }

    pub fn key(&self, m: usize) -> RunKey {
        RunKey {
            z1: self.system.z1,
            z2: self.system.z2,
            r: self.system.r,
            alpha: self.system.alpha,
            two_jz: self.system.two_jz,
            nu: self.nu,
            d_max: self.d_max,
            p: self.p,
            m,
            n_i: self.solver.n_i,
            diagonal: self.diagonal,
        }
    }
}

/// Everything that fixes the discretization of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub z1: f64,
    pub z2: f64,
    pub r: f64,
    pub alpha: f64,
    pub two_jz: i32,
    pub nu: u32,
    pub d_max: f64,
    pub p: usize,
    pub m: usize,
    pub n_i: usize,
    pub diagonal: Diagonal,
}

/// An energy tagged with its mode and, optionally, its discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledEnergy {
    pub energy: f64,
    /// Low word carried by the solver; zero for plain numbers.
    pub energy_lo: f64,
    pub mode: Mode,
    pub key: Option<RunKey>,
}

impl LabeledEnergy {
    pub fn plain(energy: f64, mode: Mode) -> Self {
        LabeledEnergy {
            energy,
            energy_lo: 0.0,
            mode,
            key: None,
        }
    }

    pub fn from_result(res: &EigenResult, mode: Mode, key: RunKey) -> Self {
        LabeledEnergy {
            energy: res.energy,
            energy_lo: res.energy_lo,
            mode,
            key: Some(key),
        }
    }

    fn value(&self) -> Dd {
        dd::add(dd::from(self.energy), dd::from(self.energy_lo))
    }
}

/// `ΔE = E_rel − E_nrel`. Both energies must come from the same
/// discretization for the errors to cancel.
pub fn relativistic_shift(rel: &LabeledEnergy, nrel: &LabeledEnergy) -> Result<f64> {
    if rel.mode != Mode::Relativistic || nrel.mode != Mode::Nonrelativistic {
        return Err(Error::InvalidPairing(
            "expected one relativistic and one nonrelativistic energy".into(),
        ));
    }
    match (&rel.key, &nrel.key) {
        (None, None) => {}
        (Some(a), Some(b)) if a == b => {}
        (Some(a), Some(b)) => {
            return Err(Error::InvalidPairing(format!(
                "energies come from different runs: {a:?} vs {b:?}"
            )))
        }
        _ => {
            return Err(Error::InvalidPairing(
                "only one energy carries run parameters".into(),
            ))
        }
    }
    Ok(dd::to_f64(dd::sub(rel.value(), nrel.value())))
}

/// One grid of a ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rung {
    pub m: usize,
    #[serde(rename = "Ne")]
    pub ne: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "E_rel")]
    pub e_rel: f64,
    #[serde(rename = "E_nrel")]
    pub e_nrel: f64,
    pub shift: f64,
    pub outer_iters: usize,
}

/// The three observables tracked along a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Rel,
    Nrel,
    Shift,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::Rel, Observable::Nrel, Observable::Shift];

    pub fn of(self, r: &Rung) -> f64 {
        match self {
            Observable::Rel => r.e_rel,
            Observable::Nrel => r.e_nrel,
            Observable::Shift => r.shift,
        }
    }
}

/// One value per observable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PerObservable {
    #[serde(rename = "E_rel")]
    pub rel: Option<f64>,
    #[serde(rename = "E_nrel")]
    pub nrel: Option<f64>,
    pub shift: Option<f64>,
}

impl PerObservable {
    pub fn get(&self, o: Observable) -> Option<f64> {
        match o {
            Observable::Rel => self.rel,
            Observable::Nrel => self.nrel,
            Observable::Shift => self.shift,
        }
    }

    fn set(&mut self, o: Observable, v: Option<f64>) {
        match o {
            Observable::Rel => self.rel = v,
            Observable::Nrel => self.nrel = v,
            Observable::Shift => self.shift = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceResult {
    /// Ordered by increasing `N`.
    pub rungs: Vec<Rung>,
    pub q_fit: PerObservable,
    #[serde(rename = "E_extrap")]
    pub e_extrap: PerObservable,
    pub uncertainty: PerObservable,
}

impl SequenceResult {
    /// Fills the fit and extrapolation columns from the rungs. Each
    /// observable is extrapolated with a free order; the order fit then
    /// uses the extrapolated limit as reference.
    pub fn from_rungs(mut rungs: Vec<Rung>) -> Self {
        rungs.sort_by_key(|r| r.n);
        let mut out = SequenceResult {
            rungs,
            q_fit: PerObservable::default(),
            e_extrap: PerObservable::default(),
            uncertainty: PerObservable::default(),
        };
        for o in Observable::ALL {
            let pts = out.points(o);
            let Ok(ex) = extrapolate(&pts, None) else {
                continue;
            };
            out.e_extrap.set(o, Some(ex.value));
            out.uncertainty.set(o, Some(ex.uncertainty));
            let q = fit_convergence_order(&pts, ex.value, None).ok().map(|f| f.q);
            out.q_fit.set(o, q);
        }
        out
    }

    /// `(N, value)` pairs of one observable.
    pub fn points(&self, o: Observable) -> Vec<(f64, f64)> {
        self.rungs.iter().map(|r| (r.n as f64, o.of(r))).collect()
    }
}

/// Result of [`fit_convergence_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    /// `δE ∼ N^(−q)`.
    pub q: f64,
    /// Indices of the rungs used in the fit.
    pub used: Vec<usize>,
    /// Indices of rungs at or below the noise floor.
    pub excluded: Vec<usize>,
}

/// Least-squares order `q` of `|E − E_ref| ∼ N^(−q)`.
///
/// Rungs whose error does not exceed `noise_floor` (default
/// `1e-13·|E_ref|`) are left out and reported.
pub fn fit_convergence_order(
    rungs: &[(f64, f64)],
    e_ref: f64,
    noise_floor: Option<f64>,
) -> Result<OrderFit> {
    let floor = noise_floor.unwrap_or(1e-13 * e_ref.abs());
    let (mut used, mut excluded) = (Vec::new(), Vec::new());
    for (i, &(n, e)) in rungs.iter().enumerate() {
        if n > 0.0 && (e - e_ref).abs() > floor {
            used.push(i);
        } else {
            excluded.push(i);
        }
    }
    if used.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} rungs above the noise floor {floor:e}, at least 3 needed",
            used.len()
        )));
    }
    let xs: Vec<f64> = used.iter().map(|&i| rungs[i].0.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|&i| (rungs[i].1 - e_ref).abs().ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("rungs share one N".into()));
    }
    Ok(OrderFit {
        q: -sxy / sxx,
        used,
        excluded,
    })
}

/// Result of [`extrapolate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrapolation {
    pub value: f64,
    /// Low word of the limit, nonzero only when the input carried more
    /// than double precision.
    pub value_lo: f64,
    pub uncertainty: f64,
    /// Order used by the model `E∞ + C·N^(−q)`.
    pub q: f64,
    /// The last rungs coincide and no model could be fitted.
    pub degenerate: bool,
}

/// Limit of `E(N) = E∞ + C·N^(−q)` from the last three rungs. With
/// `q = None` the order is eliminated from the three rungs as well.
pub fn extrapolate(rungs: &[(f64, f64)], q: Option<f64>) -> Result<Extrapolation> {
    let pts: Vec<(f64, Dd)> = rungs.iter().map(|&(n, e)| (n, dd::from(e))).collect();
    extrapolate_dd(&pts, q)
}

/// [`extrapolate`] on double-double energies, for tabulated data with
/// more digits than `f64` holds.
pub fn extrapolate_dd(rungs: &[(f64, Dd)], q: Option<f64>) -> Result<Extrapolation> {
    if rungs.len() < 3 {
        return Err(Error::InsufficientData("extrapolation needs 3 rungs".into()));
    }
    let last = &rungs[rungs.len() - 3..];
    let n: Vec<f64> = last.iter().map(|p| p.0).collect();
    if !(0.0 < n[0] && n[0] < n[1] && n[1] < n[2]) {
        return Err(invalid("N", "rungs must have increasing positive N"));
    }
    let e3 = last[2].1;
    // energies relative to the last rung; exact enough in f64
    let rel: Vec<f64> = last.iter().map(|p| dd::to_f64(dd::sub(p.1, e3))).collect();
    let degenerate = |q: f64| Extrapolation {
        value: e3.0,
        value_lo: e3.1,
        uncertainty: 0.0,
        q,
        degenerate: true,
    };
    let (d1, d2) = (rel[0] - rel[1], rel[1]);
    let order = match q {
        Some(q) => {
            if !(q > 0.0) {
                return Err(invalid("q", "order must be positive"));
            }
            q
        }
        None => {
            if d1 == 0.0 && d2 == 0.0 {
                return Ok(degenerate(f64::NAN));
            }
            if d2 == 0.0 {
                return Ok(degenerate(f64::INFINITY));
            }
            solve_order(n[0], n[1], n[2], d1 / d2)?
        }
    };
    // E_i − E_3 = a + C u_i with u_i = (N_3/N_i)^q, least squares in (a, C)
    let u: Vec<f64> = n.iter().map(|&ni| (n[2] / ni).powf(order)).collect();
    let (mu, my) = (u.iter().sum::<f64>() / 3.0, rel.iter().sum::<f64>() / 3.0);
    let suy: f64 = (0..3).map(|i| (u[i] - mu) * (rel[i] - my)).sum();
    let suu: f64 = (0..3).map(|i| (u[i] - mu).powi(2)).sum();
    let c = suy / suu;
    if c == 0.0 || !c.is_finite() {
        return Ok(degenerate(order));
    }
    let a = my - c * mu;
    let v = dd::add(e3, dd::from(a));
    let r = n[2] / n[1];
    Ok(Extrapolation {
        value: v.0,
        value_lo: v.1,
        uncertainty: a.abs() / (r.powf(order) - 1.0),
        q: order,
        degenerate: false,
    })
}

/// Order `q` with `((N2/N1)^q − 1) / (1 − (N2/N3)^q) = ratio`.
fn solve_order(n1: f64, n2: f64, n3: f64, ratio: f64) -> Result<f64> {
    let f = |q: f64| ((n2 / n1).powf(q) - 1.0) / (1.0 - (n2 / n3).powf(q));
    let f0 = (n2 / n1).ln() / (n3 / n2).ln();
    if !(ratio > f0) {
        return Err(Error::InsufficientData(format!(
            "rung increments {ratio:e} do not decay like a power law"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while f(hi) < ratio {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::InsufficientData("order exceeds 1000".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) < ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Both solves on one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct RungSolve {
    pub rung: Rung,
    pub rel: EigenResult,
    pub nrel: EigenResult,
}

/// Paired relativistic and nonrelativistic solves for grid `m`. The
/// outer iteration expands around `eps0` if given, else around the
/// nonrelativistic energy of the same mesh.
pub fn solve_rung(study: &Study, m: usize, eps0: Option<f64>) -> Result<RungSolve> {
    let spec = study.transform()?;
    let mesh = study.mesh(m)?;
    let key = study.key(m);
    let nrel = schroedinger_solve(
        &mesh,
        &study.system.with_mode(Mode::Nonrelativistic),
        &spec,
        &study.solver,
    )?;
    let cfg = SolverConfig {
        eps0: Some(eps0.or(study.solver.eps0).unwrap_or(nrel.energy)),
        ..study.solver.clone()
    };
    let rel = minmax_solve_from(
        &mesh,
        &study.system.with_mode(Mode::Relativistic),
        &spec,
        &cfg,
        Some(&nrel.vector),
    )?;
    let shift = relativistic_shift(
        &LabeledEnergy::from_result(&rel, Mode::Relativistic, key),
        &LabeledEnergy::from_result(&nrel, Mode::Nonrelativistic, key),
    )?;
    let rung = Rung {
        m,
        ne: mesh.ne(),
        n: mesh.n_nodes(),
        e_rel: rel.energy,
        e_nrel: nrel.energy,
        shift,
        outer_iters: rel.outer_iters,
    };
    Ok(RungSolve { rung, rel, nrel })
}

/// A ladder that may have stopped early.
#[derive(Debug)]
pub struct LadderOutcome {
    pub result: SequenceResult,
    /// Rung and error that ended the ladder.
    pub failure: Option<(usize, Error)>,
}

/// Runs the rungs of `m_list` in order. Each finer rung expands around the
/// relativistic energy of the previous one. With `workers > 1` rungs run
/// concurrently and each expands around its own nonrelativistic energy.
pub fn run_ladder(study: &Study, m_list: &[usize], workers: usize) -> Result<LadderOutcome> {
    ladder(study, m_list, workers, workers <= 1)
}

/// Paired solves on every rung, each expanded around its own
/// nonrelativistic energy so that both members of a pair share nothing but
/// the mesh and parameters.
pub fn run_shift_study(study: &Study, m_list: &[usize], workers: usize) -> Result<LadderOutcome> {
    ladder(study, m_list, workers, false)
}

fn ladder(study: &Study, m_list: &[usize], workers: usize, chain: bool) -> Result<LadderOutcome> {
    check_m_list(m_list)?;
    let mut rungs = Vec::new();
    let mut failure = None;
    if chain {
        let mut prev = None;
        for &m in m_list {
            match solve_rung(study, m, prev) {
                Ok(s) => {
                    prev = Some(s.rel.energy);
                    rungs.push(s.rung);
                }
                Err(e) => {
                    failure = Some((m, e));
                    break;
                }
            }
        }
    } else {
        let results = parallel_map(m_list, workers, |&m| solve_rung(study, m, None));
        for (&m, r) in m_list.iter().zip(results) {
            match r {
                Ok(s) => rungs.push(s.rung),
                Err(e) => {
                    failure = Some((m, e));
                    break;
                }
            }
        }
    }
    Ok(LadderOutcome {
        result: SequenceResult::from_rungs(rungs),
        failure,
    })
}

/// One rung per `D_max` value at fixed `m`; each entry is `(D_max, rung)`.
pub fn dmax_scan(
    study: &Study,
    d_list: &[f64],
    m: usize,
    workers: usize,
) -> Vec<(f64, Result<Rung>)> {
    let run = |&d: &f64| {
        let s = Study {
            d_max: d,
            ..study.clone()
        };
        solve_rung(&s, m, None).map(|r| r.rung)
    };
    let results = parallel_map(d_list, workers.max(1), run);
    d_list.iter().copied().zip(results).collect()
}

/// Largest minus smallest value.
pub fn scatter(values: &[f64]) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}

fn check_m_list(m_list: &[usize]) -> Result<()> {
    if m_list.is_empty() {
        return Err(invalid("m_list", "ladder needs at least one rung"));
    }
    if m_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("m_list", "rungs must be strictly increasing"));
    }
    Ok(())
}

/// Order-preserving map over at most `workers` scoped threads.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| scope.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}
