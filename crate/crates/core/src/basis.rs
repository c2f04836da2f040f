//! Order-p nodal shape functions on the reference triangle and the global
//! factors `G^k = u^{|m_k|} r1^{γ1-1} r2^{γ2-1}` carried by each large
//! component.

use crate::error::{invalid, Error, Result};
use crate::geometry::{PhysicalSystem, PointKinematics};
use crate::mesh::reference_lattice;

/// Lagrange basis of the complete polynomials of order `p` on the
/// reference triangle `{(a, b): a, b >= 0, a + b <= 1}`, nodal on the
/// equispaced lattice in [`reference_lattice`] order.
///
/// Each function is the Silvester product `R_k(λ1) R_i(λ2) R_j(λ3)` over
/// barycentric coordinates, so no interpolation system has to be inverted.
#[derive(Debug, Clone)]
pub struct ShapeSet {
    pub p: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Barycentric lattice indices `(k, i, j)`, `k + i + j = p`.
    multi: Vec<[usize; 3]>,
}

/// Values and reference gradients of all shape functions at one point.
#[derive(Debug, Clone, Default)]
pub struct ShapeEval {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
}

impl ShapeSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn evaluate(&self, a: f64, b: f64) -> ShapeEval {
        let mut out = ShapeEval {
            values: vec![0.0; self.len()],
            grads: vec![[0.0; 2]; self.len()],
        };
        self.evaluate_into(a, b, &mut out);
        out
    }

    pub fn evaluate_into(&self, a: f64, b: f64, out: &mut ShapeEval) {
        let p = self.p;
        let lam = [1.0 - a - b, a, b];
        // table[c][n] = (R_n(λ_c), R_n'(λ_c))
        let mut table = vec![[(0.0, 0.0); 3]; p + 1];
        for (c, &l) in lam.iter().enumerate() {
            let (mut r, mut dr) = (1.0, 0.0);
            table[0][c] = (r, dr);
            for n in 1..=p {
                let f = (p as f64 * l - (n - 1) as f64) / n as f64;
                let df = p as f64 / n as f64;
                dr = dr * f + r * df;
                r *= f;
                table[n][c] = (r, dr);
            }
        }
        out.values.resize(self.len(), 0.0);
        out.grads.resize(self.len(), [0.0; 2]);
        for (idx, &[k, i, j]) in self.multi.iter().enumerate() {
            let (r1, d1) = table[k][0];
            let (r2, d2) = table[i][1];
            let (r3, d3) = table[j][2];
            out.values[idx] = r1 * r2 * r3;
            // dλ1/da = dλ1/db = -1, dλ2/da = 1, dλ3/db = 1
            out.grads[idx] = [-d1 * r2 * r3 + r1 * d2 * r3, -d1 * r2 * r3 + r1 * r2 * d3];
        }
    }
}

pub fn reference_shapes(p: usize) -> Result<ShapeSet> {
    if !(1..=12).contains(&p) {
        return Err(invalid("p", "polynomial order must lie in 1..12"));
    }
    let lattice = reference_lattice(p);
    let nodes: Vec<[f64; 2]> = lattice
        .iter()
        .map(|&(i, j)| [i as f64 / p as f64, j as f64 / p as f64])
        .collect();
    let multi = lattice.iter().map(|&(i, j)| [p - i - j, i, j]).collect();
    let set = ShapeSet { p, nodes, multi };

    let mut eval = ShapeEval::default();
    let mut worst: f64 = 0.0;
    for (j, node) in set.nodes.iter().enumerate() {
        set.evaluate_into(node[0], node[1], &mut eval);
        for (i, v) in eval.values.iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - expected).abs());
        }
    }
    if worst > 1e-10 {
        return Err(Error::Construction(format!(
            "nodal residual {worst:e} exceeds 1e-10 at p = {p}"
        )));
    }
    Ok(set)
}

/// Exponents of the global factors for one system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalFactorParams {
    pub two_jz: i32,
    pub gamma1: f64,
    pub gamma2: f64,
    /// `m_1 = j_z - 1/2`, `m_2 = j_z + 1/2`.
    pub m: [i32; 2],
}

impl GlobalFactorParams {
    pub fn new(system: &PhysicalSystem) -> Self {
        GlobalFactorParams {
            two_jz: system.two_jz,
            gamma1: system.gamma(1),
            gamma2: system.gamma(2),
            m: [(system.two_jz - 1) / 2, (system.two_jz + 1) / 2],
        }
    }
}

/// `G^k` at a point with its logarithmic derivatives in (s, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalFactor {
    pub value: f64,
    pub dlog_ds: f64,
    pub dlog_dt: f64,
}

impl GlobalFactor {
    /// `(G, ∂G/∂s, ∂G/∂t)`
    pub fn gradient(&self) -> (f64, f64, f64) {
        (
            self.value,
            self.value * self.dlog_ds,
            self.value * self.dlog_dt,
        )
    }
}

/// Global factor of component `k` (1 or 2), evaluated in log space.
pub fn global_factor(
    k: usize,
    kin: &PointKinematics,
    params: &GlobalFactorParams,
) -> Result<GlobalFactor> {
    if !(1..=2).contains(&k) {
        return Err(invalid("k", "component index must be 1 or 2"));
    }
    if kin.r1 <= 0.0 {
        return Err(Error::SingularPoint { nucleus: 1 });
    }
    if kin.r2 <= 0.0 {
        return Err(Error::SingularPoint { nucleus: 2 });
    }
    let mk = params.m[k - 1].unsigned_abs() as f64;
    let xi_p_eta = kin.xi_m1 + kin.one_p_eta;
    let xi_m_eta = kin.xi_m1 + kin.one_m_eta;
    let (e1, e2) = (params.gamma1 - 1.0, params.gamma2 - 1.0);

    let mut log_g = 0.0;
    let mut ds = 0.0;
    let mut dt = 0.0;
    if e1 != 0.0 {
        log_g += e1 * kin.r1.ln();
        ds += e1 * kin.dxi_ds / xi_p_eta;
        dt += e1 * kin.deta_dt / xi_p_eta;
    }
    if e2 != 0.0 {
        log_g += e2 * kin.r2.ln();
        ds += e2 * kin.dxi_ds / xi_m_eta;
        dt -= e2 * kin.deta_dt / xi_m_eta;
    }
    if mk != 0.0 {
        if kin.u == 0.0 {
            return Ok(GlobalFactor {
                value: 0.0,
                dlog_ds: 0.0,
                dlog_dt: 0.0,
            });
        }
        log_g += mk * kin.u.ln();
        ds += mk * kin.xi * kin.dxi_ds / (kin.xi_m1 * kin.xi_p1);
        dt -= mk * kin.eta * kin.deta_dt / (kin.one_m_eta * kin.one_p_eta);
    }
    Ok(GlobalFactor {
        value: log_g.exp(),
        dlog_ds: ds,
        dlog_dt: dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{point_kinematics, Mode, TransformSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interior_point(rng: &mut ChaCha8Rng) -> (f64, f64) {
        loop {
            let (a, b): (f64, f64) = (rng.gen_range(0.01..0.98), rng.gen_range(0.01..0.98));
            if a + b < 0.99 {
                return (a, b);
            }
        }
    }

    #[test]
    fn linear_shapes_at_centroid() {
        let set = reference_shapes(1).unwrap();
        assert_eq!(set.len(), 3);
        let e = set.evaluate(1.0 / 3.0, 1.0 / 3.0);
        for v in e.values {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_formula() {
        for p in 1..=12 {
            assert_eq!(reference_shapes(p).unwrap().len(), (p + 1) * (p + 2) / 2);
        }
        assert!(reference_shapes(0).is_err());
        assert!(reference_shapes(13).is_err());
    }

    #[test]
    fn kronecker_and_partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [1, 2, 5, 10] {
            let set = reference_shapes(p).unwrap();
            for (j, n) in set.nodes.iter().enumerate() {
                let e = set.evaluate(n[0], n[1]);
                for (i, v) in e.values.iter().enumerate() {
                    let d = if i == j { 1.0 } else { 0.0 };
                    assert!((v - d).abs() < 1e-10);
                }
            }
            for _ in 0..20 {
                let (a, b) = interior_point(&mut rng);
                let e = set.evaluate(a, b);
                let sum: f64 = e.values.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                let gsum = e.grads.iter().fold([0.0, 0.0], |acc, g| [acc[0] + g[0], acc[1] + g[1]]);
                assert!(gsum[0].abs() < 1e-9 && gsum[1].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn reproduces_random_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [3, 7, 10] {
            let set = reference_shapes(p).unwrap();
            let coeffs: Vec<((i32, i32), f64)> = reference_lattice(p)
                .iter()
                .map(|&(i, j)| ((i as i32, j as i32), rng.gen_range(-1.0..1.0)))
                .collect();
            let poly = |a: f64, b: f64| -> f64 {
                coeffs.iter().map(|&((i, j), c)| c * a.powi(i) * b.powi(j)).sum()
            };
            let nodal: Vec<f64> = set.nodes.iter().map(|n| poly(n[0], n[1])).collect();
            for _ in 0..20 {
                let (a, b) = interior_point(&mut rng);
                let e = set.evaluate(a, b);
                let interp: f64 = e.values.iter().zip(&nodal).map(|(v, c)| v * c).sum();
                assert!((interp - poly(a, b)).abs() < 1e-9, "p={p}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = reference_shapes(10).unwrap();
        let h = 1e-6;
        for _ in 0..10 {
            let (a, b) = interior_point(&mut rng);
            let e = set.evaluate(a, b);
            let (ap, am) = (set.evaluate(a + h, b), set.evaluate(a - h, b));
            let (bp, bm) = (set.evaluate(a, b + h), set.evaluate(a, b - h));
            for i in 0..set.len() {
                let fa = (ap.values[i] - am.values[i]) / (2.0 * h);
                let fb = (bp.values[i] - bm.values[i]) / (2.0 * h);
                assert!((fa - e.grads[i][0]).abs() < 1e-7);
                assert!((fb - e.grads[i][1]).abs() < 1e-7);
            }
        }
    }

    fn th2() -> (PhysicalSystem, TransformSpec) {
        let sys = PhysicalSystem::new(90.0, 90.0, 2.0 / 90.0, Mode::Relativistic).unwrap();
        let spec = TransformSpec::new(10, 0.35, sys.r).unwrap();
        (sys, spec)
    }

    #[test]
    fn exponents() {
        let (sys, _) = th2();
        let p = GlobalFactorParams::new(&sys);
        assert_eq!(p.m, [0, 1]);
        // sqrt(1 - (90/137.035999084)²) evaluated in higher precision
        assert!((p.gamma1 - 0.754_098_0).abs() < 1e-6);
        assert!(p.gamma1 > 0.0 && p.gamma1 <= 1.0);
        let nr = GlobalFactorParams::new(&sys.with_mode(Mode::Nonrelativistic));
        assert_eq!((nr.gamma1, nr.gamma2), (1.0, 1.0));
    }

    #[test]
    fn trivial_factors_are_one() {
        let (sys, spec) = th2();
        let nr = GlobalFactorParams::new(&sys.with_mode(Mode::Nonrelativistic));
        let kin = point_kinematics(0.4, 1.1, &sys, &spec).unwrap();
        let g = global_factor(1, &kin, &nr).unwrap();
        assert_eq!(g.gradient(), (1.0, 0.0, 0.0));
    }

    #[test]
    fn factor_gradients_match_finite_differences() {
        let (sys, spec) = th2();
        for mode in [Mode::Relativistic, Mode::Nonrelativistic] {
            let sys = sys.with_mode(mode);
            let params = GlobalFactorParams::new(&sys);
            for &(s, t) in &[(0.3, 0.5), (1.1, 2.0), (0.7, 2.9), (1.6, 0.2)] {
                for k in 1..=2 {
                    let g = |s, t| {
                        let kin = point_kinematics(s, t, &sys, &spec).unwrap();
                        global_factor(k, &kin, &params).unwrap().value
                    };
                    let kin = point_kinematics(s, t, &sys, &spec).unwrap();
                    let (v, ds, dt) = global_factor(k, &kin, &params).unwrap().gradient();
                    let h = 1e-6;
                    let fs = (g(s + h, t) - g(s - h, t)) / (2.0 * h);
                    let ft = (g(s, t + h) - g(s, t - h)) / (2.0 * h);
                    let scale = v.abs() / s.min(t).min(std::f64::consts::PI - t);
                    assert!((fs - ds).abs() <= 1e-7 * (ds.abs() + scale), "{s} {t} {k}");
                    assert!((ft - dt).abs() <= 1e-7 * (dt.abs() + scale), "{s} {t} {k}");
                }
            }
        }
    }

    #[test]
    fn homonuclear_factor_is_reflection_symmetric() {
        let (sys, spec) = th2();
        let params = GlobalFactorParams::new(&sys);
        for &(s, t) in &[(0.2, 0.3), (0.9, 1.2), (1.5, 0.05)] {
            for k in 1..=2 {
                let a = global_factor(k, &point_kinematics(s, t, &sys, &spec).unwrap(), &params)
                    .unwrap();
                let b = global_factor(
                    k,
                    &point_kinematics(s, std::f64::consts::PI - t, &sys, &spec).unwrap(),
                    &params,
                )
                .unwrap();
                assert!((a.value - b.value).abs() < 1e-12 * a.value);
            }
        }
    }

    #[test]
    fn focus_is_rejected() {
        let (sys, spec) = th2();
        let params = GlobalFactorParams::new(&sys);
        let mut kin = point_kinematics(0.4, 1.1, &sys, &spec).unwrap();
        kin.r2 = 0.0;
        assert!(matches!(
            global_factor(1, &kin, &params),
            Err(Error::SingularPoint { nucleus: 2 })
        ));
    }
}
