//! Triangle quadrature and element-by-element construction of the matrix
//! family of the large-component weak form.
//!
//! With `T_a = ∂_z φ¹ + (∂_ρ + m₂/ρ) φ²` and `T_b = (∂_ρ − m₁/ρ) φ¹ − ∂_z φ²`,
//! the kinetic forms are `A_k = ∫ c² (T_a² + T_b²) / g^{k+1}` with
//! `g = ε₀ + 2c² − V`, so that `A(ε) = Σ_k (−Δε)^k A_k + W` for
//! `Δε = ε − ε₀`. In nonrelativistic mode the denominator is the constant 2.

use std::sync::Arc;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::basis::{global_factor, GlobalFactorParams, ShapeEval, ShapeSet};
use crate::dd;
use crate::error::{invalid, Error, Result};
use crate::geometry::{point_kinematics, Mode, PhysicalSystem, TransformSpec};
use crate::mesh::Mesh;
use crate::sparse::{SymMatrix, SymPattern};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub n_i: usize,
    /// Reference-triangle points `(a, b)`.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton on P_n from the Chebyshev-like initial guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wt = 1.0 / ((1.0 - z * z) * dp * dp);
        // map [-1, 1] to [0, 1]
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = wt;
        w[n - 1 - i] = wt;
    }
    (x, w)
}

/// Collapsed tensor Gauss rule with `n_i` points per direction.
pub fn triangle_quadrature(n_i: usize) -> Result<QuadratureRule> {
    if !(2..=40).contains(&n_i) {
        return Err(invalid("n_I", "points per direction must lie in 2..40"));
    }
    let (x, w) = gauss_legendre(n_i);
    let mut points = Vec::with_capacity(n_i * n_i);
    let mut weights = Vec::with_capacity(n_i * n_i);
    for (yb, wb) in x.iter().zip(&w) {
        for (xa, wa) in x.iter().zip(&w) {
            points.push([xa * (1.0 - yb), *yb]);
            weights.push(wa * wb * (1.0 - yb));
        }
    }
    Ok(QuadratureRule {
        n_i,
        points,
        weights,
    })
}

impl QuadratureRule {
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub dim: usize,
    /// `A_0 .. A_{k_max}`; a single entry in nonrelativistic mode.
    pub a: Vec<SymMatrix>,
    pub s: SymMatrix,
    pub w: SymMatrix,
    pub eps0: f64,
    pub mode: Mode,
    /// Largest `1/g` seen at any quadrature point.
    pub max_inv_g: f64,
    /// Free-node index of each mesh node, `None` on the Dirichlet edge.
    pub free_index: Vec<Option<usize>>,
}

impl AssembledSystem {
    pub fn k_max(&self) -> usize {
        self.a.len() - 1
    }

    /// `A(ε) = Σ_k (−Δε)^k A_k + W` with `Δε = ε − ε₀`.
    pub fn operator_at(&self, eps: f64) -> SymMatrix {
        let mut out = self.w.clone();
        let x = -(eps - self.eps0);
        let mut f = 1.0;
        for ak in &self.a {
            out.axpy(f, ak).expect("shared pattern");
            f *= x;
        }
        out
    }

    /// `dA/dε` at `ε`.
    pub fn operator_derivative_at(&self, eps: f64) -> SymMatrix {
        let mut out = SymMatrix::zeros(self.s.pattern().clone());
        let x = -(eps - self.eps0);
        let mut f = 1.0;
        for (k, ak) in self.a.iter().enumerate().skip(1) {
            out.axpy(-(k as f64) * f, ak).expect("shared pattern");
            f *= x;
        }
        out
    }
}

/// Upper-triangle pattern over interleaved dofs `2·free + (k − 1)`.
fn build_pattern(mesh: &Mesh, free_index: &[Option<usize>], n_free: usize) -> Result<SymPattern> {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_free];
    for el in &mesh.elements {
        let free: Vec<usize> = el.nodes.iter().filter_map(|&n| free_index[n]).collect();
        for &a in &free {
            for &b in &free {
                if b <= a {
                    adjacency[a].push(b);
                }
            }
        }
    }
    let mut columns = Vec::with_capacity(2 * n_free);
    for (n, nbrs) in adjacency.iter_mut().enumerate() {
        nbrs.sort_unstable();
        nbrs.dedup();
        for c in 0..2 {
            let mut rows = Vec::with_capacity(2 * nbrs.len());
            for &b in nbrs.iter() {
                rows.push(2 * b);
                if b < n || c == 1 {
                    rows.push(2 * b + 1);
                }
            }
            columns.push(rows);
        }
    }
    SymPattern::from_columns(2 * n_free, columns)
}

/// Expansion terms accumulated in double-double. Later terms enter the
/// operator scaled by at least `(|Δε| max 1/g)²`, which hides their `f64`
/// rounding.
const PRECISE_TERMS: usize = 2;

/// Per quadrature point data on one element.
struct PointData {
    /// Weight for `S` (includes the full volume element).
    w_s: f64,
    /// Weight for `W` (volume element with `V (ξ²−η²)` folded in).
    w_v: f64,
    /// Weight of `T̃² ` where `T̃ = a (ξ²−η²) T`, before the `g` factors.
    w_t: f64,
    /// `(ξ²−η²) / (g (ξ²−η²))`, i.e. `1/g`.
    inv_g: f64,
}

pub fn assemble_system(
    mesh: &Mesh,
    shapes: &ShapeSet,
    system: &PhysicalSystem,
    spec: &TransformSpec,
    eps0: f64,
    k_max: usize,
    n_i: usize,
) -> Result<AssembledSystem> {
    system.validate()?;
    if shapes.p != mesh.p {
        return Err(invalid("p", "shape set order differs from mesh order"));
    }
    if k_max > 12 {
        return Err(invalid("k_max", "expansion depth must lie in 0..12"));
    }
    let c = system.c();
    let relativistic = system.mode == Mode::Relativistic;
    if relativistic && !(eps0 > -2.0 * c * c && eps0 < 0.0) {
        return Err(invalid(
            "eps0",
            "expansion point must lie in the electronic window (-2c², 0)",
        ));
    }
    if (mesh.s_max - spec.s_max).abs() > 1e-12 * spec.s_max {
        return Err(invalid("s_max", "mesh and transform disagree on the domain"));
    }
    let rule = triangle_quadrature(n_i)?;
    let params = GlobalFactorParams::new(system);
    let n_mats = if relativistic { k_max + 1 } else { 1 };

    let mut free_index = vec![None; mesh.n_nodes()];
    let mut n_free = 0;
    for (n, &b) in mesh.boundary_mask.iter().enumerate() {
        if !b {
            free_index[n] = Some(n_free);
            n_free += 1;
        }
    }
    let pattern = Arc::new(build_pattern(mesh, &free_index, n_free)?);
    let mut a: Vec<SymMatrix> = (0..n_mats).map(|_| SymMatrix::zeros(pattern.clone())).collect();
    let mut s = SymMatrix::zeros(pattern.clone());
    let mut w = SymMatrix::zeros(pattern.clone());

    let nb = shapes.len();
    let nq = rule.points.len();
    let ref_evals: Vec<ShapeEval> = rule
        .points
        .iter()
        .map(|p| shapes.evaluate(p[0], p[1]))
        .collect();
    let m1 = params.m[0] as f64;
    let m2 = params.m[1] as f64;
    let half_r = 0.5 * system.r;
    let geps = eps0 + 2.0 * c * c;
    let mut max_inv_g: f64 = 0.0;

    // Column-major point data: column `2i + (k−1)` of `bmat` holds
    // (T̃_a, T̃_b) at every point, column `i` of `phi[k]` holds φᵏ_i.
    let nd = 2 * nb;
    let rows_t = 2 * nq;
    let mut bmat = vec![0.0; nd * rows_t];
    let mut bw = vec![0.0; nd * rows_t];
    let mut phi = [vec![0.0; nb * nq], vec![0.0; nb * nq]];
    let mut phi_l = vec![0.0; nb * nq];
    let mut phi_r = vec![0.0; nb * nq];
    let mut data: Vec<PointData> = Vec::with_capacity(nq);
    let mut root_w = vec![0.0; nq];
    let mut local = Mat::<f64>::zeros(nd, nd);

    for el in &mesh.elements {
        let [v0, v1, v2] = el.vertices;
        let j = [[v1[0] - v0[0], v2[0] - v0[0]], [v1[1] - v0[1], v2[1] - v0[1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let inv = [
            [j[1][1] / det, -j[0][1] / det],
            [-j[1][0] / det, j[0][0] / det],
        ];
        data.clear();
        for (q, (pt, wq)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let st = [
                v0[0] + pt[0] * j[0][0] + pt[1] * j[0][1],
                v0[1] + pt[0] * j[1][0] + pt[1] * j[1][1],
            ];
            let kin = point_kinematics(st[0], st[1], system, spec)?;
            let g1 = global_factor(1, &kin, &params)?;
            let g2 = global_factor(2, &kin, &params)?;
            let base = wq * det.abs() * kin.dxi_ds * kin.deta_dt.abs();
            let metric = kin.metric;
            let inv_g = if relativistic {
                metric / (geps * metric - kin.potential_weighted)
            } else {
                0.5
            };
            max_inv_g = max_inv_g.max(inv_g);
            let a3 = half_r * half_r * half_r;
            data.push(PointData {
                w_s: base * a3 * metric,
                w_v: base * a3 * kin.potential_weighted,
                w_t: base * half_r / metric * if relativistic { c * c } else { 1.0 },
                inv_g,
            });

            let xi2m1 = kin.xi_m1 * kin.xi_p1;
            let om_eta2 = kin.one_m_eta * kin.one_p_eta;
            let ev = &ref_evals[q];
            for i in 0..nb {
                let [ga, gb] = ev.grads[i];
                let ns = inv[0][0] * ga + inv[1][0] * gb;
                let nt = inv[0][1] * ga + inv[1][1] * gb;
                let n = ev.values[i];
                for (k, gf) in [g1, g2].iter().enumerate() {
                    let f = gf.value * n;
                    let fs = gf.value * (ns + n * gf.dlog_ds);
                    let ft = gf.value * (nt + n * gf.dlog_dt);
                    let fx = fs / kin.dxi_ds;
                    let fe = ft / kin.deta_dt;
                    // a (ξ²−η²) ∂_ρ f and a (ξ²−η²) ∂_z f
                    let d_rho = kin.u * (kin.xi * fx - kin.eta * fe);
                    let d_z = kin.eta * xi2m1 * fx + kin.xi * om_eta2 * fe;
                    let over_rho = metric * f / kin.u;
                    let tilde = if k == 0 {
                        [d_z, d_rho - m1 * over_rho]
                    } else {
                        [d_rho + m2 * over_rho, -d_z]
                    };
                    let col = (2 * i + k) * rows_t;
                    bmat[col + 2 * q] = tilde[0];
                    bmat[col + 2 * q + 1] = tilde[1];
                    phi[k][i * nq + q] = f;
                }
            }
        }

        let dofs: Vec<Option<usize>> = el
            .nodes
            .iter()
            .flat_map(|&n| {
                let f = free_index[n];
                [f.map(|x| 2 * x), f.map(|x| 2 * x + 1)]
            })
            .collect();
        // Σ_q l_iq r_jq over the upper triangle of free pairs, added to
        // `target` in double-double.
        let gram = |target: &mut SymMatrix,
                        left: &[f64],
                        right: &[f64],
                        rows: usize,
                        dof_of: &dyn Fn(usize) -> Option<usize>| {
            let n = left.len() / rows;
            let values = target.values_mut();
            for lj in 0..n {
                let Some(gj) = dof_of(lj) else { continue };
                let rj = &right[lj * rows..(lj + 1) * rows];
                for li in 0..n {
                    let Some(gi) = dof_of(li) else { continue };
                    if gi > gj {
                        continue;
                    }
                    let v = dd::dot(&left[li * rows..(li + 1) * rows], rj);
                    let pos = pattern.position(gi, gj).expect("element pair in pattern");
                    values[pos] = dd::add(values[pos], v);
                }
            }
        };

        for (k, ak) in a.iter_mut().enumerate() {
            for (q, d) in data.iter().enumerate() {
                root_w[q] = (d.w_t * d.inv_g.powi(k as i32 + 1)).sqrt();
            }
            for col in 0..nd {
                let src = &bmat[col * rows_t..(col + 1) * rows_t];
                let dst = &mut bw[col * rows_t..(col + 1) * rows_t];
                for q in 0..nq {
                    dst[2 * q] = root_w[q] * src[2 * q];
                    dst[2 * q + 1] = root_w[q] * src[2 * q + 1];
                }
            }
            if k < PRECISE_TERMS {
                gram(ak, &bw, &bw, rows_t, &|l| dofs[l]);
            } else {
                let bref = MatRef::from_column_major_slice(&bw, rows_t, nd);
                matmul(local.as_mut(), Accum::Replace, bref.transpose(), bref, 1.0, Par::Seq);
                let values = ak.values_mut();
                for lj in 0..nd {
                    let Some(gj) = dofs[lj] else { continue };
                    for li in 0..nd {
                        let Some(gi) = dofs[li] else { continue };
                        if gi > gj {
                            continue;
                        }
                        let pos = pattern.position(gi, gj).expect("element pair in pattern");
                        values[pos] = dd::add(values[pos], dd::from(local[(li, lj)]));
                    }
                }
            }
        }
        for k in 0..2 {
            for (target, pick) in [(&mut s, 0usize), (&mut w, 1)] {
                for (q, d) in data.iter().enumerate() {
                    let wt = if pick == 0 { d.w_s } else { d.w_v };
                    let r = wt.abs().sqrt();
                    for i in 0..nb {
                        let v = r * phi[k][i * nq + q];
                        phi_r[i * nq + q] = v;
                        phi_l[i * nq + q] = if wt < 0.0 { -v } else { v };
                    }
                }
                gram(target, &phi_l, &phi_r, nq, &|l| dofs[2 * l + k]);
            }
        }
    }

    if s.cholesky()?.is_none() {
        return Err(Error::AssemblyIntegrity(
            "overlap matrix is not positive definite".into(),
        ));
    }
    Ok(AssembledSystem {
        dim: 2 * n_free,
        a,
        s,
        w,
        eps0: if relativistic { eps0 } else { 0.0 },
        mode: system.mode,
        max_inv_g,
        free_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::reference_shapes;
    use crate::mesh::build_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn gauss_legendre_matches_known_rule() {
        let (x, w) = gauss_legendre(2);
        let r = 0.5 / 3f64.sqrt();
        assert!((x[0] - (0.5 - r)).abs() < 1e-16 && (x[1] - (0.5 + r)).abs() < 1e-16);
        assert!((w[0] - 0.5).abs() < 1e-15);
        let (x, w) = gauss_legendre(3);
        assert!((x[1] - 0.5).abs() < 1e-16);
        assert!((w[1] - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn weights_positive_points_interior() {
        for n in [2, 7, 25, 40] {
            let rule = triangle_quadrature(n).unwrap();
            assert_eq!(rule.points.len(), n * n);
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            assert!(rule
                .points
                .iter()
                .all(|p| p[0] > 0.0 && p[1] > 0.0 && p[0] + p[1] < 1.0));
            let area: f64 = rule.weights.iter().sum();
            assert!((area - 0.5).abs() < 1e-15);
        }
        assert!(triangle_quadrature(1).is_err());
        assert!(triangle_quadrature(41).is_err());
    }

    #[test]
    fn monomial_exactness() {
        let rule = triangle_quadrature(4).unwrap();
        let got = rule.integrate(|s, t| s.powi(3) * t.powi(2));
        assert!((got * 420.0 - 1.0).abs() < 1e-13);
        let got = rule.integrate(|s, t| s.powi(4) * t.powi(2));
        assert!((got * 840.0 - 1.0).abs() < 1e-13);
        for n in [5, 12, 25] {
            let rule = triangle_quadrature(n).unwrap();
            let deg = 2 * n as u32 - 2;
            for a in 0..=deg {
                for b in 0..=deg - a {
                    let got = rule.integrate(|s, t| s.powi(a as i32) * t.powi(b as i32));
                    let exact = monomial_exact(a, b);
                    assert!(((got - exact) / exact).abs() < 1e-13, "n={n} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn random_order_twenty_polynomial() {
        let rule = triangle_quadrature(25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mut coeffs = Vec::new();
        for a in 0..=20u32 {
            for b in 0..=20 - a {
                coeffs.push((a, b, rng.gen_range(0.0..1.0)));
            }
        }
        let exact: f64 = coeffs.iter().map(|&(a, b, c)| c * monomial_exact(a, b)).sum();
        let got = rule.integrate(|s, t| {
            coeffs
                .iter()
                .map(|&(a, b, c)| c * s.powi(a as i32) * t.powi(b as i32))
                .sum()
        });
        assert!(((got - exact) / exact).abs() < 1e-13);
    }

    fn hydrogen_like(z: f64, mode: Mode) -> (PhysicalSystem, TransformSpec) {
        let sys = PhysicalSystem::new(z, 0.0, 2.0, mode).unwrap();
        let spec = TransformSpec::new(8, 40.0, sys.r).unwrap();
        (sys, spec)
    }

    fn small_system(mode: Mode) -> AssembledSystem {
        let (sys, spec) = hydrogen_like(1.0, mode);
        let mesh = build_mesh(2, 4, spec.s_max).unwrap();
        let shapes = reference_shapes(4).unwrap();
        assemble_system(&mesh, &shapes, &sys, &spec, -0.5, 3, 10).unwrap()
    }

    #[test]
    fn dimension_counts_free_nodes() {
        let (sys, spec) = hydrogen_like(1.0, Mode::Nonrelativistic);
        let mesh = build_mesh(2, 4, spec.s_max).unwrap();
        let shapes = reference_shapes(4).unwrap();
        let asm = assemble_system(&mesh, &shapes, &sys, &spec, -0.5, 3, 8).unwrap();
        assert_eq!(asm.dim, 2 * (mesh.n_nodes() - mesh.n_boundary()));
        assert_eq!(asm.a.len(), 1);
    }

    #[test]
    fn matrices_are_symmetric_on_random_pairs() {
        let asm = small_system(Mode::Relativistic);
        let dense_sym = |m: &SymMatrix, i: usize, j: usize| {
            let mut ei = vec![0.0; m.dim()];
            let mut ej = vec![0.0; m.dim()];
            ei[i] = 1.0;
            ej[j] = 1.0;
            (m.bilinear(&ei, &ej), m.bilinear(&ej, &ei))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scale = asm.a[0].max_abs();
        for _ in 0..100 {
            let i = rng.gen_range(0..asm.dim);
            let j = rng.gen_range(0..asm.dim);
            let (x, y) = dense_sym(&asm.a[0], i, j);
            assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn expansion_terms_shrink() {
        let asm = small_system(Mode::Relativistic);
        assert_eq!(asm.k_max(), 3);
        assert!(asm.max_inv_g < 1.0);
        for k in 1..asm.a.len() {
            for i in 0..asm.dim {
                let (hi, lo) = (asm.a[k - 1].get(i, i), asm.a[k].get(i, i));
                assert!(lo > 0.0);
                assert!(lo <= hi * asm.max_inv_g * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn assembly_is_bit_deterministic() {
        let a = small_system(Mode::Relativistic);
        let b = small_system(Mode::Relativistic);
        for k in 0..a.a.len() {
            assert_eq!(a.a[k].values(), b.a[k].values());
        }
        assert_eq!(a.s.values(), b.s.values());
        assert_eq!(a.w.values(), b.w.values());
    }

    #[test]
    fn window_is_enforced() {
        let (sys, spec) = hydrogen_like(1.0, Mode::Relativistic);
        let mesh = build_mesh(1, 2, spec.s_max).unwrap();
        let shapes = reference_shapes(2).unwrap();
        for eps0 in [0.1, -2.0 * sys.c() * sys.c() - 1.0] {
            assert!(matches!(
                assemble_system(&mesh, &shapes, &sys, &spec, eps0, 3, 5),
                Err(Error::InvalidParameter { .. })
            ));
        }
        assert!(assemble_system(&mesh, &shapes, &sys, &spec, -0.5, 13, 5).is_err());
    }

    #[test]
    fn operator_derivative_matches_difference() {
        let asm = small_system(Mode::Relativistic);
        let x: Vec<f64> = (0..asm.dim).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let e = -0.6;
        let h = 1e-3;
        let fd = (asm.operator_at(e + h).bilinear(&x, &x) - asm.operator_at(e - h).bilinear(&x, &x))
            / (2.0 * h);
        let an = asm.operator_derivative_at(e).bilinear(&x, &x);
        assert!((fd - an).abs() <= 1e-6 * an.abs());
    }
}
