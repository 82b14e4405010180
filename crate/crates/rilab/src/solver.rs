//! Sparse solvers for lattice Dirichlet problems, optionally reduced by the
//! symmetries of the problem.
//!
//! All problems have the conductance form
//!
//! ```text
//!   sum_{|e|=1} c(x, x+e) (u(x) - u(x+e)) = rhs(x)
//! ```
//!
//! on a sup-norm box `[-R, R]^d`, with interior Dirichlet sites (value fixed),
//! and prescribed values just outside the box. For the simple walk
//! `c = 1/(2d)` this is `-Δ_dis u = rhs`.
//!
//! Three domain reductions are supported: none, the full signed-permutation
//! group (valid when conductances, fixed sets, boundary data and right-hand
//! side are all invariant under coordinate permutations and sign flips), and
//! the stabilizer of the first coordinate axis (invariance under permutations
//! and sign flips of the remaining coordinates only). Callers are responsible
//! for only requesting a reduction their data actually has.

use rayon::prelude::*;

use crate::{Error, Result};

/// Symmetry group used to quotient the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quotient {
    /// No reduction; all sites of the box are nodes.
    None,
    /// Full octahedral reduction: nodes are sorted absolute coordinates.
    Full,
    /// Axis-stabilizer reduction: first coordinate free, the rest sorted
    /// by absolute value.
    Axial,
}

/// A quotiented box domain `[-R, R]^d`.
#[derive(Clone, Debug)]
pub struct BoxDomain {
    pub dim: usize,
    pub radius: i32,
    pub quotient: Quotient,
    len: usize,
    /// binomial table for canonical indexing
    binom: Vec<Vec<u64>>,
}

impl BoxDomain {
    pub fn new(dim: usize, radius: i32, quotient: Quotient) -> Result<BoxDomain> {
        if dim < 1 || radius < 1 {
            return Err(Error::InvalidParameter(format!(
                "box domain needs dim >= 1 and radius >= 1, got d={dim}, R={radius}"
            )));
        }
        let max_n = (radius as usize) + dim + 2;
        let mut binom = vec![vec![0u64; dim + 2]; max_n + 1];
        for n in 0..=max_n {
            binom[n][0] = 1;
            for k in 1..dim + 2 {
                binom[n][k] = if k > n {
                    0
                } else {
                    binom[n - 1][k - 1] + binom[n - 1][k]
                };
            }
        }

        let r = radius as u64;
        let len = match quotient {
            Quotient::None => (2 * r + 1).pow(dim as u32) as usize,
            Quotient::Full => binom[radius as usize + dim][dim] as usize,
            Quotient::Axial => ((2 * r + 1) * binom[radius as usize + dim - 1][dim - 1]) as usize,
        };
        Ok(BoxDomain {
            dim,
            radius,
            quotient,
            len,
            binom,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    fn c(&self, n: i64, k: usize) -> u64 {
        if n < 0 {
            0
        } else {
            self.binom[n as usize][k]
        }
    }

    /// Index of a weakly-decreasing nonnegative tuple in the combinatorial
    /// number system: `sum_k C(a_k + d - k, d - k + 1)` for 1-based `k`.
    #[inline]
    fn sorted_index(&self, sorted_desc: &[i32]) -> u64 {
        let d = sorted_desc.len();
        let mut idx = 0u64;
        for (k, &a) in sorted_desc.iter().enumerate() {
            let m = d - k; // d - k + 1 with 1-based k is d - (k+1) + 1
            idx += self.c(a as i64 + m as i64 - 1, m);
        }
        idx
    }

    /// Canonical node index of an arbitrary lattice point, or `None` when the
    /// point lies outside the box.
    #[inline]
    pub fn index_of(&self, p: &[i32]) -> Option<usize> {
        let r = self.radius;
        if p.iter().any(|&c| c.abs() > r) {
            return None;
        }
        match self.quotient {
            Quotient::None => {
                let mut idx = 0usize;
                let side = (2 * r + 1) as usize;
                for &c in p {
                    idx = idx * side + (c + r) as usize;
                }
                Some(idx)
            }
            Quotient::Full => {
                let mut a: smallvec::SmallVec<[i32; 8]> = p.iter().map(|&c| c.abs()).collect();
                a.sort_unstable_by(|x, y| y.cmp(x));
                Some(self.sorted_index(&a) as usize)
            }
            Quotient::Axial => {
                let mut a: smallvec::SmallVec<[i32; 8]> =
                    p[1..].iter().map(|&c| c.abs()).collect();
                a.sort_unstable_by(|x, y| y.cmp(x));
                let block = self.c(r as i64 + self.dim as i64 - 1, self.dim - 1);
                Some(((p[0] + r) as u64 * block + self.sorted_index(&a)) as usize)
            }
        }
    }

    /// Representative lattice point of a canonical node.
    pub fn point_of(&self, idx: usize, out: &mut [i32]) {
        let r = self.radius;
        match self.quotient {
            Quotient::None => {
                let side = (2 * r + 1) as usize;
                let mut rest = idx;
                for k in (0..self.dim).rev() {
                    out[k] = (rest % side) as i32 - r;
                    rest /= side;
                }
            }
            Quotient::Full => {
                self.unrank_sorted(idx as u64, self.dim, r, out);
            }
            Quotient::Axial => {
                let block = self.c(r as i64 + self.dim as i64 - 1, self.dim - 1);
                let x0 = (idx as u64 / block) as i32 - r;
                out[0] = x0;
                let rest = idx as u64 % block;
                let dim = self.dim;
                let mut tail = vec![0i32; dim - 1];
                self.unrank_sorted(rest, dim - 1, r, &mut tail);
                out[1..dim].copy_from_slice(&tail);
            }
        }
    }

    /// Inverse of `sorted_index`: the weakly-decreasing tuple of a rank.
    fn unrank_sorted(&self, mut rank: u64, d: usize, radius: i32, out: &mut [i32]) {
        let mut hi = radius;
        for k in 0..d {
            let m = d - k;
            // largest a with C(a + m - 1, m) <= rank, a <= hi
            let mut a = hi;
            while a > 0 && self.c(a as i64 + m as i64 - 1, m) > rank {
                a -= 1;
            }
            rank -= self.c(a as i64 + m as i64 - 1, m);
            out[k] = a;
            hi = a;
        }
    }

    /// Orbit size of the canonical node.
    pub fn orbit_weight(&self, p: &[i32]) -> f64 {
        match self.quotient {
            Quotient::None => 1.0,
            Quotient::Full => Self::signed_perm_count(p),
            Quotient::Axial => Self::signed_perm_count(&p[1..]),
        }
    }

    fn signed_perm_count(sorted: &[i32]) -> f64 {
        let mut perms = 1.0f64;
        let mut total = 0usize;
        let mut run = 0usize;
        let mut prev = i32::MIN;
        let mut nonzero = 0u32;
        for &a in sorted {
            let a = a.abs();
            total += 1;
            if a == prev {
                run += 1;
            } else {
                run = 1;
                prev = a;
            }
            perms *= total as f64 / run as f64; // running multinomial
            if a != 0 {
                nonzero += 1;
            }
        }
        perms * (2.0f64).powi(nonzero as i32)
    }
}

/// Classification of a lattice point for assembly.
pub enum NodeKind {
    Free,
    /// Interior Dirichlet value.
    Fixed(f64),
}

/// A conductance Dirichlet problem on a quotiented box.
///
/// `kind` classifies interior points; `bc` gives values immediately outside
/// the box; `conductance` is the edge weight (use `1/(2d)` for the simple
/// walk); `rhs` is the source term. All callbacks must be invariant under the
/// quotient group for the reduction to be valid.
pub struct Problem<'a> {
    pub domain: &'a BoxDomain,
    pub kind: &'a (dyn Fn(&[i32]) -> NodeKind + Sync),
    pub bc: &'a (dyn Fn(&[i32]) -> f64 + Sync),
    pub conductance: &'a (dyn Fn(&[i32], &[i32]) -> f64 + Sync),
    pub rhs: &'a (dyn Fn(&[i32]) -> f64 + Sync),
}

/// Solution field over a quotiented box, looked up through canonicalization.
pub struct Field {
    pub domain: BoxDomain,
    pub values: Vec<f64>,
    /// Relative residual actually achieved by the solver.
    pub achieved: f64,
}

impl Field {
    #[inline]
    pub fn get(&self, p: &[i32]) -> Option<f64> {
        self.domain.index_of(p).map(|i| self.values[i])
    }
}

struct Csr {
    row_ptr: Vec<u32>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    diag: Vec<f64>,
    b: Vec<f64>,
    weight: Vec<f64>,
}

fn assemble(p: &Problem<'_>) -> Csr {
    let dom = p.domain;
    let n = dom.len();
    let dim = dom.dim;

    // first pass: count row entries in parallel
    let rows: Vec<(Vec<u32>, Vec<f64>, f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut pt = vec![0i32; dim];
            dom.point_of(i, &mut pt);
            let w = dom.orbit_weight(&pt);
            match (p.kind)(&pt) {
                NodeKind::Fixed(v) => (Vec::new(), Vec::new(), 1.0, v, w),
                NodeKind::Free => {
                    let mut cols = Vec::with_capacity(2 * dim);
                    let mut vals = Vec::with_capacity(2 * dim);
                    let mut diag = 0.0f64;
                    let mut b = (p.rhs)(&pt);
                    let mut nb = pt.clone();
                    for axis in 0..dim {
                        for dir in [1i32, -1] {
                            nb[axis] = pt[axis] + dir;
                            let c = (p.conductance)(&pt, &nb);
                            diag += c;
                            match dom.index_of(&nb) {
                                None => {
                                    b += c * (p.bc)(&nb);
                                }
                                Some(j) => {
                                    let mut pj = vec![0i32; dim];
                                    dom.point_of(j, &mut pj);
                                    match (p.kind)(&pj) {
                                        NodeKind::Fixed(v) => b += c * v,
                                        NodeKind::Free => {
                                            cols.push(j as u32);
                                            vals.push(c);
                                        }
                                    }
                                }
                            }
                            nb[axis] = pt[axis];
                        }
                    }
                    (cols, vals, diag, b, w)
                }
            }
        })
        .collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0u32);
    let mut total = 0u32;
    for r in &rows {
        total += r.0.len() as u32;
        row_ptr.push(total);
    }
    let mut cols = Vec::with_capacity(total as usize);
    let mut vals = Vec::with_capacity(total as usize);
    let mut diag = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    for (c, v, d, bb, w) in rows {
        cols.extend_from_slice(&c);
        vals.extend_from_slice(&v);
        diag.push(d);
        b.push(bb);
        weight.push(w);
    }
    Csr {
        row_ptr,
        cols,
        vals,
        diag,
        b,
        weight,
    }
}

/// `y = diag .* x - L x` where `L` holds the off-diagonal conductances.
fn matvec(m: &Csr, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().enumerate().for_each(|(i, yi)| {
        let lo = m.row_ptr[i] as usize;
        let hi = m.row_ptr[i + 1] as usize;
        let mut acc = m.diag[i] * x[i];
        for k in lo..hi {
            acc -= m.vals[k] * x[m.cols[k] as usize];
        }
        *yi = acc;
    });
}

fn dot_w(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.par_iter()
        .zip(a.par_iter().zip(b.par_iter()))
        .map(|(wi, (ai, bi))| wi * ai * bi)
        .sum()
}

/// Jacobi-preconditioned conjugate gradients in the orbit-weighted inner
/// product. Returns the solution field and the achieved relative residual.
pub fn solve(p: &Problem<'_>, tol: f64, max_iters: usize) -> Result<Field> {
    let m = assemble(p);
    let n = m.b.len();
    let mut x = vec![0.0f64; n];

    // Fixed rows solve trivially; use them as the initial iterate so the
    // residual starts clean there.
    for i in 0..n {
        if m.row_ptr[i] == m.row_ptr[i + 1] && m.diag[i] == 1.0 {
            x[i] = m.b[i];
        }
    }

    let mut r = vec![0.0f64; n];
    matvec(&m, &x, &mut r);
    r.par_iter_mut()
        .zip(m.b.par_iter())
        .for_each(|(ri, bi)| *ri = bi - *ri);

    let b_norm = dot_w(&m.weight, &m.b, &m.b).sqrt().max(1e-300);
    let mut z: Vec<f64> = r.par_iter().zip(m.diag.par_iter()).map(|(ri, di)| ri / di).collect();
    let mut pdir = z.clone();
    let mut rz = dot_w(&m.weight, &r, &z);
    let mut ap = vec![0.0f64; n];
    let mut achieved = dot_w(&m.weight, &r, &r).sqrt() / b_norm;

    for _ in 0..max_iters {
        if achieved <= tol {
            break;
        }
        matvec(&m, &pdir, &mut ap);
        let denom = dot_w(&m.weight, &pdir, &ap);
        if denom <= 0.0 {
            return Err(Error::InvariantViolation(
                "conductance system lost positive definiteness".into(),
            ));
        }
        let alpha = rz / denom;
        x.par_iter_mut()
            .zip(pdir.par_iter())
            .for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut()
            .zip(ap.par_iter())
            .for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(r.par_iter().zip(m.diag.par_iter()))
            .for_each(|(zi, (ri, di))| *zi = ri / di);
        let rz_new = dot_w(&m.weight, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        pdir.par_iter_mut()
            .zip(z.par_iter())
            .for_each(|(pi, zi)| *pi = zi + beta * *pi);
        achieved = dot_w(&m.weight, &r, &r).sqrt() / b_norm;
    }

    if achieved > tol {
        return Err(Error::ToleranceUnachievable {
            requested: tol,
            achieved,
        });
    }

    Ok(Field {
        domain: p.domain.clone(),
        values: x,
        achieved,
    })
}

/// Uniform simple-walk conductance `1/(2d)`.
pub fn srw_conductance(dim: usize) -> impl Fn(&[i32], &[i32]) -> f64 + Sync {
    let c = 1.0 / (2.0 * dim as f64);
    move |_: &[i32], _: &[i32]| c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_reference(radius: i32, dim: usize, source: &[i32]) -> Vec<f64> {
        // -Δ u = δ_source on the box with zero outside values, solved densely.
        let dom = BoxDomain::new(dim, radius, Quotient::None).unwrap();
        let n = dom.len();
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        let mut b = nalgebra::DVector::<f64>::zeros(n);
        let c = 1.0 / (2.0 * dim as f64);
        let mut pt = vec![0i32; dim];
        for i in 0..n {
            dom.point_of(i, &mut pt);
            a[(i, i)] = 1.0;
            if pt == source {
                b[i] = 1.0;
            }
            let mut nb = pt.clone();
            for axis in 0..dim {
                for dir in [1, -1] {
                    nb[axis] = pt[axis] + dir;
                    if let Some(j) = dom.index_of(&nb) {
                        a[(i, j)] -= c;
                    }
                    nb[axis] = pt[axis];
                }
            }
        }
        let sol = a.lu().solve(&b).unwrap();
        sol.iter().copied().collect()
    }

    #[test]
    fn canonical_indexing_round_trips() {
        for quotient in [Quotient::None, Quotient::Full, Quotient::Axial] {
            let dom = BoxDomain::new(3, 5, quotient).unwrap();
            let mut pt = vec![0i32; 3];
            let mut seen = std::collections::HashSet::new();
            for i in 0..dom.len() {
                dom.point_of(i, &mut pt);
                assert_eq!(dom.index_of(&pt), Some(i), "{quotient:?} {pt:?}");
                assert!(seen.insert(pt.clone()));
            }
        }
    }

    #[test]
    fn full_quotient_canonicalizes_orbits() {
        let dom = BoxDomain::new(3, 4, Quotient::Full).unwrap();
        assert_eq!(dom.index_of(&[1, -3, 2]), dom.index_of(&[3, 2, 1]));
        assert_eq!(dom.index_of(&[0, 0, -4]), dom.index_of(&[4, 0, 0]));
        assert_ne!(dom.index_of(&[2, 1, 0]), dom.index_of(&[2, 2, 0]));
    }

    #[test]
    fn orbit_weights_total_box_volume() {
        let dom = BoxDomain::new(3, 3, Quotient::Full).unwrap();
        let mut pt = vec![0i32; 3];
        let mut total = 0.0;
        for i in 0..dom.len() {
            dom.point_of(i, &mut pt);
            total += dom.orbit_weight(&pt);
        }
        assert_eq!(total as i64, 7i64.pow(3));

        let dom = BoxDomain::new(3, 3, Quotient::Axial).unwrap();
        let mut total = 0.0;
        for i in 0..dom.len() {
            dom.point_of(i, &mut pt);
            total += dom.orbit_weight(&pt);
        }
        assert_eq!(total as i64, 7i64.pow(3));
    }

    #[test]
    fn reduced_solves_match_dense_reference() {
        let radius = 4;
        let reference = dense_reference(radius, 3, &[0, 0, 0]);
        let none = BoxDomain::new(3, radius, Quotient::None).unwrap();

        for quotient in [Quotient::None, Quotient::Full, Quotient::Axial] {
            let dom = BoxDomain::new(3, radius, quotient).unwrap();
            let cond = srw_conductance(3);
            let problem = Problem {
                domain: &dom,
                kind: &|_: &[i32]| NodeKind::Free,
                bc: &|_: &[i32]| 0.0,
                conductance: &cond,
                rhs: &|p: &[i32]| {
                    if p.iter().all(|&c| c == 0) {
                        1.0
                    } else {
                        0.0
                    }
                },
            };
            let field = solve(&problem, 1e-12, 10_000).unwrap();
            let mut pt = vec![0i32; 3];
            for i in 0..none.len() {
                none.point_of(i, &mut pt);
                let got = field.get(&pt).unwrap();
                assert!(
                    (got - reference[i]).abs() < 1e-9,
                    "{quotient:?} at {pt:?}: {got} vs {}",
                    reference[i]
                );
            }
        }
    }

    #[test]
    fn fixed_nodes_hold_their_values() {
        let dom = BoxDomain::new(3, 4, Quotient::Full).unwrap();
        let cond = srw_conductance(3);
        // harmonic interpolation between a unit cube held at 1 and a zero ring
        let problem = Problem {
            domain: &dom,
            kind: &|p: &[i32]| {
                if p.iter().all(|&c| c.abs() <= 1) {
                    NodeKind::Fixed(1.0)
                } else {
                    NodeKind::Free
                }
            },
            bc: &|_: &[i32]| 0.0,
            conductance: &cond,
            rhs: &|_: &[i32]| 0.0,
        };
        let field = solve(&problem, 1e-12, 10_000).unwrap();
        assert_eq!(field.get(&[0, 0, 0]).unwrap(), 1.0);
        assert_eq!(field.get(&[1, -1, 0]).unwrap(), 1.0);
        let v = field.get(&[2, 0, 0]).unwrap();
        assert!(v > 0.0 && v < 1.0);
        // maximum principle: interior free values strictly between BCs
        let mut pt = vec![0i32; 3];
        for i in 0..field.domain.len() {
            field.domain.point_of(i, &mut pt);
            let v = field.values[i];
            assert!((0.0..=1.0).contains(&v), "{pt:?} -> {v}");
        }
    }

    #[test]
    fn variable_conductances_respect_symmetry() {
        // radial conductance profile; Full quotient must agree with None
        let radius = 5;
        let cond = |a: &[i32], b: &[i32]| {
            let ra: i64 = a.iter().map(|&c| (c as i64) * (c as i64)).sum();
            let rb: i64 = b.iter().map(|&c| (c as i64) * (c as i64)).sum();
            let f = |r2: i64| 1.0 + 2.0 / (1.0 + r2 as f64);
            f(ra) * f(rb) / 6.0
        };
        let mut fields = Vec::new();
        for quotient in [Quotient::None, Quotient::Full] {
            let dom = BoxDomain::new(3, radius, quotient).unwrap();
            let problem = Problem {
                domain: &dom,
                kind: &|_: &[i32]| NodeKind::Free,
                bc: &|_: &[i32]| 0.0,
                conductance: &cond,
                rhs: &|p: &[i32]| {
                    if p.iter().all(|&c| c == 0) {
                        1.0
                    } else {
                        0.0
                    }
                },
            };
            fields.push(solve(&problem, 1e-12, 20_000).unwrap());
        }
        for probe in [[0, 0, 0], [1, 2, -3], [5, 0, 0], [-2, -2, 1]] {
            let a = fields[0].get(&probe).unwrap();
            let b = fields[1].get(&probe).unwrap();
            assert!((a - b).abs() < 1e-9, "{probe:?}: {a} vs {b}");
        }
    }
}
