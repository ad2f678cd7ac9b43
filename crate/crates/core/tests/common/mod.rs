#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trussqa_core::{DofMap, OptConfig, QaspProblem, QuadraticForm, SamplerConfig, TrussModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Whole-structure stiffness built node by node from coordinates, with the
/// fixed rows and columns dropped afterwards.
pub fn reference_stiffness(model: &TrussModel, alpha: &[f64]) -> DMatrix<f64> {
    let d = model.dimension();
    let n = model.n_nodes() * d;
    let mut k = DMatrix::zeros(n, n);
    for (b, bar) in model.bars().iter().enumerate() {
        let pi = model.node(bar.node_i);
        let pj = model.node(bar.node_j);
        let diff: Vec<f64> = (0..d).map(|a| pj[a] - pi[a]).collect();
        let len = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ea_l = bar.youngs_modulus * bar.area0 * alpha[b] / len;
        for a in 0..d {
            for c in 0..d {
                let v = ea_l * diff[a] * diff[c] / (len * len);
                let (ia, ja) = (bar.node_i * d + a, bar.node_j * d + a);
                let (ic, jc) = (bar.node_i * d + c, bar.node_j * d + c);
                k[(ia, ic)] += v;
                k[(ja, jc)] += v;
                k[(ia, jc)] -= v;
                k[(ja, ic)] -= v;
            }
        }
    }
    let free = DofMap::new(model).free_dofs().to_vec();
    DMatrix::from_fn(free.len(), free.len(), |r, c| k[(free[r], free[c])])
}

pub fn reference_loads(model: &TrussModel) -> DVector<f64> {
    let free = DofMap::new(model).free_dofs().to_vec();
    DVector::from_iterator(free.len(), free.iter().map(|&g| model.loads()[g]))
}

pub fn reference_compliance(model: &TrussModel, alpha: &[f64]) -> f64 {
    let k = reference_stiffness(model, alpha);
    let f = reference_loads(model);
    let u = k.lu().solve(&f).expect("reference stiffness is regular");
    f.dot(&u)
}

pub fn bar_volumes(model: &TrussModel) -> Vec<f64> {
    let d = model.dimension();
    model
        .bars()
        .iter()
        .map(|b| {
            let (pi, pj) = (model.node(b.node_i), model.node(b.node_j));
            let len = (0..d).map(|a| (pj[a] - pi[a]).powi(2)).sum::<f64>().sqrt();
            len * b.area0
        })
        .collect()
}

/// Optimality-criteria resizing with a move limit and bisection on the
/// volume multiplier.
pub fn oc_optimum(model: &TrussModel, alpha0: &[f64], lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let vol = bar_volumes(model);
    let target: f64 = alpha0.iter().zip(&vol).map(|(a, v)| a * v).sum();
    let f = reference_loads(model);
    let d = model.dimension();
    let mut alpha = alpha0.to_vec();
    for _ in 0..5000 {
        let k = reference_stiffness(model, &alpha);
        let u = k.lu().solve(&f).unwrap();
        let free = DofMap::new(model).free_dofs().to_vec();
        let mut full = vec![0.0; model.n_nodes() * d];
        for (r, &g) in free.iter().enumerate() {
            full[g] = u[r];
        }
        // strain energy density per unit design variable
        let dens: Vec<f64> = model
            .bars()
            .iter()
            .enumerate()
            .map(|(b, bar)| {
                let (pi, pj) = (model.node(bar.node_i), model.node(bar.node_j));
                let diff: Vec<f64> = (0..d).map(|a| pj[a] - pi[a]).collect();
                let len = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                let elong: f64 = (0..d)
                    .map(|a| diff[a] / len * (full[bar.node_j * d + a] - full[bar.node_i * d + a]))
                    .sum();
                bar.youngs_modulus * bar.area0 / len * elong * elong / vol[b]
            })
            .collect();
        let step = |lambda: f64| -> Vec<f64> {
            alpha
                .iter()
                .zip(&dens)
                .map(|(&a, &e)| {
                    let m = 0.05;
                    (a * (e / lambda).sqrt()).clamp((a - m).max(lo), (a + m).min(hi))
                })
                .collect()
        };
        let (mut l1, mut l2) = (1e-20f64, 1e20f64);
        while l2 / l1 > 1.0 + 1e-12 {
            let mid = (l1 * l2).sqrt();
            let v: f64 = step(mid).iter().zip(&vol).map(|(a, v)| a * v).sum();
            if v > target {
                l1 = mid;
            } else {
                l2 = mid;
            }
        }
        let next = step((l1 * l2).sqrt());
        let change = next
            .iter()
            .zip(&alpha)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        alpha = next;
        if change < 1e-10 {
            break;
        }
    }
    let c = reference_compliance(model, &alpha);
    (alpha, c)
}

/// Reduced-cost annealing settings for the larger benchmark runs.
pub fn quick_sa_config() -> OptConfig {
    OptConfig {
        sampler: SamplerConfig {
            num_reads: 10,
            sa_sweeps: 100,
            ..SamplerConfig::default()
        },
        ..OptConfig::default()
    }
}

pub fn exhaustive_config() -> OptConfig {
    OptConfig {
        sampler: SamplerConfig {
            num_reads: 4,
            ..SamplerConfig::default()
        },
        ..OptConfig::default()
    }
}

/// Random symmetric positive definite matrix with eigenvalues in
/// `[lo, lo + spread]`.
pub fn random_spd(rng: &mut impl Rng, n: usize, lo: f64, spread: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = m.qr().q();
    let eig = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| {
        lo + spread * rng.random::<f64>()
    }));
    let a = &q * eig * q.transpose();
    (&a + a.transpose()) * 0.5
}

/// `f* + (x − x*)ᵀA(x − x*)` on a box.
pub struct CenteredQuadratic {
    pub a: DMatrix<f64>,
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl CenteredQuadratic {
    /// The same function written as `c + gᵀx + xᵀAx`.
    pub fn expanded(&self) -> QuadraticForm {
        let ax = &self.a * &self.x_star;
        QuadraticForm::new(
            self.f_star + self.x_star.dot(&ax),
            ax * -2.0,
            self.a.clone(),
        )
        .unwrap()
    }
}

impl QaspProblem for CenteredQuadratic {
    fn n_vars(&self) -> usize {
        self.x_star.len()
    }

    fn evaluate(&self, x: &DVector<f64>) -> f64 {
        let e = x - &self.x_star;
        self.f_star + e.dot(&(&self.a * &e))
    }

    fn model_at(&self, x: &DVector<f64>) -> QuadraticForm {
        let e = x - &self.x_star;
        QuadraticForm {
            constant: self.evaluate(x),
            gradient: (&self.a * e) * 2.0,
            a: self.a.clone(),
        }
    }

    fn lower(&self) -> DVector<f64> {
        self.lower.clone()
    }

    fn upper(&self) -> DVector<f64> {
        self.upper.clone()
    }
}

/// Double-double number `hi + lo` for the finite-difference oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    pub fn from(v: f64) -> Self {
        Dd(v, 0.0)
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let hi = two_sum(s.0, s.1 + t.0);
        two_sum(hi.0, hi.1 + t.1)
    }

    pub fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p);
        two_sum(p, e + (self.0 * o.1 + self.1 * o.0))
    }

    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul(Dd::from(q1)));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul(Dd::from(q2)));
        let q3 = r.0 / o.0;
        two_sum(q1, q2).add(Dd::from(q3))
    }

    pub fn sqrt(self) -> Dd {
        let x = Dd::from(self.0.sqrt());
        // one Newton step doubles the precision
        x.add(self.sub(x.mul(x)).div(x.add(x)))
    }
}

/// `FᵀK(α)⁻¹F` assembled and solved in double-double arithmetic.
pub fn precise_compliance(model: &TrussModel, alpha: &[f64]) -> f64 {
    let d = model.dimension();
    let free = DofMap::new(model).free_dofs().to_vec();
    let n = free.len();
    let index: std::collections::HashMap<usize, usize> =
        free.iter().enumerate().map(|(r, &g)| (g, r)).collect();
    let zero = Dd::from(0.0);
    let mut k = vec![vec![zero; n]; n];
    for (b, bar) in model.bars().iter().enumerate() {
        let (pi, pj) = (model.node(bar.node_i), model.node(bar.node_j));
        let diff: Vec<Dd> = (0..d)
            .map(|a| Dd::from(pj[a]).sub(Dd::from(pi[a])))
            .collect();
        let len2 = diff.iter().fold(zero, |s, v| s.add(v.mul(*v)));
        let len = len2.sqrt();
        let stiff = Dd::from(bar.youngs_modulus)
            .mul(Dd::from(bar.area0))
            .mul(Dd::from(alpha[b]))
            .div(len);
        let dofs: Vec<(usize, f64)> = (0..d)
            .map(|a| (bar.node_i * d + a, -1.0))
            .chain((0..d).map(|a| (bar.node_j * d + a, 1.0)))
            .collect();
        for &(gi, si) in &dofs {
            for &(gj, sj) in &dofs {
                let (Some(&r), Some(&c)) = (index.get(&gi), index.get(&gj)) else {
                    continue;
                };
                let v = stiff
                    .mul(diff[gi % d])
                    .mul(diff[gj % d])
                    .div(len2)
                    .mul(Dd::from(si * sj));
                k[r][c] = k[r][c].add(v);
            }
        }
    }
    let f: Vec<Dd> = free.iter().map(|&g| Dd::from(model.loads()[g])).collect();
    // Gaussian elimination without pivoting; K is symmetric positive definite
    let mut rhs = f.clone();
    for p in 0..n {
        for r in p + 1..n {
            let m = k[r][p].div(k[p][p]);
            for c in p..n {
                k[r][c] = k[r][c].sub(m.mul(k[p][c]));
            }
            rhs[r] = rhs[r].sub(m.mul(rhs[p]));
        }
    }
    let mut u = vec![zero; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for c in r + 1..n {
            s = s.sub(k[r][c].mul(u[c]));
        }
        u[r] = s.div(k[r][r]);
    }
    let c = f.iter().zip(&u).fold(zero, |s, (a, b)| s.add(a.mul(*b)));
    c.0 + c.1
}

/// Central difference of [`precise_compliance`] in `α_i` with step `h`.
pub fn compliance_fd(model: &TrussModel, alpha: &[f64], i: usize, h: f64) -> f64 {
    let mut a = alpha.to_vec();
    a[i] = alpha[i] + h;
    let up = precise_compliance(model, &a);
    a[i] = alpha[i] - h;
    let dn = precise_compliance(model, &a);
    (up - dn) / (2.0 * h)
}
