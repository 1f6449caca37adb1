//! Convex expressions `½ zᵀQz + qᵀz + c + Σ λᵢ |aᵢᵀz − bᵢ|`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::set::{SetRep, Zonotope};
use crate::error::{Error, Result};
use crate::linalg::{dot, mat_vec, norm};

/// Smallest eigenvalue accepted for a positive semidefinite `Q`.
pub const EIG_FLOOR: f64 = -1e-10;
/// Relative distance to a kink below which an atom is treated as kinked.
pub const KINK_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsAtom {
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl AbsAtom {
    pub fn residual(&self, z: &[f64]) -> f64 {
        dot(&self.a, z) - self.b
    }
}

/// What a coordinate of a stage cost stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    State,
    Control,
    Param,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexExpr {
    pub dim: usize,
    pub quad: DMatrix<f64>,
    pub lin: Vec<f64>,
    pub constant: f64,
    pub atoms: Vec<AbsAtom>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCertificate {
    pub min_eigenvalue: f64,
    pub symmetric: bool,
    pub weights_nonnegative: bool,
}

impl ConvexityCertificate {
    pub fn holds(&self) -> bool {
        self.symmetric && self.weights_nonnegative && self.min_eigenvalue >= EIG_FLOOR
    }
}

pub fn kink_tol(z: &[f64]) -> f64 {
    KINK_RTOL * (1.0 + norm(z))
}

impl ConvexExpr {
    /// Builds the expression, refusing anything not certifiably convex.
    pub fn new(
        quad: DMatrix<f64>,
        lin: Vec<f64>,
        constant: f64,
        atoms: Vec<AbsAtom>,
    ) -> Result<Self> {
        let e = Self::unchecked(quad, lin, constant, atoms)?;
        let cert = e.convexity_certificate();
        if !cert.holds() {
            return Err(Error::NotConvex(format!(
                "symmetric: {}, min eigenvalue {:.3e}, nonnegative weights: {}",
                cert.symmetric, cert.min_eigenvalue, cert.weights_nonnegative
            )));
        }
        Ok(e)
    }

    /// Checks shapes only.
    pub fn unchecked(
        quad: DMatrix<f64>,
        lin: Vec<f64>,
        constant: f64,
        atoms: Vec<AbsAtom>,
    ) -> Result<Self> {
        let dim = lin.len();
        if quad.nrows() != dim || quad.ncols() != dim {
            return Err(Error::Dimension(format!(
                "Q is {}x{} but q has length {dim}",
                quad.nrows(),
                quad.ncols()
            )));
        }
        if let Some(at) = atoms.iter().find(|at| at.a.len() != dim) {
            return Err(Error::Dimension(format!(
                "atom of length {} in an expression of dimension {dim}",
                at.a.len()
            )));
        }
        Ok(ConvexExpr {
            dim,
            quad,
            lin,
            constant,
            atoms,
            blocks: vec![],
        })
    }

    pub fn zero(dim: usize) -> Self {
        ConvexExpr {
            dim,
            quad: DMatrix::zeros(dim, dim),
            lin: vec![0.0; dim],
            constant: 0.0,
            atoms: vec![],
            blocks: vec![],
        }
    }

    pub fn with_blocks(mut self, blocks: Vec<Block>) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn convexity_certificate(&self) -> ConvexityCertificate {
        let q = &self.quad;
        let asym = (q - q.transpose()).abs().max();
        let scale = q.abs().max().max(1.0);
        let symmetric = asym <= 1e-12 * scale;
        let min_eigenvalue = if self.dim == 0 {
            0.0
        } else {
            let sym = (q + q.transpose()) * 0.5;
            SymmetricEigen::new(sym).eigenvalues.min()
        };
        ConvexityCertificate {
            min_eigenvalue,
            symmetric,
            weights_nonnegative: self.atoms.iter().all(|a| a.weight >= 0.0 && a.weight.is_finite()),
        }
    }

    fn check_dim(&self, z: &[f64]) {
        assert_eq!(z.len(), self.dim, "point dimension does not match expression");
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.check_dim(z);
        let qz = mat_vec(&self.quad, z);
        0.5 * dot(z, &qz)
            + dot(&self.lin, z)
            + self.constant
            + self
                .atoms
                .iter()
                .map(|at| at.weight * at.residual(z).abs())
                .sum::<f64>()
    }

    /// Indices of atoms sitting at their kink.
    pub fn kinks(&self, z: &[f64]) -> Vec<usize> {
        let tol = kink_tol(z);
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, at)| {
                at.weight > 0.0 && at.a.iter().any(|v| *v != 0.0) && at.residual(z).abs() <= tol
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Gradient, or `None` when some atom is at its kink.
    pub fn grad(&self, z: &[f64]) -> Option<Vec<f64>> {
        let zon = self.subgradients(z);
        zon.is_singleton().then_some(zon.center)
    }

    /// The exact subdifferential as a zonotope: kinked atoms contribute the
    /// segment `λ[−a, a]`, the rest their signed gradient.
    pub fn subgradients(&self, z: &[f64]) -> Zonotope {
        self.check_dim(z);
        let tol = kink_tol(z);
        let mut center = mat_vec(&self.quad, z);
        for (c, l) in center.iter_mut().zip(&self.lin) {
            *c += l;
        }
        let mut generators = vec![];
        for at in &self.atoms {
            if at.weight == 0.0 || at.a.iter().all(|v| *v == 0.0) {
                continue;
            }
            let r = at.residual(z);
            if r.abs() <= tol {
                generators.push(at.a.iter().map(|v| at.weight * v).collect());
            } else {
                let s = at.weight * r.signum();
                for (c, a) in center.iter_mut().zip(&at.a) {
                    *c += s * a;
                }
            }
        }
        Zonotope { center, generators }
    }

    pub fn subdiff(&self, z: &[f64]) -> Result<SetRep> {
        self.subgradients(z).to_setrep()
    }

    /// Finite everywhere, so the singular subdifferential is `{0}`.
    pub fn singular_subdiff(&self, z: &[f64]) -> SetRep {
        self.check_dim(z);
        SetRep::zero(self.dim)
    }

    /// The same function viewed inside a space of dimension `total`,
    /// with its own coordinates at `offset..offset + dim`.
    pub fn embed(&self, total: usize, offset: usize) -> ConvexExpr {
        let idx: Vec<usize> = (offset..offset + self.dim).collect();
        self.scatter(total, &idx)
    }

    /// Lifts into dimension `total`, sending local coordinate `i` to `idx[i]`.
    pub fn scatter(&self, total: usize, idx: &[usize]) -> ConvexExpr {
        assert_eq!(idx.len(), self.dim);
        let mut quad = DMatrix::zeros(total, total);
        for i in 0..self.dim {
            for j in 0..self.dim {
                quad[(idx[i], idx[j])] += self.quad[(i, j)];
            }
        }
        let widen = |v: &[f64]| {
            let mut out = vec![0.0; total];
            for (i, &x) in v.iter().enumerate() {
                out[idx[i]] += x;
            }
            out
        };
        ConvexExpr {
            dim: total,
            quad,
            lin: widen(&self.lin),
            constant: self.constant,
            atoms: self
                .atoms
                .iter()
                .map(|at| AbsAtom {
                    a: widen(&at.a),
                    b: at.b,
                    weight: at.weight,
                })
                .collect(),
            blocks: vec![],
        }
    }

    /// Fixes the trailing coordinates `dim - head..` to `tail` and returns
    /// the function of the leading `head` coordinates.
    pub fn fix_tail(&self, tail: &[f64]) -> ConvexExpr {
        let head = self.dim - tail.len();
        let qzz = self.quad.view((0, 0), (head, head)).into_owned();
        let qzw = self.quad.view((0, head), (head, tail.len())).into_owned();
        let qww = self.quad.view((head, head), (tail.len(), tail.len())).into_owned();
        let w = nalgebra::DVector::from_column_slice(tail);
        let cross = &qzw * &w;
        let lin: Vec<f64> = (0..head).map(|i| self.lin[i] + cross[i]).collect();
        let mut constant =
            self.constant + dot(&self.lin[head..], tail) + 0.5 * w.dot(&(&qww * &w));
        let mut atoms = vec![];
        for at in &self.atoms {
            let a: Vec<f64> = at.a[..head].to_vec();
            let b = at.b - dot(&at.a[head..], tail);
            if a.iter().all(|v| *v == 0.0) {
                constant += at.weight * b.abs();
            } else {
                atoms.push(AbsAtom {
                    a,
                    b,
                    weight: at.weight,
                });
            }
        }
        ConvexExpr {
            dim: head,
            quad: qzz,
            lin,
            constant,
            atoms,
            blocks: vec![],
        }
    }

    /// Pointwise sum of two expressions on the same space.
    pub fn plus(mut self, other: &ConvexExpr) -> ConvexExpr {
        assert_eq!(self.dim, other.dim);
        self.quad += &other.quad;
        for (a, b) in self.lin.iter_mut().zip(&other.lin) {
            *a += b;
        }
        self.constant += other.constant;
        self.atoms.extend(other.atoms.iter().cloned());
        self
    }

    /// Whether every atom and the quadratic coupling respect the coordinate
    /// partition `parts` (so the subdifferential is a product).
    pub fn separable(&self, parts: &[std::ops::Range<usize>]) -> bool {
        let part_of = |i: usize| parts.iter().position(|r| r.contains(&i));
        let atoms_ok = self.atoms.iter().all(|at| {
            let owners: Vec<_> = at
                .a
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| part_of(i))
                .collect();
            owners.windows(2).all(|w| w[0] == w[1])
        });
        let quad_ok = (0..self.dim).all(|i| {
            (0..self.dim).all(|j| self.quad[(i, j)] == 0.0 || part_of(i) == part_of(j))
        });
        atoms_ok && quad_ok
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs1() -> ConvexExpr {
        ConvexExpr::new(
            DMatrix::zeros(1, 1),
            vec![0.0],
            0.0,
            vec![AbsAtom {
                a: vec![1.0],
                b: 0.0,
                weight: 1.0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn abs_kink() {
        let e = abs1();
        assert_eq!(e.grad(&[0.0]), None);
        assert_eq!(e.subdiff(&[0.0]).unwrap(), SetRep::interval(-1.0, 1.0));
        assert_eq!(e.grad(&[-3.0]), Some(vec![-1.0]));
        assert_eq!(e.eval(&[-3.0]), 3.0);
    }

    #[test]
    fn indefinite_is_rejected() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, -2.0]);
        let err = ConvexExpr::new(q, vec![0.0, 0.0], 0.0, vec![]).unwrap_err();
        assert!(matches!(err, Error::NotConvex(_)));
        let e = ConvexExpr::new(
            DMatrix::zeros(1, 1),
            vec![0.0],
            0.0,
            vec![AbsAtom {
                a: vec![1.0],
                b: 0.0,
                weight: -1.0,
            }],
        );
        assert!(e.is_err());
    }

    #[test]
    fn quadratic_subdiff_is_gradient() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let e = ConvexExpr::new(q, vec![0.0, 1.0], 0.0, vec![]).unwrap();
        assert_eq!(e.subdiff(&[1.0, 0.0]).unwrap(), SetRep::singleton(vec![2.0, 2.0]));
        assert_eq!(e.singular_subdiff(&[1.0, 0.0]), SetRep::zero(2));
    }

    #[test]
    fn fixing_a_tail_preserves_values() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let e = ConvexExpr::new(
            q,
            vec![0.5, -1.0],
            0.25,
            vec![AbsAtom {
                a: vec![1.0, 2.0],
                b: 1.0,
                weight: 0.5,
            }, AbsAtom {
                a: vec![0.0, 1.0],
                b: 0.0,
                weight: 2.0,
            }],
        )
        .unwrap();
        let f = e.fix_tail(&[0.7]);
        for x in [-1.0, 0.0, 0.3, 2.0] {
            assert!((f.eval(&[x]) - e.eval(&[x, 0.7])).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_and_separable() {
        let e = abs1().embed(3, 1);
        assert_eq!(e.eval(&[5.0, -2.0, 7.0]), 2.0);
        assert!(e.separable(&[0..1, 1..2, 2..3]));
        let coupled = ConvexExpr::new(
            DMatrix::zeros(2, 2),
            vec![0.0, 0.0],
            0.0,
            vec![AbsAtom {
                a: vec![1.0, 1.0],
                b: 0.0,
                weight: 1.0,
            }],
        )
        .unwrap();
        assert!(!coupled.separable(&[0..1, 1..2]));
        assert!(coupled.separable(&[0..2]));
    }
}
