//! Minimal five-point essential-matrix solver.
//!
//! Five epipolar constraints leave a 4-dimensional null space, so
//! `E = x X + y Y + z Z + W`. Imposing `det(E) = 0` and
//! `2 E E^T E - tr(E E^T) E = 0` gives ten cubics in `(x, y, z)`. After
//! Gauss-Jordan elimination of the ten cubic monomials, multiplication by `x`
//! acts linearly on the remaining basis `{x^2, xy, xz, y^2, yz, z^2, x, y, z, 1}`;
//! the real eigenvectors of that 10x10 action matrix are the solutions.

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};

type Mat10 = SMatrix<f64, 10, 10>;

const MONOMIALS: usize = 20;

// Exponents (x, y, z) in graded reverse lexicographic order: ten cubics,
// then the quotient basis.
const ORDER: [(u8, u8, u8); MONOMIALS] = [
    (3, 0, 0),
    (2, 1, 0),
    (2, 0, 1),
    (1, 2, 0),
    (1, 1, 1),
    (1, 0, 2),
    (0, 3, 0),
    (0, 2, 1),
    (0, 1, 2),
    (0, 0, 3),
    (2, 0, 0),
    (1, 1, 0),
    (1, 0, 1),
    (0, 2, 0),
    (0, 1, 1),
    (0, 0, 2),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (0, 0, 0),
];

fn slot(e: (u8, u8, u8)) -> usize {
    ORDER
        .iter()
        .position(|o| *o == e)
        .expect("monomial of degree <= 3")
}

/// Polynomial of total degree at most 3 in `(x, y, z)`.
#[derive(Clone, Copy)]
struct Poly([f64; MONOMIALS]);

impl Poly {
    fn zero() -> Self {
        Poly([0.0; MONOMIALS])
    }

    fn linear(x: f64, y: f64, z: f64, w: f64) -> Self {
        let mut p = Self::zero();
        p.0[slot((1, 0, 0))] = x;
        p.0[slot((0, 1, 0))] = y;
        p.0[slot((0, 0, 1))] = z;
        p.0[slot((0, 0, 0))] = w;
        p
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Self::zero();
        for (a, ea) in self.0.iter().zip(ORDER) {
            if *a == 0.0 {
                continue;
            }
            for (b, eb) in other.0.iter().zip(ORDER) {
                if *b == 0.0 {
                    continue;
                }
                let e = (ea.0 + eb.0, ea.1 + eb.1, ea.2 + eb.2);
                debug_assert!(e.0 + e.1 + e.2 <= 3, "product exceeds degree 3");
                out.0[slot(e)] += a * b;
            }
        }
        out
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = *self;
        out.0.iter_mut().zip(other.0).for_each(|(a, b)| *a += b);
        out
    }

    fn scale(&self, s: f64) -> Poly {
        let mut out = *self;
        out.0.iter_mut().for_each(|a| *a *= s);
        out
    }
}

/// Right null space (4 basis vectors, as 3x3 matrices) of the five epipolar
/// constraints, or `None` when the constraints are rank-deficient.
fn null_space(x1: &[Vector3<f64>; 5], x2: &[Vector3<f64>; 5]) -> Option<[Matrix3<f64>; 4]> {
    // Padded to 9x9 so the SVD returns the full right basis.
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for k in 0..5 {
        for r in 0..3 {
            for c in 0..3 {
                a[(k, r * 3 + c)] = x2[k][r] * x1[k][c];
            }
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let sv = svd.singular_values;
    // Singular values come back in descending order.
    if sv[4] <= 1e-10 * sv[0] {
        return None;
    }
    let basis = |row: usize| Matrix3::from_fn(|r, c| v_t[(row, r * 3 + c)]);
    Some([basis(5), basis(6), basis(7), basis(8)])
}

/// All real essential matrices consistent with five normalised
/// correspondences `x2^T E x1 = 0` (homogeneous, `z = 1`).
#[allow(clippy::needless_range_loop)]
pub fn solve(x1: &[Vector3<f64>; 5], x2: &[Vector3<f64>; 5]) -> Vec<Matrix3<f64>> {
    let Some([bx, by, bz, bw]) = null_space(x1, x2) else {
        return Vec::new();
    };
    let e = |r: usize, c: usize| Poly::linear(bx[(r, c)], by[(r, c)], bz[(r, c)], bw[(r, c)]);
    let em: [[Poly; 3]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| e(r, c)));

    let mut eqs: Vec<Poly> = Vec::with_capacity(10);
    let minor = |a: usize, b: usize, c: usize, d: usize| {
        em[1][a]
            .mul(&em[2][b])
            .add(&em[1][c].mul(&em[2][d]).scale(-1.0))
    };
    let det = em[0][0]
        .mul(&minor(1, 2, 2, 1))
        .add(&em[0][1].mul(&minor(0, 2, 2, 0)).scale(-1.0))
        .add(&em[0][2].mul(&minor(0, 1, 1, 0)));
    eqs.push(det);

    // EE^T (quadratic entries), then 2 EE^T E - tr(EE^T) E.
    let eet: [[Poly; 3]; 3] = std::array::from_fn(|r| {
        std::array::from_fn(|c| {
            (0..3).fold(Poly::zero(), |acc, k| acc.add(&em[r][k].mul(&em[c][k])))
        })
    });
    let trace = eet[0][0].add(&eet[1][1]).add(&eet[2][2]);
    for r in 0..3 {
        for c in 0..3 {
            let prod = (0..3).fold(Poly::zero(), |acc, k| acc.add(&eet[r][k].mul(&em[k][c])));
            eqs.push(prod.scale(2.0).add(&trace.mul(&em[r][c]).scale(-1.0)));
        }
    }

    let mut m = DMatrix::<f64>::zeros(10, MONOMIALS);
    for (i, p) in eqs.iter().enumerate() {
        for k in 0..MONOMIALS {
            m[(i, k)] = p.0[k];
        }
    }
    let Some(reduced) = eliminate_cubics(m) else {
        return Vec::new();
    };

    // Rows of the action matrix: x * basis_j expressed in the basis.
    let mut action = Mat10::zeros();
    for (row, cubic) in [0usize, 1, 2, 3, 4, 5].into_iter().enumerate() {
        for k in 0..10 {
            action[(row, k)] = -reduced[(cubic, 10 + k)];
        }
    }
    action[(6, 0)] = 1.0; // x * x  = x^2
    action[(7, 1)] = 1.0; // x * y  = xy
    action[(8, 2)] = 1.0; // x * z  = xz
    action[(9, 6)] = 1.0; // x * 1  = x

    let scale = action.abs().max().max(1.0);
    let mut out = Vec::new();
    for lambda in action.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-8 * scale {
            continue;
        }
        let shifted = action - Mat10::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let Some(v_t) = svd.v_t else { continue };
        let v = v_t.row(9);
        if v[9].abs() < 1e-12 {
            continue;
        }
        let (x, y, z) = (v[6] / v[9], v[7] / v[9], v[8] / v[9]);
        let e = bx * x + by * y + bz * z + bw;
        let norm = e.norm();
        if norm > 0.0 && norm.is_finite() {
            out.push(e / norm);
        }
    }
    out
}

// Gauss-Jordan elimination with partial pivoting on the first ten columns.
fn eliminate_cubics(mut m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    for col in 0..10 {
        let pivot = (col..10).max_by(|a, b| m[(*a, col)].abs().total_cmp(&m[(*b, col)].abs()))?;
        if m[(pivot, col)].abs() < 1e-14 {
            return None;
        }
        m.swap_rows(col, pivot);
        let p = m[(col, col)];
        for k in 0..MONOMIALS {
            m[(col, k)] /= p;
        }
        for r in 0..10 {
            if r != col {
                let f = m[(r, col)];
                if f != 0.0 {
                    for k in 0..MONOMIALS {
                        m[(r, k)] -= f * m[(col, k)];
                    }
                }
            }
        }
    }
    Some(m)
}
