//! Dense complex linear algebra helpers on top of `nalgebra`.
//!
//! Multipartite operators are stored as full matrices over the tensor-product
//! space with party 0 as the most significant factor, matching the index
//! conventions in [`crate::scenario`]. The contraction helpers below avoid
//! materializing Kronecker products where a single-party update suffices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn cr(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(d: usize) -> CMat {
    CMat::identity(d, d)
}

/// Largest entry modulus, used for residual reporting.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_residual(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Symmetrize in place; cheap insurance against drift in iterated updates.
pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).map(|z| z * 0.5)
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// |v><v| as a density matrix (v need not be normalized).
pub fn pure_density(v: &CVec) -> CMat {
    let n2 = v.norm_squared();
    outer(v).map(|z| z / n2)
}

/// Kronecker product of a list of factors, left factor most significant.
pub fn kron_all(factors: &[&CMat]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as columns.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let sym = hermitize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..sym.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| sym.eigenvalues[i].total_cmp(&sym.eigenvalues[j]));
    let vals: Vec<f64> = order.iter().map(|&i| sym.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(m.nrows(), m.ncols());
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &sym.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    eigh(m).0[0]
}

/// Rotate a vector's global phase so its largest-modulus entry is real and
/// positive. Fixes the arbitrary phase of computed eigenvectors so repeated
/// runs and serialized output are reproducible.
pub fn fix_phase(v: &CVec) -> CVec {
    let mut best = 0usize;
    let mut best_norm = 0.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best_norm {
            best_norm = z.norm();
            best = i;
        }
    }
    if best_norm == 0.0 {
        return v.clone();
    }
    let phase = v[best] / best_norm;
    v.map(|z| z * phase.conj())
}

pub fn normalize(v: &CVec) -> CVec {
    let n = v.norm();
    v.map(|z| z / n)
}

/// Orthonormal basis of the orthogonal complement of a unit vector,
/// returned as a d x (d-1) isometry.
pub fn orthonormal_complement(v: &CVec) -> CMat {
    let d = v.len();
    let mut m = CMat::zeros(d, d);
    m.set_column(0, v);
    for j in 1..d {
        let mut e = CVec::zeros(d);
        e[(j + argmax_abs(v)) % d] = cr(1.0);
        m.set_column(j, &e);
    }
    let qr = m.qr();
    let q = qr.q();
    // The first Q column spans v up to phase; the rest span its complement.
    let mut out = CMat::zeros(d, d - 1);
    for j in 1..d {
        out.set_column(j - 1, &q.column(j));
    }
    out
}

fn argmax_abs(v: &CVec) -> usize {
    let mut best = 0usize;
    let mut best_norm = -1.0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > best_norm {
            best_norm = z.norm();
            best = i;
        }
    }
    best
}

pub fn dim_product(dims: &[usize]) -> usize {
    dims.iter().product()
}

fn split_dims(dims: &[usize], pos: usize) -> (usize, usize, usize) {
    let pre = dims[..pos].iter().product();
    let post = dims[pos + 1..].iter().product();
    (pre, dims[pos], post)
}

/// Contract one tensor factor of a multipartite matrix against a local
/// operator: `out[(p,t),(q,u)] = sum_{i,j} mat[(p,i,t),(q,j,u)] op[j,i]`.
/// This realizes a partial trace of `mat · (1 ⊗ op ⊗ 1)` over party `pos`.
/// Returns the contracted matrix together with the remaining dimensions.
pub fn contract_party(mat: &CMat, dims: &[usize], pos: usize, op: &CMat) -> (CMat, Vec<usize>) {
    let (pre, d, post) = split_dims(dims, pos);
    debug_assert_eq!(mat.nrows(), pre * d * post);
    debug_assert_eq!(op.nrows(), d);
    let dn = pre * post;
    let mut out = CMat::zeros(dn, dn);
    for p in 0..pre {
        for t in 0..post {
            let rn = p * post + t;
            for q in 0..pre {
                for u in 0..post {
                    let cn = q * post + u;
                    let mut acc = Complex64::ZERO;
                    for i in 0..d {
                        let ro = (p * d + i) * post + t;
                        for j in 0..d {
                            let co = (q * d + j) * post + u;
                            acc += mat[(ro, co)] * op[(j, i)];
                        }
                    }
                    out[(rn, cn)] = acc;
                }
            }
        }
    }
    let mut new_dims = dims.to_vec();
    new_dims.remove(pos);
    (out, new_dims)
}

/// Fully contract a multipartite matrix against one local operator per
/// party: `tr[mat · (op_0 ⊗ … ⊗ op_{N-1})]`.
pub fn expectation(mat: &CMat, dims: &[usize], ops: &[&CMat]) -> Complex64 {
    debug_assert_eq!(dims.len(), ops.len());
    let mut cur = mat.clone();
    let mut cur_dims = dims.to_vec();
    // Contract from the last party so earlier positions stay put.
    for pos in (0..dims.len()).rev() {
        let (next, next_dims) = contract_party(&cur, &cur_dims, pos, ops[pos]);
        cur = next;
        cur_dims = next_dims;
    }
    cur[(0, 0)]
}

/// Contract every party except `keep`, yielding the effective single-party
/// operator `M` with `tr[mat · (… ⊗ op ⊗ … )] = tr[M · op_keep]` for any
/// operator at the kept slot. `ops[keep]` is ignored.
pub fn effective_operator(mat: &CMat, dims: &[usize], keep: usize, ops: &[&CMat]) -> CMat {
    let mut cur = mat.clone();
    let mut cur_dims = dims.to_vec();
    let mut kept = keep;
    for pos in (0..dims.len()).rev() {
        if pos == keep {
            continue;
        }
        let (next, next_dims) = contract_party(&cur, &cur_dims, pos, ops[pos]);
        cur = next;
        cur_dims = next_dims;
        if pos < kept {
            kept -= 1;
        }
    }
    debug_assert_eq!(cur_dims, vec![dims[keep]]);
    cur
}

/// Apply a local (possibly rectangular) map `K` at party `pos`:
/// `mat -> (1 ⊗ K ⊗ 1) mat (1 ⊗ K ⊗ 1)†`. Used for restrictions onto
/// subspaces (K = W†), isometric embeddings, and filter operations.
pub fn apply_local(mat: &CMat, dims: &[usize], pos: usize, k: &CMat) -> (CMat, Vec<usize>) {
    let (pre, d, post) = split_dims(dims, pos);
    debug_assert_eq!(mat.nrows(), pre * d * post);
    debug_assert_eq!(k.ncols(), d);
    let dk = k.nrows();

    // Rows first.
    let mut tmp = CMat::zeros(pre * dk * post, mat.ncols());
    for p in 0..pre {
        for kk in 0..dk {
            for t in 0..post {
                let rn = (p * dk + kk) * post + t;
                for col in 0..mat.ncols() {
                    let mut acc = Complex64::ZERO;
                    for i in 0..d {
                        acc += k[(kk, i)] * mat[((p * d + i) * post + t, col)];
                    }
                    tmp[(rn, col)] = acc;
                }
            }
        }
    }
    // Then columns with the conjugate.
    let mut out = CMat::zeros(pre * dk * post, pre * dk * post);
    for q in 0..pre {
        for kk in 0..dk {
            for u in 0..post {
                let cn = (q * dk + kk) * post + u;
                for row in 0..out.nrows() {
                    let mut acc = Complex64::ZERO;
                    for j in 0..d {
                        acc += tmp[(row, (q * d + j) * post + u)] * k[(kk, j)].conj();
                    }
                    out[(row, cn)] = acc;
                }
            }
        }
    }
    let mut new_dims = dims.to_vec();
    new_dims[pos] = dk;
    (out, new_dims)
}

/// Haar-distributed random unitary via QR of a Ginibre matrix, with the
/// R-diagonal phase correction.
pub fn random_unitary<R: rand::Rng>(d: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(d, d, |_, _| gaussian(rng));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = CMat::zeros(d, d);
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() == 0.0 { cr(1.0) } else { rjj / rjj.norm() };
        let col = q.column(j) * phase;
        out.set_column(j, &col);
    }
    out
}

/// First `k` columns of a Haar random unitary: a random d x k isometry.
pub fn random_isometry<R: rand::Rng>(d: usize, k: usize, rng: &mut R) -> CMat {
    assert!(k <= d);
    let u = random_unitary(d, rng);
    let mut out = CMat::zeros(d, k);
    for j in 0..k {
        out.set_column(j, &u.column(j));
    }
    out
}

pub fn random_pure_state<R: rand::Rng>(d: usize, rng: &mut R) -> CVec {
    let v = CVec::from_fn(d, |_, _| gaussian(rng));
    normalize(&v)
}

fn gaussian<R: rand::Rng>(rng: &mut R) -> Complex64 {
    // Box-Muller; two uniforms per component.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    let r = (-2.0 * u1.ln()).sqrt();
    c(r * (2.0 * std::f64::consts::PI * u2).cos(), r * (2.0 * std::f64::consts::PI * u2).sin())
}

/// Structural shape check with a named subject for error messages.
pub fn require_square(m: &CMat, d: usize, what: &str) -> Result<()> {
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::Structural(format!(
            "{what}: expected a {d}x{d} matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}
