//! Generalized symmetric eigensolvers for `A x = λ M x`.
//!
//! `A` is symmetric positive semidefinite and `M` symmetric positive
//! semidefinite with `A + sM` definite for `s > 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, CsrMatrix, EnvelopeCholesky};

/// Problems up to this size go through a dense factorization.
pub const DENSE_LIMIT: usize = 600;

const KRYLOV_BLOCK: usize = 6;
const RESIDUAL_TOL: f64 = 1e-11;

/// Eigenvalues in nondecreasing order with `M`-orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// The `count` smallest eigenpairs of a sparse pencil.
///
/// Vectors spanning the numerical kernel of `M` are deflated.
pub fn smallest(a: &CsrMatrix, m: &CsrMatrix, count: usize, seed: u64) -> Result<EigenPairs> {
    let n = a.nrows();
    if count == 0 {
        return Ok(EigenPairs { values: vec![], vectors: vec![] });
    }
    if count > n {
        return Err(Error::Numerical(format!(
            "eigen: requested {count} eigenpairs of a {n}-dimensional pencil"
        )));
    }
    let shift = pencil_shift(a, m);
    let mut pairs = if n <= DENSE_LIMIT {
        dense_shifted(a, m, count, shift)?
    } else {
        krylov(a, m, count, shift, seed)?
    };
    finish(a, m, &mut pairs);
    Ok(pairs)
}

/// `10⁻⁴` times the median of `a_ii/m_ii` over rows with weight.
fn pencil_shift(a: &CsrMatrix, m: &CsrMatrix) -> f64 {
    let mut ratios: Vec<f64> = a
        .diagonal()
        .iter()
        .zip(m.diagonal())
        .filter(|(&x, y)| *y > 0.0 && x > 0.0)
        .map(|(x, y)| x / y)
        .collect();
    if ratios.is_empty() {
        return 1.0;
    }
    let mid = ratios.len() / 2;
    let (_, median, _) = ratios.select_nth_unstable_by(mid, f64::total_cmp);
    1e-4 * *median
}

fn dense_shifted(a: &CsrMatrix, m: &CsrMatrix, count: usize, shift: f64) -> Result<EigenPairs> {
    let ad = a.to_dense();
    let md = m.to_dense();
    let k = &ad + &md * shift;
    let chol = nalgebra::Cholesky::new(k).ok_or_else(|| {
        Error::Numerical("eigen: shifted pencil is not positive definite".into())
    })?;
    let l = chol.l();
    // C = L⁻¹ M L⁻ᵀ
    let linv_m = l.solve_lower_triangular(&md).expect("triangular solve");
    let c = l
        .solve_lower_triangular(&linv_m.transpose())
        .expect("triangular solve");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let tmax = eig.eigenvalues[order[0]].max(0.0);
    let lt = l.transpose();
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for &idx in &order {
        let theta = eig.eigenvalues[idx];
        if theta <= 1e-12 * tmax {
            break;
        }
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let x = lt.solve_upper_triangular(&y).expect("triangular solve");
        values.push(1.0 / theta - shift);
        vectors.push(x.as_slice().to_vec());
        if values.len() == count {
            break;
        }
    }
    if values.len() < count {
        return Err(Error::Numerical(format!(
            "eigen: only {} eigenpairs outside the weight kernel, {count} requested",
            values.len()
        )));
    }
    Ok(EigenPairs { values, vectors })
}

fn krylov(a: &CsrMatrix, m: &CsrMatrix, count: usize, shift: f64, seed: u64) -> Result<EigenPairs> {
    let n = a.nrows();
    let k = a.add_scaled(m, shift);
    let chol = EnvelopeCholesky::factor(&k)?;
    let op = |x: &[f64]| chol.solve(&m.mul_vec(x));
    let anorm = a.max_abs() * 8.0;
    let mnorm = m.max_abs() * 8.0;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = KRYLOV_BLOCK.max(count.min(12));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kbasis: Vec<Vec<f64>> = Vec::new();
    let mut mbasis: Vec<Vec<f64>> = Vec::new();
    let mut next: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let r: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            op(&r)
        })
        .collect();

    loop {
        let mut added = Vec::new();
        for mut v in next.drain(..) {
            let before = dot(&v, &k.mul_vec(&v)).sqrt();
            for _ in 0..2 {
                for (q, kq) in basis.iter().zip(&kbasis) {
                    let c = dot(&v, kq);
                    axpy(&mut v, -c, q);
                }
            }
            let kv = k.mul_vec(&v);
            let nv = dot(&v, &kv).sqrt();
            if !(nv > 1e-10 * before) || basis.len() >= n {
                continue;
            }
            let s = 1.0 / nv;
            v.iter_mut().for_each(|x| *x *= s);
            let kv: Vec<f64> = kv.iter().map(|x| x * s).collect();
            mbasis.push(m.mul_vec(&v));
            basis.push(v);
            kbasis.push(kv);
            added.push(basis.len() - 1);
        }
        let dim = basis.len();
        let mut h = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = dot(&basis[i], &mbasis[j]);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let tmax = eig.eigenvalues[order[0]].max(0.0);
        let mut values = Vec::new();
        let mut vectors = Vec::new();
        let mut converged = true;
        for &idx in order.iter() {
            if values.len() == count {
                break;
            }
            let theta = eig.eigenvalues[idx];
            if theta <= 1e-12 * tmax {
                break;
            }
            let mut x = vec![0.0; n];
            for (j, q) in basis.iter().enumerate() {
                axpy(&mut x, eig.eigenvectors[(j, idx)], q);
            }
            let lam = 1.0 / theta - shift;
            let ax = a.mul_vec(&x);
            let mx = m.mul_vec(&x);
            let xn = dot(&x, &x).sqrt();
            let r: f64 = ax
                .iter()
                .zip(&mx)
                .map(|(p, q)| (p - lam * q).powi(2))
                .sum::<f64>()
                .sqrt();
            if r > RESIDUAL_TOL * (anorm + lam.abs() * mnorm) * xn {
                converged = false;
            }
            values.push(lam);
            vectors.push(x);
        }
        let exhausted = added.is_empty() || dim >= n;
        if (converged && values.len() == count) || exhausted {
            if values.len() < count {
                return Err(Error::Numerical(format!(
                    "eigen: only {} eigenpairs outside the weight kernel, {count} requested",
                    values.len()
                )));
            }
            return Ok(EigenPairs { values, vectors });
        }
        next = added.iter().map(|&i| op(&basis[i])).collect();
    }
}

/// Rayleigh quotients, `M`-normalization, sign convention and a final
/// modified Gram–Schmidt pass in the `M` inner product.
fn finish(a: &CsrMatrix, m: &CsrMatrix, pairs: &mut EigenPairs) {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut vals = Vec::with_capacity(pairs.len());
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    let mut mvecs: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    order.sort_by(|&i, &j| pairs.values[i].total_cmp(&pairs.values[j]).then(i.cmp(&j)));
    for &i in &order {
        let mut x = pairs.vectors[i].clone();
        for (q, mq) in vecs.iter().zip(&mvecs) {
            let c = dot(&x, mq);
            axpy(&mut x, -c, q);
        }
        let mx = m.mul_vec(&x);
        let nrm = dot(&x, &mx).sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
        fix_sign(&mut x);
        let mx = m.mul_vec(&x);
        vals.push(a.quad(&x) / dot(&x, &mx));
        vecs.push(x);
        mvecs.push(mx);
    }
    pairs.values = vals;
    pairs.vectors = vecs;
}

/// Makes the entry of largest magnitude positive.
pub fn fix_sign(x: &mut [f64]) {
    let mut best = 0usize;
    for i in 0..x.len() {
        if x[i].abs() > x[best].abs() * (1.0 + 1e-9) {
            best = i;
        }
    }
    if x.get(best).is_some_and(|v| *v < 0.0) {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// All eigenpairs of a dense pencil with `M` positive definite.
///
/// Returns eigenvalues ascending and `M`-orthonormal eigenvectors as columns.
pub fn dense_full(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or_else(|| {
        Error::Numerical("eigen: weight matrix is not positive definite".into())
    })?;
    let l = chol.l();
    let linv_a = l.solve_lower_triangular(a).expect("triangular solve");
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .expect("triangular solve");
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let lt = l.transpose();
    let mut vals = Vec::with_capacity(n);
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &idx) in order.iter().enumerate() {
        let y: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let mut x = lt.solve_upper_triangular(&y).expect("triangular solve");
        fix_sign(x.as_mut_slice());
        let mx = m * &x;
        let nrm = x.dot(&mx).sqrt();
        x /= nrm;
        vals.push(x.dot(&(a * &x)));
        vecs.set_column(col, &x);
    }
    Ok((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.push((i, i, 1.0));
            t.push((i + 1, i + 1, 1.0));
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    fn path_values(n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect()
    }

    #[test]
    fn dense_route_matches_closed_form() {
        let n = 40;
        let a = path_laplacian(n);
        let m = CsrMatrix::from_diagonal(&vec![1.0; n]);
        let p = smallest(&a, &m, 5, 0).unwrap();
        for (got, want) in p.values.iter().zip(path_values(n)) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn krylov_route_matches_closed_form() {
        let n = DENSE_LIMIT + 150;
        let a = path_laplacian(n);
        let m = CsrMatrix::from_diagonal(&vec![1.0; n]);
        let p = smallest(&a, &m, 7, 3).unwrap();
        for (got, want) in p.values.iter().zip(path_values(n)) {
            assert!((got - want).abs() < 1e-9 * want.max(1e-6), "{got} vs {want}");
        }
        for i in 0..7 {
            for j in 0..7 {
                let g = m.bilinear(&p.vectors[i], &p.vectors[j]);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_weight_is_deflated() {
        let n = 6;
        let a = path_laplacian(n).add_scaled(&CsrMatrix::from_diagonal(&vec![1.0; n]), 1.0);
        let mut d = vec![1.0; n];
        d[2] = 0.0;
        d[4] = 0.0;
        let m = CsrMatrix::from_diagonal(&d);
        assert!(smallest(&a, &m, 4, 0).is_ok());
        assert!(smallest(&a, &m, 5, 0).is_err());
    }

    #[test]
    fn dense_full_is_m_orthonormal() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let (vals, vecs) = dense_full(&a, &m).unwrap();
        let g = vecs.transpose() * &m * &vecs;
        assert!((g - DMatrix::identity(2, 2)).abs().max() < 1e-12);
        assert!(vals[0] < vals[1]);
    }
}
