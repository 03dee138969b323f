//! Small complex-vector helpers. Vectors are plain `Vec<Complex64>`; the
//! dimensions here are the antenna counts (single digits), so nothing
//! heavier is warranted.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type CVec = Vec<Complex64>;

/// `a† b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    norm_sqr(a).sqrt()
}

pub fn scale(a: &[Complex64], k: f64) -> CVec {
    a.iter().map(|x| x * k).collect()
}

/// Returns `a / ‖a‖`, or `None` for a (numerically) zero vector.
pub fn normalized(a: &[Complex64]) -> Option<CVec> {
    let n = norm(a);
    if n <= f64::MIN_POSITIVE.sqrt() {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

/// `1 - |a† b|²` for unit vectors, clamped to [0, 1].
pub fn chordal_sq(a: &[Complex64], b: &[Complex64]) -> f64 {
    (1.0 - inner(a, b).norm_sqr()).clamp(0.0, 1.0)
}

/// Vector of i.i.d. CN(0, 1) entries.
pub fn gaussian<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Isotropic unit vector.
pub fn random_unit<R: Rng + ?Sized>(len: usize, rng: &mut R) -> CVec {
    loop {
        if let Some(v) = normalized(&gaussian(len, rng)) {
            return v;
        }
    }
}

/// Removes from `v` its components along the orthonormal `basis`.
pub fn project_out(v: &[Complex64], basis: &[CVec]) -> CVec {
    let mut out = v.to_vec();
    for b in basis {
        let c = inner(b, &out);
        for (o, bi) in out.iter_mut().zip(b) {
            *o -= c * bi;
        }
    }
    out
}

/// Orthonormal basis of `span(vectors)` by modified Gram–Schmidt; vectors
/// whose residual norm falls below `tol` are dropped (rank deficiency).
pub fn orthonormal_basis(vectors: &[CVec], tol: f64) -> Vec<CVec> {
    let mut basis: Vec<CVec> = Vec::with_capacity(vectors.len());
    for v in vectors {
        // two passes keep the residual orthogonal to working precision
        let r = project_out(&project_out(v, &basis), &basis);
        if norm(&r) > tol {
            basis.push(normalized(&r).expect("residual norm above tolerance"));
        }
    }
    basis
}

/// Uniformly distributed unit vector in the orthogonal complement of the unit vector `s`.
pub fn random_orthogonal_unit<R: Rng + ?Sized>(s: &[Complex64], rng: &mut R) -> CVec {
    let basis = [s.to_vec()];
    loop {
        let g = gaussian(s.len(), rng);
        if let Some(q) = normalized(&project_out(&g, &basis)) {
            return q;
        }
    }
}

/// Unit vector at squared chordal distance `dist` from the unit vector `s`,
/// with the residual direction drawn uniformly from `s⊥`.
pub fn at_chordal_distance<R: Rng + ?Sized>(s: &[Complex64], dist: f64, rng: &mut R) -> CVec {
    let q = random_orthogonal_unit(s, rng);
    let a = (1.0 - dist).max(0.0).sqrt();
    let b = dist.max(0.0).sqrt();
    s.iter().zip(&q).map(|(x, y)| x * a + y * b).collect()
}
