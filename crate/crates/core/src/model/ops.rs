//! Dense kernels over row-major slices. Summation order is fixed, so
//! results are bit-stable.

use super::Scalar;

pub(crate) const LN_EPS: f64 = 1e-5;

/// `a[n,k] · b[k,m]`.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let b_row = &b[p * m..(p + 1) * m];
            for (o, &bv) in row.iter_mut().zip(b_row) {
                *o = *o + a_ip * bv;
            }
        }
    }
    out
}

/// `x[n,k] · w[k,m] + bias[m]`.
pub(crate) fn linear<T: Scalar>(x: &[T], w: &[T], bias: &[T], n: usize, k: usize, m: usize) -> Vec<T> {
    let mut out = matmul(x, w, n, k, m);
    for row in out.chunks_mut(m) {
        for (o, &b) in row.iter_mut().zip(bias) {
            *o = *o + b;
        }
    }
    out
}

/// Gradients of [`linear`]: returns `dx` and accumulates into `dw`, `db`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<T: Scalar>(x: &[T], w: &[T], dy: &[T], n: usize, k: usize, m: usize, dw: &mut [T], db: &mut [T]) -> Vec<T> {
    for i in 0..n {
        let dy_row = &dy[i * m..(i + 1) * m];
        for (d, &g) in db.iter_mut().zip(dy_row) {
            *d = *d + g;
        }
        for p in 0..k {
            let x_ip = x[i * k + p];
            let dw_row = &mut dw[p * m..(p + 1) * m];
            for (d, &g) in dw_row.iter_mut().zip(dy_row) {
                *d = *d + x_ip * g;
            }
        }
    }
    let mut dx = vec![T::zero(); n * k];
    for i in 0..n {
        let dy_row = &dy[i * m..(i + 1) * m];
        for p in 0..k {
            let w_row = &w[p * m..(p + 1) * m];
            dx[i * k + p] = dot(dy_row, w_row);
        }
    }
    dx
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) struct LayerNormCache<T> {
    pub xhat: Vec<T>,
    pub rstd: Vec<T>,
}

pub(crate) fn layer_norm<T: Scalar>(x: &[T], gain: &[T], bias: &[T], d: usize) -> (Vec<T>, LayerNormCache<T>) {
    let n = x.len() / d;
    let inv_d = T::one() / T::from_usize(d).unwrap();
    let eps = T::from_f64(LN_EPS).unwrap();
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
        let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd[i] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[i * d + j] = h;
            y[i * d + j] = h * gain[j] + bias[j];
        }
    }
    (y, LayerNormCache { xhat, rstd })
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cache: &LayerNormCache<T>,
    gain: &[T],
    d: usize,
    dgain: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let n = dy.len() / d;
    let inv_d = T::one() / T::from_usize(d).unwrap();
    let mut dx = vec![T::zero(); dy.len()];
    let mut dxhat = vec![T::zero(); d];
    for i in 0..n {
        let xh = &cache.xhat[i * d..(i + 1) * d];
        let g = &dy[i * d..(i + 1) * d];
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            dgain[j] = dgain[j] + g[j] * xh[j];
            dbias[j] = dbias[j] + g[j];
            dxhat[j] = g[j] * gain[j];
            mean_dxhat = mean_dxhat + dxhat[j];
            mean_dxhat_xhat = mean_dxhat_xhat + dxhat[j] * xh[j];
        }
        mean_dxhat = mean_dxhat * inv_d;
        mean_dxhat_xhat = mean_dxhat_xhat * inv_d;
        let r = cache.rstd[i];
        for j in 0..d {
            dx[i * d + j] = r * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    let s = T::from_f64((2.0 / std::f64::consts::PI).sqrt()).unwrap();
    let c = T::from_f64(GELU_C).unwrap();
    let half = T::from_f64(0.5).unwrap();
    let t = (s * (x + c * x * x * x)).tanh();
    let three = T::from_f64(3.0).unwrap();
    let value = half * x * (T::one() + t);
    let deriv = half * (T::one() + t) + half * x * (T::one() - t * t) * s * (T::one() + three * c * x * x);
    (value, deriv)
}

/// Tanh-approximated GELU.
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    gelu_parts(x).0
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    gelu_parts(x).1
}

/// Softmax of one row in place; entries with `keep == false` get probability 0.
/// A row with every entry dropped becomes all zeros.
pub(crate) fn masked_softmax<T: Scalar>(row: &mut [T], keep: &[bool]) {
    let max = row
        .iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .fold(T::neg_infinity(), |m, (&v, _)| m.max(v));
    if max == T::neg_infinity() {
        row.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut sum = T::zero();
    for (v, &k) in row.iter_mut().zip(keep) {
        *v = if k { (*v - max).exp() } else { T::zero() };
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

pub(crate) fn softmax<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        assert_eq!(matmul(&a, &b, 2, 2, 2), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn gelu_derivative_matches_differences() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
        assert!((gelu(1.0f64) - 0.841_192).abs() < 1e-5);
    }

    #[test]
    fn masked_softmax_rows() {
        let mut r = [1.0f64, 2.0, 3.0];
        masked_softmax(&mut r, &[true, false, true]);
        assert_eq!(r[1], 0.0);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut r = [1.0f64, 2.0];
        masked_softmax(&mut r, &[false, false]);
        assert_eq!(r, [0.0, 0.0]);
    }
}
