//! Higher-order smoothing kernels built from Legendre polynomials.
//!
//! The order-`l` kernel is the projection kernel
//! `K(u) = sum_{j<=l} q_j(0) q_j(u)` on `[-1, 1]`, where `q_j` are the
//! Legendre polynomials orthonormal on `[-1, 1]`. It integrates to one and its
//! moments `1..=l` vanish. Odd `q_j` vanish at zero, so `K` is even and the
//! order-`2k+1` kernel equals the order-`2k` one.

/// Univariate polynomial kernel supported on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    order: usize,
    /// Coefficients in powers of `u^2`: `K(u) = sum_k even[k] * u^(2k)`.
    even: Vec<f64>,
}

/// Coefficients (ascending powers) of the Legendre polynomials `P_0..=P_order`.
fn legendre_coefficients(order: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
    if order >= 1 {
        polys.push(vec![0.0, 1.0]);
    }
    for j in 1..order {
        // (j+1) P_{j+1} = (2j+1) u P_j - j P_{j-1}
        let mut next = vec![0.0; j + 2];
        for (k, &c) in polys[j].iter().enumerate() {
            next[k + 1] += (2 * j + 1) as f64 * c;
        }
        for (k, &c) in polys[j - 1].iter().enumerate() {
            next[k] -= j as f64 * c;
        }
        for c in &mut next {
            *c /= (j + 1) as f64;
        }
        polys.push(next);
    }
    polys
}

/// Builds the order-`order` Legendre projection kernel.
pub fn legendre_kernel(order: usize) -> Kernel1D {
    let polys = legendre_coefficients(order);
    let mut coeffs = vec![0.0; order + 1];
    for (j, p) in polys.iter().enumerate() {
        // q_j(0) q_j(u) = (2j+1)/2 * P_j(0) * P_j(u)
        let at_zero = p[0];
        if at_zero == 0.0 {
            continue;
        }
        let scale = (2 * j + 1) as f64 / 2.0 * at_zero;
        for (k, &c) in p.iter().enumerate() {
            coeffs[k] += scale * c;
        }
    }
    let even = coeffs.iter().step_by(2).copied().collect();
    Kernel1D { order, even }
}

impl Kernel1D {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Polynomial coefficients in ascending powers of `u`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.even.len() - 1];
        for (k, &c) in self.even.iter().enumerate() {
            out[2 * k] = c;
        }
        out
    }

    /// Value at zero.
    pub fn at_zero(&self) -> f64 {
        self.even[0]
    }

    /// Kernel value; exactly zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if !(-1.0..=1.0).contains(&u) {
            return 0.0;
        }
        let u2 = u * u;
        self.even.iter().rev().fold(0.0, |acc, &c| acc * u2 + c)
    }

    /// Product kernel `prod_c K(u_c)`.
    pub fn eval_product(&self, u: &[f64]) -> f64 {
        let mut v = 1.0;
        for &uc in u {
            let k = self.eval(uc);
            if k == 0.0 {
                return 0.0;
            }
            v *= k;
        }
        v
    }

    /// Exact `int_{-1}^{1} u^j K(u) du` from the coefficients.
    pub fn moment(&self, j: usize) -> f64 {
        if j % 2 == 1 {
            return 0.0;
        }
        self.even
            .iter()
            .enumerate()
            .map(|(k, &c)| 2.0 * c / (2 * k + j + 1) as f64)
            .sum()
    }
}

/// See [`Kernel1D::eval`].
pub fn eval_kernel(k: &Kernel1D, u: f64) -> f64 {
    k.eval(u)
}

/// See [`Kernel1D::eval_product`].
pub fn eval_product_kernel(k: &Kernel1D, u: &[f64]) -> f64 {
    k.eval_product(u)
}
