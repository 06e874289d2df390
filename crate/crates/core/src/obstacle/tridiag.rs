/// Tridiagonal matrix stored by diagonals. Row `i` reads
/// `lower[i]·u[i−1] + diag[i]·u[i] + upper[i]·u[i+1]`; `lower[0]` and
/// `upper[n−1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Self {
        assert!(lower.len() == diag.len() && diag.len() == upper.len());
        Self { lower, diag, upper }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    #[inline]
    pub fn row_dot(&self, i: usize, u: &[f64]) -> f64 {
        let n = self.len();
        let mut v = self.diag[i] * u[i];
        if i > 0 {
            v += self.lower[i] * u[i - 1];
        }
        if i + 1 < n {
            v += self.upper[i] * u[i + 1];
        }
        v
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len()).map(|i| self.row_dot(i, u)).collect()
    }

    /// Thomas algorithm; the matrix must be diagonally dominant.
    pub fn solve_into(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        c[0] = self.upper[0] / denom;
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * c[i - 1];
            c[i] = self.upper[i] / denom;
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / denom;
        }
        out[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = d[i] - c[i] * out[i + 1];
        }
    }
}
