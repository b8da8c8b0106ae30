use std::fmt;

use crate::error::{Result, SpaceError};

/// Additive bias used for masked attention logits.
pub const MASKED_LOGIT: f64 = -1e9;

/// Floor applied to a target probability before taking its logarithm.
pub const PROB_EPSILON: f64 = 1e-12;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SpaceError::shape(
                "from_vec",
                format!("{} values for {rows}x{cols}", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(SpaceError::shape(
                    "from_rows",
                    format!("row {i} has {} columns, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(SpaceError::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * other.cols..(p + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_bt(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(SpaceError::shape(
                "matmul_bt",
                format!("{:?} x {:?}ᵀ", self.shape(), other.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                out.data[i * other.rows + j] = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other`.
    pub fn matmul_at(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(SpaceError::shape(
                "matmul_at",
                format!("{:?}ᵀ x {:?}", self.shape(), other.shape()),
            ));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for p in 0..self.rows {
            let a_row = self.row(p);
            let b_row = other.row(p);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same("add", other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same("add_assign", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds a `1 × cols` row vector to every row.
    pub fn add_row(&self, bias: &Matrix) -> Result<Matrix> {
        if bias.rows != 1 || bias.cols != self.cols {
            return Err(SpaceError::shape(
                "add_row",
                format!("{:?} + row {:?}", self.shape(), bias.shape()),
            ));
        }
        let mut out = self.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Matrix> {
        if start + len > self.cols {
            return Err(SpaceError::shape(
                "slice_cols",
                format!("cols {start}..{} of {}", start + len, self.cols),
            ));
        }
        let mut out = Matrix::zeros(self.rows, len);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + len]);
        }
        Ok(out)
    }

    pub fn concat_cols(parts: &[&Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if parts.iter().any(|m| m.rows != rows) {
            return Err(SpaceError::shape("concat_cols", "row counts differ"));
        }
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for m in parts {
                out.row_mut(r)[offset..offset + m.cols].copy_from_slice(m.row(r));
                offset += m.cols;
            }
        }
        Ok(out)
    }

    /// Stacks `self` on top of `other`.
    pub fn concat_rows(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows > 0 && other.rows > 0 && self.cols != other.cols {
            return Err(SpaceError::shape(
                "concat_rows",
                format!("{:?} over {:?}", self.shape(), other.shape()),
            ));
        }
        let cols = if self.rows > 0 { self.cols } else { other.cols };
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols,
            data,
        })
    }

    pub fn gather_rows(&self, ids: &[usize]) -> Result<Matrix> {
        let mut out = Matrix::zeros(ids.len(), self.cols);
        for (r, &id) in ids.iter().enumerate() {
            if id >= self.rows {
                return Err(SpaceError::Index {
                    index: id,
                    len: self.rows,
                });
            }
            out.row_mut(r).copy_from_slice(self.row(id));
        }
        Ok(out)
    }

    /// Row-wise softmax, stabilized by subtracting the row maximum.
    pub fn softmax_rows(&self) -> Matrix {
        let mut out = self.clone();
        for r in 0..out.rows {
            softmax_in_place(out.row_mut(r));
        }
        out
    }

    /// Row-wise softmax of `self + additive`.
    pub fn masked_softmax_rows(&self, additive: &Matrix) -> Result<Matrix> {
        self.check_same("masked_softmax_rows", additive)?;
        let mut out = self.add(additive)?;
        for r in 0..out.rows {
            softmax_in_place(out.row_mut(r));
        }
        Ok(out)
    }

    fn check_same(&self, op: &'static str, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(SpaceError::shape(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// `−ln p[target]`, with `p[target]` floored at [`PROB_EPSILON`].
pub fn cross_entropy(probs_row: &[f64], target: usize) -> Result<f64> {
    let p = *probs_row.get(target).ok_or(SpaceError::Index {
        index: target,
        len: probs_row.len(),
    })?;
    Ok(-p.max(PROB_EPSILON).ln())
}

/// Output of [`layer_norm_rows`] together with the intermediates its backward pass needs.
pub struct LayerNormOut {
    pub output: Matrix,
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

pub fn layer_norm_rows(x: &Matrix, gamma: &Matrix, beta: &Matrix) -> Result<LayerNormOut> {
    let d = x.cols();
    if gamma.shape() != (1, d) || beta.shape() != (1, d) {
        return Err(SpaceError::shape(
            "layer_norm",
            format!("x {:?}, gamma {:?}, beta {:?}", x.shape(), gamma.shape(), beta.shape()),
        ));
    }
    let mut output = Matrix::zeros(x.rows(), d);
    let mut normalized = Matrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std.push(istd);
        let n_row = normalized.row_mut(r);
        for (n, v) in n_row.iter_mut().zip(row) {
            *n = (v - mean) * istd;
        }
        let n_row = normalized.row(r).to_vec();
        for (c, o) in output.row_mut(r).iter_mut().enumerate() {
            *o = n_row[c] * gamma.data[c] + beta.data[c];
        }
    }
    Ok(LayerNormOut {
        output,
        normalized,
        inv_std,
    })
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh-approximated GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let d_inner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner
}

/// Boolean matrix, used for attention masks (`true` = may attend).
#[derive(Clone, PartialEq, Eq)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl fmt::Debug for BoolMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.render_grid())
    }
}

impl BoolMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        BoolMatrix {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = BoolMatrix::new(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.data[r * cols + c] = f(r, c);
            }
        }
        m
    }

    /// Standard causal mask over `n` positions.
    pub fn causal(n: usize) -> Self {
        BoolMatrix::from_fn(n, n, |r, c| c <= r)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[bool] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sum(&self, r: usize) -> usize {
        self.row(r).iter().filter(|&&b| b).count()
    }

    /// Keeps rows `start..` (all columns).
    pub fn tail_rows(&self, start: usize) -> BoolMatrix {
        BoolMatrix {
            rows: self.rows - start,
            cols: self.cols,
            data: self.data[start * self.cols..].to_vec(),
        }
    }

    /// `0` where attention is allowed, [`MASKED_LOGIT`] elsewhere.
    pub fn to_additive(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&b| if b { 0.0 } else { MASKED_LOGIT })
                .collect(),
        }
    }

    /// Text grid, one line per row, `#` for allowed and `.` for blocked.
    pub fn render_grid(&self) -> String {
        let mut s = String::with_capacity(self.rows * (self.cols + 1));
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push(if self.get(r, c) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_cases() {
        let b = Matrix::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&b).unwrap(), b);
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let c = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(a.matmul(&c).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(4, 5, &mut rng);
        let b = random(5, 3, &mut rng);
        let c = a.matmul(&b).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut s = 0.0;
                for p in 0..5 {
                    s += a.get(i, p) * b.get(p, j);
                }
                assert!((c.get(i, j) - s).abs() < 1e-12);
            }
        }
        let bt = a.matmul_bt(&b.transpose()).unwrap();
        let at = a.transpose().matmul_at(&b).unwrap();
        for (x, y) in c.data().iter().zip(bt.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in c.data().iter().zip(at.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let a = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(SpaceError::Shape { .. })));
    }

    #[test]
    fn softmax_cases() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap().softmax_rows();
        for &v in m.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = Matrix::from_rows(&[vec![1000.0, 1000.0, 999.0]])
            .unwrap()
            .softmax_rows();
        // 1 / (2 + e^-1) and e^-1 / (2 + e^-1)
        let e = (-1.0f64).exp();
        assert!((big.get(0, 0) - 1.0 / (2.0 + e)).abs() < 1e-12);
        assert!((big.get(0, 2) - e / (2.0 + e)).abs() < 1e-12);
        assert!((big.get(0, 0) - 0.4223).abs() < 1e-4);
        assert!((big.get(0, 2) - 0.1554).abs() < 1e-4);
        let single = Matrix::from_rows(&[vec![-42.0]]).unwrap().softmax_rows();
        assert_eq!(single.data(), &[1.0]);
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let uniform = vec![0.125; 8];
        assert!((cross_entropy(&uniform, 5).unwrap() - 8f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() - 1e12f64.ln()).abs() < 1e-9);
        assert!(cross_entropy(&[1.0], 3).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let probs = Matrix::from_rows(std::slice::from_ref(&logits)).unwrap().softmax_rows();
        let lse = logits.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert!((cross_entropy(probs.row(0), 4).unwrap() - (lse - logits[4])).abs() < 1e-12);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn grid_render() {
        assert_eq!(BoolMatrix::causal(2).render_grid(), "#.\n##\n");
    }

    proptest::proptest! {
        #[test]
        fn softmax_rows_sum_to_one(row in proptest::collection::vec(-1e4f64..1e4, 1..20)) {
            let m = Matrix::from_rows(&[row]).unwrap().softmax_rows();
            proptest::prop_assert!((m.sum() - 1.0).abs() < 1e-9);
            proptest::prop_assert!(m.data().iter().all(|&v| v >= 0.0 && v.is_finite()));
        }

        #[test]
        fn cross_entropy_nonnegative(row in proptest::collection::vec(-30f64..30.0, 2..10), t in 0usize..2) {
            let m = Matrix::from_rows(&[row]).unwrap().softmax_rows();
            let ce = cross_entropy(m.row(0), t).unwrap();
            proptest::prop_assert!(ce >= 0.0);
            proptest::prop_assert_eq!(ce == 0.0, m.get(0, t) == 1.0);
        }
    }
}
